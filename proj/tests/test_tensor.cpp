#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "kelm/checkpoint.hpp"
#include "kelm/grad_check.hpp"
#include "kelm/params.hpp"
#include "kelm/tensor.hpp"

using namespace kelm;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::of(std::move(shape), std::move(v), requires_grad);
}

// independent triple-loop matmul oracle
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 int m, int k, int p) {
  std::vector<double> c(static_cast<size_t>(m) * p, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < k; ++l)
        c[static_cast<size_t>(i) * p + j] +=
            a[static_cast<size_t>(i) * k + l] * b[static_cast<size_t>(l) * p + j];
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x = Tensor::of({3}, {0.0, 0.0, 0.0});
  Tensor p = softmax(x, 0);
  for (int i = 0; i < 3; ++i) CHECK(p.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("masked softmax zeroes excluded positions and renormalizes") {
  Tensor x = Tensor::of({3}, {5.0, 1.0, 100.0});
  std::vector<std::uint8_t> excluded = {0, 0, 1};
  Tensor p = softmax(x, 0, excluded);
  CHECK(p.at(2) == 0.0);
  CHECK(p.at(0) + p.at(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fully masked rows come back all-zero") {
  Tensor x = Tensor::of({2, 2}, {1.0, 2.0, 3.0, 4.0});
  std::vector<std::uint8_t> excluded = {1, 1, 0, 0};
  Tensor p = softmax(x, 1, excluded);
  CHECK(p.at(0, 0) == 0.0);
  CHECK(p.at(0, 1) == 0.0);
  CHECK(p.at(1, 0) + p.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked softmax rows sum to one over unmasked entries") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int rows = 1 + rng.below(5), cols = 2 + rng.below(6);
    Tensor x = random_tensor({rows, cols}, rng);
    std::vector<std::uint8_t> excluded(static_cast<size_t>(rows * cols));
    for (auto& e : excluded) e = rng.below(3) == 0;
    for (int r = 0; r < rows; ++r)  // keep one entry alive per row
      excluded[static_cast<size_t>(r * cols + rng.below(cols))] = 0;
    Tensor p = softmax(x, 1, excluded);
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) {
        if (excluded[static_cast<size_t>(r * cols + c)]) CHECK(p.at(r, c) == 0.0);
        s += p.at(r, c);
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + rng.below(5), k = 1 + rng.below(5), p = 1 + rng.below(5);
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, p}, rng);
    Tensor c = matmul(a, b);
    auto expect = naive_matmul(a.values(), b.values(), m, k, p);
    for (int i = 0; i < m * p; ++i) CHECK(c.values()[static_cast<size_t>(i)] == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(matmul(random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)), Error);
}

TEST_CASE("backward of sum gives ones") {
  Tensor x = Tensor::of({3}, {4.0, -1.0, 2.5}, true);
  backward(sum(x));
  CHECK(x.grad() == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("backward of sum of squares doubles the input") {
  Tensor x = Tensor::of({3}, {1.0, 2.0, 3.0}, true);
  backward(sum(mul(x, x)));
  CHECK(x.grad() == std::vector<double>{2.0, 4.0, 6.0});
}

TEST_CASE("grads accumulate until zeroed") {
  Tensor x = Tensor::of({2}, {3.0, 5.0}, true);
  auto run = [&]() { backward(sum(mul(x, x))); };
  run();
  const auto once = x.grad();
  run();
  for (size_t i = 0; i < once.size(); ++i) CHECK(x.grad()[i] == 2.0 * once[i]);
  x.zero_grad();
  run();
  CHECK(x.grad() == once);
}

TEST_CASE("non-participating parameters keep zero grads") {
  Tensor used = Tensor::of({2}, {1.0, 2.0}, true);
  Tensor unused = Tensor::of({2}, {1.0, 2.0}, true);
  backward(sum(used));
  CHECK(unused.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::of({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(add(x, x)), Error);
}

TEST_CASE("concat backward splits the upstream grad exactly") {
  Rng rng(3);
  Tensor a = random_tensor({2, 3}, rng, true);
  Tensor b = random_tensor({2, 2}, rng, true);
  Tensor cat = concat({a, b}, 1);
  Tensor w = random_tensor({2, 5}, rng);
  backward(sum(mul(cat, w)));
  // reassemble the two grads and compare against the upstream grad w
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) CHECK(a.grad()[static_cast<size_t>(r * 3 + c)] == w.at(r, c));
    for (int c = 0; c < 2; ++c) CHECK(b.grad()[static_cast<size_t>(r * 2 + c)] == w.at(r, 3 + c));
  }
}

TEST_CASE("gather forwards rows and scatters grads") {
  Tensor x = Tensor::of({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor g = gather(x, {2, 0, 2});
  CHECK(g.at(0, 0) == 5.0);
  CHECK(g.at(2, 1) == 6.0);
  backward(sum(g));
  CHECK(x.grad() == std::vector<double>{1, 1, 0, 0, 2, 2});
}

TEST_CASE("grad_check is exact for a quadratic form") {
  Rng rng(5);
  ModelParams params;
  Tensor x = params.add("x", random_tensor({4}, rng, true));
  Tensor a = random_tensor({4}, rng);
  auto f = [&]() { return sum(mul(mul(x, x), a)); };
  auto report = grad_check(f, params, 1e-5);
  CHECK(report.max_rel_error < 1e-7);
}

TEST_CASE("grad_check through leaky_relu away from the kink") {
  Rng rng(9);
  ModelParams params;
  Tensor x = params.add("x", Tensor::of({4}, {1.5, -2.0, 0.7, -0.4}, true));
  Tensor w = random_tensor({4}, rng);
  auto f = [&]() { return sum(mul(leaky_relu(x, 0.01), w)); };
  auto report = grad_check(f, params, 1e-5);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("grad_check covers every primitive in one composite") {
  Rng rng(13);
  ModelParams params;
  Tensor a = params.add("a", random_tensor({3, 4}, rng, true));
  Tensor b = params.add("b", random_tensor({4, 3}, rng, true));
  Tensor g = params.add("g", random_tensor({4}, rng, true));
  Tensor be = params.add("be", random_tensor({4}, rng, true));
  Tensor v = params.add("v", Tensor::of({3}, {0.4, 1.2, -0.3}, true));
  auto f = [&]() {
    Tensor m = matmul(a, b);                    // 3x3
    Tensor s = softmax(m, 1);
    Tensor t = transpose(matmul(s, a));         // 4x3
    Tensor ln = layer_norm(transpose(t), g, be);  // 3x4
    Tensor u = add(elu(ln), relu(scale(ln, 0.7)));
    Tensor rows = gather(u, {1, 0, 2});
    Tensor red = mean_rows(rows);               // 4
    Tensor sg = sigmoid(sub(red, g));
    Tensor lg = log(add(sg, Tensor::of({4}, {1.1, 1.1, 1.1, 1.1})));
    Tensor cat = concat({lg, v}, 0);            // 7
    return add(sum(mul(cat, cat)), sum(sum(u, 0)));
  };
  auto report = grad_check(f, params, 1e-5);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("checkpoints round-trip doubles exactly") {
  Rng rng(21);
  ModelParams params;
  std::vector<double> vals = {1.0 / 3.0, -2.7182818284590452, 1e-17, 0.1 + 0.2, 12345.6789};
  params.add("w.first", Tensor::of({5}, vals, true));
  params.add("w.second", random_tensor({3, 3}, rng, true));

  const std::string path = (std::filesystem::temp_directory_path() / "kelm_ckpt_test.txt").string();
  save_checkpoint(params, path);

  ModelParams loaded;
  loaded.add("w.first", Tensor::zeros({5}, true));
  loaded.add("w.second", Tensor::zeros({3, 3}, true));
  load_checkpoint(loaded, path);
  CHECK(loaded.get("w.first").values() == params.get("w.first").values());
  CHECK(loaded.get("w.second").values() == params.get("w.second").values());

  ModelParams wrong;
  wrong.add("w.first", Tensor::zeros({4}, true));
  wrong.add("w.second", Tensor::zeros({3, 3}, true));
  CHECK_THROWS_AS(load_checkpoint(wrong, path), Error);
  std::filesystem::remove(path);
}

TEST_SUITE_END();
