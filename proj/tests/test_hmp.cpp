#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kelm/encoder.hpp"
#include "kelm/grad_check.hpp"
#include "kelm/heads.hpp"
#include "kelm/hmp.hpp"

using namespace kelm;

namespace {

KnowledgeGraph from_string(const std::string& text) {
  std::istringstream is(text);
  return parse_triples(is, "<memory>");
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::of(std::move(shape), std::move(v), requires_grad);
}

Tensor identity(int d) {
  std::vector<double> v(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) v[static_cast<size_t>(i) * d + i] = 1.0;
  return Tensor::of({d, d}, std::move(v));
}

// random subgraph with `n` nodes and `m` edges over `nrel` relations
Subgraph random_subgraph(int n, int m, int nrel, Rng& rng) {
  Subgraph sg;
  for (int i = 0; i < n; ++i) sg.nodes.push_back(i);
  sg.seed_indices = {0};
  sg.hop_of.assign(static_cast<size_t>(n), 1);
  sg.hop_of[0] = 0;
  for (int e = 0; e < m; ++e)
    sg.edges.push_back({rng.below(n), rng.below(nrel), rng.below(n)});
  return sg;
}

// per-node loop oracle for one rGCN layer
std::vector<double> rgcn_oracle(const Subgraph& sg, const Tensor& states,
                                const std::unordered_map<int, Tensor>& weights,
                                const Tensor* self_weight, int d) {
  const int n = static_cast<int>(sg.nodes.size());
  std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> acc(static_cast<size_t>(d), 0.0);
    for (const auto& [r, w] : weights) {
      std::vector<int> nbrs;
      for (const auto& e : sg.edges)
        if (e.dst == i && e.relation == r) nbrs.push_back(e.src);
      if (nbrs.empty()) continue;
      for (int j : nbrs)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            acc[static_cast<size_t>(a)] +=
                w.at(a, b) * states.at(j, b) / static_cast<double>(nbrs.size());
    }
    if (self_weight)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          acc[static_cast<size_t>(a)] += self_weight->at(a, b) * states.at(i, b);
    for (int a = 0; a < d; ++a)
      out[static_cast<size_t>(i) * d + a] = std::max(0.0, acc[static_cast<size_t>(a)]);
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("hmp");

TEST_CASE("single neighbor with identity weight passes the state through") {
  Subgraph sg;
  sg.nodes = {0, 1};
  sg.seed_indices = {0};
  sg.hop_of = {0, 1};
  sg.edges = {{1, 0, 0}};  // node 1 -> node 0 under relation 0
  Tensor states = Tensor::of({2, 3}, {0, 0, 0, 0.5, 1.5, 2.5});
  std::unordered_map<int, Tensor> weights = {{0, identity(3)}};
  Tensor out = rgcn_layer(sg, states, weights, nullptr);
  CHECK(out.at(0, 0) == 0.5);
  CHECK(out.at(0, 1) == 1.5);
  CHECK(out.at(0, 2) == 2.5);
  // node 1 has no in-neighbors: ReLU(0)
  CHECK(out.at(1, 0) == 0.0);
}

TEST_CASE("two neighbors average before the nonlinearity") {
  Subgraph sg;
  sg.nodes = {0, 1, 2};
  sg.seed_indices = {0};
  sg.hop_of = {0, 1, 1};
  sg.edges = {{1, 0, 0}, {2, 0, 0}};
  Tensor states = Tensor::of({3, 2}, {9, 9, 1.0, -4.0, 3.0, 2.0});
  std::unordered_map<int, Tensor> weights = {{0, identity(2)}};
  Tensor out = rgcn_layer(sg, states, weights, nullptr);
  CHECK(out.at(0, 0) == doctest::Approx(2.0).epsilon(1e-15));   // mean(1,3)
  CHECK(out.at(0, 1) == doctest::Approx(0.0).epsilon(1e-15));   // ReLU(mean(-4,2))
}

TEST_CASE("rgcn matches the per-node loop oracle on random subgraphs") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + rng.below(4);
    auto sg = random_subgraph(8, 14, 3, rng);
    Tensor states = random_tensor({8, d}, rng);
    std::unordered_map<int, Tensor> weights;
    for (int r = 0; r < 3; ++r) weights.emplace(r, random_tensor({d, d}, rng));
    Tensor self = random_tensor({d, d}, rng);
    for (bool with_self : {false, true}) {
      Tensor out = rgcn_layer(sg, states, weights, with_self ? &self : nullptr);
      auto expect = rgcn_oracle(sg, states, weights, with_self ? &self : nullptr, d);
      for (size_t i = 0; i < expect.size(); ++i)
        CHECK(std::fabs(out.values()[i] - expect[i]) < 1e-12);
    }
  }
}

TEST_CASE("missing relation weights are an error") {
  Rng rng(5);
  auto sg = random_subgraph(4, 6, 2, rng);
  Tensor states = random_tensor({4, 3}, rng);
  std::unordered_map<int, Tensor> weights = {{0, identity(3)}};
  bool has_rel1 = false;
  for (const auto& e : sg.edges) has_rel1 |= e.relation == 1;
  REQUIRE(has_rel1);
  CHECK_THROWS_AS(rgcn_layer(sg, states, weights, nullptr), Error);
}

TEST_CASE("encode_kg with zero layers returns the pretrained embeddings") {
  auto g = from_string("a\tr\tb\nb\tr\tc\n");
  EmbeddingTable table;
  table.dimension = 2;
  for (int e = 0; e < g.entity_count(); ++e) table.entity_vectors[e] = {1.0 * e, 2.0 * e};
  auto sg = khop_subgraph(g, {0}, 2);
  ModelParams params;
  HmpOptions options;
  options.rgcn_layers = 0;
  Tensor out = encode_kg(sg, table, 1, params, options);
  REQUIRE(out.dim(0) == static_cast<int>(sg.nodes.size()));
  for (size_t i = 0; i < sg.nodes.size(); ++i) {
    CHECK(out.at(static_cast<int>(i), 0) == 1.0 * sg.nodes[i]);
    CHECK(out.at(static_cast<int>(i), 1) == 2.0 * sg.nodes[i]);
  }
}

TEST_CASE("encode_kg on an empty subgraph yields a 0-row tensor") {
  EmbeddingTable table;
  table.dimension = 4;
  Subgraph sg;
  ModelParams params;
  Tensor out = encode_kg(sg, table, 1, params, HmpOptions{});
  CHECK(out.dim(0) == 0);
  CHECK(out.dim(1) == 4);
}

TEST_CASE("two encode_kg layers equal two chained oracle passes") {
  Rng rng(47);
  auto g = from_string("a\tr0\tb\nb\tr1\tc\nc\tr0\ta\nb\tr0\ta\n");
  EmbeddingTable table;
  table.dimension = 3;
  for (int e = 0; e < g.entity_count(); ++e) {
    std::vector<double> v(3);
    for (auto& x : v) x = rng.uniform(-1, 1);
    table.entity_vectors[e] = v;
  }
  auto sg = khop_subgraph(g, {0}, 2);
  ModelParams params;
  Rng prng(7);
  HmpOptions options;
  options.rgcn_layers = 2;
  init_kg_params(1, g.relation_count(), 3, 4, options, params, prng);
  Tensor out = encode_kg(sg, table, 1, params, options);

  // oracle: chain the per-node loop twice with the same weights
  std::vector<double> flat;
  for (int node : sg.nodes) {
    auto v = table.entity_or_zero(node);
    flat.insert(flat.end(), v.begin(), v.end());
  }
  Tensor states = Tensor::of({static_cast<int>(sg.nodes.size()), 3}, std::move(flat));
  for (int l = 0; l < 2; ++l) {
    std::unordered_map<int, Tensor> weights;
    for (int r = 0; r < g.relation_count(); ++r)
      weights.emplace(r, params.get("hmp.kg1.rgcn.l" + std::to_string(l) + ".r" + std::to_string(r)));
    Tensor self = params.get("hmp.kg1.rgcn.l" + std::to_string(l) + ".self");
    auto next = rgcn_oracle(sg, states, weights, &self, 3);
    states = Tensor::of({static_cast<int>(sg.nodes.size()), 3}, std::move(next));
  }
  for (size_t i = 0; i < out.values().size(); ++i)
    CHECK(std::fabs(out.values()[i] - states.values()[i]) < 1e-12);
}

TEST_CASE("sentinel-only attention puts all mass on the sentinel and yields zero") {
  Rng rng(3);
  Tensor w_q = random_tensor({4, 4}, rng);
  Tensor a = random_tensor({8, 1}, rng);
  Tensor proj = random_tensor({4, 6}, rng);
  Tensor h = random_tensor({1, 6}, rng);
  Tensor sentinel_only = Tensor::zeros({1, 4});
  auto res = disambiguation_attention(h, sentinel_only, w_q, a, proj);
  CHECK(res.alphas.at(0, 0) == 1.0);
  for (int i = 0; i < 4; ++i) CHECK(res.x.at(0, i) == 0.0);
}

TEST_CASE("identical candidate rows split attention evenly") {
  Rng rng(8);
  Tensor w_q = random_tensor({3, 3}, rng);
  Tensor a = random_tensor({6, 1}, rng);
  Tensor proj = random_tensor({3, 5}, rng);
  Tensor h = random_tensor({1, 5}, rng);
  Tensor cands = Tensor::of({2, 3}, {0.4, -0.7, 1.2, 0.4, -0.7, 1.2});
  auto res = disambiguation_attention(h, cands, w_q, a, proj);
  CHECK(res.alphas.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(res.alphas.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("three candidates match a direct formula oracle") {
  // identity W, ones attention vector: score_j = LeakyReLU(sum(h') + sum(s_j))
  const int d = 2;
  Tensor w_q = identity(d);
  Tensor a = Tensor::of({4, 1}, {1, 1, 1, 1});
  Tensor proj = identity(d);  // d_t = d_q = 2
  Tensor h = Tensor::of({1, 2}, {1.0, -2.0});
  Tensor cands = Tensor::of({3, 2}, {1, 0, 0, 2, -1, -1});
  auto res = disambiguation_attention(h, cands, w_q, a, proj);

  auto lrelu = [](double v) { return v > 0 ? v : 0.01 * v; };
  const double hsum = 1.0 - 2.0;
  const double s0 = lrelu(hsum + 1.0), s1 = lrelu(hsum + 2.0), s2 = lrelu(hsum - 2.0);
  const double z = std::exp(s0) + std::exp(s1) + std::exp(s2);
  CHECK(std::fabs(res.alphas.at(0, 0) - std::exp(s0) / z) < 1e-12);
  CHECK(std::fabs(res.alphas.at(0, 1) - std::exp(s1) / z) < 1e-12);
  CHECK(std::fabs(res.alphas.at(0, 2) - std::exp(s2) / z) < 1e-12);

  // x = ELU(sum_j alpha_j s_j) under identity W
  for (int c = 0; c < 2; ++c) {
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) acc += res.alphas.at(0, j) * cands.at(j, c);
    const double expect = acc > 0 ? acc : std::exp(acc) - 1.0;
    CHECK(std::fabs(res.x.at(0, c) - expect) < 1e-12);
  }
}

TEST_CASE("alphas sum to one and permute with the candidate order") {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int d_q = 2 + rng.below(3), d_t = 2 + rng.below(4), m = 2 + rng.below(4);
    Tensor w_q = random_tensor({d_q, d_q}, rng);
    Tensor a = random_tensor({2 * d_q, 1}, rng);
    Tensor proj = random_tensor({d_q, d_t}, rng);
    Tensor h = random_tensor({1, d_t}, rng);
    Tensor cands = random_tensor({m, d_q}, rng);
    auto res = disambiguation_attention(h, cands, w_q, a, proj);

    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      CHECK(res.alphas.at(0, j) >= 0.0);
      total += res.alphas.at(0, j);
    }
    CHECK(std::fabs(total - 1.0) < 1e-12);

    // reverse the candidate order: alphas must reverse identically
    std::vector<double> rev;
    for (int j = m - 1; j >= 0; --j)
      for (int c = 0; c < d_q; ++c) rev.push_back(cands.at(j, c));
    auto res2 = disambiguation_attention(h, Tensor::of({m, d_q}, std::move(rev)), w_q, a, proj);
    for (int j = 0; j < m; ++j)
      CHECK(std::fabs(res2.alphas.at(0, j) - res.alphas.at(0, m - 1 - j)) < 1e-12);
  }
}

TEST_CASE("sentinel stays inert when zero-embedding candidates join it") {
  Rng rng(23);
  Tensor w_q = random_tensor({3, 3}, rng);
  Tensor a = random_tensor({6, 1}, rng);
  Tensor proj = random_tensor({3, 4}, rng);
  Tensor h = random_tensor({1, 4}, rng);
  auto only_sentinel = disambiguation_attention(h, Tensor::zeros({1, 3}), w_q, a, proj);
  auto with_zeros = disambiguation_attention(h, Tensor::zeros({3, 3}), w_q, a, proj);
  for (int c = 0; c < 3; ++c)
    CHECK(with_zeros.x.at(0, c) == only_sentinel.x.at(0, c));
}

TEST_CASE("fusion concatenates and zero-fills to width d_t + sum d_q") {
  Rng rng(29);
  const int n = 3, d_t = 4;
  Tensor h_t = random_tensor({n, d_t}, rng);
  std::vector<std::vector<Tensor>> slots(2);
  slots[0].resize(n);
  slots[1].resize(n);
  slots[0][1] = random_tensor({1, 3}, rng);  // token 1 covered by KG 1
  slots[1][2] = random_tensor({1, 3}, rng);  // token 2 covered by KG 2
  Tensor h_k = fuse_knowledge(h_t, slots, {3, 3});
  CHECK(h_k.dim(0) == n);
  CHECK(h_k.dim(1) == 10);

  // slicing the columns recovers the inputs exactly
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d_t; ++c) CHECK(h_k.at(i, c) == h_t.at(i, c));
  for (int c = 0; c < 3; ++c) {
    CHECK(h_k.at(1, d_t + c) == slots[0][1].at(0, c));
    CHECK(h_k.at(0, d_t + c) == 0.0);          // token 0 uncovered in KG 1
    CHECK(h_k.at(2, d_t + 3 + c) == slots[1][2].at(0, c));
    CHECK(h_k.at(0, d_t + 3 + c) == 0.0);      // token 0 uncovered in KG 2
  }
}

TEST_CASE("self-matching with two identical rows reproduces the row") {
  Rng rng(37);
  const int d = 5;
  std::vector<double> row(static_cast<size_t>(d));
  for (auto& v : row) v = rng.uniform(-1, 1);
  std::vector<double> both = row;
  both.insert(both.end(), row.begin(), row.end());
  Tensor h = Tensor::of({2, d}, std::move(both));
  Tensor b = random_tensor({d, d}, rng);
  Tensor out = self_matching(h, b);
  REQUIRE(out.dim(1) == 6 * d);
  for (int c = 0; c < d; ++c) {
    CHECK(std::fabs(out.at(0, d + c) - row[static_cast<size_t>(c)]) < 1e-12);            // c_i = h
    CHECK(std::fabs(out.at(0, 2 * d + c) - row[static_cast<size_t>(c)] * row[static_cast<size_t>(c)]) < 1e-12);
    CHECK(std::fabs(out.at(0, 3 * d + c)) < 1e-12);                                       // h - c = 0
  }
}

TEST_CASE("self-matching output width is six times its input width") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + rng.below(6), d = 1 + rng.below(6);
    Tensor h = random_tensor({n, d}, rng);
    Tensor b = random_tensor({d, d}, rng);
    Tensor out = self_matching(h, b);
    CHECK(out.dim(0) == n);
    CHECK(out.dim(1) == 6 * d);
  }
}

TEST_CASE("self-matching matches a loop-based oracle of the six-block formula") {
  Rng rng(43);
  const int n = 3, d = 4;
  Tensor h = random_tensor({n, d}, rng);
  Tensor b = random_tensor({d, d}, rng);
  Tensor out = self_matching(h, b);

  // oracle
  double raw[n][n];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int a = 0; a < d; ++a)
        for (int c = 0; c < d; ++c) acc += h.at(i, a) * b.at(a, c) * h.at(j, c);
      raw[i][j] = acc;
    }
  double attn[n][n];
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, raw[i][j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      attn[i][j] = j == i ? 0.0 : std::exp(raw[i][j] - mx);
      z += attn[i][j];
    }
    for (int j = 0; j < n; ++j) attn[i][j] /= z;
  }
  for (int i = 0; i < n; ++i) {
    std::vector<double> c(static_cast<size_t>(d), 0.0), ct(static_cast<size_t>(d), 0.0);
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < d; ++a) c[static_cast<size_t>(a)] += attn[i][j] * h.at(j, a);
    // two-hop: A * (A * H)
    for (int j = 0; j < n; ++j) {
      std::vector<double> cj(static_cast<size_t>(d), 0.0);
      for (int k = 0; k < n; ++k)
        for (int a = 0; a < d; ++a) cj[static_cast<size_t>(a)] += attn[j][k] * h.at(k, a);
      for (int a = 0; a < d; ++a) ct[static_cast<size_t>(a)] += attn[i][j] * cj[static_cast<size_t>(a)];
    }
    for (int a = 0; a < d; ++a) {
      CHECK(std::fabs(out.at(i, a) - h.at(i, a)) < 1e-12);
      CHECK(std::fabs(out.at(i, d + a) - c[static_cast<size_t>(a)]) < 1e-12);
      CHECK(std::fabs(out.at(i, 2 * d + a) - h.at(i, a) * c[static_cast<size_t>(a)]) < 1e-12);
      CHECK(std::fabs(out.at(i, 3 * d + a) - (h.at(i, a) - c[static_cast<size_t>(a)])) < 1e-12);
      CHECK(std::fabs(out.at(i, 4 * d + a) - ct[static_cast<size_t>(a)]) < 1e-12);
      CHECK(std::fabs(out.at(i, 5 * d + a) - h.at(i, a) * ct[static_cast<size_t>(a)]) < 1e-12);
    }
  }
}

TEST_CASE("single fully masked token gets a zero direct context") {
  Rng rng(51);
  Tensor h = random_tensor({1, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  Tensor out = self_matching(h, b);
  for (int c = 0; c < 3; ++c) {
    CHECK(out.at(0, 3 + c) == 0.0);   // direct context block
    CHECK(out.at(0, 12 + c) == 0.0);  // two-hop block
  }
}

TEST_SUITE_END();
