#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kelm/encoder.hpp"
#include "kelm/grad_check.hpp"

using namespace kelm;

TEST_SUITE_BEGIN("encoder");

namespace {

Vocab vocab_of(const std::vector<std::string>& words) {
  Vocab v;
  for (const auto& w : words) v.add(w);
  return v;
}

}  // namespace

TEST_CASE("lookup encoder emits one row per token") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::Lookup;
  cfg.d_t = 8;
  auto vocab = vocab_of({"[CLS]", "[SEP]", "who", "won", "ford"});
  ModelParams params;
  Rng rng(1);
  init_encoder_params(cfg, vocab.size(), params, rng);
  auto text = tokenize("who won", std::nullopt, "ford won", 32);
  Tensor h = encode_tokens(text, cfg, vocab, params);
  CHECK(h.dim(0) == text.size());
  CHECK(h.dim(1) == 8);
}

TEST_CASE("identical sentences encode identically; unknown words map to UNK") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::TinyTransformer;
  cfg.d_t = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  auto vocab = vocab_of({"[CLS]", "[SEP]", "who", "won", "ford"});
  ModelParams params;
  Rng rng(2);
  init_encoder_params(cfg, vocab.size(), params, rng);
  auto text = tokenize("who won", std::nullopt, "ford won", 32);
  Tensor a = encode_tokens(text, cfg, vocab, params);
  Tensor b = encode_tokens(text, cfg, vocab, params);
  CHECK(a.values() == b.values());

  // "nixon" is out of vocabulary; it must encode like any other UNK token
  auto t1 = tokenize("who won", std::nullopt, "nixon won", 32);
  auto t2 = tokenize("who won", std::nullopt, "gerald won", 32);
  CHECK(encode_tokens(t1, cfg, vocab, params).values() ==
        encode_tokens(t2, cfg, vocab, params).values());
}

TEST_CASE("transformer attention rows sum to one per head") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::TinyTransformer;
  cfg.d_t = 12;
  cfg.layers = 2;
  cfg.heads = 3;
  auto vocab = vocab_of({"[CLS]", "[SEP]", "alpha", "beta", "gamma"});
  ModelParams params;
  Rng rng(3);
  init_encoder_params(cfg, vocab.size(), params, rng);
  auto text = tokenize("alpha", std::nullopt, "beta gamma alpha", 32);
  EncoderTrace trace;
  Tensor h = encode_tokens(text, cfg, vocab, params, &trace);
  CHECK(h.dim(1) == 12);
  REQUIRE(trace.attention.size() == 6);  // layers x heads
  for (const auto& attn : trace.attention)
    for (int r = 0; r < attn.dim(0); ++r) {
      double s = 0.0;
      for (int c = 0; c < attn.dim(1); ++c) s += attn.at(r, c);
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("transformer gradients pass the finite-difference check") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::TinyTransformer;
  cfg.d_t = 6;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_multiplier = 2;
  auto vocab = vocab_of({"[CLS]", "[SEP]", "a", "b"});
  ModelParams params;
  Rng rng(4);
  init_encoder_params(cfg, vocab.size(), params, rng);
  auto text = tokenize("a", std::nullopt, "b a", 16);
  Tensor target = glorot_uniform({text.size(), 6}, rng);
  auto f = [&]() {
    Tensor h = encode_tokens(text, cfg, vocab, params);
    Tensor diff = sub(h, target);
    return sum(mul(diff, diff));
  };
  auto report = grad_check(f, params, 1e-5);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("precomputed vectors round-trip bit-exactly") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "kelm_precomputed_test.txt").string();
  std::filesystem::remove(path);
  Rng rng(5);
  std::vector<double> vals(12);
  for (auto& v : vals) v = rng.uniform(-2, 2);
  Tensor block = Tensor::of({3, 4}, vals);
  append_precomputed(path, "ex1", block);
  append_precomputed(path, "ex2", Tensor::of({2, 4}, std::vector<double>(8, 0.125)));

  Tensor back = load_precomputed(path, "ex1");
  CHECK(back.values() == vals);
  Tensor second = load_precomputed(path, "ex2");
  CHECK(second.dim(0) == 2);

  CHECK_THROWS_WITH_AS(load_precomputed(path, "missing"), doctest::Contains("missing"), Error);
  std::filesystem::remove(path);

  EncoderConfig cfg;
  cfg.kind = EncoderKind::Precomputed;
  Vocab vocab;
  ModelParams params;
  auto text = tokenize("q", std::nullopt, "p", 16);
  CHECK_THROWS_AS(encode_tokens(text, cfg, vocab, params), Error);
}

TEST_SUITE_END();
