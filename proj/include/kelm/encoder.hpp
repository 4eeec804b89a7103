#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kelm/params.hpp"
#include "kelm/tensor.hpp"
#include "kelm/text.hpp"

namespace kelm {

// Token table built from the training split; id 0 is reserved for unknowns.
class Vocab {
 public:
  static constexpr int kUnk = 0;
  Vocab() { add("[UNK]"); }

  int add(const std::string& token);
  int id_or_unk(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_[static_cast<size_t>(id)]; }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

enum class EncoderKind { Lookup, TinyTransformer, Precomputed };
EncoderKind encoder_kind_from_string(const std::string& name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::Lookup;
  int d_t = 32;
  int layers = 2;
  int heads = 2;
  int ffn_multiplier = 4;
  int max_positions = 128;
  std::string precomputed_path;
};

// Registers all encoder parameters ("encoder.*") for the configured kind.
void init_encoder_params(const EncoderConfig& config, int vocab_size, ModelParams& params,
                         Rng& rng);

// Per-layer, per-head attention matrices, filled when a sink is passed.
struct EncoderTrace {
  std::vector<Tensor> attention;
};

// Token embeddings plus positions; the tiny transformer stacks post-norm
// self-attention blocks on top. Deterministic given parameters.
Tensor encode_tokens(const TokenizedText& text, const EncoderConfig& config, const Vocab& vocab,
                     const ModelParams& params, EncoderTrace* trace = nullptr);

// `example_id n d_t` header per block, then n lines of d_t values.
Tensor load_precomputed(const std::string& path, const std::string& example_id);
void append_precomputed(const std::string& path, const std::string& example_id, const Tensor& h);

}  // namespace kelm
