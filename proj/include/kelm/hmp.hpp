#pragma once

#include <unordered_map>
#include <vector>

#include "kelm/kge.hpp"
#include "kelm/params.hpp"
#include "kelm/tensor.hpp"
#include "kelm/uket.hpp"

namespace kelm {

struct HmpOptions {
  int rgcn_layers = 1;
  bool rgcn_self_loop = true;   // add a dedicated SELF relation weight per layer
  double leaky_slope = 0.01;
  bool static_average = false;  // ablation: average candidates instead of attending
};

// Relation-typed graph convolution. Messages flow along edge direction
// (head -> tail); each node averages its in-neighbors per relation, applies
// the relation weight, optionally adds W_self * own state, then ReLU.
Tensor rgcn_layer(const Subgraph& subgraph, const Tensor& states,
                  const std::unordered_map<int, Tensor>& relation_weights,
                  const Tensor* self_weight);

// Registers one KG's trainable tensors: per-layer per-relation rGCN weights
// plus SELF, the shared attention transform, the attention vector and the
// d_t -> d_q projection. `q` is the 1-based KG index used in names.
void init_kg_params(int q, int relation_count, int d_q, int d_t, const HmpOptions& options,
                    ModelParams& params, Rng& rng);
void init_selfmatch_params(int d_k, ModelParams& params, Rng& rng);

// Pretrained vectors in, L rGCN updates out (rows follow subgraph node order).
Tensor encode_kg(const Subgraph& subgraph, const EmbeddingTable& table, int q,
                 const ModelParams& params, const HmpOptions& options);

struct DisambiguationResult {
  Tensor x;       // 1 x d_q knowledge vector
  Tensor alphas;  // 1 x m attention over the candidate rows
};

// GAT-style scoring of ambiguous candidates against the projected token
// representation; candidate_rows must already include the sentinel zero row.
DisambiguationResult disambiguation_attention(const Tensor& h_t_row, const Tensor& candidate_rows,
                                              const Tensor& w_q, const Tensor& attn_vec,
                                              const Tensor& w_proj, double leaky_slope = 0.01);

// Row i = [h_i^t || x_i^1 || ... || x_i^Q]; empty slots are zero-filled.
// slots[q][token] may be undefined (uncovered).
Tensor fuse_knowledge(const Tensor& h_t, const std::vector<std::vector<Tensor>>& slots,
                      const std::vector<int>& kg_dims);

// KT-NET-style interaction: bilinear token-token scores (diagonal and pad
// positions masked), direct and two-hop attended contexts, six-block output
// of width 6 * d_k.
Tensor self_matching(const Tensor& h_k, const Tensor& bilinear,
                     const std::vector<std::uint8_t>& pad_mask = {});

// Attention bookkeeping for one covered token, kept for inspection.
struct TokenAttention {
  int token = 0;
  int kg = 0;                          // 1-based
  std::vector<int> candidate_entities; // entity ids; kSentinel marks the sentinel
  Tensor alphas;                       // 1 x m, same order as candidate_entities
};

struct HmpResult {
  Tensor h_f;
  std::vector<TokenAttention> attentions;
};

// The full three-stage pass over one example's UKET: rGCN encoding per KG,
// disambiguation attention per covered token, fusion, self-matching.
HmpResult hmp_forward(const Tensor& h_t, const UketGraph& uket,
                      const std::vector<const EmbeddingTable*>& tables,
                      const ModelParams& params, const HmpOptions& options);

}  // namespace kelm
