#include "kelm/hmp.hpp"

#include <algorithm>
#include <cmath>

namespace kelm {

namespace {

std::string kg_prefix(int q) { return "hmp.kg" + std::to_string(q) + "."; }

Tensor zero_row(int d) { return Tensor::zeros({1, d}); }

Tensor ones_column(int n) {
  return Tensor::of({n, 1}, std::vector<double>(static_cast<size_t>(n), 1.0));
}

}  // namespace

Tensor rgcn_layer(const Subgraph& subgraph, const Tensor& states,
                  const std::unordered_map<int, Tensor>& relation_weights,
                  const Tensor* self_weight) {
  const int n = static_cast<int>(subgraph.nodes.size());
  if (states.rank() != 2 || states.dim(0) != n)
    throw Error("rgcn_layer: states rows do not match the subgraph nodes");

  // per-relation in-degree, then one n x n averaging matrix per relation
  std::unordered_map<int, std::vector<int>> in_degree;
  for (const auto& e : subgraph.edges) ++in_degree.try_emplace(e.relation, n).first->second[static_cast<size_t>(e.dst)];

  std::vector<int> relations;
  for (const auto& [r, unused] : in_degree) relations.push_back(r);
  std::sort(relations.begin(), relations.end());

  Tensor acc;
  for (int r : relations) {
    auto wit = relation_weights.find(r);
    if (wit == relation_weights.end())
      throw Error("rgcn_layer: no weight for relation " + std::to_string(r));
    std::vector<double> agg(static_cast<size_t>(n) * n, 0.0);
    const auto& deg = in_degree[r];
    for (const auto& e : subgraph.edges)
      if (e.relation == r)
        agg[static_cast<size_t>(e.dst) * n + e.src] += 1.0 / deg[static_cast<size_t>(e.dst)];
    Tensor messages = matmul(matmul(Tensor::of({n, n}, std::move(agg)), states),
                             transpose(wit->second));
    acc = acc.defined() ? add(acc, messages) : messages;
  }
  if (self_weight) {
    Tensor self_term = matmul(states, transpose(*self_weight));
    acc = acc.defined() ? add(acc, self_term) : self_term;
  }
  if (!acc.defined()) acc = Tensor::zeros({n, states.dim(1)});
  return relu(acc);
}

void init_kg_params(int q, int relation_count, int d_q, int d_t, const HmpOptions& options,
                    ModelParams& params, Rng& rng) {
  const std::string prefix = kg_prefix(q);
  for (int l = 0; l < options.rgcn_layers; ++l) {
    const std::string lp = prefix + "rgcn.l" + std::to_string(l) + ".";
    for (int r = 0; r < relation_count; ++r)
      params.add(lp + "r" + std::to_string(r), glorot_uniform({d_q, d_q}, rng));
    if (options.rgcn_self_loop) params.add(lp + "self", glorot_uniform({d_q, d_q}, rng));
  }
  params.add(prefix + "att.w", glorot_uniform({d_q, d_q}, rng));
  params.add(prefix + "att.a", glorot_uniform({2 * d_q, 1}, rng));
  params.add(prefix + "att.proj", glorot_uniform({d_q, d_t}, rng));
}

void init_selfmatch_params(int d_k, ModelParams& params, Rng& rng) {
  params.add("hmp.selfmatch.b", glorot_uniform({d_k, d_k}, rng));
}

Tensor encode_kg(const Subgraph& subgraph, const EmbeddingTable& table, int q,
                 const ModelParams& params, const HmpOptions& options) {
  const int n = static_cast<int>(subgraph.nodes.size());
  const int d = table.dimension;
  std::vector<double> init;
  init.reserve(static_cast<size_t>(n) * static_cast<size_t>(d));
  for (int node : subgraph.nodes) {
    auto v = table.entity_or_zero(node);
    init.insert(init.end(), v.begin(), v.end());
  }
  Tensor states = Tensor::of({n, d}, std::move(init));
  if (n == 0) return states;

  for (int l = 0; l < options.rgcn_layers; ++l) {
    const std::string lp = kg_prefix(q) + "rgcn.l" + std::to_string(l) + ".";
    std::unordered_map<int, Tensor> weights;
    std::unordered_map<int, bool> seen;
    for (const auto& e : subgraph.edges) {
      if (seen[e.relation]) continue;
      seen[e.relation] = true;
      const std::string name = lp + "r" + std::to_string(e.relation);
      if (!params.has(name))
        throw Error("encode_kg: no weight for relation " + std::to_string(e.relation));
      weights.emplace(e.relation, params.get(name));
    }
    Tensor self;
    if (options.rgcn_self_loop) self = params.get(lp + "self");
    states = rgcn_layer(subgraph, states, weights, options.rgcn_self_loop ? &self : nullptr);
  }
  return states;
}

DisambiguationResult disambiguation_attention(const Tensor& h_t_row, const Tensor& candidate_rows,
                                              const Tensor& w_q, const Tensor& attn_vec,
                                              const Tensor& w_proj, double leaky_slope) {
  if (candidate_rows.rank() != 2 || candidate_rows.dim(0) < 1)
    throw Error("disambiguation_attention: need at least one candidate row");
  const int m = candidate_rows.dim(0);

  Tensor projected = matmul(h_t_row, transpose(w_proj));       // 1 x d_q
  Tensor token_key = matmul(projected, transpose(w_q));        // 1 x d_q
  Tensor cand_keys = matmul(candidate_rows, transpose(w_q));   // m x d_q
  Tensor token_rep = matmul(ones_column(m), token_key);        // m x d_q
  Tensor scores = leaky_relu(matmul(concat({token_rep, cand_keys}, 1), attn_vec), leaky_slope);
  Tensor alphas = softmax(transpose(scores), 1);               // 1 x m
  Tensor x = elu(matmul(alphas, cand_keys));                   // 1 x d_q
  return {x, alphas};
}

Tensor fuse_knowledge(const Tensor& h_t, const std::vector<std::vector<Tensor>>& slots,
                      const std::vector<int>& kg_dims) {
  if (slots.size() != kg_dims.size()) throw Error("fuse_knowledge: per-KG lists disagree");
  const int n = h_t.dim(0);
  std::vector<Tensor> blocks = {h_t};
  for (size_t q = 0; q < slots.size(); ++q) {
    if (static_cast<int>(slots[q].size()) != n)
      throw Error("fuse_knowledge: slot list does not cover every token");
    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Tensor& s = slots[q][static_cast<size_t>(i)];
      rows.push_back(s.defined() ? s : zero_row(kg_dims[q]));
    }
    blocks.push_back(concat(rows, 0));
  }
  return concat(blocks, 1);
}

Tensor self_matching(const Tensor& h_k, const Tensor& bilinear,
                     const std::vector<std::uint8_t>& pad_mask) {
  if (h_k.rank() != 2 || h_k.dim(0) < 1) throw Error("self_matching: need at least one token row");
  const int n = h_k.dim(0);
  if (!pad_mask.empty() && static_cast<int>(pad_mask.size()) != n)
    throw Error("self_matching: pad mask length mismatch");

  Tensor raw = matmul(matmul(h_k, bilinear), transpose(h_k));  // n x n

  std::vector<std::uint8_t> excluded(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    excluded[static_cast<size_t>(i) * n + i] = 1;  // no self-attention
    for (int j = 0; j < n; ++j) {
      const bool pad = !pad_mask.empty() && (pad_mask[static_cast<size_t>(i)] || pad_mask[static_cast<size_t>(j)]);
      if (pad) excluded[static_cast<size_t>(i) * n + j] = 1;
    }
  }
  Tensor attn = softmax(raw, 1, excluded);
  Tensor direct = matmul(attn, h_k);        // c_i
  Tensor two_hop = matmul(attn, direct);    // same probabilities applied twice
  return concat({h_k, direct, mul(h_k, direct), sub(h_k, direct), two_hop, mul(h_k, two_hop)}, 1);
}

HmpResult hmp_forward(const Tensor& h_t, const UketGraph& uket,
                      const std::vector<const EmbeddingTable*>& tables,
                      const ModelParams& params, const HmpOptions& options) {
  if (uket.layers.size() != tables.size()) throw Error("hmp_forward: per-KG lists disagree");
  const int n = h_t.dim(0);
  if (n != uket.token_count) throw Error("hmp_forward: token representation rows != token count");

  HmpResult result;
  std::vector<std::vector<Tensor>> slots(uket.layers.size());
  std::vector<int> kg_dims(uket.layers.size());

  for (size_t qi = 0; qi < uket.layers.size(); ++qi) {
    const int q = static_cast<int>(qi) + 1;
    const KgLayer& layer = uket.layers[qi];
    const EmbeddingTable& table = *tables[qi];
    kg_dims[qi] = table.dimension;
    slots[qi].resize(static_cast<size_t>(n));

    Tensor encoded;
    if (!layer.subgraph.nodes.empty()) encoded = encode_kg(layer.subgraph, table, q, params, options);

    const Tensor w_q = params.get(kg_prefix(q) + "att.w");
    const Tensor attn_vec = params.get(kg_prefix(q) + "att.a");
    const Tensor w_proj = params.get(kg_prefix(q) + "att.proj");

    for (int tok = 0; tok < n; ++tok) {
      if (!layer.covered[static_cast<size_t>(tok)]) continue;
      const auto& cand_nodes = layer.token_candidates[static_cast<size_t>(tok)];

      Tensor cand_rows;
      std::vector<int> entities;
      if (cand_nodes.empty()) {
        cand_rows = zero_row(table.dimension);  // sentinel only
      } else {
        cand_rows = concat({gather(encoded, cand_nodes), zero_row(table.dimension)}, 0);
        for (int node : cand_nodes)
          entities.push_back(layer.subgraph.nodes[static_cast<size_t>(node)]);
      }
      entities.push_back(kSentinel);

      TokenAttention record;
      record.token = tok;
      record.kg = q;
      record.candidate_entities = std::move(entities);

      Tensor h_row = gather(h_t, {tok});
      if (options.static_average) {
        // KT-NET-style degenerate case: static pretrained candidate vectors
        // (no graph encoding) under uniform weights, no Eq.2-3 scoring
        std::vector<double> flat;
        for (int node : cand_nodes) {
          auto v = table.entity_or_zero(layer.subgraph.nodes[static_cast<size_t>(node)]);
          flat.insert(flat.end(), v.begin(), v.end());
        }
        flat.insert(flat.end(), static_cast<size_t>(table.dimension), 0.0);  // sentinel
        const int m = static_cast<int>(cand_nodes.size()) + 1;
        Tensor static_rows = Tensor::of({m, table.dimension}, std::move(flat));
        Tensor uniform = Tensor::of({1, m}, std::vector<double>(static_cast<size_t>(m), 1.0 / m));
        Tensor keys = matmul(static_rows, transpose(w_q));
        slots[qi][static_cast<size_t>(tok)] = elu(matmul(uniform, keys));
        record.alphas = uniform;
      } else {
        auto att = disambiguation_attention(h_row, cand_rows, w_q, attn_vec, w_proj,
                                            options.leaky_slope);
        slots[qi][static_cast<size_t>(tok)] = att.x;
        record.alphas = att.alphas;
      }
      result.attentions.push_back(std::move(record));
    }
  }

  Tensor h_k = fuse_knowledge(h_t, slots, kg_dims);
  result.h_f = self_matching(h_k, params.get("hmp.selfmatch.b"));
  return result;
}

}  // namespace kelm
