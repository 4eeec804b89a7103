#pragma once

#include <optional>
#include <unordered_set>
#include <vector>

#include "kelm/kg.hpp"
#include "kelm/kge.hpp"
#include "kelm/lexicon.hpp"

namespace kelm {

// Reserved link target: the zero-vector sentinel every covered token can
// attend to instead of real knowledge.
inline constexpr int kSentinel = -1;

struct LinkEdge {
  int token = 0;
  int node = kSentinel;  // subgraph node index, or kSentinel
};

// One injected KG's slice of the UKET for a single example.
struct KgLayer {
  Subgraph subgraph;
  std::vector<LinkEdge> link_edges;
  // per token: candidate subgraph node indices, excluding the sentinel;
  // empty and uncovered are distinguished by `covered`
  std::vector<std::vector<int>> token_candidates;
  std::vector<std::uint8_t> covered;
};

// The three-layer unified graph: per-KG extracted subgraphs, token-to-entity
// link edges with sentinels, and the implicit fully connected token graph.
struct UketGraph {
  int token_count = 0;
  std::vector<KgLayer> layers;  // one per injected KG
};

struct UketOptions {
  int k_hops = 1;
  std::vector<std::optional<std::unordered_set<int>>> relation_filters;  // per KG, optional
};

// Seeds are the union of embedded candidates over all mentions; every token
// of a mention links to each of the mention's surviving candidates plus the
// sentinel. Mentions whose candidates all lack embeddings still cover their
// tokens (sentinel only).
UketGraph build_uket(const TokenizedText& text,
                     const std::vector<std::vector<MentionAnnotation>>& mentions_per_kg,
                     const std::vector<const KnowledgeGraph*>& graphs,
                     const std::vector<const EmbeddingTable*>& tables,
                     const UketOptions& options);

}  // namespace kelm
