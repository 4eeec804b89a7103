#include "kelm/uket.hpp"

#include <algorithm>

namespace kelm {

UketGraph build_uket(const TokenizedText& text,
                     const std::vector<std::vector<MentionAnnotation>>& mentions_per_kg,
                     const std::vector<const KnowledgeGraph*>& graphs,
                     const std::vector<const EmbeddingTable*>& tables,
                     const UketOptions& options) {
  if (mentions_per_kg.size() != graphs.size() || graphs.size() != tables.size())
    throw Error("build_uket: per-KG argument lists disagree");

  UketGraph uket;
  uket.token_count = text.size();
  uket.layers.resize(graphs.size());

  for (size_t q = 0; q < graphs.size(); ++q) {
    const KnowledgeGraph& graph = *graphs[q];
    const EmbeddingTable& table = *tables[q];
    KgLayer& layer = uket.layers[q];
    layer.token_candidates.resize(static_cast<size_t>(text.size()));
    layer.covered.assign(static_cast<size_t>(text.size()), 0);

    // seeds: union of embedded candidates across mentions, id order
    std::vector<int> seeds;
    for (const auto& m : mentions_per_kg[q]) {
      if (m.candidates.empty()) throw Error("build_uket: mention without candidates");
      for (int c : m.candidates) {
        if (c < 0 || c >= graph.entity_count())
          throw Error("build_uket: candidate entity " + std::to_string(c) + " not in KG " +
                      std::to_string(q + 1));
        if (table.has_entity(c)) seeds.push_back(c);
      }
    }
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

    const std::optional<std::unordered_set<int>> no_filter;
    const auto& filter =
        q < options.relation_filters.size() ? options.relation_filters[q] : no_filter;
    if (!seeds.empty()) layer.subgraph = khop_subgraph(graph, seeds, options.k_hops, filter);

    std::unordered_map<int, int> node_of;
    for (size_t i = 0; i < layer.subgraph.nodes.size(); ++i)
      node_of.emplace(layer.subgraph.nodes[i], static_cast<int>(i));

    for (const auto& m : mentions_per_kg[q]) {
      std::vector<int> cand_nodes;
      for (int c : m.candidates) {
        auto it = node_of.find(c);
        if (it != node_of.end()) cand_nodes.push_back(it->second);
      }
      for (int tok = m.first_token; tok <= m.last_token; ++tok) {
        if (tok < 0 || tok >= text.size())
          throw Error("build_uket: mention span outside the token sequence");
        for (int node : cand_nodes) layer.link_edges.push_back({tok, node});
        layer.link_edges.push_back({tok, kSentinel});
        layer.token_candidates[static_cast<size_t>(tok)] = cand_nodes;
        layer.covered[static_cast<size_t>(tok)] = 1;
      }
    }
  }
  return uket;
}

}  // namespace kelm
