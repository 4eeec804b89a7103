#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kelm/tensor.hpp"

namespace kelm {

struct Triple {
  int head;
  int relation;
  int tail;
  bool operator==(const Triple&) const = default;
};

// Immutable multi-relational directed graph. Entity and relation ids are
// dense and keep first-seen order; adjacency mirrors the triple set exactly.
class KnowledgeGraph {
 public:
  int entity_count() const { return static_cast<int>(entity_names_.size()); }
  int relation_count() const { return static_cast<int>(relation_names_.size()); }
  const std::vector<Triple>& triples() const { return triples_; }

  const std::string& entity_name(int id) const { return entity_names_[static_cast<size_t>(id)]; }
  const std::string& relation_name(int id) const { return relation_names_[static_cast<size_t>(id)]; }
  std::optional<int> entity_id(const std::string& name) const;
  std::optional<int> relation_id(const std::string& name) const;

  int intern_entity(const std::string& name);
  int intern_relation(const std::string& name);
  // Returns false when the triple was already present.
  bool add_triple(int head, int relation, int tail);

  struct Edge {
    int relation;
    int neighbor;
  };
  const std::vector<Edge>& outgoing(int entity) const { return out_[static_cast<size_t>(entity)]; }
  const std::vector<Edge>& incoming(int entity) const { return in_[static_cast<size_t>(entity)]; }

  bool has_triple(int head, int relation, int tail) const;

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, int> entity_ids_;
  std::unordered_map<std::string, int> relation_ids_;
  std::vector<Triple> triples_;
  std::unordered_set<std::uint64_t> triple_keys_;
  std::vector<std::vector<Edge>> out_;
  std::vector<std::vector<Edge>> in_;
};

// Extracted K-hop neighborhood. Node order is deterministic: seeds first (by
// id), then remaining nodes by (hop, id). Edges keep the parent graph's
// direction.
struct Subgraph {
  std::vector<int> nodes;  // entity ids of the parent graph
  struct Edge {
    int src;  // node index
    int relation;
    int dst;  // node index
  };
  std::vector<Edge> edges;
  std::vector<int> seed_indices;  // positions of the seeds within `nodes`
  std::vector<int> hop_of;        // per node, distance from the nearest seed

  int node_index(int entity) const {
    for (size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == entity) return static_cast<int>(i);
    return -1;
  }
};

// `head<TAB>relation<TAB>tail` per line; '#' lines are comments. Duplicate
// triples collapse; an empty graph is an error.
KnowledgeGraph load_triples(const std::string& path);
KnowledgeGraph parse_triples(std::istream& in, const std::string& origin);
std::string serialize_triples(const KnowledgeGraph& graph);

// Union of hop-0..K neighborhoods of the seeds, traversing edges in both
// directions. Edges of the result are all parent edges inside the node set
// whose relation passes the filter (empty optional = all relations).
Subgraph khop_subgraph(const KnowledgeGraph& graph, const std::vector<int>& seeds, int k,
                       const std::optional<std::unordered_set<int>>& relation_filter = std::nullopt);

}  // namespace kelm
