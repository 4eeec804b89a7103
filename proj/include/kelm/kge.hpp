#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kelm/kg.hpp"

namespace kelm {

// Pretrained entity/relation vectors of one shared dimension. Entities of
// the graph without a vector are flagged missing; they never seed subgraphs
// and fall back to the zero vector when reached as neighbors.
struct EmbeddingTable {
  int dimension = 0;
  std::unordered_map<int, std::vector<double>> entity_vectors;
  std::unordered_map<int, std::vector<double>> relation_vectors;
  int skipped_names = 0;  // file rows naming nothing in the graph

  bool has_entity(int id) const { return entity_vectors.count(id) > 0; }
  // zero vector for missing entities
  std::vector<double> entity_or_zero(int id) const {
    auto it = entity_vectors.find(id);
    if (it != entity_vectors.end()) return it->second;
    return std::vector<double>(static_cast<size_t>(dimension), 0.0);
  }
};

// First line `N d`, then `name v1 ... vd`. Names are matched against the
// graph's entity and relation tables; unmatched rows are counted and skipped.
EmbeddingTable load_embeddings(const std::string& path, const KnowledgeGraph& graph);
void save_embeddings(const EmbeddingTable& table, const KnowledgeGraph& graph,
                     const std::string& path);

// DistMult: sum_k e_h[k] * w_r[k] * e_t[k]
double bilinear_score(const std::vector<double>& e_h, const std::vector<double>& w_r,
                      const std::vector<double>& e_t);

struct KgeConfig {
  int dim = 16;
  int epochs = 100;
  double lr = 0.05;
  int negatives_per_positive = 4;
  std::uint64_t seed = 1;
};

struct KgeTrainResult {
  EmbeddingTable table;
  std::vector<double> epoch_losses;
};

// Logistic loss over true triples and uniformly corrupted heads/tails,
// plain SGD, single-threaded and deterministic for a fixed seed.
KgeTrainResult train_bilinear(const KnowledgeGraph& graph, const KgeConfig& config);

struct KgeMetrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

// Filtered tail ranking: for each test triple, the true tail is ranked by
// bilinear score against all entities, skipping other known-true tails
// (graph triples plus the test set).
KgeMetrics evaluate_kge(const std::vector<Triple>& test_triples, const EmbeddingTable& table,
                        const KnowledgeGraph& graph);

}  // namespace kelm
