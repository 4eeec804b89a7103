#include "kelm/kge.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kelm/checkpoint.hpp"
#include "kelm/params.hpp"

namespace kelm {

EmbeddingTable load_embeddings(const std::string& path, const KnowledgeGraph& graph) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open embedding file " + path);

  std::string line;
  if (!std::getline(is, line)) throw Error(path + ": empty embedding file");
  std::istringstream header(line);
  long long n = 0;
  int d = 0;
  if (!(header >> n >> d)) throw Error(path + ":1: expected header `N d`");
  if (d <= 0) throw Error(path + ": non-positive dimension " + std::to_string(d));

  EmbeddingTable table;
  table.dimension = d;
  int line_no = 1;
  long long rows = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    ++rows;
    std::istringstream row(line);
    std::string name;
    row >> name;
    std::vector<double> vec(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i)
      if (!(row >> vec[static_cast<size_t>(i)]))
        throw Error(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(d) +
                    " values for " + name);
    double extra;
    if (row >> extra)
      throw Error(path + ":" + std::to_string(line_no) + ": too many values for " + name);

    bool used = false;
    if (auto id = graph.entity_id(name)) {
      table.entity_vectors[*id] = vec;
      used = true;
    }
    if (auto id = graph.relation_id(name)) {
      table.relation_vectors[*id] = vec;
      used = true;
    }
    if (!used) ++table.skipped_names;
  }
  if (rows != n)
    throw Error(path + ": header announces " + std::to_string(n) + " rows, found " +
                std::to_string(rows));
  return table;
}

void save_embeddings(const EmbeddingTable& table, const KnowledgeGraph& graph,
                     const std::string& path) {
  std::string out = std::to_string(table.entity_vectors.size() + table.relation_vectors.size()) +
                    " " + std::to_string(table.dimension) + "\n";
  char buf[32];
  auto append_row = [&](const std::string& name, const std::vector<double>& vec) {
    out += name;
    for (double v : vec) {
      std::snprintf(buf, sizeof(buf), " %.17g", v);
      out += buf;
    }
    out += "\n";
  };
  // id order keeps output deterministic
  for (int e = 0; e < graph.entity_count(); ++e) {
    auto it = table.entity_vectors.find(e);
    if (it != table.entity_vectors.end()) append_row(graph.entity_name(e), it->second);
  }
  for (int r = 0; r < graph.relation_count(); ++r) {
    auto it = table.relation_vectors.find(r);
    if (it != table.relation_vectors.end()) append_row(graph.relation_name(r), it->second);
  }
  write_file_atomic(path, out);
}

double bilinear_score(const std::vector<double>& e_h, const std::vector<double>& w_r,
                      const std::vector<double>& e_t) {
  if (e_h.size() != w_r.size() || w_r.size() != e_t.size())
    throw Error("bilinear_score: dimension mismatch " + std::to_string(e_h.size()) + "/" +
                std::to_string(w_r.size()) + "/" + std::to_string(e_t.size()));
  double acc = 0.0;
  for (size_t i = 0; i < e_h.size(); ++i) acc += e_h[i] * w_r[i] * e_t[i];
  return acc;
}

KgeTrainResult train_bilinear(const KnowledgeGraph& graph, const KgeConfig& config) {
  if (graph.triples().empty()) throw Error("train_bilinear: empty graph");
  if (config.dim < 1) throw Error("train_bilinear: dim must be >= 1");

  const int d = config.dim;
  const int ne = graph.entity_count();
  const int nr = graph.relation_count();
  Rng rng(config.seed);

  std::vector<std::vector<double>> ent(static_cast<size_t>(ne), std::vector<double>(d));
  std::vector<std::vector<double>> rel(static_cast<size_t>(nr), std::vector<double>(d));
  const double r0 = std::sqrt(6.0 / (2.0 * d));
  for (auto& v : ent)
    for (auto& x : v) x = rng.uniform(-r0, r0);
  for (auto& v : rel)
    for (auto& x : v) x = rng.uniform(-r0, r0);

  auto sgd_triple = [&](const Triple& t, double label, double lr) -> double {
    auto& h = ent[static_cast<size_t>(t.head)];
    auto& r = rel[static_cast<size_t>(t.relation)];
    auto& e = ent[static_cast<size_t>(t.tail)];
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += h[static_cast<size_t>(i)] * r[static_cast<size_t>(i)] * e[static_cast<size_t>(i)];
    const double p = 1.0 / (1.0 + std::exp(-s));
    // d/ds of -[label*log p + (1-label)*log(1-p)]
    const double gs = p - label;
    for (int i = 0; i < d; ++i) {
      const size_t k = static_cast<size_t>(i);
      const double gh = gs * r[k] * e[k];
      const double gr = gs * h[k] * e[k];
      const double gt = gs * h[k] * r[k];
      h[k] -= lr * gh;
      r[k] -= lr * gr;
      e[k] -= lr * gt;
    }
    return label > 0.5 ? -std::log(std::max(p, 1e-300)) : -std::log(std::max(1.0 - p, 1e-300));
  };

  KgeTrainResult result;
  std::vector<size_t> order(graph.triples().size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss = 0.0;
    for (size_t idx : order) {
      const Triple& pos = graph.triples()[idx];
      loss += sgd_triple(pos, 1.0, config.lr);
      for (int neg = 0; neg < config.negatives_per_positive; ++neg) {
        Triple corrupt = pos;
        if (rng.below(2) == 0) corrupt.head = rng.below(ne);
        else corrupt.tail = rng.below(ne);
        if (graph.has_triple(corrupt.head, corrupt.relation, corrupt.tail)) continue;
        loss += sgd_triple(corrupt, 0.0, config.lr);
      }
    }
    result.epoch_losses.push_back(loss / static_cast<double>(order.size()));
  }

  result.table.dimension = d;
  for (int e = 0; e < ne; ++e) result.table.entity_vectors[e] = ent[static_cast<size_t>(e)];
  for (int r = 0; r < nr; ++r) result.table.relation_vectors[r] = rel[static_cast<size_t>(r)];
  return result;
}

KgeMetrics evaluate_kge(const std::vector<Triple>& test_triples, const EmbeddingTable& table,
                        const KnowledgeGraph& graph) {
  if (test_triples.empty()) throw Error("evaluate_kge: no test triples");
  for (const auto& t : test_triples)
    if (!table.has_entity(t.head) || !table.has_entity(t.tail) ||
        !table.relation_vectors.count(t.relation))
      throw Error("evaluate_kge: test triple references an unembedded entity or relation");

  std::unordered_set<std::uint64_t> known;
  auto key = [](int h, int r, int t) {
    return (static_cast<std::uint64_t>(h) << 42) | (static_cast<std::uint64_t>(r) << 21) |
           static_cast<std::uint64_t>(t);
  };
  for (const auto& t : graph.triples()) known.insert(key(t.head, t.relation, t.tail));
  for (const auto& t : test_triples) known.insert(key(t.head, t.relation, t.tail));

  KgeMetrics m;
  for (const auto& t : test_triples) {
    const auto& h = table.entity_vectors.at(t.head);
    const auto& r = table.relation_vectors.at(t.relation);
    const double gold = bilinear_score(h, r, table.entity_vectors.at(t.tail));
    int rank = 1;
    for (int cand = 0; cand < graph.entity_count(); ++cand) {
      if (cand == t.tail || !table.has_entity(cand)) continue;
      if (known.count(key(t.head, t.relation, cand))) continue;  // filtered setting
      if (bilinear_score(h, r, table.entity_vectors.at(cand)) > gold) ++rank;
    }
    m.mrr += 1.0 / rank;
    m.hits1 += rank <= 1;
    m.hits3 += rank <= 3;
    m.hits10 += rank <= 10;
  }
  const double n = static_cast<double>(test_triples.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

}  // namespace kelm
