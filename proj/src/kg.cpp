#include "kelm/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kelm {

namespace {
std::uint64_t triple_key(int h, int r, int t) {
  // 21 bits apiece is plenty for desk-scale graphs
  return (static_cast<std::uint64_t>(h) << 42) | (static_cast<std::uint64_t>(r) << 21) |
         static_cast<std::uint64_t>(t);
}
}  // namespace

std::optional<int> KnowledgeGraph::entity_id(const std::string& name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> KnowledgeGraph::relation_id(const std::string& name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

int KnowledgeGraph::intern_entity(const std::string& name) {
  auto it = entity_ids_.find(name);
  if (it != entity_ids_.end()) return it->second;
  const int id = entity_count();
  entity_ids_.emplace(name, id);
  entity_names_.push_back(name);
  out_.emplace_back();
  in_.emplace_back();
  return id;
}

int KnowledgeGraph::intern_relation(const std::string& name) {
  auto it = relation_ids_.find(name);
  if (it != relation_ids_.end()) return it->second;
  const int id = relation_count();
  relation_ids_.emplace(name, id);
  relation_names_.push_back(name);
  return id;
}

bool KnowledgeGraph::add_triple(int head, int relation, int tail) {
  if (head < 0 || head >= entity_count() || tail < 0 || tail >= entity_count() ||
      relation < 0 || relation >= relation_count())
    throw Error("add_triple: id out of range");
  if (!triple_keys_.insert(triple_key(head, relation, tail)).second) return false;
  triples_.push_back({head, relation, tail});
  out_[static_cast<size_t>(head)].push_back({relation, tail});
  in_[static_cast<size_t>(tail)].push_back({relation, head});
  return true;
}

bool KnowledgeGraph::has_triple(int head, int relation, int tail) const {
  return triple_keys_.count(triple_key(head, relation, tail)) > 0;
}

KnowledgeGraph parse_triples(std::istream& in, const std::string& origin) {
  KnowledgeGraph g;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos)
      throw Error(origin + ":" + std::to_string(line_no) +
                  ": expected head<TAB>relation<TAB>tail");
    const std::string head = line.substr(0, t1);
    const std::string rel = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string tail = line.substr(t2 + 1);
    if (head.empty() || rel.empty() || tail.empty())
      throw Error(origin + ":" + std::to_string(line_no) + ": empty field");
    const int h = g.intern_entity(head);
    const int r = g.intern_relation(rel);
    const int t = g.intern_entity(tail);
    g.add_triple(h, r, t);
  }
  if (g.triples().empty()) throw Error(origin + ": no triples");
  return g;
}

KnowledgeGraph load_triples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open triples file " + path);
  return parse_triples(is, path);
}

std::string serialize_triples(const KnowledgeGraph& graph) {
  std::string out;
  for (const auto& t : graph.triples()) {
    out += graph.entity_name(t.head);
    out += '\t';
    out += graph.relation_name(t.relation);
    out += '\t';
    out += graph.entity_name(t.tail);
    out += '\n';
  }
  return out;
}

Subgraph khop_subgraph(const KnowledgeGraph& graph, const std::vector<int>& seeds, int k,
                       const std::optional<std::unordered_set<int>>& relation_filter) {
  if (seeds.empty()) throw Error("khop_subgraph: no seeds");
  if (k < 0) throw Error("khop_subgraph: negative hop count");
  for (int s : seeds)
    if (s < 0 || s >= graph.entity_count())
      throw Error("khop_subgraph: unknown seed entity id " + std::to_string(s));

  std::unordered_map<int, int> hop;  // entity -> hop distance
  std::vector<int> frontier;
  std::vector<int> seed_list;
  for (int s : seeds) {
    if (hop.emplace(s, 0).second) {
      frontier.push_back(s);
      seed_list.push_back(s);
    }
  }
  for (int depth = 1; depth <= k && !frontier.empty(); ++depth) {
    std::vector<int> next;
    for (int e : frontier) {
      for (const auto& edge : graph.outgoing(e))
        if (hop.emplace(edge.neighbor, depth).second) next.push_back(edge.neighbor);
      for (const auto& edge : graph.incoming(e))
        if (hop.emplace(edge.neighbor, depth).second) next.push_back(edge.neighbor);
    }
    frontier = std::move(next);
  }

  Subgraph sg;
  std::sort(seed_list.begin(), seed_list.end());
  sg.nodes = seed_list;
  std::vector<std::pair<int, int>> rest;  // (hop, entity)
  for (const auto& [entity, h] : hop)
    if (h > 0) rest.emplace_back(h, entity);
  std::sort(rest.begin(), rest.end());
  for (const auto& [h, entity] : rest) sg.nodes.push_back(entity);

  std::unordered_map<int, int> index;
  for (size_t i = 0; i < sg.nodes.size(); ++i) index.emplace(sg.nodes[i], static_cast<int>(i));
  sg.hop_of.resize(sg.nodes.size());
  for (size_t i = 0; i < sg.nodes.size(); ++i) sg.hop_of[i] = hop[sg.nodes[i]];
  for (size_t i = 0; i < seed_list.size(); ++i) sg.seed_indices.push_back(static_cast<int>(i));

  for (size_t i = 0; i < sg.nodes.size(); ++i) {
    const int src = sg.nodes[i];
    for (const auto& edge : graph.outgoing(src)) {
      auto it = index.find(edge.neighbor);
      if (it == index.end()) continue;
      if (relation_filter && !relation_filter->count(edge.relation)) continue;
      sg.edges.push_back({static_cast<int>(i), edge.relation, it->second});
    }
  }
  return sg;
}

}  // namespace kelm
