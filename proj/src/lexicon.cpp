#include "kelm/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace kelm {

NameNormalizer normalizer_from_string(const std::string& name) {
  if (name == "wordnet") return NameNormalizer::WordNet;
  if (name == "plain") return NameNormalizer::Plain;
  throw Error("unknown name normalizer: " + name + " (expected wordnet or plain)");
}

std::string normalize_entity_name(const std::string& name, NameNormalizer rule) {
  std::string base = name;
  if (rule == NameNormalizer::WordNet) {
    // strip `.pos.sense`, e.g. ford.n.05 -> ford
    const size_t last = base.rfind('.');
    if (last != std::string::npos) {
      const size_t prev = base.rfind('.', last - 1);
      if (prev != std::string::npos && prev > 0) {
        const std::string pos = base.substr(prev + 1, last - prev - 1);
        const std::string sense = base.substr(last + 1);
        const bool pos_ok = !pos.empty() && std::all_of(pos.begin(), pos.end(), [](char c) {
          return std::isalpha(static_cast<unsigned char>(c));
        });
        const bool sense_ok = !sense.empty() && std::all_of(sense.begin(), sense.end(), [](char c) {
          return std::isdigit(static_cast<unsigned char>(c));
        });
        if (pos_ok && sense_ok) base = base.substr(0, prev);
      }
    }
  }
  std::string out;
  out.reserve(base.size());
  for (char c : base) out += c == '_' ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Lexicon build_lexicon(const KnowledgeGraph& graph, NameNormalizer rule) {
  Lexicon lex;
  for (int e = 0; e < graph.entity_count(); ++e) {
    std::string surface = normalize_entity_name(graph.entity_name(e), rule);
    if (surface.empty()) continue;
    lex[surface].push_back(e);
  }
  return lex;  // per-surface lists are already in id order
}

void merge_lexicon_override(Lexicon& lexicon, const KnowledgeGraph& graph,
                            const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open lexicon override " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(path + ":" + std::to_string(line_no) + ": expected surface<TAB>entities");
    const std::string surface = line.substr(0, tab);
    std::vector<int> ids;
    std::string names = line.substr(tab + 1);
    size_t pos = 0;
    while (pos <= names.size()) {
      size_t comma = names.find(',', pos);
      if (comma == std::string::npos) comma = names.size();
      const std::string name = names.substr(pos, comma - pos);
      if (!name.empty()) {
        auto id = graph.entity_id(name);
        if (!id)
          throw Error(path + ":" + std::to_string(line_no) + ": unknown entity " + name);
        ids.push_back(*id);
      }
      pos = comma + 1;
    }
    if (ids.empty())
      throw Error(path + ":" + std::to_string(line_no) + ": no entities for " + surface);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    lexicon[surface] = std::move(ids);
  }
}

std::vector<MentionAnnotation> find_mentions(const TokenizedText& text, const Lexicon& lexicon,
                                             int kg_index) {
  static constexpr int kMaxNgram = 4;
  std::vector<MentionAnnotation> out;
  const int n = text.size();
  int i = 0;
  while (i < n) {
    if (text.is_special(i)) {
      ++i;
      continue;
    }
    int matched_len = 0;
    const std::vector<int>* matched_ids = nullptr;
    std::string matched_surface;
    std::string surface;
    for (int len = 1; len <= kMaxNgram && i + len <= n; ++len) {
      const int j = i + len - 1;
      if (text.is_special(j)) break;
      if (len > 1) surface += ' ';
      surface += text.tokens[static_cast<size_t>(j)];
      auto it = lexicon.find(surface);
      if (it != lexicon.end() && !it->second.empty()) {
        matched_len = len;
        matched_ids = &it->second;
        matched_surface = surface;
      }
    }
    if (matched_len > 0) {
      out.push_back({kg_index, i, i + matched_len - 1, matched_surface, *matched_ids});
      i += matched_len;
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace kelm
