#pragma once

#include <map>
#include <string>
#include <vector>

#include "kelm/kg.hpp"
#include "kelm/text.hpp"

namespace kelm {

// Surface string -> ids of every entity sharing that surface (the ambiguity
// set, ordered by entity id).
using Lexicon = std::map<std::string, std::vector<int>>;

enum class NameNormalizer { WordNet, Plain };
NameNormalizer normalizer_from_string(const std::string& name);

// WordNet rule strips a trailing `.pos.sense` suffix and maps underscores to
// spaces; Plain only lowercases and maps underscores.
std::string normalize_entity_name(const std::string& name, NameNormalizer rule);

Lexicon build_lexicon(const KnowledgeGraph& graph, NameNormalizer rule);

// Optional override file: `surface<TAB>entity1,entity2,...` per line, merged
// over the derived lexicon (override wins per surface).
void merge_lexicon_override(Lexicon& lexicon, const KnowledgeGraph& graph,
                            const std::string& path);

struct MentionAnnotation {
  int kg_index = 0;
  int first_token = 0;
  int last_token = 0;  // inclusive
  std::string surface;
  std::vector<int> candidates;  // ambiguous mentioned entities, by id
};

// Greedy longest-match left to right over token n-grams (n <= 4). Matches
// never overlap and special tokens are never part of a match.
std::vector<MentionAnnotation> find_mentions(const TokenizedText& text, const Lexicon& lexicon,
                                             int kg_index);

}  // namespace kelm
