#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kelm/tensor.hpp"

namespace kelm {

enum class Segment { CLS, QUESTION, ANSWER, SEP, PASSAGE };

// Lowercased word/punctuation tokens laid out as
// [CLS] question (answer) [SEP] passage [SEP].
// Character offsets index a virtual string `question + " " + answer + " " +
// passage`; passage_char_base converts passage-relative offsets.
struct TokenizedText {
  std::vector<std::string> tokens;
  std::vector<std::pair<int, int>> char_offsets;  // [start, end)
  std::vector<Segment> segments;
  int passage_char_base = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  bool is_special(int i) const {
    return segments[static_cast<size_t>(i)] == Segment::CLS ||
           segments[static_cast<size_t>(i)] == Segment::SEP;
  }
  bool is_passage(int i) const { return segments[static_cast<size_t>(i)] == Segment::PASSAGE; }
};

// Lowercase word-and-punctuation split of a raw string, with offsets.
std::vector<std::pair<std::string, std::pair<int, int>>> basic_tokens(const std::string& text);

// Truncation drops passage tokens from `passage_offset` onward so the layout
// always ends with [SEP]; the question/answer block is never cut. A block too
// long to leave room for any passage token is an error.
TokenizedText tokenize(const std::string& question, const std::optional<std::string>& answer,
                       const std::string& passage, int max_seq_len, int passage_offset = 0);

// Number of passage tokens that fit alongside this question/answer block.
int passage_capacity(const std::string& question, const std::optional<std::string>& answer,
                     int max_seq_len);

}  // namespace kelm
