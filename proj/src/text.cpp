#include "kelm/text.hpp"

#include <cctype>

namespace kelm {

std::vector<std::pair<std::string, std::pair<int, int>>> basic_tokens(const std::string& text) {
  std::vector<std::pair<std::string, std::pair<int, int>>> out;
  const int n = static_cast<int>(text.size());
  int i = 0;
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[static_cast<size_t>(i)]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (std::ispunct(c)) {
      out.push_back({std::string(1, static_cast<char>(std::tolower(c))), {i, i + 1}});
      ++i;
      continue;
    }
    const int start = i;
    std::string tok;
    while (i < n) {
      const unsigned char cc = static_cast<unsigned char>(text[static_cast<size_t>(i)]);
      if (std::isspace(cc) || std::ispunct(cc)) break;
      tok += static_cast<char>(std::tolower(cc));
      ++i;
    }
    out.push_back({tok, {start, i}});
  }
  return out;
}

int passage_capacity(const std::string& question, const std::optional<std::string>& answer,
                     int max_seq_len) {
  int fixed = 1 /*CLS*/ + static_cast<int>(basic_tokens(question).size()) + 1 /*SEP*/ + 1 /*final SEP*/;
  if (answer) fixed += static_cast<int>(basic_tokens(*answer).size());
  return max_seq_len - fixed;
}

TokenizedText tokenize(const std::string& question, const std::optional<std::string>& answer,
                       const std::string& passage, int max_seq_len, int passage_offset) {
  if (passage.empty()) throw Error("tokenize: empty passage");

  const int capacity = passage_capacity(question, answer, max_seq_len);
  if (capacity < 1)
    throw Error("tokenize: question/answer block leaves no room within max_seq_len=" +
                std::to_string(max_seq_len));

  TokenizedText t;
  const int q_base = 0;
  const int a_base = static_cast<int>(question.size()) + 1;
  const int p_base = answer ? a_base + static_cast<int>(answer->size()) + 1 : a_base;
  t.passage_char_base = p_base;

  auto push = [&](const std::string& tok, int start, int end, Segment seg) {
    t.tokens.push_back(tok);
    t.char_offsets.push_back({start, end});
    t.segments.push_back(seg);
  };

  push("[CLS]", 0, 0, Segment::CLS);
  for (const auto& [tok, span] : basic_tokens(question))
    push(tok, q_base + span.first, q_base + span.second, Segment::QUESTION);
  if (answer)
    for (const auto& [tok, span] : basic_tokens(*answer))
      push(tok, a_base + span.first, a_base + span.second, Segment::ANSWER);
  {
    const int at = answer ? a_base + static_cast<int>(answer->size()) : a_base - 1;
    push("[SEP]", at < 0 ? 0 : at, at < 0 ? 0 : at, Segment::SEP);
  }

  auto ptoks = basic_tokens(passage);
  if (passage_offset < 0 || passage_offset >= static_cast<int>(ptoks.size()))
    throw Error("tokenize: passage offset " + std::to_string(passage_offset) + " out of range");
  const int take = std::min<int>(capacity, static_cast<int>(ptoks.size()) - passage_offset);
  int last_end = p_base;
  for (int i = 0; i < take; ++i) {
    const auto& [tok, span] = ptoks[static_cast<size_t>(passage_offset + i)];
    push(tok, p_base + span.first, p_base + span.second, Segment::PASSAGE);
    last_end = p_base + span.second;
  }
  push("[SEP]", last_end, last_end, Segment::SEP);
  return t;
}

}  // namespace kelm
