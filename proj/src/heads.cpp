#include "kelm/heads.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace kelm {

void init_span_head_params(int width, ModelParams& params, Rng& rng) {
  params.add("head.span.ws", glorot_uniform({width, 1}, rng));
  params.add("head.span.we", glorot_uniform({width, 1}, rng));
}

void init_choice_head_params(int width, ModelParams& params, Rng& rng) {
  params.add("head.choice.w", glorot_uniform({width, 1}, rng));
  params.add("head.choice.b", Tensor::zeros({1, 1}, true));
}

SpanDistributions span_distributions(const Tensor& h_f, const Tensor& w_s, const Tensor& w_e,
                                     const std::vector<std::uint8_t>& passage_mask) {
  const int n = h_f.dim(0);
  if (static_cast<int>(passage_mask.size()) != n)
    throw Error("span_distributions: mask length != token count");
  std::vector<std::uint8_t> excluded(static_cast<size_t>(n));
  int eligible = 0;
  for (int i = 0; i < n; ++i) {
    excluded[static_cast<size_t>(i)] = passage_mask[static_cast<size_t>(i)] ? 0 : 1;
    eligible += passage_mask[static_cast<size_t>(i)];
  }
  if (eligible == 0) throw Error("span_distributions: no eligible positions");

  SpanDistributions out;
  out.p_start = softmax(transpose(matmul(h_f, w_s)), 1, excluded);  // 1 x n
  out.p_end = softmax(transpose(matmul(h_f, w_e)), 1, excluded);
  return out;
}

namespace {

Tensor pick_log_prob(const Tensor& p_row, int index, const std::vector<std::uint8_t>& mask,
                     const char* which) {
  const int n = p_row.dim(1);
  if (index < 0 || index >= n || !mask[static_cast<size_t>(index)])
    throw Error(std::string("span_loss: gold ") + which + " position " + std::to_string(index) +
                " is not an eligible passage token");
  std::vector<double> onehot(static_cast<size_t>(n), 0.0);
  onehot[static_cast<size_t>(index)] = 1.0;
  return log(matmul(p_row, Tensor::of({n, 1}, std::move(onehot))));
}

}  // namespace

Tensor span_loss(const std::vector<SpanDistributions>& dists,
                 const std::vector<std::pair<int, int>>& gold,
                 const std::vector<std::vector<std::uint8_t>>& passage_masks) {
  if (dists.empty() || dists.size() != gold.size() || gold.size() != passage_masks.size())
    throw Error("span_loss: batch lists disagree");
  std::vector<Tensor> terms;
  for (size_t i = 0; i < dists.size(); ++i) {
    terms.push_back(pick_log_prob(dists[i].p_start, gold[i].first, passage_masks[i], "start"));
    terms.push_back(pick_log_prob(dists[i].p_end, gold[i].second, passage_masks[i], "end"));
  }
  return scale(sum(concat(terms, 0)), -1.0 / static_cast<double>(dists.size()));
}

std::pair<int, int> decode_span(const std::vector<double>& p_start,
                                const std::vector<double>& p_end, int max_answer_len) {
  if (p_start.empty() || p_start.size() != p_end.size())
    throw Error("decode_span: distribution lengths disagree");
  if (max_answer_len < 1) throw Error("decode_span: max_answer_len must be >= 1");
  const int n = static_cast<int>(p_start.size());
  int best_a = 0, best_b = 0;
  double best = -1.0;
  for (int a = 0; a < n; ++a) {
    const int limit = std::min(n - 1, a + max_answer_len - 1);
    for (int b = a; b <= limit; ++b) {
      const double score = p_start[static_cast<size_t>(a)] * p_end[static_cast<size_t>(b)];
      if (score > best) {
        best = score;
        best_a = a;
        best_b = b;
      }
    }
  }
  return {best_a, best_b};
}

Tensor choice_probability(const Tensor& h_cls_row, const Tensor& w, const Tensor& bias) {
  return sigmoid(add(matmul(h_cls_row, w), bias));
}

Tensor choice_loss(const Tensor& probability, int label) {
  if (label == 1) return scale(log(probability), -1.0);
  Tensor one = Tensor::of({1, 1}, {1.0});
  return scale(log(sub(one, probability)), -1.0);
}

std::string normalize_answer(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    lowered += static_cast<char>(std::tolower(u));
  }
  std::istringstream is(lowered);
  std::string word, out;
  while (is >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

namespace {

std::vector<std::string> answer_tokens(const std::string& normalized) {
  std::vector<std::string> toks;
  std::istringstream is(normalized);
  std::string w;
  while (is >> w) toks.push_back(w);
  return toks;
}

double token_f1(const std::string& pred, const std::string& gold) {
  const auto p = answer_tokens(pred);
  const auto g = answer_tokens(gold);
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 1.0 : 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

ExtractiveMetrics metrics_extractive(const std::vector<std::string>& predictions,
                                     const std::vector<std::vector<std::string>>& golds) {
  if (predictions.size() != golds.size()) throw Error("metrics_extractive: list sizes disagree");
  if (predictions.empty()) throw Error("metrics_extractive: no examples");
  ExtractiveMetrics m;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const std::string pred = normalize_answer(predictions[i]);
    double best_f1 = 0.0;
    bool exact = false;
    for (const auto& gold_text : golds[i]) {
      const std::string gold = normalize_answer(gold_text);
      exact = exact || pred == gold;
      best_f1 = std::max(best_f1, token_f1(pred, gold));
    }
    m.em += exact ? 1.0 : 0.0;
    m.f1 += best_f1;
  }
  m.em /= static_cast<double>(predictions.size());
  m.f1 /= static_cast<double>(predictions.size());
  return m;
}

MultircMetrics metrics_multirc(const std::vector<std::vector<int>>& predictions,
                               const std::vector<std::vector<int>>& golds) {
  if (predictions.size() != golds.size()) throw Error("metrics_multirc: list sizes disagree");
  if (predictions.empty()) throw Error("metrics_multirc: no questions");
  MultircMetrics m;
  long long tp = 0, fp = 0, fn = 0;
  for (size_t qi = 0; qi < predictions.size(); ++qi) {
    const auto& pred = predictions[qi];
    const auto& gold = golds[qi];
    if (pred.empty() || pred.size() != gold.size())
      throw Error("metrics_multirc: question " + std::to_string(qi) +
                  " has mismatched or empty options");
    bool all_correct = true;
    for (size_t oi = 0; oi < pred.size(); ++oi) {
      if (pred[oi] != gold[oi]) all_correct = false;
      if (pred[oi] == 1 && gold[oi] == 1) ++tp;
      if (pred[oi] == 1 && gold[oi] == 0) ++fp;
      if (pred[oi] == 0 && gold[oi] == 1) ++fn;
    }
    m.em += all_correct ? 1.0 : 0.0;
  }
  m.em /= static_cast<double>(predictions.size());
  m.f1a = (2.0 * tp + fp + fn) == 0 ? 1.0
                                    : 2.0 * static_cast<double>(tp) /
                                          (2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                                           static_cast<double>(fn));
  return m;
}

}  // namespace kelm
