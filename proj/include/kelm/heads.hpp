#pragma once

#include <string>
#include <vector>

#include "kelm/params.hpp"
#include "kelm/tensor.hpp"

namespace kelm {

void init_span_head_params(int width, ModelParams& params, Rng& rng);
void init_choice_head_params(int width, ModelParams& params, Rng& rng);

struct SpanDistributions {
  Tensor p_start;  // n, zero outside the eligible positions
  Tensor p_end;
};

// Masked softmax of w_s/w_e logits over the eligible (passage) positions.
SpanDistributions span_distributions(const Tensor& h_f, const Tensor& w_s, const Tensor& w_e,
                                     const std::vector<std::uint8_t>& passage_mask);

// Mean over the batch of -(log p_start[y_s] + log p_end[y_e]).
Tensor span_loss(const std::vector<SpanDistributions>& dists,
                 const std::vector<std::pair<int, int>>& gold,
                 const std::vector<std::vector<std::uint8_t>>& passage_masks);

// Argmax of p_a * p_b over a <= b < a + max_answer_len; ties prefer the
// smaller a, then the smaller b.
std::pair<int, int> decode_span(const std::vector<double>& p_start,
                                const std::vector<double>& p_end, int max_answer_len);

// sigmoid(w . h + b)
Tensor choice_probability(const Tensor& h_cls_row, const Tensor& w, const Tensor& bias);
// Binary cross-entropy of one option probability against its 0/1 label.
Tensor choice_loss(const Tensor& probability, int label);

struct ExtractiveMetrics {
  double em = 0.0;
  double f1 = 0.0;
};

// SQuAD-style normalization: lowercase, strip punctuation and articles,
// collapse whitespace.
std::string normalize_answer(const std::string& text);

// Macro-averaged EM and token F1, max over multiple golds per example.
ExtractiveMetrics metrics_extractive(const std::vector<std::string>& predictions,
                                     const std::vector<std::vector<std::string>>& golds);

struct MultircMetrics {
  double em = 0.0;   // questions with every option correct
  double f1a = 0.0;  // micro-averaged option F1
};

MultircMetrics metrics_multirc(const std::vector<std::vector<int>>& predictions,
                               const std::vector<std::vector<int>>& golds);

}  // namespace kelm
