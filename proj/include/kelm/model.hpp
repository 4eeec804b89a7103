#pragma once

#include "kelm/dataset.hpp"
#include "kelm/heads.hpp"
#include "kelm/hmp.hpp"

namespace kelm {

// All trainable state plus the knobs needed to run a forward pass.
struct KelmModel {
  Vocab vocab;
  ModelParams params;
  HmpOptions hmp_options;
  int d_k = 0;  // d_t + sum of KG dimensions

  static KelmModel build(const Pipeline& pipeline, Vocab vocab);
};

// Stage 1 freezes the text encoder and trains only HMP and head parameters.
bool trainable_in_stage1(const std::string& param_name);

struct ForwardOutput {
  Tensor h_f;
  std::vector<TokenAttention> attentions;
  SpanDistributions spans;  // extractive
  Tensor option_prob;       // multi-response
};

ForwardOutput model_forward(const KelmModel& model, const Pipeline& pipeline,
                            const CompiledExample& example);

// One example's loss contribution (span NLL or option BCE).
Tensor example_loss(const KelmModel& model, const ForwardOutput& out,
                    const CompiledExample& example);

struct SpanPrediction {
  std::string text;
  int start_char = 0;  // passage-relative
  int end_char = 0;
  double score = 0.0;
};

// Best span across an example's chunks, mapped back to passage characters.
SpanPrediction predict_span(const KelmModel& model, const Pipeline& pipeline,
                            const std::vector<CompiledExample>& chunks,
                            const std::string& passage);

double predict_option(const KelmModel& model, const Pipeline& pipeline,
                      const CompiledExample& option);

}  // namespace kelm
