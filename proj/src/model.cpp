#include "kelm/model.hpp"

namespace kelm {

KelmModel KelmModel::build(const Pipeline& pipeline, Vocab vocab) {
  const RunConfig& cfg = pipeline.config;
  KelmModel model;
  model.vocab = std::move(vocab);
  model.hmp_options.rgcn_layers = cfg.rgcn_layers;
  model.hmp_options.rgcn_self_loop = cfg.rgcn_self_loop;
  model.hmp_options.leaky_slope = cfg.leaky_slope;
  model.hmp_options.static_average = cfg.ablation == Ablation::StaticAverage;

  model.d_k = cfg.encoder.d_t;
  for (const auto& table : pipeline.tables) model.d_k += table.dimension;

  Rng rng(cfg.seed);
  init_encoder_params(cfg.encoder, model.vocab.size(), model.params, rng);
  for (size_t q = 0; q < pipeline.graphs.size(); ++q)
    init_kg_params(static_cast<int>(q) + 1, pipeline.graphs[q].relation_count(),
                   pipeline.tables[q].dimension, cfg.encoder.d_t, model.hmp_options, model.params,
                   rng);
  init_selfmatch_params(model.d_k, model.params, rng);
  if (cfg.task == Task::Extractive) init_span_head_params(6 * model.d_k, model.params, rng);
  else init_choice_head_params(6 * model.d_k, model.params, rng);
  return model;
}

bool trainable_in_stage1(const std::string& param_name) {
  return param_name.rfind("encoder.", 0) != 0;
}

namespace {

std::string precomputed_key(const CompiledExample& ex) {
  std::string key = ex.example_id;
  if (ex.option_index >= 0) key += "#o" + std::to_string(ex.option_index);
  else if (ex.chunk_index > 0) key += "#c" + std::to_string(ex.chunk_index);
  return key;
}

Tensor token_representations(const KelmModel& model, const Pipeline& pipeline,
                             const CompiledExample& ex) {
  const EncoderConfig& enc = pipeline.config.encoder;
  if (enc.kind == EncoderKind::Precomputed) {
    Tensor h = load_precomputed(enc.precomputed_path, precomputed_key(ex));
    if (h.dim(0) != ex.text.size())
      throw Error("precomputed block for " + precomputed_key(ex) + " has " +
                  std::to_string(h.dim(0)) + " rows, tokenization has " +
                  std::to_string(ex.text.size()));
    if (h.dim(1) != enc.d_t)
      throw Error("precomputed block for " + precomputed_key(ex) + " has width " +
                  std::to_string(h.dim(1)) + ", encoder.d_t is " + std::to_string(enc.d_t));
    return h;
  }
  return encode_tokens(ex.text, enc, model.vocab, model.params);
}

}  // namespace

ForwardOutput model_forward(const KelmModel& model, const Pipeline& pipeline,
                            const CompiledExample& example) {
  ForwardOutput out;
  Tensor h_t = token_representations(model, pipeline, example);
  std::vector<const EmbeddingTable*> tables;
  for (const auto& t : pipeline.tables) tables.push_back(&t);
  HmpResult hmp = hmp_forward(h_t, example.uket, tables, model.params, model.hmp_options);
  out.h_f = hmp.h_f;
  out.attentions = std::move(hmp.attentions);

  if (pipeline.config.task == Task::Extractive) {
    out.spans = span_distributions(out.h_f, model.params.get("head.span.ws"),
                                   model.params.get("head.span.we"), example.passage_mask);
  } else {
    out.option_prob = choice_probability(gather(out.h_f, {0}), model.params.get("head.choice.w"),
                                         model.params.get("head.choice.b"));
  }
  return out;
}

Tensor example_loss(const KelmModel& model, const ForwardOutput& out,
                    const CompiledExample& example) {
  (void)model;
  if (example.option_index >= 0) return choice_loss(out.option_prob, example.label);
  if (example.gold_start < 0)
    throw Error("example " + example.example_id + ": no gold span in this chunk");
  return span_loss({out.spans}, {{example.gold_start, example.gold_end}}, {example.passage_mask});
}

SpanPrediction predict_span(const KelmModel& model, const Pipeline& pipeline,
                            const std::vector<CompiledExample>& chunks,
                            const std::string& passage) {
  if (chunks.empty()) throw Error("predict_span: no chunks");
  SpanPrediction best;
  best.score = -1.0;
  for (const auto& chunk : chunks) {
    ForwardOutput out = model_forward(model, pipeline, chunk);
    const auto& ps = out.spans.p_start.values();
    const auto& pe = out.spans.p_end.values();
    auto [a, b] = decode_span(ps, pe, pipeline.config.max_answer_len);
    const double score = ps[static_cast<size_t>(a)] * pe[static_cast<size_t>(b)];
    if (score > best.score) {
      best.score = score;
      best.start_char = chunk.text.char_offsets[static_cast<size_t>(a)].first - chunk.text.passage_char_base;
      best.end_char = chunk.text.char_offsets[static_cast<size_t>(b)].second - chunk.text.passage_char_base;
    }
  }
  best.start_char = std::max(0, std::min(best.start_char, static_cast<int>(passage.size())));
  best.end_char = std::max(best.start_char, std::min(best.end_char, static_cast<int>(passage.size())));
  best.text = passage.substr(static_cast<size_t>(best.start_char),
                             static_cast<size_t>(best.end_char - best.start_char));
  return best;
}

double predict_option(const KelmModel& model, const Pipeline& pipeline,
                      const CompiledExample& option) {
  return model_forward(model, pipeline, option).option_prob.item();
}

}  // namespace kelm
