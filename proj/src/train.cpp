#include "kelm/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kelm/checkpoint.hpp"

namespace kelm {

using nlohmann::json;

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open manifest " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(path + ": bad JSON: " + e.what());
  }
  Manifest out;
  for (const auto& [id, entries] : j.at("examples").items()) {
    for (const auto& e : entries) {
      GoldSense g;
      g.kg = e.at("kg").get<int>();
      g.surface = e.at("surface").get<std::string>();
      g.gold_entity = e.at("gold").get<std::string>();
      out[id].push_back(std::move(g));
    }
  }
  return out;
}

void Adam::step(ModelParams& params, double lr,
                const std::function<bool(const std::string&)>& trainable) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto [name, tensor] : params.entries()) {
    if (!trainable(name)) continue;
    auto& [m, v] = moments_[name];
    auto& vals = tensor.values();
    auto& grads = tensor.grad();
    if (m.size() != vals.size()) {
      m.assign(vals.size(), 0.0);
      v.assign(vals.size(), 0.0);
    }
    for (size_t i = 0; i < vals.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grads[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
      vals[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

namespace {

struct DisambTally {
  int correct = 0;
  int total = 0;
};

// score argmax-alpha candidates of every covered mention token against the
// manifest's gold senses
void tally_disambiguation(const ForwardOutput& out, const CompiledExample& ex,
                          const Pipeline& pipeline, const Manifest& manifest, DisambTally& tally) {
  auto it = manifest.find(ex.example_id);
  if (it == manifest.end()) return;
  for (const auto& att : out.attentions) {
    // the mention covering this token, in this KG
    const auto& mention_list = ex.mentions[static_cast<size_t>(att.kg - 1)];
    const MentionAnnotation* mention = nullptr;
    for (const auto& m : mention_list)
      if (m.first_token <= att.token && att.token <= m.last_token) mention = &m;
    if (!mention) continue;

    const GoldSense* gold = nullptr;
    for (const auto& g : it->second)
      if (g.kg == att.kg && g.surface == mention->surface) gold = &g;
    if (!gold) continue;

    auto gold_id = pipeline.graphs[static_cast<size_t>(att.kg - 1)].entity_id(gold->gold_entity);
    if (!gold_id) continue;

    int argmax = 0;
    for (int j = 1; j < att.alphas.dim(1); ++j)
      if (att.alphas.at(0, j) > att.alphas.at(0, argmax)) argmax = j;
    const int picked = att.candidate_entities[static_cast<size_t>(argmax)];
    ++tally.total;
    if (picked == *gold_id) ++tally.correct;
  }
}

double stage2_lr(const StageConfig& stage, long long step, long long total_steps) {
  const long long warmup =
      std::max<long long>(1, std::llround(stage.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return stage.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps <= warmup) return stage.lr;
  return stage.lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

}  // namespace

EvalReport evaluate_model(const KelmModel& model, const Pipeline& pipeline,
                          const std::string& dataset_path, const Manifest* manifest) {
  EvalReport report;
  report.task = pipeline.config.task;
  DisambTally tally;

  if (pipeline.config.task == Task::Extractive) {
    auto records = load_extractive_jsonl(dataset_path);
    std::vector<std::string> predictions;
    std::vector<std::vector<std::string>> golds;
    for (const auto& record : records) {
      auto chunks = compile_extractive(record, pipeline, /*for_training=*/false);
      auto pred = predict_span(model, pipeline, chunks, record.passage);
      predictions.push_back(pred.text);
      golds.push_back(chunks.front().gold_texts);
      if (manifest)
        for (const auto& chunk : chunks)
          tally_disambiguation(model_forward(model, pipeline, chunk), chunk, pipeline, *manifest,
                               tally);
    }
    auto m = metrics_extractive(predictions, golds);
    report.em = m.em;
    report.f1 = m.f1;
  } else {
    auto records = load_multi_jsonl(dataset_path);
    std::vector<std::vector<int>> predictions, golds;
    for (const auto& record : records) {
      auto options = compile_multi(record, pipeline);
      std::vector<int> pred, gold;
      for (const auto& option : options) {
        ForwardOutput out = model_forward(model, pipeline, option);
        pred.push_back(out.option_prob.item() >= 0.5 ? 1 : 0);
        gold.push_back(option.label);
        if (manifest) tally_disambiguation(out, option, pipeline, *manifest, tally);
      }
      predictions.push_back(std::move(pred));
      golds.push_back(std::move(gold));
    }
    auto m = metrics_multirc(predictions, golds);
    report.em = m.em;
    report.f1 = m.f1a;
  }

  report.metric_sum = report.em + report.f1;
  if (manifest && tally.total > 0) {
    report.disambiguation_accuracy = static_cast<double>(tally.correct) / tally.total;
    report.mentions_scored = tally.total;
  }
  return report;
}

TrainOutcome train_model(const Pipeline& pipeline) {
  const RunConfig& cfg = pipeline.config;
  if (cfg.train_path.empty() || cfg.dev_path.empty())
    throw Error("train: paths.train and paths.dev are required");
  std::filesystem::create_directories(cfg.out_dir);

  TrainOutcome outcome;
  outcome.best_checkpoint = cfg.out_dir + "/best.ckpt";
  outcome.last_checkpoint = cfg.out_dir + "/last.ckpt";
  outcome.vocab_path = cfg.out_dir + "/vocab.txt";
  outcome.log_path = cfg.out_dir + "/train_log.jsonl";

  // training inputs (chunks or options), flattened
  std::vector<CompiledExample> inputs;
  CompileStats stats;
  Vocab vocab;
  if (cfg.task == Task::Extractive) {
    auto records = load_extractive_jsonl(cfg.train_path);
    vocab = build_vocab_extractive(records);
    for (const auto& r : records) {
      auto chunks = compile_extractive(r, pipeline, /*for_training=*/true, &stats);
      for (auto& c : chunks) inputs.push_back(std::move(c));
    }
  } else {
    auto records = load_multi_jsonl(cfg.train_path);
    vocab = build_vocab_multi(records);
    for (const auto& r : records) {
      auto options = compile_multi(r, pipeline);
      for (auto& o : options) inputs.push_back(std::move(o));
    }
  }
  if (inputs.empty()) throw Error("train: no usable training inputs");
  outcome.rejected_examples = stats.rejected_gold_outside;

  KelmModel model = KelmModel::build(pipeline, std::move(vocab));
  model.vocab.save(outcome.vocab_path);

  Manifest manifest;
  const bool have_manifest = !cfg.manifest_path.empty();
  if (have_manifest) manifest = load_manifest(cfg.manifest_path);

  std::ofstream log(outcome.log_path, std::ios::trunc);
  if (!log) throw Error("cannot write training log " + outcome.log_path);

  Adam adam(cfg.optimizer);
  Rng shuffle_rng = Rng(cfg.seed).fork(0xBA7C4E5);
  long long global_step = 0;
  bool first_loss_seen = false;

  auto run_eval = [&](int stage) {
    EvalReport report =
        evaluate_model(model, pipeline, cfg.dev_path, have_manifest ? &manifest : nullptr);
    json entry = {{"step", global_step}, {"stage", stage},      {"event", "eval"},
                  {"dev_em", report.em}, {"dev_f1", report.f1}, {"metric", report.metric_sum}};
    if (report.disambiguation_accuracy >= 0)
      entry["disambiguation_accuracy"] = report.disambiguation_accuracy;
    log << entry.dump() << "\n";
    if (report.metric_sum > outcome.best_metric) {
      outcome.best_metric = report.metric_sum;
      outcome.best_report = report;
      save_checkpoint(model.params, outcome.best_checkpoint);
      return true;
    }
    return false;
  };

  for (int stage = 1; stage <= 2; ++stage) {
    const StageConfig& sc = stage == 1 ? cfg.stage1 : cfg.stage2;
    const long long steps_per_epoch =
        (static_cast<long long>(inputs.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long long total_steps =
        sc.max_steps > 0 ? sc.max_steps : steps_per_epoch * sc.max_epochs;
    if (total_steps <= 0) continue;

    auto trainable = [stage](const std::string& name) {
      return stage == 2 || trainable_in_stage1(name);
    };

    std::vector<size_t> order(inputs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    long long step = 0;
    int evals_without_improvement = 0;
    bool stop_stage = false;
    while (step < total_steps && !stop_stage) {
      shuffle_rng.shuffle(order);
      for (size_t start = 0; start < order.size() && step < total_steps && !stop_stage;
           start += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
        const double lr = stage == 1 ? sc.lr : stage2_lr(sc, step, total_steps);

        model.params.zero_grads();
        std::vector<Tensor> losses;
        for (size_t bi = start; bi < end; ++bi) {
          const CompiledExample& ex = inputs[order[bi]];
          losses.push_back(example_loss(model, model_forward(model, pipeline, ex), ex));
        }
        Tensor batch_loss = scale(sum(concat(losses, 0)), 1.0 / static_cast<double>(losses.size()));
        const double loss_value = batch_loss.item();
        if (!std::isfinite(loss_value))
          throw Error("train: non-finite loss at step " + std::to_string(global_step + 1));
        backward(batch_loss);
        adam.step(model.params, lr, trainable);

        ++step;
        ++global_step;
        if (!first_loss_seen) {
          outcome.first_loss = loss_value;
          first_loss_seen = true;
        }
        outcome.final_loss = loss_value;
        log << json{{"step", global_step}, {"stage", stage}, {"loss", loss_value}, {"lr", lr}}.dump()
            << "\n";

        if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) {
          const bool improved = run_eval(stage);
          evals_without_improvement = improved ? 0 : evals_without_improvement + 1;
          if (cfg.early_stop_patience > 0 && evals_without_improvement >= cfg.early_stop_patience)
            stop_stage = true;
        }
      }
    }
    // end-of-stage evaluation keeps the best checkpoint current
    run_eval(stage);
  }

  outcome.steps_run = global_step;
  save_checkpoint(model.params, outcome.last_checkpoint);
  if (outcome.best_metric < 0) {
    save_checkpoint(model.params, outcome.best_checkpoint);
    outcome.best_metric = 0.0;
  }
  return outcome;
}

}  // namespace kelm
