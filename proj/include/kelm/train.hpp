#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kelm/model.hpp"

namespace kelm {

struct EvalReport {
  Task task = Task::Extractive;
  double em = 0.0;
  double f1 = 0.0;  // token F1 (extractive) or option F1a (multi-response)
  double metric_sum = 0.0;  // EM + F1, the early-stopping metric
  double disambiguation_accuracy = -1.0;  // -1 when no manifest is configured
  int mentions_scored = 0;
};

// Gold senses per example id, read from a synthetic manifest.
struct GoldSense {
  int kg = 1;
  std::string surface;
  std::string gold_entity;
};
using Manifest = std::map<std::string, std::vector<GoldSense>>;
Manifest load_manifest(const std::string& path);

EvalReport evaluate_model(const KelmModel& model, const Pipeline& pipeline,
                          const std::string& dataset_path, const Manifest* manifest = nullptr);

struct TrainOutcome {
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::string vocab_path;
  std::string log_path;
  EvalReport best_report;
  double best_metric = -1.0;
  int rejected_examples = 0;
  long long steps_run = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
};

// Two-stage fine-tuning: stage 1 trains HMP and heads against the frozen
// encoder, stage 2 trains everything with linear warmup then linear decay.
// Periodic dev evaluation keeps the best EM+F1 checkpoint and stops a stage
// after `early_stop_patience` evaluations without improvement.
TrainOutcome train_model(const Pipeline& pipeline);

// Adam over the named parameters, skipping those `trainable` rejects.
class Adam {
 public:
  Adam(const OptimizerConfig& config) : cfg_(config) {}
  void step(ModelParams& params, double lr,
            const std::function<bool(const std::string&)>& trainable);

 private:
  OptimizerConfig cfg_;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
  long long t_ = 0;
};

}  // namespace kelm
