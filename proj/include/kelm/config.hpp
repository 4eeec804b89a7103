#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kelm/encoder.hpp"
#include "kelm/tensor.hpp"

namespace kelm {

// Flat `key = value` file with [section] headers, '#' comments. Only
// documented keys are accepted; anything unknown is an error.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin);

  bool has_section(const std::string& section) const;
  std::vector<std::string> sections_with_prefix(const std::string& prefix) const;

  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::uint64_t get_seed(const std::string& section, const std::string& key,
                         std::uint64_t fallback) const;

  // Throws when the file holds a section/key outside the documented set.
  void validate(const std::map<std::string, std::vector<std::string>>& schema) const;

 private:
  bool lookup(const std::string& section, const std::string& key, std::string& out) const;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections_;
  std::string origin_;
};

enum class Task { Extractive, MultiResponse };
enum class Ablation { None, StaticAverage, NoKnowledge };

struct KgConfig {
  std::string name;
  std::string triples_path;
  std::string embeddings_path;
  std::string normalizer = "wordnet";
  std::vector<std::string> relation_filter;  // names; empty = all relations
  std::string lexicon_override_path;
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct StageConfig {
  double lr = 1e-3;
  int max_epochs = 10;
  int max_steps = 0;  // 0: derived from epochs
  double warmup_fraction = 0.0;
};

struct RunConfig {
  Task task = Task::Extractive;
  std::uint64_t seed = 7;
  int max_seq_len = 64;
  int max_answer_len = 30;
  int doc_stride = 128;
  int k_hops = 1;
  int rgcn_layers = 1;
  bool rgcn_self_loop = true;
  double leaky_slope = 0.01;
  int batch_size = 8;
  int eval_interval = 250;
  int early_stop_patience = 5;
  Ablation ablation = Ablation::None;

  std::string train_path;
  std::string dev_path;
  std::string out_dir = ".";
  std::string manifest_path;

  EncoderConfig encoder;
  OptimizerConfig optimizer;
  StageConfig stage1{.lr = 1e-3, .max_epochs = 10};
  StageConfig stage2{.lr = 2e-5, .max_epochs = 4, .warmup_fraction = 0.06};
  std::vector<KgConfig> kgs;
};

struct SynthConfig {
  int surfaces = 12;
  int senses_per_surface = 3;
  int relations = 4;
  int neighbors_per_sense = 6;
  int context_words = 4;
  int filler_vocab = 30;
  int train_examples = 2000;
  int dev_examples = 500;
  int passage_min = 18;
  int passage_max = 26;
  int kge_dim = 16;
  std::uint64_t seed = 7;
};

struct KgeFileConfig {
  std::string triples_path;
  int dim = 16;
  int epochs = 200;
  double lr = 0.05;
  int negatives_per_positive = 4;
  double holdout_fraction = 0.1;  // tail of the shuffled triples used for eval
};

RunConfig load_run_config(const ConfigFile& file);
SynthConfig load_synth_config(const ConfigFile& file);
KgeFileConfig load_kge_config(const ConfigFile& file);

}  // namespace kelm
