#include "kelm/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kelm {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::map<std::string, std::vector<std::string>>& full_schema() {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"run",
       {"task", "seed", "max_seq_len", "max_answer_len", "doc_stride", "k_hops", "rgcn_layers",
        "rgcn_self_loop", "leaky_slope", "batch_size", "eval_interval", "early_stop_patience",
        "ablation"}},
      {"paths", {"train", "dev", "out_dir", "manifest"}},
      {"encoder",
       {"kind", "d_t", "layers", "heads", "ffn_multiplier", "max_positions", "precomputed"}},
      {"optimizer", {"beta1", "beta2", "eps"}},
      {"stage1", {"lr", "max_epochs", "max_steps"}},
      {"stage2", {"lr", "max_epochs", "max_steps", "warmup_fraction"}},
      {"kg", {"name", "triples", "embeddings", "normalizer", "relation_filter", "lexicon_override"}},
      {"kge", {"triples", "dim", "epochs", "lr", "negatives_per_positive", "holdout_fraction"}},
      {"synth",
       {"surfaces", "senses_per_surface", "relations", "neighbors_per_sense", "context_words",
        "filler_vocab", "train_examples", "dev_examples", "passage_min", "passage_max", "kge_dim",
        "seed"}},
  };
  return schema;
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw Error(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw Error(origin + ":" + std::to_string(line_no) + ": empty section name");
      cfg.sections_[section];
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(origin + ":" + std::to_string(line_no) + ": expected `key = value`");
    if (section.empty())
      throw Error(origin + ":" + std::to_string(line_no) + ": key outside any [section]");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw Error(origin + ":" + std::to_string(line_no) + ": empty key");
    for (const auto& [k, v] : cfg.sections_[section])
      if (k == key)
        throw Error(origin + ":" + std::to_string(line_no) + ": duplicate key " + section + "." + key);
    cfg.sections_[section].emplace_back(key, value);
  }
  cfg.validate(full_schema());
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config file " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str(), path);
}

void ConfigFile::validate(const std::map<std::string, std::vector<std::string>>& schema) const {
  for (const auto& [section, entries] : sections_) {
    std::string canon = section;
    if (canon.rfind("kg", 0) == 0 && canon.size() > 2 &&
        std::all_of(canon.begin() + 2, canon.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      canon = "kg";
    auto it = schema.find(canon);
    if (it == schema.end()) throw Error(origin_ + ": unknown section [" + section + "]");
    for (const auto& [key, value] : entries)
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw Error(origin_ + ": unknown key " + section + "." + key);
  }
}

bool ConfigFile::has_section(const std::string& section) const {
  return sections_.count(section) > 0;
}

std::vector<std::string> ConfigFile::sections_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, entries] : sections_) {
    (void)entries;
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  }
  return out;
}

bool ConfigFile::lookup(const std::string& section, const std::string& key,
                        std::string& out) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return false;
  for (const auto& [k, v] : it->second)
    if (k == key) {
      out = v;
      return true;
    }
  return false;
}

std::string ConfigFile::get(const std::string& section, const std::string& key) const {
  std::string v;
  if (!lookup(section, key, v) || v.empty())
    throw Error(origin_ + ": missing required key " + section + "." + key);
  return v;
}

std::string ConfigFile::get_or(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  std::string v;
  return lookup(section, key, v) ? v : fallback;
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
  std::string v;
  if (!lookup(section, key, v)) return fallback;
  try {
    size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw Error(origin_ + ": " + section + "." + key + " is not an integer: " + v);
  }
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  std::string v;
  if (!lookup(section, key, v)) return fallback;
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw Error(origin_ + ": " + section + "." + key + " is not a number: " + v);
  }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  std::string v;
  if (!lookup(section, key, v)) return fallback;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(origin_ + ": " + section + "." + key + " is not a boolean: " + v);
}

std::uint64_t ConfigFile::get_seed(const std::string& section, const std::string& key,
                                   std::uint64_t fallback) const {
  std::string v;
  if (!lookup(section, key, v)) return fallback;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw Error(origin_ + ": " + section + "." + key + " is not a seed: " + v);
  }
}

RunConfig load_run_config(const ConfigFile& file) {
  RunConfig cfg;
  const std::string task = file.get_or("run", "task", "extractive");
  if (task == "extractive") cfg.task = Task::Extractive;
  else if (task == "multi_response") cfg.task = Task::MultiResponse;
  else throw Error("run.task must be extractive or multi_response, got " + task);

  cfg.seed = file.get_seed("run", "seed", cfg.seed);
  cfg.max_seq_len = file.get_int("run", "max_seq_len", cfg.max_seq_len);
  cfg.max_answer_len = file.get_int("run", "max_answer_len", cfg.max_answer_len);
  cfg.doc_stride = file.get_int("run", "doc_stride", cfg.doc_stride);
  cfg.k_hops = file.get_int("run", "k_hops", cfg.k_hops);
  cfg.rgcn_layers = file.get_int("run", "rgcn_layers", cfg.rgcn_layers);
  cfg.rgcn_self_loop = file.get_bool("run", "rgcn_self_loop", cfg.rgcn_self_loop);
  cfg.leaky_slope = file.get_double("run", "leaky_slope", cfg.leaky_slope);
  cfg.batch_size = file.get_int("run", "batch_size", cfg.batch_size);
  cfg.eval_interval = file.get_int("run", "eval_interval", cfg.eval_interval);
  cfg.early_stop_patience = file.get_int("run", "early_stop_patience", cfg.early_stop_patience);
  const std::string ablation = file.get_or("run", "ablation", "none");
  if (ablation == "none") cfg.ablation = Ablation::None;
  else if (ablation == "static_average") cfg.ablation = Ablation::StaticAverage;
  else if (ablation == "no_knowledge") cfg.ablation = Ablation::NoKnowledge;
  else throw Error("run.ablation must be none, static_average or no_knowledge");

  cfg.train_path = file.get_or("paths", "train", "");
  cfg.dev_path = file.get_or("paths", "dev", "");
  cfg.out_dir = file.get_or("paths", "out_dir", ".");
  cfg.manifest_path = file.get_or("paths", "manifest", "");

  cfg.encoder.kind = encoder_kind_from_string(file.get_or("encoder", "kind", "tiny_transformer"));
  cfg.encoder.d_t = file.get_int("encoder", "d_t", cfg.encoder.d_t);
  cfg.encoder.layers = file.get_int("encoder", "layers", cfg.encoder.layers);
  cfg.encoder.heads = file.get_int("encoder", "heads", cfg.encoder.heads);
  cfg.encoder.ffn_multiplier = file.get_int("encoder", "ffn_multiplier", cfg.encoder.ffn_multiplier);
  cfg.encoder.max_positions = file.get_int("encoder", "max_positions", cfg.max_seq_len);
  cfg.encoder.precomputed_path = file.get_or("encoder", "precomputed", "");

  cfg.optimizer.beta1 = file.get_double("optimizer", "beta1", cfg.optimizer.beta1);
  cfg.optimizer.beta2 = file.get_double("optimizer", "beta2", cfg.optimizer.beta2);
  cfg.optimizer.eps = file.get_double("optimizer", "eps", cfg.optimizer.eps);

  cfg.stage1.lr = file.get_double("stage1", "lr", cfg.stage1.lr);
  cfg.stage1.max_epochs = file.get_int("stage1", "max_epochs", cfg.stage1.max_epochs);
  cfg.stage1.max_steps = file.get_int("stage1", "max_steps", cfg.stage1.max_steps);
  cfg.stage2.lr = file.get_double("stage2", "lr", cfg.stage2.lr);
  cfg.stage2.max_epochs = file.get_int("stage2", "max_epochs", cfg.stage2.max_epochs);
  cfg.stage2.max_steps = file.get_int("stage2", "max_steps", cfg.stage2.max_steps);
  cfg.stage2.warmup_fraction = file.get_double("stage2", "warmup_fraction", cfg.stage2.warmup_fraction);
  if (cfg.stage1.lr <= 0 || cfg.stage2.lr <= 0) throw Error("stage learning rates must be positive");

  for (const auto& section : file.sections_with_prefix("kg")) {
    if (section == "kge") continue;
    KgConfig kg;
    kg.name = file.get_or(section, "name", section);
    kg.triples_path = file.get(section, "triples");
    kg.embeddings_path = file.get(section, "embeddings");
    kg.normalizer = file.get_or(section, "normalizer", "wordnet");
    kg.relation_filter = split_csv(file.get_or(section, "relation_filter", ""));
    kg.lexicon_override_path = file.get_or(section, "lexicon_override", "");
    cfg.kgs.push_back(std::move(kg));
  }
  return cfg;
}

SynthConfig load_synth_config(const ConfigFile& file) {
  SynthConfig cfg;
  cfg.surfaces = file.get_int("synth", "surfaces", cfg.surfaces);
  cfg.senses_per_surface = file.get_int("synth", "senses_per_surface", cfg.senses_per_surface);
  cfg.relations = file.get_int("synth", "relations", cfg.relations);
  cfg.neighbors_per_sense = file.get_int("synth", "neighbors_per_sense", cfg.neighbors_per_sense);
  cfg.context_words = file.get_int("synth", "context_words", cfg.context_words);
  cfg.filler_vocab = file.get_int("synth", "filler_vocab", cfg.filler_vocab);
  cfg.train_examples = file.get_int("synth", "train_examples", cfg.train_examples);
  cfg.dev_examples = file.get_int("synth", "dev_examples", cfg.dev_examples);
  cfg.passage_min = file.get_int("synth", "passage_min", cfg.passage_min);
  cfg.passage_max = file.get_int("synth", "passage_max", cfg.passage_max);
  cfg.kge_dim = file.get_int("synth", "kge_dim", cfg.kge_dim);
  cfg.seed = file.get_seed("synth", "seed", cfg.seed);
  return cfg;
}

KgeFileConfig load_kge_config(const ConfigFile& file) {
  KgeFileConfig cfg;
  cfg.triples_path = file.get("kge", "triples");
  cfg.dim = file.get_int("kge", "dim", cfg.dim);
  cfg.epochs = file.get_int("kge", "epochs", cfg.epochs);
  cfg.lr = file.get_double("kge", "lr", cfg.lr);
  cfg.negatives_per_positive = file.get_int("kge", "negatives_per_positive", cfg.negatives_per_positive);
  cfg.holdout_fraction = file.get_double("kge", "holdout_fraction", cfg.holdout_fraction);
  return cfg;
}

}  // namespace kelm
