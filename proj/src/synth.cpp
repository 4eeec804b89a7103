#include "kelm/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "kelm/checkpoint.hpp"
#include "kelm/params.hpp"

namespace kelm {

using nlohmann::json;

namespace {

std::string surface_of(int u) { return "term" + std::to_string(u); }
std::string sense_entity(int u, int k) {
  const std::string n = std::to_string(k + 1);
  return surface_of(u) + ".n." + (n.size() < 2 ? "0" + n : n);
}
std::string answer_word(int u, int k) {
  return "opt" + std::to_string(u) + "x" + std::to_string(k);
}
std::string answer_entity(int u, int k) { return answer_word(u, k) + ".n.01"; }
std::string bridge_entity(int u, int k) {
  return "hub" + std::to_string(u) + "x" + std::to_string(k) + ".n.01";
}
std::string context_word(int u, int k, int j) {
  return "cue" + std::to_string(u) + "x" + std::to_string(k) + "x" + std::to_string(j);
}
std::string context_entity(int u, int k, int j) { return context_word(u, k, j) + ".n.01"; }

void append_vector(std::string& out, const std::string& name, const std::vector<double>& v) {
  out += name;
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof(buf), " %.17g", x);
    out += buf;
  }
  out += "\n";
}

std::vector<double> random_vector(int d, double scl, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(d));
  for (auto& x : v) x = scl * rng.normal();
  return v;
}

}  // namespace

SynthPaths gen_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
  if (cfg.senses_per_surface < 2)
    throw Error("gen_synthetic: senses_per_surface must be at least 2");
  if (cfg.surfaces < 1 || cfg.neighbors_per_sense < 1 || cfg.relations < 1)
    throw Error("gen_synthetic: surfaces, neighbors and relations must be positive");
  if (cfg.context_words < 0 || cfg.context_words > cfg.neighbors_per_sense)
    throw Error("gen_synthetic: context_words cannot exceed neighbors_per_sense");
  if (cfg.passage_min > cfg.passage_max || cfg.passage_min < cfg.senses_per_surface + 2)
    throw Error("gen_synthetic: passage length range cannot hold the required tokens");

  std::filesystem::create_directories(out_dir);
  const int U = cfg.surfaces, M = cfg.senses_per_surface;
  const int ctx_pool = cfg.neighbors_per_sense;
  Rng rng(cfg.seed);

  // --- knowledge graph ---------------------------------------------------
  // Per sense: an answer entity one hop away, a hub node one hop away, and
  // context entities two hops away behind the hub. With K=1 retrieval a
  // context entity joins the subgraph only when its word occurs in the
  // text, so two rGCN layers make the sense states context-dependent:
  // present cues light up their own sense's hub.
  std::string triples;
  auto rel = [&](Rng& r) { return "rel" + std::to_string(r.below(cfg.relations)); };
  for (int u = 0; u < U; ++u) {
    for (int k = 0; k < M; ++k) {
      const std::string sense = sense_entity(u, k);
      triples += sense + "\t" + rel(rng) + "\t" + answer_entity(u, k) + "\n";
      triples += answer_entity(u, k) + "\t" + rel(rng) + "\t" + sense + "\n";
      // fixed relations here keep the lit-up direction identical across
      // senses; only attention over the candidates can tell which one lit
      triples += bridge_entity(u, k) + "\thub_of\t" + sense + "\n";
      for (int j = 0; j < ctx_pool; ++j)
        triples += context_entity(u, k, j) + "\tcue_of\t" + bridge_entity(u, k) + "\n";
    }
  }

  // --- pretrained embeddings ----------------------------------------------
  // Sense and answer entities share a per-sense cluster. Context entities
  // carry a common beacon direction so "my hub absorbed cues" is readable
  // without per-sense parameters.
  std::string body;
  int rows = 0;
  std::vector<double> beacon(static_cast<size_t>(cfg.kge_dim), 2.0);
  for (int u = 0; u < U; ++u) {
    for (int k = 0; k < M; ++k) {
      auto center = random_vector(cfg.kge_dim, 1.0, rng);
      append_vector(body, sense_entity(u, k), center);
      ++rows;
      auto ans = center;
      for (auto& x : ans) x = 0.9 * x + 0.15 * rng.normal();
      append_vector(body, answer_entity(u, k), ans);
      ++rows;
      append_vector(body, bridge_entity(u, k),
                    std::vector<double>(static_cast<size_t>(cfg.kge_dim), 0.0));
      ++rows;
      // every cue shares one embedding: a cue's slot reveals presence, never
      // which sense it belongs to
      for (int j = 0; j < ctx_pool; ++j) {
        append_vector(body, context_entity(u, k, j), beacon);
        ++rows;
      }
    }
  }
  for (int r = 0; r < cfg.relations; ++r) {
    append_vector(body, "rel" + std::to_string(r), random_vector(cfg.kge_dim, 0.5, rng));
    ++rows;
  }
  append_vector(body, "hub_of", random_vector(cfg.kge_dim, 0.5, rng));
  append_vector(body, "cue_of", random_vector(cfg.kge_dim, 0.5, rng));
  rows += 2;
  const std::string embeddings =
      std::to_string(rows) + " " + std::to_string(cfg.kge_dim) + "\n" + body;

  // --- lexicon (ambiguous surfaces; everything else derives from names) ---
  std::string lexicon;
  for (int u = 0; u < U; ++u) {
    lexicon += surface_of(u) + "\t";
    for (int k = 0; k < M; ++k) lexicon += (k ? "," : "") + sense_entity(u, k);
    lexicon += "\n";
  }

  // --- examples ------------------------------------------------------------
  json manifest_examples = json::object();
  auto make_example = [&](const std::string& id, Rng& erng, bool multi) {
    const int u = erng.below(U);
    const int gold_k = erng.below(M);

    std::vector<std::string> bag;
    bag.push_back(surface_of(u));
    for (int k = 0; k < M; ++k) bag.push_back(answer_word(u, k));
    std::vector<int> pool_idx(static_cast<size_t>(ctx_pool));
    for (int j = 0; j < ctx_pool; ++j) pool_idx[static_cast<size_t>(j)] = j;
    erng.shuffle(pool_idx);
    for (int j = 0; j < cfg.context_words; ++j)
      bag.push_back(context_word(u, gold_k, pool_idx[static_cast<size_t>(j)]));

    const int target_len =
        cfg.passage_min + (cfg.passage_max > cfg.passage_min
                               ? erng.below(cfg.passage_max - cfg.passage_min + 1)
                               : 0);
    while (static_cast<int>(bag.size()) < target_len)
      bag.push_back("w" + std::to_string(erng.below(cfg.filler_vocab)));
    erng.shuffle(bag);

    std::string passage;
    int gold_start = -1, gold_end = -1;
    for (const auto& tok : bag) {
      if (!passage.empty()) passage += ' ';
      if (tok == answer_word(u, gold_k)) {
        gold_start = static_cast<int>(passage.size());
        gold_end = gold_start + static_cast<int>(tok.size());
      }
      passage += tok;
    }
    const std::string question = "which option fits " + surface_of(u);

    manifest_examples[id] =
        json::array({{{"kg", 1}, {"surface", surface_of(u)}, {"gold", sense_entity(u, gold_k)}}});

    json j;
    j["id"] = id;
    j["question"] = question;
    j["passage"] = passage;
    if (multi) {
      json options = json::array();
      for (int k = 0; k < M; ++k)
        options.push_back({{"text", answer_word(u, k)}, {"label", k == gold_k ? 1 : 0}});
      j["options"] = options;
    } else {
      j["answers"] = json::array({{{"start_char", gold_start}, {"end_char", gold_end}}});
    }
    return j.dump() + "\n";
  };

  auto emit_split = [&](const std::string& prefix, int count, std::uint64_t tag, bool multi) {
    Rng erng = rng.fork(tag);
    std::string out;
    for (int i = 0; i < count; ++i)
      out += make_example(prefix + std::to_string(i), erng, multi);
    return out;
  };

  SynthPaths paths;
  paths.train = out_dir + "/train.jsonl";
  paths.dev = out_dir + "/dev.jsonl";
  paths.train_multi = out_dir + "/train_multi.jsonl";
  paths.dev_multi = out_dir + "/dev_multi.jsonl";
  paths.triples = out_dir + "/kg.triples";
  paths.embeddings = out_dir + "/kg.embeddings";
  paths.lexicon = out_dir + "/kg.lexicon";
  paths.manifest = out_dir + "/manifest.json";

  write_file_atomic(paths.train, emit_split("ex", cfg.train_examples, 101, false));
  write_file_atomic(paths.dev, emit_split("dev", cfg.dev_examples, 202, false));
  write_file_atomic(paths.train_multi, emit_split("mr", cfg.train_examples, 303, true));
  write_file_atomic(paths.dev_multi, emit_split("mrdev", cfg.dev_examples, 404, true));
  write_file_atomic(paths.triples, triples);
  write_file_atomic(paths.embeddings, embeddings);
  write_file_atomic(paths.lexicon, lexicon);

  json manifest;
  manifest["senses_per_surface"] = M;
  manifest["examples"] = manifest_examples;
  write_file_atomic(paths.manifest, manifest.dump(2) + "\n");
  return paths;
}

}  // namespace kelm
