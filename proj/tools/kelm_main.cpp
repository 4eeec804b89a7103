#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <json.hpp>

#include "kelm/checkpoint.hpp"
#include "kelm/dataset.hpp"
#include "kelm/kge.hpp"
#include "kelm/model.hpp"
#include "kelm/synth.hpp"
#include "kelm/train.hpp"

using namespace kelm;
using nlohmann::json;

namespace {

struct CliArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string input;
};

RunConfig run_config_for(const CliArgs& args) {
  RunConfig cfg = load_run_config(ConfigFile::parse_file(args.config_path));
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out.empty()) cfg.out_dir = args.out;
  return cfg;
}

// Model restored from a checkpoint: the vocab rides next to the tensors.
KelmModel restore_model(const Pipeline& pipeline, const std::string& checkpoint_path) {
  const auto vocab_path =
      std::filesystem::path(checkpoint_path).parent_path() / "vocab.txt";
  KelmModel model = KelmModel::build(pipeline, Vocab::load(vocab_path.string()));
  load_checkpoint(model.params, checkpoint_path);
  return model;
}

void write_or_print(const std::string& out_path, const std::string& contents) {
  if (out_path.empty()) {
    std::cout << contents;
    return;
  }
  write_file_atomic(out_path, contents);
}

json report_to_json(const EvalReport& report) {
  json j;
  j["task"] = report.task == Task::Extractive ? "extractive" : "multi_response";
  j["em"] = report.em;
  j[report.task == Task::Extractive ? "f1" : "f1a"] = report.f1;
  j["em_plus_f1"] = report.metric_sum;
  if (report.disambiguation_accuracy >= 0) {
    j["disambiguation_accuracy"] = report.disambiguation_accuracy;
    j["mentions_scored"] = report.mentions_scored;
  }
  return j;
}

int cmd_build_graph(const CliArgs& args) {
  RunConfig cfg = run_config_for(args);
  if (cfg.kgs.empty()) throw Error("build-graph: no [kgN] sections in the config");
  Pipeline pipeline = build_pipeline(cfg);
  json out = json::array();
  for (size_t q = 0; q < pipeline.graphs.size(); ++q) {
    const auto& g = pipeline.graphs[q];
    const auto& lex = pipeline.lexicons[q];
    int ambiguous = 0;
    for (const auto& [surface, ids] : lex)
      if (ids.size() > 1) ++ambiguous;
    int embedded = 0;
    for (int e = 0; e < g.entity_count(); ++e)
      if (pipeline.tables[q].has_entity(e)) ++embedded;
    json stats = {{"kg", cfg.kgs[q].name},
                  {"entities", g.entity_count()},
                  {"relations", g.relation_count()},
                  {"triples", g.triples().size()},
                  {"embedded_entities", embedded},
                  {"skipped_embedding_rows", pipeline.tables[q].skipped_names},
                  {"lexicon_surfaces", lex.size()},
                  {"ambiguous_surfaces", ambiguous}};
    out.push_back(stats);
    if (!args.out.empty()) {
      std::filesystem::create_directories(args.out);
      const std::string base = args.out + "/kg" + std::to_string(q + 1);
      write_file_atomic(base + ".triples", serialize_triples(g));
      std::string lexfile;
      for (const auto& [surface, ids] : lex) {
        lexfile += surface + "\t";
        for (size_t i = 0; i < ids.size(); ++i)
          lexfile += (i ? "," : "") + g.entity_name(ids[i]);
        lexfile += "\n";
      }
      write_file_atomic(base + ".lexicon", lexfile);
    }
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_pretrain_kge(const CliArgs& args) {
  ConfigFile file = ConfigFile::parse_file(args.config_path);
  KgeFileConfig kcfg = load_kge_config(file);
  KnowledgeGraph full = load_triples(kcfg.triples_path);

  // hold out a deterministic fraction of triples for filtered ranking
  KgeConfig tcfg;
  tcfg.dim = kcfg.dim;
  tcfg.epochs = kcfg.epochs;
  tcfg.lr = kcfg.lr;
  tcfg.negatives_per_positive = kcfg.negatives_per_positive;
  tcfg.seed = args.seed ? *args.seed : 1;

  std::vector<Triple> triples = full.triples();
  Rng rng(tcfg.seed);
  rng.shuffle(triples);
  const size_t holdout =
      std::min(triples.size() - 1,
               static_cast<size_t>(kcfg.holdout_fraction * static_cast<double>(triples.size())));

  KnowledgeGraph train_graph;
  for (int e = 0; e < full.entity_count(); ++e) train_graph.intern_entity(full.entity_name(e));
  for (int r = 0; r < full.relation_count(); ++r)
    train_graph.intern_relation(full.relation_name(r));
  for (size_t i = holdout; i < triples.size(); ++i)
    train_graph.add_triple(triples[i].head, triples[i].relation, triples[i].tail);
  std::vector<Triple> held(triples.begin(), triples.begin() + static_cast<std::ptrdiff_t>(holdout));

  auto result = train_bilinear(train_graph, tcfg);
  const std::string out_path = args.out.empty() ? "kge.embeddings" : args.out;
  save_embeddings(result.table, full, out_path);

  json j = {{"embeddings", out_path},
            {"triples_trained", train_graph.triples().size()},
            {"first_epoch_loss", result.epoch_losses.front()},
            {"last_epoch_loss", result.epoch_losses.back()}};
  if (!held.empty()) {
    auto metrics = evaluate_kge(held, result.table, train_graph);
    j["holdout"] = {{"triples", held.size()},
                    {"mrr", metrics.mrr},
                    {"hits1", metrics.hits1},
                    {"hits3", metrics.hits3},
                    {"hits10", metrics.hits10}};
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_gen_synth(const CliArgs& args) {
  SynthConfig cfg = load_synth_config(ConfigFile::parse_file(args.config_path));
  if (args.seed) cfg.seed = *args.seed;
  const std::string out_dir = args.out.empty() ? "synth" : args.out;
  SynthPaths paths = gen_synthetic(cfg, out_dir);
  json j = {{"train", paths.train},       {"dev", paths.dev},
            {"train_multi", paths.train_multi}, {"dev_multi", paths.dev_multi},
            {"triples", paths.triples},   {"embeddings", paths.embeddings},
            {"lexicon", paths.lexicon},   {"manifest", paths.manifest}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train(const CliArgs& args) {
  RunConfig cfg = run_config_for(args);
  Pipeline pipeline = build_pipeline(cfg);
  TrainOutcome outcome = train_model(pipeline);
  json j = {{"best_checkpoint", outcome.best_checkpoint},
            {"last_checkpoint", outcome.last_checkpoint},
            {"vocab", outcome.vocab_path},
            {"log", outcome.log_path},
            {"steps", outcome.steps_run},
            {"rejected_examples", outcome.rejected_examples},
            {"best", report_to_json(outcome.best_report)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval(const CliArgs& args) {
  RunConfig cfg = run_config_for(args);
  Pipeline pipeline = build_pipeline(cfg);
  KelmModel model = restore_model(pipeline, args.checkpoint);
  Manifest manifest;
  const bool have_manifest = !cfg.manifest_path.empty();
  if (have_manifest) manifest = load_manifest(cfg.manifest_path);
  const std::string dataset = args.input.empty() ? cfg.dev_path : args.input;
  EvalReport report =
      evaluate_model(model, pipeline, dataset, have_manifest ? &manifest : nullptr);
  write_or_print(args.out, report_to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_predict(const CliArgs& args) {
  RunConfig cfg = run_config_for(args);
  Pipeline pipeline = build_pipeline(cfg);
  KelmModel model = restore_model(pipeline, args.checkpoint);
  const std::string dataset = args.input.empty() ? cfg.dev_path : args.input;

  std::string out;
  if (cfg.task == Task::Extractive) {
    for (const auto& record : load_extractive_jsonl(dataset)) {
      auto chunks = compile_extractive(record, pipeline, /*for_training=*/false);
      auto pred = predict_span(model, pipeline, chunks, record.passage);
      out += json{{"id", record.id},
                  {"span", {pred.start_char, pred.end_char}},
                  {"text", pred.text}}
                 .dump() +
             "\n";
    }
  } else {
    for (const auto& record : load_multi_jsonl(dataset)) {
      std::vector<double> probs;
      for (const auto& option : compile_multi(record, pipeline))
        probs.push_back(predict_option(model, pipeline, option));
      out += json{{"id", record.id}, {"option_probs", probs}}.dump() + "\n";
    }
  }
  write_or_print(args.out, out);
  return 0;
}

int cmd_inspect_attention(const CliArgs& args) {
  RunConfig cfg = run_config_for(args);
  Pipeline pipeline = build_pipeline(cfg);
  KelmModel model = restore_model(pipeline, args.checkpoint);
  if (args.input.empty()) throw Error("inspect-attention: --input is required");

  std::vector<CompiledExample> inputs;
  if (cfg.task == Task::Extractive) {
    for (const auto& record : load_extractive_jsonl(args.input))
      for (auto& chunk : compile_extractive(record, pipeline, /*for_training=*/false))
        inputs.push_back(std::move(chunk));
  } else {
    for (const auto& record : load_multi_jsonl(args.input))
      for (auto& option : compile_multi(record, pipeline)) inputs.push_back(std::move(option));
  }

  std::string out;
  for (const auto& ex : inputs) {
    ForwardOutput fwd = model_forward(model, pipeline, ex);
    for (const auto& att : fwd.attentions) {
      std::vector<std::pair<double, std::string>> ranked;
      for (size_t j = 0; j < att.candidate_entities.size(); ++j) {
        const int entity = att.candidate_entities[j];
        const std::string name =
            entity == kSentinel
                ? "sentinel"
                : pipeline.graphs[static_cast<size_t>(att.kg - 1)].entity_name(entity);
        ranked.emplace_back(att.alphas.at(0, static_cast<int>(j)), name);
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      json cands = json::array();
      for (const auto& [alpha, name] : ranked)
        cands.push_back({{"entity", name}, {"alpha", alpha}});
      out += json{{"id", ex.example_id},
                  {"token", ex.text.tokens[static_cast<size_t>(att.token)]},
                  {"token_index", att.token},
                  {"kg", att.kg},
                  {"candidates", cands}}
                 .dump() +
             "\n";
    }
  }
  write_or_print(args.out, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KELM: hierarchical knowledge enhancement for MRC at desk scale"};
  app.require_subcommand(1);

  CliArgs args;
  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "configuration file");
    if (needs_config) opt->required();
    std::uint64_t seed_holder = 0;
    cmd->add_option("--seed", seed_holder, "override every configured seed")
        ->each([&args](const std::string& v) { args.seed = std::stoull(v); });
    cmd->add_option("--out", args.out, "output path override");
  };

  auto* build_graph = app.add_subcommand("build-graph", "load KGs and report/serialize them");
  add_common(build_graph);
  auto* pretrain = app.add_subcommand("pretrain-kge", "train BILINEAR embeddings on a triples file");
  add_common(pretrain);
  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic disambiguation benchmark");
  add_common(gen);
  auto* train = app.add_subcommand("train", "two-stage fine-tuning");
  add_common(train);
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(evalc);
  evalc->add_option("--checkpoint", args.checkpoint, "checkpoint file")->required();
  evalc->add_option("--input", args.input, "dataset override (defaults to paths.dev)");
  auto* predict = app.add_subcommand("predict", "write predictions as JSON lines");
  add_common(predict);
  predict->add_option("--checkpoint", args.checkpoint, "checkpoint file")->required();
  predict->add_option("--input", args.input, "dataset override (defaults to paths.dev)");
  auto* inspect = app.add_subcommand("inspect-attention", "dump candidate alphas per covered token");
  add_common(inspect);
  inspect->add_option("--checkpoint", args.checkpoint, "checkpoint file")->required();
  inspect->add_option("--input", args.input, "JSONL examples to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::ostringstream usage;
    app.exit(e, usage, usage);
    std::cerr << usage.str();
    return 1;
  }

  try {
    if (build_graph->parsed()) return cmd_build_graph(args);
    if (pretrain->parsed()) return cmd_pretrain_kge(args);
    if (gen->parsed()) return cmd_gen_synth(args);
    if (train->parsed()) return cmd_train(args);
    if (evalc->parsed()) return cmd_eval(args);
    if (predict->parsed()) return cmd_predict(args);
    if (inspect->parsed()) return cmd_inspect_attention(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
