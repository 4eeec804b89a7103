#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "kelm/checkpoint.hpp"
#include "kelm/dataset.hpp"
#include "kelm/model.hpp"
#include "kelm/synth.hpp"
#include "kelm/train.hpp"

namespace py = pybind11;
using namespace kelm;

namespace {

std::vector<int> seeds_to_ids(const KnowledgeGraph& g, const std::vector<std::string>& names) {
  std::vector<int> ids;
  for (const auto& n : names) {
    auto id = g.entity_id(n);
    if (!id) throw Error("unknown entity: " + n);
    ids.push_back(*id);
  }
  return ids;
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["task"] = r.task == Task::Extractive ? "extractive" : "multi_response";
  d["em"] = r.em;
  d[r.task == Task::Extractive ? "f1" : "f1a"] = r.f1;
  d["em_plus_f1"] = r.metric_sum;
  if (r.disambiguation_accuracy >= 0) {
    d["disambiguation_accuracy"] = r.disambiguation_accuracy;
    d["mentions_scored"] = r.mentions_scored;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_kelm, m) {
  m.doc() = "Hierarchical knowledge enhancement for MRC: graphs, linking, training";

  py::register_exception<Error>(m, "KelmError");

  py::class_<KnowledgeGraph>(m, "KnowledgeGraph")
      .def_property_readonly("entity_count", &KnowledgeGraph::entity_count)
      .def_property_readonly("relation_count", &KnowledgeGraph::relation_count)
      .def_property_readonly("triple_count",
                             [](const KnowledgeGraph& g) { return g.triples().size(); })
      .def("entity_name", &KnowledgeGraph::entity_name)
      .def("has_entity",
           [](const KnowledgeGraph& g, const std::string& name) { return g.entity_id(name).has_value(); })
      .def("serialize", &serialize_triples);

  m.def("load_triples", &load_triples, py::arg("path"));

  py::class_<EmbeddingTable>(m, "EmbeddingTable")
      .def_property_readonly("dimension", [](const EmbeddingTable& t) { return t.dimension; })
      .def_property_readonly("entities",
                             [](const EmbeddingTable& t) { return t.entity_vectors.size(); })
      .def_property_readonly("skipped_names",
                             [](const EmbeddingTable& t) { return t.skipped_names; });

  m.def("load_embeddings", &load_embeddings, py::arg("path"), py::arg("graph"));

  m.def(
      "khop_subgraph",
      [](const KnowledgeGraph& g, const std::vector<std::string>& seeds, int k,
         const std::vector<std::string>& relations) {
        std::optional<std::unordered_set<int>> filter;
        if (!relations.empty()) {
          filter.emplace();
          for (const auto& r : relations) {
            auto id = g.relation_id(r);
            if (!id) throw Error("unknown relation: " + r);
            filter->insert(*id);
          }
        }
        Subgraph sg = khop_subgraph(g, seeds_to_ids(g, seeds), k, filter);
        py::dict out;
        py::list nodes, edges, hops;
        for (size_t i = 0; i < sg.nodes.size(); ++i) {
          nodes.append(g.entity_name(sg.nodes[i]));
          hops.append(sg.hop_of[i]);
        }
        for (const auto& e : sg.edges)
          edges.append(py::make_tuple(g.entity_name(sg.nodes[static_cast<size_t>(e.src)]),
                                      g.relation_name(e.relation),
                                      g.entity_name(sg.nodes[static_cast<size_t>(e.dst)])));
        out["nodes"] = nodes;
        out["edges"] = edges;
        out["hops"] = hops;
        return out;
      },
      py::arg("graph"), py::arg("seeds"), py::arg("k") = 1,
      py::arg("relation_filter") = std::vector<std::string>{});

  m.def("bilinear_score", &bilinear_score, py::arg("e_h"), py::arg("w_r"), py::arg("e_t"));

  m.def(
      "train_bilinear",
      [](const KnowledgeGraph& g, int dim, int epochs, double lr, int negatives,
         std::uint64_t seed) {
        KgeConfig cfg{dim, epochs, lr, negatives, seed};
        auto result = train_bilinear(g, cfg);
        return py::make_tuple(result.table, result.epoch_losses);
      },
      py::arg("graph"), py::arg("dim") = 16, py::arg("epochs") = 100, py::arg("lr") = 0.05,
      py::arg("negatives_per_positive") = 4, py::arg("seed") = 1);

  m.def(
      "evaluate_kge",
      [](const KnowledgeGraph& g, const EmbeddingTable& table,
         const std::vector<std::tuple<std::string, std::string, std::string>>& triples) {
        std::vector<Triple> test;
        for (const auto& [h, r, t] : triples) {
          auto hid = g.entity_id(h), tid = g.entity_id(t);
          auto rid = g.relation_id(r);
          if (!hid || !rid || !tid) throw Error("test triple references unknown names");
          test.push_back({*hid, *rid, *tid});
        }
        auto metrics = evaluate_kge(test, table, g);
        py::dict out;
        out["mrr"] = metrics.mrr;
        out["hits1"] = metrics.hits1;
        out["hits3"] = metrics.hits3;
        out["hits10"] = metrics.hits10;
        return out;
      },
      py::arg("graph"), py::arg("table"), py::arg("test_triples"));

  py::class_<TokenizedText>(m, "TokenizedText")
      .def_property_readonly("tokens", [](const TokenizedText& t) { return t.tokens; })
      .def_property_readonly("segments",
                             [](const TokenizedText& t) {
                               std::vector<std::string> out;
                               for (auto s : t.segments) {
                                 switch (s) {
                                   case Segment::CLS: out.push_back("CLS"); break;
                                   case Segment::QUESTION: out.push_back("QUESTION"); break;
                                   case Segment::ANSWER: out.push_back("ANSWER"); break;
                                   case Segment::SEP: out.push_back("SEP"); break;
                                   case Segment::PASSAGE: out.push_back("PASSAGE"); break;
                                 }
                               }
                               return out;
                             })
      .def_property_readonly("char_offsets", [](const TokenizedText& t) { return t.char_offsets; })
      .def("__len__", [](const TokenizedText& t) { return t.size(); });

  m.def(
      "tokenize",
      [](const std::string& question, const py::object& answer, const std::string& passage,
         int max_seq_len) {
        std::optional<std::string> a;
        if (!answer.is_none()) a = answer.cast<std::string>();
        return tokenize(question, a, passage, max_seq_len);
      },
      py::arg("question"), py::arg("answer"), py::arg("passage"), py::arg("max_seq_len") = 384);

  m.def(
      "build_lexicon",
      [](const KnowledgeGraph& g, const std::string& normalizer) {
        Lexicon lex = build_lexicon(g, normalizer_from_string(normalizer));
        py::dict out;
        for (const auto& [surface, ids] : lex) {
          py::list names;
          for (int id : ids) names.append(g.entity_name(id));
          out[py::str(surface)] = names;
        }
        return out;
      },
      py::arg("graph"), py::arg("normalizer") = "wordnet");

  m.def(
      "find_mentions",
      [](const KnowledgeGraph& g, const TokenizedText& text, const std::string& normalizer) {
        Lexicon lex = build_lexicon(g, normalizer_from_string(normalizer));
        py::list out;
        for (const auto& mention : find_mentions(text, lex, 1)) {
          py::dict d;
          d["surface"] = mention.surface;
          d["first_token"] = mention.first_token;
          d["last_token"] = mention.last_token;
          py::list cands;
          for (int c : mention.candidates) cands.append(g.entity_name(c));
          d["candidates"] = cands;
          out.append(d);
        }
        return out;
      },
      py::arg("graph"), py::arg("text"), py::arg("normalizer") = "wordnet");

  m.def("decode_span", &decode_span, py::arg("p_start"), py::arg("p_end"),
        py::arg("max_answer_len") = 30);
  m.def("normalize_answer", &normalize_answer, py::arg("text"));
  m.def(
      "metrics_extractive",
      [](const std::vector<std::string>& preds, const std::vector<std::vector<std::string>>& golds) {
        auto r = metrics_extractive(preds, golds);
        py::dict out;
        out["em"] = r.em;
        out["f1"] = r.f1;
        return out;
      },
      py::arg("predictions"), py::arg("golds"));
  m.def(
      "metrics_multirc",
      [](const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& golds) {
        auto r = metrics_multirc(preds, golds);
        py::dict out;
        out["em"] = r.em;
        out["f1a"] = r.f1a;
        return out;
      },
      py::arg("predictions"), py::arg("golds"));

  m.def(
      "gen_synthetic",
      [](const std::string& out_dir, int surfaces, int senses_per_surface, int relations,
         int neighbors_per_sense, int context_words, int filler_vocab, int train_examples,
         int dev_examples, int passage_min, int passage_max, int kge_dim, std::uint64_t seed) {
        SynthConfig cfg;
        cfg.surfaces = surfaces;
        cfg.senses_per_surface = senses_per_surface;
        cfg.relations = relations;
        cfg.neighbors_per_sense = neighbors_per_sense;
        cfg.context_words = context_words;
        cfg.filler_vocab = filler_vocab;
        cfg.train_examples = train_examples;
        cfg.dev_examples = dev_examples;
        cfg.passage_min = passage_min;
        cfg.passage_max = passage_max;
        cfg.kge_dim = kge_dim;
        cfg.seed = seed;
        auto paths = gen_synthetic(cfg, out_dir);
        py::dict out;
        out["train"] = paths.train;
        out["dev"] = paths.dev;
        out["train_multi"] = paths.train_multi;
        out["dev_multi"] = paths.dev_multi;
        out["triples"] = paths.triples;
        out["embeddings"] = paths.embeddings;
        out["lexicon"] = paths.lexicon;
        out["manifest"] = paths.manifest;
        return out;
      },
      py::arg("out_dir"), py::arg("surfaces") = 12, py::arg("senses_per_surface") = 3,
      py::arg("relations") = 4, py::arg("neighbors_per_sense") = 6, py::arg("context_words") = 4,
      py::arg("filler_vocab") = 30, py::arg("train_examples") = 2000,
      py::arg("dev_examples") = 500, py::arg("passage_min") = 18, py::arg("passage_max") = 26,
      py::arg("kge_dim") = 16, py::arg("seed") = 7);

  m.def(
      "train_run",
      [](const std::string& config_path) {
        RunConfig cfg = load_run_config(ConfigFile::parse_file(config_path));
        Pipeline pipeline = build_pipeline(cfg);
        TrainOutcome outcome = train_model(pipeline);
        py::dict out;
        out["best_checkpoint"] = outcome.best_checkpoint;
        out["last_checkpoint"] = outcome.last_checkpoint;
        out["vocab"] = outcome.vocab_path;
        out["log"] = outcome.log_path;
        out["steps"] = outcome.steps_run;
        out["best"] = report_to_dict(outcome.best_report);
        return out;
      },
      py::arg("config_path"));

  m.def(
      "evaluate_run",
      [](const std::string& config_path, const std::string& checkpoint, const py::object& dataset) {
        RunConfig cfg = load_run_config(ConfigFile::parse_file(config_path));
        Pipeline pipeline = build_pipeline(cfg);
        const auto vocab_path =
            std::filesystem::path(checkpoint).parent_path() / "vocab.txt";
        KelmModel model = KelmModel::build(pipeline, Vocab::load(vocab_path.string()));
        load_checkpoint(model.params, checkpoint);
        Manifest manifest;
        const bool have_manifest = !cfg.manifest_path.empty();
        if (have_manifest) manifest = load_manifest(cfg.manifest_path);
        const std::string data = dataset.is_none() ? cfg.dev_path : dataset.cast<std::string>();
        return report_to_dict(
            evaluate_model(model, pipeline, data, have_manifest ? &manifest : nullptr));
      },
      py::arg("config_path"), py::arg("checkpoint"), py::arg("dataset") = py::none());
}
