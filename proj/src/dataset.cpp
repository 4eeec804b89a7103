#include "kelm/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace kelm {

using nlohmann::json;

namespace {

json parse_line(const std::string& line, const std::string& path, int line_no) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw Error(path + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
  }
}

}  // namespace

std::vector<ExtractiveRecord> load_extractive_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open dataset " + path);
  std::vector<ExtractiveRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, path, line_no);
    ExtractiveRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.question = j.at("question").get<std::string>();
      r.passage = j.at("passage").get<std::string>();
      for (const auto& a : j.at("answers"))
        r.answers.emplace_back(a.at("start_char").get<int>(), a.at("end_char").get<int>());
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (r.answers.empty())
      throw Error(path + ":" + std::to_string(line_no) + ": example without answers");
    for (auto [s, e] : r.answers)
      if (s < 0 || e <= s || e > static_cast<int>(r.passage.size()))
        throw Error(path + ":" + std::to_string(line_no) + ": answer span outside the passage");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw Error(path + ": empty dataset");
  return out;
}

std::vector<MultiRecord> load_multi_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open dataset " + path);
  std::vector<MultiRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, path, line_no);
    MultiRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.question = j.at("question").get<std::string>();
      r.passage = j.at("passage").get<std::string>();
      for (const auto& o : j.at("options")) {
        OptionRecord opt;
        opt.text = o.at("text").get<std::string>();
        opt.label = o.at("label").get<int>();
        if (opt.label != 0 && opt.label != 1)
          throw Error(path + ":" + std::to_string(line_no) + ": labels are 0 or 1");
        r.options.push_back(std::move(opt));
      }
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (r.options.empty())
      throw Error(path + ":" + std::to_string(line_no) + ": question without options");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw Error(path + ": empty dataset");
  return out;
}

Pipeline build_pipeline(const RunConfig& config) {
  Pipeline p;
  p.config = config;
  p.uket_options.k_hops = config.k_hops;
  for (const auto& kg : config.kgs) {
    KnowledgeGraph graph = load_triples(kg.triples_path);
    EmbeddingTable table = load_embeddings(kg.embeddings_path, graph);
    Lexicon lexicon = build_lexicon(graph, normalizer_from_string(kg.normalizer));
    if (!kg.lexicon_override_path.empty())
      merge_lexicon_override(lexicon, graph, kg.lexicon_override_path);

    std::optional<std::unordered_set<int>> filter;
    if (!kg.relation_filter.empty()) {
      filter.emplace();
      for (const auto& name : kg.relation_filter) {
        auto id = graph.relation_id(name);
        if (!id) throw Error("relation filter names unknown relation " + name + " in " + kg.name);
        filter->insert(*id);
      }
    }
    p.uket_options.relation_filters.push_back(std::move(filter));
    p.graphs.push_back(std::move(graph));
    p.tables.push_back(std::move(table));
    p.lexicons.push_back(std::move(lexicon));
  }
  return p;
}

namespace {

std::vector<std::vector<MentionAnnotation>> mentions_for(const TokenizedText& text,
                                                         const Pipeline& pipeline) {
  std::vector<std::vector<MentionAnnotation>> mentions;
  for (size_t q = 0; q < pipeline.graphs.size(); ++q) {
    if (pipeline.config.ablation == Ablation::NoKnowledge) {
      mentions.emplace_back();  // knowledge path ablated: no links at all
    } else {
      mentions.push_back(find_mentions(text, pipeline.lexicons[q], static_cast<int>(q) + 1));
    }
  }
  return mentions;
}

CompiledExample assemble(const Pipeline& pipeline, TokenizedText text) {
  CompiledExample ex;
  ex.text = std::move(text);
  ex.mentions = mentions_for(ex.text, pipeline);
  std::vector<const KnowledgeGraph*> graphs;
  std::vector<const EmbeddingTable*> tables;
  for (size_t q = 0; q < pipeline.graphs.size(); ++q) {
    graphs.push_back(&pipeline.graphs[q]);
    tables.push_back(&pipeline.tables[q]);
  }
  ex.uket = build_uket(ex.text, ex.mentions, graphs, tables, pipeline.uket_options);
  ex.passage_mask.resize(static_cast<size_t>(ex.text.size()));
  for (int i = 0; i < ex.text.size(); ++i)
    ex.passage_mask[static_cast<size_t>(i)] = ex.text.is_passage(i) ? 1 : 0;
  return ex;
}

// gold token range covering [cs, ce) among this chunk's passage tokens
std::pair<int, int> gold_token_span(const TokenizedText& text, int cs, int ce) {
  int start = -1, end = -1;
  for (int i = 0; i < text.size(); ++i) {
    if (!text.is_passage(i)) continue;
    const int ts = text.char_offsets[static_cast<size_t>(i)].first - text.passage_char_base;
    const int te = text.char_offsets[static_cast<size_t>(i)].second - text.passage_char_base;
    if (te > cs && ts < ce) {
      if (start < 0) start = i;
      end = i;
    }
  }
  return {start, end};
}

}  // namespace

std::vector<CompiledExample> compile_extractive(const ExtractiveRecord& record,
                                                const Pipeline& pipeline, bool for_training,
                                                CompileStats* stats) {
  const RunConfig& cfg = pipeline.config;
  const int capacity = passage_capacity(record.question, std::nullopt, cfg.max_seq_len);
  if (capacity < 1)
    throw Error("example " + record.id + ": question leaves no room for passage tokens");
  const int total_ptoks = static_cast<int>(basic_tokens(record.passage).size());
  if (total_ptoks == 0) throw Error("example " + record.id + ": empty passage");

  std::vector<int> offsets = {0};
  if (total_ptoks > capacity) {
    const int stride = std::max(1, cfg.doc_stride);
    for (int off = stride; off < total_ptoks; off += stride) {
      offsets.push_back(off);
      if (off + capacity >= total_ptoks) break;
    }
  }

  std::vector<std::string> gold_texts;
  for (auto [s, e] : record.answers)
    gold_texts.push_back(record.passage.substr(static_cast<size_t>(s), static_cast<size_t>(e - s)));

  std::vector<CompiledExample> out;
  bool gold_placed = false;
  for (size_t ci = 0; ci < offsets.size(); ++ci) {
    TokenizedText text =
        tokenize(record.question, std::nullopt, record.passage, cfg.max_seq_len, offsets[ci]);
    CompiledExample ex = assemble(pipeline, std::move(text));
    ex.example_id = record.id;
    ex.chunk_index = static_cast<int>(ci);
    ex.gold_texts = gold_texts;

    // training target: the first gold answer, if fully inside this chunk
    const auto [gs, ge] = gold_token_span(ex.text, record.answers[0].first, record.answers[0].second);
    if (gs >= 0) {
      // the span must be complete: its last character must fall inside the chunk
      const int last_end = ex.text.char_offsets[static_cast<size_t>(ge)].second - ex.text.passage_char_base;
      if (last_end >= record.answers[0].second) {
        ex.gold_start = gs;
        ex.gold_end = ge;
        gold_placed = true;
      }
    }
    if (!for_training || ex.gold_start >= 0) out.push_back(std::move(ex));
  }

  if (stats) {
    ++stats->total_examples;
    stats->total_inputs += static_cast<int>(out.size());
  }
  if (for_training && !gold_placed) {
    if (stats) ++stats->rejected_gold_outside;
    return {};
  }
  return out;
}

std::vector<CompiledExample> compile_multi(const MultiRecord& record, const Pipeline& pipeline) {
  std::vector<CompiledExample> out;
  for (size_t oi = 0; oi < record.options.size(); ++oi) {
    TokenizedText text = tokenize(record.question, record.options[oi].text, record.passage,
                                  pipeline.config.max_seq_len);
    CompiledExample ex = assemble(pipeline, std::move(text));
    ex.example_id = record.id;
    ex.option_index = static_cast<int>(oi);
    ex.label = record.options[oi].label;
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {
void add_tokens(Vocab& vocab, const std::string& text) {
  for (const auto& [tok, span] : basic_tokens(text)) {
    (void)span;
    vocab.add(tok);
  }
}
}  // namespace

Vocab build_vocab_extractive(const std::vector<ExtractiveRecord>& records) {
  Vocab v;
  v.add("[CLS]");
  v.add("[SEP]");
  for (const auto& r : records) {
    add_tokens(v, r.question);
    add_tokens(v, r.passage);
  }
  return v;
}

Vocab build_vocab_multi(const std::vector<MultiRecord>& records) {
  Vocab v;
  v.add("[CLS]");
  v.add("[SEP]");
  for (const auto& r : records) {
    add_tokens(v, r.question);
    add_tokens(v, r.passage);
    for (const auto& o : r.options) add_tokens(v, o.text);
  }
  return v;
}

}  // namespace kelm
