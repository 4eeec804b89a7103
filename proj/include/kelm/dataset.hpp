#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kelm/config.hpp"
#include "kelm/uket.hpp"

namespace kelm {

struct ExtractiveRecord {
  std::string id;
  std::string question;
  std::string passage;
  std::vector<std::pair<int, int>> answers;  // [start_char, end_char) into the passage
};

struct OptionRecord {
  std::string text;
  int label = 0;
};

struct MultiRecord {
  std::string id;
  std::string question;
  std::string passage;
  std::vector<OptionRecord> options;
};

std::vector<ExtractiveRecord> load_extractive_jsonl(const std::string& path);
std::vector<MultiRecord> load_multi_jsonl(const std::string& path);

// Everything a forward pass needs for one model input (one chunk of an
// extractive example, or one option of a multi-response question).
struct CompiledExample {
  std::string example_id;
  int chunk_index = 0;
  int option_index = -1;  // multi-response only
  TokenizedText text;
  std::vector<std::vector<MentionAnnotation>> mentions;  // per KG
  UketGraph uket;
  std::vector<std::uint8_t> passage_mask;

  // extractive
  int gold_start = -1;  // token indices; -1 when this chunk has no usable gold
  int gold_end = -1;
  std::vector<std::string> gold_texts;

  // multi-response
  int label = -1;
};

// Immutable per-run assets shared by compilation, training and inference.
struct Pipeline {
  RunConfig config;
  std::vector<KnowledgeGraph> graphs;
  std::vector<EmbeddingTable> tables;
  std::vector<Lexicon> lexicons;
  UketOptions uket_options;

  const KnowledgeGraph* graph_ptr(size_t q) const { return &graphs[q]; }
};

// Loads KGs, embeddings and lexicons named by the config.
Pipeline build_pipeline(const RunConfig& config);

struct CompileStats {
  int rejected_gold_outside = 0;  // extractive examples whose gold span fits no chunk
  int total_examples = 0;
  int total_inputs = 0;  // chunks or options
};

// Extractive: one CompiledExample per passage chunk (document stride).
// Training keeps only chunks containing the first gold span; examples whose
// gold fits no chunk are dropped and counted.
std::vector<CompiledExample> compile_extractive(const ExtractiveRecord& record,
                                                const Pipeline& pipeline, bool for_training,
                                                CompileStats* stats = nullptr);

// Multi-response: one CompiledExample per option, the option text riding in
// the answer segment.
std::vector<CompiledExample> compile_multi(const MultiRecord& record, const Pipeline& pipeline);

// Vocabulary over the training split's tokens (plus specials).
Vocab build_vocab_extractive(const std::vector<ExtractiveRecord>& records);
Vocab build_vocab_multi(const std::vector<MultiRecord>& records);

}  // namespace kelm
