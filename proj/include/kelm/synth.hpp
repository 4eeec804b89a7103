#pragma once

#include <string>

#include "kelm/config.hpp"

namespace kelm {

struct SynthPaths {
  std::string train;
  std::string dev;
  std::string train_multi;
  std::string dev_multi;
  std::string triples;
  std::string embeddings;
  std::string lexicon;
  std::string manifest;
};

// Desk-scale disambiguation benchmark. Every surface carries several senses;
// a question is answerable only by matching the passage's context words to
// the right sense: all senses' answer words appear in the passage, and only
// the KG links answer words to senses. Byte-identical output for a fixed
// seed; manifest.json records the gold sense per mention.
SynthPaths gen_synthetic(const SynthConfig& config, const std::string& out_dir);

}  // namespace kelm
