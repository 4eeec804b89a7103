#pragma once

#include <string>

#include "kelm/params.hpp"

namespace kelm {

// Text checkpoint: header line "KELM-CKPT 1", then per tensor a
// "name dim0 dim1 ..." line followed by one line of values printed with 17
// significant digits, which round-trips doubles exactly.
void save_checkpoint(const ModelParams& params, const std::string& path);

// Loads into `params`: every stored tensor must already exist with the same
// shape; missing names or shape mismatches throw.
void load_checkpoint(ModelParams& params, const std::string& path);

// Atomic text-file write (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace kelm
