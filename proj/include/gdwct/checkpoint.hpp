#pragma once

// Binary checkpoint container:
//   "GDWCT1"
//   u64 header length, header text (config lines plus "state.*" lines)
//   u64 record count, then per record:
//     u32 name length, name, u32 ndim, u64 dims[ndim], f64 data[numel]
// All integers and reals little-endian.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gdwct/config.hpp"
#include "gdwct/networks.hpp"

namespace gdwct {

struct Checkpoint {
  TrainConfig config;
  std::map<std::string, std::string> state;  // written as "state.<key> = <value>"
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

// Writes to a temporary sibling then renames, so an existing file is never
// left half-written.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// IoError if the file cannot be opened, FormatError on bad magic or truncation,
// ConfigError if the embedded config is invalid.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies named tensors into `params`; FormatError if one is missing or its
// shape differs.
void load_parameters(const ParameterList& params, const Checkpoint& ckpt);

// Rebuilds the translation model stored in a checkpoint.
TranslationModel load_model(const Checkpoint& ckpt);

}  // namespace gdwct
