// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint archive: a single binary file
//
//   8 bytes   magic "SAMMESE1"
//   8 bytes   little-endian u64 manifest length L
//   L bytes   UTF-8 JSON manifest
//   payload   raw little-endian float64 arrays, in manifest order
//
// The manifest lists every parameter as {name, module, shape, trainable} plus
// the architecture hash and settings of the RunConfig that produced it. The
// layout contains no timestamps, so identical parameters give identical bytes.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sammese/config.hpp"
#include "sammese/registry.hpp"

namespace sammese {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Archive {
  nlohmann::json manifest;
  std::vector<std::pair<std::string, Tensor>> arrays;
};

void write_archive(const std::string& path, const Archive& archive);
Archive read_archive(const std::string& path);

/// Serialises every registry entry with its frozen/trainable membership.
void save_checkpoint(const std::string& path, const ParameterRegistry& reg, const RunConfig& cfg);

/// Restores all parameters. Fails when the architecture hash, parameter set,
/// shapes or frozen/trainable membership disagree with the current model.
void load_checkpoint(const std::string& path, ParameterRegistry& reg, const RunConfig& cfg);

}  // namespace sammese
