#pragma once

#include <cstdint>
#include <string>

#include "mira/harness.hpp"
#include "mira/model.hpp"
#include "mira/series.hpp"

// Flat run configuration: `key = value` lines with `#` comments. Every key
// has a default except the data path; unknown keys are rejected. The
// MIRA_SEED environment variable supplies the default seed, overridden by an
// explicit `seed` key or command-line flag.

namespace mira::runconfig {

struct RunConfig {
  std::string preset = "tiny";
  model::ModelConfig model = model::ModelConfig::tiny();
  harness::TrainConfig train;
  series::WindowOptions window;
  std::string data_path;
  std::uint64_t seed = 0;

  // Applies one key; throws std::invalid_argument naming unknown keys or
  // malformed values. `model.preset` resets all model.* keys, so it is
  // applied before other keys when parsing a whole file.
  void set(const std::string& key, const std::string& value);
};

RunConfig parse(const std::string& text);
RunConfig parse_file(const std::string& path);

}  // namespace mira::runconfig
