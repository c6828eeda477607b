// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "avalign/errors.hpp"

namespace avalign {

// One configurable key: canonical name, accepted aliases, default value.
// The default's JSON type doubles as the type check for user values.
struct ConfigKey {
  std::string name;
  std::vector<std::string> aliases;
  nlohmann::json default_value;
};

struct ConfigSchema {
  std::string subcommand;
  std::vector<ConfigKey> keys;

  const ConfigKey* find(const std::string& name_or_alias) const;
  // Nearest known key by edit distance, for error suggestions.
  std::string suggest(const std::string& unknown) const;
};

// Precedence: flag overrides > config file > defaults. Unknown keys are
// rejected with a suggestion; value types must match the default's type.
nlohmann::json resolve_config(const ConfigSchema& schema,
                              const std::optional<std::filesystem::path>& file,
                              const std::vector<std::pair<std::string, nlohmann::json>>& overrides);

// The fully-resolved config is written next to every run's outputs.
void persist_config(const nlohmann::json& resolved, const std::filesystem::path& path);

// Schemas with the paper-table defaults baked in.
ConfigSchema train_clip_schema();   // batch_size 1024, learning_rate 0.001, epochs 100, ...
ConfigSchema train_prior_schema();  // + latent_dim 128, beta 0.001, ...
ConfigSchema window_schema();       // 1 s windows, 75% overlap, 32 fps, 16 frames, 16 kHz
ConfigSchema synth_schema();
ConfigSchema ingest_schema();
ConfigSchema eval_schema();

}  // namespace avalign
