// SPDX-License-Identifier: Apache-2.0
#include "avalign/config.hpp"

#include <algorithm>
#include <fstream>

namespace avalign {

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

bool type_compatible(const nlohmann::json& def, const nlohmann::json& value) {
  if (def.is_number() && value.is_number()) return true;
  if (def.is_boolean() && value.is_boolean()) return true;
  if (def.is_string() && value.is_string()) return true;
  if (def.is_array() && value.is_array()) return true;
  return def.type() == value.type();
}

}  // namespace

const ConfigKey* ConfigSchema::find(const std::string& name_or_alias) const {
  for (const ConfigKey& k : keys) {
    if (k.name == name_or_alias) return &k;
    for (const std::string& a : k.aliases)
      if (a == name_or_alias) return &k;
  }
  return nullptr;
}

std::string ConfigSchema::suggest(const std::string& unknown) const {
  std::string best;
  std::size_t best_dist = std::size_t(-1);
  for (const ConfigKey& k : keys) {
    const std::size_t d = edit_distance(unknown, k.name);
    if (d < best_dist) {
      best_dist = d;
      best = k.name;
    }
  }
  return best;
}

nlohmann::json resolve_config(
    const ConfigSchema& schema, const std::optional<std::filesystem::path>& file,
    const std::vector<std::pair<std::string, nlohmann::json>>& overrides) {
  nlohmann::json resolved;
  for (const ConfigKey& k : schema.keys) resolved[k.name] = k.default_value;

  auto apply = [&](const std::string& key, const nlohmann::json& value, const char* origin) {
    const ConfigKey* k = schema.find(key);
    if (!k)
      throw ConfigError("unknown " + schema.subcommand + " config key '" + key + "' (" + origin +
                        "); did you mean '" + schema.suggest(key) + "'?");
    if (!type_compatible(k->default_value, value))
      throw ConfigError("config key '" + k->name + "' has wrong type (" + origin + ")");
    resolved[k->name] = value;
  };

  if (file) {
    std::ifstream is(*file);
    if (!is) throw ConfigError("cannot open config file: " + file->string());
    nlohmann::json doc;
    try {
      is >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config file " + file->string() + ": " + e.what());
    }
    if (doc.is_null()) doc = nlohmann::json::object();  // empty file == defaults
    if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : doc.items()) apply(key, value, "config file");
  }
  for (const auto& [key, value] : overrides) apply(key, value, "command line");
  return resolved;
}

void persist_config(const nlohmann::json& resolved, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << resolved.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

ConfigSchema train_clip_schema() {
  return {"train-clip",
          {{"batch_size", {"batch"}, 1024},
           {"learning_rate", {"lr"}, 0.001},
           {"epochs", {}, 100},
           {"beta1", {"adam_beta1"}, 0.9},
           {"beta2", {"adam_beta2"}, 0.999},
           {"weight_decay", {"wd"}, 0.01},
           {"seed", {}, 0}}};
}

ConfigSchema train_prior_schema() {
  ConfigSchema s = train_clip_schema();
  s.subcommand = "train-prior";
  s.keys.push_back({"latent_dim", {}, 128});
  s.keys.push_back({"beta", {"kl_weight"}, 0.001});
  s.keys.push_back({"kl_warmup", {}, false});
  s.keys.push_back({"kl_warmup_fraction", {}, 0.1});
  s.keys.push_back({"recon", {"reconstruction"}, "mse"});
  return s;
}

ConfigSchema window_schema() {
  return {"window",
          {{"window_len_s", {"window_length"}, 1.0},
           {"overlap", {}, 0.75},
           {"fps", {"frame_rate"}, 32.0},
           {"n_frames", {}, 16},
           {"sample_rate", {}, 16000.0},
           {"leading_trim_s", {"trim"}, 0.0}}};
}

ConfigSchema synth_schema() {
  return {"synth",
          {{"n_pairs", {}, 2000},
           {"latent_dim", {}, 32},
           {"audio_dim", {}, 527},
           {"video_dim", {}, 512},
           {"noise_sigma", {"sigma"}, 0.0},
           {"seed", {}, 0},
           {"map_depth", {}, 2},
           {"goal_dim", {}, 512},
           {"goal_map_depth", {}, 1}}};
}

ConfigSchema ingest_schema() {
  return {"ingest",
          {{"test_fraction", {}, 0.1},
           {"seed", {}, 0},
           {"audio_dim", {}, 527},
           {"video_dim", {}, 512},
           {"enforce_dims", {}, true}}};
}

ConfigSchema eval_schema() {
  return {"eval",
          {{"ks", {"recall_ks"}, nlohmann::json::array({1, 5, 10})},
           {"seed", {}, 0},
           {"direction", {}, "audio_to_video"}}};
}

}  // namespace avalign
