// SPDX-License-Identifier: Apache-2.0
#include "avalign/windowing.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace avalign {

void WindowSpec::validate() const {
  if (!(window_len_s > 0.0)) throw ConfigError("window_len_s must be > 0");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must be in [0, 1)");
  if (!(hop() > 0.0)) throw ConfigError("hop must be > 0 (window_len_s * (1 - overlap))");
  if (!(fps > 0.0)) throw ConfigError("fps must be > 0");
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be > 0");
  if (leading_trim_s < 0.0) throw ConfigError("leading_trim_s must be >= 0");
}

std::vector<std::int64_t> frame_indices(double start_s, double end_s, const WindowSpec& spec) {
  const std::int64_t start_frame = round_half_up(start_s * spec.fps);
  const std::int64_t end_frame = round_half_up(end_s * spec.fps);
  const std::int64_t frames_in_window = end_frame - start_frame;
  if (frames_in_window < std::int64_t(spec.n_frames))
    throw ValidationError("window [" + std::to_string(start_s) + ", " + std::to_string(end_s) +
                          ") holds " + std::to_string(frames_in_window) + " frames, need " +
                          std::to_string(spec.n_frames));
  const double stride = double(frames_in_window) / double(spec.n_frames);
  std::vector<std::int64_t> out(spec.n_frames);
  for (std::size_t k = 0; k < spec.n_frames; ++k)
    out[k] = round_half_up(double(start_frame) + double(k) * stride);
  return out;
}

std::pair<std::int64_t, std::int64_t> audio_sample_range(double start_s, double end_s,
                                                         double sample_rate) {
  return {round_half_up(start_s * sample_rate), round_half_up(end_s * sample_rate)};
}

WindowManifest compute_windows(const std::string& source_id, double duration_s,
                               const WindowSpec& spec) {
  spec.validate();
  if (duration_s < 0.0) throw ValidationError("duration_s must be >= 0");

  WindowManifest manifest;
  manifest.source_id = source_id;

  const double hop = spec.hop();
  const double usable = duration_s - spec.leading_trim_s;
  if (usable < spec.window_len_s) return manifest;

  // Closed form, then nudge to exact loop semantics: the window count is the
  // largest n with trim + (n-1)*hop + window_len <= duration under the same
  // floating-point comparisons a placement loop would make.
  auto fits = [&](std::int64_t i) {
    return spec.leading_trim_s + double(i) * hop + spec.window_len_s <= duration_s;
  };
  std::int64_t n = std::int64_t(std::floor((usable - spec.window_len_s) / hop)) + 1;
  while (n > 0 && !fits(n - 1)) --n;
  while (fits(n)) ++n;

  manifest.windows.reserve(std::size_t(n));
  for (std::int64_t i = 0; i < n; ++i) {
    Window w;
    w.index = std::size_t(i);
    w.start_s = spec.leading_trim_s + double(i) * hop;
    w.end_s = w.start_s + spec.window_len_s;
    w.frame_indices = frame_indices(w.start_s, w.end_s, spec);
    w.audio_sample_range = audio_sample_range(w.start_s, w.end_s, spec.sample_rate);
    manifest.windows.push_back(std::move(w));
  }
  return manifest;
}

std::vector<float> resample_linear(std::span<const float> pcm, double from_rate, double to_rate) {
  if (!(from_rate > 0.0) || !(to_rate > 0.0))
    throw ConfigError("resample_linear: rates must be > 0");
  if (pcm.empty()) return {};

  const auto n_out = std::size_t(round_half_up(double(pcm.size()) * to_rate / from_rate));
  const double ratio = from_rate / to_rate;
  std::vector<float> out(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double pos = double(j) * ratio;
    auto i0 = std::size_t(std::floor(pos));
    if (i0 >= pcm.size() - 1) {  // at or past the final sample: clamp
      out[j] = pcm.back();
      continue;
    }
    const double frac = pos - double(i0);
    out[j] = float(double(pcm[i0]) * (1.0 - frac) + double(pcm[i0 + 1]) * frac);
  }
  return out;
}

void save_window_manifest(const std::filesystem::path& path, const WindowManifest& manifest) {
  nlohmann::json windows = nlohmann::json::array();
  for (const Window& w : manifest.windows) {
    windows.push_back({{"index", w.index},
                       {"start_s", w.start_s},
                       {"end_s", w.end_s},
                       {"frame_indices", w.frame_indices},
                       {"audio_sample_range",
                        {w.audio_sample_range.first, w.audio_sample_range.second}}});
  }
  nlohmann::json j = {{"source_id", manifest.source_id}, {"windows", windows}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

WindowManifest load_window_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("window manifest parse error: " + std::string(e.what()));
  }
  WindowManifest manifest;
  try {
    manifest.source_id = j.at("source_id").get<std::string>();
    for (const auto& jw : j.at("windows")) {
      Window w;
      w.index = jw.at("index").get<std::size_t>();
      w.start_s = jw.at("start_s").get<double>();
      w.end_s = jw.at("end_s").get<double>();
      w.frame_indices = jw.at("frame_indices").get<std::vector<std::int64_t>>();
      auto range = jw.at("audio_sample_range");
      w.audio_sample_range = {range.at(0).get<std::int64_t>(), range.at(1).get<std::int64_t>()};
      manifest.windows.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad window manifest: " + std::string(e.what()));
  }
  return manifest;
}

}  // namespace avalign
