// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avalign/errors.hpp"

namespace avalign {

// Sliding-window parameters. Defaults: 1 s windows, 75% overlap (hop 0.25 s),
// 32 fps video with 16 sampled frames, 16 kHz audio.
struct WindowSpec {
  double window_len_s = 1.0;
  double overlap = 0.75;
  double fps = 32.0;
  std::size_t n_frames = 16;
  double sample_rate = 16000.0;
  double leading_trim_s = 0.0;  // skip this much media before the first window

  double hop() const { return window_len_s * (1.0 - overlap); }
  void validate() const;  // ConfigError on hop <= 0 etc.
};

struct Window {
  std::size_t index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<std::int64_t> frame_indices;
  std::pair<std::int64_t, std::int64_t> audio_sample_range{0, 0};  // half-open
};

struct WindowManifest {
  std::string source_id;
  std::vector<Window> windows;
};

// Time->integer conversions use round-half-up so manifests are bit-exact.
inline std::int64_t round_half_up(double x) { return std::int64_t(std::floor(x + 0.5)); }

// Frame indices for one window: round(start_frame + k * frames_in_window / n_frames),
// k = 0..n_frames-1. Strictly increasing and strictly inside the window.
std::vector<std::int64_t> frame_indices(double start_s, double end_s, const WindowSpec& spec);

std::pair<std::int64_t, std::int64_t> audio_sample_range(double start_s, double end_s,
                                                         double sample_rate);

// All windows of a clip: starts at trim + i*hop, count is the number of full
// windows that fit. Sub-window tails are dropped.
WindowManifest compute_windows(const std::string& source_id, double duration_s,
                               const WindowSpec& spec);

// Linear-interpolation resampler. Output length = round(n * to_rate/from_rate);
// positions past the last input sample clamp to it.
std::vector<float> resample_linear(std::span<const float> pcm, double from_rate, double to_rate);

void save_window_manifest(const std::filesystem::path& path, const WindowManifest& manifest);
WindowManifest load_window_manifest(const std::filesystem::path& path);

}  // namespace avalign
