// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avalign/errors.hpp"

namespace avalign {

enum class Modality { audio, video, shared, goal };

std::string to_string(Modality m);
Modality parse_modality(const std::string& s);

// Expected dimensionality per modality. `enforce` off disables the check
// (the config override hook for non-default encoders).
struct DimPolicy {
  std::size_t audio_dim = 527;
  std::size_t video_dim = 512;
  std::size_t goal_dim = 512;
  bool enforce = true;
};

// N x D row-major float32 block produced by a frozen encoder.
struct EmbeddingMatrix {
  Modality modality = Modality::shared;
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(Modality m, std::size_t r, std::size_t d)
      : modality(m), rows(r), dim(d), data(r * d, 0.0f) {}

  float* row(std::size_t r) { return data.data() + r * dim; }
  const float* row(std::size_t r) const { return data.data() + r * dim; }
};

// Throws ValidationError on shape/finiteness/dim-policy violations.
void validate(const EmbeddingMatrix& m, const DimPolicy& policy = {});

// EMB1 binary format, little-endian:
//   "EMB1" | u32 version=1 | u32 modality_len | modality utf-8 | u32 rows | u32 dim
//   | rows*dim float32 payload
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m,
                      const DimPolicy& policy = {});
EmbeddingMatrix read_embeddings(const std::filesystem::path& path, const DimPolicy& policy = {});

struct NormalizeResult {
  EmbeddingMatrix matrix;
  std::vector<std::size_t> zero_rows;  // rows left untouched, reported to the caller
};
NormalizeResult l2_normalize_rows(const EmbeddingMatrix& m);

enum class Split { train, test };

struct PairEntry {
  std::string source_id;
  std::uint32_t window_index = 0;
  std::size_t audio_row = 0;
  std::size_t video_row = 0;
  Split split = Split::train;
};

struct PairManifest {
  std::vector<PairEntry> entries;
};

// Checks row bounds, (source_id, window_index) uniqueness, and that no
// embedding row is referenced twice.
void validate(const PairManifest& manifest, std::size_t audio_rows, std::size_t video_rows);

void save_manifest(const std::filesystem::path& path, const PairManifest& manifest);
PairManifest load_manifest(const std::filesystem::path& path);

struct PairedDataset {
  EmbeddingMatrix audio;
  EmbeddingMatrix video;
  PairManifest manifest;

  std::size_t n_pairs() const { return manifest.entries.size(); }
  std::vector<std::size_t> entry_indices(Split split) const;
};

void validate(const PairedDataset& dataset, const DimPolicy& policy = {});

// Reassigns split tags: floor(test_fraction * n) entries become the test set,
// chosen by a seeded shuffle. Same seed, same split.
PairedDataset split_pairs(const PairedDataset& dataset, double test_fraction, std::uint64_t seed);

}  // namespace avalign
