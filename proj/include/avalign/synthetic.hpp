// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "avalign/embedding.hpp"
#include "avalign/mat.hpp"

namespace avalign {

// Paired-embedding generator with known ground truth: both modalities are
// fixed random nonlinear functions of a shared latent draw, plus optional
// Gaussian observation noise. Stands in for real encoder outputs so that
// alignment quality is checkable.
struct SyntheticSpec {
  std::size_t n_pairs = 0;
  std::size_t latent_dim = 32;
  std::size_t audio_dim = 527;
  std::size_t video_dim = 512;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t map_depth = 2;  // frozen layers per modality map
  std::size_t goal_dim = 512;  // companion goal matrix; 0 disables
  std::size_t goal_map_depth = 1;

  void validate() const;
};

struct SyntheticDataset {
  PairedDataset pairs;
  EmbeddingMatrix goals;  // rows = n_pairs when enabled, else 0
};

// Deterministic per seed: same spec, same bytes. All entries start tagged
// train; use split_pairs for a holdout.
SyntheticDataset generate(const SyntheticSpec& spec);

// Deranges the audio->video pairing (no entry keeps its true partner).
// Control condition for retrieval metrics. Requires >= 2 pairs.
PairedDataset shuffle_negatives(const PairedDataset& dataset, std::uint64_t seed);

}  // namespace avalign
