// SPDX-License-Identifier: Apache-2.0
#include "avalign/synthetic.hpp"

#include <cmath>

#include "avalign/nn.hpp"
#include "avalign/rng.hpp"

namespace avalign {

void SyntheticSpec::validate() const {
  if (n_pairs == 0) throw ConfigError("n_pairs must be > 0");
  if (latent_dim == 0 || audio_dim == 0 || video_dim == 0)
    throw ConfigError("dims must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (map_depth == 0) throw ConfigError("map_depth must be >= 1");
  if (goal_dim > 0 && goal_map_depth == 0) throw ConfigError("goal_map_depth must be >= 1");
}

namespace {

// Frozen random map: map_depth linear layers with tanh between them, weights
// ~ N(0, 1/sqrt(fan_in)), small random biases. Never trained.
struct FrozenMap {
  std::vector<Linear<float>> layers;

  static FrozenMap make(std::size_t in, std::size_t out, std::size_t depth, Rng& rng) {
    FrozenMap f;
    const std::size_t hidden = std::max<std::size_t>(2 * in, 16);
    for (std::size_t i = 0; i < depth; ++i) {
      const std::size_t li = i == 0 ? in : hidden;
      const std::size_t lo = i + 1 == depth ? out : hidden;
      Linear<float> l = Linear<float>::init(li, lo, rng);
      rng.fill_normal(l.bias.data(), l.bias.size(), 0.2);
      f.layers.push_back(std::move(l));
    }
    return f;
  }

  MatF apply(const MatF& x) const {
    MatF h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size())
        for (float& v : h.data) v = std::tanh(v);
    }
    return h;
  }
};

EmbeddingMatrix to_embedding(MatF m, Modality modality) {
  EmbeddingMatrix e(modality, m.rows, m.cols);
  e.data = std::move(m.data);
  return e;
}

}  // namespace

SyntheticDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const FrozenMap audio_map = FrozenMap::make(spec.latent_dim, spec.audio_dim, spec.map_depth, rng);
  const FrozenMap video_map = FrozenMap::make(spec.latent_dim, spec.video_dim, spec.map_depth, rng);
  FrozenMap goal_map;
  if (spec.goal_dim > 0)
    goal_map = FrozenMap::make(spec.latent_dim, spec.goal_dim, spec.goal_map_depth, rng);

  MatF z(spec.n_pairs, spec.latent_dim);
  rng.fill_normal(z.data.data(), z.data.size());

  MatF audio = audio_map.apply(z);
  MatF video = video_map.apply(z);
  if (spec.noise_sigma > 0.0) {
    for (float& v : audio.data) v += float(rng.normal() * spec.noise_sigma);
    for (float& v : video.data) v += float(rng.normal() * spec.noise_sigma);
  }

  SyntheticDataset out;
  out.pairs.audio = to_embedding(std::move(audio), Modality::audio);
  out.pairs.video = to_embedding(std::move(video), Modality::video);
  for (std::size_t i = 0; i < spec.n_pairs; ++i)
    out.pairs.manifest.entries.push_back(
        {"synth", std::uint32_t(i), i, i, Split::train});

  if (spec.goal_dim > 0) {
    MatF goals = goal_map.apply(z);
    l2_normalize_rows_inplace(goals);  // unit-length targets, cosine-friendly
    out.goals = to_embedding(std::move(goals), Modality::goal);
  }
  return out;
}

PairedDataset shuffle_negatives(const PairedDataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.n_pairs();
  if (n < 2) throw ValidationError("shuffle_negatives: need at least 2 pairs");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  cycle_shuffle(perm, rng);  // single n-cycle, hence no fixed points

  PairedDataset out = dataset;
  for (std::size_t i = 0; i < n; ++i)
    out.manifest.entries[i].video_row = dataset.manifest.entries[perm[i]].video_row;
  return out;
}

}  // namespace avalign
