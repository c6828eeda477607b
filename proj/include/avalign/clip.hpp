// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "avalign/embedding.hpp"
#include "avalign/nn.hpp"

namespace avalign {

inline constexpr std::size_t kAudioDim = 527;
inline constexpr std::size_t kVideoDim = 512;
inline constexpr std::size_t kSharedDim = 512;
inline constexpr std::size_t kMappingHiddenDim = 1024;
inline constexpr std::size_t kMappingLayers = 10;

// ---------------------------------------------------------------------------
// Transformation network: a deep MLP projecting a frozen-encoder embedding
// into the shared space. Leaky-ReLU between layers, linear output.
// ---------------------------------------------------------------------------
template <typename T>
struct MappingNetwork {
  std::vector<Linear<T>> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  std::size_t hidden_dim() const { return layers.front().out_dim(); }

  static MappingNetwork init(std::size_t in, std::size_t hidden, std::size_t out,
                             std::size_t n_layers, Rng& rng) {
    if (n_layers < 2) throw ConfigError("mapping network needs at least 2 layers");
    MappingNetwork net;
    net.layers.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
      const std::size_t li = i == 0 ? in : hidden;
      const std::size_t lo = i + 1 == n_layers ? out : hidden;
      net.layers.push_back(Linear<T>::init(li, lo, rng));
    }
    return net;
  }

  struct Cache {
    std::vector<Mat<T>> inputs;   // inputs[i] feeds layers[i]
    std::vector<Mat<T>> pre_act;  // linear outputs before activation (layers 0..n-2)
  };

  Mat<T> forward(const Mat<T>& x, Cache* cache = nullptr) const {
    if (cache) {
      cache->inputs.clear();
      cache->pre_act.clear();
    }
    Mat<T> h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      Mat<T> z = layers[i].forward(h);
      if (i + 1 == layers.size()) {
        h = std::move(z);
      } else {
        if (cache) cache->pre_act.push_back(z);
        h = leaky_relu(z);
      }
    }
    return h;
  }

  Mat<T> backward(const Cache& cache, const Mat<T>& grad_out) {
    Mat<T> g = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
      g = layers[i].backward(cache.inputs[i], g);
      if (i > 0) g = leaky_relu_backward(cache.pre_act[i - 1], g);
    }
    return g;
  }

  void collect_params(std::vector<ParamRef<T>>& out) {
    for (auto& l : layers) l.collect_params(out);
  }

  template <typename U>
  MappingNetwork<U> cast() const {
    MappingNetwork<U> net;
    for (const auto& l : layers) net.layers.push_back(l.template cast<U>());
    return net;
  }
};

// ---------------------------------------------------------------------------
// Dual-head alignment model with a learnable log-temperature.
// ---------------------------------------------------------------------------
inline constexpr double kLogitScaleInit = 2.6592600369327783;  // ln(1/0.07)
inline constexpr double kLogitScaleMax = 100.0;                // clamp on exp(log_scale)

template <typename T>
struct ClipAlignModel {
  MappingNetwork<T> audio_net;
  MappingNetwork<T> video_net;
  T log_scale = T(kLogitScaleInit);
  T grad_log_scale = T(0);

  static ClipAlignModel init(Rng& rng, std::size_t audio_dim = kAudioDim,
                             std::size_t video_dim = kVideoDim,
                             std::size_t hidden = kMappingHiddenDim,
                             std::size_t shared_dim = kSharedDim,
                             std::size_t n_layers = kMappingLayers) {
    ClipAlignModel m;
    m.audio_net = MappingNetwork<T>::init(audio_dim, hidden, shared_dim, n_layers, rng);
    m.video_net = MappingNetwork<T>::init(video_dim, hidden, shared_dim, n_layers, rng);
    m.log_scale = T(kLogitScaleInit);
    return m;
  }

  T scale() const { return T(std::exp(double(log_scale))); }

  void clamp_scale(double max_scale = kLogitScaleMax) {
    const T lim = T(std::log(max_scale));
    if (log_scale > lim) log_scale = lim;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    audio_net.collect_params(out);
    video_net.collect_params(out);
    out.push_back({&log_scale, &grad_log_scale, 1});
    return out;
  }

  template <typename U>
  ClipAlignModel<U> cast() const {
    ClipAlignModel<U> m;
    m.audio_net = audio_net.template cast<U>();
    m.video_net = video_net.template cast<U>();
    m.log_scale = U(log_scale);
    return m;
  }
};

// Projections into the shared space; every output row is unit-norm (zero
// vectors, which a real forward pass cannot produce, pass through).
template <typename T>
Mat<T> project_audio(const ClipAlignModel<T>& model, const Mat<T>& ast_logits) {
  Mat<T> y = model.audio_net.forward(ast_logits);
  l2_normalize_rows_inplace(y);
  return y;
}

template <typename T>
Mat<T> project_video(const ClipAlignModel<T>& model, const Mat<T>& video_embeddings) {
  Mat<T> y = model.video_net.forward(video_embeddings);
  l2_normalize_rows_inplace(y);
  return y;
}

// exp(log_scale) * (A_hat . V_hat^T) for already-normalized projections.
template <typename T>
Mat<T> scaled_cosine_logits(const Mat<T>& audio_hat, const Mat<T>& video_hat, T scale) {
  Mat<T> logits = gemm_nt(audio_hat, video_hat);
  for (T& v : logits.data) v *= scale;
  return logits;
}

// Pairwise logits for equal-sized batches: entry (i, j) is the scaled cosine
// between projected audio i and projected video j.
template <typename T>
Mat<T> similarity_logits(const ClipAlignModel<T>& model, const Mat<T>& audio_batch,
                         const Mat<T>& video_batch) {
  if (audio_batch.rows != video_batch.rows)
    throw DimensionError("similarity_logits: batch sizes differ: " +
                         std::to_string(audio_batch.rows) + " vs " +
                         std::to_string(video_batch.rows));
  if (audio_batch.rows < 2)
    throw DimensionError("similarity_logits: need a batch of at least 2");
  return scaled_cosine_logits(project_audio(model, audio_batch),
                              project_video(model, video_batch), model.scale());
}

// ---------------------------------------------------------------------------
// Symmetric contrastive loss over an N x N logit matrix whose diagonal holds
// the matching pairs: 0.5 * (mean row-wise CE + mean column-wise CE).
// Accumulation in double; softmax is max-shifted.
// ---------------------------------------------------------------------------
template <typename T>
double clip_loss_with_grad(const Mat<T>& logits, Mat<T>* grad = nullptr) {
  const std::size_t n = logits.rows;
  if (n != logits.cols || n < 2)
    throw DimensionError("clip_loss: logits must be square with N >= 2, got " +
                         shape_str(logits.rows, logits.cols));
  if (!logits.all_finite()) throw ValidationError("clip_loss: non-finite logits");

  if (grad) *grad = Mat<T>(n, n);
  double loss = 0.0;
  // Row direction: softmax over j for each audio query i.
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.row(i);
    double mx = double(row[0]);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, double(row[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(double(row[j]) - mx);
    const double lse = mx + std::log(sum);
    loss += 0.5 / double(n) * (lse - double(row[i]));
    if (grad) {
      for (std::size_t j = 0; j < n; ++j) {
        const double p = std::exp(double(row[j]) - mx) / sum;
        grad->at(i, j) += T(0.5 / double(n) * (p - (i == j ? 1.0 : 0.0)));
      }
    }
  }
  // Column direction: softmax over i for each video query j.
  for (std::size_t j = 0; j < n; ++j) {
    double mx = double(logits.at(0, j));
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, double(logits.at(i, j)));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(double(logits.at(i, j)) - mx);
    const double lse = mx + std::log(sum);
    loss += 0.5 / double(n) * (lse - double(logits.at(j, j)));
    if (grad) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = std::exp(double(logits.at(i, j)) - mx) / sum;
        grad->at(i, j) += T(0.5 / double(n) * (p - (i == j ? 1.0 : 0.0)));
      }
    }
  }
  return loss;
}

template <typename T>
double clip_loss(const Mat<T>& logits) {
  return clip_loss_with_grad(logits, static_cast<Mat<T>*>(nullptr));
}

// One forward/backward pass of the whole head on a paired batch. Parameter
// gradients land in the model; the returned value is the batch loss.
template <typename T>
double clip_batch_step(ClipAlignModel<T>& model, const Mat<T>& audio_batch,
                       const Mat<T>& video_batch) {
  typename MappingNetwork<T>::Cache a_cache, v_cache;
  Mat<T> a_proj = model.audio_net.forward(audio_batch, &a_cache);
  Mat<T> v_proj = model.video_net.forward(video_batch, &v_cache);
  Mat<T> a_hat = a_proj;
  Mat<T> v_hat = v_proj;
  const std::vector<double> a_norms = l2_normalize_rows_inplace(a_hat);
  const std::vector<double> v_norms = l2_normalize_rows_inplace(v_hat);

  const T scale = model.scale();
  Mat<T> logits = scaled_cosine_logits(a_hat, v_hat, scale);
  Mat<T> grad_logits;
  const double loss = clip_loss_with_grad(logits, &grad_logits);

  // d loss / d log_scale: logits scale exponentially with it.
  double g_scale = 0.0;
  for (std::size_t i = 0; i < logits.data.size(); ++i)
    g_scale += double(grad_logits.data[i]) * double(logits.data[i]);
  model.grad_log_scale = T(g_scale);

  Mat<T> grad_a_hat = gemm_nn(grad_logits, v_hat);
  for (T& v : grad_a_hat.data) v *= scale;
  Mat<T> grad_v_hat = gemm_tn(grad_logits, a_hat);
  for (T& v : grad_v_hat.data) v *= scale;

  Mat<T> grad_a = l2_normalize_rows_backward(a_hat, a_norms, grad_a_hat);
  Mat<T> grad_v = l2_normalize_rows_backward(v_hat, v_norms, grad_v_hat);
  model.audio_net.backward(a_cache, grad_a);
  model.video_net.backward(v_cache, grad_v);
  return loss;
}

// ---------------------------------------------------------------------------
// Training. Full-scale defaults; tests shrink batch and epochs.
// ---------------------------------------------------------------------------
struct TrainConfig {
  std::size_t batch_size = 1024;
  double learning_rate = 0.001;  // constant, no scheduler
  std::size_t epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("adam betas must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  }

  AdamWConfig adamw() const { return {learning_rate, beta1, beta2, weight_decay, 1e-8}; }
};

struct LossEntry {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
};

struct ClipTrainResult {
  ClipAlignModel<float> model;
  std::vector<LossEntry> history;
};

// Trains both transformation networks and the log-temperature with AdamW.
// Shuffling, init and every later draw come from config.seed; the final
// short batch of each epoch is dropped.
ClipTrainResult train_clip(const PairedDataset& dataset, const TrainConfig& config,
                           const DimPolicy& policy = {});

void save_clip_checkpoint(const std::filesystem::path& path, const ClipAlignModel<float>& model,
                          std::int64_t step);
struct ClipCheckpoint {
  ClipAlignModel<float> model;
  std::int64_t step = 0;
};
ClipCheckpoint load_clip_checkpoint(const std::filesystem::path& path);

void save_loss_csv(const std::filesystem::path& path, const std::vector<LossEntry>& history);

}  // namespace avalign
