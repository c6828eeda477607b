// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "avalign/clip.hpp"
#include "avalign/nn.hpp"

namespace avalign {

// ---------------------------------------------------------------------------
// Conditional VAE mapping a condition embedding to samples in the target
// goal-embedding space. Encoder and decoder are two-layer MLPs (hidden 256)
// with layer normalization between the hidden layers.
// ---------------------------------------------------------------------------
struct PriorConfig {
  std::size_t cond_dim = 512;
  std::size_t goal_dim = 512;
  std::size_t hidden_dim = 256;
  std::size_t latent_dim = 128;
  double beta = 0.001;  // KL weight
  bool kl_warmup = false;
  double kl_warmup_fraction = 0.1;  // of total steps, when warmup is on
  enum class Recon { mse, cosine };
  Recon recon = Recon::mse;
};

template <typename T>
struct CvaePrior {
  std::size_t cond_dim = 512, goal_dim = 512, hidden_dim = 256, latent_dim = 128;

  Linear<T> enc_fc1, enc_fc2, enc_mu, enc_logvar;
  LayerNorm<T> enc_ln;
  Linear<T> dec_fc1, dec_fc2, dec_out;
  LayerNorm<T> dec_ln;

  static CvaePrior init(const PriorConfig& cfg, Rng& rng) {
    CvaePrior p;
    p.cond_dim = cfg.cond_dim;
    p.goal_dim = cfg.goal_dim;
    p.hidden_dim = cfg.hidden_dim;
    p.latent_dim = cfg.latent_dim;
    p.enc_fc1 = Linear<T>::init(cfg.goal_dim + cfg.cond_dim, cfg.hidden_dim, rng);
    p.enc_ln = LayerNorm<T>::init(cfg.hidden_dim);
    p.enc_fc2 = Linear<T>::init(cfg.hidden_dim, cfg.hidden_dim, rng);
    p.enc_mu = Linear<T>::init(cfg.hidden_dim, cfg.latent_dim, rng);
    p.enc_logvar = Linear<T>::init(cfg.hidden_dim, cfg.latent_dim, rng);
    p.dec_fc1 = Linear<T>::init(cfg.latent_dim + cfg.cond_dim, cfg.hidden_dim, rng);
    p.dec_ln = LayerNorm<T>::init(cfg.hidden_dim);
    p.dec_fc2 = Linear<T>::init(cfg.hidden_dim, cfg.hidden_dim, rng);
    p.dec_out = Linear<T>::init(cfg.hidden_dim, cfg.goal_dim, rng);
    return p;
  }

  struct EncodeCache {
    Mat<T> x, pre1, h1n, pre2, h2;
    typename LayerNorm<T>::Cache ln;
  };
  struct DecodeCache {
    Mat<T> x, pre1, h1n, pre2, h2;
    typename LayerNorm<T>::Cache ln;
  };
  struct EncodeOut {
    Mat<T> mu, log_var;
  };

  EncodeOut encode(const Mat<T>& goal, const Mat<T>& cond, EncodeCache* cache = nullptr) const {
    if (goal.cols != goal_dim || cond.cols != cond_dim || goal.rows != cond.rows)
      throw DimensionError("cvae encode: goal " + shape_str(goal.rows, goal.cols) + ", cond " +
                           shape_str(cond.rows, cond.cols) + " (want dims " +
                           std::to_string(goal_dim) + "/" + std::to_string(cond_dim) + ")");
    Mat<T> x = concat_cols(goal, cond);
    Mat<T> pre1 = enc_fc1.forward(x);
    Mat<T> h1 = leaky_relu(pre1);
    typename LayerNorm<T>::Cache ln_cache;
    Mat<T> h1n = enc_ln.forward(h1, cache ? &ln_cache : nullptr);
    Mat<T> pre2 = enc_fc2.forward(h1n);
    Mat<T> h2 = leaky_relu(pre2);
    EncodeOut out{enc_mu.forward(h2), enc_logvar.forward(h2)};
    if (cache) {
      cache->x = std::move(x);
      cache->pre1 = std::move(pre1);
      cache->h1n = std::move(h1n);
      cache->pre2 = std::move(pre2);
      cache->h2 = std::move(h2);
      cache->ln = std::move(ln_cache);
    }
    return out;
  }

  // Returns the gradient w.r.t. the concatenated (goal, cond) input.
  Mat<T> encode_backward(const EncodeCache& cache, const Mat<T>& grad_mu,
                         const Mat<T>& grad_logvar) {
    Mat<T> g_h2 = enc_mu.backward(cache.h2, grad_mu);
    Mat<T> g_h2b = enc_logvar.backward(cache.h2, grad_logvar);
    for (std::size_t i = 0; i < g_h2.data.size(); ++i) g_h2.data[i] += g_h2b.data[i];
    Mat<T> g_pre2 = leaky_relu_backward(cache.pre2, g_h2);
    Mat<T> g_h1n = enc_fc2.backward(cache.h1n, g_pre2);
    Mat<T> g_h1 = enc_ln.backward(cache.ln, g_h1n);
    Mat<T> g_pre1 = leaky_relu_backward(cache.pre1, g_h1);
    return enc_fc1.backward(cache.x, g_pre1);
  }

  Mat<T> decode(const Mat<T>& z, const Mat<T>& cond, DecodeCache* cache = nullptr) const {
    if (z.cols != latent_dim || cond.cols != cond_dim || z.rows != cond.rows)
      throw DimensionError("cvae decode: z " + shape_str(z.rows, z.cols) + ", cond " +
                           shape_str(cond.rows, cond.cols) + " (want dims " +
                           std::to_string(latent_dim) + "/" + std::to_string(cond_dim) + ")");
    Mat<T> x = concat_cols(z, cond);
    Mat<T> pre1 = dec_fc1.forward(x);
    Mat<T> h1 = leaky_relu(pre1);
    typename LayerNorm<T>::Cache ln_cache;
    Mat<T> h1n = dec_ln.forward(h1, cache ? &ln_cache : nullptr);
    Mat<T> pre2 = dec_fc2.forward(h1n);
    Mat<T> h2 = leaky_relu(pre2);
    Mat<T> out = dec_out.forward(h2);
    if (cache) {
      cache->x = std::move(x);
      cache->pre1 = std::move(pre1);
      cache->h1n = std::move(h1n);
      cache->pre2 = std::move(pre2);
      cache->h2 = std::move(h2);
      cache->ln = std::move(ln_cache);
    }
    return out;
  }

  // Returns the gradient w.r.t. the concatenated (z, cond) input.
  Mat<T> decode_backward(const DecodeCache& cache, const Mat<T>& grad_out) {
    Mat<T> g_h2 = dec_out.backward(cache.h2, grad_out);
    Mat<T> g_pre2 = leaky_relu_backward(cache.pre2, g_h2);
    Mat<T> g_h1n = dec_fc2.backward(cache.h1n, g_pre2);
    Mat<T> g_h1 = dec_ln.backward(cache.ln, g_h1n);
    Mat<T> g_pre1 = leaky_relu_backward(cache.pre1, g_h1);
    return dec_fc1.backward(cache.x, g_pre1);
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    enc_fc1.collect_params(out);
    enc_ln.collect_params(out);
    enc_fc2.collect_params(out);
    enc_mu.collect_params(out);
    enc_logvar.collect_params(out);
    dec_fc1.collect_params(out);
    dec_ln.collect_params(out);
    dec_fc2.collect_params(out);
    dec_out.collect_params(out);
    return out;
  }

  template <typename U>
  CvaePrior<U> cast() const {
    CvaePrior<U> p;
    p.cond_dim = cond_dim;
    p.goal_dim = goal_dim;
    p.hidden_dim = hidden_dim;
    p.latent_dim = latent_dim;
    p.enc_fc1 = enc_fc1.template cast<U>();
    p.enc_ln = enc_ln.template cast<U>();
    p.enc_fc2 = enc_fc2.template cast<U>();
    p.enc_mu = enc_mu.template cast<U>();
    p.enc_logvar = enc_logvar.template cast<U>();
    p.dec_fc1 = dec_fc1.template cast<U>();
    p.dec_ln = dec_ln.template cast<U>();
    p.dec_fc2 = dec_fc2.template cast<U>();
    p.dec_out = dec_out.template cast<U>();
    return p;
  }

  static Mat<T> concat_cols(const Mat<T>& a, const Mat<T>& b) {
    Mat<T> out(a.rows, a.cols + b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
      std::copy(a.row(r), a.row(r) + a.cols, out.row(r));
      std::copy(b.row(r), b.row(r) + b.cols, out.row(r) + a.cols);
    }
    return out;
  }
};

// z = mu + exp(0.5 * log_var) * noise, elementwise.
template <typename T>
Mat<T> reparameterize(const Mat<T>& mu, const Mat<T>& log_var, const Mat<T>& noise) {
  if (!mu.same_shape(log_var) || !mu.same_shape(noise))
    throw DimensionError("reparameterize: shape mismatch");
  Mat<T> z(mu.rows, mu.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i)
    z.data[i] = mu.data[i] + T(std::exp(0.5 * double(log_var.data[i]))) * noise.data[i];
  return z;
}

struct ElboParts {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

// recon = MSE over goal dims (batch mean), kl = batch mean of
// -0.5 * sum(1 + log_var - mu^2 - exp(log_var)), total = recon + beta * kl.
template <typename T>
ElboParts elbo_loss(const Mat<T>& goal, const Mat<T>& goal_hat, const Mat<T>& mu,
                    const Mat<T>& log_var, double beta) {
  if (!goal.same_shape(goal_hat) || !mu.same_shape(log_var) || goal.rows != mu.rows)
    throw DimensionError("elbo_loss: shape mismatch");
  if (!goal.all_finite() || !goal_hat.all_finite() || !mu.all_finite() || !log_var.all_finite())
    throw ValidationError("elbo_loss: non-finite inputs");
  ElboParts parts;
  double se = 0.0;
  for (std::size_t i = 0; i < goal.data.size(); ++i) {
    const double d = double(goal_hat.data[i]) - double(goal.data[i]);
    se += d * d;
  }
  parts.recon = se / double(goal.data.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i) {
    const double m = double(mu.data[i]);
    const double lv = double(log_var.data[i]);
    kl += -0.5 * (1.0 + lv - m * m - std::exp(lv));
  }
  parts.kl = kl / double(mu.rows);
  parts.total = parts.recon + beta * parts.kl;
  return parts;
}

// One ELBO forward/backward pass with an externally supplied noise draw.
// Parameter gradients land in the model. Shared by training and the
// gradient-fidelity checks.
template <typename T>
ElboParts prior_step(CvaePrior<T>& model, const Mat<T>& goal, const Mat<T>& cond,
                     const Mat<T>& noise, double beta,
                     PriorConfig::Recon recon_kind = PriorConfig::Recon::mse) {
  typename CvaePrior<T>::EncodeCache enc_cache;
  auto [mu, log_var] = model.encode(goal, cond, &enc_cache);
  const Mat<T> z = reparameterize(mu, log_var, noise);
  typename CvaePrior<T>::DecodeCache dec_cache;
  const Mat<T> goal_hat = model.decode(z, cond, &dec_cache);

  ElboParts parts;
  Mat<T> grad_hat(goal.rows, goal.cols);
  if (recon_kind == PriorConfig::Recon::mse) {
    double se = 0.0;
    const double inv = 1.0 / double(goal.data.size());
    for (std::size_t i = 0; i < goal.data.size(); ++i) {
      const double d = double(goal_hat.data[i]) - double(goal.data[i]);
      se += d * d;
      grad_hat.data[i] = T(2.0 * d * inv);
    }
    parts.recon = se * inv;
  } else {
    // cosine distance: 1 - mean_i cos(goal_hat_i, goal_i)
    double acc = 0.0;
    const double invn = 1.0 / double(goal.rows);
    for (std::size_t r = 0; r < goal.rows; ++r) {
      const T* y = goal.row(r);
      const T* yh = goal_hat.row(r);
      double dot = 0.0, ny = 0.0, nyh = 0.0;
      for (std::size_t c = 0; c < goal.cols; ++c) {
        dot += double(y[c]) * double(yh[c]);
        ny += double(y[c]) * double(y[c]);
        nyh += double(yh[c]) * double(yh[c]);
      }
      ny = std::sqrt(ny);
      nyh = std::sqrt(nyh);
      if (ny < 1e-12 || nyh < 1e-12) continue;  // degenerate row contributes nothing
      const double cos = dot / (ny * nyh);
      acc += cos;
      T* g = grad_hat.row(r);
      for (std::size_t c = 0; c < goal.cols; ++c)
        g[c] = T(-invn * (double(y[c]) / (ny * nyh) - cos * double(yh[c]) / (nyh * nyh)));
    }
    parts.recon = 1.0 - acc * invn;
  }

  double kl = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i) {
    const double m = double(mu.data[i]);
    const double lv = double(log_var.data[i]);
    kl += -0.5 * (1.0 + lv - m * m - std::exp(lv));
  }
  parts.kl = kl / double(mu.rows);
  parts.total = parts.recon + beta * parts.kl;

  // Decoder path, then the reparameterization split, then the encoder.
  const Mat<T> grad_dec_in = model.decode_backward(dec_cache, grad_hat);
  Mat<T> grad_mu(mu.rows, mu.cols);
  Mat<T> grad_logvar(mu.rows, mu.cols);
  const double invn = 1.0 / double(mu.rows);
  for (std::size_t r = 0; r < mu.rows; ++r) {
    for (std::size_t c = 0; c < mu.cols; ++c) {
      const double gz = double(grad_dec_in.at(r, c));  // z occupies the first columns
      const double lv = double(log_var.at(r, c));
      grad_mu.at(r, c) = T(gz + beta * double(mu.at(r, c)) * invn);
      grad_logvar.at(r, c) = T(gz * double(noise.at(r, c)) * 0.5 * std::exp(0.5 * lv) +
                               beta * (std::exp(lv) - 1.0) * 0.5 * invn);
    }
  }
  model.encode_backward(enc_cache, grad_mu, grad_logvar);
  return parts;
}

// ---------------------------------------------------------------------------
// Training and inference.
// ---------------------------------------------------------------------------
struct PriorPairs {
  MatF condition;  // n x cond_dim
  MatF target;     // n x goal_dim
};

struct PriorTrainConfig {
  PriorConfig prior;
  TrainConfig train;
};

struct PriorLossEntry {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct PriorTrainResult {
  CvaePrior<float> model;
  std::vector<PriorLossEntry> history;
};

PriorTrainResult train_prior(const PriorPairs& pairs, const PriorTrainConfig& config);

// Draws z from the standard normal prior and decodes it under each condition.
// Output rows are grouped per condition: row i*n_samples + s is sample s for
// condition i. Same seed, same bytes.
MatF sample_goal(const CvaePrior<float>& prior, const MatF& condition, std::uint64_t seed,
                 std::size_t n_samples = 1);

// Full inference chain: frozen audio logits -> shared space -> goal space.
MatF map_audio_to_goal(const ClipAlignModel<float>& clip_model, const CvaePrior<float>& prior,
                       const MatF& ast_logits, std::uint64_t seed);

void save_prior_checkpoint(const std::filesystem::path& path, const CvaePrior<float>& model,
                           std::int64_t step);
struct PriorCheckpoint {
  CvaePrior<float> model;
  std::int64_t step = 0;
};
PriorCheckpoint load_prior_checkpoint(const std::filesystem::path& path);

void save_prior_loss_csv(const std::filesystem::path& path,
                         const std::vector<PriorLossEntry>& history);

}  // namespace avalign
