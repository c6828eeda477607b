// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "avalign/mat.hpp"
#include "avalign/rng.hpp"

namespace avalign {

// View over one trainable tensor and its gradient. Models hand these out in a
// fixed order; the optimizer and checkpoint code never look inside layers.
template <typename T>
struct ParamRef {
  T* value = nullptr;
  T* grad = nullptr;
  std::size_t size = 0;
};

// ---------------------------------------------------------------------------
// Dense layer, y = x * W^T + b.
// ---------------------------------------------------------------------------
template <typename T>
struct Linear {
  Mat<T> weight;            // out x in
  std::vector<T> bias;      // out
  Mat<T> grad_weight;
  std::vector<T> grad_bias;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }

  // Weights ~ N(0, 1/sqrt(fan_in)), biases zero.
  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    Linear l;
    l.weight = Mat<T>(out, in);
    l.bias.assign(out, T(0));
    l.grad_weight = Mat<T>(out, in);
    l.grad_bias.assign(out, T(0));
    const double scale = 1.0 / std::sqrt(double(in));
    rng.fill_normal(l.weight.data.data(), l.weight.size(), scale);
    return l;
  }

  Mat<T> forward(const Mat<T>& x) const {
    if (x.cols != in_dim())
      throw DimensionError("linear_forward: input " + shape_str(x.rows, x.cols) +
                           " incompatible with weight " + shape_str(out_dim(), in_dim()));
    Mat<T> y = gemm_nt(x, weight);
    for (std::size_t r = 0; r < y.rows; ++r) {
      T* p = y.row(r);
      for (std::size_t c = 0; c < y.cols; ++c) p[c] += bias[c];
    }
    return y;
  }

  // grad_W = grad_out^T * x, grad_b = column sums of grad_out,
  // grad_x = grad_out * W. Overwrites the stored parameter gradients in
  // place; the buffers must not move while an optimizer views them.
  Mat<T> backward(const Mat<T>& x, const Mat<T>& grad_out) {
    if (x.cols != in_dim() || grad_out.cols != out_dim() || x.rows != grad_out.rows)
      throw DimensionError("linear_backward: x " + shape_str(x.rows, x.cols) + ", grad_out " +
                           shape_str(grad_out.rows, grad_out.cols) + ", weight " +
                           shape_str(out_dim(), in_dim()));
    gemm_tn_into(grad_out, x, grad_weight);
    for (std::size_t c = 0; c < out_dim(); ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < grad_out.rows; ++r) s += double(grad_out.at(r, c));
      grad_bias[c] = T(s);
    }
    return gemm_nn(grad_out, weight);
  }

  void collect_params(std::vector<ParamRef<T>>& out) {
    out.push_back({weight.data.data(), grad_weight.data.data(), weight.size()});
    out.push_back({bias.data(), grad_bias.data(), bias.size()});
  }

  template <typename U>
  Linear<U> cast() const {
    Linear<U> l;
    l.weight = weight.template cast<U>();
    l.bias.assign(bias.begin(), bias.end());
    l.grad_weight = Mat<U>(weight.rows, weight.cols);
    l.grad_bias.assign(bias.size(), U(0));
    return l;
  }
};

// ---------------------------------------------------------------------------
// Leaky ReLU.
// ---------------------------------------------------------------------------
inline constexpr double kLeakySlope = 0.2;  // StyleGAN mapping-network convention

template <typename T>
Mat<T> leaky_relu(const Mat<T>& x, T slope = T(kLeakySlope)) {
  Mat<T> y = x;
  for (T& v : y.data) v = v >= T(0) ? v : slope * v;
  return y;
}

// Gradient is 1 for x >= 0, slope otherwise (1 at exactly zero).
template <typename T>
Mat<T> leaky_relu_backward(const Mat<T>& x, const Mat<T>& grad_out, T slope = T(kLeakySlope)) {
  if (!x.same_shape(grad_out))
    throw DimensionError("leaky_relu_backward: shape mismatch " + shape_str(x.rows, x.cols) +
                         " vs " + shape_str(grad_out.rows, grad_out.cols));
  Mat<T> g(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    g.data[i] = x.data[i] >= T(0) ? grad_out.data[i] : slope * grad_out.data[i];
  return g;
}

// ---------------------------------------------------------------------------
// Layer normalization over the feature dimension, population (1/D) variance.
// ---------------------------------------------------------------------------
template <typename T>
struct LayerNorm {
  std::vector<T> gamma;
  std::vector<T> beta;
  T epsilon = T(1e-5);
  std::vector<T> grad_gamma;
  std::vector<T> grad_beta;

  struct Cache {
    Mat<T> x_hat;                 // normalized pre-affine activations
    std::vector<double> inv_std;  // per row
  };

  std::size_t dim() const { return gamma.size(); }

  static LayerNorm init(std::size_t d) {
    LayerNorm ln;
    ln.gamma.assign(d, T(1));
    ln.beta.assign(d, T(0));
    ln.grad_gamma.assign(d, T(0));
    ln.grad_beta.assign(d, T(0));
    return ln;
  }

  Mat<T> forward(const Mat<T>& x, Cache* cache = nullptr) const {
    if (x.cols != dim())
      throw DimensionError("layer_norm: input " + shape_str(x.rows, x.cols) + " vs dim " +
                           std::to_string(dim()));
    Mat<T> y(x.rows, x.cols);
    if (cache) {
      cache->x_hat = Mat<T>(x.rows, x.cols);
      cache->inv_std.assign(x.rows, 0.0);
    }
    const std::size_t d = x.cols;
    for (std::size_t r = 0; r < x.rows; ++r) {
      const T* p = x.row(r);
      double mean = 0.0;
      for (std::size_t c = 0; c < d; ++c) mean += double(p[c]);
      mean /= double(d);
      double var = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        double diff = double(p[c]) - mean;
        var += diff * diff;
      }
      var /= double(d);
      const double inv_std = 1.0 / std::sqrt(var + double(epsilon));
      T* q = y.row(r);
      for (std::size_t c = 0; c < d; ++c) {
        const T xh = T((double(p[c]) - mean) * inv_std);
        if (cache) cache->x_hat.at(r, c) = xh;
        q[c] = gamma[c] * xh + beta[c];
      }
      if (cache) cache->inv_std[r] = inv_std;
    }
    return y;
  }

  // dx = inv_std * (dxh - mean(dxh) - x_hat * mean(dxh * x_hat)),
  // with dxh = grad_out * gamma and means over the feature dim.
  Mat<T> backward(const Cache& cache, const Mat<T>& grad_out) {
    if (!cache.x_hat.same_shape(grad_out))
      throw DimensionError("layer_norm backward: shape mismatch");
    const std::size_t d = grad_out.cols;
    Mat<T> grad_in(grad_out.rows, d);
    std::fill(grad_gamma.begin(), grad_gamma.end(), T(0));
    std::fill(grad_beta.begin(), grad_beta.end(), T(0));
    for (std::size_t r = 0; r < grad_out.rows; ++r) {
      const T* g = grad_out.row(r);
      const T* xh = cache.x_hat.row(r);
      double mean_dxh = 0.0, mean_dxh_xh = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double dxh = double(g[c]) * double(gamma[c]);
        mean_dxh += dxh;
        mean_dxh_xh += dxh * double(xh[c]);
        grad_gamma[c] += T(double(g[c]) * double(xh[c]));
        grad_beta[c] += g[c];
      }
      mean_dxh /= double(d);
      mean_dxh_xh /= double(d);
      T* gi = grad_in.row(r);
      for (std::size_t c = 0; c < d; ++c) {
        const double dxh = double(g[c]) * double(gamma[c]);
        gi[c] = T(cache.inv_std[r] * (dxh - mean_dxh - double(xh[c]) * mean_dxh_xh));
      }
    }
    return grad_in;
  }

  void collect_params(std::vector<ParamRef<T>>& out) {
    out.push_back({gamma.data(), grad_gamma.data(), gamma.size()});
    out.push_back({beta.data(), grad_beta.data(), beta.size()});
  }

  template <typename U>
  LayerNorm<U> cast() const {
    LayerNorm<U> ln;
    ln.gamma.assign(gamma.begin(), gamma.end());
    ln.beta.assign(beta.begin(), beta.end());
    ln.epsilon = U(epsilon);
    ln.grad_gamma.assign(gamma.size(), U(0));
    ln.grad_beta.assign(beta.size(), U(0));
    return ln;
  }
};

// ---------------------------------------------------------------------------
// AdamW: decoupled weight decay (p -= lr*wd*p) applied before the
// bias-corrected Adam update. Update arithmetic runs in double.
// ---------------------------------------------------------------------------
struct AdamWConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double epsilon = 1e-8;
};

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  long long step_count() const { return t_; }

  void step(const std::vector<ParamRef<T>>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size, T(0));
        v_.emplace_back(p.size, T(0));
      }
    }
    if (m_.size() != params.size())
      throw DimensionError("adamw_step: parameter group count changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const ParamRef<T>& p = params[k];
      if (m_[k].size() != p.size) throw DimensionError("adamw_step: parameter shape changed");
      for (std::size_t i = 0; i < p.size; ++i) {
        double w = double(p.value[i]);
        const double g = double(p.grad[i]);
        w -= cfg_.lr * cfg_.weight_decay * w;
        const double m = cfg_.beta1 * double(m_[k][i]) + (1.0 - cfg_.beta1) * g;
        const double v = cfg_.beta2 * double(v_[k][i]) + (1.0 - cfg_.beta2) * g * g;
        m_[k][i] = T(m);
        v_[k][i] = T(v);
        w -= cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.epsilon);
        p.value[i] = T(w);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  long long t_ = 0;
};

// ---------------------------------------------------------------------------
// Central-difference gradient checker (the verification oracle; always runs
// in double).
// ---------------------------------------------------------------------------
using LossFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Compares grad_fn against (f(p+h) - f(p-h)) / 2h per coordinate and returns
// the max of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// max_coords > 0 spot-checks that many randomly chosen coordinates.
inline double grad_check(const LossFn& loss_fn, const GradFn& grad_fn,
                         const std::vector<double>& params, double step = 1e-3,
                         std::size_t max_coords = 0, std::uint64_t coord_seed = 0) {
  const std::vector<double> analytic = grad_fn(params);
  if (analytic.size() != params.size())
    throw DimensionError("grad_check: gradient size != parameter size");

  std::vector<std::size_t> coords;
  if (max_coords == 0 || max_coords >= params.size()) {
    coords.resize(params.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  } else {
    Rng rng(coord_seed);
    std::vector<std::size_t> all(params.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    shuffle(all, rng);
    coords.assign(all.begin(), all.begin() + long(max_coords));
  }

  double max_rel = 0.0;
  std::vector<double> probe = params;
  for (std::size_t i : coords) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = loss_fn(probe);
    probe[i] = saved - step;
    const double down = loss_fn(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw ValidationError("grad_check: non-finite loss at coordinate " + std::to_string(i));
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace avalign
