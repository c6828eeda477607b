// SPDX-License-Identifier: Apache-2.0
#include "avalign/prior.hpp"

#include <cstdio>
#include <fstream>

#include "avalign/checkpoint.hpp"

namespace avalign {

namespace {

MatF gather(const MatF& m, const std::vector<std::size_t>& rows) {
  MatF out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(m.row(rows[i]), m.row(rows[i]) + m.cols, out.row(i));
  return out;
}

}  // namespace

PriorTrainResult train_prior(const PriorPairs& pairs, const PriorTrainConfig& config) {
  config.train.validate();
  const PriorConfig& pc = config.prior;
  if (pairs.condition.rows != pairs.target.rows)
    throw ValidationError("train_prior: condition/target row counts differ");
  if (pairs.condition.cols != pc.cond_dim || pairs.target.cols != pc.goal_dim)
    throw DimensionError("train_prior: pair dims " +
                         shape_str(pairs.condition.cols, pairs.target.cols) + " vs config " +
                         shape_str(pc.cond_dim, pc.goal_dim));
  const std::size_t n = pairs.condition.rows;
  if (n < config.train.batch_size)
    throw TrainingError("prior training set has " + std::to_string(n) +
                        " pairs, need at least one full batch of " +
                        std::to_string(config.train.batch_size));

  Rng rng(config.train.seed);
  PriorTrainResult result{CvaePrior<float>::init(pc, rng), {}};
  CvaePrior<float>& model = result.model;
  AdamW<float> optimizer(config.train.adamw());
  const std::vector<ParamRef<float>> params = model.params();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t batches_per_epoch = n / config.train.batch_size;
  const std::size_t total_steps = config.train.epochs * batches_per_epoch;
  const auto warmup_steps =
      pc.kl_warmup ? std::size_t(std::ceil(pc.kl_warmup_fraction * double(total_steps))) : 0;

  std::vector<std::size_t> batch_rows(config.train.batch_size);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      for (std::size_t k = 0; k < config.train.batch_size; ++k)
        batch_rows[k] = order[b * config.train.batch_size + k];
      const MatF cond = gather(pairs.condition, batch_rows);
      const MatF goal = gather(pairs.target, batch_rows);

      MatF noise(goal.rows, pc.latent_dim);
      rng.fill_normal(noise.data.data(), noise.data.size());
      const double beta = warmup_steps > 0 && step < warmup_steps
                              ? pc.beta * double(step + 1) / double(warmup_steps)
                              : pc.beta;

      const ElboParts parts = prior_step(model, goal, cond, noise, beta, pc.recon);
      if (!std::isfinite(parts.total))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + " (step " + std::to_string(step) + ")");
      optimizer.step(params);
      result.history.push_back({epoch, b, parts.total, parts.recon, parts.kl});
    }
  }
  return result;
}

MatF sample_goal(const CvaePrior<float>& prior, const MatF& condition, std::uint64_t seed,
                 std::size_t n_samples) {
  if (condition.cols != prior.cond_dim)
    throw DimensionError("sample_goal: condition dim " + std::to_string(condition.cols) +
                         " vs model " + std::to_string(prior.cond_dim));
  const std::size_t n = condition.rows;
  Rng rng(seed);
  MatF z(n * n_samples, prior.latent_dim);
  rng.fill_normal(z.data.data(), z.data.size());
  MatF cond_rep(n * n_samples, prior.cond_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < n_samples; ++s)
      std::copy(condition.row(i), condition.row(i) + condition.cols,
                cond_rep.row(i * n_samples + s));
  return prior.decode(z, cond_rep);
}

MatF map_audio_to_goal(const ClipAlignModel<float>& clip_model, const CvaePrior<float>& prior,
                       const MatF& ast_logits, std::uint64_t seed) {
  const MatF cond = project_audio(clip_model, ast_logits);
  return sample_goal(prior, cond, seed, 1);
}

namespace {

void add_linear(CheckpointWriter& w, const std::string& name, const Linear<float>& l) {
  w.add_tensor(name + ".weight", l.weight);
  w.add_vector(name + ".bias", l.bias);
}

Linear<float> load_linear(const CheckpointReader& r, const std::string& name) {
  Linear<float> l;
  l.weight = r.tensor(name + ".weight");
  l.bias = r.vector(name + ".bias");
  l.grad_weight = MatF(l.weight.rows, l.weight.cols);
  l.grad_bias.assign(l.bias.size(), 0.0f);
  return l;
}

void add_layernorm(CheckpointWriter& w, const std::string& name, const LayerNorm<float>& ln) {
  w.add_vector(name + ".gamma", ln.gamma);
  w.add_vector(name + ".beta", ln.beta);
}

LayerNorm<float> load_layernorm(const CheckpointReader& r, const std::string& name) {
  LayerNorm<float> ln;
  ln.gamma = r.vector(name + ".gamma");
  ln.beta = r.vector(name + ".beta");
  ln.grad_gamma.assign(ln.gamma.size(), 0.0f);
  ln.grad_beta.assign(ln.beta.size(), 0.0f);
  return ln;
}

}  // namespace

void save_prior_checkpoint(const std::filesystem::path& path, const CvaePrior<float>& model,
                           std::int64_t step) {
  CheckpointWriter w;
  w.set_model({{"type", "cvae_prior"},
               {"cond_dim", model.cond_dim},
               {"goal_dim", model.goal_dim},
               {"latent_dim", model.latent_dim},
               {"hidden_layers", {model.hidden_dim, model.hidden_dim}},
               {"layer_norm", true},
               {"activation", "leaky_relu"}});
  w.set_step(step);
  add_linear(w, "enc_fc1", model.enc_fc1);
  add_layernorm(w, "enc_ln", model.enc_ln);
  add_linear(w, "enc_fc2", model.enc_fc2);
  add_linear(w, "enc_mu", model.enc_mu);
  add_linear(w, "enc_logvar", model.enc_logvar);
  add_linear(w, "dec_fc1", model.dec_fc1);
  add_layernorm(w, "dec_ln", model.dec_ln);
  add_linear(w, "dec_fc2", model.dec_fc2);
  add_linear(w, "dec_out", model.dec_out);
  w.write(path);
}

PriorCheckpoint load_prior_checkpoint(const std::filesystem::path& path) {
  CheckpointReader r(path);
  const nlohmann::json& desc = r.model();
  if (desc.value("type", "") != "cvae_prior")
    throw FormatError("checkpoint is not a cvae_prior model: " + path.string());
  PriorCheckpoint out;
  CvaePrior<float>& m = out.model;
  m.cond_dim = desc.at("cond_dim").get<std::size_t>();
  m.goal_dim = desc.at("goal_dim").get<std::size_t>();
  m.latent_dim = desc.at("latent_dim").get<std::size_t>();
  m.hidden_dim = desc.at("hidden_layers").at(0).get<std::size_t>();
  m.enc_fc1 = load_linear(r, "enc_fc1");
  m.enc_ln = load_layernorm(r, "enc_ln");
  m.enc_fc2 = load_linear(r, "enc_fc2");
  m.enc_mu = load_linear(r, "enc_mu");
  m.enc_logvar = load_linear(r, "enc_logvar");
  m.dec_fc1 = load_linear(r, "dec_fc1");
  m.dec_ln = load_layernorm(r, "dec_ln");
  m.dec_fc2 = load_linear(r, "dec_fc2");
  m.dec_out = load_linear(r, "dec_out");
  out.step = r.step();
  return out;
}

void save_prior_loss_csv(const std::filesystem::path& path,
                         const std::vector<PriorLossEntry>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "epoch,batch,total,recon,kl\n";
  char buf[128];
  for (const PriorLossEntry& e : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g\n", e.epoch, e.batch, e.total,
                  e.recon, e.kl);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace avalign
