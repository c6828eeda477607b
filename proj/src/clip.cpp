// SPDX-License-Identifier: Apache-2.0
#include "avalign/clip.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include "avalign/checkpoint.hpp"

namespace avalign {

namespace {

// Gathers manifest rows into contiguous batch matrices.
MatF gather_rows(const EmbeddingMatrix& m, const std::vector<std::size_t>& rows) {
  MatF out(rows.size(), m.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const float* src = m.row(rows[i]);
    std::copy(src, src + m.dim, out.row(i));
  }
  return out;
}

}  // namespace

ClipTrainResult train_clip(const PairedDataset& dataset, const TrainConfig& config,
                           const DimPolicy& policy) {
  config.validate();
  validate(dataset, policy);

  const std::vector<std::size_t> train_entries = dataset.entry_indices(Split::train);
  if (train_entries.size() < config.batch_size)
    throw TrainingError("train split has " + std::to_string(train_entries.size()) +
                        " pairs, need at least one full batch of " +
                        std::to_string(config.batch_size));

  Rng rng(config.seed);
  ClipTrainResult result{
      ClipAlignModel<float>::init(rng, dataset.audio.dim, dataset.video.dim), {}};
  ClipAlignModel<float>& model = result.model;
  AdamW<float> optimizer(config.adamw());
  const std::vector<ParamRef<float>> params = model.params();

  std::vector<std::size_t> order = train_entries;
  const std::size_t batches_per_epoch = order.size() / config.batch_size;
  result.history.reserve(config.epochs * batches_per_epoch);

  std::vector<std::size_t> audio_rows(config.batch_size), video_rows(config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      for (std::size_t k = 0; k < config.batch_size; ++k) {
        const PairEntry& e = dataset.manifest.entries[order[b * config.batch_size + k]];
        audio_rows[k] = e.audio_row;
        video_rows[k] = e.video_row;
      }
      const MatF audio_batch = gather_rows(dataset.audio, audio_rows);
      const MatF video_batch = gather_rows(dataset.video, video_rows);

      const double loss = clip_batch_step(model, audio_batch, video_batch);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + " (step " +
                            std::to_string(epoch * batches_per_epoch + b) + ")");
      optimizer.step(params);
      model.clamp_scale();
      result.history.push_back({epoch, b, loss});
    }
  }
  return result;
}

namespace {

void add_network(CheckpointWriter& w, const std::string& prefix,
                 const MappingNetwork<float>& net) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    w.add_tensor(prefix + ".layers." + std::to_string(i) + ".weight", net.layers[i].weight);
    w.add_vector(prefix + ".layers." + std::to_string(i) + ".bias", net.layers[i].bias);
  }
}

nlohmann::json describe_network(const MappingNetwork<float>& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers)
    layers.push_back({{"in", l.in_dim()}, {"out", l.out_dim()}});
  return {{"type", "mapping_network"},
          {"n_layers", net.layers.size()},
          {"input_dim", net.input_dim()},
          {"hidden_dim", net.hidden_dim()},
          {"output_dim", net.output_dim()},
          {"activation", "leaky_relu"},
          {"negative_slope", kLeakySlope},
          {"layers", layers}};
}

MappingNetwork<float> load_network(const CheckpointReader& r, const std::string& prefix,
                                   const nlohmann::json& desc) {
  MappingNetwork<float> net;
  const auto n_layers = desc.at("n_layers").get<std::size_t>();
  for (std::size_t i = 0; i < n_layers; ++i) {
    Linear<float> l;
    l.weight = r.tensor(prefix + ".layers." + std::to_string(i) + ".weight");
    l.bias = r.vector(prefix + ".layers." + std::to_string(i) + ".bias");
    if (l.bias.size() != l.weight.rows)
      throw FormatError("checkpoint layer " + std::to_string(i) + " bias/weight mismatch");
    l.grad_weight = MatF(l.weight.rows, l.weight.cols);
    l.grad_bias.assign(l.bias.size(), 0.0f);
    net.layers.push_back(std::move(l));
  }
  return net;
}

}  // namespace

void save_clip_checkpoint(const std::filesystem::path& path, const ClipAlignModel<float>& model,
                          std::int64_t step) {
  CheckpointWriter w;
  w.set_model({{"type", "clip_align"},
               {"shared_dim", model.audio_net.output_dim()},
               {"audio", describe_network(model.audio_net)},
               {"video", describe_network(model.video_net)}});
  w.set_step(step);
  add_network(w, "audio", model.audio_net);
  add_network(w, "video", model.video_net);
  w.add_scalar("log_scale", model.log_scale);
  w.write(path);
}

ClipCheckpoint load_clip_checkpoint(const std::filesystem::path& path) {
  CheckpointReader r(path);
  const nlohmann::json& desc = r.model();
  if (desc.value("type", "") != "clip_align")
    throw FormatError("checkpoint is not a clip_align model: " + path.string());
  ClipCheckpoint out;
  out.model.audio_net = load_network(r, "audio", desc.at("audio"));
  out.model.video_net = load_network(r, "video", desc.at("video"));
  out.model.log_scale = r.scalar("log_scale");
  out.step = r.step();
  return out;
}

void save_loss_csv(const std::filesystem::path& path, const std::vector<LossEntry>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "epoch,batch,loss\n";
  char buf[64];
  for (const LossEntry& e : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g\n", e.epoch, e.batch, e.loss);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace avalign
