// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "avalign/clip.hpp"
#include "test_util.hpp"

using namespace avalign;
using namespace avalign::testutil;
namespace fs = std::filesystem;

namespace {

PairedDataset random_dataset(std::size_t n, std::size_t audio_dim, std::size_t video_dim,
                             std::uint64_t seed) {
  Rng rng(seed);
  PairedDataset d;
  d.audio = EmbeddingMatrix(Modality::audio, n, audio_dim);
  d.video = EmbeddingMatrix(Modality::video, n, video_dim);
  rng.fill_normal(d.audio.data.data(), d.audio.data.size());
  rng.fill_normal(d.video.data.data(), d.video.data.size());
  for (std::size_t i = 0; i < n; ++i)
    d.manifest.entries.push_back({"r", std::uint32_t(i), i, i, Split::train});
  return d;
}

DimPolicy loose() {
  DimPolicy p;
  p.enforce = false;
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

// ---------------------------------------------------------------------------
// clip_loss
// ---------------------------------------------------------------------------

TEST_CASE("clip_loss on uniform logits equals ln N") {
  for (std::size_t n : {2, 4, 64, 256}) {
    MatD logits(n, n, 0.37);
    CHECK(std::abs(clip_loss(logits) - std::log(double(n))) < 1e-9);
  }
}

TEST_CASE("clip_loss on a saturated correct matrix is ~0") {
  MatD logits(8, 8, -30.0);
  for (std::size_t i = 0; i < 8; ++i) logits.at(i, i) = 30.0;
  CHECK(clip_loss(logits) < 1e-9);
}

TEST_CASE("clip_loss N=2 antisymmetric logits: ln(1 + e^-2)") {
  MatD logits(2, 2);
  logits.data = {1.0, -1.0, -1.0, 1.0};
  CHECK(clip_loss(logits) == doctest::Approx(0.12692801104297263).epsilon(1e-12));
}

TEST_CASE("clip_loss rejects non-square, tiny, and non-finite inputs") {
  CHECK_THROWS_AS(clip_loss(MatD(2, 3, 0.0)), DimensionError);
  CHECK_THROWS_AS(clip_loss(MatD(1, 1, 0.0)), DimensionError);
  MatD bad(2, 2, 0.0);
  bad.data[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(clip_loss(bad), ValidationError);
}

TEST_CASE("clip_loss is non-negative and permutation-consistent") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    MatD logits = random_mat(n, n, rng, 3.0);
    const double base = clip_loss(logits);
    CHECK(base >= 0.0);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    shuffle(perm, rng);
    MatD permuted(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) permuted.at(i, j) = logits.at(perm[i], perm[j]);
    CHECK(clip_loss(permuted) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("clip_loss gradient matches finite differences") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    MatD logits = random_mat(n, n, rng, 2.0);
    auto loss = [&](const std::vector<double>& p) {
      MatD l(n, n);
      l.data = p;
      return clip_loss(l);
    };
    auto grad = [&](const std::vector<double>& p) {
      MatD l(n, n);
      l.data = p;
      MatD g;
      clip_loss_with_grad(l, &g);
      return g.data;
    };
    CHECK(grad_check(loss, grad, logits.data, 1e-4) < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// projections and similarity
// ---------------------------------------------------------------------------

TEST_CASE("project_audio emits unit rows, deterministically, in order") {
  Rng rng(23);
  ClipAlignModel<float> model = ClipAlignModel<float>::init(rng, 24, 20, 32, 16, 4);
  MatF x(5, 24);
  rng.fill_normal(x.data.data(), x.data.size());
  const MatF y = project_audio(model, x);
  REQUIRE(y.rows == 5);
  REQUIRE(y.cols == 16);
  for (std::size_t r = 0; r < y.rows; ++r)
    CHECK(row_norm(y, r) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(project_audio(model, x).data == y.data);  // deterministic

  // order preserving: single-row projection matches the batch row
  MatF first(1, 24);
  std::copy(x.row(0), x.row(0) + 24, first.row(0));
  const MatF y0 = project_audio(model, first);
  for (std::size_t c = 0; c < y.cols; ++c) CHECK(y0.at(0, c) == y.at(0, c));

  MatF wrong(2, 23);
  CHECK_THROWS_AS(project_audio(model, wrong), DimensionError);
}

TEST_CASE("similarity_logits: constant-output nets give 1/0.07 everywhere") {
  Rng rng(24);
  ClipAlignModel<float> model = ClipAlignModel<float>::init(rng, 8, 8, 8, 4, 3);
  // zero every layer, then make the last bias a fixed unit vector: both nets
  // now map any input to e0.
  for (auto* net : {&model.audio_net, &model.video_net}) {
    for (auto& layer : net->layers) {
      std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0f);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0f);
    }
    net->layers.back().bias[0] = 1.0f;
  }
  MatF audio(3, 8), video(3, 8);
  rng.fill_normal(audio.data.data(), audio.data.size());
  rng.fill_normal(video.data.data(), video.data.size());
  const MatF logits = similarity_logits(model, audio, video);
  for (float v : logits.data) CHECK(v == doctest::Approx(14.285714285714286).epsilon(1e-5));
}

TEST_CASE("scaled cosine: orthogonal rows score 0, self-cosine is 1 before scaling") {
  MatF a(2, 4), v(2, 4);
  a.data = {1, 0, 0, 0, 0, 1, 0, 0};
  v.data = {1, 0, 0, 0, 0, 1, 0, 0};
  const MatF c = scaled_cosine_logits(a, v, 1.0f);
  CHECK(c.at(0, 0) == 1.0f);
  CHECK(c.at(1, 1) == 1.0f);
  CHECK(c.at(0, 1) == 0.0f);
  CHECK(c.at(1, 0) == 0.0f);
}

TEST_CASE("similarity_logits validates batch sizes") {
  Rng rng(25);
  ClipAlignModel<float> model = ClipAlignModel<float>::init(rng, 8, 8, 8, 4, 2);
  MatF a(3, 8), v(2, 8);
  CHECK_THROWS_AS(similarity_logits(model, a, v), DimensionError);
  MatF a1(1, 8), v1(1, 8);
  CHECK_THROWS_AS(similarity_logits(model, a1, v1), DimensionError);
}

// ---------------------------------------------------------------------------
// full-pipeline gradient
// ---------------------------------------------------------------------------

TEST_CASE("whole-head gradient (nets + log_scale) matches finite differences") {
  Rng rng(26);
  for (int trial = 0; trial < 5; ++trial) {
    ClipAlignModel<double> model = ClipAlignModel<double>::init(rng, 16, 12, 32, 16, 4);
    MatD audio = random_mat(8, 16, rng);
    MatD video = random_mat(8, 12, rng);

    auto with_params = [&](const std::vector<double>& p, auto&& fn) {
      ClipAlignModel<double> m = model;
      unflatten(p, m.params());
      return fn(m);
    };
    auto loss = [&](const std::vector<double>& p) {
      return with_params(p, [&](ClipAlignModel<double>& m) {
        return clip_batch_step(m, audio, video);
      });
    };
    auto grad = [&](const std::vector<double>& p) {
      return with_params(p, [&](ClipAlignModel<double>& m) {
        clip_batch_step(m, audio, video);
        return flatten_grads(m.params());
      });
    };
    const std::vector<double> params = flatten(model.params());
    CHECK(grad_check(loss, grad, params, 1e-5, 80, 1000 + trial) < 1e-3);
  }
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TEST_CASE("train_clip: same seed, bit-identical history; different seed differs") {
  const PairedDataset data = random_dataset(80, 16, 12, 31);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 2;
  cfg.seed = 5;
  const ClipTrainResult a = train_clip(data, cfg, loose());
  const ClipTrainResult b = train_clip(data, cfg, loose());
  REQUIRE(a.history.size() == 4);  // 80/32 -> 2 batches per epoch, short batch dropped
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);

  TrainConfig cfg2 = cfg;
  cfg2.seed = 6;
  const ClipTrainResult c = train_clip(data, cfg2, loose());
  bool differs = false;
  for (std::size_t i = 0; i < c.history.size(); ++i)
    differs |= c.history[i].loss != a.history[i].loss;
  CHECK(differs);
}

TEST_CASE("train_clip: first-batch loss sits near ln(batch_size)") {
  const double expect = std::log(64.0);
  for (std::uint64_t seed : {11ull, 12ull}) {
    const PairedDataset data = random_dataset(70, 16, 12, seed);
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.epochs = 1;
    cfg.seed = seed;
    const ClipTrainResult r = train_clip(data, cfg, loose());
    CHECK(std::abs(r.history.front().loss - expect) < 0.15 * expect);
  }
}

TEST_CASE("train_clip rejects a dataset smaller than one batch") {
  const PairedDataset data = random_dataset(10, 16, 12, 33);
  TrainConfig cfg;
  cfg.batch_size = 32;
  CHECK_THROWS_AS(train_clip(data, cfg, loose()), TrainingError);
}

TEST_CASE("train config invariants") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.batch_size == 1024);
  CHECK(cfg.learning_rate == 0.001);
  CHECK(cfg.epochs == 100);
}

TEST_CASE("exp(log_scale) never exceeds the clamp after optimizer steps") {
  Rng rng(41);
  ClipAlignModel<float> model = ClipAlignModel<float>::init(rng, 8, 8, 16, 8, 2);
  AdamW<float> opt({0.5, 0.9, 0.999, 0.0, 1e-8});  // huge lr to slam the scale upward
  const auto params = model.params();
  MatF audio(4, 8), video(4, 8);
  rng.fill_normal(audio.data.data(), audio.data.size());
  rng.fill_normal(video.data.data(), video.data.size());
  for (int step = 0; step < 50; ++step) {
    clip_batch_step(model, audio, video);
    model.grad_log_scale = -1.0f;  // force upward pressure regardless of data
    opt.step(params);
    model.clamp_scale();
    REQUIRE(std::exp(double(model.log_scale)) <= 100.0 + 1e-4);
  }
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("clip checkpoint round-trips bitwise and re-saves identically") {
  Rng rng(51);
  ClipAlignModel<float> model = ClipAlignModel<float>::init(rng, 24, 20, 48, 16, 5);
  model.log_scale = 1.25f;
  const fs::path p1 = fs::temp_directory_path() / "clip_a.ckpt";
  const fs::path p2 = fs::temp_directory_path() / "clip_b.ckpt";
  save_clip_checkpoint(p1, model, 123);

  const ClipCheckpoint back = load_clip_checkpoint(p1);
  CHECK(back.step == 123);
  CHECK(back.model.log_scale == model.log_scale);
  REQUIRE(back.model.audio_net.layers.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back.model.audio_net.layers[i].weight.data == model.audio_net.layers[i].weight.data);
    CHECK(back.model.video_net.layers[i].bias == model.video_net.layers[i].bias);
  }
  save_clip_checkpoint(p2, back.model, back.step);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("default model matches the published architecture") {
  Rng rng(52);
  ClipAlignModel<float> model = ClipAlignModel<float>::init(rng);
  CHECK(model.audio_net.layers.size() == 10);
  CHECK(model.audio_net.input_dim() == 527);
  CHECK(model.audio_net.hidden_dim() == 1024);
  CHECK(model.audio_net.output_dim() == 512);
  CHECK(model.video_net.input_dim() == 512);
  CHECK(model.video_net.output_dim() == 512);
  CHECK(std::exp(double(model.log_scale)) == doctest::Approx(1.0 / 0.07).epsilon(1e-6));
}
