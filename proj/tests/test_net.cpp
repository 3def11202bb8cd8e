#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "egosync/net.hpp"
#include "egosync/synthetic.hpp"
#include "egosync/train.hpp"

using namespace egosync;
using Catch::Matchers::WithinAbs;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng,
                     double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.gaussian();
  return m;
}

// Central-difference derivative of `loss` with respect to one scalar.
template <typename LossFn>
double fd_derivative(double& slot, const LossFn& loss, double h = 1e-6) {
  const double saved = slot;
  slot = saved + h;
  const double up = loss();
  slot = saved - h;
  const double down = loss();
  slot = saved;
  return (up - down) / (2.0 * h);
}

void check_close_rel(double analytic, double fd, double tol) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(fd)});
  REQUIRE(std::abs(analytic - fd) / denom < tol);
}

}  // namespace

// ---------------------------------------------------------------------------
// Contrastive loss
// ---------------------------------------------------------------------------

TEST_CASE("contrastive loss matches its defining cases exactly") {
  const double m = 0.9;
  auto single = [&](double zf0, double zf1, int label) {
    Matrix zf(1, 2), zt(1, 2);
    zf << zf0, zf1;
    zt << 0.0, 0.0;
    return contrastive_loss(zf, zt, {label}, m);
  };
  // Synchronized pair at zero distance: no penalty.
  Matrix z(1, 2);
  z << 0.3, -0.7;
  REQUIRE(contrastive_loss(z, z, {1}, m) == 0.0);
  // Unsynchronized pair beyond the margin: no penalty.
  REQUIRE(single(1.2, 0.0, 0) == 0.0);
  // Unsynchronized pair inside the margin: squared hinge (0.9 - 0.4)^2.
  REQUIRE(single(0.4, 0.0, 0) == 0.25);
  // Synchronized pair at distance 0.5: squared distance.
  REQUIRE(single(0.5, 0.0, 1) == 0.25);
}

TEST_CASE("contrastive loss sums over the batch") {
  Matrix zf(2, 2), zt(2, 2);
  zf << 0.5, 0.0, 0.4, 0.0;
  zt.setZero();
  REQUIRE(contrastive_loss(zf, zt, {1, 0}, 0.9) == 0.5);
}

TEST_CASE("contrastive loss gradient agrees with finite differences") {
  Rng rng(21);
  const int B = 6, D = 4;
  Matrix zf = random_matrix(B, D, rng, 0.6);
  Matrix zt = random_matrix(B, D, rng, 0.6);
  const std::vector<int> y = {1, 0, 1, 0, 0, 1};
  const double m = 0.9;
  // Keep every negative pair comfortably away from the hinge kink (relative
  // to the 1e-6 probe step) so the finite-difference probe stays on one side.
  for (int j = 0; j < B; ++j) {
    if (y[static_cast<std::size_t>(j)] == 0) {
      const double d = (zf.row(j) - zt.row(j)).norm();
      REQUIRE(std::abs(d - m) > 2e-3);
      REQUIRE(d > 2e-3);
    }
  }
  Matrix gzf, gzt;
  contrastive_loss_grad(zf, zt, y, m, &gzf, &gzt);
  for (int j = 0; j < B; ++j) {
    for (int k = 0; k < D; ++k) {
      const double fd_f = fd_derivative(
          zf(j, k), [&] { return contrastive_loss(zf, zt, y, m); });
      const double fd_t = fd_derivative(
          zt(j, k), [&] { return contrastive_loss(zf, zt, y, m); });
      check_close_rel(gzf(j, k), fd_f, 1e-6);
      check_close_rel(gzt(j, k), fd_t, 1e-6);
    }
  }
}

TEST_CASE("contrastive loss uses a zero subgradient at coincident negatives") {
  Matrix zf(1, 3), zt(1, 3);
  zf << 0.2, 0.2, 0.2;
  zt = zf;
  Matrix gzf, gzt;
  const double loss = contrastive_loss_grad(zf, zt, {0}, 0.9, &gzf, &gzt);
  REQUIRE_THAT(loss, WithinAbs(0.81, 1e-15));
  REQUIRE(gzf.norm() == 0.0);
  REQUIRE(gzt.norm() == 0.0);
}

TEST_CASE("contrastive loss validates its inputs") {
  Matrix zf(2, 3), zt(2, 3), zt_short(1, 3);
  zf.setZero();
  zt.setZero();
  zt_short.setZero();
  REQUIRE_THROWS_AS(contrastive_loss(zf, zt_short, {1, 0}, 0.9), BatchMismatch);
  REQUIRE_THROWS_AS(contrastive_loss(zf, zt, {1}, 0.9), BatchMismatch);
  REQUIRE_THROWS_AS(contrastive_loss(zf, zt, {1, 2}, 0.9), Error);
  REQUIRE_THROWS_AS(contrastive_loss(zf, zt, {1, 0}, 0.0), Error);
  REQUIRE_THROWS_AS(contrastive_loss(zf, zt, {1, 0}, -0.5), Error);
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

TEST_CASE("dense layer computes x W^T + b and exact gradients") {
  Rng rng(5);
  DenseLayer layer(3, 2, rng);
  Matrix x = random_matrix(4, 3, rng);
  const Matrix y = layer.forward(x);
  REQUIRE(y.rows() == 4);
  REQUIRE(y.cols() == 2);
  for (int i = 0; i < 4; ++i)
    for (int o = 0; o < 2; ++o)
      REQUIRE_THAT(y(i, o),
                   WithinAbs(layer.weight().row(o).dot(x.row(i)) +
                                 layer.bias()(o, 0),
                             1e-12));

  const Matrix r = random_matrix(4, 2, rng);
  const Matrix gx = layer.backward(r);  // loss = sum(y .* r)
  auto loss = [&] { return (layer.infer(x).array() * r.array()).sum(); };
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      check_close_rel(gx(i, j), fd_derivative(x(i, j), loss), 1e-6);
  auto params = layer.params();
  REQUIRE(params.size() == 2);
  for (Param* p : params)
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j)
        check_close_rel(p->grad(i, j), fd_derivative(p->value(i, j), loss),
                        1e-6);
  REQUIRE_THROWS_AS(layer.backward(r), Error);  // cache already consumed
}

TEST_CASE("relu layer masks by the sign of its input") {
  ReluLayer relu;
  Matrix x(2, 3);
  x << -1.0, 0.0, 2.0, 3.0, -0.5, 0.25;
  const Matrix y = relu.forward(x);
  Matrix expect_y(2, 3);
  expect_y << 0.0, 0.0, 2.0, 3.0, 0.0, 0.25;
  REQUIRE(y == expect_y);
  Matrix g(2, 3);
  g.setConstant(1.5);
  const Matrix gx = relu.backward(g);
  Matrix expect_g(2, 3);
  expect_g << 0.0, 0.0, 1.5, 1.5, 0.0, 1.5;
  REQUIRE(gx == expect_g);
}

TEST_CASE("row normalization produces unit rows with correct gradients") {
  Rng rng(9);
  RowNormalizeLayer norm;
  Matrix x = random_matrix(3, 4, rng);
  const Matrix y = norm.forward(x);
  for (int r = 0; r < 3; ++r) REQUIRE_THAT(y.row(r).norm(), WithinAbs(1.0, 1e-12));
  const Matrix r = random_matrix(3, 4, rng);
  const Matrix gx = norm.backward(r);
  auto loss = [&] { return (norm.infer(x).array() * r.array()).sum(); };
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      check_close_rel(gx(i, j), fd_derivative(x(i, j), loss), 1e-6);
}

TEST_CASE("convolution matches a direct implementation") {
  Rng rng(13);
  const int in_c = 2, h = 5, w = 4, out_c = 3, k = 3, stride = 2, pad = 1;
  Conv2dLayer conv(in_c, h, w, out_c, k, stride, pad, rng);
  const int oh = conv.out_height(), ow = conv.out_width();
  REQUIRE(oh == 3);
  REQUIRE(ow == 2);
  REQUIRE(conv.out_dim() == out_c * oh * ow);

  Matrix x = random_matrix(2, in_c * h * w, rng);
  const Matrix y = conv.infer(x);
  const Matrix& weight = conv.params()[0]->value;
  const Matrix& bias = conv.params()[1]->value;
  for (int s = 0; s < 2; ++s) {
    for (int co = 0; co < out_c; ++co) {
      for (int oi = 0; oi < oh; ++oi) {
        for (int oj = 0; oj < ow; ++oj) {
          double acc = bias(co, 0);
          for (int ci = 0; ci < in_c; ++ci) {
            for (int ki = 0; ki < k; ++ki) {
              const int ii = oi * stride - pad + ki;
              if (ii < 0 || ii >= h) continue;
              for (int kj = 0; kj < k; ++kj) {
                const int jj = oj * stride - pad + kj;
                if (jj < 0 || jj >= w) continue;
                acc += weight(co, (ci * k + ki) * k + kj) *
                       x(s, (ci * h + ii) * w + jj);
              }
            }
          }
          REQUIRE_THAT(y(s, (co * oh + oi) * ow + oj), WithinAbs(acc, 1e-12));
        }
      }
    }
  }
}

TEST_CASE("convolution gradients agree with finite differences") {
  Rng rng(17);
  Conv2dLayer conv(2, 4, 4, 3, 3, 2, 1, rng);
  Matrix x = random_matrix(2, 2 * 4 * 4, rng);
  const Matrix r = random_matrix(2, conv.out_dim(), rng);
  conv.forward(x);
  const Matrix gx = conv.backward(r);
  auto loss = [&] { return (conv.infer(x).array() * r.array()).sum(); };
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2 * 4 * 4; j += 3)
      check_close_rel(gx(i, j), fd_derivative(x(i, j), loss), 1e-5);
  for (Param* p : conv.params())
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); j += 2)
        check_close_rel(p->grad(i, j), fd_derivative(p->value(i, j), loss),
                        1e-5);
}

TEST_CASE("residual block gradients agree with finite differences") {
  Rng rng(19);
  ResidualBlock block(2, 3, 3, rng);
  Matrix x = random_matrix(2, 2 * 3 * 3, rng);
  const Matrix r = random_matrix(2, 2 * 3 * 3, rng);
  block.forward(x);
  const Matrix gx = block.backward(r);
  auto loss = [&] { return (block.infer(x).array() * r.array()).sum(); };
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2 * 3 * 3; j += 2)
      check_close_rel(gx(i, j), fd_derivative(x(i, j), loss), 1e-4);
  REQUIRE(block.params().size() == 4);
  for (Param* p : block.params())
    for (Eigen::Index i = 0; i < p->value.rows(); i += 2)
      for (Eigen::Index j = 0; j < p->value.cols(); j += 3)
        check_close_rel(p->grad(i, j), fd_derivative(p->value(i, j), loss),
                        1e-4);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

TEST_CASE("sgd with momentum and weight decay matches hand-computed steps") {
  Param p(Matrix::Constant(1, 1, 1.0));
  Sgd sgd(0.1, 0.9, 0.5);
  // v1 = -0.1 * (1 + 0.5*1) = -0.15; w1 = 0.85
  p.grad.setConstant(1.0);
  sgd.step({&p});
  REQUIRE_THAT(p.value(0, 0), WithinAbs(0.85, 1e-15));
  REQUIRE(p.grad(0, 0) == 0.0);  // gradients are cleared after the step
  // v2 = 0.9*(-0.15) - 0.1*(1 + 0.5*0.85) = -0.2775; w2 = 0.5725
  p.grad.setConstant(1.0);
  sgd.step({&p});
  REQUIRE_THAT(p.value(0, 0), WithinAbs(0.5725, 1e-15));
}

TEST_CASE("sgd with zero learning rate leaves parameters unchanged") {
  Param p(Matrix::Constant(2, 2, 3.0));
  Sgd sgd(0.0, 0.9, 0.5);
  p.grad.setConstant(7.0);
  sgd.step({&p});
  sgd.step({&p});
  REQUIRE(p.value == Matrix::Constant(2, 2, 3.0));
}

// ---------------------------------------------------------------------------
// Two-stream model
// ---------------------------------------------------------------------------

namespace {

ModelConfig flat_config() {
  ModelConfig cfg;
  cfg.backbone = "flat";
  cfg.height = 2;
  cfg.width = 2;
  cfg.proj_dim = 7;
  cfg.embed_dim = 5;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("the final projection is one object shared by both streams") {
  SemiSiameseModel model(flat_config());
  REQUIRE(&model.shared_head_via_first() == &model.shared_head_via_third());
  // flat backbone: two projections plus the shared head, each with w and b.
  REQUIRE(model.params().size() == 6);

  ModelConfig tiny = flat_config();
  tiny.backbone = "tiny";
  tiny.height = 32;
  tiny.width = 32;
  SemiSiameseModel tm(tiny);
  // 3 convs per stream (w+b), 2 projections, 1 shared head.
  REQUIRE(tm.params().size() == 2 * 3 * 2 + 2 * 2 + 2);
}

TEST_CASE("the two streams are independent up to the shared head") {
  SemiSiameseModel model(flat_config());
  Rng rng(31);
  const Matrix x = random_matrix(2, model.input_dim(), rng);
  const Matrix zf = model.infer_first(x);
  const Matrix zt = model.infer_third(x);
  // Different backbones/projections: the same input embeds differently.
  REQUIRE((zf - zt).norm() > 1e-6);
}

TEST_CASE("training-mode forwards equal evaluation-mode forwards") {
  SemiSiameseModel model(flat_config());
  Rng rng(33);
  const Matrix x = random_matrix(3, model.input_dim(), rng);
  SemiSiameseModel model2(flat_config());
  REQUIRE(model.forward_first_train(x) == model2.infer_first(x));
  REQUIRE(model.forward_third_train(x) == model2.infer_third(x));
  REQUIRE_THROWS_AS(model.infer_first(random_matrix(1, 10, rng)),
                    ShapeMismatch);
}

TEST_CASE("model construction is deterministic in the seed") {
  SemiSiameseModel a(flat_config()), b(flat_config());
  REQUIRE(parameter_checksum(a) == parameter_checksum(b));
  ModelConfig other = flat_config();
  other.seed = 4;
  SemiSiameseModel c(other);
  REQUIRE(parameter_checksum(a) != parameter_checksum(c));
}

TEST_CASE("unknown backbones are rejected") {
  ModelConfig cfg = flat_config();
  cfg.backbone = "resnet50";
  REQUIRE_THROWS_AS(SemiSiameseModel(cfg), ConfigError);
}

TEST_CASE("backbone output dimensions") {
  Rng rng(1);
  REQUIRE(make_backbone("flat", 4, 4, rng).feature_dim == kStackChannels * 16);
  REQUIRE(make_backbone("tiny", 32, 32, rng).feature_dim == 16 * 4 * 4);
  REQUIRE(make_backbone("residual", 32, 32, rng).feature_dim == 24 * 4 * 4);
}

TEST_CASE("semi-siamese gradients survive the shared-head cache discipline") {
  SemiSiameseModel model(flat_config());
  Rng rng(35);
  const int B = 3;
  Matrix xf = random_matrix(B, model.input_dim(), rng, 0.5);
  Matrix xt = random_matrix(B, model.input_dim(), rng, 0.5);
  const std::vector<int> y = {1, 0, 1};
  const double margin = 0.9;

  auto loss = [&] {
    return contrastive_loss(model.infer_first(xf), model.infer_third(xt), y,
                            margin);
  };
  // The finite-difference probe must stay on one side of the hinge.
  {
    const Matrix zf = model.infer_first(xf);
    const Matrix zt = model.infer_third(xt);
    const double d1 = (zf.row(1) - zt.row(1)).norm();
    REQUIRE(std::abs(d1 - margin) > 1e-3);
  }

  const Matrix zf = model.forward_first_train(xf);
  const Matrix zt = model.forward_third_train(xt);
  Matrix gzf, gzt;
  contrastive_loss_grad(zf, zt, y, margin, &gzf, &gzt);
  // Shared-head caches are LIFO: third stream backward comes first.
  model.backward_third(gzt);
  model.backward_first(gzf);

  for (Param* p : model.params()) {
    const Eigen::Index rows = p->value.rows(), cols = p->value.cols();
    const Eigen::Index probe[4][2] = {{0, 0},
                                      {rows - 1, cols - 1},
                                      {rows / 2, cols / 2},
                                      {rows / 3, (2 * cols) / 3}};
    for (const auto& rc : probe) {
      const double analytic = p->grad(rc[0], rc[1]);
      const double fd = fd_derivative(p->value(rc[0], rc[1]), loss);
      check_close_rel(analytic, fd, 1e-5);
    }
  }
}

TEST_CASE("single-stack helpers normalize with the stored statistics") {
  ModelConfig cfg = flat_config();
  SemiSiameseModel model(cfg);
  model.stats.mean.setConstant(0.25);
  model.stats.stddev.setConstant(2.0);

  FrameStack stack;
  stack.channels = Tensor({kStackChannels, cfg.height, cfg.width});
  Rng rng(37);
  for (double& v : stack.channels.data) v = rng.uniform(0.0, 1.0);

  const Vector z = forward_first(model, stack);
  REQUIRE(z.size() == cfg.embed_dim);
  const Vector manual =
      model
          .infer_first(normalize_stack(stack, model.stats)
                           .as_row()
                           .transpose())
          .row(0);
  REQUIRE(z == manual);

  FrameStack bad;
  bad.channels = Tensor({4, cfg.height, cfg.width});
  REQUIRE_THROWS_AS(forward_first(model, bad), ShapeMismatch);
  REQUIRE_THROWS_AS(forward_third(model, bad), ShapeMismatch);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("model checkpoints round trip bit-exactly") {
  ModelConfig cfg = flat_config();
  cfg.normalize_embeddings = true;
  SemiSiameseModel model(cfg);
  model.stats.mean.setLinSpaced(kStackChannels, 0.0, 1.0);
  model.stats.stddev.setConstant(1.25);

  const std::string path = tmp_path("egosync_model.ckpt");
  save_model(path, model);
  SemiSiameseModel loaded = load_model(path);
  REQUIRE(loaded.config.backbone == cfg.backbone);
  REQUIRE(loaded.config.proj_dim == cfg.proj_dim);
  REQUIRE(loaded.config.embed_dim == cfg.embed_dim);
  REQUIRE(loaded.config.normalize_embeddings);
  REQUIRE(loaded.stats.mean == model.stats.mean);
  REQUIRE(loaded.stats.stddev == model.stats.stddev);
  REQUIRE(parameter_checksum(loaded) == parameter_checksum(model));

  Rng rng(41);
  const Matrix x = random_matrix(2, model.input_dim(), rng);
  REQUIRE(model.infer_first(x) == loaded.infer_first(x));
  REQUIRE(model.infer_third(x) == loaded.infer_third(x));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects damage") {
  SemiSiameseModel model(flat_config());
  const std::string path = tmp_path("egosync_model_damage.ckpt");
  save_model(path, model);
  const auto size = std::filesystem::file_size(path);

  SECTION("missing file") {
    REQUIRE_THROWS_AS(load_model(tmp_path("egosync_no_such.ckpt")),
                      MissingArtifact);
  }
  SECTION("truncation") {
    std::filesystem::resize_file(path, size / 2);
    REQUIRE_THROWS_AS(load_model(path), CorruptCheckpoint);
  }
  SECTION("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XX", 2);
    f.close();
    REQUIRE_THROWS_AS(load_model(path), CorruptCheckpoint);
  }
  SECTION("unsupported version") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    f.close();
    REQUIRE_THROWS_WITH(load_model(path),
                        Catch::Matchers::ContainsSubstring("version"));
  }
  SECTION("wrong artifact kind") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(12);
    const std::uint8_t kind = 2;
    f.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
    f.close();
    REQUIRE_THROWS_WITH(load_model(path),
                        Catch::Matchers::ContainsSubstring("kind"));
  }
  std::filesystem::remove(path);
}

TEST_CASE("parameter checksum reacts to any change") {
  SemiSiameseModel model(flat_config());
  const std::uint64_t before = parameter_checksum(model);
  model.params()[2]->value(0, 0) += 1e-9;
  REQUIRE(parameter_checksum(model) != before);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

struct TrainFixture {
  SyntheticDataset dataset;
  InMemoryStackSource source;
  std::vector<ClipPair> pairs;

  TrainFixture() {
    SyntheticConfig scfg;
    scfg.n_people = 1;
    scfg.n_activities = 2;
    scfg.n_frames = 26;
    scfg.n_scenes = 1;
    scfg.height = 8;
    scfg.width = 8;
    scfg.noise_amp = 0.005;
    scfg.seed = 7;
    dataset = generate_synthetic_dataset(scfg);
    for (const auto& rec : dataset.recordings) {
      source.add(rec.ego_record.clip_id,
                 ClipStream{rec.ego_record.clip_id, rec.ego_stream});
      source.add(rec.front_record.clip_id,
                 ClipStream{rec.front_record.clip_id, rec.front_stream});
    }
    const auto manifest = dataset.manifest();
    pairs = mine_positive_pairs(manifest);
    for (auto& p : mine_negative_pairs(manifest, NegativeMode::Easy))
      pairs.push_back(p);
    for (auto& p : mine_negative_pairs(manifest, NegativeMode::Hard, {6, -6}))
      pairs.push_back(p);
  }

  static ModelConfig model_config() {
    ModelConfig cfg;
    cfg.backbone = "tiny";
    cfg.height = 8;
    cfg.width = 8;
    cfg.proj_dim = 12;
    cfg.embed_dim = 6;
    cfg.seed = 2;
    return cfg;
  }

  static TrainConfig train_config() {
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.frame_stride = 4;
    cfg.stats_sample_limit = 4;
    cfg.seed = 5;
    return cfg;
  }
};

}  // namespace

TEST_CASE("train_model runs the curriculum and records history") {
  TrainFixture fx;
  SemiSiameseModel model(TrainFixture::model_config());
  const std::uint64_t before = parameter_checksum(model);
  GradientFlowProvider base_flow;
  CachingFlowProvider flow(base_flow);
  const TrainResult result =
      train_model(model, fx.pairs, fx.source, flow, TrainFixture::train_config());

  REQUIRE_FALSE(result.history.empty());
  int step = 0;
  bool saw_epoch1 = false, saw_epoch2 = false, saw_neg = false;
  for (const auto& rec : result.history) {
    REQUIRE(rec.step == ++step);
    REQUIRE(std::isfinite(rec.loss));
    REQUIRE(rec.loss >= 0.0);
    REQUIRE(rec.n_pos + rec.n_neg >= 1);
    REQUIRE(rec.n_pos + rec.n_neg <= 8);
    saw_epoch1 |= rec.epoch == 1;
    saw_epoch2 |= rec.epoch == 2;
    saw_neg |= rec.n_neg > 0;
  }
  REQUIRE(saw_epoch1);
  REQUIRE(saw_epoch2);
  REQUIRE(saw_neg);
  // Channel statistics were fitted from the data, and parameters moved.
  REQUIRE(model.stats.mean.size() == kStackChannels);
  REQUIRE(model.stats.mean.cwiseAbs().maxCoeff() > 1e-6);
  REQUIRE(parameter_checksum(model) != before);
}

TEST_CASE("training is deterministic in its seeds") {
  TrainFixture fx;
  GradientFlowProvider base_flow;

  SemiSiameseModel a(TrainFixture::model_config());
  CachingFlowProvider flow_a(base_flow);
  const TrainResult ra =
      train_model(a, fx.pairs, fx.source, flow_a, TrainFixture::train_config());

  SemiSiameseModel b(TrainFixture::model_config());
  CachingFlowProvider flow_b(base_flow);
  const TrainResult rb =
      train_model(b, fx.pairs, fx.source, flow_b, TrainFixture::train_config());

  REQUIRE(parameter_checksum(a) == parameter_checksum(b));
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i)
    REQUIRE(ra.history[i].loss == rb.history[i].loss);
}

TEST_CASE("zero learning rate trains without moving parameters") {
  TrainFixture fx;
  SemiSiameseModel model(TrainFixture::model_config());
  const std::uint64_t before = parameter_checksum(model);
  GradientFlowProvider base_flow;
  CachingFlowProvider flow(base_flow);
  TrainConfig cfg = TrainFixture::train_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const TrainResult result = train_model(model, fx.pairs, fx.source, flow, cfg);
  REQUIRE_FALSE(result.history.empty());
  REQUIRE(parameter_checksum(model) == before);
}

TEST_CASE("non-finite losses abort with the offending step") {
  TrainFixture fx;
  // Poison one positive clip with NaNs.
  const std::string bad_id = fx.dataset.recordings[0].ego_record.clip_id;
  ClipStream bad;
  bad.clip_id = bad_id;
  bad.frames = fx.dataset.recordings[0].ego_stream;
  for (double& v : bad.frames.data) v = std::nan("");
  fx.source.add(bad_id, std::move(bad));

  SemiSiameseModel model(TrainFixture::model_config());
  ZeroFlowProvider flow;
  TrainConfig cfg = TrainFixture::train_config();
  cfg.epochs = 1;
  REQUIRE_THROWS_WITH(train_model(model, fx.pairs, fx.source, flow, cfg),
                      Catch::Matchers::ContainsSubstring("step"));
}

TEST_CASE("train_model validates its configuration and inputs") {
  TrainFixture fx;
  SemiSiameseModel model(TrainFixture::model_config());
  ZeroFlowProvider flow;
  TrainConfig cfg = TrainFixture::train_config();
  cfg.margin = 0.0;
  REQUIRE_THROWS_AS(train_model(model, fx.pairs, fx.source, flow, cfg),
                    ConfigError);
  cfg = TrainFixture::train_config();
  cfg.epochs = 0;
  REQUIRE_THROWS_AS(train_model(model, fx.pairs, fx.source, flow, cfg),
                    ConfigError);
  cfg = TrainFixture::train_config();
  REQUIRE_THROWS_AS(train_model(model, {}, fx.source, flow, cfg),
                    EmptySequence);
}

TEST_CASE("train log round trips as a table") {
  const std::string path = tmp_path("egosync_train_log.tsv");
  save_train_log(path, {{1, 1, 0.5, 4, 4}, {2, 1, 0.25, 5, 3}});
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  REQUIRE(line == "step\tepoch\tloss\tn_pos\tn_neg");
  std::getline(is, line);
  REQUIRE(line == "1\t1\t0.5\t4\t4");
  std::getline(is, line);
  REQUIRE(line == "2\t1\t0.25\t5\t3");
  std::filesystem::remove(path);
}

TEST_CASE("stack sources resolve and validate clip streams") {
  InMemoryStackSource mem;
  ClipRecord rec;
  rec.clip_id = "missing";
  REQUIRE_THROWS_AS(mem.stream(rec), MissingArtifact);

  const std::string dir = tmp_path("egosync_stack_dir");
  std::filesystem::create_directories(dir + "/streams");
  Tensor good({4, 3, 3, 3});
  for (std::size_t i = 0; i < good.data.size(); ++i)
    good.data[i] = double(i % 5);
  save_tensor(dir + "/streams/ok.tsr", good);
  Tensor bad({4, 3, 3, 2});
  save_tensor(dir + "/streams/bad.tsr", bad);

  DirectoryStackSource source(dir);
  ClipRecord ok_rec;
  ok_rec.clip_id = "ok";
  ok_rec.source_uri = "streams/ok.tsr";
  const ClipStream& s = source.stream(ok_rec);
  REQUIRE(s.frame_count() == 4);
  REQUIRE(&source.stream(ok_rec) == &s);  // cached

  ClipRecord bad_rec;
  bad_rec.clip_id = "bad";
  bad_rec.source_uri = "streams/bad.tsr";
  REQUIRE_THROWS_AS(source.stream(bad_rec), ShapeMismatch);
  std::filesystem::remove_all(dir);
}
