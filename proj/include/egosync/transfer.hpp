#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "egosync/flow.hpp"
#include "egosync/frame_stack.hpp"
#include "egosync/manifest.hpp"
#include "egosync/net.hpp"
#include "egosync/skeleton.hpp"

namespace egosync {

/// Embeddings for every eligible frame of one clip; row r corresponds to
/// frame first_frame + r of the source stream.
struct EmbeddingSequence {
  std::string clip_id;
  std::int64_t first_frame = kStackHalfWindow;
  Matrix embeddings;

  std::int64_t size() const { return embeddings.rows(); }
};

/// Runs the frozen model over every frame that admits a full 11-frame
/// window. The stream is chosen by the record's view (first person vs any
/// third-person view).
inline EmbeddingSequence extract_embeddings(const SemiSiameseModel& model,
                                            const ClipRecord& record,
                                            const ClipStream& clip,
                                            const FlowProvider& flow) {
  const std::int64_t n = eligible_frame_count(clip.frame_count());
  if (n <= 0)
    throw ClipTooShort("clip " + record.clip_id + " has " +
                       std::to_string(clip.frame_count()) +
                       " frames; at least " +
                       std::to_string(2 * kStackHalfWindow + 1) +
                       " are required");
  Matrix x(n, model.input_dim());
  for (std::int64_t r = 0; r < n; ++r) {
    const FrameStack s = build_stack(clip, first_eligible_frame() + r, flow);
    x.row(r) = normalize_stack(s, model.stats).as_row().transpose();
  }
  EmbeddingSequence out;
  out.clip_id = record.clip_id;
  out.embeddings = (record.view == View::First) ? model.infer_first(x)
                                                : model.infer_third(x);
  return out;
}

// ------------------------------------------------------------- base features

/// Hand-pooled per-frame descriptor: channel means of the center RGB frame,
/// its gray-level spread, and coarse motion statistics from the flow
/// channels. Deliberately low-dimensional so it captures little about pose
/// on its own.
constexpr int kBaseFeatureDim = 8;

inline Vector base_features(const FrameStack& stack) {
  const std::int64_t h = stack.channels.shape[1];
  const std::int64_t w = stack.channels.shape[2];
  const std::int64_t hw = h * w;
  const double* d = stack.channels.data.data();
  Vector f = Vector::Zero(kBaseFeatureDim);
  for (std::int64_t p = 0; p < hw; ++p) {
    f[0] += d[0 * hw + p];
    f[1] += d[1 * hw + p];
    f[2] += d[2 * hw + p];
  }
  f[0] /= hw; f[1] /= hw; f[2] /= hw;
  double var = 0.0;
  for (std::int64_t p = 0; p < hw; ++p) {
    const double gray = (d[0 * hw + p] + d[1 * hw + p] + d[2 * hw + p]) / 3.0;
    const double mean_gray = (f[0] + f[1] + f[2]) / 3.0;
    var += (gray - mean_gray) * (gray - mean_gray);
  }
  f[3] = std::sqrt(var / hw);
  double su = 0.0, sv = 0.0, su2 = 0.0, sv2 = 0.0;
  const std::int64_t n_flow = kFlowFieldsPerStack * hw;
  for (int field = 0; field < kFlowFieldsPerStack; ++field) {
    const double* u = d + (3 + 2 * field) * hw;
    const double* v = d + (4 + 2 * field) * hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      su += u[p]; sv += v[p];
      su2 += u[p] * u[p]; sv2 += v[p] * v[p];
    }
  }
  f[4] = su / n_flow;
  f[5] = sv / n_flow;
  f[6] = std::sqrt(std::max(0.0, su2 / n_flow - f[4] * f[4]));
  f[7] = std::sqrt(std::max(0.0, sv2 / n_flow - f[5] * f[5]));
  return f;
}

/// (n_eligible, 8) matrix of base features for a whole clip.
inline Matrix base_feature_sequence(const ClipStream& clip,
                                    const FlowProvider& flow) {
  const std::int64_t n = eligible_frame_count(clip.frame_count());
  if (n <= 0)
    throw ClipTooShort("clip " + clip.clip_id + " has " +
                       std::to_string(clip.frame_count()) +
                       " frames; at least " +
                       std::to_string(2 * kStackHalfWindow + 1) +
                       " are required");
  Matrix x(n, kBaseFeatureDim);
  for (std::int64_t r = 0; r < n; ++r)
    x.row(r) =
        base_features(build_stack(clip, first_eligible_frame() + r, flow))
            .transpose();
  return x;
}

// ---------------------------------------------------------------- regressor

struct RegressorConfig {
  int input_dim = kBaseFeatureDim;
  int hidden_dim = 64;
  int output_dim = kJointCount * 3;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 120;
  int batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
      throw ConfigError("regressor dimensions must be positive");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

/// Small MLP from frame features to a flattened canonical pose. Inputs are
/// standardized with statistics fitted on the training set.
class PoseRegressor {
 public:
  explicit PoseRegressor(const RegressorConfig& cfg) : config(cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    l1_ = std::make_unique<DenseLayer>(cfg.input_dim, cfg.hidden_dim, rng);
    l2_ = std::make_unique<DenseLayer>(cfg.hidden_dim, cfg.output_dim, rng);
    in_mean = Vector::Zero(cfg.input_dim);
    in_std = Vector::Ones(cfg.input_dim);
  }

  Matrix predict(const Matrix& x) const {
    if (x.cols() != config.input_dim)
      throw DimensionMismatch("regressor expects " +
                              std::to_string(config.input_dim) +
                              " input features, got " +
                              std::to_string(x.cols()));
    return l2_->infer(relu_.infer(l1_->infer(standardize(x))));
  }

  Matrix forward_train(const Matrix& x) {
    return l2_->forward(relu_.forward(l1_->forward(standardize(x))));
  }
  void backward(const Matrix& g) {
    l1_->backward(relu_.backward(l2_->backward(g)));
  }
  std::vector<Param*> params() {
    return {l1_->params()[0], l1_->params()[1], l2_->params()[0],
            l2_->params()[1]};
  }

  RegressorConfig config;
  Vector in_mean, in_std;

 private:
  Matrix standardize(const Matrix& x) const {
    Matrix y = x;
    for (Eigen::Index j = 0; j < y.cols(); ++j)
      y.col(j) = (y.col(j).array() - in_mean[j]) / std::max(in_std[j], 1e-8);
    return y;
  }

  std::unique_ptr<DenseLayer> l1_, l2_;
  ReluLayer relu_;

  friend void save_regressor(const std::string&, const PoseRegressor&);
  friend PoseRegressor load_regressor(const std::string&);
};

/// Mean squared error per output coordinate.
inline double regression_mse(const PoseRegressor& reg, const Matrix& x,
                             const Matrix& y) {
  if (x.rows() != y.rows())
    throw DimensionMismatch("feature and target row counts differ");
  const Matrix pred = reg.predict(x);
  return (pred - y).squaredNorm() /
         static_cast<double>(y.rows() * y.cols());
}

/// Minibatch SGD on mean squared error; returns the per-epoch training MSE.
inline std::vector<double> train_regressor(PoseRegressor& reg, const Matrix& x,
                                           const Matrix& y) {
  const RegressorConfig& cfg = reg.config;
  if (x.cols() != cfg.input_dim)
    throw DimensionMismatch("regressor expects " +
                            std::to_string(cfg.input_dim) +
                            " input features, got " + std::to_string(x.cols()));
  if (y.cols() != cfg.output_dim)
    throw DimensionMismatch("regressor produces " +
                            std::to_string(cfg.output_dim) +
                            " outputs, targets have " +
                            std::to_string(y.cols()));
  if (x.rows() != y.rows())
    throw DimensionMismatch("feature and target row counts differ");
  if (x.rows() == 0) throw EmptySequence("no regression samples");

  reg.in_mean = x.colwise().mean();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var =
        (x.col(j).array() - reg.in_mean[j]).square().sum() / x.rows();
    reg.in_std[j] = std::sqrt(var);
  }

  Rng rng(cfg.seed);
  Sgd sgd(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  const auto params = reg.params();
  std::vector<std::int64_t> order(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<std::int64_t>(i);

  std::vector<double> epoch_mse;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sq_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const int B = static_cast<int>(end - begin);
      Matrix xb(B, cfg.input_dim), yb(B, cfg.output_dim);
      for (int j = 0; j < B; ++j) {
        xb.row(j) = x.row(order[begin + static_cast<std::size_t>(j)]);
        yb.row(j) = y.row(order[begin + static_cast<std::size_t>(j)]);
      }
      const Matrix pred = reg.forward_train(xb);
      const Matrix diff = pred - yb;
      sq_sum += diff.squaredNorm();
      if (!std::isfinite(sq_sum))
        throw NonFiniteLoss("non-finite regression loss at epoch " +
                            std::to_string(epoch));
      const Matrix g = 2.0 * diff / static_cast<double>(B * cfg.output_dim);
      reg.backward(g);
      sgd.step(params);
    }
    epoch_mse.push_back(sq_sum / static_cast<double>(x.rows() * cfg.output_dim));
  }
  return epoch_mse;
}

/// Decodes each row of `x` into a skeleton.
inline std::vector<Skeleton> predict_sequence(const PoseRegressor& reg,
                                              const Matrix& x) {
  const Matrix pred = reg.predict(x);
  std::vector<Skeleton> out;
  out.reserve(static_cast<std::size_t>(pred.rows()));
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    const Eigen::VectorXd flat = pred.row(r).transpose();
    out.push_back(Skeleton::from_flat(flat));
  }
  return out;
}

inline void save_regressor(const std::string& path, const PoseRegressor& reg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(detail::kCheckpointMagic, 8);
  detail::write_pod(os, detail::kCheckpointVersion);
  detail::write_pod(os, static_cast<std::uint8_t>(2));
  detail::write_pod(os, reg.config.input_dim);
  detail::write_pod(os, reg.config.hidden_dim);
  detail::write_pod(os, reg.config.output_dim);
  detail::write_pod(os, reg.config.learning_rate);
  detail::write_pod(os, reg.config.momentum);
  detail::write_pod(os, reg.config.weight_decay);
  detail::write_pod(os, reg.config.epochs);
  detail::write_pod(os, reg.config.batch_size);
  detail::write_pod(os, reg.config.seed);
  detail::write_matrix(os, reg.in_mean);
  detail::write_matrix(os, reg.in_std);
  detail::write_matrix(os, reg.l1_->weight());
  detail::write_matrix(os, reg.l1_->bias());
  detail::write_matrix(os, reg.l2_->weight());
  detail::write_matrix(os, reg.l2_->bias());
  if (!os) throw IoError("write failed: " + path);
}

inline PoseRegressor load_regressor(const std::string& path) {
  std::ifstream is;
  detail::open_checkpoint(is, path, 2);
  RegressorConfig cfg;
  is.read(reinterpret_cast<char*>(&cfg.input_dim), sizeof(cfg.input_dim));
  is.read(reinterpret_cast<char*>(&cfg.hidden_dim), sizeof(cfg.hidden_dim));
  is.read(reinterpret_cast<char*>(&cfg.output_dim), sizeof(cfg.output_dim));
  is.read(reinterpret_cast<char*>(&cfg.learning_rate), sizeof(cfg.learning_rate));
  is.read(reinterpret_cast<char*>(&cfg.momentum), sizeof(cfg.momentum));
  is.read(reinterpret_cast<char*>(&cfg.weight_decay), sizeof(cfg.weight_decay));
  is.read(reinterpret_cast<char*>(&cfg.epochs), sizeof(cfg.epochs));
  is.read(reinterpret_cast<char*>(&cfg.batch_size), sizeof(cfg.batch_size));
  is.read(reinterpret_cast<char*>(&cfg.seed), sizeof(cfg.seed));
  if (!is) throw CorruptCheckpoint("truncated checkpoint: " + path);
  PoseRegressor reg(cfg);
  reg.in_mean = detail::read_matrix(is, path);
  reg.in_std = detail::read_matrix(is, path);
  auto assign = [&](Param* p) {
    const Matrix m = detail::read_matrix(is, path);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw CorruptCheckpoint("parameter shape mismatch in checkpoint: " + path);
    p->value = m;
  };
  const auto params = reg.params();
  for (Param* p : params) assign(p);
  return reg;
}

}  // namespace egosync
