#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "egosync/errors.hpp"
#include "egosync/frame_stack.hpp"
#include "egosync/rng.hpp"

namespace egosync {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Trainable tensor plus its gradient and momentum buffers.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix momentum;

  explicit Param(Matrix v) : value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
    momentum = Matrix::Zero(value.rows(), value.cols());
  }
};

/// A differentiable block operating on batches (one flattened sample per
/// row). `forward` pushes onto an internal cache stack, `backward` pops it;
/// when a layer is shared between streams the backward calls must come in
/// reverse forward order.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x) = 0;
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual Matrix infer(const Matrix& x) const = 0;
  virtual std::vector<Param*> params() { return {}; }
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(int in_dim, int out_dim, Rng& rng)
      : w_(he_init(out_dim, in_dim, rng)), b_(Matrix::Zero(out_dim, 1)) {}

  Matrix forward(const Matrix& x) override {
    cache_.push_back(x);
    return infer(x);
  }

  Matrix infer(const Matrix& x) const override {
    return (x * w_.value.transpose()).rowwise() + b_.value.col(0).transpose();
  }

  Matrix backward(const Matrix& gy) override {
    if (cache_.empty()) throw Error("dense backward without matching forward");
    const Matrix x = std::move(cache_.back());
    cache_.pop_back();
    w_.grad.noalias() += gy.transpose() * x;
    b_.grad.col(0) += gy.colwise().sum().transpose();
    return gy * w_.value;
  }

  std::vector<Param*> params() override { return {&w_, &b_}; }
  const Matrix& weight() const { return w_.value; }
  const Matrix& bias() const { return b_.value; }

 private:
  static Matrix he_init(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    const double sd = std::sqrt(2.0 / cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = sd * rng.gaussian();
    return m;
  }

  Param w_, b_;
  std::vector<Matrix> cache_;
};

class ReluLayer final : public Layer {
 public:
  Matrix forward(const Matrix& x) override {
    cache_.push_back(x);
    return infer(x);
  }
  Matrix infer(const Matrix& x) const override { return x.cwiseMax(0.0); }
  Matrix backward(const Matrix& gy) override {
    if (cache_.empty()) throw Error("relu backward without matching forward");
    const Matrix x = std::move(cache_.back());
    cache_.pop_back();
    return (x.array() > 0.0).select(gy, Matrix::Zero(gy.rows(), gy.cols()));
  }

 private:
  std::vector<Matrix> cache_;
};

/// L2 normalization of each row (optional embedding head).
class RowNormalizeLayer final : public Layer {
 public:
  Matrix forward(const Matrix& x) override {
    cache_.push_back(x);
    return infer(x);
  }
  Matrix infer(const Matrix& x) const override {
    Matrix y = x;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double n = std::max(y.row(r).norm(), 1e-12);
      y.row(r) /= n;
    }
    return y;
  }
  Matrix backward(const Matrix& gy) override {
    if (cache_.empty()) throw Error("normalize backward without forward");
    const Matrix x = std::move(cache_.back());
    cache_.pop_back();
    Matrix gx(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double n = std::max(x.row(r).norm(), 1e-12);
      const Eigen::RowVectorXd u = x.row(r) / n;
      gx.row(r) = (gy.row(r) - u * (u.dot(gy.row(r)))) / n;
    }
    return gx;
  }

 private:
  std::vector<Matrix> cache_;
};

/// 2D convolution over channel-first rows via im2col. Input spatial size is
/// fixed at construction since rows are flat.
class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(int in_c, int in_h, int in_w, int out_c, int kernel, int stride,
              int pad, Rng& rng)
      : in_c_(in_c), in_h_(in_h), in_w_(in_w), out_c_(out_c), k_(kernel),
        stride_(stride), pad_(pad),
        out_h_((in_h + 2 * pad - kernel) / stride + 1),
        out_w_((in_w + 2 * pad - kernel) / stride + 1),
        w_(he_init(out_c, in_c * kernel * kernel, rng)),
        b_(Matrix::Zero(out_c, 1)) {}

  int out_dim() const { return out_c_ * out_h_ * out_w_; }
  int out_channels() const { return out_c_; }
  int out_height() const { return out_h_; }
  int out_width() const { return out_w_; }

  Matrix forward(const Matrix& x) override {
    Matrix y(x.rows(), out_dim());
    std::vector<Matrix> cols(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index s = 0; s < x.rows(); ++s) {
      cols[static_cast<std::size_t>(s)] = im2col(x, s);
      apply(cols[static_cast<std::size_t>(s)], y, s);
    }
    cache_.push_back(std::move(cols));
    return y;
  }

  Matrix infer(const Matrix& x) const override {
    Matrix y(x.rows(), out_dim());
    for (Eigen::Index s = 0; s < x.rows(); ++s) {
      const Matrix cols = im2col(x, s);
      apply(cols, y, s);
    }
    return y;
  }

  Matrix backward(const Matrix& gy) override {
    if (cache_.empty()) throw Error("conv backward without matching forward");
    const std::vector<Matrix> cols = std::move(cache_.back());
    cache_.pop_back();
    Matrix gx = Matrix::Zero(gy.rows(), in_c_ * in_h_ * in_w_);
    const int L = out_h_ * out_w_;
    Matrix g(out_c_, L);  // per-sample output gradient, channel major
    for (Eigen::Index s = 0; s < gy.rows(); ++s) {
      for (int c = 0; c < out_c_; ++c)
        for (int l = 0; l < L; ++l) g(c, l) = gy(s, c * L + l);
      w_.grad.noalias() += g * cols[static_cast<std::size_t>(s)].transpose();
      b_.grad.col(0) += g.rowwise().sum();
      const Matrix gcols = w_.value.transpose() * g;
      col2im(gcols, gx, s);
    }
    return gx;
  }

  std::vector<Param*> params() override { return {&w_, &b_}; }

 private:
  static Matrix he_init(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    const double sd = std::sqrt(2.0 / cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = sd * rng.gaussian();
    return m;
  }

  // (in_c*k*k, out_h*out_w) patch matrix for sample s; zero padding outside
  // the image.
  Matrix im2col(const Matrix& x, Eigen::Index s) const {
    Matrix cols = Matrix::Zero(in_c_ * k_ * k_, out_h_ * out_w_);
    for (int oi = 0; oi < out_h_; ++oi) {
      for (int oj = 0; oj < out_w_; ++oj) {
        const int l = oi * out_w_ + oj;
        for (int c = 0; c < in_c_; ++c) {
          for (int ki = 0; ki < k_; ++ki) {
            const int ii = oi * stride_ - pad_ + ki;
            if (ii < 0 || ii >= in_h_) continue;
            for (int kj = 0; kj < k_; ++kj) {
              const int jj = oj * stride_ - pad_ + kj;
              if (jj < 0 || jj >= in_w_) continue;
              cols((c * k_ + ki) * k_ + kj, l) =
                  x(s, (c * in_h_ + ii) * in_w_ + jj);
            }
          }
        }
      }
    }
    return cols;
  }

  void col2im(const Matrix& gcols, Matrix& gx, Eigen::Index s) const {
    for (int oi = 0; oi < out_h_; ++oi) {
      for (int oj = 0; oj < out_w_; ++oj) {
        const int l = oi * out_w_ + oj;
        for (int c = 0; c < in_c_; ++c) {
          for (int ki = 0; ki < k_; ++ki) {
            const int ii = oi * stride_ - pad_ + ki;
            if (ii < 0 || ii >= in_h_) continue;
            for (int kj = 0; kj < k_; ++kj) {
              const int jj = oj * stride_ - pad_ + kj;
              if (jj < 0 || jj >= in_w_) continue;
              gx(s, (c * in_h_ + ii) * in_w_ + jj) +=
                  gcols((c * k_ + ki) * k_ + kj, l);
            }
          }
        }
      }
    }
  }

  void apply(const Matrix& cols, Matrix& y, Eigen::Index s) const {
    const Matrix out = w_.value * cols;  // (out_c, L)
    const int L = out_h_ * out_w_;
    for (int c = 0; c < out_c_; ++c)
      for (int l = 0; l < L; ++l) y(s, c * L + l) = out(c, l) + b_.value(c, 0);
  }

  int in_c_, in_h_, in_w_, out_c_, k_, stride_, pad_, out_h_, out_w_;
  Param w_, b_;
  std::vector<std::vector<Matrix>> cache_;
};

/// Two stride-1 convolutions with a skip connection, ReLU after each stage.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(int channels, int h, int w, Rng& rng)
      : conv1_(channels, h, w, channels, 3, 1, 1, rng),
        conv2_(channels, h, w, channels, 3, 1, 1, rng) {}

  Matrix forward(const Matrix& x) override {
    const Matrix h1 = relu1_.forward(conv1_.forward(x));
    const Matrix h2 = conv2_.forward(h1);
    return relu2_.forward(h2 + x);
  }
  Matrix infer(const Matrix& x) const override {
    const Matrix h1 = relu1_.infer(conv1_.infer(x));
    return relu2_.infer(conv2_.infer(h1) + x);
  }
  Matrix backward(const Matrix& gy) override {
    const Matrix g = relu2_.backward(gy);
    const Matrix gchain = conv1_.backward(relu1_.backward(conv2_.backward(g)));
    return g + gchain;
  }
  std::vector<Param*> params() override {
    auto p = conv1_.params();
    for (auto* q : conv2_.params()) p.push_back(q);
    return p;
  }

 private:
  Conv2dLayer conv1_, conv2_;
  ReluLayer relu1_, relu2_;
};

/// Ordered stack of layers.
class SequentialNet {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Matrix forward(Matrix x) {
    for (auto& l : layers_) x = l->forward(x);
    return x;
  }
  Matrix infer(Matrix x) const {
    for (const auto& l : layers_) x = l->infer(x);
    return x;
  }
  Matrix backward(Matrix g) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }
  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// ------------------------------------------------------------------ backbones

/// Feature extractor contract shared by the full and test backbones: flat
/// (23, H, W) rows in, feature rows out.
struct Backbone {
  std::string name;
  int feature_dim = 0;
  SequentialNet net;
};

/// "tiny": three stride-2 convolutions, for minute-scale tests.
/// "residual": a reduced-depth residual CNN standing in for the full-size
/// residual backbone behind the same contract.
/// "flat": identity (projections-only model, used by gradient checks).
inline Backbone make_backbone(const std::string& name, int h, int w, Rng& rng) {
  Backbone b;
  b.name = name;
  if (name == "flat") {
    b.feature_dim = kStackChannels * h * w;
    return b;
  }
  if (name == "tiny") {
    auto c1 = std::make_unique<Conv2dLayer>(kStackChannels, h, w, 8, 3, 2, 1, rng);
    auto c2 = std::make_unique<Conv2dLayer>(8, c1->out_height(), c1->out_width(), 16, 3, 2, 1, rng);
    auto c3 = std::make_unique<Conv2dLayer>(16, c2->out_height(), c2->out_width(), 16, 3, 2, 1, rng);
    b.feature_dim = c3->out_dim();
    b.net.add(std::move(c1));
    b.net.add(std::make_unique<ReluLayer>());
    b.net.add(std::move(c2));
    b.net.add(std::make_unique<ReluLayer>());
    b.net.add(std::move(c3));
    b.net.add(std::make_unique<ReluLayer>());
    return b;
  }
  if (name == "residual") {
    auto stem = std::make_unique<Conv2dLayer>(kStackChannels, h, w, 12, 3, 2, 1, rng);
    const int h1 = stem->out_height(), w1 = stem->out_width();
    auto down1 = std::make_unique<Conv2dLayer>(12, h1, w1, 24, 3, 2, 1, rng);
    const int h2 = down1->out_height(), w2 = down1->out_width();
    auto down2 = std::make_unique<Conv2dLayer>(24, h2, w2, 24, 3, 2, 1, rng);
    b.feature_dim = down2->out_dim();
    b.net.add(std::move(stem));
    b.net.add(std::make_unique<ReluLayer>());
    b.net.add(std::make_unique<ResidualBlock>(12, h1, w1, rng));
    b.net.add(std::move(down1));
    b.net.add(std::make_unique<ReluLayer>());
    b.net.add(std::make_unique<ResidualBlock>(24, h2, w2, rng));
    b.net.add(std::move(down2));
    b.net.add(std::make_unique<ReluLayer>());
    return b;
  }
  throw ConfigError("unknown backbone '" + name + "'");
}

// ----------------------------------------------------------- contrastive loss

/// Squared distance for synchronized pairs, squared hinge with margin m for
/// unsynchronized ones, summed over the batch:
///   L = sum_j [ y_j d_j^2 + (1 - y_j) max(0, m - d_j)^2 ],  d_j = |zf_j - zt_j|.
inline double contrastive_loss_grad(const Matrix& zf, const Matrix& zt,
                                    const std::vector<int>& y, double margin,
                                    Matrix* gzf = nullptr, Matrix* gzt = nullptr) {
  if (zf.rows() != zt.rows() || zf.cols() != zt.cols() ||
      static_cast<std::size_t>(zf.rows()) != y.size())
    throw BatchMismatch("embedding batches and labels must have equal sizes");
  if (margin <= 0.0) throw Error("margin must be positive");
  if (gzf) *gzf = Matrix::Zero(zf.rows(), zf.cols());
  if (gzt) *gzt = Matrix::Zero(zt.rows(), zt.cols());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < zf.rows(); ++j) {
    if (y[static_cast<std::size_t>(j)] != 0 && y[static_cast<std::size_t>(j)] != 1)
      throw Error("labels must be 0 or 1");
    const Eigen::RowVectorXd diff = zf.row(j) - zt.row(j);
    const double d = diff.norm();
    if (y[static_cast<std::size_t>(j)] == 1) {
      loss += d * d;
      if (gzf) gzf->row(j) = 2.0 * diff;
      if (gzt) gzt->row(j) = -2.0 * diff;
    } else if (d < margin) {
      const double gap = margin - d;
      loss += gap * gap;
      // At d == 0 the hinge has no defined direction; use zero subgradient.
      if (d > 1e-12) {
        const double scale = -2.0 * gap / d;
        if (gzf) gzf->row(j) = scale * diff;
        if (gzt) gzt->row(j) = -scale * diff;
      }
    }
  }
  return loss;
}

inline double contrastive_loss(const Matrix& zf, const Matrix& zt,
                               const std::vector<int>& y, double margin) {
  return contrastive_loss_grad(zf, zt, y, margin);
}

// ------------------------------------------------------------------ optimizer

/// SGD with momentum and decoupled-from-nothing classic weight decay:
///   v <- momentum * v - lr * (g + wd * w);  w <- w + v.
class Sgd {
 public:
  Sgd(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), wd_(weight_decay) {}

  void step(const std::vector<Param*>& params) {
    for (Param* p : params) {
      p->momentum = momentum_ * p->momentum - lr_ * (p->grad + wd_ * p->value);
      p->value += p->momentum;
      p->grad.setZero();
    }
  }

 private:
  double lr_, momentum_, wd_;
};

// ---------------------------------------------------------------- the model

struct ModelConfig {
  std::string backbone = "tiny";
  int height = 32;
  int width = 32;
  int proj_dim = 100;
  int embed_dim = 64;
  bool normalize_embeddings = false;
  std::uint64_t seed = 1;
};

/// Two-stream embedding network. Each stream owns its backbone and its
/// projection to proj_dim; the final projection to embed_dim is one object
/// shared by both streams (the only shared parameters).
class SemiSiameseModel {
 public:
  explicit SemiSiameseModel(const ModelConfig& cfg)
      : config(cfg), stats(ChannelStats::identity()) {
    Rng rng(cfg.seed);
    first_backbone_ = make_backbone(cfg.backbone, cfg.height, cfg.width, rng);
    third_backbone_ = make_backbone(cfg.backbone, cfg.height, cfg.width, rng);
    first_proj_ = std::make_unique<DenseLayer>(first_backbone_.feature_dim,
                                               cfg.proj_dim, rng);
    third_proj_ = std::make_unique<DenseLayer>(third_backbone_.feature_dim,
                                               cfg.proj_dim, rng);
    shared_head_ = std::make_shared<DenseLayer>(cfg.proj_dim, cfg.embed_dim, rng);
  }

  int input_dim() const {
    return kStackChannels * config.height * config.width;
  }

  // Training-mode forward passes. The shared head caches LIFO, so backward
  // calls must come in reverse order of the forwards.
  Matrix forward_first_train(const Matrix& x) {
    check_dim(x);
    Matrix h = first_backbone_.net.empty() ? x : first_backbone_.net.forward(x);
    h = first_proj_->forward(h);
    h = first_relu_.forward(h);
    h = shared_head_->forward(h);
    if (config.normalize_embeddings) h = first_norm_.forward(h);
    return h;
  }
  Matrix forward_third_train(const Matrix& x) {
    check_dim(x);
    Matrix h = third_backbone_.net.empty() ? x : third_backbone_.net.forward(x);
    h = third_proj_->forward(h);
    h = third_relu_.forward(h);
    h = shared_head_->forward(h);
    if (config.normalize_embeddings) h = third_norm_.forward(h);
    return h;
  }
  void backward_first(const Matrix& g) {
    Matrix gg = config.normalize_embeddings ? first_norm_.backward(g) : g;
    gg = shared_head_->backward(gg);
    gg = first_relu_.backward(gg);
    gg = first_proj_->backward(gg);
    if (!first_backbone_.net.empty()) first_backbone_.net.backward(gg);
  }
  void backward_third(const Matrix& g) {
    Matrix gg = config.normalize_embeddings ? third_norm_.backward(g) : g;
    gg = shared_head_->backward(gg);
    gg = third_relu_.backward(gg);
    gg = third_proj_->backward(gg);
    if (!third_backbone_.net.empty()) third_backbone_.net.backward(gg);
  }

  // Evaluation-mode forward passes (pure).
  Matrix infer_first(const Matrix& x) const {
    check_dim(x);
    Matrix h = first_backbone_.net.empty() ? x : first_backbone_.net.infer(x);
    h = first_relu_.infer(first_proj_->infer(h));
    h = shared_head_->infer(h);
    if (config.normalize_embeddings) h = RowNormalizeLayer().infer(h);
    return h;
  }
  Matrix infer_third(const Matrix& x) const {
    check_dim(x);
    Matrix h = third_backbone_.net.empty() ? x : third_backbone_.net.infer(x);
    h = third_relu_.infer(third_proj_->infer(h));
    h = shared_head_->infer(h);
    if (config.normalize_embeddings) h = RowNormalizeLayer().infer(h);
    return h;
  }

  /// All trainable parameters; the shared head appears once.
  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto* p : first_backbone_.net.params()) out.push_back(p);
    for (auto* p : third_backbone_.net.params()) out.push_back(p);
    for (auto* p : first_proj_->params()) out.push_back(p);
    for (auto* p : third_proj_->params()) out.push_back(p);
    for (auto* p : shared_head_->params()) out.push_back(p);
    return out;
  }

  /// The final projection as reached from either stream; both return the
  /// same object.
  const DenseLayer& shared_head_via_first() const { return *shared_head_; }
  const DenseLayer& shared_head_via_third() const { return *shared_head_; }

  ModelConfig config;
  ChannelStats stats;

 private:
  void check_dim(const Matrix& x) const {
    if (x.cols() != input_dim())
      throw ShapeMismatch("expected input dimension " +
                          std::to_string(input_dim()) + ", got " +
                          std::to_string(x.cols()));
  }

  Backbone first_backbone_, third_backbone_;
  std::unique_ptr<DenseLayer> first_proj_, third_proj_;
  ReluLayer first_relu_, third_relu_;
  RowNormalizeLayer first_norm_, third_norm_;
  std::shared_ptr<DenseLayer> shared_head_;
};

namespace detail {

inline Matrix stack_as_normalized_row(const SemiSiameseModel& model,
                                      const FrameStack& stack) {
  if (stack.channels.ndim() != 3 || stack.channels.shape[0] != kStackChannels)
    throw ShapeMismatch("frame stack must have " +
                        std::to_string(kStackChannels) + " channels, got " +
                        std::to_string(stack.channels.ndim() == 3
                                           ? stack.channels.shape[0]
                                           : -1));
  const Vector r = normalize_stack(stack, model.stats).as_row();
  return r.transpose();
}

}  // namespace detail

/// Embedding of a single stack through the first-view stream (evaluation
/// mode; the model's stored channel statistics are applied first).
inline Vector forward_first(const SemiSiameseModel& model,
                            const FrameStack& stack) {
  return model.infer_first(detail::stack_as_normalized_row(model, stack)).row(0);
}

inline Vector forward_third(const SemiSiameseModel& model,
                            const FrameStack& stack) {
  return model.infer_third(detail::stack_as_normalized_row(model, stack)).row(0);
}

// --------------------------------------------------------------- checkpoints

namespace detail {

constexpr char kCheckpointMagic[8] = {'E', 'G', 'S', 'Y', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_string(std::ostream& os, const std::string& s) {
  const std::uint32_t n = static_cast<std::uint32_t>(s.size());
  write_pod(os, n);
  os.write(s.data(), n);
}

inline std::string read_string(std::istream& is, const std::string& path) {
  std::uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!is || n > 4096) throw CorruptCheckpoint("corrupt checkpoint: " + path);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw CorruptCheckpoint("truncated checkpoint: " + path);
  return s;
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  const std::uint32_t r = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t c = static_cast<std::uint32_t>(m.cols());
  write_pod(os, r);
  write_pod(os, c);
  for (std::uint32_t i = 0; i < r; ++i)
    for (std::uint32_t j = 0; j < c; ++j) write_pod(os, m(i, j));
}

inline Matrix read_matrix(std::istream& is, const std::string& path) {
  std::uint32_t r = 0, c = 0;
  is.read(reinterpret_cast<char*>(&r), sizeof(r));
  is.read(reinterpret_cast<char*>(&c), sizeof(c));
  if (!is || r > (1u << 24) || c > (1u << 24))
    throw CorruptCheckpoint("corrupt checkpoint: " + path);
  Matrix m(r, c);
  for (std::uint32_t i = 0; i < r; ++i)
    for (std::uint32_t j = 0; j < c; ++j) {
      double v;
      is.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!is) throw CorruptCheckpoint("truncated checkpoint: " + path);
      m(i, j) = v;
    }
  return m;
}

inline void open_checkpoint(std::ifstream& is, const std::string& path,
                            std::uint8_t expected_kind) {
  is.open(path, std::ios::binary);
  if (!is) throw MissingArtifact("checkpoint not found: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CorruptCheckpoint("bad checkpoint magic: " + path);
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!is) throw CorruptCheckpoint("truncated checkpoint: " + path);
  if (version != kCheckpointVersion)
    throw CorruptCheckpoint("unsupported checkpoint version " +
                            std::to_string(version) + " (expected " +
                            std::to_string(kCheckpointVersion) + "): " + path);
  std::uint8_t kind = 0;
  is.read(reinterpret_cast<char*>(&kind), sizeof(kind));
  if (!is) throw CorruptCheckpoint("truncated checkpoint: " + path);
  if (kind != expected_kind)
    throw CorruptCheckpoint("checkpoint holds a different artifact kind: " +
                            path);
}

}  // namespace detail

inline void save_model(const std::string& path, SemiSiameseModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(detail::kCheckpointMagic, 8);
  detail::write_pod(os, detail::kCheckpointVersion);
  detail::write_pod(os, static_cast<std::uint8_t>(1));
  detail::write_string(os, model.config.backbone);
  detail::write_pod(os, model.config.height);
  detail::write_pod(os, model.config.width);
  detail::write_pod(os, model.config.proj_dim);
  detail::write_pod(os, model.config.embed_dim);
  detail::write_pod(os, static_cast<std::uint8_t>(model.config.normalize_embeddings));
  detail::write_pod(os, model.config.seed);
  detail::write_matrix(os, model.stats.mean);
  detail::write_matrix(os, model.stats.stddev);
  const auto params = model.params();
  detail::write_pod(os, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) detail::write_matrix(os, p->value);
  if (!os) throw IoError("write failed: " + path);
}

inline SemiSiameseModel load_model(const std::string& path) {
  std::ifstream is;
  detail::open_checkpoint(is, path, 1);
  ModelConfig cfg;
  cfg.backbone = detail::read_string(is, path);
  is.read(reinterpret_cast<char*>(&cfg.height), sizeof(cfg.height));
  is.read(reinterpret_cast<char*>(&cfg.width), sizeof(cfg.width));
  is.read(reinterpret_cast<char*>(&cfg.proj_dim), sizeof(cfg.proj_dim));
  is.read(reinterpret_cast<char*>(&cfg.embed_dim), sizeof(cfg.embed_dim));
  std::uint8_t norm = 0;
  is.read(reinterpret_cast<char*>(&norm), sizeof(norm));
  is.read(reinterpret_cast<char*>(&cfg.seed), sizeof(cfg.seed));
  if (!is) throw CorruptCheckpoint("truncated checkpoint: " + path);
  cfg.normalize_embeddings = norm != 0;
  SemiSiameseModel model(cfg);
  model.stats.mean = detail::read_matrix(is, path);
  model.stats.stddev = detail::read_matrix(is, path);
  std::uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!is) throw CorruptCheckpoint("truncated checkpoint: " + path);
  auto params = model.params();
  if (count != params.size())
    throw CorruptCheckpoint("parameter count mismatch in checkpoint: " + path);
  for (Param* p : params) {
    const Matrix m = detail::read_matrix(is, path);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw CorruptCheckpoint("parameter shape mismatch in checkpoint: " + path);
    p->value = m;
  }
  return model;
}

/// Order-independent digest of all parameter values; used to assert that
/// feature extraction leaves a model untouched.
inline std::uint64_t parameter_checksum(SemiSiameseModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Param* p : model.params()) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        std::uint64_t bits;
        const double v = p->value(i, j);
        std::memcpy(&bits, &v, sizeof(bits));
        h = (h ^ bits) * 0x100000001b3ULL;
      }
  }
  return h;
}

}  // namespace egosync
