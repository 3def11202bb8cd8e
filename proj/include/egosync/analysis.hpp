#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "egosync/errors.hpp"
#include "egosync/rng.hpp"
#include "egosync/skeleton.hpp"
#include "egosync/train.hpp"
#include "egosync/transfer.hpp"

namespace egosync {

// -------------------------------------------------------------- 2D projection

/// PCA onto the top two principal axes. Component signs follow a fixed
/// convention (the largest-magnitude loading is positive) so the projection
/// is reproducible across runs.
inline Matrix project_pca(const Matrix& x) {
  if (x.rows() < 2)
    throw DegenerateInput("need at least 2 samples for a 2D projection, got " +
                          std::to_string(x.rows()));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  if (centered.cwiseAbs().maxCoeff() < 1e-12)
    throw DegenerateInput("all samples are identical; projection undefined");
  const Matrix cov =
      centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success)
    throw DegenerateInput("eigendecomposition failed");
  Matrix axes = Matrix::Zero(x.cols(), 2);
  const Eigen::Index last = cov.rows() - 1;
  axes.col(0) = es.eigenvectors().col(last);
  if (cov.rows() > 1) axes.col(1) = es.eigenvectors().col(last - 1);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, c) < 0.0) axes.col(c) = -axes.col(c);
  }
  return centered * axes;
}

namespace detail {

// Binary search over the Gaussian precision of one point so that the row of
// conditional affinities has the requested entropy.
inline Eigen::VectorXd affinity_row(const Eigen::VectorXd& sqdist,
                                    Eigen::Index self, double perplexity) {
  const double target = std::log(perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(sqdist.size());
  for (int it = 0; it < 64; ++it) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < sqdist.size(); ++j) {
      p[j] = (j == self) ? 0.0 : std::exp(-beta * sqdist[j]);
      sum += p[j];
    }
    if (sum <= 0.0) {
      beta /= 2.0;
      continue;
    }
    double entropy = 0.0;
    for (Eigen::Index j = 0; j < sqdist.size(); ++j) {
      if (p[j] <= 0.0) continue;
      const double q = p[j] / sum;
      entropy -= q * std::log(q);
    }
    p /= sum;
    const double diff = entropy - target;
    if (std::abs(diff) < 1e-5) break;
    if (diff > 0.0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
    } else {
      hi = beta;
      beta = (lo + beta) / 2.0;
    }
  }
  return p;
}

}  // namespace detail

/// Exact t-SNE (quadratic in the sample count; intended for small corpora).
/// Seeded initialization makes the layout reproducible.
inline Matrix project_tsne(const Matrix& x, std::uint64_t seed,
                           double perplexity = 12.0, int iters = 250) {
  const Eigen::Index n = x.rows();
  if (n < 4)
    throw DegenerateInput("need at least 4 samples for t-SNE, got " +
                          std::to_string(n));
  Matrix sq(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      sq(i, j) = (x.row(i) - x.row(j)).squaredNorm();
  if (sq.maxCoeff() < 1e-12)
    throw DegenerateInput("all samples are identical; projection undefined");

  const double perp = std::min(perplexity, static_cast<double>(n - 1) / 3.0);
  Matrix p(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    p.row(i) = detail::affinity_row(sq.row(i), i, std::max(perp, 2.0));
  p = (p + p.transpose()) / (2.0 * n);
  p = p.cwiseMax(1e-12);

  Rng rng(seed);
  Matrix y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) y(i, c) = 1e-4 * rng.gaussian();
  Matrix vel = Matrix::Zero(n, 2);

  for (int it = 0; it < iters; ++it) {
    const double exaggeration = (it < 50) ? 4.0 : 1.0;
    Matrix num(n, n);
    double denom = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double q = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = num(j, i) = q;
        denom += 2.0 * q;
      }
    }
    denom = std::max(denom, 1e-12);
    Matrix grad = Matrix::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double coeff =
            4.0 * (exaggeration * p(i, j) - num(i, j) / denom) * num(i, j);
        grad.row(i) += coeff * (y.row(i) - y.row(j));
      }
    const double momentum = (it < 100) ? 0.5 : 0.8;
    vel = momentum * vel - 50.0 * grad;
    y += vel;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

/// Dispatch helper used by the reporting stage.
inline Matrix project_2d(const Matrix& x, const std::string& method,
                         std::uint64_t seed) {
  if (method == "pca") return project_pca(x);
  if (method == "tsne") return project_tsne(x, seed);
  throw ConfigError("unknown projection method '" + method + "'");
}

// ------------------------------------------------------------------------ CCA

namespace detail {

inline Matrix inverse_sqrt_ridge(const Matrix& cov, double ridge) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov +
                                           ridge * Matrix::Identity(cov.rows(),
                                                                    cov.cols()));
  if (es.info() != Eigen::Success)
    throw DegenerateInput("covariance eigendecomposition failed");
  Vector inv = es.eigenvalues();
  for (Eigen::Index i = 0; i < inv.size(); ++i)
    inv[i] = 1.0 / std::sqrt(std::max(inv[i], 1e-12));
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

inline double pearson(const Vector& a, const Vector& b) {
  const double ma = a.mean(), mb = b.mean();
  const Vector ca = a.array() - ma, cb = b.array() - mb;
  const double sa = ca.norm(), sb = cb.norm();
  if (sa < 1e-12 || sb < 1e-12) return 0.0;
  return ca.dot(cb) / (sa * sb);
}

}  // namespace detail

/// First canonical correlation between two paired sample sets. Directions
/// are found with ridge-regularized whitening (ridge 1e-4) for numerical
/// stability; the returned value is the empirical correlation of the two
/// projected sample sets along those directions, so identical inputs score
/// exactly 1.
inline double cca_first_coefficient(const Matrix& a, const Matrix& b,
                                    double ridge = 1e-4) {
  if (a.rows() != b.rows())
    throw DimensionMismatch("paired sample sets must have equal row counts");
  if (a.rows() < 2)
    throw InsufficientSamples("need at least 2 paired samples, got " +
                              std::to_string(a.rows()));
  const double n = static_cast<double>(a.rows());
  const Matrix ca = a.rowwise() - a.colwise().mean();
  const Matrix cb = b.rowwise() - b.colwise().mean();
  const Matrix cov_a = ca.transpose() * ca / n;
  const Matrix cov_b = cb.transpose() * cb / n;
  const Matrix cov_ab = ca.transpose() * cb / n;
  const Matrix wa = detail::inverse_sqrt_ridge(cov_a, ridge);
  const Matrix wb = detail::inverse_sqrt_ridge(cov_b, ridge);
  Eigen::JacobiSVD<Matrix> svd(wa * cov_ab * wb,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector dir_a = wa * svd.matrixU().col(0);
  const Vector dir_b = wb * svd.matrixV().col(0);
  return std::abs(detail::pearson(ca * dir_a, cb * dir_b));
}

// ----------------------------------------------------------- activity classes

constexpr int kActivityClassCount = 4;

inline int activity_class(int activity_id) {
  if (activity_id < 0) throw ConfigError("activity id must be non-negative");
  return activity_id % kActivityClassCount;
}

/// Matrix of first canonical correlations between per-class first-view and
/// third-view embedding sets: entry (i, j) relates first-view samples of
/// class i to third-view samples of class j. Views of the same class are
/// paired frame by frame, so a model that aligns the views produces a
/// diagonally dominant matrix.
inline Eigen::Matrix4d class_cca_matrix(
    const std::array<Matrix, kActivityClassCount>& first,
    const std::array<Matrix, kActivityClassCount>& third) {
  Eigen::Matrix4d m;
  for (int i = 0; i < kActivityClassCount; ++i)
    for (int j = 0; j < kActivityClassCount; ++j) {
      const Eigen::Index rows = std::min(first[static_cast<std::size_t>(i)].rows(),
                                         third[static_cast<std::size_t>(j)].rows());
      if (rows < 2)
        throw InsufficientSamples(
            "activity class " + std::to_string(i) + "/" + std::to_string(j) +
            " has fewer than 2 paired samples");
      m(i, j) = cca_first_coefficient(
          first[static_cast<std::size_t>(i)].topRows(rows),
          third[static_cast<std::size_t>(j)].topRows(rows));
    }
  return m;
}

// ----------------------------------------------------------------- transversal

constexpr int kTransversalSteps = 11;  // interpolation parameter step 0.1

/// Straight-line path between two embeddings: row k holds
/// (1 - k/10) * z_i + (k/10) * z_j, so row 0 is exactly z_i and the last row
/// exactly z_j.
inline Matrix build_transversal(const Vector& zi, const Vector& zj,
                                int steps = kTransversalSteps) {
  if (zi.size() != zj.size())
    throw DimensionMismatch("transversal endpoints must have equal dimension");
  if (steps < 2) throw ConfigError("transversal needs at least 2 steps");
  Matrix path(steps, zi.size());
  for (int k = 0; k < steps; ++k) {
    const double beta = static_cast<double>(k) / (steps - 1);
    path.row(k) = ((1.0 - beta) * zi + beta * zj).transpose();
  }
  return path;
}

/// Decodes each point of a transversal into a pose via a regressor trained
/// on embeddings.
inline std::vector<Skeleton> decode_transversal(const PoseRegressor& reg,
                                                const Matrix& path) {
  return predict_sequence(reg, path);
}

/// Mean joint displacement between two poses, in cm.
inline double pose_step_cm(const Skeleton& a, const Skeleton& b) {
  double sum = 0.0;
  for (int j = 0; j < kJointCount; ++j) sum += (a[j] - b[j]).norm();
  return sum / kJointCount;
}

/// Ratio of the largest consecutive displacement along a decoded path to the
/// mean displacement; near 1 means the path is traversed evenly, large
/// values flag a jump.
inline double transversal_smoothness_ratio(const std::vector<Skeleton>& decoded) {
  if (decoded.size() < 2)
    throw EmptySequence("need at least 2 decoded poses");
  double worst = 0.0, total = 0.0;
  for (std::size_t i = 1; i < decoded.size(); ++i) {
    const double step = pose_step_cm(decoded[i], decoded[i - 1]);
    worst = std::max(worst, step);
    total += step;
  }
  const double mean = total / static_cast<double>(decoded.size() - 1);
  return worst / std::max(mean, 1e-12);
}

// --------------------------------------------------- synchronization detection

/// Mean embedding distance over the aligned frames of one clip pair.
inline double pair_distance(const SemiSiameseModel& model, const ClipPair& pair,
                            const StackSource& source, const FlowProvider& flow,
                            int frame_stride = 2) {
  const std::vector<ClipPair> single{pair};
  const std::vector<detail::FramePair> frames =
      detail::enumerate_frame_pairs(single, source, frame_stride);
  if (frames.empty())
    throw ClipTooShort("pair " + pair.first.clip_id + " / " +
                       pair.third.clip_id +
                       " leaves no room for an 11-frame window");
  Matrix xf(static_cast<Eigen::Index>(frames.size()), model.input_dim());
  Matrix xt(static_cast<Eigen::Index>(frames.size()), model.input_dim());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameStack sf =
        build_stack(source.stream(pair.first), frames[i].t, flow);
    const FrameStack st = build_stack(source.stream(pair.third),
                                      frames[i].t + pair.time_shift, flow);
    xf.row(static_cast<Eigen::Index>(i)) =
        normalize_stack(sf, model.stats).as_row().transpose();
    xt.row(static_cast<Eigen::Index>(i)) =
        normalize_stack(st, model.stats).as_row().transpose();
  }
  const Matrix zf = model.infer_first(xf);
  const Matrix zt = model.infer_third(xt);
  double sum = 0.0;
  for (Eigen::Index r = 0; r < zf.rows(); ++r)
    sum += (zf.row(r) - zt.row(r)).norm();
  return sum / static_cast<double>(zf.rows());
}

struct SyncThreshold {
  double threshold = 0.0;
  double train_accuracy = 0.0;
};

/// Picks the distance cut that best separates synchronized from
/// unsynchronized pairs on the calibration sets; ties go to the smaller
/// threshold.
inline SyncThreshold choose_sync_threshold(const std::vector<double>& pos,
                                           const std::vector<double>& neg) {
  if (pos.empty() || neg.empty())
    throw InsufficientSamples("need both positive and negative distances");
  std::vector<double> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  std::vector<double> candidates = {all.front() - 1e-9};
  for (std::size_t i = 1; i < all.size(); ++i)
    candidates.push_back((all[i - 1] + all[i]) / 2.0);
  candidates.push_back(all.back() + 1e-9);
  SyncThreshold best;
  best.train_accuracy = -1.0;
  for (double t : candidates) {
    std::size_t correct = 0;
    for (double d : pos) correct += (d < t) ? 1u : 0u;
    for (double d : neg) correct += (d >= t) ? 1u : 0u;
    const double acc =
        static_cast<double>(correct) / static_cast<double>(all.size());
    if (acc > best.train_accuracy + 1e-12) {
      best.train_accuracy = acc;
      best.threshold = t;
    }
  }
  return best;
}

/// Fraction of held-out pairs classified correctly by `distance < threshold`.
inline double sync_accuracy(const std::vector<double>& pos,
                            const std::vector<double>& neg, double threshold) {
  if (pos.empty() && neg.empty())
    throw InsufficientSamples("no evaluation pairs");
  std::size_t correct = 0;
  for (double d : pos) correct += (d < threshold) ? 1u : 0u;
  for (double d : neg) correct += (d >= threshold) ? 1u : 0u;
  return static_cast<double>(correct) /
         static_cast<double>(pos.size() + neg.size());
}

}  // namespace egosync
