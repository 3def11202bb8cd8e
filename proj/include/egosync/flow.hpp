#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "egosync/errors.hpp"
#include "egosync/tensor.hpp"

namespace egosync {

/// A decoded clip: frames as an (n, H, W, 3) tensor plus the clip id used to
/// locate precomputed artifacts.
struct ClipStream {
  std::string clip_id;
  Tensor frames;

  std::int64_t frame_count() const { return frames.shape.empty() ? 0 : frames.shape[0]; }
  std::int64_t height() const { return frames.shape[1]; }
  std::int64_t width() const { return frames.shape[2]; }
};

/// Supplies the optical-flow field (H, W, 2) between frames t and t+1 of a
/// clip. Implementations must be deterministic for the same inputs.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual Tensor flow(const ClipStream& clip, std::int64_t t) const = 0;
};

class ZeroFlowProvider final : public FlowProvider {
 public:
  Tensor flow(const ClipStream& clip, std::int64_t) const override {
    return Tensor({clip.height(), clip.width(), 2});
  }
};

/// Windowed Lucas-Kanade on the grayscale mean channel. Meant as the test
/// and synthetic-data estimator, not a quality flow method: one level, no
/// warping. Windows whose structure tensor is near-singular or whose
/// gradient energy is at the sensor-noise floor (for roughly percent-level
/// noise on unit-intensity frames) get zero flow instead of an unstable
/// least-squares solution.
class GradientFlowProvider final : public FlowProvider {
 public:
  /// max_magnitude <= 0 disables clipping of the output displacements.
  explicit GradientFlowProvider(int window_radius = 2,
                                double max_magnitude = 0.0)
      : radius_(window_radius), max_mag_(max_magnitude) {}

  Tensor flow(const ClipStream& clip, std::int64_t t) const override {
    const std::int64_t h = clip.height(), w = clip.width();
    std::vector<double> ga(static_cast<std::size_t>(h * w));
    std::vector<double> gb(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        double sa = 0, sb = 0;
        for (int c = 0; c < 3; ++c) {
          sa += clip.frames.at(t, i, j, c);
          sb += clip.frames.at(t + 1, i, j, c);
        }
        ga[static_cast<std::size_t>(i * w + j)] = sa / 3.0;
        gb[static_cast<std::size_t>(i * w + j)] = sb / 3.0;
      }
    }
    auto avg = [&](std::int64_t i, std::int64_t j) {
      i = std::clamp<std::int64_t>(i, 0, h - 1);
      j = std::clamp<std::int64_t>(j, 0, w - 1);
      const auto idx = static_cast<std::size_t>(i * w + j);
      return 0.5 * (ga[idx] + gb[idx]);
    };
    std::vector<double> ix(ga.size()), iy(ga.size()), it(ga.size());
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        const auto idx = static_cast<std::size_t>(i * w + j);
        ix[idx] = 0.5 * (avg(i, j + 1) - avg(i, j - 1));
        iy[idx] = 0.5 * (avg(i + 1, j) - avg(i - 1, j));
        it[idx] = gb[idx] - ga[idx];
      }
    }
    Tensor out({h, w, 2});
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
        for (std::int64_t di = -radius_; di <= radius_; ++di) {
          for (std::int64_t dj = -radius_; dj <= radius_; ++dj) {
            const std::int64_t ii = std::clamp<std::int64_t>(i + di, 0, h - 1);
            const std::int64_t jj = std::clamp<std::int64_t>(j + dj, 0, w - 1);
            const auto idx = static_cast<std::size_t>(ii * w + jj);
            a11 += ix[idx] * ix[idx];
            a12 += ix[idx] * iy[idx];
            a22 += iy[idx] * iy[idx];
            b1 -= ix[idx] * it[idx];
            b2 -= iy[idx] * it[idx];
          }
        }
        const double det = a11 * a22 - a12 * a12;
        double u = 0, v = 0;
        if (det > 1e-5 && a11 + a22 > 1e-2) {
          u = (a22 * b1 - a12 * b2) / det;
          v = (a11 * b2 - a12 * b1) / det;
        }
        if (max_mag_ > 0.0) {
          const double mag = std::hypot(u, v);
          if (mag > max_mag_) {
            u *= max_mag_ / mag;
            v *= max_mag_ / mag;
          }
        }
        out.at(i, j, 0) = u;
        out.at(i, j, 1) = v;
      }
    }
    return out;
  }

 private:
  std::int64_t radius_;
  double max_mag_;
};

/// Serves flow from precomputed files `<dir>/<clip_id>.flow.tsr`, each an
/// (n-1, H, W, 2) tensor in the shared binary format.
class PrecomputedFlowProvider final : public FlowProvider {
 public:
  explicit PrecomputedFlowProvider(std::string dir) : dir_(std::move(dir)) {}

  Tensor flow(const ClipStream& clip, std::int64_t t) const override {
    auto it = cache_.find(clip.clip_id);
    if (it == cache_.end()) {
      Tensor all = load_tensor(dir_ + "/" + clip.clip_id + ".flow.tsr");
      if (all.ndim() != 4 || all.shape[3] != 2 ||
          all.shape[0] != clip.frame_count() - 1)
        throw ShapeMismatch("precomputed flow shape does not match clip " +
                            clip.clip_id);
      it = cache_.emplace(clip.clip_id, std::move(all)).first;
    }
    return it->second.slice_front(t);
  }

 private:
  std::string dir_;
  mutable std::map<std::string, Tensor> cache_;
};

/// Memoizes another provider per (clip, frame). Single-threaded use only.
class CachingFlowProvider final : public FlowProvider {
 public:
  explicit CachingFlowProvider(const FlowProvider& base) : base_(base) {}

  Tensor flow(const ClipStream& clip, std::int64_t t) const override {
    const auto key = clip.clip_id + "#" + std::to_string(t);
    auto it = cache_.find(key);
    if (it == cache_.end())
      it = cache_.emplace(key, base_.flow(clip, t)).first;
    return it->second;
  }

 private:
  const FlowProvider& base_;
  mutable std::map<std::string, Tensor> cache_;
};

/// Provider selection by config key.
inline std::unique_ptr<FlowProvider> make_flow_provider(
    const std::string& name, const std::string& precomputed_dir = "") {
  if (name == "gradient") return std::make_unique<GradientFlowProvider>();
  if (name == "zero") return std::make_unique<ZeroFlowProvider>();
  if (name == "precomputed") {
    if (precomputed_dir.empty())
      throw ConfigError("precomputed flow provider needs a directory");
    return std::make_unique<PrecomputedFlowProvider>(precomputed_dir);
  }
  throw ConfigError("unknown flow provider '" + name + "'");
}

}  // namespace egosync
