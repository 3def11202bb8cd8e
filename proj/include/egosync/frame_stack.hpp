#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "egosync/errors.hpp"
#include "egosync/flow.hpp"
#include "egosync/tensor.hpp"

namespace egosync {

/// An 11-frame window centered on t defines exactly 10 consecutive
/// inter-frame flows; the stack is the center RGB frame plus those fields.
constexpr int kFlowFieldsPerStack = 10;
constexpr int kStackHalfWindow = 5;
constexpr int kStackChannels = 3 + 2 * kFlowFieldsPerStack;  // 23

/// Per-timestep network input, stored channel-first as (23, H, W):
/// channels 0-2 are the center frame RGB, channels 3+2n / 4+2n are the
/// horizontal / vertical components of flow n (frame t-5+n to t-4+n).
struct FrameStack {
  Tensor channels;

  std::int64_t height() const { return channels.shape[1]; }
  std::int64_t width() const { return channels.shape[2]; }

  /// Flat row for the network: the channel-major buffer as-is.
  Eigen::VectorXd as_row() const {
    return Eigen::Map<const Eigen::VectorXd>(channels.data.data(),
                                             static_cast<Eigen::Index>(channels.data.size()));
  }
};

/// Builds the stack for frame t. Requires the full window [t-5, t+5] inside
/// the clip; frames too close to a boundary raise WindowOutOfRange (the
/// default policy is to skip them rather than pad).
inline FrameStack build_stack(const ClipStream& clip, std::int64_t t,
                              const FlowProvider& provider) {
  const std::int64_t n = clip.frame_count();
  if (t - kStackHalfWindow < 0 || t + kStackHalfWindow >= n)
    throw WindowOutOfRange("frame " + std::to_string(t) + " of clip " +
                           clip.clip_id + " lacks the full 11-frame window");
  const std::int64_t h = clip.height(), w = clip.width();
  FrameStack stack;
  stack.channels = Tensor({kStackChannels, h, w});
  for (std::int64_t i = 0; i < h; ++i)
    for (std::int64_t j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        stack.channels.at(c, i, j) = clip.frames.at(t, i, j, c);
  for (int f = 0; f < kFlowFieldsPerStack; ++f) {
    const Tensor field = provider.flow(clip, t - kStackHalfWindow + f);
    if (field.shape[0] != h || field.shape[1] != w)
      throw ShapeMismatch("flow field size mismatch for clip " + clip.clip_id);
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        stack.channels.at(3 + 2 * f, i, j) = field.at(i, j, 0);
        stack.channels.at(4 + 2 * f, i, j) = field.at(i, j, 1);
      }
    }
  }
  return stack;
}

/// Number of frames in a clip that admit a full stack window.
inline std::int64_t eligible_frame_count(std::int64_t clip_frames) {
  return std::max<std::int64_t>(0, clip_frames - 2 * kStackHalfWindow);
}
inline std::int64_t first_eligible_frame() { return kStackHalfWindow; }

/// Per-channel normalization statistics, to be computed on the training
/// split only.
struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static ChannelStats identity() {
    ChannelStats s;
    s.mean = Eigen::VectorXd::Zero(kStackChannels);
    s.stddev = Eigen::VectorXd::Ones(kStackChannels);
    return s;
  }
};

inline ChannelStats compute_stats(const std::vector<FrameStack>& stacks) {
  if (stacks.empty()) throw InsufficientSamples("no stacks for statistics");
  ChannelStats st;
  st.mean = Eigen::VectorXd::Zero(kStackChannels);
  st.stddev = Eigen::VectorXd::Zero(kStackChannels);
  const std::int64_t hw = stacks[0].height() * stacks[0].width();
  const double n = static_cast<double>(hw * static_cast<std::int64_t>(stacks.size()));
  for (const auto& s : stacks)
    for (int c = 0; c < kStackChannels; ++c)
      for (std::int64_t p = 0; p < hw; ++p)
        st.mean[c] += s.channels.data[static_cast<std::size_t>(c * hw + p)];
  st.mean /= n;
  for (const auto& s : stacks)
    for (int c = 0; c < kStackChannels; ++c)
      for (std::int64_t p = 0; p < hw; ++p) {
        const double d = s.channels.data[static_cast<std::size_t>(c * hw + p)] - st.mean[c];
        st.stddev[c] += d * d;
      }
  for (int c = 0; c < kStackChannels; ++c) st.stddev[c] = std::sqrt(st.stddev[c] / n);
  return st;
}

/// Centers and scales each channel under the given statistics. A channel
/// whose stddev is below 1e-8 is only centered; that path warns instead of
/// failing so constant channels (e.g. zero flow) stay usable.
inline FrameStack normalize_stack(const FrameStack& stack,
                                  const ChannelStats& stats) {
  FrameStack out = stack;
  const std::int64_t hw = stack.height() * stack.width();
  for (int c = 0; c < kStackChannels; ++c) {
    const double mean = stats.mean[c];
    const double sd = stats.stddev[c];
    const bool zero_std = sd < 1e-8;
    if (zero_std)
      log_warning("channel " + std::to_string(c) +
                  " has near-zero stddev; centering only");
    for (std::int64_t p = 0; p < hw; ++p) {
      double& v = out.channels.data[static_cast<std::size_t>(c * hw + p)];
      v = zero_std ? (v - mean) : (v - mean) / sd;
    }
  }
  return out;
}

}  // namespace egosync
