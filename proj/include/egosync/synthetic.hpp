#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "egosync/manifest.hpp"
#include "egosync/rng.hpp"
#include "egosync/skeleton.hpp"
#include "egosync/tensor.hpp"

namespace egosync {

/// Dimension of the latent pose parameter driving the synthetic world.
/// Components are bounded to [-1, 1]:
///   0: left arm swing, 1: right arm swing, 2: elbow bend,
///   3: leg swing (legs alternate), 4: knee bend, 5: spine lean.
constexpr int kLatentDim = 6;

struct SyntheticConfig {
  int n_people = 2;
  int n_activities = 4;
  int n_frames = 120;
  int n_scenes = 1;
  int height = 32;
  int width = 32;
  double noise_amp = 0.01;
  std::uint64_t seed = 1;
};

namespace detail {

// Sub-seed keys; keep stable so regeneration is reproducible per component.
enum : std::uint64_t {
  kSeedActivity = 1000,
  kSeedPerson = 2000,
  kSeedBackground = 3000,
  kSeedViewBlobs = 4000,
  kSeedClipNoise = 5000,
};

inline std::uint64_t clip_key(int person, int activity, int scene, View view) {
  return ((static_cast<std::uint64_t>(person) * 64 + static_cast<std::uint64_t>(activity)) * 64 +
          static_cast<std::uint64_t>(scene)) * 8 +
         static_cast<std::uint64_t>(view);
}

struct BlobParams {
  double cx, cy;      // rest position, pixels
  double dx, dy;      // unit motion direction
  double gain;        // pixels of travel per unit latent
  double sigma;       // gaussian radius, pixels
  double color[3];
};

inline std::vector<BlobParams> view_blobs(std::uint64_t seed, View view,
                                          int width, int height) {
  Rng rng(Rng::mix(seed, kSeedViewBlobs + static_cast<std::uint64_t>(view)));
  std::vector<BlobParams> blobs(kLatentDim);
  const double mx = std::min(8.0, width / 4.0);
  const double my = std::min(8.0, height / 4.0);
  for (auto& b : blobs) {
    b.cx = rng.uniform(mx, width - mx);
    b.cy = rng.uniform(my, height - my);
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    b.dx = std::cos(ang);
    b.dy = std::sin(ang);
    b.gain = rng.uniform(2.0, 3.0);
    b.sigma = rng.uniform(2.5, 4.0);
    for (double& c : b.color) c = rng.uniform(0.35, 0.95);
  }
  return blobs;
}

struct BackgroundParams {
  double base[3];
  double gx[3], gy[3];
};

// The backdrop sits at mid-gray with a faint scene-specific tint and
// gradient. Keeping the static part small (and the blob term below signed)
// makes the dataset mean nearly constant per channel, so the per-channel
// standardization in front of the network removes most static structure and
// the pose signal dominates the normalized stacks.
inline BackgroundParams scene_background(std::uint64_t seed, View view,
                                         int scene) {
  Rng rng(Rng::mix(seed, kSeedBackground + static_cast<std::uint64_t>(view) * 64 +
                             static_cast<std::uint64_t>(scene)));
  BackgroundParams bg{};
  for (int c = 0; c < 3; ++c) {
    bg.base[c] = rng.uniform(0.45, 0.55);
    bg.gx[c] = rng.uniform(-0.06, 0.06);
    bg.gy[c] = rng.uniform(-0.06, 0.06);
  }
  return bg;
}

struct PersonShape {
  double shoulder_width;
  double arm_upper, arm_lower;
  double leg_upper, leg_lower;
  double trunk_lower, trunk_upper, neck_len, head_len;
  double amp_scale;   // trajectory amplitude multiplier
  double phase;       // trajectory phase offset
};

inline PersonShape person_shape(std::uint64_t seed, int person) {
  Rng rng(Rng::mix(seed, kSeedPerson + static_cast<std::uint64_t>(person)));
  PersonShape p{};
  p.shoulder_width = rng.uniform(26.0, 34.0);
  p.arm_upper = rng.uniform(24.0, 29.0);
  p.arm_lower = rng.uniform(22.0, 26.0);
  p.leg_upper = rng.uniform(36.0, 42.0);
  p.leg_lower = rng.uniform(34.0, 40.0);
  p.trunk_lower = rng.uniform(16.0, 20.0);
  p.trunk_upper = rng.uniform(16.0, 20.0);
  p.neck_len = rng.uniform(10.0, 13.0);
  p.head_len = rng.uniform(12.0, 15.0);
  p.amp_scale = rng.uniform(0.9, 1.1);
  p.phase = rng.uniform(0.0, 0.6);
  return p;
}

struct ActivityDynamics {
  double offset[kLatentDim];
  double amp[kLatentDim];
  double freq[kLatentDim];   // cycles per frame
  double phase[kLatentDim];
};

inline ActivityDynamics activity_dynamics(std::uint64_t seed, int activity) {
  Rng rng(Rng::mix(seed, kSeedActivity + static_cast<std::uint64_t>(activity)));
  ActivityDynamics a{};
  for (int k = 0; k < kLatentDim; ++k) {
    a.offset[k] = rng.uniform(-0.5, 0.5);
    a.amp[k] = rng.uniform(0.3, 0.45);
    a.freq[k] = rng.uniform(0.03, 0.1);
    a.phase[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  return a;
}

}  // namespace detail

/// Latent pose trajectory for one recording: per-activity sinusoidal
/// dynamics with a small per-person phase and amplitude variation. All views
/// of the same (person, activity, scene) share this trajectory exactly.
inline Eigen::MatrixXd latent_trajectory(const SyntheticConfig& cfg, int person,
                                         int activity, int scene) {
  const auto dyn = detail::activity_dynamics(cfg.seed, activity);
  const auto shape = detail::person_shape(cfg.seed, person);
  (void)scene;  // the scene changes the backdrop, not the motion
  Eigen::MatrixXd traj(cfg.n_frames, kLatentDim);
  for (int t = 0; t < cfg.n_frames; ++t) {
    for (int k = 0; k < kLatentDim; ++k) {
      const double a = std::min(0.45, dyn.amp[k] * shape.amp_scale);
      traj(t, k) = dyn.offset[k] +
                   a * std::sin(2.0 * M_PI * dyn.freq[k] * t + dyn.phase[k] +
                                shape.phase);
    }
  }
  return traj;
}

/// Articulated skeleton as a fixed function of the latent pose: a leaning
/// trunk with swinging arms and alternating legs. Segment lengths come from
/// the per-person morphology, so shoulder widths differ across people and
/// scale normalization has something to do.
inline Skeleton skeleton_from_latent(const Eigen::VectorXd& theta, int person,
                                     std::uint64_t seed) {
  if (theta.size() != kLatentDim)
    throw DimensionMismatch("latent pose must have " +
                            std::to_string(kLatentDim) + " components");
  const auto p = detail::person_shape(seed, person);
  const double lean = 0.35 * theta[5];
  const Eigen::Vector3d up(std::sin(lean), 0.0, std::cos(lean));
  const Eigen::Vector3d left(0.0, 1.0, 0.0);

  Skeleton s;
  s[kHip] = Eigen::Vector3d::Zero();
  s[kSpine] = s[kHip] + p.trunk_lower * up;
  s[kThorax] = s[kSpine] + p.trunk_upper * up;
  s[kNeck] = s[kThorax] + p.neck_len * up;
  s[kHead] = s[kNeck] + p.head_len * up;

  const double half_w = 0.5 * p.shoulder_width;
  s[kLShoulder] = s[kThorax] + half_w * left;
  s[kRShoulder] = s[kThorax] - half_w * left;

  const double elbow_bend = 0.75 * (theta[2] + 1.0);  // [0, 1.5] rad
  const double swings[2] = {0.9 * theta[0], 0.9 * theta[1]};
  const int shoulder_idx[2] = {kLShoulder, kRShoulder};
  const int elbow_idx[2] = {kLElbow, kRElbow};
  const int wrist_idx[2] = {kLWrist, kRWrist};
  for (int side = 0; side < 2; ++side) {
    const double sw = swings[side];
    const Eigen::Vector3d upper_dir(std::sin(sw), 0.0, -std::cos(sw));
    const Eigen::Vector3d lower_dir(std::sin(sw + elbow_bend), 0.0,
                                    -std::cos(sw + elbow_bend));
    s[elbow_idx[side]] = s[shoulder_idx[side]] + p.arm_upper * upper_dir;
    s[wrist_idx[side]] = s[elbow_idx[side]] + p.arm_lower * lower_dir;
  }

  const double knee_bend = 0.55 * (theta[4] + 1.0);  // [0, 1.1] rad
  const int knee_idx[2] = {kLKnee, kRKnee};
  const int ankle_idx[2] = {kLAnkle, kRAnkle};
  const int foot_idx[2] = {kLFoot, kRFoot};
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;
    const double sw = 0.6 * theta[3] * sign;
    const Eigen::Vector3d thigh_dir(std::sin(sw), 0.0, -std::cos(sw));
    const Eigen::Vector3d shin_dir(std::sin(sw - knee_bend), 0.0,
                                   -std::cos(sw - knee_bend));
    s[knee_idx[side]] = s[kHip] + sign * 9.0 * left + p.leg_upper * thigh_dir;
    s[ankle_idx[side]] = s[knee_idx[side]] + p.leg_lower * shin_dir;
    s[foot_idx[side]] = s[ankle_idx[side]] + Eigen::Vector3d(12.0, 0.0, -2.0);
  }
  return s;
}

/// Renders one noise-free frame of a view: a mid-gray scene backdrop plus one
/// high-contrast gaussian blob per latent dimension. Each latent component
/// translates its blob (a fraction of its radius per frame at the trajectory
/// speeds used here), so a differential flow estimator reads inter-frame
/// motion that is near-linear in the latent velocity; a mild brightness
/// modulation adds a direct intensity readout of the latent without
/// disturbing the motion estimate. Each view has its own blob layout and
/// palette, so the two streams are distinct deterministic functions of the
/// same pose.
inline Tensor render_view_frame(const Eigen::VectorXd& theta, View view,
                                int scene, const SyntheticConfig& cfg) {
  if (theta.size() != kLatentDim)
    throw DimensionMismatch("latent pose must have " +
                            std::to_string(kLatentDim) + " components");
  const auto blobs = detail::view_blobs(cfg.seed, view, cfg.width, cfg.height);
  const auto bg = detail::scene_background(cfg.seed, view, scene);
  Tensor img({cfg.height, cfg.width, 3});
  for (int i = 0; i < cfg.height; ++i) {
    for (int j = 0; j < cfg.width; ++j) {
      double px[3];
      for (int c = 0; c < 3; ++c)
        px[c] = bg.base[c] + bg.gx[c] * (double(j) / cfg.width) +
                bg.gy[c] * (double(i) / cfg.height);
      for (int k = 0; k < kLatentDim; ++k) {
        const auto& b = blobs[static_cast<std::size_t>(k)];
        const double x = b.cx + b.gain * theta[k] * b.dx;
        const double y = b.cy + b.gain * theta[k] * b.dy;
        const double bright = 0.9 + 0.1 * theta[k];  // near-constant contrast
        const double d2 = (j - x) * (j - x) + (i - y) * (i - y);
        const double w = std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        for (int c = 0; c < 3; ++c) px[c] += b.color[c] * bright * w;
      }
      for (int c = 0; c < 3; ++c)
        img.at(i, j, c) = std::min(1.0, std::max(0.0, px[c]));
    }
  }
  return img;
}

struct SyntheticRecording {
  int person_id = 0;
  int activity_id = 0;
  int scene_id = 0;
  Eigen::MatrixXd latent;        // n_frames x kLatentDim
  std::vector<Skeleton> gt;      // n_frames
  ClipRecord ego_record, front_record;
  Tensor ego_stream, front_stream;  // n_frames x H x W x 3
};

struct SyntheticDataset {
  SyntheticConfig config;
  std::vector<SyntheticRecording> recordings;

  std::vector<ClipRecord> manifest() const {
    std::vector<ClipRecord> m;
    for (const auto& r : recordings) {
      m.push_back(r.ego_record);
      m.push_back(r.front_record);
    }
    return m;
  }
};

namespace detail {

inline std::string clip_id_for(int person, int activity, int scene, View view) {
  return "p" + std::to_string(person) + "_a" + std::to_string(activity) +
         "_s" + std::to_string(scene) + "_" + view_name(view);
}

inline Tensor render_stream(const SyntheticConfig& cfg,
                            const Eigen::MatrixXd& latent, View view,
                            int person, int activity, int scene) {
  Tensor stream({cfg.n_frames, cfg.height, cfg.width, 3});
  Rng noise(Rng::mix(cfg.seed, kSeedClipNoise +
                                   clip_key(person, activity, scene, view)));
  for (int t = 0; t < cfg.n_frames; ++t) {
    Tensor frame = render_view_frame(latent.row(t), view, scene, cfg);
    for (int i = 0; i < cfg.height; ++i) {
      for (int j = 0; j < cfg.width; ++j) {
        for (int c = 0; c < 3; ++c) {
          double v = frame.at(i, j, c);
          if (cfg.noise_amp > 0.0)
            v = std::min(1.0, std::max(0.0, v + cfg.noise_amp * noise.gaussian()));
          stream.at(t, i, j, c) = v;
        }
      }
    }
  }
  return stream;
}

}  // namespace detail

/// The desk-scale paired-view oracle: for every (person, activity, scene) it
/// emits one latent trajectory, the ground-truth skeleton sequence, and two
/// synchronized rendered streams (first view and third front view).
/// Deterministic given the seed.
inline SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
  if (cfg.n_people < 1 || cfg.n_activities < 1 || cfg.n_frames < 1 ||
      cfg.n_scenes < 1)
    throw Error("synthetic dataset sizes must be positive");
  SyntheticDataset ds;
  ds.config = cfg;
  for (int person = 0; person < cfg.n_people; ++person) {
    for (int activity = 0; activity < cfg.n_activities; ++activity) {
      const int scene = activity % cfg.n_scenes;
      SyntheticRecording rec;
      rec.person_id = person;
      rec.activity_id = activity;
      rec.scene_id = scene;
      rec.latent = latent_trajectory(cfg, person, activity, scene);
      rec.gt.reserve(static_cast<std::size_t>(cfg.n_frames));
      for (int t = 0; t < cfg.n_frames; ++t)
        rec.gt.push_back(
            skeleton_from_latent(rec.latent.row(t), person, cfg.seed));

      auto make_record = [&](View view) {
        ClipRecord r;
        r.clip_id = detail::clip_id_for(person, activity, scene, view);
        r.view = view;
        r.person_id = person;
        r.activity_id = activity;
        r.scene_id = scene;
        r.frame_begin = 0;
        r.frame_end = cfg.n_frames;
        r.source_uri = "streams/" + r.clip_id + ".tsr";
        return r;
      };
      rec.ego_record = make_record(View::First);
      rec.front_record = make_record(View::ThirdFront);
      rec.ego_stream = detail::render_stream(cfg, rec.latent, View::First,
                                             person, activity, scene);
      rec.front_stream = detail::render_stream(cfg, rec.latent, View::ThirdFront,
                                               person, activity, scene);
      ds.recordings.push_back(std::move(rec));
    }
  }
  return ds;
}

}  // namespace egosync
