#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "egosync/errors.hpp"

namespace egosync {

/// Fixed 17-joint index table. Every skeleton in the project uses this order;
/// the sequence file header repeats it so files are self-describing.
enum Joint : int {
  kHip = 0,
  kSpine,
  kThorax,
  kNeck,
  kHead,
  kLShoulder,
  kRShoulder,
  kLElbow,
  kRElbow,
  kLWrist,
  kRWrist,
  kLKnee,
  kRKnee,
  kLAnkle,
  kRAnkle,
  kLFoot,
  kRFoot,
};

constexpr int kJointCount = 17;

inline const std::array<const char*, kJointCount>& joint_names() {
  static const std::array<const char*, kJointCount> names = {
      "Hip",    "Spine",  "Thorax", "Neck",      "Head",      "LShoulder",
      "RShoulder", "LElbow", "RElbow", "LWrist", "RWrist",    "LKnee",
      "RKnee",  "LAnkle", "RAnkle", "LFoot",     "RFoot"};
  return names;
}

/// Segment lengths below this (in cm) count as degenerate geometry.
constexpr double kDegenerateTol = 1e-3;

/// Shoulder-to-shoulder distance every skeleton is scaled to before metric
/// computation, in cm.
constexpr double kReferenceShoulderWidth = 30.0;

/// 17 joint positions in centimeters.
struct Skeleton {
  std::array<Eigen::Vector3d, kJointCount> joints;

  Skeleton() {
    for (auto& j : joints) j.setZero();
  }

  Eigen::Vector3d& operator[](int i) { return joints[static_cast<std::size_t>(i)]; }
  const Eigen::Vector3d& operator[](int i) const {
    return joints[static_cast<std::size_t>(i)];
  }

  bool all_finite() const {
    for (const auto& j : joints)
      if (!j.allFinite()) return false;
    return true;
  }

  /// Flat 51-vector view (x, y, z per joint, in index order).
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(3 * kJointCount);
    for (int i = 0; i < kJointCount; ++i) v.segment<3>(3 * i) = joints[static_cast<std::size_t>(i)];
    return v;
  }

  static Skeleton from_flat(const Eigen::VectorXd& v) {
    if (v.size() != 3 * kJointCount)
      throw DimensionMismatch("expected 51 values for a skeleton, got " +
                              std::to_string(v.size()));
    Skeleton s;
    for (int i = 0; i < kJointCount; ++i) s[i] = v.segment<3>(3 * i);
    return s;
  }
};

/// Named subset of joints used for grouped error averages. `upper` and
/// `lower` are disjoint and together cover all 17 joints.
struct JointGroup {
  std::string name;
  std::vector<int> members;

  static const JointGroup& all() {
    static const JointGroup g = [] {
      JointGroup g{"all", {}};
      for (int i = 0; i < kJointCount; ++i) g.members.push_back(i);
      return g;
    }();
    return g;
  }
  static const JointGroup& upper() {
    static const JointGroup g{"upper",
                              {kSpine, kThorax, kNeck, kHead, kLShoulder,
                               kRShoulder, kLElbow, kRElbow, kLWrist, kRWrist}};
    return g;
  }
  static const JointGroup& lower() {
    static const JointGroup g{
        "lower", {kHip, kLKnee, kRKnee, kLAnkle, kRAnkle, kLFoot, kRFoot}};
    return g;
  }
};

namespace detail {

inline void require_finite(const Skeleton& s, const char* what) {
  if (!s.all_finite())
    throw DegenerateSkeleton(std::string("non-finite coordinates in ") + what);
}

}  // namespace detail

/// Rigidly moves a skeleton into the canonical body frame: hip at the origin,
/// x toward the facing direction, y toward the subject's left, z along the
/// spine. The facing direction is the cross product of the shoulder axis
/// (left minus right) and the spine axis (thorax minus hip), which is always
/// horizontal with respect to the spine.
inline Skeleton canonicalize(const Skeleton& s) {
  detail::require_finite(s, "canonicalize");
  const Eigen::Vector3d hip = s[kHip];
  const Eigen::Vector3d shoulder_axis = s[kLShoulder] - s[kRShoulder];
  const Eigen::Vector3d spine_axis = s[kThorax] - s[kHip];
  const double shoulder_len = shoulder_axis.norm();
  const double spine_len = spine_axis.norm();
  if (shoulder_len < kDegenerateTol)
    throw DegenerateSkeleton("shoulder segment shorter than tolerance");
  if (spine_len < kDegenerateTol)
    throw DegenerateSkeleton("spine segment shorter than tolerance");

  const Eigen::Vector3d facing_raw = shoulder_axis.cross(spine_axis);
  if (facing_raw.norm() < 1e-6 * shoulder_len * spine_len)
    throw DegenerateSkeleton("shoulder axis parallel to spine axis");

  const Eigen::Vector3d ex = facing_raw.normalized();
  const Eigen::Vector3d ez = spine_axis.normalized();
  const Eigen::Vector3d ey = ez.cross(ex);

  Eigen::Matrix3d rot;
  rot.row(0) = ex;
  rot.row(1) = ey;
  rot.row(2) = ez;

  Skeleton out;
  for (int i = 0; i < kJointCount; ++i) out[i] = rot * (s[i] - hip);
  return out;
}

/// Uniformly scales about the hip so the shoulder width equals
/// `ref_shoulder` cm.
inline Skeleton normalize_scale(const Skeleton& s,
                                double ref_shoulder = kReferenceShoulderWidth) {
  detail::require_finite(s, "normalize_scale");
  const double width = (s[kLShoulder] - s[kRShoulder]).norm();
  if (width < kDegenerateTol)
    throw DegenerateSkeleton("zero shoulder width");
  const double factor = ref_shoulder / width;
  const Eigen::Vector3d hip = s[kHip];
  Skeleton out;
  for (int i = 0; i < kJointCount; ++i) out[i] = hip + factor * (s[i] - hip);
  return out;
}

struct JointErrorResult {
  std::array<double, kJointCount> per_joint{};
  double mean = 0.0;  // over the requested group
};

/// Per-joint Euclidean distances plus the group mean, in cm. Both skeletons
/// are canonicalized and scale-normalized internally, so the result is
/// invariant to rigid motion and uniform scaling of either argument.
inline JointErrorResult joint_error(const Skeleton& pred, const Skeleton& gt,
                                    const JointGroup& group = JointGroup::all()) {
  const Skeleton p = normalize_scale(canonicalize(pred));
  const Skeleton g = normalize_scale(canonicalize(gt));
  JointErrorResult r;
  for (int i = 0; i < kJointCount; ++i)
    r.per_joint[static_cast<std::size_t>(i)] = (p[i] - g[i]).norm();
  double sum = 0.0;
  for (int i : group.members) sum += r.per_joint[static_cast<std::size_t>(i)];
  r.mean = group.members.empty() ? 0.0 : sum / static_cast<double>(group.members.size());
  return r;
}

/// Mean of per-frame `joint_error` means over an aligned pair of sequences.
inline double sequence_error(const std::vector<Skeleton>& preds,
                             const std::vector<Skeleton>& gts,
                             const JointGroup& group = JointGroup::all()) {
  if (preds.size() != gts.size())
    throw LengthMismatch("sequence lengths differ: " +
                         std::to_string(preds.size()) + " vs " +
                         std::to_string(gts.size()));
  if (preds.empty()) throw EmptySequence("empty skeleton sequences");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    sum += joint_error(preds[i], gts[i], group).mean;
  return sum / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------- file format
//
// One frame per line, 51 whitespace-separated values (17 joints x xyz, cm),
// preceded by a single header line naming the joint order. Values are printed
// with 17 significant digits so that save/load round-trips bit-exactly.

inline std::string skeleton_file_header() {
  std::string h = "# joints:";
  for (const char* n : joint_names()) {
    h += ' ';
    h += n;
  }
  return h;
}

inline void save_skeleton_sequence(const std::string& path,
                                   const std::vector<Skeleton>& seq) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << skeleton_file_header() << '\n';
  char buf[32];
  for (const auto& s : seq) {
    for (int i = 0; i < kJointCount; ++i) {
      for (int d = 0; d < 3; ++d) {
        std::snprintf(buf, sizeof(buf), "%.17g", s[i][d]);
        if (i > 0 || d > 0) os << ' ';
        os << buf;
      }
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<Skeleton> load_skeleton_sequence(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw ParseError(path + ":1: missing header line");
  if (line != skeleton_file_header())
    throw ParseError(path + ":1: unexpected joint order header");
  std::vector<Skeleton> seq;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    Skeleton s;
    const char* p = line.c_str();
    for (int v = 0; v < 3 * kJointCount; ++v) {
      char* end = nullptr;
      const double x = std::strtod(p, &end);
      if (end == p)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": expected 51 values per frame");
      s[v / 3][v % 3] = x;
      p = end;
    }
    char* end = nullptr;
    std::strtod(p, &end);
    if (end != p)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": more than 51 values on a frame line");
    seq.push_back(s);
  }
  return seq;
}

}  // namespace egosync
