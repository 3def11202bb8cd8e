#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "egosync/rng.hpp"
#include "egosync/skeleton.hpp"

namespace egosync {

/// Canonical, scale-normalized coordinates of the group's joints, flattened
/// in group member order. This is the space the vocabulary quantizes.
inline Eigen::VectorXd pose_code(const Skeleton& s, const JointGroup& group) {
  const Skeleton c = normalize_scale(canonicalize(s));
  Eigen::VectorXd v(3 * static_cast<int>(group.members.size()));
  for (std::size_t i = 0; i < group.members.size(); ++i)
    v.segment<3>(3 * static_cast<Eigen::Index>(i)) = c[group.members[i]];
  return v;
}

/// K discrete poses over one joint group, produced by Lloyd's algorithm on
/// pose codes.
struct PoseVocabulary {
  std::string group_name;
  std::vector<int> members;
  Eigen::MatrixXd centers;                 // (k, 3 * members.size())
  std::vector<double> objective_history;   // mean squared distance per round

  int size() const { return static_cast<int>(centers.rows()); }
};

namespace detail {

inline std::vector<int> assign_nearest(const Eigen::MatrixXd& codes,
                                       const Eigen::MatrixXd& centers,
                                       double* objective) {
  std::vector<int> assign(static_cast<std::size_t>(codes.rows()), 0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (Eigen::Index k = 0; k < centers.rows(); ++k) {
      const double d = (codes.row(i) - centers.row(k)).squaredNorm();
      if (d < best) {  // strict: lowest index wins ties
        best = d;
        best_k = static_cast<int>(k);
      }
    }
    assign[static_cast<std::size_t>(i)] = best_k;
    total += best;
  }
  if (objective) *objective = total / static_cast<double>(codes.rows());
  return assign;
}

}  // namespace detail

/// Builds a K-pose vocabulary. Initial centers are drawn without replacement
/// from the distinct pose codes in seeded shuffle order; iteration stops at
/// convergence (relative objective improvement below 1e-6) or after 100
/// rounds. The recorded objective never increases.
inline PoseVocabulary quantize_poses(const std::vector<Skeleton>& poses, int k,
                                     const JointGroup& group,
                                     std::uint64_t seed) {
  if (k < 1) throw ConfigError("vocabulary size must be >= 1");
  if (static_cast<int>(poses.size()) < k)
    throw TooFewSamples("need at least " + std::to_string(k) +
                        " poses to build a " + std::to_string(k) +
                        "-entry vocabulary, got " +
                        std::to_string(poses.size()));

  const int dim = 3 * static_cast<int>(group.members.size());
  Eigen::MatrixXd codes(static_cast<Eigen::Index>(poses.size()), dim);
  for (std::size_t i = 0; i < poses.size(); ++i)
    codes.row(static_cast<Eigen::Index>(i)) =
        pose_code(poses[i], group).transpose();

  Rng rng(seed);
  std::vector<std::size_t> order(poses.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  Eigen::MatrixXd centers(k, dim);
  int chosen = 0;
  for (std::size_t idx : order) {
    if (chosen == k) break;
    bool dup = false;
    for (int c = 0; c < chosen && !dup; ++c)
      dup = (centers.row(c) - codes.row(static_cast<Eigen::Index>(idx))).norm() == 0.0;
    if (!dup) centers.row(chosen++) = codes.row(static_cast<Eigen::Index>(idx));
  }
  // Fewer distinct codes than k: fall back to repeats so that k == n with
  // duplicated poses still converges (to objective zero).
  for (std::size_t idx : order) {
    if (chosen == k) break;
    centers.row(chosen++) = codes.row(static_cast<Eigen::Index>(idx));
  }

  PoseVocabulary vocab;
  vocab.group_name = group.name;
  vocab.members = group.members;

  double prev = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 100; ++round) {
    double objective = 0.0;
    const std::vector<int> assign =
        detail::assign_nearest(codes, centers, &objective);
    vocab.objective_history.push_back(objective);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < codes.rows(); ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += codes.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    // A center with no members keeps its previous position.

    if (round > 0 && prev - objective <= 1e-6 * std::max(prev, 1e-30)) break;
    prev = objective;
  }
  vocab.centers = centers;
  return vocab;
}

/// Index of the vocabulary entry closest to the pose; ties break to the
/// lowest index.
inline int nearest_pose(const PoseVocabulary& vocab, const Skeleton& pose) {
  if (vocab.size() == 0) throw EmptySequence("empty pose vocabulary");
  JointGroup group{vocab.group_name, vocab.members};
  const Eigen::VectorXd code = pose_code(pose, group);
  double best = std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (int k = 0; k < vocab.size(); ++k) {
    const double d = (vocab.centers.row(k) - code.transpose()).squaredNorm();
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  return best_k;
}

inline void save_vocabulary(const std::string& path,
                            const PoseVocabulary& vocab) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "# pose vocabulary\n";
  os << "group\t" << vocab.group_name << '\n';
  os << "members";
  for (int m : vocab.members) os << '\t' << joint_names()[m];
  os << '\n';
  os << "size\t" << vocab.size() << '\n';
  char buf[64];
  for (int k = 0; k < vocab.size(); ++k) {
    for (Eigen::Index j = 0; j < vocab.centers.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", vocab.centers(k, j));
      os << (j ? "\t" : "") << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

inline PoseVocabulary load_vocabulary(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("vocabulary not found: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "# pose vocabulary")
    throw ParseError(path + ": not a pose vocabulary file");
  PoseVocabulary vocab;
  if (!std::getline(is, line) || line.rfind("group\t", 0) != 0)
    throw ParseError(path + ": missing group line");
  vocab.group_name = line.substr(6);
  if (!std::getline(is, line) || line.rfind("members", 0) != 0)
    throw ParseError(path + ": missing members line");
  {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;  // "members"
    const auto& names = joint_names();
    while (ss >> tok) {
      int id = -1;
      for (int i = 0; i < kJointCount; ++i)
        if (names[i] == tok) id = i;
      if (id < 0) throw ParseError(path + ": unknown joint '" + tok + "'");
      vocab.members.push_back(id);
    }
  }
  if (vocab.members.empty()) throw ParseError(path + ": empty joint group");
  if (!std::getline(is, line) || line.rfind("size\t", 0) != 0)
    throw ParseError(path + ": missing size line");
  const int k = std::atoi(line.c_str() + 5);
  if (k < 1) throw ParseError(path + ": bad vocabulary size");
  const int dim = 3 * static_cast<int>(vocab.members.size());
  vocab.centers.resize(k, dim);
  for (int r = 0; r < k; ++r) {
    if (!std::getline(is, line))
      throw ParseError(path + ": expected " + std::to_string(k) +
                       " center rows, found " + std::to_string(r));
    const char* p = line.c_str();
    char* q = nullptr;
    for (int j = 0; j < dim; ++j) {
      const double v = std::strtod(p, &q);
      if (q == p)
        throw ParseError(path + ": line " + std::to_string(5 + r) +
                         ": expected " + std::to_string(dim) + " values");
      vocab.centers(r, j) = v;
      p = q;
    }
  }
  return vocab;
}

}  // namespace egosync
