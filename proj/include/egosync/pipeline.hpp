#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "egosync/analysis.hpp"
#include "egosync/config.hpp"
#include "egosync/report.hpp"
#include "egosync/synthetic.hpp"
#include "egosync/train.hpp"
#include "egosync/transfer.hpp"
#include "egosync/vocab.hpp"

namespace egosync {

// ---------------------------------------------------------- artifact folders

constexpr int kArtifactVersion = 1;

inline void write_meta(const std::string& dir, const std::string& kind) {
  const std::string path = dir + "/meta.txt";
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "egosync-artifact\nkind\t" << kind << "\nversion\t" << kArtifactVersion
     << '\n';
  if (!os) throw IoError("write failed: " + path);
}

/// Verifies that `dir` holds an artifact of the requested kind at the
/// supported version.
inline void check_artifact(const std::string& dir, const std::string& kind) {
  std::ifstream is(dir + "/meta.txt");
  if (!is)
    throw MissingArtifact("no '" + kind + "' artifact at " + dir +
                          " (meta.txt not found; run the producing stage "
                          "first)");
  std::string line;
  if (!std::getline(is, line) || line != "egosync-artifact")
    throw MissingArtifact(dir + " is not an artifact directory");
  if (!std::getline(is, line) || line.rfind("kind\t", 0) != 0)
    throw MissingArtifact(dir + "/meta.txt is missing its kind line");
  const std::string found = line.substr(5);
  if (found != kind)
    throw MissingArtifact("expected artifact kind '" + kind + "' at " + dir +
                          ", found '" + found + "'");
  if (!std::getline(is, line) || line.rfind("version\t", 0) != 0)
    throw MissingArtifact(dir + "/meta.txt is missing its version line");
  const int version = std::atoi(line.c_str() + 8);
  if (version != kArtifactVersion)
    throw VersionMismatch("artifact version " + std::to_string(version) +
                          " at " + dir + " is not supported (expected " +
                          std::to_string(kArtifactVersion) + ")");
}

// -------------------------------------------------------------- run config

struct PipelineConfig {
  SyntheticConfig data;
  int test_persons = 1;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::int64_t> shifts = {25, -25};
  std::string flow_provider = "gradient";

  int pose_hidden = 64;
  double pose_lr = 0.02;
  double pose_weight_decay = 0.0;
  int pose_epochs = 120;
  int pose_batch = 32;
  std::uint64_t pose_seed = 1;

  std::string projection = "both";  // pca | tsne | both
  std::uint64_t analysis_seed = 1;
};

/// Reads every recognized key and rejects the rest, so a misspelled key
/// fails instead of silently using a default.
///
/// The defaults form a self-contained demonstration recipe: training both
/// streams from random initialization needs a stronger hinge side than the
/// full-scale settings (wide margin, several negatives per positive, no
/// weight decay, normalized embeddings), otherwise two epochs end in the
/// constant-embedding equilibrium of the contrastive loss.
inline PipelineConfig load_pipeline_config(const Config& cfg) {
  PipelineConfig pc;
  pc.data.n_people = static_cast<int>(cfg.get_int("data.people", 4));
  pc.data.n_activities = static_cast<int>(cfg.get_int("data.activities", 4));
  pc.data.n_frames = static_cast<int>(cfg.get_int("data.frames", 96));
  pc.data.n_scenes = static_cast<int>(cfg.get_int("data.scenes", 1));
  pc.data.height = static_cast<int>(cfg.get_int("data.height", 32));
  pc.data.width = static_cast<int>(cfg.get_int("data.width", 32));
  pc.data.noise_amp = cfg.get_double("data.noise", 0.01);
  pc.data.seed = cfg.get_u64("data.seed", 1);

  pc.test_persons = static_cast<int>(cfg.get_int("split.test_persons", 1));

  pc.model.backbone = cfg.get_string("model.backbone", "tiny");
  pc.model.height = pc.data.height;
  pc.model.width = pc.data.width;
  pc.model.proj_dim = static_cast<int>(cfg.get_int("model.proj_dim", 100));
  pc.model.embed_dim = static_cast<int>(cfg.get_int("model.embed_dim", 64));
  pc.model.normalize_embeddings = cfg.get_bool("model.normalize", true);
  pc.model.seed = cfg.get_u64("model.seed", 7);

  pc.train.margin = cfg.get_double("train.margin", 1.8);
  pc.train.learning_rate = cfg.get_double("train.lr", 0.02);
  pc.train.momentum = cfg.get_double("train.momentum", 0.5);
  pc.train.weight_decay = cfg.get_double("train.weight_decay", 0.0);
  pc.train.epochs = static_cast<int>(cfg.get_int("train.epochs", 2));
  pc.train.batch_size = static_cast<int>(cfg.get_int("train.batch", 8));
  pc.train.frame_stride = static_cast<int>(cfg.get_int("train.frame_stride", 1));
  pc.train.negatives_per_positive =
      static_cast<int>(cfg.get_int("train.negatives_per_positive", 3));
  pc.train.stats_sample_limit =
      static_cast<int>(cfg.get_int("train.stats_sample", 64));
  pc.train.seed = cfg.get_u64("train.seed", 1);
  const std::int64_t shift = cfg.get_int("train.shift", 12);
  if (shift < 1) throw ConfigError("train.shift must be >= 1");
  pc.shifts = {shift, -shift};

  pc.flow_provider = cfg.get_string("flow.provider", "gradient");

  pc.pose_hidden = static_cast<int>(cfg.get_int("pose.hidden", 64));
  pc.pose_lr = cfg.get_double("pose.lr", 0.02);
  pc.pose_weight_decay = cfg.get_double("pose.weight_decay", 0.0);
  pc.pose_epochs = static_cast<int>(cfg.get_int("pose.epochs", 120));
  pc.pose_batch = static_cast<int>(cfg.get_int("pose.batch", 32));
  pc.pose_seed = cfg.get_u64("pose.seed", 1);

  pc.projection = cfg.get_string("analysis.projection", "both");
  pc.analysis_seed = cfg.get_u64("analysis.seed", 1);

  cfg.check_consumed();

  if (pc.projection != "pca" && pc.projection != "tsne" &&
      pc.projection != "both")
    throw ConfigError("analysis.projection must be pca, tsne or both");
  pc.train.validate();
  return pc;
}

/// A command-line seed overrides every stage seed at once.
inline void apply_seed_override(PipelineConfig& pc, std::uint64_t seed) {
  pc.data.seed = seed;
  pc.model.seed = Rng::mix(seed, 1);
  pc.train.seed = Rng::mix(seed, 2);
  pc.pose_seed = Rng::mix(seed, 3);
  pc.analysis_seed = Rng::mix(seed, 4);
}

// ------------------------------------------------------------- person split

struct RecordSplit {
  std::vector<ClipRecord> train;
  std::vector<ClipRecord> test;
  std::set<int> test_ids;
};

/// Holds out the `test_persons` highest person ids; every clip of a held-out
/// person goes to the test side, so no person appears in both.
inline RecordSplit split_by_person(const std::vector<ClipRecord>& records,
                                   int test_persons) {
  if (test_persons < 0) throw ConfigError("split.test_persons must be >= 0");
  std::set<int> persons;
  for (const auto& r : records) persons.insert(r.person_id);
  if (test_persons >= static_cast<int>(persons.size()))
    throw ConfigError("split.test_persons = " + std::to_string(test_persons) +
                      " leaves no training people (dataset has " +
                      std::to_string(persons.size()) + ")");
  RecordSplit split;
  auto it = persons.rbegin();
  for (int k = 0; k < test_persons; ++k, ++it) split.test_ids.insert(*it);
  for (const auto& r : records) {
    if (split.test_ids.count(r.person_id))
      split.test.push_back(r);
    else
      split.train.push_back(r);
  }
  return split;
}

// ------------------------------------------------------------ tensor helpers

inline Tensor matrix_to_tensor(const Matrix& m) {
  Tensor t({m.rows(), m.cols()});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      t.data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return t;
}

inline Matrix tensor_to_matrix(const Tensor& t) {
  if (t.ndim() != 2) throw ShapeMismatch("expected a rank-2 tensor");
  Matrix m(t.shape[0], t.shape[1]);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = t.data[static_cast<std::size_t>(i * m.cols() + j)];
  return m;
}

// ------------------------------------------------------------------- stages

/// stage 1: generate the paired-view corpus with ground truth.
inline void cmd_synth_data(const PipelineConfig& pc, const std::string& root) {
  const std::string dir = root + "/data";
  std::filesystem::create_directories(dir + "/streams");
  std::filesystem::create_directories(dir + "/gt");
  const SyntheticDataset ds = generate_synthetic_dataset(pc.data);
  save_manifest(dir + "/manifest.tsv", ds.manifest());
  for (const auto& rec : ds.recordings) {
    save_tensor(dir + "/" + rec.ego_record.source_uri, rec.ego_stream,
                Dtype::Float32);
    save_tensor(dir + "/" + rec.front_record.source_uri, rec.front_stream,
                Dtype::Float32);
    save_skeleton_sequence(dir + "/gt/" + rec.ego_record.clip_id + ".tsv",
                           rec.gt);
    save_skeleton_sequence(dir + "/gt/" + rec.front_record.clip_id + ".tsv",
                           rec.gt);
  }
  write_meta(dir, "data");
}

namespace detail {

inline std::unique_ptr<FlowProvider> pipeline_flow(const PipelineConfig& pc,
                                                   const std::string& root) {
  return make_flow_provider(pc.flow_provider, root + "/data/flow");
}

}  // namespace detail

/// stage 2: fit the two-stream embedding model on training-person pairs.
inline void cmd_train_embed(PipelineConfig pc, const std::string& root) {
  check_artifact(root + "/data", "data");
  const std::vector<ClipRecord> records =
      load_manifest(root + "/data/manifest.tsv");
  const RecordSplit split = split_by_person(records, pc.test_persons);

  std::vector<ClipPair> pairs = mine_positive_pairs(split.train);
  if (pairs.empty()) throw EmptySequence("no positive training pairs");
  for (auto& p : mine_negative_pairs(split.train, NegativeMode::Easy))
    pairs.push_back(std::move(p));
  for (auto& p : mine_negative_pairs(split.train, NegativeMode::Hard, pc.shifts))
    pairs.push_back(std::move(p));

  const DirectoryStackSource source(root + "/data");
  const auto base_flow = detail::pipeline_flow(pc, root);
  const CachingFlowProvider flow(*base_flow);

  const ClipStream& probe = source.stream(pairs.front().first);
  pc.model.height = static_cast<int>(probe.height());
  pc.model.width = static_cast<int>(probe.width());

  SemiSiameseModel model(pc.model);
  const TrainResult result = train_model(model, pairs, source, flow, pc.train);

  const std::string dir = root + "/embed";
  std::filesystem::create_directories(dir);
  save_model(dir + "/model.ckpt", model);
  save_train_log(dir + "/train_log.tsv", result.history);
  write_meta(dir, "embed");
}

/// stage 3: run the frozen model over every clip; store embeddings, base
/// features and aligned pose targets per eligible frame.
inline void cmd_extract(const PipelineConfig& pc, const std::string& root) {
  check_artifact(root + "/data", "data");
  check_artifact(root + "/embed", "embed");
  const std::vector<ClipRecord> records =
      load_manifest(root + "/data/manifest.tsv");
  const SemiSiameseModel model = load_model(root + "/embed/model.ckpt");
  const DirectoryStackSource source(root + "/data");
  const auto base_flow = detail::pipeline_flow(pc, root);
  const CachingFlowProvider flow(*base_flow);

  const std::string dir = root + "/features";
  std::filesystem::create_directories(dir);
  for (const auto& record : records) {
    const ClipStream& stream = source.stream(record);
    const EmbeddingSequence emb =
        extract_embeddings(model, record, stream, flow);
    save_tensor(dir + "/" + record.clip_id + ".emb.tsr",
                matrix_to_tensor(emb.embeddings));
    save_tensor(dir + "/" + record.clip_id + ".base.tsr",
                matrix_to_tensor(base_feature_sequence(stream, flow)));

    const std::vector<Skeleton> gt =
        load_skeleton_sequence(root + "/data/gt/" + record.clip_id + ".tsv");
    if (static_cast<std::int64_t>(gt.size()) < stream.frame_count())
      throw LengthMismatch("ground truth shorter than stream for clip " +
                           record.clip_id);
    Matrix targets(emb.size(), kJointCount * 3);
    for (std::int64_t r = 0; r < emb.size(); ++r) {
      const Skeleton canon = normalize_scale(canonicalize(
          gt[static_cast<std::size_t>(emb.first_frame + r)]));
      targets.row(r) = canon.flatten().transpose();
    }
    save_tensor(dir + "/" + record.clip_id + ".target.tsr",
                matrix_to_tensor(targets));
  }
  write_meta(dir, "features");
}

namespace detail {

struct FeatureBundle {
  Matrix base, emb, target;
};

inline FeatureBundle load_features(const std::string& root,
                                   const ClipRecord& record) {
  const std::string stem = root + "/features/" + record.clip_id;
  FeatureBundle fb;
  fb.base = tensor_to_matrix(load_tensor(stem + ".base.tsr"));
  fb.emb = tensor_to_matrix(load_tensor(stem + ".emb.tsr"));
  fb.target = tensor_to_matrix(load_tensor(stem + ".target.tsr"));
  if (fb.base.rows() != fb.emb.rows() || fb.base.rows() != fb.target.rows())
    throw LengthMismatch("feature files of clip " + record.clip_id +
                         " have inconsistent frame counts");
  return fb;
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix m(a.rows(), a.cols() + b.cols());
  m << a, b;
  return m;
}

inline Matrix vstack(const std::vector<Matrix>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  if (parts.empty() || rows == 0) throw EmptySequence("nothing to stack");
  Matrix m(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    m.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return m;
}

inline PoseRegressor fit_regressor(const PipelineConfig& pc, const Matrix& x,
                                   const Matrix& y, std::uint64_t seed_salt) {
  RegressorConfig rc;
  rc.input_dim = static_cast<int>(x.cols());
  rc.hidden_dim = pc.pose_hidden;
  rc.output_dim = static_cast<int>(y.cols());
  rc.learning_rate = pc.pose_lr;
  rc.weight_decay = pc.pose_weight_decay;
  rc.epochs = pc.pose_epochs;
  rc.batch_size = pc.pose_batch;
  rc.seed = Rng::mix(pc.pose_seed, seed_salt);
  PoseRegressor reg(rc);
  train_regressor(reg, x, y);
  return reg;
}

}  // namespace detail

/// stage 4: fit the pose regressors on training-person first-view frames:
/// a base-features-only baseline, the embedding-augmented regressor, and an
/// embedding-only decoder used by the latent-space analyses.
inline void cmd_train_pose(const PipelineConfig& pc, const std::string& root) {
  check_artifact(root + "/data", "data");
  check_artifact(root + "/features", "features");
  const std::vector<ClipRecord> records =
      load_manifest(root + "/data/manifest.tsv");
  const RecordSplit split = split_by_person(records, pc.test_persons);

  std::vector<Matrix> bases, embs, targets;
  for (const auto& record : split.train) {
    if (record.view != View::First) continue;
    detail::FeatureBundle fb = detail::load_features(root, record);
    bases.push_back(std::move(fb.base));
    embs.push_back(std::move(fb.emb));
    targets.push_back(std::move(fb.target));
  }
  if (bases.empty())
    throw EmptySequence("no first-view training clips with features");
  const Matrix x_base = detail::vstack(bases);
  const Matrix x_emb = detail::vstack(embs);
  const Matrix y = detail::vstack(targets);

  PoseRegressor baseline = detail::fit_regressor(pc, x_base, y, 11);
  PoseRegressor augmented =
      detail::fit_regressor(pc, detail::hcat(x_base, x_emb), y, 12);
  PoseRegressor decoder = detail::fit_regressor(pc, x_emb, y, 13);

  const std::string dir = root + "/pose";
  std::filesystem::create_directories(dir);
  save_regressor(dir + "/baseline.ckpt", baseline);
  save_regressor(dir + "/augmented.ckpt", augmented);
  save_regressor(dir + "/decoder.ckpt", decoder);
  write_meta(dir, "pose");
}

namespace detail {

/// Region rows of the evaluation table, in display order. Paired regions
/// average the left and right joint.
inline const std::vector<std::pair<std::string, std::vector<int>>>&
eval_regions() {
  static const std::vector<std::pair<std::string, std::vector<int>>> regions = {
      {"Hip", {kHip}},
      {"Neck", {kNeck}},
      {"Head", {kHead}},
      {"Shoulders", {kLShoulder, kRShoulder}},
      {"Elbows", {kLElbow, kRElbow}},
      {"Wrists", {kLWrist, kRWrist}},
      {"Thorax", {kThorax}},
      {"Spine", {kSpine}},
      {"Knees", {kLKnee, kRKnee}},
      {"Ankles", {kLAnkle, kRAnkle}},
      {"Feet", {kLFoot, kRFoot}},
  };
  return regions;
}

struct EvalAccumulator {
  Eigen::Matrix<double, kJointCount, 1> per_joint =
      Eigen::Matrix<double, kJointCount, 1>::Zero();
  std::int64_t frames = 0;

  void add(const JointErrorResult& r) {
    for (int j = 0; j < kJointCount; ++j) per_joint[j] += r.per_joint[j];
    ++frames;
  }
  double region_mean(const std::vector<int>& members) const {
    double sum = 0.0;
    for (int m : members) sum += per_joint[m];
    return sum / (static_cast<double>(frames) * members.size());
  }
};

}  // namespace detail

/// stage 5: held-out evaluation. Writes the per-region joint error table
/// (baseline vs augmented), a flat MSE summary, and the synchronization
/// detection report.
inline void cmd_eval(const PipelineConfig& pc, const std::string& root) {
  check_artifact(root + "/data", "data");
  check_artifact(root + "/embed", "embed");
  check_artifact(root + "/features", "features");
  check_artifact(root + "/pose", "pose");
  const std::vector<ClipRecord> records =
      load_manifest(root + "/data/manifest.tsv");
  const RecordSplit split = split_by_person(records, pc.test_persons);
  if (split.test.empty())
    throw ConfigError("evaluation needs at least one held-out person");

  const PoseRegressor baseline = load_regressor(root + "/pose/baseline.ckpt");
  const PoseRegressor augmented = load_regressor(root + "/pose/augmented.ckpt");

  detail::EvalAccumulator acc_base, acc_aug;
  double mse_base = 0.0, mse_aug = 0.0;
  std::int64_t n_frames = 0;
  for (const auto& record : split.test) {
    if (record.view != View::First) continue;
    const detail::FeatureBundle fb = detail::load_features(root, record);
    const Matrix x_aug = detail::hcat(fb.base, fb.emb);
    const std::vector<Skeleton> pred_base =
        predict_sequence(baseline, fb.base);
    const std::vector<Skeleton> pred_aug = predict_sequence(augmented, x_aug);
    mse_base += (baseline.predict(fb.base) - fb.target).squaredNorm();
    mse_aug += (augmented.predict(x_aug) - fb.target).squaredNorm();
    n_frames += fb.target.rows();
    for (Eigen::Index r = 0; r < fb.target.rows(); ++r) {
      const Skeleton gt = Skeleton::from_flat(fb.target.row(r).transpose());
      acc_base.add(joint_error(pred_base[static_cast<std::size_t>(r)], gt));
      acc_aug.add(joint_error(pred_aug[static_cast<std::size_t>(r)], gt));
    }
  }
  if (n_frames == 0) throw EmptySequence("no first-view test clips");
  mse_base /= static_cast<double>(n_frames * kJointCount * 3);
  mse_aug /= static_cast<double>(n_frames * kJointCount * 3);

  const std::string dir = root + "/eval";
  std::filesystem::create_directories(dir);

  std::vector<std::vector<std::string>> rows;
  for (const auto& [name, members] : detail::eval_regions())
    rows.push_back({name, table_cell(acc_base.region_mean(members), 2),
                    table_cell(acc_aug.region_mean(members), 2)});
  rows.push_back({"UppBody",
                  table_cell(acc_base.region_mean(JointGroup::upper().members), 2),
                  table_cell(acc_aug.region_mean(JointGroup::upper().members), 2)});
  rows.push_back({"LowBody",
                  table_cell(acc_base.region_mean(JointGroup::lower().members), 2),
                  table_cell(acc_aug.region_mean(JointGroup::lower().members), 2)});
  rows.push_back({"Avg",
                  table_cell(acc_base.region_mean(JointGroup::all().members), 2),
                  table_cell(acc_aug.region_mean(JointGroup::all().members), 2)});
  save_table(dir + "/metrics.tsv", {"region", "baseline_cm", "augmented_cm"},
             rows);

  save_table(dir + "/summary.tsv", {"metric", "baseline", "augmented"},
             {{"mse", table_cell(mse_base, 6), table_cell(mse_aug, 6)}});

  // Synchronization detection: threshold calibrated on the training people,
  // accuracy reported on the held-out people.
  const SemiSiameseModel model = load_model(root + "/embed/model.ckpt");
  const DirectoryStackSource source(root + "/data");
  const auto base_flow = detail::pipeline_flow(pc, root);
  const CachingFlowProvider flow(*base_flow);

  auto distances = [&](const std::vector<ClipPair>& pairs) {
    std::vector<double> out;
    for (const auto& p : pairs)
      out.push_back(
          pair_distance(model, p, source, flow, pc.train.frame_stride));
    return out;
  };
  const std::vector<double> train_pos =
      distances(mine_positive_pairs(split.train));
  const std::vector<double> train_neg = distances(
      mine_negative_pairs(split.train, NegativeMode::Hard, pc.shifts));
  const std::vector<double> test_pos =
      distances(mine_positive_pairs(split.test));
  const std::vector<double> test_neg = distances(
      mine_negative_pairs(split.test, NegativeMode::Hard, pc.shifts));

  const SyncThreshold thr = choose_sync_threshold(train_pos, train_neg);
  const double test_acc = sync_accuracy(test_pos, test_neg, thr.threshold);
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double d : v) s += d;
    return s / static_cast<double>(v.size());
  };
  const double mp = mean_of(test_pos), mn = mean_of(test_neg);
  save_table(dir + "/sync.tsv", {"metric", "value"},
             {{"threshold", table_cell(thr.threshold, 6)},
              {"train_accuracy", table_cell(thr.train_accuracy, 4)},
              {"test_accuracy", table_cell(test_acc, 4)},
              {"mean_pos_distance", table_cell(mp, 6)},
              {"mean_neg_distance", table_cell(mn, 6)},
              {"separation_ratio", table_cell(mn / std::max(mp, 1e-12), 4)}});
  write_meta(dir, "eval");
}

/// stage 6: latent-space analyses over all extracted embeddings: 2D
/// projections colored by activity class, the per-class canonical
/// correlation matrix between views, and a decoded transversal between two
/// activities.
inline void cmd_analyze(const PipelineConfig& pc, const std::string& root) {
  check_artifact(root + "/data", "data");
  check_artifact(root + "/features", "features");
  check_artifact(root + "/pose", "pose");
  const std::vector<ClipRecord> records =
      load_manifest(root + "/data/manifest.tsv");

  const std::string dir = root + "/analysis";
  std::filesystem::create_directories(dir);
  ReportWriter report(dir);

  // Gather embeddings: flat list for projections, per-class per-view stacks
  // for the correlation analysis (ego and front rows of one recording stay
  // frame-aligned).
  std::vector<Matrix> all;
  std::vector<int> labels;
  std::array<std::vector<Matrix>, kActivityClassCount> by_class_first,
      by_class_third;
  for (const auto& record : records) {
    Matrix emb = tensor_to_matrix(
        load_tensor(root + "/features/" + record.clip_id + ".emb.tsr"));
    const int cls = activity_class(record.activity_id);
    for (Eigen::Index r = 0; r < emb.rows(); ++r) labels.push_back(cls);
    if (record.view == View::First)
      by_class_first[static_cast<std::size_t>(cls)].push_back(emb);
    else
      by_class_third[static_cast<std::size_t>(cls)].push_back(emb);
    all.push_back(std::move(emb));
  }
  const Matrix stacked = detail::vstack(all);

  if (pc.projection == "pca" || pc.projection == "both")
    report.add_scatter("embedding-pca", "embedding_pca.ppm",
                       project_pca(stacked), labels);
  if (pc.projection == "tsne" || pc.projection == "both")
    report.add_scatter("embedding-tsne", "embedding_tsne.ppm",
                       project_tsne(stacked, pc.analysis_seed), labels);

  std::array<Matrix, kActivityClassCount> first_cls, third_cls;
  for (int c = 0; c < kActivityClassCount; ++c) {
    if (by_class_first[static_cast<std::size_t>(c)].empty() ||
        by_class_third[static_cast<std::size_t>(c)].empty())
      throw InsufficientSamples("activity class " + std::to_string(c) +
                                " has no clips in one of the views");
    first_cls[static_cast<std::size_t>(c)] =
        detail::vstack(by_class_first[static_cast<std::size_t>(c)]);
    third_cls[static_cast<std::size_t>(c)] =
        detail::vstack(by_class_third[static_cast<std::size_t>(c)]);
  }
  const Eigen::Matrix4d cca = class_cca_matrix(first_cls, third_cls);
  std::vector<std::vector<std::string>> cca_rows;
  for (int i = 0; i < kActivityClassCount; ++i) {
    std::vector<std::string> row = {"class" + std::to_string(i)};
    for (int j = 0; j < kActivityClassCount; ++j)
      row.push_back(table_cell(cca(i, j), 4));
    cca_rows.push_back(std::move(row));
  }
  report.add_table("class-cca", "cca.tsv",
                   {"first_view", "class0", "class1", "class2", "class3"},
                   cca_rows);

  // Transversal between the first two distinct activities (first-view
  // clips), decoded through the embedding-only regressor.
  const PoseRegressor decoder = load_regressor(root + "/pose/decoder.ckpt");
  const ClipRecord* clip_a = nullptr;
  const ClipRecord* clip_b = nullptr;
  for (const auto& record : records) {
    if (record.view != View::First) continue;
    if (!clip_a) {
      clip_a = &record;
    } else if (record.activity_id != clip_a->activity_id) {
      clip_b = &record;
      break;
    }
  }
  if (clip_a && clip_b) {
    auto mid_row = [&](const ClipRecord& r) -> Vector {
      const Matrix emb = tensor_to_matrix(
          load_tensor(root + "/features/" + r.clip_id + ".emb.tsr"));
      return emb.row(emb.rows() / 2).transpose();
    };
    const Matrix path = build_transversal(mid_row(*clip_a), mid_row(*clip_b));
    const std::vector<Skeleton> decoded = decode_transversal(decoder, path);
    save_skeleton_sequence(report.path_for("transversal_poses.tsv"), decoded);
    report.add_entry("transversal-poses", "transversal_poses.tsv", "table");
    report.add_skeleton_strip("transversal-strip", "transversal_strip.ppm",
                              decoded);
    report.add_table(
        "transversal-smoothness", "transversal.tsv", {"metric", "value"},
        {{"smoothness_ratio",
          table_cell(transversal_smoothness_ratio(decoded), 4)},
         {"from", clip_a->clip_id},
         {"to", clip_b->clip_id}});
  }

  report.finish();
  write_meta(dir, "analysis");
}

/// Convenience wrapper: the whole pipeline in stage order.
inline void cmd_run_all(const PipelineConfig& pc, const std::string& root) {
  cmd_synth_data(pc, root);
  cmd_train_embed(pc, root);
  cmd_extract(pc, root);
  cmd_train_pose(pc, root);
  cmd_eval(pc, root);
  cmd_analyze(pc, root);
}

}  // namespace egosync
