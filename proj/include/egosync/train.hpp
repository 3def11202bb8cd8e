#pragma once

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "egosync/flow.hpp"
#include "egosync/frame_stack.hpp"
#include "egosync/net.hpp"
#include "egosync/pairs.hpp"
#include "egosync/rng.hpp"

namespace egosync {

/// Resolves a clip record to its pixel stream.
class StackSource {
 public:
  virtual ~StackSource() = default;
  virtual const ClipStream& stream(const ClipRecord& record) const = 0;
};

class InMemoryStackSource final : public StackSource {
 public:
  void add(const std::string& clip_id, ClipStream stream) {
    streams_[clip_id] = std::move(stream);
  }
  const ClipStream& stream(const ClipRecord& record) const override {
    const auto it = streams_.find(record.clip_id);
    if (it == streams_.end())
      throw MissingArtifact("no stream registered for clip " + record.clip_id);
    return it->second;
  }

 private:
  std::map<std::string, ClipStream> streams_;
};

/// Loads streams lazily from `<base_dir>/<source_uri>` tensor files of shape
/// (frames, height, width, 3).
class DirectoryStackSource final : public StackSource {
 public:
  explicit DirectoryStackSource(std::string base_dir)
      : base_dir_(std::move(base_dir)) {}

  const ClipStream& stream(const ClipRecord& record) const override {
    auto it = cache_.find(record.clip_id);
    if (it != cache_.end()) return it->second;
    const std::string path = base_dir_ + "/" + record.source_uri;
    Tensor t = load_tensor(path);
    if (t.ndim() != 4 || t.shape[3] != 3)
      throw ShapeMismatch("clip stream must have shape (n, h, w, 3): " + path);
    ClipStream s;
    s.clip_id = record.clip_id;
    s.frames = std::move(t);
    return cache_.emplace(record.clip_id, std::move(s)).first->second;
  }

 private:
  std::string base_dir_;
  mutable std::map<std::string, ClipStream> cache_;
};

struct TrainConfig {
  double margin = 0.9;
  double learning_rate = 0.0001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int epochs = 2;
  int batch_size = 8;
  int frame_stride = 2;          // temporal subsampling inside each clip pair
  int negatives_per_positive = 1;
  int stats_sample_limit = 64;   // stacks used to fit channel statistics
  std::uint64_t seed = 1;

  void validate() const {
    if (margin <= 0.0) throw ConfigError("margin must be > 0");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (frame_stride < 1) throw ConfigError("frame stride must be >= 1");
    if (negatives_per_positive < 0)
      throw ConfigError("negatives per positive must be >= 0");
  }
};

struct TrainStepRecord {
  int step = 0;
  int epoch = 0;
  double loss = 0.0;  // mean per-pair loss over the batch
  int n_pos = 0;
  int n_neg = 0;
};

struct TrainResult {
  std::vector<TrainStepRecord> history;
};

namespace detail {

// One frame-level training example: a clip pair plus the first-view frame
// index (the third-view index is t + time_shift).
struct FramePair {
  const ClipPair* pair = nullptr;
  std::int64_t t = 0;
};

inline std::vector<FramePair> enumerate_frame_pairs(
    const std::vector<ClipPair>& batch, const StackSource& source,
    int stride) {
  std::vector<FramePair> out;
  for (const ClipPair& p : batch) {
    const std::int64_t nf = source.stream(p.first).frame_count();
    const std::int64_t nt = source.stream(p.third).frame_count();
    const std::int64_t half = kStackHalfWindow;
    const std::int64_t lo = std::max(half, half - p.time_shift);
    const std::int64_t hi =
        std::min(nf - half - 1, nt - half - 1 - p.time_shift);
    for (std::int64_t t = lo; t <= hi; t += stride)
      out.push_back({&p, t});
  }
  return out;
}

inline void fit_channel_stats(SemiSiameseModel& model,
                              const std::vector<ClipPair>& pairs,
                              const StackSource& source,
                              const FlowProvider& flow, int limit) {
  std::vector<FrameStack> sample;
  for (const ClipPair& p : pairs) {
    if (p.label != 1) continue;
    const ClipStream& f = source.stream(p.first);
    const ClipStream& t = source.stream(p.third);
    if (eligible_frame_count(f.frame_count()) <= 0 ||
        eligible_frame_count(t.frame_count()) <= 0)
      continue;
    const std::int64_t tf = f.frame_count() / 2;
    const std::int64_t tt = t.frame_count() / 2;
    sample.push_back(build_stack(f, tf, flow));
    sample.push_back(build_stack(t, tt, flow));
    if (static_cast<int>(sample.size()) >= limit) break;
  }
  if (sample.empty())
    throw EmptySequence("no usable positive pairs to fit channel statistics");
  model.stats = compute_stats(sample);
}

}  // namespace detail

/// Fits the two-stream model on clip pairs with the curriculum schedule:
/// only easy negatives in the first epoch, hard (time-shifted) negatives
/// afterwards. Channel statistics are fitted from the training pairs before
/// the first step and stored on the model.
inline TrainResult train_model(SemiSiameseModel& model,
                               const std::vector<ClipPair>& pairs,
                               const StackSource& source,
                               const FlowProvider& flow,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw EmptySequence("no training pairs");
  detail::fit_channel_stats(model, pairs, source, flow, cfg.stats_sample_limit);

  Rng rng(cfg.seed);
  Sgd sgd(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  const auto params = model.params();
  TrainResult result;
  int step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<ClipPair> schedule =
        curriculum_batches(pairs, epoch, rng, cfg.negatives_per_positive);
    std::vector<detail::FramePair> frame_pairs =
        detail::enumerate_frame_pairs(schedule, source, cfg.frame_stride);
    if (frame_pairs.empty())
      throw EmptySequence("no clip pair leaves room for an 11-frame window");
    rng.shuffle(frame_pairs);

    for (std::size_t begin = 0; begin < frame_pairs.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          frame_pairs.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const int B = static_cast<int>(end - begin);
      Matrix xf(B, model.input_dim()), xt(B, model.input_dim());
      std::vector<int> y(static_cast<std::size_t>(B));
      int n_pos = 0;
      for (int j = 0; j < B; ++j) {
        const detail::FramePair& fp = frame_pairs[begin + static_cast<std::size_t>(j)];
        const FrameStack sf =
            build_stack(source.stream(fp.pair->first), fp.t, flow);
        const FrameStack st = build_stack(source.stream(fp.pair->third),
                                          fp.t + fp.pair->time_shift, flow);
        xf.row(j) = normalize_stack(sf, model.stats).as_row().transpose();
        xt.row(j) = normalize_stack(st, model.stats).as_row().transpose();
        y[static_cast<std::size_t>(j)] = fp.pair->label;
        n_pos += fp.pair->label;
      }

      const Matrix zf = model.forward_first_train(xf);
      const Matrix zt = model.forward_third_train(xt);
      Matrix gzf, gzt;
      const double loss =
          contrastive_loss_grad(zf, zt, y, cfg.margin, &gzf, &gzt);
      if (!std::isfinite(loss)) {
        const detail::FramePair& fp = frame_pairs[begin];
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(step) +
                            " (epoch " + std::to_string(epoch) + ", pair " +
                            fp.pair->first.clip_id + " / " +
                            fp.pair->third.clip_id + ")");
      }
      // The shared head caches LIFO, so the backward order mirrors the
      // forward order in reverse: third stream first.
      model.backward_third(gzt);
      model.backward_first(gzf);
      sgd.step(params);

      ++step;
      result.history.push_back({step, epoch, loss / B, n_pos, B - n_pos});
    }
  }
  return result;
}

inline void save_train_log(const std::string& path,
                           const std::vector<TrainStepRecord>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "step\tepoch\tloss\tn_pos\tn_neg\n";
  char buf[64];
  for (const TrainStepRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.loss);
    os << r.step << '\t' << r.epoch << '\t' << buf << '\t' << r.n_pos << '\t'
       << r.n_neg << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace egosync
