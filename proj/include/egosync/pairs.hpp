#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "egosync/errors.hpp"
#include "egosync/manifest.hpp"
#include "egosync/rng.hpp"

namespace egosync {

enum class PairDifficulty { Positive, EasyNegative, HardNegative };

inline const char* difficulty_name(PairDifficulty d) {
  switch (d) {
    case PairDifficulty::Positive: return "positive";
    case PairDifficulty::EasyNegative: return "easy_negative";
    case PairDifficulty::HardNegative: return "hard_negative";
  }
  return "?";
}

/// A first-view / third-view clip pairing with its synchronization label.
/// Positives are synchronized recordings (time_shift 0); easy negatives pair
/// the same person and scene across different activities; hard negatives
/// pair the same recording against itself at a nonzero time shift.
struct ClipPair {
  ClipRecord first;
  ClipRecord third;
  int label = 0;  // 1 synchronized, 0 unsynchronized
  PairDifficulty difficulty = PairDifficulty::Positive;
  std::int64_t time_shift = 0;
};

namespace detail {

inline std::vector<const ClipRecord*> clips_of_view(
    const std::vector<ClipRecord>& records, View v) {
  std::vector<const ClipRecord*> out;
  for (const auto& r : records)
    if (r.view == v) out.push_back(&r);
  std::sort(out.begin(), out.end(),
            [](const ClipRecord* a, const ClipRecord* b) {
              return a->clip_id < b->clip_id;
            });
  return out;
}

}  // namespace detail

/// One pair per (first, third-front) clip pairing that shares person,
/// activity, scene and frame range. Mining is deterministic: output is
/// ordered by (first.clip_id, third.clip_id).
inline std::vector<ClipPair> mine_positive_pairs(
    const std::vector<ClipRecord>& records) {
  const auto firsts = detail::clips_of_view(records, View::First);
  const auto fronts = detail::clips_of_view(records, View::ThirdFront);
  std::vector<ClipPair> pairs;
  for (const ClipRecord* f : firsts) {
    for (const ClipRecord* t : fronts) {
      if (!f->same_recording(*t)) continue;
      ClipPair p;
      p.first = *f;
      p.third = *t;
      p.label = 1;
      p.difficulty = PairDifficulty::Positive;
      p.time_shift = 0;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

enum class NegativeMode { Easy, Hard };

/// Easy mode: first and third-front clips of the same person in the same
/// scene doing different activities. Hard mode: synchronized recordings
/// re-paired at each nonzero shift in `shift_range`.
inline std::vector<ClipPair> mine_negative_pairs(
    const std::vector<ClipRecord>& records, NegativeMode mode,
    const std::vector<std::int64_t>& shift_range = {25, -25}) {
  std::vector<ClipPair> pairs;
  if (mode == NegativeMode::Hard) {
    for (std::int64_t s : shift_range)
      if (s == 0)
        throw InvalidShiftRange("hard-negative shift range must exclude 0");
    if (shift_range.empty())
      throw InvalidShiftRange("hard-negative shift range is empty");
  }
  const auto firsts = detail::clips_of_view(records, View::First);
  const auto fronts = detail::clips_of_view(records, View::ThirdFront);
  for (const ClipRecord* f : firsts) {
    for (const ClipRecord* t : fronts) {
      if (mode == NegativeMode::Easy) {
        const bool match = f->person_id == t->person_id &&
                           f->scene_id == t->scene_id &&
                           f->activity_id != t->activity_id;
        if (!match) continue;
        ClipPair p;
        p.first = *f;
        p.third = *t;
        p.label = 0;
        p.difficulty = PairDifficulty::EasyNegative;
        p.time_shift = 0;
        pairs.push_back(std::move(p));
      } else {
        if (!f->same_recording(*t)) continue;
        for (std::int64_t s : shift_range) {
          ClipPair p;
          p.first = *f;
          p.third = *t;
          p.label = 0;
          p.difficulty = PairDifficulty::HardNegative;
          p.time_shift = s;
          pairs.push_back(std::move(p));
        }
      }
    }
  }
  return pairs;
}

/// Curriculum schedule over a mined pair pool: epoch 1 draws its negatives
/// from the easy pool, every later epoch from the hard pool. Positives and
/// negatives are interleaved at `negatives_per_positive` (negatives cycle if
/// the pool is smaller). Order is shuffled deterministically from `rng`.
inline std::vector<ClipPair> curriculum_batches(
    const std::vector<ClipPair>& pairs, int epoch, Rng& rng,
    int negatives_per_positive = 1) {
  if (epoch < 1) throw Error("epoch must be >= 1");
  std::vector<ClipPair> positives, negatives;
  const PairDifficulty wanted = (epoch == 1) ? PairDifficulty::EasyNegative
                                             : PairDifficulty::HardNegative;
  for (const auto& p : pairs) {
    if (p.difficulty == PairDifficulty::Positive)
      positives.push_back(p);
    else if (p.difficulty == wanted)
      negatives.push_back(p);
  }
  rng.shuffle(positives);
  rng.shuffle(negatives);
  if (negatives.empty()) {
    log_warning(std::string("no ") + difficulty_name(wanted) +
                " pairs available for epoch " + std::to_string(epoch) +
                "; streaming positives only");
    return positives;
  }
  std::vector<ClipPair> stream;
  stream.reserve(positives.size() * static_cast<std::size_t>(1 + negatives_per_positive));
  std::size_t neg_cursor = 0;
  for (const auto& pos : positives) {
    stream.push_back(pos);
    for (int k = 0; k < negatives_per_positive; ++k) {
      stream.push_back(negatives[neg_cursor % negatives.size()]);
      ++neg_cursor;
    }
  }
  return stream;
}

}  // namespace egosync
