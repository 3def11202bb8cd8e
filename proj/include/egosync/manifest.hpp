#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "egosync/errors.hpp"

namespace egosync {

enum class View { First, ThirdFront, ThirdSide, ThirdTop };

inline const char* view_name(View v) {
  switch (v) {
    case View::First: return "first";
    case View::ThirdFront: return "third_front";
    case View::ThirdSide: return "third_side";
    case View::ThirdTop: return "third_top";
  }
  return "?";
}

inline View parse_view(const std::string& s) {
  if (s == "first") return View::First;
  if (s == "third_front") return View::ThirdFront;
  if (s == "third_side") return View::ThirdSide;
  if (s == "third_top") return View::ThirdTop;
  throw ParseError("unknown view '" + s + "'");
}

/// One clip of one view of one recorded activity. `frame_begin/frame_end`
/// are a half-open frame index range into the stream at `source_uri`.
struct ClipRecord {
  std::string clip_id;
  View view = View::First;
  int person_id = 0;
  int activity_id = 0;
  int scene_id = 0;
  std::int64_t frame_begin = 0;
  std::int64_t frame_end = 0;
  std::string source_uri;

  std::int64_t frame_count() const { return frame_end - frame_begin; }

  bool same_recording(const ClipRecord& o) const {
    return person_id == o.person_id && activity_id == o.activity_id &&
           scene_id == o.scene_id && frame_begin == o.frame_begin &&
           frame_end == o.frame_end;
  }
};

/// Loads a tab-separated manifest: one clip per line,
/// `clip_id <TAB> view <TAB> person <TAB> activity <TAB> scene <TAB> start
/// <TAB> end <TAB> uri`. Rejects duplicate clip ids and empty frame ranges.
inline std::vector<ClipRecord> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  std::vector<ClipRecord> records;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = path + ":" + std::to_string(lineno);
    if (cols.size() != 8)
      throw ParseError(where + ": expected 8 tab-separated fields, got " +
                       std::to_string(cols.size()));
    ClipRecord r;
    r.clip_id = cols[0];
    try {
      r.view = parse_view(cols[1]);
      r.person_id = std::stoi(cols[2]);
      r.activity_id = std::stoi(cols[3]);
      r.scene_id = std::stoi(cols[4]);
      r.frame_begin = std::stoll(cols[5]);
      r.frame_end = std::stoll(cols[6]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const std::exception&) {
      throw ParseError(where + ": malformed numeric field");
    }
    r.source_uri = cols[7];
    if (r.frame_end <= r.frame_begin)
      throw ParseError(where + ": empty frame range");
    if (!seen.insert(r.clip_id).second)
      throw DuplicateId("duplicate clip_id '" + r.clip_id + "' at " + where);
    records.push_back(std::move(r));
  }
  return records;
}

inline void save_manifest(const std::string& path,
                          const std::vector<ClipRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& r : records) {
    os << r.clip_id << '\t' << view_name(r.view) << '\t' << r.person_id << '\t'
       << r.activity_id << '\t' << r.scene_id << '\t' << r.frame_begin << '\t'
       << r.frame_end << '\t' << r.source_uri << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace egosync
