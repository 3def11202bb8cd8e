#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "egosync/errors.hpp"
#include "egosync/skeleton.hpp"

namespace egosync {

// ---------------------------------------------------------------- TSV tables

/// Formats a double for report tables (fixed precision keeps reruns
/// byte-identical while staying readable).
inline std::string table_cell(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

inline void save_table(const std::string& path,
                       const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    os << (i ? "\t" : "") << header[i];
  os << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw ShapeMismatch("table row has " + std::to_string(row.size()) +
                          " cells, header has " +
                          std::to_string(header.size()));
    for (std::size_t i = 0; i < row.size(); ++i)
      os << (i ? "\t" : "") << row[i];
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

// ------------------------------------------------------------------ rasters

/// Minimal RGB canvas written as binary PPM (P6), so plots need no imaging
/// dependency.
class Raster {
 public:
  Raster(int w, int h, std::uint8_t r = 255, std::uint8_t g = 255,
         std::uint8_t b = 255)
      : w_(w), h_(h), rgb_(static_cast<std::size_t>(w) * h * 3) {
    for (int i = 0; i < w * h; ++i) {
      rgb_[3 * static_cast<std::size_t>(i)] = r;
      rgb_[3 * static_cast<std::size_t>(i) + 1] = g;
      rgb_[3 * static_cast<std::size_t>(i) + 2] = b;
    }
  }

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * w_ + x);
    rgb_[i] = r;
    rgb_[i + 1] = g;
    rgb_[i + 2] = b;
  }

  void disk(int cx, int cy, int radius, std::uint8_t r, std::uint8_t g,
            std::uint8_t b) {
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy <= radius * radius)
          set(cx + dx, cy + dy, r, g, b);
  }

  void line(int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
            std::uint8_t b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void save_ppm(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P6\n" << w_ << ' ' << h_ << "\n255\n";
    os.write(reinterpret_cast<const char*>(rgb_.data()),
             static_cast<std::streamsize>(rgb_.size()));
    if (!os) throw IoError("write failed: " + path);
  }

 private:
  int w_, h_;
  std::vector<std::uint8_t> rgb_;
};

namespace detail {

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{
    {{31, 119, 180}},
    {{255, 127, 14}},
    {{44, 160, 44}},
    {{214, 39, 40}},
    {{148, 103, 189}},
    {{140, 86, 75}},
    {{227, 119, 194}},
    {{127, 127, 127}},
}};

}  // namespace detail

/// 2D scatter plot; `labels[i]` selects a palette color for point i.
inline void save_scatter_ppm(const std::string& path,
                             const Eigen::MatrixXd& points,
                             const std::vector<int>& labels, int size = 360) {
  if (points.cols() != 2)
    throw ShapeMismatch("scatter points must be (n, 2)");
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    throw ShapeMismatch("one label per point required");
  Raster img(size, size);
  if (points.rows() == 0) {
    img.save_ppm(path);
    return;
  }
  double xmin = points.col(0).minCoeff(), xmax = points.col(0).maxCoeff();
  double ymin = points.col(1).minCoeff(), ymax = points.col(1).maxCoeff();
  const double xpad = std::max((xmax - xmin) * 0.05, 1e-9);
  const double ypad = std::max((ymax - ymin) * 0.05, 1e-9);
  xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;
  const int margin = 8;
  const double sx = (size - 2 * margin) / (xmax - xmin);
  const double sy = (size - 2 * margin) / (ymax - ymin);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int px = margin + static_cast<int>((points(i, 0) - xmin) * sx);
    const int py =
        size - 1 - margin - static_cast<int>((points(i, 1) - ymin) * sy);
    const auto& c = detail::kPalette[static_cast<std::size_t>(
        labels[static_cast<std::size_t>(i)] % 8)];
    img.disk(px, py, 2, c[0], c[1], c[2]);
  }
  img.save_ppm(path);
}

/// Bone segments of the 17-joint skeleton (parent, child).
inline const std::vector<std::pair<int, int>>& skeleton_bones() {
  static const std::vector<std::pair<int, int>> bones = {
      {kHip, kSpine},        {kSpine, kThorax},   {kThorax, kNeck},
      {kNeck, kHead},        {kThorax, kLShoulder}, {kLShoulder, kLElbow},
      {kLElbow, kLWrist},    {kThorax, kRShoulder}, {kRShoulder, kRElbow},
      {kRElbow, kRWrist},    {kHip, kLKnee},      {kLKnee, kLAnkle},
      {kLAnkle, kLFoot},     {kHip, kRKnee},      {kRKnee, kRAnkle},
      {kRAnkle, kRFoot},
  };
  return bones;
}

/// One panel per pose, frontal view of the canonical frame (y right, z up).
/// Every pose is canonicalized and scale-normalized before drawing.
inline void save_skeleton_strip_ppm(const std::string& path,
                                    const std::vector<Skeleton>& poses,
                                    int panel = 120) {
  if (poses.empty()) throw EmptySequence("no poses to draw");
  const int n = static_cast<int>(poses.size());
  Raster img(panel * n, panel);
  const double half_extent = 60.0;  // cm shown around the hip per panel
  for (int i = 0; i < n; ++i) {
    const Skeleton s = normalize_scale(canonicalize(poses[static_cast<std::size_t>(i)]));
    auto to_px = [&](const Eigen::Vector3d& p, int& x, int& y) {
      x = i * panel +
          static_cast<int>((p.y() + half_extent) / (2 * half_extent) * panel);
      y = panel - 1 -
          static_cast<int>((p.z() + half_extent) / (2 * half_extent) * panel);
    };
    for (const auto& [a, b] : skeleton_bones()) {
      int x0, y0, x1, y1;
      to_px(s[a], x0, y0);
      to_px(s[b], x1, y1);
      img.line(x0, y0, x1, y1, 40, 40, 40);
    }
    for (int j = 0; j < kJointCount; ++j) {
      int x, y;
      to_px(s[j], x, y);
      img.disk(x, y, 1, 200, 60, 60);
    }
    // panel separator
    if (i > 0)
      img.line(i * panel, 0, i * panel, panel - 1, 220, 220, 220);
  }
  img.save_ppm(path);
}

// -------------------------------------------------------------- report index

/// Collects artifacts written into one directory and records them in
/// `index.tsv` (sorted by name). An empty report produces an index with
/// only the header row.
class ReportWriter {
 public:
  explicit ReportWriter(std::string dir) : dir_(std::move(dir)) {}

  std::string path_for(const std::string& filename) const {
    return dir_ + "/" + filename;
  }

  void add_table(const std::string& name, const std::string& filename,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    save_table(path_for(filename), header, rows);
    entries_.push_back({name, filename, "table"});
  }

  void add_scatter(const std::string& name, const std::string& filename,
                   const Eigen::MatrixXd& points,
                   const std::vector<int>& labels) {
    save_scatter_ppm(path_for(filename), points, labels);
    entries_.push_back({name, filename, "plot"});
  }

  void add_skeleton_strip(const std::string& name, const std::string& filename,
                          const std::vector<Skeleton>& poses) {
    save_skeleton_strip_ppm(path_for(filename), poses);
    entries_.push_back({name, filename, "plot"});
  }

  void add_entry(const std::string& name, const std::string& filename,
                 const std::string& kind) {
    entries_.push_back({name, filename, kind});
  }

  void finish() const {
    std::vector<Entry> sorted = entries_;
    std::sort(sorted.begin(), sorted.end(),
              [](const Entry& a, const Entry& b) { return a.name < b.name; });
    std::ofstream os(path_for("index.tsv"));
    if (!os) throw IoError("cannot open for writing: " + path_for("index.tsv"));
    os << "name\tfile\tkind\n";
    for (const Entry& e : sorted)
      os << e.name << '\t' << e.file << '\t' << e.kind << '\n';
    if (!os) throw IoError("write failed: " + path_for("index.tsv"));
  }

 private:
  struct Entry {
    std::string name, file, kind;
  };
  std::string dir_;
  std::vector<Entry> entries_;
};

}  // namespace egosync
