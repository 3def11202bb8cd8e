#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "egosync/errors.hpp"

namespace egosync {

/// Dense row-major tensor of doubles. Small helper type shared by the
/// synthetic streams, flow fields, frame stacks and embedding files.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel()), 0.0);
  }
  Tensor(std::initializer_list<std::int64_t> s)
      : Tensor(std::vector<std::int64_t>(s)) {}

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  int ndim() const { return static_cast<int>(shape.size()); }

  double& at(std::int64_t i, std::int64_t j) {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }
  double at(std::int64_t i, std::int64_t j) const {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
    return data[static_cast<std::size_t>(
        ((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k,
            std::int64_t l) const {
    return data[static_cast<std::size_t>(
        ((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
  }

  /// Copy of sub-tensor [i, i+1) along the first axis, with that axis dropped.
  Tensor slice_front(std::int64_t i) const {
    Tensor out(std::vector<std::int64_t>(shape.begin() + 1, shape.end()));
    const std::int64_t stride = out.numel();
    std::memcpy(out.data.data(), data.data() + i * stride,
                static_cast<std::size_t>(stride) * sizeof(double));
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

enum class Dtype : std::uint8_t { Float32 = 1, Float64 = 2 };

namespace detail {

constexpr char kTensorMagic[8] = {'E', 'G', 'T', 'E', 'N', 'S', 'R', '\0'};
constexpr std::uint32_t kTensorVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v, const std::string& path) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated tensor file: " + path);
}

}  // namespace detail

/// Binary tensor file: 8-byte magic, u32 version, u8 dtype, u8 ndim,
/// ndim x i64 shape, then the payload in row-major order, little endian.
inline void save_tensor(const std::string& path, const Tensor& t,
                        Dtype dtype = Dtype::Float64) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(detail::kTensorMagic, 8);
  detail::write_pod(os, detail::kTensorVersion);
  detail::write_pod(os, static_cast<std::uint8_t>(dtype));
  detail::write_pod(os, static_cast<std::uint8_t>(t.ndim()));
  for (auto d : t.shape) detail::write_pod(os, d);
  if (dtype == Dtype::Float64) {
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  } else {
    std::vector<float> buf(t.data.begin(), t.data.end());
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed: " + path);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kTensorMagic, 8) != 0)
    throw IoError("not a tensor file: " + path);
  std::uint32_t version = 0;
  detail::read_pod(is, version, path);
  if (version != detail::kTensorVersion)
    throw IoError("unsupported tensor format version " +
                  std::to_string(version) + ": " + path);
  std::uint8_t dtype_raw = 0, ndim = 0;
  detail::read_pod(is, dtype_raw, path);
  detail::read_pod(is, ndim, path);
  if (dtype_raw != 1 && dtype_raw != 2)
    throw IoError("unknown dtype in tensor file: " + path);
  std::vector<std::int64_t> shape(ndim);
  for (auto& d : shape) {
    detail::read_pod(is, d, path);
    if (d < 0) throw IoError("negative dimension in tensor file: " + path);
  }
  Tensor t(shape);
  const std::size_t n = t.data.size();
  if (dtype_raw == 2) {
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    std::vector<float> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    for (std::size_t i = 0; i < n; ++i) t.data[i] = buf[i];
  }
  if (!is) throw IoError("truncated tensor file: " + path);
  return t;
}

}  // namespace egosync
