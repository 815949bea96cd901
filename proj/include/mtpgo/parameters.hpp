#pragma once

// Named, ordered collections of dense parameter matrices, plus binary
// checkpoint serialization. Flatten/unflatten and save/load are bit-exact
// round trips (values are copied, never transformed).

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/errors.hpp"

namespace mtpgo {

template <class S = double>
class ParameterSet {
 public:
  // Registers a zero-initialised matrix under a unique name and returns a
  // reference that stays valid for the life of the set.
  Mat<S>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (values_.count(name) != 0)
      throw std::logic_error("parameter '" + name + "' registered twice");
    names_.push_back(name);
    auto [it, inserted] = values_.emplace(name, Mat<S>::Zero(rows, cols));
    return it->second;
  }

  bool has(const std::string& name) const { return values_.count(name) != 0; }

  Mat<S>& at(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::logic_error("unknown parameter '" + name + "'");
    return it->second;
  }

  const Mat<S>& at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::logic_error("unknown parameter '" + name + "'");
    return it->second;
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const { return names_.size(); }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& name : names_) n += at(name).size();
    return n;
  }

  // Entries concatenated in registration order, each in row-major order.
  Vec<S> flatten() const {
    Vec<S> out(total_size());
    Eigen::Index k = 0;
    for (const auto& name : names_) {
      const Mat<S>& m = at(name);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(k++) = m(i, j);
    }
    return out;
  }

  void unflatten(const Vec<S>& flat) {
    if (flat.size() != total_size())
      throw std::logic_error("unflatten size mismatch");
    Eigen::Index k = 0;
    for (const auto& name : names_) {
      Mat<S>& m = at(name);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat(k++);
    }
  }

  bool same_layout(const ParameterSet& other) const {
    if (names_ != other.names_) return false;
    for (const auto& name : names_) {
      const Mat<S>& a = at(name);
      const Mat<S>& b = other.at(name);
      if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Mat<S>> values_;
};

// Gradients share the parameter set's layout, so they reuse its container.
template <class S = double>
using GradientRecord = ParameterSet<S>;

// --- initialisation helpers -------------------------------------------------

// Glorot-style normal fill: std = sqrt(2 / (fan_in + fan_out)) with fan
// counts taken from the matrix dimensions.
template <class S>
void init_glorot(Mat<S>& m, std::mt19937_64& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(m.rows() + m.cols()));
  std::normal_distribution<double> dist(0.0, std_dev);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(dist(rng));
}

template <class S>
void init_normal(Mat<S>& m, std::mt19937_64& rng, double std_dev) {
  std::normal_distribution<double> dist(0.0, std_dev);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(dist(rng));
}

// --- checkpoint serialization ------------------------------------------------

// Binary layout (little-endian):
//   magic "MTPGO" | u8 version | u8 scalar size | u64 entry count |
//   repeated { u32 name length | name bytes | u64 rows | u64 cols |
//              rows*cols scalars, row-major }
inline constexpr char kCheckpointMagic[5] = {'M', 'T', 'P', 'G', 'O'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

template <class S>
void save_parameters(const ParameterSet<S>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  auto put = [&out](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint8_t version = kCheckpointVersion;
  const std::uint8_t scalar_size = sizeof(S);
  put(&version, 1);
  put(&scalar_size, 1);
  const std::uint64_t count = params.count();
  put(&count, sizeof(count));
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (const auto& name : params.names()) {
    const Mat<S>& m = params.at(name);
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    put(&name_len, sizeof(name_len));
    put(name.data(), name.size());
    const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
    put(&rows, sizeof(rows));
    put(&cols, sizeof(cols));
    RowMat rm = m;
    put(rm.data(), sizeof(S) * static_cast<std::size_t>(rm.size()));
  }
  if (!out) throw DataError("write failure while saving '" + path + "'");
}

template <class S = double>
ParameterSet<S> load_parameters(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  auto get = [&in, &path](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw DataError("truncated checkpoint '" + path + "'");
  };
  char magic[5];
  get(magic, sizeof(magic));
  if (!std::equal(magic, magic + 5, kCheckpointMagic))
    throw DataError("'" + path + "' is not a parameter checkpoint");
  std::uint8_t version = 0, scalar_size = 0;
  get(&version, 1);
  get(&scalar_size, 1);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " in '" + path + "'");
  if (scalar_size != sizeof(S))
    throw DataError("checkpoint '" + path + "' stores " + std::to_string(scalar_size * 8) +
                    "-bit scalars; this build uses " + std::to_string(sizeof(S) * 8) + "-bit");
  std::uint64_t count = 0;
  get(&count, sizeof(count));
  ParameterSet<S> params;
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (std::uint64_t e = 0; e < count; ++e) {
    std::uint32_t name_len = 0;
    get(&name_len, sizeof(name_len));
    if (name_len > 4096) throw DataError("implausible name length in '" + path + "'");
    std::string name(name_len, '\0');
    get(name.data(), name_len);
    std::uint64_t rows = 0, cols = 0;
    get(&rows, sizeof(rows));
    get(&cols, sizeof(cols));
    if (rows > (1u << 24) || cols > (1u << 24))
      throw DataError("implausible entry shape in '" + path + "'");
    RowMat rm(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    get(rm.data(), sizeof(S) * static_cast<std::size_t>(rm.size()));
    params.add(name, rm.rows(), rm.cols()) = rm;
  }
  return params;
}

}  // namespace mtpgo
