#pragma once

// Traffic scenes as sequences of complete ego-centric graphs. Each window
// holds a fixed agent roster (the agents present at the current step), dense
// per-step feature matrices, pairwise distance matrices, and per-step
// validity flags for agents that appear mid-history.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/errors.hpp"

namespace mtpgo {

using AgentId = std::int64_t;

enum class SceneKind : std::uint8_t { kHighway, kJunction };

enum class AgentCategory : std::uint8_t { kPedestrian = 0, kBicycle, kCar, kBus, kTruck };

inline constexpr int kCategoryCount = 5;
inline constexpr int kNodeFeatureDim = 7;   // x, y, v_x, v_y, a_x, a_y, psi
inline constexpr int kContextFeatureDim = 2;
inline constexpr int kFeatureDim = kNodeFeatureDim + kContextFeatureDim;

// Column layout of per-agent feature vectors.
enum FeatureIndex : int {
  kIdxX = 0,
  kIdxY = 1,
  kIdxVx = 2,
  kIdxVy = 3,
  kIdxAx = 4,
  kIdxAy = 5,
  kIdxPsi = 6,
  kIdxCtx0 = 7,  // highway: d_l, junction: r
  kIdxCtx1 = 8,  // highway: d_r, junction: theta
};

struct NodeFeatures {
  double x = 0, y = 0;
  double vx = 0, vy = 0;
  double ax = 0, ay = 0;
  double psi = 0;
};

// Scene-kind dependent pair: (d_l, d_r) lane offsets for highway scenes,
// (r, theta) polar coordinates for junction scenes.
struct ContextFeatures {
  double c0 = 0;
  double c1 = 0;
};

inline Eigen::RowVectorXd category_one_hot(AgentCategory c) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(kCategoryCount);
  v(static_cast<int>(c)) = 1.0;
  return v;
}

// Gaussian kernel weight for an edge of length `distance`; equals 1 at
// distance 0 and decays with scale sigma_e.
inline double kernel_weight(double distance, double sigma_e) {
  const double z = distance / sigma_e;
  return std::exp(-z * z);
}

// Normalised lateral lane position in [-1, 1] between the left lane divider
// (-1) and the right one (+1). `y` is relative to the scene origin y0.
inline double lane_offset(double y, double y0, double lane_left, double lane_width) {
  return 2.0 * (y + y0 - lane_left) / lane_width - 1.0;
}

// Polar coordinates of an agent relative to a reference point (x0, y0).
inline std::pair<double, double> polar_context(double x, double y, double x0, double y0) {
  const double dx = x0 - x;
  const double dy = y0 - y;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double theta = std::atan2(y0 - y, x - x0);
  return {r, theta};
}

inline Eigen::RowVectorXd assemble_feature_vector(const NodeFeatures& node,
                                                  const ContextFeatures& ctx) {
  Eigen::RowVectorXd f(kFeatureDim);
  f << node.x, node.y, node.vx, node.vy, node.ax, node.ay, node.psi, ctx.c0, ctx.c1;
  return f;
}

// Complete undirected graph over a set of agent positions.
struct EgoGraph {
  Mat<double> distances;                   // n x n, symmetric, zero diagonal
  std::vector<std::pair<int, int>> edges;  // i < j
};

// `positions` holds one agent per row, columns (x, y).
inline EgoGraph build_ego_graph(const Mat<double>& positions) {
  if (positions.rows() < 1 || positions.cols() != 2)
    throw std::logic_error("build_ego_graph expects an n x 2 position matrix with n >= 1");
  const Eigen::Index n = positions.rows();
  EgoGraph g;
  g.distances = Mat<double>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (positions.row(i) - positions.row(j)).norm();
      g.distances(i, j) = d;
      g.distances(j, i) = d;
      g.edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return g;
}

// One prediction window: t_h+1 observed steps (index 0 = oldest, index t_h =
// the current step t) over a fixed roster, plus t_f future truth steps for
// agents that have them.
struct SceneSequence {
  SceneKind kind = SceneKind::kHighway;
  double sample_time = 0.2;  // T_s, seconds
  int history_steps = 15;    // t_h; the window stores t_h + 1 observed steps
  int future_steps = 25;     // t_f

  std::vector<AgentId> agents;              // roster; row order of all matrices
  std::vector<AgentCategory> categories;    // per roster entry

  // Observed steps, each over the full roster (rows of invalid agents are zero).
  std::vector<Mat<double>> features;             // t_h+1 entries, n x d_f
  std::vector<Mat<double>> distances;            // t_h+1 entries, n x n
  std::vector<std::vector<std::uint8_t>> valid;  // t_h+1 entries, n flags

  // Future truth, t_f x n; only columns with has_future set are meaningful.
  Mat<double> future_x, future_y, future_vx, future_vy;
  std::vector<std::uint8_t> has_future;

  int agent_count() const { return static_cast<int>(agents.size()); }
  int observed_steps() const { return history_steps + 1; }

  std::vector<int> valid_indices(int step) const {
    std::vector<int> out;
    for (int v = 0; v < agent_count(); ++v)
      if (valid[static_cast<std::size_t>(step)][static_cast<std::size_t>(v)]) out.push_back(v);
    return out;
  }

  std::vector<int> loss_indices() const {
    std::vector<int> out;
    for (int v = 0; v < agent_count(); ++v)
      if (has_future[static_cast<std::size_t>(v)]) out.push_back(v);
    return out;
  }

  // Structural consistency; throws DataError with a description on failure.
  void validate() const {
    const int n = agent_count();
    const std::size_t steps = static_cast<std::size_t>(observed_steps());
    if (sample_time <= 0) throw DataError("scene has non-positive sample time");
    if (history_steps < 0 || future_steps < 0) throw DataError("scene has negative horizon");
    if (n < 1) throw DataError("scene has no agents");
    if (categories.size() != static_cast<std::size_t>(n)) throw DataError("scene category count mismatch");
    if (features.size() != steps || distances.size() != steps || valid.size() != steps)
      throw DataError("scene step count mismatch");
    for (std::size_t i = 0; i < steps; ++i) {
      if (features[i].rows() != n || features[i].cols() != kFeatureDim)
        throw DataError("scene feature matrix has wrong shape at step " + std::to_string(i));
      if (!features[i].allFinite()) throw DataError("non-finite scene feature at step " + std::to_string(i));
      if (distances[i].rows() != n || distances[i].cols() != n)
        throw DataError("scene distance matrix has wrong shape at step " + std::to_string(i));
      if (valid[i].size() != static_cast<std::size_t>(n)) throw DataError("scene validity size mismatch");
      for (int a = 0; a < n; ++a) {
        if (distances[i](a, a) != 0.0) throw DataError("nonzero self-distance at step " + std::to_string(i));
        for (int b = a + 1; b < n; ++b) {
          const double d = distances[i](a, b);
          if (!(d >= 0.0) || d != distances[i](b, a))
            throw DataError("asymmetric or negative distance at step " + std::to_string(i));
        }
      }
    }
    std::size_t current_valid = 0;
    for (std::uint8_t f : valid.back()) current_valid += f;
    if (current_valid != static_cast<std::size_t>(n))
      throw DataError("every roster agent must be valid at the current step");
    if (has_future.size() != static_cast<std::size_t>(n)) throw DataError("scene future mask size mismatch");
    if (future_steps > 0) {
      if (future_x.rows() != future_steps || future_x.cols() != n ||
          future_y.rows() != future_steps || future_y.cols() != n ||
          future_vx.rows() != future_steps || future_vx.cols() != n ||
          future_vy.rows() != future_steps || future_vy.cols() != n)
        throw DataError("scene future matrices have wrong shape");
      for (int v = 0; v < n; ++v) {
        if (!has_future[static_cast<std::size_t>(v)]) continue;
        if (!future_x.col(v).allFinite() || !future_y.col(v).allFinite() ||
            !future_vx.col(v).allFinite() || !future_vy.col(v).allFinite())
          throw DataError("non-finite future truth for agent column " + std::to_string(v));
      }
    }
  }
};

}  // namespace mtpgo
