#pragma once

// Deterministic synthetic traffic: a three-lane highway with lane changes and
// car-following deceleration, a roundabout with entries, exits, and yielding,
// and a fork that splits one stream over two branches. Positions come from
// smooth simulated paths; stored velocities and accelerations are central
// finite differences of the stored positions, so the table is exactly
// self-consistent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtpgo/data.hpp"

namespace mtpgo {

enum class SyntheticKind { kHighway, kRoundabout, kFork };

inline const char* synthetic_kind_name(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::kHighway: return "highway";
    case SyntheticKind::kRoundabout: return "roundabout";
    case SyntheticKind::kFork: return "fork";
  }
  return "?";
}

inline SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "highway") return SyntheticKind::kHighway;
  if (name == "roundabout") return SyntheticKind::kRoundabout;
  if (name == "fork") return SyntheticKind::kFork;
  throw ConfigError("unknown scenario kind: '" + name + "' (highway, roundabout, fork)");
}

namespace detail {

// Piecewise line/arc path parametrized by arc length, built segment by
// segment with continuous position and heading.
class PathBuilder {
 public:
  PathBuilder(double x, double y, double heading) : x_(x), y_(y), heading_(heading) {}

  PathBuilder& straight(double length) {
    segments_.push_back({false, x_, y_, heading_, length, 0, 0, 0});
    x_ += length * std::cos(heading_);
    y_ += length * std::sin(heading_);
    total_ += length;
    return *this;
  }

  // Positive sweep turns left; the arc is tangent to the current heading,
  // with its center 90 degrees to the turning side.
  PathBuilder& arc(double radius, double sweep) {
    const double side = sweep >= 0 ? 1.0 : -1.0;
    const double ox = x_ - side * radius * std::sin(heading_);
    const double oy = y_ + side * radius * std::cos(heading_);
    const double a0 = std::atan2(y_ - oy, x_ - ox);
    segments_.push_back({true, 0, 0, 0, radius * std::abs(sweep), ox, oy, radius, a0, sweep});
    const double a1 = a0 + sweep;
    x_ = ox + radius * std::cos(a1);
    y_ = oy + radius * std::sin(a1);
    heading_ += sweep;
    total_ += radius * std::abs(sweep);
    return *this;
  }

  double total() const { return total_; }

  Eigen::Vector2d at(double s) const {
    s = std::clamp(s, 0.0, total_);
    for (const auto& seg : segments_) {
      if (s > seg.length + 1e-12) {
        s -= seg.length;
        continue;
      }
      if (!seg.is_arc)
        return {seg.x + s * std::cos(seg.heading), seg.y + s * std::sin(seg.heading)};
      const double a = seg.a0 + (seg.sweep >= 0 ? 1.0 : -1.0) * s / seg.radius;
      return {seg.cx + seg.radius * std::cos(a), seg.cy + seg.radius * std::sin(a)};
    }
    // s == total: end of the last segment.
    const auto& seg = segments_.back();
    if (!seg.is_arc)
      return {seg.x + seg.length * std::cos(seg.heading),
              seg.y + seg.length * std::sin(seg.heading)};
    const double a = seg.a0 + seg.sweep;
    return {seg.cx + seg.radius * std::cos(a), seg.cy + seg.radius * std::sin(a)};
  }

 private:
  struct Segment {
    bool is_arc;
    double x, y, heading, length;  // line fields (length also used by arcs)
    double cx, cy, radius, a0, sweep = 0;
  };
  std::vector<Segment> segments_;
  double x_, y_, heading_;
  double total_ = 0;
};

// Piecewise-linear speed profile; integrates to arc length by trapezoids.
struct SpeedProfile {
  std::vector<std::pair<double, double>> nodes;  // (time, speed), times increasing

  double speed_at(double t) const {
    if (t <= nodes.front().first) return nodes.front().second;
    for (std::size_t i = 1; i < nodes.size(); ++i)
      if (t <= nodes[i].first) {
        const auto [t0, v0] = nodes[i - 1];
        const auto [t1, v1] = nodes[i];
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
      }
    return nodes.back().second;
  }
};

// Emits one agent's rows by sampling a path under a speed profile, then
// replaces v/a with central differences of the sampled positions and psi
// with the velocity heading.
inline void emit_agent(TrajectoryTable& table, AgentId id, AgentCategory cat,
                       std::int64_t frame0, int frames, double rate,
                       const std::function<Eigen::Vector2d(double)>& position) {
  const double dt = 1.0 / rate;
  std::vector<TableRow> rows(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    const Eigen::Vector2d p = position(f * dt);
    rows[static_cast<std::size_t>(f)].frame = frame0 + f;
    rows[static_cast<std::size_t>(f)].agent_id = id;
    rows[static_cast<std::size_t>(f)].x = p.x();
    rows[static_cast<std::size_t>(f)].y = p.y();
    rows[static_cast<std::size_t>(f)].category = cat;
  }
  auto central = [&](int f, double TableRow::*field) {
    const int lo = std::max(0, f - 1), hi = std::min(frames - 1, f + 1);
    return (rows[static_cast<std::size_t>(hi)].*field - rows[static_cast<std::size_t>(lo)].*field) /
           ((hi - lo) * dt);
  };
  for (int f = 0; f < frames; ++f) {
    rows[static_cast<std::size_t>(f)].vx = central(f, &TableRow::x);
    rows[static_cast<std::size_t>(f)].vy = central(f, &TableRow::y);
  }
  for (int f = 0; f < frames; ++f) {
    rows[static_cast<std::size_t>(f)].ax = central(f, &TableRow::vx);
    rows[static_cast<std::size_t>(f)].ay = central(f, &TableRow::vy);
  }
  double heading = 0.0;
  for (int f = 0; f < frames; ++f) {
    auto& r = rows[static_cast<std::size_t>(f)];
    if (std::hypot(r.vx, r.vy) > 1e-6) heading = std::atan2(r.vy, r.vx);
    r.psi = heading;
  }
  table.rows.insert(table.rows.end(), rows.begin(), rows.end());
}

inline AgentCategory draw_vehicle_category(std::mt19937_64& rng) {
  const std::uint64_t r = rng() % 10;
  if (r < 7) return AgentCategory::kCar;
  if (r < 9) return AgentCategory::kTruck;
  return AgentCategory::kBus;
}

}  // namespace detail

inline constexpr int kSyntheticRate = 25;           // Hz
inline constexpr int kSyntheticSceneFrames = 275;   // 11 s per scene

// One fork branch centerline as a dense polyline (0.05 m spacing), for
// checking that trajectories and forecast modes lie on a branch.
inline Mat<double> fork_centerline(bool left) {
  detail::PathBuilder path(-40.0, 0.0, 0.0);
  path.straight(40.0).arc(25.0, left ? 0.5 : -0.5).straight(60.0);
  const int samples = static_cast<int>(path.total() / 0.05) + 1;
  Mat<double> line(samples, 2);
  for (int i = 0; i < samples; ++i) {
    const Eigen::Vector2d p = path.at(i * 0.05);
    line.row(i) << p.x(), p.y();
  }
  return line;
}

// Deterministic synthetic table for the requested scenario kind. Scenes are
// laid out back to back on a dense 25 Hz frame grid with disjoint agent ids.
inline TrajectoryTable generate_synthetic(SyntheticKind kind, int n_scenes, std::uint64_t seed) {
  if (n_scenes < 1) throw ConfigError("need at least one synthetic scene");
  TrajectoryTable table;
  table.geometry.rate_hz = kSyntheticRate;
  table.geometry.kind = kind == SyntheticKind::kHighway ? SceneKind::kHighway
                                                        : SceneKind::kJunction;
  table.geometry.origin_x = 0.0;
  table.geometry.origin_y = 0.0;
  table.geometry.lane_left = 0.0;
  table.geometry.lane_width = 4.0;
  table.geometry.lane_count = 3;

  std::mt19937_64 rng(seed);
  const double rate = kSyntheticRate;
  const int frames = kSyntheticSceneFrames;
  const double dt = 1.0 / rate;

  for (int scene = 0; scene < n_scenes; ++scene) {
    const std::int64_t frame0 = static_cast<std::int64_t>(scene) * frames;

    if (kind == SyntheticKind::kHighway) {
      std::uniform_real_distribution<double> speed_dist(20.0, 28.0);
      std::uniform_real_distribution<double> jitter(-5.0, 5.0);
      std::uniform_real_distribution<double> change_time(2.0, 5.0);
      const int n = 3 + static_cast<int>(rng() % 3);
      std::vector<int> lane(static_cast<std::size_t>(n));
      std::vector<double> x0(static_cast<std::size_t>(n)), v0(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        lane[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 3);
        x0[static_cast<std::size_t>(i)] = -35.0 * i + jitter(rng);
        v0[static_cast<std::size_t>(i)] = speed_dist(rng);
      }
      const int changer = n >= 2 ? 1 : -1;           // second agent changes lanes
      const double tc = change_time(rng);
      const int change_dir =
          lane[static_cast<std::size_t>(std::max(changer, 0))] == 2 ? -1 : 1;

      // Forward simulation with car-following: brake toward the leader's
      // speed when the same-lane gap closes below 15 m.
      std::vector<std::vector<Eigen::Vector2d>> pos(static_cast<std::size_t>(n));
      std::vector<double> x = x0, v = v0;
      std::vector<double> lane_now(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        lane_now[static_cast<std::size_t>(i)] = lane[static_cast<std::size_t>(i)];
      for (int f = 0; f < frames; ++f) {
        const double t = f * dt;
        for (int i = 0; i < n; ++i) {
          double target_lane = lane[static_cast<std::size_t>(i)];
          if (i == changer && t >= tc) {
            const double u = std::min(1.0, (t - tc) / 2.0);
            target_lane += change_dir * (u * u * (3 - 2 * u));  // smoothstep
          }
          lane_now[static_cast<std::size_t>(i)] = target_lane;
          const double y = 2.0 + 4.0 * target_lane;
          pos[static_cast<std::size_t>(i)].push_back({x[static_cast<std::size_t>(i)], y});
        }
        for (int i = 0; i < n; ++i) {
          // Nearest leader in (roughly) the same lane.
          double gap = 1e9, lead_speed = 0;
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (std::abs(lane_now[static_cast<std::size_t>(j)] -
                         lane_now[static_cast<std::size_t>(i)]) > 0.5)
              continue;
            const double ahead = x[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(i)];
            if (ahead > 0 && ahead < gap) {
              gap = ahead;
              lead_speed = v[static_cast<std::size_t>(j)];
            }
          }
          double& vi = v[static_cast<std::size_t>(i)];
          if (gap < 15.0 && vi > lead_speed)
            vi = std::max(lead_speed, vi - 4.0 * dt);  // brake at 4 m/s^2
          else if (vi < v0[static_cast<std::size_t>(i)])
            vi = std::min(v0[static_cast<std::size_t>(i)], vi + 1.5 * dt);
          x[static_cast<std::size_t>(i)] += vi * dt;
        }
      }
      for (int i = 0; i < n; ++i) {
        const auto& track = pos[static_cast<std::size_t>(i)];
        detail::emit_agent(table, scene * 100 + i, detail::draw_vehicle_category(rng), frame0,
                           frames, rate,
                           [&track, dt](double t) {
                             const int f = std::min(static_cast<int>(std::lround(t / dt)),
                                                    static_cast<int>(track.size()) - 1);
                             return track[static_cast<std::size_t>(f)];
                           });
      }
    } else if (kind == SyntheticKind::kRoundabout) {
      std::uniform_real_distribution<double> sweep_dist(1.8, 4.2);
      const double R = 15.0;
      const int n_entries = 4;
      const int entry = static_cast<int>(rng() % n_entries);
      const double entry_angle = entry * (2.0 * M_PI / n_entries);
      auto circulating_path = [&](double start_angle, double approach, double sweep) {
        // Tangential approach, counter-clockwise arc, tangential exit.
        const double ex = R * std::cos(start_angle), ey = R * std::sin(start_angle);
        const double heading = start_angle + M_PI / 2.0;
        detail::PathBuilder p(ex - approach * std::cos(heading),
                              ey - approach * std::sin(heading), heading);
        p.straight(approach).arc(R, sweep).straight(30.0);
        return p;
      };
      auto integrate = [](const detail::SpeedProfile& prof, double t) {
        // Arc length: trapezoids over the profile's nodes, constant tail.
        double s = 0.0, prev_t = 0.0;
        for (const auto& node : prof.nodes) {
          const double tt = std::min(node.first, t);
          if (tt > prev_t) {
            s += 0.5 * (prof.speed_at(prev_t) + prof.speed_at(tt)) * (tt - prev_t);
            prev_t = tt;
          }
          if (node.first >= t) break;
        }
        if (t > prev_t) s += prof.speed_at(t) * (t - prev_t);
        return s;
      };
      // Leader: constant speed through the roundabout.
      const auto lead_path = circulating_path(entry_angle, 25.0, sweep_dist(rng));
      // Follower: same entry, 15 m behind, slows to a crawl mid-approach
      // while the leader clears the entry, then proceeds.
      const auto foll_path = circulating_path(entry_angle, 40.0, sweep_dist(rng));
      const detail::SpeedProfile foll_speed{
          {{0.0, 6.0}, {1.5, 6.0}, {2.5, 0.2}, {4.5, 0.2}, {6.0, 8.0}}};
      detail::emit_agent(table, scene * 100, detail::draw_vehicle_category(rng), frame0, frames,
                         rate, [&](double t) { return lead_path.at(8.0 * t); });
      detail::emit_agent(table, scene * 100 + 1, detail::draw_vehicle_category(rng), frame0,
                         frames, rate,
                         [&](double t) { return foll_path.at(integrate(foll_speed, t)); });
      if (rng() % 2 == 0) {
        // Occasional third agent from the opposite entry, exiting early.
        const auto other_path = circulating_path(entry_angle + M_PI, 25.0, 1.8);
        detail::emit_agent(table, scene * 100 + 2, detail::draw_vehicle_category(rng), frame0,
                           frames, rate, [&](double t) { return other_path.at(8.0 * t); });
      }
    } else {
      // Fork: one agent, straight approach, then one of two branches.
      const bool left = (rng() % 2) == 0;
      detail::PathBuilder path(-40.0, 0.0, 0.0);
      path.straight(40.0).arc(25.0, left ? 0.5 : -0.5).straight(60.0);
      detail::emit_agent(table, scene * 100, AgentCategory::kCar, frame0, frames, rate,
                         [&path](double t) { return path.at(10.0 * t); });
    }
  }
  // Deterministic global order: by frame, then agent id.
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const TableRow& a, const TableRow& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.agent_id < b.agent_id;
  });
  return table;
}

}  // namespace mtpgo
