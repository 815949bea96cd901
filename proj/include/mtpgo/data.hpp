#pragma once

// Trajectory tables: CSV ingestion with optional derived kinematics, geometry
// sidecars, downsampling, sliding-window scene extraction, and seeded
// train/val/test splitting. The canonical CSV header is
//   frame,agent_id,x,y,vx,vy,ax,ay,psi,category
// where the vx..psi block may be partially absent (derived by finite
// differences) and all units are SI.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtpgo/errors.hpp"
#include "mtpgo/scene.hpp"

namespace mtpgo {

struct SceneGeometry {
  SceneKind kind = SceneKind::kHighway;
  double rate_hz = 25.0;
  double origin_x = 0.0, origin_y = 0.0;  // junction reference point
  double lane_left = 0.0;                 // y of the left road edge (highway)
  double lane_width = 4.0;
  int lane_count = 3;

  void check() const {
    if (rate_hz <= 0) throw DataError("geometry: rate_hz must be positive");
    if (lane_width <= 0) throw DataError("geometry: lane_width must be positive");
    if (lane_count < 1) throw DataError("geometry: lane_count must be positive");
  }
};

struct TableRow {
  std::int64_t frame = 0;
  AgentId agent_id = 0;
  double x = 0, y = 0;
  double vx = 0, vy = 0;
  double ax = 0, ay = 0;
  double psi = 0;
  AgentCategory category = AgentCategory::kCar;
};

struct TrajectoryTable {
  std::vector<TableRow> rows;  // grouped by agent in file order, frames monotone
  SceneGeometry geometry;

  double sample_time() const { return 1.0 / geometry.rate_hz; }
};

// --- geometry sidecar ---------------------------------------------------------------

inline SceneGeometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open geometry file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("geometry file " + path + ": " + e.what());
  }
  SceneGeometry g;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "highway") g.kind = SceneKind::kHighway;
    else if (kind == "junction") g.kind = SceneKind::kJunction;
    else throw DataError("geometry kind must be 'highway' or 'junction'");
    g.rate_hz = j.at("rate_hz").get<double>();
    if (j.contains("origin")) {
      g.origin_x = j["origin"].at(0).get<double>();
      g.origin_y = j["origin"].at(1).get<double>();
    }
    if (j.contains("lane_left")) g.lane_left = j["lane_left"].get<double>();
    if (j.contains("lane_width")) g.lane_width = j["lane_width"].get<double>();
    if (j.contains("lane_count")) g.lane_count = j["lane_count"].get<int>();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("geometry file " + path + ": " + e.what());
  }
  g.check();
  return g;
}

inline void save_geometry(const SceneGeometry& g, const std::string& path) {
  nlohmann::json j;
  j["kind"] = g.kind == SceneKind::kHighway ? "highway" : "junction";
  j["rate_hz"] = g.rate_hz;
  j["origin"] = {g.origin_x, g.origin_y};
  j["lane_left"] = g.lane_left;
  j["lane_width"] = g.lane_width;
  j["lane_count"] = g.lane_count;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write geometry file: " + path);
  out << j.dump(2) << '\n';
}

// --- CSV ingestion --------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw DataError(where + ": trailing characters in number: '" + s + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": not an integer: '" + s + "'");
  }
  if (used != s.size()) throw DataError(where + ": trailing characters in integer: '" + s + "'");
  return v;
}

// Fills vx..psi columns that were absent from the header using centered
// finite differences of the stored trajectory (one-sided at the ends), with
// time deltas from the frame gaps.
inline void derive_kinematics(std::vector<TableRow>& rows, double rate_hz, bool have_v,
                              bool have_a, bool have_psi) {
  if (have_v && have_a && have_psi) return;
  std::map<AgentId, std::vector<std::size_t>> by_agent;
  for (std::size_t i = 0; i < rows.size(); ++i) by_agent[rows[i].agent_id].push_back(i);
  for (auto& [id, idx] : by_agent) {
    const int n = static_cast<int>(idx.size());
    auto dt = [&](int a, int b) {
      return static_cast<double>(rows[idx[b]].frame - rows[idx[a]].frame) / rate_hz;
    };
    auto diff = [&](int i, double TableRow::*field) {
      const int lo = std::max(0, i - 1), hi = std::min(n - 1, i + 1);
      if (lo == hi) return 0.0;
      return (rows[idx[hi]].*field - rows[idx[lo]].*field) / dt(lo, hi);
    };
    if (!have_v) {
      for (int i = 0; i < n; ++i) {
        rows[idx[i]].vx = diff(i, &TableRow::x);
        rows[idx[i]].vy = diff(i, &TableRow::y);
      }
    }
    if (!have_a) {
      for (int i = 0; i < n; ++i) {
        rows[idx[i]].ax = diff(i, &TableRow::vx);
        rows[idx[i]].ay = diff(i, &TableRow::vy);
      }
    }
    if (!have_psi) {
      double heading = 0.0;
      for (int i = 0; i < n; ++i) {
        const double speed = std::hypot(rows[idx[i]].vx, rows[idx[i]].vy);
        if (speed > 1e-6) heading = std::atan2(rows[idx[i]].vy, rows[idx[i]].vx);
        rows[idx[i]].psi = heading;
      }
    }
  }
}

}  // namespace detail

// Reads the canonical CSV format. Column blocks vx,vy / ax,ay / psi may be
// absent and are then derived by finite differences.
inline TrajectoryTable ingest_csv(const std::string& path, const SceneGeometry& geometry) {
  geometry.check();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file: " + path);
  TrajectoryTable table;
  table.geometry = geometry;

  std::string line;
  if (!std::getline(in, line)) return table;  // empty file: empty table
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = detail::split_csv_line(line);
  const std::vector<std::string> full = {"frame", "agent_id", "x",  "y",        "vx",
                                         "vy",    "ax",       "ay", "psi",      "category"};
  // Accepted headers: frame,agent_id,x,y then a prefix of vx,vy,ax,ay,psi,
  // then category.
  bool have_v = false, have_a = false, have_psi = false;
  {
    std::size_t h = 0;
    auto expect = [&](const std::string& name) {
      if (h >= header.size() || header[h] != name) return false;
      ++h;
      return true;
    };
    bool ok = expect("frame") && expect("agent_id") && expect("x") && expect("y");
    if (ok && h < header.size() && header[h] == "vx") have_v = expect("vx") && expect("vy");
    if (ok && have_v && h < header.size() && header[h] == "ax")
      have_a = expect("ax") && expect("ay");
    if (ok && have_a && h < header.size() && header[h] == "psi") have_psi = expect("psi");
    ok = ok && expect("category") && h == header.size();
    if (!ok)
      throw DataError(path + ":1: unrecognized header '" + line + "'; expected '" +
                      [&] {
                        std::string s;
                        for (const auto& c : full) s += (s.empty() ? "" : ",") + c;
                        return s;
                      }() +
                      "' with optional vx..psi block");
  }
  const std::size_t n_cols = 4 + (have_v ? 2 : 0) + (have_a ? 2 : 0) + (have_psi ? 1 : 0) + 1;

  std::map<AgentId, std::int64_t> last_frame;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != n_cols)
      throw DataError(where + ": expected " + std::to_string(n_cols) + " fields, got " +
                      std::to_string(fields.size()));
    TableRow row;
    std::size_t f = 0;
    row.frame = detail::parse_int(fields[f++], where);
    row.agent_id = detail::parse_int(fields[f++], where);
    row.x = detail::parse_double(fields[f++], where);
    row.y = detail::parse_double(fields[f++], where);
    if (have_v) {
      row.vx = detail::parse_double(fields[f++], where);
      row.vy = detail::parse_double(fields[f++], where);
    }
    if (have_a) {
      row.ax = detail::parse_double(fields[f++], where);
      row.ay = detail::parse_double(fields[f++], where);
    }
    if (have_psi) row.psi = detail::parse_double(fields[f++], where);
    const std::int64_t cat = detail::parse_int(fields[f++], where);
    if (cat < 0 || cat >= kCategoryCount)
      throw DataError(where + ": category must be in [0, " + std::to_string(kCategoryCount - 1) +
                      "], got " + std::to_string(cat));
    row.category = static_cast<AgentCategory>(cat);
    if (!std::isfinite(row.x) || !std::isfinite(row.y) || !std::isfinite(row.vx) ||
        !std::isfinite(row.vy) || !std::isfinite(row.ax) || !std::isfinite(row.ay) ||
        !std::isfinite(row.psi))
      throw DataError(where + ": non-finite value");

    const auto it = last_frame.find(row.agent_id);
    if (it != last_frame.end() && row.frame <= it->second)
      throw DataError(where + ": frames not strictly increasing for agent " +
                      std::to_string(row.agent_id) +
                      (row.frame == it->second ? " (duplicate frame)" : ""));
    last_frame[row.agent_id] = row.frame;
    table.rows.push_back(row);
  }
  detail::derive_kinematics(table.rows, geometry.rate_hz, have_v, have_a, have_psi);
  return table;
}

// Writes the canonical CSV with the full column set.
inline void write_csv(const TrajectoryTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trajectory file: " + path);
  out << "frame,agent_id,x,y,vx,vy,ax,ay,psi,category\n";
  out.precision(17);
  for (const auto& r : table.rows)
    out << r.frame << ',' << r.agent_id << ',' << r.x << ',' << r.y << ',' << r.vx << ','
        << r.vy << ',' << r.ax << ',' << r.ay << ',' << r.psi << ','
        << static_cast<int>(r.category) << '\n';
}

// --- downsampling ----------------------------------------------------------------------

// Keeps every factor-th frame (relative to the earliest frame), renumbers
// frames densely, and divides the rate so the sample time becomes
// factor / rate.
inline TrajectoryTable downsample(const TrajectoryTable& table, int factor) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  if (factor == 1) return table;
  TrajectoryTable out;
  out.geometry = table.geometry;
  out.geometry.rate_hz = table.geometry.rate_hz / factor;
  if (table.rows.empty()) return out;
  std::int64_t base = table.rows.front().frame;
  for (const auto& r : table.rows) base = std::min(base, r.frame);
  for (const auto& r : table.rows) {
    if ((r.frame - base) % factor != 0) continue;
    TableRow kept = r;
    kept.frame = (r.frame - base) / factor;
    out.rows.push_back(kept);
  }
  return out;
}

// --- sliding-window scene extraction ------------------------------------------------------

struct WindowConfig {
  int history_steps = 15;  // t_h; the window stores t_h + 1 observed steps
  int future_steps = 25;   // t_f
  int stride = 10;         // grid steps between windows (2 s at 5 Hz)
  enum class Center { kFirstAgent, kRandomAgent } center = Center::kRandomAgent;
  std::uint64_t seed = 0;  // drives random center choices

  void check() const {
    if (history_steps < 1 || future_steps < 1)
      throw ConfigError("window horizons must be positive");
    if (stride < 1) throw ConfigError("window stride must be positive");
  }
};

namespace detail {

// Context features for one agent in window-relative coordinates; `cx, cy` is
// the window origin in absolute coordinates.
inline ContextFeatures context_for(const SceneGeometry& g, double x_rel, double y_rel,
                                   double cx, double cy) {
  ContextFeatures ctx;
  if (g.kind == SceneKind::kHighway) {
    const double y_abs = y_rel + cy;
    int lane = static_cast<int>(std::floor((y_abs - g.lane_left) / g.lane_width));
    lane = std::clamp(lane, 0, g.lane_count - 1);
    ctx.c0 = lane_offset(y_rel, cy, g.lane_left + lane * g.lane_width, g.lane_width);
    ctx.c1 = lane_offset(y_rel, cy, g.lane_left, g.lane_count * g.lane_width);
  } else {
    const auto [r, theta] = polar_context(x_rel, y_rel, g.origin_x - cx, g.origin_y - cy);
    ctx.c0 = r;
    ctx.c1 = theta;
  }
  return ctx;
}

}  // namespace detail

// Cuts the table into prediction windows on the dense frame grid. Each
// window's roster is the agents present at its current step; positions are
// expressed relative to the chosen center agent's position at that step.
// Windows without a single fully observed future are dropped.
inline std::vector<SceneSequence> window_scenes(const TrajectoryTable& table,
                                                const WindowConfig& cfg) {
  cfg.check();
  table.geometry.check();
  std::vector<SceneSequence> scenes;
  if (table.rows.empty()) return scenes;

  // Dense frame grid.
  std::vector<std::int64_t> frames;
  for (const auto& r : table.rows) frames.push_back(r.frame);
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i] != frames[i - 1] + 1)
      throw DataError("frame grid has gaps (downsample and renumber first): missing frame " +
                      std::to_string(frames[i - 1] + 1));
  const std::int64_t base = frames.front();
  const int total = static_cast<int>(frames.size());

  // (agent, frame) lookup.
  std::map<std::pair<AgentId, std::int64_t>, const TableRow*> at;
  std::map<AgentId, AgentCategory> category;
  for (const auto& r : table.rows) {
    at[{r.agent_id, r.frame}] = &r;
    category[r.agent_id] = r.category;
  }

  std::mt19937_64 rng(cfg.seed);
  for (int p = cfg.history_steps; p + cfg.future_steps < total; p += cfg.stride) {
    const std::int64_t now = base + p;
    std::vector<AgentId> roster;
    for (const auto& [id, cat] : category)
      if (at.count({id, now})) roster.push_back(id);
    if (roster.empty()) continue;

    const int n = static_cast<int>(roster.size());
    int center_idx = 0;
    if (cfg.center == WindowConfig::Center::kRandomAgent)
      center_idx = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    const TableRow& center = *at.at({roster[static_cast<std::size_t>(center_idx)], now});
    const double cx = center.x, cy = center.y;

    SceneSequence scene;
    scene.kind = table.geometry.kind;
    scene.sample_time = table.sample_time();
    scene.history_steps = cfg.history_steps;
    scene.future_steps = cfg.future_steps;
    scene.agents = roster;
    for (const AgentId id : roster) scene.categories.push_back(category.at(id));

    for (int i = 0; i <= cfg.history_steps; ++i) {
      const std::int64_t frame = now - cfg.history_steps + i;
      Mat<double> feats = Mat<double>::Zero(n, kFeatureDim);
      Mat<double> dist = Mat<double>::Zero(n, n);
      std::vector<std::uint8_t> valid(static_cast<std::size_t>(n), 0);
      std::vector<int> present;
      for (int v = 0; v < n; ++v) {
        const auto it = at.find({roster[static_cast<std::size_t>(v)], frame});
        if (it == at.end()) continue;
        valid[static_cast<std::size_t>(v)] = 1;
        present.push_back(v);
        const TableRow& r = *it->second;
        NodeFeatures node{r.x - cx, r.y - cy, r.vx, r.vy, r.ax, r.ay, r.psi};
        const ContextFeatures ctx =
            detail::context_for(table.geometry, node.x, node.y, cx, cy);
        feats.row(v) = assemble_feature_vector(node, ctx);
      }
      for (std::size_t a = 0; a < present.size(); ++a)
        for (std::size_t b = a + 1; b < present.size(); ++b) {
          const int va = present[a], vb = present[b];
          const double d = (feats.row(va).head<2>() - feats.row(vb).head<2>()).norm();
          dist(va, vb) = d;
          dist(vb, va) = d;
        }
      scene.features.push_back(std::move(feats));
      scene.distances.push_back(std::move(dist));
      scene.valid.push_back(std::move(valid));
    }

    scene.future_x = Mat<double>::Zero(cfg.future_steps, n);
    scene.future_y = Mat<double>::Zero(cfg.future_steps, n);
    scene.future_vx = Mat<double>::Zero(cfg.future_steps, n);
    scene.future_vy = Mat<double>::Zero(cfg.future_steps, n);
    scene.has_future.assign(static_cast<std::size_t>(n), 1);
    for (int v = 0; v < n; ++v) {
      for (int k = 1; k <= cfg.future_steps; ++k) {
        const auto it = at.find({roster[static_cast<std::size_t>(v)], now + k});
        if (it == at.end()) {
          scene.has_future[static_cast<std::size_t>(v)] = 0;
          break;
        }
        const TableRow& r = *it->second;
        scene.future_x(k - 1, v) = r.x - cx;
        scene.future_y(k - 1, v) = r.y - cy;
        scene.future_vx(k - 1, v) = r.vx;
        scene.future_vy(k - 1, v) = r.vy;
      }
    }
    if (scene.loss_indices().empty()) continue;
    scene.validate();
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

// --- splitting --------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.8, val = 0.1, test = 0.1;

  void check() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
      throw ConfigError("split fractions must be non-negative and sum to one");
  }
};

struct SplitScenes {
  std::vector<SceneSequence> train, val, test;
};

// Seeded shuffle then partition by the given fractions.
inline SplitScenes split(std::vector<SceneSequence> scenes, const SplitSpec& spec,
                         std::uint64_t seed) {
  spec.check();
  std::mt19937_64 rng(seed);
  std::shuffle(scenes.begin(), scenes.end(), rng);
  const std::size_t n = scenes.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * n));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.val * n)));
  SplitScenes out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) out.train.push_back(std::move(scenes[i]));
    else if (i < n_train + n_val) out.val.push_back(std::move(scenes[i]));
    else out.test.push_back(std::move(scenes[i]));
  }
  return out;
}

}  // namespace mtpgo
