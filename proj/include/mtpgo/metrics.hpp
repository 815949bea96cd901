#pragma once

// Forecast quality metrics: displacement errors against the most likely
// mixture component, miss rate at a fixed final-error threshold, path-aligned
// displacement, mixture log-likelihood scores, and mean +/- 95% confidence
// interval aggregation across scenes.

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mtpgo/errors.hpp"
#include "mtpgo/mixture.hpp"

namespace mtpgo {

inline constexpr double kMissThreshold = 2.0;  // meters on the final step

// --- per-trajectory primitives ---------------------------------------------------

// Mean Euclidean error over the horizon, index-aligned.
inline double ade(const Mat<double>& pred, const Mat<double>& truth) {
  if (pred.rows() != truth.rows() || pred.rows() == 0)
    throw ConfigError("displacement metrics need equal, nonempty horizons");
  double total = 0.0;
  for (Eigen::Index k = 0; k < pred.rows(); ++k)
    total += (pred.row(k) - truth.row(k)).norm();
  return total / static_cast<double>(pred.rows());
}

// Euclidean error at the final step.
inline double fde(const Mat<double>& pred, const Mat<double>& truth) {
  if (pred.rows() != truth.rows() || pred.rows() == 0)
    throw ConfigError("displacement metrics need equal, nonempty horizons");
  return (pred.row(pred.rows() - 1) - truth.row(truth.rows() - 1)).norm();
}

// Fraction of final errors strictly above the threshold.
inline double miss_rate(const std::vector<double>& final_errors,
                        double threshold = kMissThreshold) {
  if (final_errors.empty()) throw ConfigError("miss rate needs at least one error");
  int misses = 0;
  for (const double e : final_errors)
    if (e > threshold) ++misses;
  return static_cast<double>(misses) / static_cast<double>(final_errors.size());
}

// Mean over predicted points of the distance to the nearest truth point;
// ignores timing along the path.
inline double apde(const Mat<double>& pred, const Mat<double>& truth) {
  if (pred.rows() == 0 || truth.rows() == 0)
    throw ConfigError("path displacement needs nonempty trajectories");
  double total = 0.0;
  for (Eigen::Index k = 0; k < pred.rows(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < truth.rows(); ++i)
      best = std::min(best, (pred.row(k) - truth.row(i)).norm());
    total += best;
  }
  return total / static_cast<double>(pred.rows());
}

// Mixture NLL averaged over the horizon.
inline double anll(const GmmForecast& forecast, const Mat<double>& truth) {
  forecast.validate();
  if (truth.rows() != forecast.horizon())
    throw ConfigError("likelihood metrics need matching horizons");
  return gmm_nll(forecast, truth) / static_cast<double>(forecast.horizon());
}

// Mixture NLL of the final step alone.
inline double fnll(const GmmForecast& forecast, const Mat<double>& truth) {
  forecast.validate();
  if (truth.rows() != forecast.horizon())
    throw ConfigError("likelihood metrics need matching horizons");
  const int last = forecast.horizon() - 1;
  return gmm_step_nll(forecast, truth.row(last), last);
}

// --- confidence intervals ----------------------------------------------------------

// Two-sided 95% t-quantiles by degrees of freedom (two-decimal table);
// beyond 30 samples the normal quantile is used.
inline double t_quantile_95(int dof) {
  static constexpr double kTable[] = {
      12.71, 4.30, 3.18, 2.78, 2.57, 2.45, 2.36, 2.31, 2.26, 2.23,
      2.20,  2.18, 2.16, 2.14, 2.13, 2.12, 2.11, 2.10, 2.09, 2.09,
      2.08,  2.07, 2.07, 2.06, 2.06, 2.06, 2.05, 2.05, 2.05};
  if (dof < 1) throw ConfigError("t quantile needs at least one degree of freedom");
  if (dof <= 29) return kTable[dof - 1];
  return 1.96;
}

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
};

// Sample mean with a 95% confidence half-width t * S / sqrt(n).
inline MeanCi mean_ci(const std::vector<double>& values) {
  const int n = static_cast<int>(values.size());
  if (n < 2) throw ConfigError("confidence interval needs at least two values");
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  const double stddev = std::sqrt(ss / (n - 1));
  return {mean, t_quantile_95(n - 1) * stddev / std::sqrt(static_cast<double>(n))};
}

// --- per-agent evaluation ----------------------------------------------------------

struct AgentEvaluation {
  double ade = 0.0;
  double fde = 0.0;
  double apde = 0.0;
  double anll = 0.0;
  double fnll = 0.0;
  bool miss = false;
};

// Scores one agent's forecast: distance metrics use the most likely
// component, likelihood metrics the whole mixture.
inline AgentEvaluation evaluate_agent(const GmmForecast& forecast, const Mat<double>& truth) {
  forecast.validate();
  const Mat<double>& pred = forecast.mean[most_likely_component(forecast)];
  AgentEvaluation eval;
  eval.ade = ade(pred, truth);
  eval.fde = fde(pred, truth);
  eval.apde = apde(pred, truth);
  eval.anll = anll(forecast, truth);
  eval.fnll = fnll(forecast, truth);
  eval.miss = eval.fde > kMissThreshold;
  return eval;
}

// --- scene aggregation ---------------------------------------------------------------

struct MetricSummary {
  std::vector<double> per_scene;
  double mean = 0.0;
  double half_width = 0.0;
};

struct MetricsReport {
  int scenes = 0;
  MetricSummary ade, fde, mr, apde, anll, fnll;
};

// Collects per-scene agent evaluations; each scene contributes the mean over
// its agents (and for the miss rate, the fraction of missing agents).
class MetricsAccumulator {
 public:
  void add_scene(const std::vector<AgentEvaluation>& agents) {
    if (agents.empty()) throw ConfigError("a scene must contribute at least one agent");
    double a = 0, f = 0, p = 0, an = 0, fn = 0, miss = 0;
    for (const auto& e : agents) {
      a += e.ade;
      f += e.fde;
      p += e.apde;
      an += e.anll;
      fn += e.fnll;
      miss += e.miss ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(agents.size());
    report_.ade.per_scene.push_back(a / n);
    report_.fde.per_scene.push_back(f / n);
    report_.apde.per_scene.push_back(p / n);
    report_.anll.per_scene.push_back(an / n);
    report_.fnll.per_scene.push_back(fn / n);
    report_.mr.per_scene.push_back(miss / n);
    ++report_.scenes;
  }

  int scenes() const { return report_.scenes; }

  MetricsReport report() const {
    if (report_.scenes < 2)
      throw ConfigError("metric aggregation needs at least two scenes");
    MetricsReport out = report_;
    for (MetricSummary* s : {&out.ade, &out.fde, &out.mr, &out.apde, &out.anll, &out.fnll}) {
      const MeanCi ci = mean_ci(s->per_scene);
      s->mean = ci.mean;
      s->half_width = ci.half_width;
    }
    return out;
  }

 private:
  MetricsReport report_;
};

// --- rendering -------------------------------------------------------------------------

// Structured-text report: one JSON object with mean and half-width per metric.
inline std::string metrics_to_json(const MetricsReport& report) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "{\n  \"scenes\": " << report.scenes;
  const std::pair<const char*, const MetricSummary*> items[] = {
      {"ade", &report.ade},   {"fde", &report.fde},   {"miss_rate", &report.mr},
      {"apde", &report.apde}, {"anll", &report.anll}, {"fnll", &report.fnll}};
  for (const auto& [name, summary] : items)
    os << ",\n  \"" << name << "\": {\"mean\": " << summary->mean
       << ", \"ci95\": " << summary->half_width << "}";
  os << "\n}\n";
  return os.str();
}

// Flat table: one tab-separated row per scene for plotting.
inline std::string metrics_to_table(const MetricsReport& report) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "scene\tade\tfde\tmiss_rate\tapde\tanll\tfnll\n";
  for (int i = 0; i < report.scenes; ++i)
    os << i << '\t' << report.ade.per_scene[i] << '\t' << report.fde.per_scene[i] << '\t'
       << report.mr.per_scene[i] << '\t' << report.apde.per_scene[i] << '\t'
       << report.anll.per_scene[i] << '\t' << report.fnll.per_scene[i] << '\n';
  return os.str();
}

}  // namespace mtpgo
