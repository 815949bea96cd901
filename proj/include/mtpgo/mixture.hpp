#pragma once

// Multimodal Gaussian-mixture forecasts and their training objectives: the
// mixture negative log-likelihood on position blocks, the evolving
// winner-takes-all loss over component subsets, and the epoch schedule that
// anneals from the latter to the former. Density code here is pure math:
// callers floor covariances before likelihood evaluation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/errors.hpp"

namespace mtpgo {

inline constexpr double kLog2Pi = 1.8378770664093456;

// --- plain forecast container -----------------------------------------------------

// One agent's forecast: weights constant over the horizon, per-component
// position means (t_f x 2) and row-encoded position covariances (t_f x 4).
struct GmmForecast {
  Eigen::VectorXd weights;
  std::vector<Mat<double>> mean;
  std::vector<Mat<double>> cov;

  int components() const { return static_cast<int>(weights.size()); }
  int horizon() const { return mean.empty() ? 0 : static_cast<int>(mean.front().rows()); }

  void validate() const {
    if (weights.size() == 0) throw ConfigError("forecast needs at least one component");
    if (mean.size() != static_cast<std::size_t>(weights.size()) || mean.size() != cov.size())
      throw ConfigError("forecast component counts disagree");
    for (std::size_t j = 0; j < mean.size(); ++j) {
      if (mean[j].rows() != horizon() || mean[j].cols() != 2)
        throw ConfigError("forecast means must be horizon x 2");
      if (cov[j].rows() != horizon() || cov[j].cols() != 4)
        throw ConfigError("forecast covariances must be horizon x 4");
    }
    if (weights.minCoeff() < 0.0) throw NumericError("mixture weights must be non-negative");
    if (std::abs(weights.sum() - 1.0) > 1e-9)
      throw NumericError("mixture weights must sum to one");
    for (const auto& c : cov)
      for (Eigen::Index k = 0; k < c.rows(); ++k) {
        const double det = c(k, 0) * c(k, 3) - c(k, 1) * c(k, 2);
        if (c(k, 0) < 0.0 || c(k, 3) < 0.0 || det < -1e-12)
          throw NumericError("forecast covariance not positive semi-definite");
      }
  }
};

// Stable softmax for converting one agent's logits into mixture weights.
inline Eigen::VectorXd softmax_vector(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

// Index of the largest weight, ties broken toward the lowest index.
inline int most_likely_component(const GmmForecast& forecast) {
  int best = 0;
  for (int j = 1; j < forecast.components(); ++j)
    if (forecast.weights(j) > forecast.weights(best)) best = j;
  return best;
}

namespace detail {

// Log-density of one bivariate Gaussian given the row-encoded covariance.
inline double log_gaussian2(const Eigen::RowVector2d& x, const Eigen::RowVector2d& mean,
                            const Eigen::RowVector4d& cov_row) {
  const double a = cov_row(0), b = cov_row(1), c = cov_row(2), d = cov_row(3);
  const double det = a * d - b * c;
  if (det <= 0.0 || a <= 0.0 || d <= 0.0)
    throw NumericError("covariance not positive definite in mixture likelihood");
  const double dx = x(0) - mean(0), dy = x(1) - mean(1);
  const double quad = (dx * dx * d - dx * dy * (b + c) + dy * dy * a) / det;
  return -kLog2Pi - 0.5 * std::log(det) - 0.5 * quad;
}

}  // namespace detail

// Negative log mixture likelihood of one truth state at horizon step k.
inline double gmm_step_nll(const GmmForecast& forecast, const Eigen::RowVector2d& truth, int k) {
  if (k < 0 || k >= forecast.horizon()) throw ConfigError("forecast step out of range");
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(forecast.components());
  for (int j = 0; j < forecast.components(); ++j) {
    const double w = forecast.weights(j);
    terms[j] = w > 0.0 ? std::log(w) + detail::log_gaussian2(truth, forecast.mean[j].row(k),
                                                             forecast.cov[j].row(k))
                       : -std::numeric_limits<double>::infinity();
    best = std::max(best, terms[j]);
  }
  double acc = 0.0;
  for (const double t : terms) acc += std::exp(t - best);
  return -(best + std::log(acc));
}

// Negative log-likelihood summed over the horizon.
inline double gmm_nll(const GmmForecast& forecast, const Mat<double>& truth) {
  forecast.validate();
  if (truth.rows() != forecast.horizon() || truth.cols() != 2)
    throw ConfigError("truth trajectory must match the forecast horizon");
  double total = 0.0;
  for (int k = 0; k < forecast.horizon(); ++k) total += gmm_step_nll(forecast, truth.row(k), k);
  return total;
}

// --- plain winner-takes-all loss ---------------------------------------------------

// Per-coordinate Huber error of one component track, summed over the horizon.
inline double component_huber_total(const Mat<double>& mean, const Mat<double>& truth,
                                    double delta) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < truth.rows(); ++k)
    for (Eigen::Index c = 0; c < 2; ++c) total += num::huber(mean(k, c) - truth(k, c), delta);
  return total;
}

// Indices of the K smallest totals, ties broken toward the lowest index.
inline std::vector<int> smallest_k_indices(const std::vector<double>& totals, int K) {
  std::vector<int> order(totals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return totals[a] < totals[b]; });
  order.resize(K);
  return order;
}

// Huber loss summed over the K component tracks closest to the truth.
inline double ewta_loss(const std::vector<Mat<double>>& means, const Mat<double>& truth, int K,
                        double delta = 1.0) {
  const int M = static_cast<int>(means.size());
  if (K < 1 || K > M) throw ConfigError("winner count must be between 1 and the component count");
  std::vector<double> totals(M);
  for (int j = 0; j < M; ++j) {
    if (means[j].rows() != truth.rows() || means[j].cols() != 2)
      throw ConfigError("component track must match the truth horizon");
    totals[j] = component_huber_total(means[j], truth, delta);
  }
  double loss = 0.0;
  for (const int j : smallest_k_indices(totals, K)) loss += totals[j];
  return loss;
}

// --- tape-side batch losses --------------------------------------------------------

// A batch forecast on the tape: n agents, M components, t_f steps. `cov`
// holds row-encoded position covariances, already floored by the caller if
// the forecast feeds a likelihood.
template <class S>
struct MixtureTrack {
  ad::Var<S> logits;                         // n x M
  std::vector<std::vector<ad::Var<S>>> pos;  // [M][t_f], each n x 2
  std::vector<std::vector<ad::Var<S>>> cov;  // [M][t_f], each n x 4

  int components() const { return static_cast<int>(pos.size()); }
  int horizon() const { return pos.empty() ? 0 : static_cast<int>(pos.front().size()); }

  void check(bool need_cov) const {
    if (pos.empty() || pos.front().empty()) throw ConfigError("empty mixture track");
    if (!logits.valid() || logits.cols() != components())
      throw ConfigError("mixture logits must be agents x components");
    for (const auto& track : pos)
      if (static_cast<int>(track.size()) != horizon())
        throw ConfigError("mixture component horizons disagree");
    if (need_cov && (cov.size() != pos.size() ||
                     static_cast<int>(cov.front().size()) != horizon()))
      throw ConfigError("mixture covariance tracks must mirror the means");
  }
};

namespace detail {

// Row-encoded bivariate Gaussian log-density for a batch: n x 1.
template <class S>
ad::Var<S> log_gaussian2_rows(ad::Var<S> pos, ad::Var<S> cov, ad::Var<S> truth) {
  ad::Tape<S>& tape = *pos.tape;
  const Eigen::Index n = pos.rows();
  const Mat<double> cov_value = cov.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double det = cov_value(i, 0) * cov_value(i, 3) - cov_value(i, 1) * cov_value(i, 2);
    if (det <= 0.0 || cov_value(i, 0) <= 0.0 || cov_value(i, 3) <= 0.0)
      throw NumericError("covariance not positive definite in mixture likelihood");
  }
  ad::Var<S> d = ad::sub(pos, truth);
  ad::Var<S> dx = ad::block(d, 0, 0, n, 1);
  ad::Var<S> dy = ad::block(d, 0, 1, n, 1);
  ad::Var<S> a = ad::block(cov, 0, 0, n, 1);
  ad::Var<S> b = ad::block(cov, 0, 1, n, 1);
  ad::Var<S> c = ad::block(cov, 0, 2, n, 1);
  ad::Var<S> e = ad::block(cov, 0, 3, n, 1);
  ad::Var<S> det = ad::sub(ad::mul(a, e), ad::mul(b, c));
  ad::Var<S> quad = ad::div(
      ad::add(ad::sub(ad::mul(ad::square(dx), e), ad::mul(ad::mul(dx, dy), ad::add(b, c))),
              ad::mul(ad::square(dy), a)),
      det);
  ad::Var<S> half = tape.constant(S(-0.5));
  return ad::add(ad::mul(ad::add(ad::log(det), quad), half),
                 tape.constant(static_cast<S>(-kLog2Pi)));
}

}  // namespace detail

// Batch mixture NLL summed over agents and horizon steps. `truth[k]` is the
// n x 2 state at step k.
template <class S>
ad::Var<S> gmm_nll(const MixtureTrack<S>& track, const std::vector<ad::Var<S>>& truth) {
  track.check(/*need_cov=*/true);
  if (static_cast<int>(truth.size()) != track.horizon())
    throw ConfigError("truth horizon must match the forecast horizon");
  ad::Tape<S>& tape = *track.logits.tape;
  ad::Var<S> log_pi = ad::sub(track.logits, ad::logsumexp_rows(track.logits));
  ad::Var<S> total = tape.constant(Mat<S>(Mat<S>::Zero(1, 1)));
  for (int k = 0; k < track.horizon(); ++k) {
    std::vector<ad::Var<S>> scores;
    scores.reserve(track.components());
    for (int j = 0; j < track.components(); ++j)
      scores.push_back(detail::log_gaussian2_rows(track.pos[j][k], track.cov[j][k], truth[k]));
    ad::Var<S> log_mix = ad::logsumexp_rows(ad::add(log_pi, ad::concat_cols<S>(scores)));
    total = ad::sub(total, ad::sum_all(log_mix));
  }
  return total;
}

// Batch winner-takes-all loss. Winners are selected per agent from the eager
// totals; gradients reach only the winning components' means. Weights and
// covariances do not participate.
template <class S>
ad::Var<S> ewta_loss(const MixtureTrack<S>& track, const std::vector<ad::Var<S>>& truth, int K,
                     double delta = 1.0) {
  track.check(/*need_cov=*/false);
  const int M = track.components();
  if (K < 1 || K > M) throw ConfigError("winner count must be between 1 and the component count");
  if (static_cast<int>(truth.size()) != track.horizon())
    throw ConfigError("truth horizon must match the forecast horizon");
  ad::Tape<S>& tape = *track.logits.tape;
  const Eigen::Index n = track.pos.front().front().rows();

  std::vector<ad::Var<S>> totals;  // per component, n x 1
  totals.reserve(M);
  for (int j = 0; j < M; ++j) {
    ad::Var<S> acc = tape.constant(Mat<S>(Mat<S>::Zero(n, 1)));
    for (int k = 0; k < track.horizon(); ++k) {
      ad::Var<S> err = ad::huber(ad::sub(track.pos[j][k], truth[k]), static_cast<S>(delta));
      acc = ad::add(acc, ad::row_sum(err));
    }
    totals.push_back(acc);
  }
  ad::Var<S> total_cols = ad::concat_cols<S>(totals);

  // Per-agent winner mask from the eager totals; selection is not
  // differentiated through.
  const Mat<double> values = total_cols.value();
  Mat<S> mask = Mat<S>::Zero(n, M);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> row(M);
    for (int j = 0; j < M; ++j) row[j] = values(i, j);
    for (const int j : smallest_k_indices(row, K)) mask(i, j) = S(1);
  }
  return ad::sum_all(ad::mul(total_cols, tape.constant(std::move(mask), "ewta_mask")));
}

// --- objective schedule --------------------------------------------------------------

enum class LossPhase { kEwta, kBlend, kNll };

struct LossRecipe {
  LossPhase phase = LossPhase::kNll;
  int winners = 1;      // K, meaningful in the EWTA and blend phases
  double blend = 0.0;   // beta, weight on the K=1 EWTA term in the blend phase
};

// The objective a recipe prescribes: beta-weighted winner-takes-all plus
// (1 - beta)-weighted likelihood, with the degenerate phases skipping the
// term whose weight is zero.
template <class S>
ad::Var<S> scheduled_loss(const MixtureTrack<S>& track, const std::vector<ad::Var<S>>& truth,
                          const LossRecipe& recipe) {
  ad::Tape<S>& tape = *track.logits.tape;
  if (recipe.blend >= 1.0) return ewta_loss(track, truth, recipe.winners);
  if (recipe.blend <= 0.0) return gmm_nll(track, truth);
  const ad::Var<S> wta = ewta_loss(track, truth, recipe.winners);
  const ad::Var<S> nll = gmm_nll(track, truth);
  return ad::add(ad::mul(wta, tape.constant(static_cast<S>(recipe.blend))),
                 ad::mul(nll, tape.constant(static_cast<S>(1.0 - recipe.blend))));
}

// Epoch-indexed objective: winner-takes-all with a shrinking winner set for
// the first eighth of training, a linear blend into the likelihood until the
// first quarter, then pure likelihood.
inline LossRecipe schedule_step(int total_epochs, int components, int epoch) {
  if (total_epochs < 1) throw ConfigError("schedule needs at least one epoch");
  if (components < 1) throw ConfigError("schedule needs at least one component");
  if (epoch < 0 || epoch >= total_epochs) throw ConfigError("schedule epoch out of range");
  const double t_ewta = total_epochs / 8.0;
  const double t_warm = total_epochs / 4.0;
  LossRecipe recipe;
  if (epoch < t_ewta) {
    recipe.phase = LossPhase::kEwta;
    recipe.winners = static_cast<int>(std::ceil(components * (t_ewta - epoch) / t_ewta));
    recipe.winners = std::clamp(recipe.winners, 1, components);
    recipe.blend = 1.0;
  } else if (epoch < t_warm) {
    recipe.phase = LossPhase::kBlend;
    recipe.winners = 1;
    recipe.blend = (t_warm - epoch) / (t_warm - t_ewta);
  } else {
    recipe.phase = LossPhase::kNll;
    recipe.winners = 1;
    recipe.blend = 0.0;
  }
  return recipe;
}

}  // namespace mtpgo
