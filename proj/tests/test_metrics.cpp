#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mtpgo/metrics.hpp"

using mtpgo::GmmForecast;
using mtpgo::Mat;

namespace {

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -5.0,
                       double hi = 5.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

GmmForecast point_forecast(const Mat<double>& mean, double var = 1.0) {
  GmmForecast fc;
  fc.weights = Eigen::VectorXd::Ones(1);
  fc.mean.push_back(mean);
  Mat<double> cov(mean.rows(), 4);
  for (Eigen::Index k = 0; k < mean.rows(); ++k) cov.row(k) << var, 0.0, 0.0, var;
  fc.cov.push_back(cov);
  return fc;
}

}  // namespace

TEST_CASE("average displacement anchors", "[metrics]") {
  std::mt19937_64 rng(101);
  const Mat<double> truth = random_mat(25, 2, rng);
  REQUIRE(mtpgo::ade(truth, truth) == 0.0);

  Mat<double> offset = truth;
  offset.col(0).array() += 1.0;
  REQUIRE(std::abs(mtpgo::ade(offset, truth) - 1.0) < 1e-12);

  Mat<double> final_only = truth;
  final_only(24, 1) += 2.5;
  REQUIRE(std::abs(mtpgo::ade(final_only, truth) - 0.1) < 1e-12);

  REQUIRE_THROWS_AS(mtpgo::ade(truth, random_mat(24, 2, rng)), mtpgo::ConfigError);
}

TEST_CASE("final displacement anchors", "[metrics]") {
  std::mt19937_64 rng(103);
  const Mat<double> truth = random_mat(10, 2, rng);
  REQUIRE(mtpgo::fde(truth, truth) == 0.0);

  Mat<double> pred = truth;
  pred(9, 0) += 3.0;
  pred(9, 1) += 4.0;
  REQUIRE(std::abs(mtpgo::fde(pred, truth) - 5.0) < 1e-12);

  // Garbling every non-final step leaves the final error unchanged.
  Mat<double> garbled = pred;
  garbled.topRows(9) = random_mat(9, 2, rng);
  REQUIRE(std::abs(mtpgo::fde(garbled, truth) - 5.0) < 1e-12);
  REQUIRE(mtpgo::fde(pred, truth) <= 10.0 * mtpgo::ade(pred, truth) + 1e-12);
}

TEST_CASE("miss rate boundary behavior", "[metrics]") {
  REQUIRE(mtpgo::miss_rate({3.0, 3.0, 3.0}) == 1.0);
  REQUIRE(mtpgo::miss_rate({0.0, 0.0}) == 0.0);
  // Exactly at the threshold counts as a hit.
  REQUIRE(mtpgo::miss_rate({2.0, 2.0}) == 0.0);
  REQUIRE(mtpgo::miss_rate({2.0, 2.1}) == 0.5);
  REQUIRE_THROWS_AS(mtpgo::miss_rate({}), mtpgo::ConfigError);
}

TEST_CASE("path displacement ignores timing along the path", "[metrics]") {
  // Truth moves along the x-axis; the prediction lags by one step but stays
  // on the same line, so every predicted point lies on the truth path.
  Mat<double> truth(6, 2), lagged(6, 2);
  for (int k = 0; k < 6; ++k) {
    truth.row(k) << 1.0 * (k + 1), 0.0;
    lagged.row(k) << 1.0 * k, 0.0;
  }
  REQUIRE(mtpgo::apde(lagged, truth) < 1.0 / 6.0 + 1e-12);  // only the first point is off-path
  REQUIRE(mtpgo::ade(lagged, truth) == 1.0);                // index-aligned error sees the lag
  REQUIRE(mtpgo::apde(truth, truth) == 0.0);

  // Single truth point: mean distance to it.
  Mat<double> point(1, 2);
  point << 0.0, 0.0;
  Mat<double> pred(2, 2);
  pred << 3.0, 4.0, 0.0, 0.0;
  REQUIRE(std::abs(mtpgo::apde(pred, point) - 2.5) < 1e-12);
}

TEST_CASE("path displacement never exceeds average displacement", "[metrics]") {
  std::mt19937_64 rng(107);
  for (int trial = 0; trial < 300; ++trial) {
    const Mat<double> pred = random_mat(12, 2, rng);
    const Mat<double> truth = random_mat(12, 2, rng);
    REQUIRE(mtpgo::apde(pred, truth) <= mtpgo::ade(pred, truth) + 1e-12);
  }
}

TEST_CASE("distance metrics are translation invariant", "[metrics]") {
  std::mt19937_64 rng(109);
  const Mat<double> pred = random_mat(8, 2, rng);
  const Mat<double> truth = random_mat(8, 2, rng);
  Mat<double> shift = Mat<double>::Zero(8, 2);
  shift.col(0).array() += 11.5;
  shift.col(1).array() -= 4.25;
  REQUIRE(std::abs(mtpgo::ade(pred + shift, truth + shift) - mtpgo::ade(pred, truth)) < 1e-12);
  REQUIRE(std::abs(mtpgo::fde(pred + shift, truth + shift) - mtpgo::fde(pred, truth)) < 1e-12);
  REQUIRE(std::abs(mtpgo::apde(pred + shift, truth + shift) - mtpgo::apde(pred, truth)) < 1e-12);
}

TEST_CASE("likelihood metric anchors", "[metrics]") {
  std::mt19937_64 rng(113);
  const Mat<double> truth = random_mat(5, 2, rng);
  const GmmForecast fc = point_forecast(truth);
  // Unit covariance at the mean: log 2 pi per step, every step.
  REQUIRE(std::abs(mtpgo::anll(fc, truth) - std::log(2.0 * M_PI)) < 1e-9);
  REQUIRE(std::abs(mtpgo::fnll(fc, truth) - std::log(2.0 * M_PI)) < 1e-9);

  // Doubling a diagonal covariance at the truth adds log 2 per step.
  const GmmForecast doubled = point_forecast(truth, 2.0);
  REQUIRE(std::abs(mtpgo::anll(doubled, truth) - (std::log(2.0 * M_PI) + std::log(2.0))) <
          1e-9);

  // The final-step score is the last term of the horizon sum.
  GmmForecast mixed = point_forecast(truth);
  mixed.mean[0](4, 0) += 1.5;  // only the final step off
  const double total = mtpgo::gmm_nll(mixed, truth);
  const double first_steps = mtpgo::gmm_nll(point_forecast(truth.topRows(4)), truth.topRows(4));
  REQUIRE(std::abs(mtpgo::fnll(mixed, truth) - (total - first_steps)) < 1e-9);
}

TEST_CASE("confidence interval anchors", "[metrics]") {
  // Constant values collapse the interval.
  const auto constant = mtpgo::mean_ci({1.5, 1.5, 1.5, 1.5});
  REQUIRE(constant.mean == 1.5);
  REQUIRE(constant.half_width == 0.0);

  // Ten samples with unit sample deviation: half-width 2.26 / sqrt(10).
  std::vector<double> ten;
  for (int i = 0; i < 10; ++i) ten.push_back((i % 2 == 0 ? 1.0 : -1.0) * std::sqrt(0.9));
  const auto spread = mtpgo::mean_ci(ten);
  REQUIRE(std::abs(spread.mean) < 1e-12);
  REQUIRE(std::abs(spread.half_width - 2.26 / std::sqrt(10.0)) < 1e-9);
  REQUIRE(std::abs(spread.half_width - 0.7147) < 1e-4);

  REQUIRE(mtpgo::mean_ci({0.0, 2.0}).mean == 1.0);
  REQUIRE_THROWS_AS(mtpgo::mean_ci({1.0}), mtpgo::ConfigError);

  // Small-sample quantiles come from the table; large samples go normal.
  REQUIRE(mtpgo::t_quantile_95(1) == 12.71);
  REQUIRE(mtpgo::t_quantile_95(9) == 2.26);
  REQUIRE(mtpgo::t_quantile_95(29) == 2.05);
  REQUIRE(mtpgo::t_quantile_95(30) == 1.96);
  REQUIRE(mtpgo::t_quantile_95(500) == 1.96);
}

TEST_CASE("agent evaluation uses the most likely component", "[metrics]") {
  std::mt19937_64 rng(127);
  const Mat<double> truth = random_mat(6, 2, rng);
  GmmForecast fc;
  fc.weights = Eigen::VectorXd(2);
  fc.weights << 0.2, 0.8;
  fc.mean.push_back(truth);                       // exact, but low weight
  Mat<double> far = truth;
  far.array() += 3.0;
  fc.mean.push_back(far);                         // off by 3 sqrt(2), high weight
  for (int j = 0; j < 2; ++j) {
    Mat<double> cov(6, 4);
    for (int k = 0; k < 6; ++k) cov.row(k) << 1.0, 0.0, 0.0, 1.0;
    fc.cov.push_back(cov);
  }
  const auto eval = mtpgo::evaluate_agent(fc, truth);
  REQUIRE(std::abs(eval.ade - 3.0 * std::sqrt(2.0)) < 1e-12);
  REQUIRE(eval.miss);  // 4.24 m final error > 2 m
  // Swapping the weights flips the selected component.
  fc.weights << 0.8, 0.2;
  const auto eval2 = mtpgo::evaluate_agent(fc, truth);
  REQUIRE(eval2.ade == 0.0);
  REQUIRE_FALSE(eval2.miss);
}

TEST_CASE("scene accumulation and rendering", "[metrics]") {
  std::mt19937_64 rng(131);
  mtpgo::MetricsAccumulator acc;
  for (int scene = 0; scene < 4; ++scene) {
    std::vector<mtpgo::AgentEvaluation> agents;
    for (int a = 0; a < 3; ++a) {
      const Mat<double> truth = random_mat(5, 2, rng);
      Mat<double> pred = truth;
      pred.array() += 0.1 * (scene + 1);
      agents.push_back(mtpgo::evaluate_agent(point_forecast(pred), truth));
    }
    acc.add_scene(agents);
  }
  const auto report = acc.report();
  REQUIRE(report.scenes == 4);
  // Constant offset per scene: per-scene ADE is the offset length.
  REQUIRE(std::abs(report.ade.per_scene[0] - 0.1 * std::sqrt(2.0)) < 1e-9);
  REQUIRE(std::abs(report.ade.per_scene[3] - 0.4 * std::sqrt(2.0)) < 1e-9);
  REQUIRE(report.mr.mean == 0.0);
  REQUIRE(report.ade.half_width > 0.0);

  const std::string table = metrics_to_table(report);
  REQUIRE(std::count(table.begin(), table.end(), '\n') == 5);  // header + 4 scenes
  const std::string json = metrics_to_json(report);
  REQUIRE(json.find("\"miss_rate\"") != std::string::npos);
  REQUIRE(json.find("\"ci95\"") != std::string::npos);

  mtpgo::MetricsAccumulator empty;
  REQUIRE_THROWS_AS(empty.report(), mtpgo::ConfigError);
  REQUIRE_THROWS_AS(empty.add_scene({}), mtpgo::ConfigError);
}
