#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "mtpgo/model.hpp"

namespace ad = mtpgo::ad;
using mtpgo::BoundParams;
using mtpgo::ConfigError;
using mtpgo::DecodeMode;
using mtpgo::Mat;
using mtpgo::ModelConfig;
using mtpgo::ParameterSet;
using mtpgo::SceneSequence;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.hidden_width = 3;
  cfg.history_steps = 2;
  cfg.future_steps = 2;
  cfg.components = 2;
  cfg.motion_order = 1;
  cfg.gnn_heads = 1;
  cfg.gnn_depth = 2;
  cfg.ode_hidden_width = 3;
  return cfg;
}

// Fully-valid random scene with consistent distances.
SceneSequence toy_scene(int n, int t_h, int t_f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SceneSequence s;
  s.kind = mtpgo::SceneKind::kHighway;
  s.sample_time = 0.2;
  s.history_steps = t_h;
  s.future_steps = t_f;
  for (int v = 0; v < n; ++v) {
    s.agents.push_back(v + 1);
    s.categories.push_back(mtpgo::AgentCategory::kCar);
  }
  for (int i = 0; i <= t_h; ++i) {
    Mat<double> f(n, mtpgo::kFeatureDim);
    for (int v = 0; v < n; ++v)
      for (int c = 0; c < mtpgo::kFeatureDim; ++c) f(v, c) = gauss(rng);
    Mat<double> d = Mat<double>::Zero(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        d(a, b) = std::hypot(f(a, 0) - f(b, 0), f(a, 1) - f(b, 1));
        d(b, a) = d(a, b);
      }
    s.features.push_back(f);
    s.distances.push_back(d);
    s.valid.emplace_back(static_cast<std::size_t>(n), 1);
  }
  auto rand_mat = [&](int r, int c) {
    Mat<double> m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = gauss(rng);
    return m;
  };
  s.future_x = rand_mat(t_f, n);
  s.future_y = rand_mat(t_f, n);
  s.future_vx = rand_mat(t_f, n);
  s.future_vy = rand_mat(t_f, n);
  s.has_future.assign(static_cast<std::size_t>(n), 1);
  s.validate();
  return s;
}

// One agent of the scene as its own single-agent scene.
SceneSequence solo_scene(const SceneSequence& s, int v) {
  SceneSequence out;
  out.kind = s.kind;
  out.sample_time = s.sample_time;
  out.history_steps = s.history_steps;
  out.future_steps = s.future_steps;
  out.agents = {s.agents[static_cast<std::size_t>(v)]};
  out.categories = {s.categories[static_cast<std::size_t>(v)]};
  for (std::size_t i = 0; i < s.features.size(); ++i) {
    out.features.push_back(s.features[i].row(v));
    out.distances.push_back(Mat<double>::Zero(1, 1));
    out.valid.push_back({s.valid[i][static_cast<std::size_t>(v)]});
  }
  out.future_x = s.future_x.col(v);
  out.future_y = s.future_y.col(v);
  out.future_vx = s.future_vx.col(v);
  out.future_vy = s.future_vy.col(v);
  out.has_future = {s.has_future[static_cast<std::size_t>(v)]};
  out.validate();
  return out;
}

ParameterSet<double> jittered_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParameterSet<double> ps;
  std::mt19937_64 rng(seed);
  mtpgo::register_model(ps, "", cfg, rng);
  mtpgo::jitter_parameters(ps, rng, 0.05);
  return ps;
}

}  // namespace

TEST_CASE("model configuration rules", "[model]") {
  ModelConfig cfg = tiny_model();
  CHECK(cfg.state_dim() == 2);
  cfg.motion_order = 2;
  CHECK(cfg.state_dim() == 4);
  cfg.use_ode = false;
  cfg.use_ekf = false;
  CHECK(cfg.state_dim() == 2);

  ModelConfig bad = tiny_model();
  bad.use_ode = false;  // keeps use_ekf = true
  CHECK_THROWS_AS(bad.check(), ConfigError);
  ModelConfig bad2 = tiny_model();
  bad2.future_steps = 0;
  CHECK_THROWS_AS(bad2.check(), ConfigError);
}

TEST_CASE("registration matches the configured blocks", "[model]") {
  ModelConfig cfg = tiny_model();
  ParameterSet<double> with_ode;
  std::mt19937_64 rng(3);
  mtpgo::register_model(with_ode, "", cfg, rng);
  CHECK(with_ode.has("ode.f1.W1"));
  CHECK(with_ode.has("ode.f2.b3"));

  cfg.use_ode = false;
  cfg.use_ekf = false;
  ParameterSet<double> without_ode;
  mtpgo::register_model(without_ode, "", cfg, rng);
  CHECK_FALSE(without_ode.has("ode.f1.W1"));
  for (const auto& name : without_ode.names()) CHECK(name.rfind("ode.", 0) != 0);
}

TEST_CASE("density-network mode emits head positions and never integrates", "[model]") {
  ModelConfig cfg = tiny_model();
  cfg.use_ode = false;
  cfg.use_ekf = false;
  const auto ps = jittered_params(cfg, 7);
  const auto scene = toy_scene(2, cfg.history_steps, cfg.future_steps, 11);

  mtpgo::IntegratorStats::reset();
  ad::Tape<double> tape;
  BoundParams<double> bound(tape, ps);
  const auto fwd = mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kTeacherForcing);
  CHECK(mtpgo::IntegratorStats::count() == 0);

  for (int j = 0; j < cfg.components; ++j) {
    for (int k = 0; k < cfg.future_steps; ++k) {
      const Mat<double> u = fwd.decoder.steps[static_cast<std::size_t>(k)].u.value();
      const Mat<double> noise = fwd.decoder.steps[static_cast<std::size_t>(k)].noise.value();
      const Mat<double> pos = fwd.track.pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].value();
      const Mat<double> cov = fwd.track.cov[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].value();
      for (int v = 0; v < 2; ++v) {
        CHECK(pos(v, 0) == u(v, 2 * j));
        CHECK(pos(v, 1) == u(v, 2 * j + 1));
        const auto q = mtpgo::build_process_noise(noise(v, 3 * j), noise(v, 3 * j + 1),
                                                  noise(v, 3 * j + 2));
        CHECK(cov(v, 0) == Catch::Approx(q.Q(0, 0) + mtpgo::kCovarianceFloor).epsilon(1e-12));
        CHECK(cov(v, 1) == Catch::Approx(q.Q(0, 1)).margin(1e-15));
        CHECK(cov(v, 2) == Catch::Approx(q.Q(1, 0)).margin(1e-15));
        CHECK(cov(v, 3) == Catch::Approx(q.Q(1, 1) + mtpgo::kCovarianceFloor).epsilon(1e-12));
      }
    }
  }

  SECTION("rollout works without a motion model") {
    ad::Tape<double> tape2;
    BoundParams<double> bound2(tape2, ps);
    const auto roll = mtpgo::model_forward(tape2, cfg, bound2, "", scene, DecodeMode::kRollout);
    CHECK(mtpgo::IntegratorStats::count() == 0);
    CHECK(roll.track.horizon() == cfg.future_steps);
  }
}

TEST_CASE("zero-parameter second-order model follows constant velocity", "[model]") {
  ModelConfig cfg = tiny_model();
  cfg.motion_order = 2;
  cfg.future_steps = 5;
  ParameterSet<double> ps;
  std::mt19937_64 rng(13);
  mtpgo::register_model(ps, "", cfg, rng);
  for (const auto& name : ps.names())
    if (name != "sigma_e") ps.at(name).setZero();
  const auto scene = toy_scene(2, cfg.history_steps, cfg.future_steps, 17);

  ad::Tape<double> tape;
  BoundParams<double> bound(tape, ps);
  const auto fwd = mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kRollout);
  const Mat<double>& now = scene.features.back();
  for (int v = 0; v < 2; ++v) {
    const Eigen::Vector2d p0(now(v, mtpgo::kIdxX), now(v, mtpgo::kIdxY));
    const Eigen::Vector2d v0(now(v, mtpgo::kIdxVx), now(v, mtpgo::kIdxVy));
    const Mat<double> cv = mtpgo::cv_predict(p0, v0, scene.sample_time, cfg.future_steps);
    for (int j = 0; j < cfg.components; ++j)
      for (int k = 0; k < cfg.future_steps; ++k) {
        const Mat<double> pos =
            fwd.track.pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].value();
        CHECK(std::abs(pos(v, 0) - cv(k, 0)) <= 1e-9);
        CHECK(std::abs(pos(v, 1) - cv(k, 1)) <= 1e-9);
      }
  }
}

TEST_CASE("track covariances equal direct propagation of the emitted heads", "[model]") {
  ModelConfig cfg = tiny_model();
  const int order = GENERATE(1, 2);
  cfg.motion_order = order;
  cfg.future_steps = 3;
  const auto ps = jittered_params(cfg, 19 + static_cast<std::uint64_t>(order));
  const auto scene = toy_scene(2, cfg.history_steps, cfg.future_steps, 23);
  const int n = scene.agent_count();
  const int d_s = cfg.state_dim();

  ad::Tape<double> tape;
  BoundParams<double> bound(tape, ps);
  const auto fwd = mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kTeacherForcing);

  ad::Tape<double> direct;
  BoundParams<double> dbound(direct, ps);
  const Mat<double> init = scene.features.back();
  for (int j = 0; j < cfg.components; ++j) {
    std::vector<ad::Var<double>> u_j, noise_j;
    for (int k = 0; k < cfg.future_steps; ++k) {
      const Mat<double> u = fwd.decoder.steps[static_cast<std::size_t>(k)].u.value();
      const Mat<double> noise = fwd.decoder.steps[static_cast<std::size_t>(k)].noise.value();
      u_j.push_back(direct.constant(Mat<double>(u.middleCols(2 * j, 2))));
      noise_j.push_back(direct.constant(Mat<double>(noise.middleCols(3 * j, 3))));
    }
    Mat<double> pos0(n, 2), vel0(n, 2);
    for (int v = 0; v < n; ++v) {
      pos0.row(v) << init(v, mtpgo::kIdxX), init(v, mtpgo::kIdxY);
      vel0.row(v) << init(v, mtpgo::kIdxVx), init(v, mtpgo::kIdxVy);
    }
    const auto belief = mtpgo::propagate_component(
        direct, cfg.ode(), dbound, "ode.", direct.constant(pos0),
        d_s == 4 ? direct.constant(vel0) : ad::Var<double>{}, u_j, noise_j, ad::Var<double>{},
        scene.sample_time);
    for (int k = 0; k < cfg.future_steps; ++k) {
      const Mat<double> got_pos =
          fwd.track.pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].value();
      const Mat<double> want_pos = belief.pos[static_cast<std::size_t>(k)].value();
      const Mat<double> got_cov =
          fwd.track.cov[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].value();
      const Mat<double> want_p = order == 1 ? belief.P[static_cast<std::size_t>(k)].value()
                                            : belief.P11[static_cast<std::size_t>(k)].value();
      CHECK((got_pos - want_pos).cwiseAbs().maxCoeff() <= 1e-12);
      for (int v = 0; v < n; ++v) {
        CHECK(std::abs(got_cov(v, 0) - (want_p(v, 0) + mtpgo::kCovarianceFloor)) <= 1e-12);
        CHECK(std::abs(got_cov(v, 1) - want_p(v, 1)) <= 1e-12);
        CHECK(std::abs(got_cov(v, 2) - want_p(v, 2)) <= 1e-12);
        CHECK(std::abs(got_cov(v, 3) - (want_p(v, 3) + mtpgo::kCovarianceFloor)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("rollout feeds the decoder its own motion states", "[model]") {
  // With one component, replaying the realized motion states as ground truth
  // must reproduce the rollout exactly.
  ModelConfig cfg = tiny_model();
  cfg.components = 1;
  cfg.motion_order = 2;
  cfg.future_steps = 3;
  const auto ps = jittered_params(cfg, 29);
  auto scene = toy_scene(2, cfg.history_steps, cfg.future_steps, 31);

  ad::Tape<double> tape;
  BoundParams<double> bound(tape, ps);
  const auto roll = mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kRollout);

  // Re-integrate the emitted controls to recover velocities alongside the
  // track positions.
  ad::Tape<double> replay;
  BoundParams<double> rb(replay, ps);
  const Mat<double>& now = scene.features.back();
  Mat<double> pos0(2, 2), vel0(2, 2);
  for (int v = 0; v < 2; ++v) {
    pos0.row(v) << now(v, mtpgo::kIdxX), now(v, mtpgo::kIdxY);
    vel0.row(v) << now(v, mtpgo::kIdxVx), now(v, mtpgo::kIdxVy);
  }
  ad::Var<double> pos = replay.constant(pos0);
  ad::Var<double> vel = replay.constant(vel0);
  for (int k = 0; k < cfg.future_steps; ++k) {
    const Mat<double> u = roll.decoder.steps[static_cast<std::size_t>(k)].u.value();
    const auto step = mtpgo::ode_rk4_step(replay, cfg.ode(), rb, "ode.", pos, vel,
                                          replay.constant(Mat<double>(u.leftCols(2))),
                                          ad::Var<double>{}, scene.sample_time, false);
    pos = step.pos;
    vel = step.vel;
    const Mat<double> track_pos = roll.track.pos[0][static_cast<std::size_t>(k)].value();
    REQUIRE((pos.value() - track_pos).cwiseAbs().maxCoeff() <= 1e-12);
    if (k + 1 < cfg.future_steps) {
      scene.future_x.row(k) = pos.value().col(0).transpose();
      scene.future_y.row(k) = pos.value().col(1).transpose();
      scene.future_vx.row(k) = vel.value().col(0).transpose();
      scene.future_vy.row(k) = vel.value().col(1).transpose();
    }
  }

  ad::Tape<double> tape2;
  BoundParams<double> bound2(tape2, ps);
  const auto forced =
      mtpgo::model_forward(tape2, cfg, bound2, "", scene, DecodeMode::kTeacherForcing);
  CHECK((forced.track.logits.value() - roll.track.logits.value()).cwiseAbs().maxCoeff() <= 1e-12);
  for (int k = 0; k < cfg.future_steps; ++k) {
    const auto diff_pos = (forced.track.pos[0][static_cast<std::size_t>(k)].value() -
                           roll.track.pos[0][static_cast<std::size_t>(k)].value())
                              .cwiseAbs()
                              .maxCoeff();
    const auto diff_cov = (forced.track.cov[0][static_cast<std::size_t>(k)].value() -
                           roll.track.cov[0][static_cast<std::size_t>(k)].value())
                              .cwiseAbs()
                              .maxCoeff();
    CHECK(diff_pos <= 1e-12);
    CHECK(diff_cov <= 1e-12);
  }
}

TEST_CASE("edge-free model treats agents independently", "[model]") {
  ModelConfig cfg = tiny_model();
  cfg.use_encoder_gnn = false;
  cfg.use_decoder_gnn = false;
  cfg.future_steps = 3;
  const auto ps = jittered_params(cfg, 37);
  const auto scene = toy_scene(3, cfg.history_steps, cfg.future_steps, 41);

  ad::Tape<double> tape;
  BoundParams<double> bound(tape, ps);
  const auto joint = mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kTeacherForcing);

  for (int v = 0; v < 3; ++v) {
    ad::Tape<double> solo_tape;
    BoundParams<double> solo_bound(solo_tape, ps);
    const auto solo =
        mtpgo::model_forward(solo_tape, cfg, solo_bound, "", solo_scene(scene, v),
                             DecodeMode::kTeacherForcing);
    CHECK((joint.track.logits.value().row(v) - solo.track.logits.value().row(0))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    for (int j = 0; j < cfg.components; ++j)
      for (int k = 0; k < cfg.future_steps; ++k) {
        const auto sj = static_cast<std::size_t>(j);
        const auto sk = static_cast<std::size_t>(k);
        CHECK((joint.track.pos[sj][sk].value().row(v) - solo.track.pos[sj][sk].value().row(0))
                  .cwiseAbs()
                  .maxCoeff() <= 1e-12);
        CHECK((joint.track.cov[sj][sk].value().row(v) - solo.track.cov[sj][sk].value().row(0))
                  .cwiseAbs()
                  .maxCoeff() <= 1e-12);
      }
  }
}

TEST_CASE("category one-hot input changes outputs only when enabled", "[model]") {
  ModelConfig cfg = tiny_model();
  const auto scene_car = toy_scene(2, cfg.history_steps, cfg.future_steps, 43);
  SceneSequence scene_bus = scene_car;
  scene_bus.categories[0] = mtpgo::AgentCategory::kBus;

  auto mean_gap = [&](const ModelConfig& c, const ParameterSet<double>& ps) {
    ad::Tape<double> t1, t2;
    BoundParams<double> b1(t1, ps), b2(t2, ps);
    const auto f1 = mtpgo::model_forward(t1, c, b1, "", scene_car, DecodeMode::kTeacherForcing);
    const auto f2 = mtpgo::model_forward(t2, c, b2, "", scene_bus, DecodeMode::kTeacherForcing);
    double gap = 0.0;
    for (int j = 0; j < c.components; ++j)
      for (int k = 0; k < c.future_steps; ++k)
        gap = std::max(gap, (f1.track.pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]
                                 .value() -
                             f2.track.pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]
                                 .value())
                                .cwiseAbs()
                                .maxCoeff());
    return gap;
  };

  cfg.use_static = true;
  CHECK(mean_gap(cfg, jittered_params(cfg, 47)) > 1e-8);
  cfg.use_static = false;
  CHECK(mean_gap(cfg, jittered_params(cfg, 47)) == 0.0);
}

TEST_CASE("track restriction and truth extraction", "[model]") {
  ModelConfig cfg = tiny_model();
  const auto ps = jittered_params(cfg, 53);
  const auto scene = toy_scene(3, cfg.history_steps, cfg.future_steps, 59);

  ad::Tape<double> tape;
  BoundParams<double> bound(tape, ps);
  const auto fwd = mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kTeacherForcing);
  const std::vector<int> keep{2, 0};
  const auto sub = mtpgo::restrict_track(fwd.track, keep);
  CHECK(sub.logits.rows() == 2);
  CHECK((sub.logits.value().row(0) - fwd.track.logits.value().row(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sub.pos[1][1].value().row(1) - fwd.track.pos[1][1].value().row(0)).cwiseAbs().maxCoeff() ==
        0.0);

  const auto truth = mtpgo::truth_positions(tape, scene, keep, cfg.future_steps);
  REQUIRE(truth.size() == static_cast<std::size_t>(cfg.future_steps));
  CHECK(truth[1].value()(0, 0) == scene.future_x(1, 2));
  CHECK(truth[1].value()(1, 1) == scene.future_y(1, 0));
  CHECK_THROWS_AS(mtpgo::truth_positions(tape, scene, keep, scene.future_steps + 1), ConfigError);

  // The restricted mixture feeds the likelihood without shape complaints.
  const auto nll = mtpgo::gmm_nll(sub, truth);
  CHECK(std::isfinite(nll.scalar()));
}

TEST_CASE("model gradients match finite differences", "[model]") {
  const auto scene = toy_scene(2, 2, 2, 61);

  SECTION("teacher forcing with covariance propagation") {
    ModelConfig cfg = tiny_model();
    const auto ps = jittered_params(cfg, 67);
    const auto loss_fn = [&](ad::Tape<double>& tape,
                             const BoundParams<double>& bound) -> ad::Var<double> {
      const auto fwd =
          mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kTeacherForcing);
      const auto agents = scene.loss_indices();
      return mtpgo::gmm_nll(mtpgo::restrict_track(fwd.track, agents),
                            mtpgo::truth_positions(tape, scene, agents, cfg.future_steps));
    };
    const auto report = mtpgo::check_gradients<double>(loss_fn, ps);
    INFO(report.worst.name << "[" << report.worst.row << "," << report.worst.col
                           << "] analytic=" << report.worst.analytic
                           << " numeric=" << report.worst.numeric);
    // Whole-model forward-backward checks use the model-level tolerance: the
    // chain through GNN stacks, RK4 Jacobians, and the EKF recursion is deep
    // enough that central differences carry ~1e-8 absolute roundoff, which
    // the floor-guarded metric reports as ~1e-4 for near-zero coordinates.
    CHECK(report.max_rel_err < 1e-4);
    CHECK(report.coords > 100);
  }

  SECTION("rollout through the feedback path") {
    ModelConfig cfg = tiny_model();
    cfg.use_ekf = false;  // covariance from the raw heads; the means still integrate
    const auto ps = jittered_params(cfg, 71);
    const auto loss_fn = [&](ad::Tape<double>& tape,
                             const BoundParams<double>& bound) -> ad::Var<double> {
      const auto fwd = mtpgo::model_forward(tape, cfg, bound, "", scene, DecodeMode::kRollout);
      const auto agents = scene.loss_indices();
      return mtpgo::gmm_nll(mtpgo::restrict_track(fwd.track, agents),
                            mtpgo::truth_positions(tape, scene, agents, cfg.future_steps));
    };
    const auto report = mtpgo::check_gradients<double>(loss_fn, ps);
    INFO(report.worst.name << "[" << report.worst.row << "," << report.worst.col
                           << "] analytic=" << report.worst.analytic
                           << " numeric=" << report.worst.numeric);
    // The rollout chain is twice as deep as teacher forcing, so central
    // differences carry visibly more roundoff; this is the model-level
    // tolerance used everywhere a full forward-backward is checked.
    CHECK(report.max_rel_err < 1e-4);
  }
}
