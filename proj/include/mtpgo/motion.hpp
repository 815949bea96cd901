#pragma once

// Learned-ODE motion models: two small ELU networks per model drive the
// highest-order state derivatives, integrated with one explicit RK4 step per
// sample interval. The step also produces the exact Jacobian of the discrete
// transition (propagated through all four stages) for covariance updates.
// Constant-velocity and constant-acceleration baselines live here too.

#include <atomic>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/gradcheck.hpp"
#include "mtpgo/parameters.hpp"
#include "mtpgo/scene.hpp"

namespace mtpgo {

// Global count of integrator invocations; lets tests assert structurally
// that a configuration never integrates.
struct IntegratorStats {
  inline static std::atomic<std::uint64_t> calls{0};

  static void reset() { calls.store(0); }
  static std::uint64_t count() { return calls.load(); }
};

struct OdeConfig {
  int order = 2;            // 1: states (x, y); 2: states (x, y, v_x, v_y)
  int hidden_width = 16;    // width of both hidden layers
  bool use_static = false;  // append the agent-category one-hot to net inputs

  int state_dim() const { return order == 1 ? 2 : 4; }
  int input_dim() const { return 3 + (use_static ? kCategoryCount : 0); }

  void check() const {
    if (order != 1 && order != 2) throw ConfigError("ode order must be 1 or 2");
    if (hidden_width < 1) throw ConfigError("ode hidden width must be positive");
  }
};

// Two networks ("f1", "f2"), each mapping (state pair, one input component
// [, one-hot]) to a scalar derivative through two ELU hidden layers.
template <class S>
void register_ode_networks(ParameterSet<S>& ps, const std::string& prefix,
                           const OdeConfig& cfg, std::mt19937_64& rng) {
  cfg.check();
  for (const char* net : {"f1.", "f2."}) {
    const std::string p = prefix + net;
    init_glorot(ps.add(p + "W1", cfg.input_dim(), cfg.hidden_width), rng);
    ps.add(p + "b1", 1, cfg.hidden_width);
    init_glorot(ps.add(p + "W2", cfg.hidden_width, cfg.hidden_width), rng);
    ps.add(p + "b2", 1, cfg.hidden_width);
    init_glorot(ps.add(p + "w3", cfg.hidden_width, 1), rng);
    ps.add(p + "b3", 1, 1);
  }
}

namespace detail {

template <class S>
struct NetEval {
  ad::Var<S> out;   // n x 1
  ad::Var<S> jac2;  // n x 2, d out / d (z_0, z_1); only when requested
};

// Batched forward through one derivative network, optionally with the exact
// Jacobian w.r.t. the two leading (state) input columns, assembled from the
// layer-local ELU derivatives.
template <class S>
NetEval<S> ode_net_eval(const BoundParams<S>& params, const std::string& prefix,
                        ad::Var<S> z, bool want_jacobian) {
  ad::Var<S> a1 = ad::add(ad::matmul(z, params[prefix + "W1"]), params[prefix + "b1"]);
  ad::Var<S> h1 = ad::elu(a1);
  ad::Var<S> a2 = ad::add(ad::matmul(h1, params[prefix + "W2"]), params[prefix + "b2"]);
  ad::Var<S> h2 = ad::elu(a2);
  NetEval<S> result;
  result.out = ad::add(ad::matmul(h2, params[prefix + "w3"]), params[prefix + "b3"]);
  if (want_jacobian) {
    ad::Var<S> g2 = ad::mul(ad::elu_prime(a2), ad::transpose(params[prefix + "w3"]));
    ad::Var<S> g1 = ad::mul(ad::elu_prime(a1), ad::matmul(g2, ad::transpose(params[prefix + "W2"])));
    ad::Var<S> jac = ad::matmul(g1, ad::transpose(params[prefix + "W1"]));
    result.jac2 = ad::block(jac, 0, 0, jac.rows(), 2);
  }
  return result;
}

template <class S>
struct FieldEval {
  ad::Var<S> g;  // n x 2 derivatives of the driven state pair
  ad::Var<S> J;  // n x 4 row-encoded 2x2 Jacobian d g / d state-pair
};

// Evaluates the derivative field (f1, f2) at a batch of state pairs.
template <class S>
FieldEval<S> ode_field(const BoundParams<S>& params, const std::string& prefix,
                       ad::Var<S> state_pair, ad::Var<S> u, ad::Var<S> static_onehot,
                       bool want_jacobian) {
  const Eigen::Index n = state_pair.rows();
  ad::Var<S> u1 = ad::block(u, 0, 0, n, 1);
  ad::Var<S> u2 = ad::block(u, 0, 1, n, 1);
  std::vector<ad::Var<S>> z1_parts = {state_pair, u1};
  std::vector<ad::Var<S>> z2_parts = {state_pair, u2};
  if (static_onehot.valid()) {
    z1_parts.push_back(static_onehot);
    z2_parts.push_back(static_onehot);
  }
  NetEval<S> f1 = ode_net_eval(params, prefix + "f1.", ad::concat_cols(z1_parts), want_jacobian);
  NetEval<S> f2 = ode_net_eval(params, prefix + "f2.", ad::concat_cols(z2_parts), want_jacobian);
  FieldEval<S> field;
  field.g = ad::concat_cols<S>({f1.out, f2.out});
  if (want_jacobian) field.J = ad::concat_cols<S>({f1.jac2, f2.jac2});
  return field;
}

}  // namespace detail

// Reads one row-encoded 2x2 matrix [m00, m01, m10, m11] back into dense form.
inline Eigen::Matrix2d unpack2x2(const Eigen::RowVector4d& row) {
  Eigen::Matrix2d m;
  m << row(0), row(1), row(2), row(3);
  return m;
}

// Constant n x 4 rows encoding the 2x2 identity.
template <class S>
ad::Var<S> identity2_rows(ad::Tape<S>& tape, Eigen::Index n) {
  Mat<S> rows(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    rows(i, 0) = S(1);
    rows(i, 1) = S(0);
    rows(i, 2) = S(0);
    rows(i, 3) = S(1);
  }
  return tape.constant(std::move(rows), "identity2");
}

template <class S>
struct OdeStep {
  ad::Var<S> pos;  // n x 2 next positions
  ad::Var<S> vel;  // n x 2 next velocities (second order only)
  // Row-encoded 2x2 Jacobian blocks of the discrete transition, when
  // requested. First order: the full Jacobian F. Second order: the full
  // Jacobian is [[I, F12], [0, F22]].
  ad::Var<S> F;
  ad::Var<S> F12, F22;
};

// One explicit RK4 step of length T_s with u held constant. The Jacobian is
// that of this discrete step, composed exactly through the four stages.
template <class S>
OdeStep<S> ode_rk4_step(ad::Tape<S>& tape, const OdeConfig& cfg, const BoundParams<S>& params,
                        const std::string& prefix, ad::Var<S> pos, ad::Var<S> vel, ad::Var<S> u,
                        ad::Var<S> static_onehot, double sample_time, bool want_jacobian) {
  cfg.check();
  if (sample_time <= 0) throw ConfigError("integrator sample time must be positive");
  IntegratorStats::calls.fetch_add(1);
  const S h = static_cast<S>(sample_time);
  const Eigen::Index n = pos.rows();
  ad::Var<S> id = want_jacobian ? identity2_rows(tape, n) : ad::Var<S>{};
  OdeStep<S> step;

  auto field = [&](ad::Var<S> state_pair) {
    return detail::ode_field(params, prefix, state_pair, u, static_onehot, want_jacobian);
  };

  if (cfg.order == 1) {
    auto k1 = field(pos);
    auto k2 = field(ad::add(pos, ad::mul(k1.g, tape.constant(h / S(2)))));
    auto k3 = field(ad::add(pos, ad::mul(k2.g, tape.constant(h / S(2)))));
    auto k4 = field(ad::add(pos, ad::mul(k3.g, tape.constant(h))));
    ad::Var<S> incr = ad::add(ad::add(k1.g, ad::mul(k2.g, tape.constant(S(2)))),
                              ad::add(ad::mul(k3.g, tape.constant(S(2))), k4.g));
    step.pos = ad::add(pos, ad::mul(incr, tape.constant(h / S(6))));
    if (want_jacobian) {
      ad::Var<S> a1 = k1.J;
      ad::Var<S> a2 = ad::bmm2x2(k2.J, ad::add(id, ad::mul(a1, tape.constant(h / S(2)))));
      ad::Var<S> a3 = ad::bmm2x2(k3.J, ad::add(id, ad::mul(a2, tape.constant(h / S(2)))));
      ad::Var<S> a4 = ad::bmm2x2(k4.J, ad::add(id, ad::mul(a3, tape.constant(h))));
      ad::Var<S> sum = ad::add(ad::add(a1, ad::mul(a2, tape.constant(S(2)))),
                               ad::add(ad::mul(a3, tape.constant(S(2))), a4));
      step.F = ad::add(id, ad::mul(sum, tape.constant(h / S(6))));
    }
    return step;
  }

  // Second order: the velocity subsystem is autonomous; position stages use
  // the staged velocities directly.
  ad::Var<S> v1 = vel;
  auto g1 = field(v1);
  ad::Var<S> v2 = ad::add(vel, ad::mul(g1.g, tape.constant(h / S(2))));
  auto g2 = field(v2);
  ad::Var<S> v3 = ad::add(vel, ad::mul(g2.g, tape.constant(h / S(2))));
  auto g3 = field(v3);
  ad::Var<S> v4 = ad::add(vel, ad::mul(g3.g, tape.constant(h)));
  auto g4 = field(v4);

  ad::Var<S> vel_incr = ad::add(ad::add(g1.g, ad::mul(g2.g, tape.constant(S(2)))),
                                ad::add(ad::mul(g3.g, tape.constant(S(2))), g4.g));
  step.vel = ad::add(vel, ad::mul(vel_incr, tape.constant(h / S(6))));
  ad::Var<S> pos_incr = ad::add(ad::add(v1, ad::mul(v2, tape.constant(S(2)))),
                                ad::add(ad::mul(v3, tape.constant(S(2))), v4));
  step.pos = ad::add(pos, ad::mul(pos_incr, tape.constant(h / S(6))));

  if (want_jacobian) {
    ad::Var<S> c1 = g1.J;
    ad::Var<S> c2 = ad::bmm2x2(g2.J, ad::add(id, ad::mul(c1, tape.constant(h / S(2)))));
    ad::Var<S> c3 = ad::bmm2x2(g3.J, ad::add(id, ad::mul(c2, tape.constant(h / S(2)))));
    ad::Var<S> c4 = ad::bmm2x2(g4.J, ad::add(id, ad::mul(c3, tape.constant(h))));
    ad::Var<S> c_sum = ad::add(ad::add(c1, ad::mul(c2, tape.constant(S(2)))),
                               ad::add(ad::mul(c3, tape.constant(S(2))), c4));
    step.F22 = ad::add(id, ad::mul(c_sum, tape.constant(h / S(6))));
    ad::Var<S> c123 = ad::add(ad::add(c1, c2), c3);
    step.F12 = ad::add(ad::mul(id, tape.constant(h)),
                       ad::mul(c123, tape.constant(h * h / S(6))));
  }
  return step;
}

// --- open-loop baselines ------------------------------------------------------

// Positions at times k*T_s for k = 1..horizon under constant velocity.
inline Mat<double> cv_predict(const Eigen::Vector2d& pos, const Eigen::Vector2d& vel,
                              double sample_time, int horizon) {
  if (sample_time <= 0) throw ConfigError("cv_predict sample time must be positive");
  Mat<double> out(horizon, 2);
  for (int k = 1; k <= horizon; ++k)
    out.row(k - 1) = (pos + k * sample_time * vel).transpose();
  return out;
}

// Positions under constant acceleration.
inline Mat<double> ca_predict(const Eigen::Vector2d& pos, const Eigen::Vector2d& vel,
                              const Eigen::Vector2d& acc, double sample_time, int horizon) {
  if (sample_time <= 0) throw ConfigError("ca_predict sample time must be positive");
  Mat<double> out(horizon, 2);
  for (int k = 1; k <= horizon; ++k) {
    const double t = k * sample_time;
    out.row(k - 1) = (pos + t * vel + 0.5 * t * t * acc).transpose();
  }
  return out;
}

}  // namespace mtpgo
