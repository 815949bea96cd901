#pragma once

// Covariance propagation along predicted trajectories: the Kalman time
// update P' = F P F^T + G Q G^T with learned process noise, specialised to
// row-encoded 2x2 blocks so whole batches of (agent, component) units are
// propagated at once on the autodiff tape.

#include <string>
#include <vector>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/gradcheck.hpp"
#include "mtpgo/motion.hpp"

namespace mtpgo {

// Additive floor applied to the diagonal of the position covariance when it
// enters a likelihood (the second-order model's position covariance is
// exactly zero after one step from P0 = 0).
inline constexpr double kCovarianceFloor = 1e-4;

// --- plain helpers -------------------------------------------------------------

struct ProcessNoise {
  double sigma1 = 0;
  double sigma2 = 0;
  double rho = 0;
  Eigen::Matrix2d Q;
};

// Raw head outputs to a valid noise covariance: sigmas through softplus,
// correlation through softsign.
inline ProcessNoise build_process_noise(double s1_raw, double s2_raw, double rho_raw) {
  ProcessNoise n;
  n.sigma1 = num::softplus(s1_raw);
  n.sigma2 = num::softplus(s2_raw);
  n.rho = num::softsign(rho_raw);
  n.Q << n.sigma1 * n.sigma1, n.rho * n.sigma1 * n.sigma2,
         n.rho * n.sigma1 * n.sigma2, n.sigma2 * n.sigma2;
  return n;
}

// Noise input matrix: T_s times the selector of the two highest-order states.
inline Mat<double> build_G(int d_x, double sample_time) {
  if (d_x != 2 && d_x != 4) throw ConfigError("noise input matrix supports 2 or 4 states");
  if (sample_time <= 0) throw ConfigError("noise input matrix needs a positive sample time");
  Mat<double> g = Mat<double>::Zero(d_x, 2);
  g(d_x - 2, 0) = sample_time;
  g(d_x - 1, 1) = sample_time;
  return g;
}

struct EkfBelief {
  Vec<double> x;
  Mat<double> P;
};

// Plain one-step time update for a known transition Jacobian.
inline EkfBelief ekf_time_update(const EkfBelief& belief, const Vec<double>& next_state,
                                 const Mat<double>& F, const Mat<double>& G,
                                 const Eigen::Matrix2d& Q) {
  EkfBelief next;
  next.x = next_state;
  Mat<double> p = F * belief.P * F.transpose() + G * Q * G.transpose();
  next.P = 0.5 * (p + p.transpose());
  if (!next.P.allFinite()) throw NumericError("non-finite covariance in time update");
  return next;
}

// --- row-encoded tape operations ----------------------------------------------

// Raw noise rows [s1_raw, s2_raw, rho_raw] to covariance rows
// [q11, q12, q21, q22].
template <class S>
ad::Var<S> process_noise_rows(ad::Var<S> raws) {
  const Eigen::Index n = raws.rows();
  ad::Var<S> sigma1 = ad::softplus(ad::block(raws, 0, 0, n, 1));
  ad::Var<S> sigma2 = ad::softplus(ad::block(raws, 0, 1, n, 1));
  ad::Var<S> rho = ad::softsign(ad::block(raws, 0, 2, n, 1));
  ad::Var<S> off = ad::mul(rho, ad::mul(sigma1, sigma2));
  return ad::concat_cols<S>({ad::square(sigma1), off, off, ad::square(sigma2)});
}

// Symmetrises row-encoded 2x2 matrices: [a, (b+c)/2, (b+c)/2, d].
template <class S>
ad::Var<S> symmetrize2x2_rows(ad::Var<S> p) {
  const Eigen::Index n = p.rows();
  ad::Var<S> a = ad::block(p, 0, 0, n, 1);
  ad::Var<S> b = ad::block(p, 0, 1, n, 1);
  ad::Var<S> c = ad::block(p, 0, 2, n, 1);
  ad::Var<S> d = ad::block(p, 0, 3, n, 1);
  ad::Var<S> m = ad::mul(ad::add(b, c), p.tape->constant(S(0.5)));
  return ad::concat_cols<S>({a, m, m, d});
}

// First-order update: P' = F P F^T + T_s^2 Q, symmetrised.
template <class S>
ad::Var<S> ekf_step_first_order(ad::Var<S> P, ad::Var<S> F, ad::Var<S> q_rows,
                                double sample_time) {
  const S h2 = static_cast<S>(sample_time * sample_time);
  ad::Var<S> fp = ad::bmm2x2(F, P);
  ad::Var<S> fpft = ad::bmm2x2(fp, F, false, true);
  ad::Var<S> next = ad::add(fpft, ad::mul(q_rows, P.tape->constant(h2)));
  return symmetrize2x2_rows(next);
}

template <class S>
struct CovBlocks {
  ad::Var<S> P11, P12, P22;  // n x 4 row-encoded blocks; P21 = P12^T implicitly
};

template <class S>
CovBlocks<S> zero_cov_blocks(ad::Tape<S>& tape, Eigen::Index n) {
  CovBlocks<S> p;
  p.P11 = tape.constant(Mat<S>(Mat<S>::Zero(n, 4)), "P11_0");
  p.P12 = tape.constant(Mat<S>(Mat<S>::Zero(n, 4)), "P12_0");
  p.P22 = tape.constant(Mat<S>(Mat<S>::Zero(n, 4)), "P22_0");
  return p;
}

// Second-order update with F = [[I, F12], [0, F22]] and noise on the
// velocity block only:
//   P11' = P11 + F12 P12^T + P12 F12^T + F12 P22 F12^T
//   P12' = (P12 + F12 P22) F22^T
//   P22' = F22 P22 F22^T + T_s^2 Q
template <class S>
CovBlocks<S> ekf_step_second_order(const CovBlocks<S>& P, ad::Var<S> F12, ad::Var<S> F22,
                                   ad::Var<S> q_rows, double sample_time) {
  const S h2 = static_cast<S>(sample_time * sample_time);
  ad::Tape<S>* tape = P.P11.tape;
  CovBlocks<S> next;
  ad::Var<S> f12_p12t = ad::bmm2x2(F12, P.P12, false, true);
  ad::Var<S> p12_f12t = ad::bmm2x2(P.P12, F12, false, true);
  ad::Var<S> f12_p22 = ad::bmm2x2(F12, P.P22);
  next.P11 = symmetrize2x2_rows(
      ad::add(ad::add(P.P11, ad::add(f12_p12t, p12_f12t)), ad::bmm2x2(f12_p22, F12, false, true)));
  next.P12 = ad::bmm2x2(ad::add(P.P12, f12_p22), F22, false, true);
  next.P22 = symmetrize2x2_rows(ad::add(ad::bmm2x2(ad::bmm2x2(F22, P.P22), F22, false, true),
                                        ad::mul(q_rows, tape->constant(h2))));
  return next;
}

// Adds the likelihood floor to the diagonal of row-encoded position blocks.
template <class S>
ad::Var<S> position_covariance_floor(ad::Var<S> p_rows, double floor = kCovarianceFloor) {
  Mat<S> add = Mat<S>::Zero(1, 4);
  add(0, 0) = static_cast<S>(floor);
  add(0, 3) = static_cast<S>(floor);
  return ad::add(p_rows, p_rows.tape->constant(std::move(add), "cov_floor"));
}

// --- whole-horizon propagation --------------------------------------------------

template <class S>
struct BeliefTrack {
  std::vector<ad::Var<S>> pos;              // per step, n x 2
  std::vector<ad::Var<S>> vel;              // per step, n x 2 (second order)
  std::vector<ad::Var<S>> P;                // first order: n x 4 per step
  std::vector<ad::Var<S>> P11, P12, P22;    // second order blocks per step
};

// Alternates motion steps and covariance updates from P0 = 0 over a horizon
// of per-step inputs and noise parameters.
template <class S>
BeliefTrack<S> propagate_component(ad::Tape<S>& tape, const OdeConfig& cfg,
                                   const BoundParams<S>& params, const std::string& prefix,
                                   ad::Var<S> pos0, ad::Var<S> vel0,
                                   const std::vector<ad::Var<S>>& inputs,
                                   const std::vector<ad::Var<S>>& noise_raws,
                                   ad::Var<S> static_onehot, double sample_time) {
  if (inputs.empty() || inputs.size() != noise_raws.size())
    throw ConfigError("propagation horizon must be >= 1 with one noise set per step");
  const Eigen::Index n = pos0.rows();
  BeliefTrack<S> track;
  ad::Var<S> pos = pos0;
  ad::Var<S> vel = vel0;
  ad::Var<S> P1 = tape.constant(Mat<S>(Mat<S>::Zero(n, 4)), "P0");
  CovBlocks<S> blocks = zero_cov_blocks(tape, n);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    OdeStep<S> step = ode_rk4_step(tape, cfg, params, prefix, pos, vel, inputs[k],
                                   static_onehot, sample_time, /*want_jacobian=*/true);
    ad::Var<S> q = process_noise_rows(noise_raws[k]);
    pos = step.pos;
    track.pos.push_back(pos);
    if (cfg.order == 1) {
      P1 = ekf_step_first_order(P1, step.F, q, sample_time);
      track.P.push_back(P1);
    } else {
      vel = step.vel;
      track.vel.push_back(vel);
      blocks = ekf_step_second_order(blocks, step.F12, step.F22, q, sample_time);
      track.P11.push_back(blocks.P11);
      track.P12.push_back(blocks.P12);
      track.P22.push_back(blocks.P22);
    }
  }
  return track;
}

// Assembles one unit's full covariance matrix from row-encoded block values.
inline Eigen::Matrix4d assemble_covariance(const Eigen::RowVector4d& p11,
                                           const Eigen::RowVector4d& p12,
                                           const Eigen::RowVector4d& p22) {
  Eigen::Matrix4d P;
  P.topLeftCorner<2, 2>() = unpack2x2(p11);
  P.topRightCorner<2, 2>() = unpack2x2(p12);
  P.bottomLeftCorner<2, 2>() = unpack2x2(p12).transpose();
  P.bottomRightCorner<2, 2>() = unpack2x2(p22);
  return P;
}

}  // namespace mtpgo
