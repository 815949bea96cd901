#pragma once

// The complete forecasting model: a graph-recurrent encoder-decoder whose
// per-step control and noise heads drive learned-ODE motion models with EKF
// covariance propagation, producing one Gaussian-mixture track per agent.
//
// Ablation switches:
//   use_encoder_gnn / use_decoder_gnn = false  strip all edges in that stage,
//     reducing the graph layers to independent per-agent transforms;
//   use_ekf = false  routes the raw noise heads directly to a bivariate
//     position covariance instead of propagating one;
//   use_ode = false  makes the control heads emit positions directly (a pure
//     mixture density network); it never touches the integrator and therefore
//     forces use_ekf = false.

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mtpgo/ekf.hpp"
#include "mtpgo/mixture.hpp"
#include "mtpgo/motion.hpp"
#include "mtpgo/recurrent.hpp"
#include "mtpgo/scene.hpp"

namespace mtpgo {

struct ModelConfig {
  int hidden_width = 32;
  int history_steps = 15;
  int future_steps = 25;
  int components = 8;
  int motion_order = 2;  // 1: position states, 2: position + velocity states
  GnnKind gnn_kind = GnnKind::kGatPlus;
  int gnn_heads = 1;
  int gnn_depth = 2;
  int ode_hidden_width = 16;
  bool use_encoder_gnn = true;
  bool use_decoder_gnn = true;
  bool use_ekf = true;
  bool use_ode = true;
  bool use_static = false;

  // Width of the state fed back into the decoder: the motion-model state, or
  // bare positions when the heads emit positions themselves.
  int state_dim() const { return use_ode ? (motion_order == 1 ? 2 : 4) : 2; }

  RecurrentConfig recurrent() const {
    RecurrentConfig cfg;
    cfg.hidden_width = hidden_width;
    cfg.history_steps = history_steps;
    cfg.components = components;
    cfg.state_dim = state_dim();
    cfg.gnn_kind = gnn_kind;
    cfg.gnn_heads = gnn_heads;
    cfg.gnn_depth = gnn_depth;
    cfg.encoder_edges = use_encoder_gnn;
    cfg.decoder_edges = use_decoder_gnn;
    return cfg;
  }

  OdeConfig ode() const {
    OdeConfig cfg;
    cfg.order = motion_order;
    cfg.hidden_width = ode_hidden_width;
    cfg.use_static = use_static;
    return cfg;
  }

  void check() const {
    if (use_ekf && !use_ode)
      throw ConfigError("covariance propagation requires the motion model (use_ode)");
    if (future_steps < 1) throw ConfigError("future horizon must be >= 1");
    recurrent().check();
    if (use_ode) ode().check();
  }
};

template <class S>
void register_model(ParameterSet<S>& ps, const std::string& prefix, const ModelConfig& cfg,
                    std::mt19937_64& rng) {
  cfg.check();
  register_recurrent(ps, prefix, cfg.recurrent(), rng);
  if (cfg.use_ode) register_ode_networks(ps, prefix + "ode.", cfg.ode(), rng);
}

namespace detail {

// The observed state of every agent at the current step, one component copy
// per block of d_s columns.
template <class S>
Mat<S> initial_states(const ModelConfig& cfg, const SceneSequence& scene) {
  const int n = scene.agent_count();
  const int d_s = cfg.state_dim();
  const Mat<double>& now = scene.features.back();
  Mat<S> init(n, cfg.components * d_s);
  for (int v = 0; v < n; ++v) {
    for (int j = 0; j < cfg.components; ++j) {
      init(v, j * d_s + 0) = static_cast<S>(now(v, kIdxX));
      init(v, j * d_s + 1) = static_cast<S>(now(v, kIdxY));
      if (d_s == 4) {
        init(v, j * d_s + 2) = static_cast<S>(now(v, kIdxVx));
        init(v, j * d_s + 3) = static_cast<S>(now(v, kIdxVy));
      }
    }
  }
  return init;
}

template <class S>
Mat<S> category_rows(const SceneSequence& scene) {
  Mat<S> rows(scene.agent_count(), kCategoryCount);
  for (int v = 0; v < scene.agent_count(); ++v)
    rows.row(v) = category_one_hot(scene.categories[static_cast<std::size_t>(v)]).template cast<S>();
  return rows;
}

// Ground-truth motion states for teacher forcing, steps 1 .. t_f - 1. An
// agent without ground-truth futures has nothing to force it with, so it
// stays frozen at its current state; its future-matrix columns are undefined
// and must never leak into the decoder.
template <class S>
std::vector<Mat<S>> teacher_states(const ModelConfig& cfg, const SceneSequence& scene) {
  const int n = scene.agent_count();
  const int d_s = cfg.state_dim();
  const Mat<double>& now = scene.features.back();
  std::vector<Mat<S>> states;
  for (int k = 0; k + 1 < cfg.future_steps; ++k) {
    Mat<S> st(n, d_s);
    for (int v = 0; v < n; ++v) {
      const bool tracked = scene.has_future[static_cast<std::size_t>(v)] != 0;
      st(v, 0) = static_cast<S>(tracked ? scene.future_x(k, v) : now(v, kIdxX));
      st(v, 1) = static_cast<S>(tracked ? scene.future_y(k, v) : now(v, kIdxY));
      if (d_s == 4) {
        st(v, 2) = static_cast<S>(tracked ? scene.future_vx(k, v) : now(v, kIdxVx));
        st(v, 3) = static_cast<S>(tracked ? scene.future_vy(k, v) : now(v, kIdxVy));
      }
    }
    states.push_back(std::move(st));
  }
  return states;
}

}  // namespace detail

template <class S>
struct ModelForward {
  MixtureTrack<S> track;    // per-component means and floored position covariances
  DecoderResult<S> decoder;  // raw head outputs and attention, for inspection
};

// Runs the model over one scene: encode the history, decode the horizon
// (teacher forcing or feedback rollout), then turn each component's control
// and noise sequences into a mean track with a floored position covariance.
template <class S>
ModelForward<S> model_forward(ad::Tape<S>& tape, const ModelConfig& cfg,
                              const BoundParams<S>& params, const std::string& prefix,
                              const SceneSequence& scene, DecodeMode mode) {
  cfg.check();
  if (mode == DecodeMode::kTeacherForcing && scene.future_steps < cfg.future_steps)
    throw ConfigError("teacher forcing needs ground-truth futures over the whole horizon");
  const int n = scene.agent_count();
  const int M = cfg.components;
  const int d_s = cfg.state_dim();
  const double sample_time = scene.sample_time;

  const EncoderResult<S> enc = encode(tape, cfg.recurrent(), params, prefix, scene);
  const Mat<S> mask = attention_mask(scene).cast<S>();
  const Mat<S> init = detail::initial_states<S>(cfg, scene);
  const ad::Var<S> onehot =
      cfg.use_static ? tape.constant(detail::category_rows<S>(scene), "static_onehot")
                     : ad::Var<S>{};

  std::vector<Mat<S>> teacher;
  RolloutFeedback<S> feedback;
  // Rollout feeds the decoder its own motion states; the running state is
  // shared across the per-step callback invocations.
  auto rollout_states = std::make_shared<ad::Var<S>>();
  if (mode == DecodeMode::kRollout) {
    if (cfg.use_ode) {
      *rollout_states = tape.constant(init, "rollout_init");
      const OdeConfig ode_cfg = cfg.ode();
      feedback = [&tape, &params, rollout_states, ode_cfg, onehot, prefix, n, M, d_s,
                  sample_time](int, const DecoderStep<S>& step) {
        std::vector<ad::Var<S>> parts;
        parts.reserve(static_cast<std::size_t>(M));
        for (int j = 0; j < M; ++j) {
          const ad::Var<S> pos = ad::block(*rollout_states, 0, j * d_s, n, 2);
          const ad::Var<S> vel =
              d_s == 4 ? ad::block(*rollout_states, 0, j * d_s + 2, n, 2) : ad::Var<S>{};
          const ad::Var<S> u_j = ad::block(step.u, 0, 2 * j, n, 2);
          const OdeStep<S> next = ode_rk4_step(tape, ode_cfg, params, prefix + "ode.", pos, vel,
                                               u_j, onehot, sample_time, /*want_jacobian=*/false);
          parts.push_back(d_s == 4 ? ad::concat_cols<S>({next.pos, next.vel}) : next.pos);
        }
        *rollout_states = ad::concat_cols(parts);
        return *rollout_states;
      };
    } else {
      // Pure mixture density network: the heads are the positions (d_s = 2,
      // so the head layout already matches the state layout).
      feedback = [](int, const DecoderStep<S>& step) { return step.u; };
    }
  } else {
    teacher = detail::teacher_states<S>(cfg, scene);
  }

  ModelForward<S> out;
  out.decoder = decode(tape, cfg.recurrent(), params, prefix, enc, mask, scene.distances.back(),
                       cfg.future_steps, init, mode, teacher, feedback);

  out.track.logits = out.decoder.logits;
  out.track.pos.resize(static_cast<std::size_t>(M));
  out.track.cov.resize(static_cast<std::size_t>(M));
  const ad::Var<S> init_var = tape.constant(init, "state0");
  for (int j = 0; j < M; ++j) {
    std::vector<ad::Var<S>> u_j, noise_j;
    u_j.reserve(out.decoder.steps.size());
    noise_j.reserve(out.decoder.steps.size());
    for (const DecoderStep<S>& step : out.decoder.steps) {
      u_j.push_back(ad::block(step.u, 0, 2 * j, n, 2));
      noise_j.push_back(ad::block(step.noise, 0, 3 * j, n, 3));
    }

    auto& pos_track = out.track.pos[static_cast<std::size_t>(j)];
    auto& cov_track = out.track.cov[static_cast<std::size_t>(j)];
    if (!cfg.use_ode) {
      for (int k = 0; k < cfg.future_steps; ++k) {
        pos_track.push_back(u_j[static_cast<std::size_t>(k)]);
        cov_track.push_back(position_covariance_floor(
            process_noise_rows(noise_j[static_cast<std::size_t>(k)])));
      }
      continue;
    }

    const ad::Var<S> pos0 = ad::block(init_var, 0, j * d_s, n, 2);
    const ad::Var<S> vel0 = d_s == 4 ? ad::block(init_var, 0, j * d_s + 2, n, 2) : ad::Var<S>{};
    if (cfg.use_ekf) {
      const BeliefTrack<S> belief = propagate_component(tape, cfg.ode(), params, prefix + "ode.",
                                                        pos0, vel0, u_j, noise_j, onehot,
                                                        sample_time);
      for (int k = 0; k < cfg.future_steps; ++k) {
        pos_track.push_back(belief.pos[static_cast<std::size_t>(k)]);
        cov_track.push_back(position_covariance_floor(
            cfg.motion_order == 1 ? belief.P[static_cast<std::size_t>(k)]
                                  : belief.P11[static_cast<std::size_t>(k)]));
      }
    } else {
      ad::Var<S> pos = pos0;
      ad::Var<S> vel = vel0;
      for (int k = 0; k < cfg.future_steps; ++k) {
        const OdeStep<S> step = ode_rk4_step(tape, cfg.ode(), params, prefix + "ode.", pos, vel,
                                             u_j[static_cast<std::size_t>(k)], onehot, sample_time,
                                             /*want_jacobian=*/false);
        pos = step.pos;
        if (d_s == 4) vel = step.vel;
        pos_track.push_back(pos);
        cov_track.push_back(position_covariance_floor(
            process_noise_rows(noise_j[static_cast<std::size_t>(k)])));
      }
    }
  }
  out.track.check(/*need_cov=*/true);
  return out;
}

// The same mixture restricted to a subset of agents (gathered rows), e.g. the
// agents that carry ground-truth futures.
template <class S>
MixtureTrack<S> restrict_track(const MixtureTrack<S>& track, const std::vector<int>& agents) {
  MixtureTrack<S> out;
  out.logits = ad::gather_rows(track.logits, agents);
  out.pos.resize(track.pos.size());
  out.cov.resize(track.cov.size());
  for (std::size_t j = 0; j < track.pos.size(); ++j) {
    for (const auto& p : track.pos[j]) out.pos[j].push_back(ad::gather_rows(p, agents));
    for (const auto& c : track.cov[j]) out.cov[j].push_back(ad::gather_rows(c, agents));
  }
  return out;
}

// Ground-truth future positions of the selected agents as tape constants,
// one n x 2 entry per horizon step.
template <class S>
std::vector<ad::Var<S>> truth_positions(ad::Tape<S>& tape, const SceneSequence& scene,
                                        const std::vector<int>& agents, int horizon) {
  if (horizon < 1 || horizon > scene.future_steps)
    throw ConfigError("truth horizon exceeds the scene's future steps");
  std::vector<ad::Var<S>> truth;
  truth.reserve(static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) {
    Mat<S> st(static_cast<Eigen::Index>(agents.size()), 2);
    for (std::size_t i = 0; i < agents.size(); ++i) {
      st(static_cast<Eigen::Index>(i), 0) = static_cast<S>(scene.future_x(k, agents[i]));
      st(static_cast<Eigen::Index>(i), 1) = static_cast<S>(scene.future_y(k, agents[i]));
    }
    truth.push_back(tape.constant(std::move(st), "truth"));
  }
  return truth;
}

}  // namespace mtpgo
