#pragma once

// Graph-structured sequence model: a GRU whose input- and hidden-side linear
// maps are graph network stacks, run over the observed steps of a scene
// (encoder) and over the prediction horizon (decoder). The decoder reads the
// encoder memory through a learned temporal attention distribution and emits,
// per agent, horizon step, and mixture component, a motion input u and raw
// process-noise parameters, plus one set of mixture logits per agent.
//
// Column layouts (component-major):
//   u      n x 2M : [u_x, u_y] per component
//   noise  n x 3M : [s1_raw, s2_raw, rho_raw] per component
//   states n x M*d_s : motion state per component (d_s = 2 or 4)

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/errors.hpp"
#include "mtpgo/gnn.hpp"
#include "mtpgo/gradcheck.hpp"
#include "mtpgo/parameters.hpp"
#include "mtpgo/scene.hpp"

namespace mtpgo {

inline constexpr double kEdgeKernelInit = 10.0;  // initial kernel bandwidth (m)

struct RecurrentConfig {
  int feature_dim = kFeatureDim;  // input width of the encoder f-side
  int hidden_width = 32;          // d_h
  int history_steps = 15;         // t_h; the memory holds t_h + 1 slots
  int components = 8;             // M
  int state_dim = 4;              // d_s of the fed-back motion state (2 or 4)
  GnnKind gnn_kind = GnnKind::kGatPlus;
  int gnn_heads = 1;
  int gnn_depth = 2;
  bool encoder_edges = true;  // false: encoder graphs keep no edges
  bool decoder_edges = true;  // false: decoder graph keeps no edges

  void check() const {
    if (feature_dim < 1 || hidden_width < 1) throw ConfigError("recurrent widths must be positive");
    if (history_steps < 1) throw ConfigError("history_steps must be >= 1");
    if (components < 1) throw ConfigError("components must be >= 1");
    if (state_dim != 2 && state_dim != 4) throw ConfigError("state_dim must be 2 or 4");
    if (gnn_heads < 1 || gnn_depth < 1) throw ConfigError("gnn stack shape must be positive");
  }

  int memory_slots() const { return history_steps + 1; }

  GnnStackConfig stack(int in_width) const {
    GnnStackConfig s;
    s.kind = gnn_kind;
    s.in_width = in_width;
    s.hidden_width = hidden_width;
    s.out_width = 3 * hidden_width;
    s.heads = gnn_heads;
    s.depth = gnn_depth;
    return s;
  }
};

template <class S>
void register_recurrent(ParameterSet<S>& ps, const std::string& prefix,
                        const RecurrentConfig& cfg, std::mt19937_64& rng) {
  cfg.check();
  const int d = cfg.hidden_width;
  ps.add(prefix + "sigma_e", 1, 1).setConstant(S(kEdgeKernelInit));
  ps.add(prefix + "h0", 1, d);  // learned initial hidden state
  register_gnn_stack(ps, prefix + "enc.f.", cfg.stack(cfg.feature_dim), rng);
  register_gnn_stack(ps, prefix + "enc.h.", cfg.stack(d), rng);
  register_gnn_stack(ps, prefix + "dec.f.", cfg.stack(d), rng);
  register_gnn_stack(ps, prefix + "dec.h.", cfg.stack(d), rng);
  init_glorot(ps.add(prefix + "dec.Wx", cfg.components * cfg.state_dim, d), rng);
  ps.add(prefix + "dec.bx", 1, d);
  init_glorot(ps.add(prefix + "dec.Walpha", 2 * d, cfg.memory_slots()), rng);
  ps.add(prefix + "dec.balpha", 1, cfg.memory_slots());
  init_glorot(ps.add(prefix + "dec.Wfhat", 2 * d, d), rng);
  ps.add(prefix + "dec.bfhat", 1, d);
  init_glorot(ps.add(prefix + "dec.Wu", d, 2 * cfg.components), rng);
  ps.add(prefix + "dec.bu", 1, 2 * cfg.components);
  init_glorot(ps.add(prefix + "dec.Wq", d, 3 * cfg.components), rng);
  ps.add(prefix + "dec.bq", 1, 3 * cfg.components);
  init_glorot(ps.add(prefix + "pi.W", d, cfg.components), rng);
  ps.add(prefix + "pi.b", 1, cfg.components);
}

// Edge weights exp(-(d/sigma)^2) on the tape, so the kernel bandwidth learns.
template <class S>
ad::Var<S> kernel_weights_var(ad::Tape<S>& tape, const Mat<S>& distances, ad::Var<S> sigma) {
  return ad::exp(ad::neg(ad::square(ad::div(tape.constant(distances), sigma))));
}

// One gated update from precomputed input-side and hidden-side intermediates,
// each laid out as [reset | update | candidate] thirds of width d_h.
template <class S>
ad::Var<S> gru_cell(ad::Tape<S>& tape, ad::Var<S> f_input, ad::Var<S> h_input,
                    ad::Var<S> h_prev) {
  const Eigen::Index n = h_prev.rows(), d = h_prev.cols();
  if (f_input.rows() != n || h_input.rows() != n || f_input.cols() != 3 * d ||
      h_input.cols() != 3 * d)
    throw ConfigError("gru_cell intermediate widths must be three times the hidden width");
  const ad::Var<S> r =
      ad::sigmoid(ad::add(ad::block(f_input, 0, 0, n, d), ad::block(h_input, 0, 0, n, d)));
  const ad::Var<S> z =
      ad::sigmoid(ad::add(ad::block(f_input, 0, d, n, d), ad::block(h_input, 0, d, n, d)));
  const ad::Var<S> cand = ad::tanh(
      ad::add(ad::block(f_input, 0, 2 * d, n, d), ad::mul(r, ad::block(h_input, 0, 2 * d, n, d))));
  const ad::Var<S> one = tape.constant(Mat<S>::Ones(1, 1));
  return ad::add(ad::mul(ad::sub(one, z), cand), ad::mul(z, h_prev));
}

template <class S>
struct EncoderResult {
  std::vector<ad::Var<S>> memory;  // t_h + 1 slots, each n x d_h
  ad::Var<S> final_hidden;         // n x d_h
};

// 0/1 attention mask: slot l of agent v is usable iff the agent was observed
// at step l.
inline Mat<double> attention_mask(const SceneSequence& scene) {
  const int n = scene.agent_count();
  Mat<double> mask = Mat<double>::Zero(n, scene.observed_steps());
  for (int l = 0; l < scene.observed_steps(); ++l)
    for (int v = 0; v < n; ++v)
      if (scene.valid[static_cast<std::size_t>(l)][static_cast<std::size_t>(v)]) mask(v, l) = 1.0;
  return mask;
}

// Runs the graph-GRU over the observed steps. At each step only the agents
// observed there participate in the graph update; the others keep their
// running hidden state, and their memory slot holds the learned initial
// vector so attention can mask it out.
template <class S>
EncoderResult<S> encode(ad::Tape<S>& tape, const RecurrentConfig& cfg,
                        const BoundParams<S>& params, const std::string& prefix,
                        const SceneSequence& scene) {
  cfg.check();
  if (scene.history_steps != cfg.history_steps)
    throw ConfigError("scene history length does not match the model configuration");
  const int n = scene.agent_count();
  const ad::Var<S> sigma = params[prefix + "sigma_e"];
  const ad::Var<S> h_init =
      ad::matmul(tape.constant(Mat<S>::Ones(n, 1)), params[prefix + "h0"]);
  const GnnStackConfig f_stack = cfg.stack(cfg.feature_dim);
  const GnnStackConfig h_stack = cfg.stack(cfg.hidden_width);

  EncoderResult<S> out;
  ad::Var<S> h = h_init;
  for (int i = 0; i < scene.observed_steps(); ++i) {
    const std::vector<int> valid = scene.valid_indices(i);
    if (valid.empty()) {
      out.memory.push_back(h_init);
      continue;
    }
    const int m = static_cast<int>(valid.size());
    Mat<S> feats(m, cfg.feature_dim);
    Mat<S> dist(m, m);
    for (int a = 0; a < m; ++a) {
      feats.row(a) =
          scene.features[static_cast<std::size_t>(i)].row(valid[static_cast<std::size_t>(a)]).template cast<S>();
      for (int b = 0; b < m; ++b)
        dist(a, b) = S(scene.distances[static_cast<std::size_t>(i)](
            valid[static_cast<std::size_t>(a)], valid[static_cast<std::size_t>(b)]));
    }
    const Mat<S> adj = cfg.encoder_edges ? Mat<S>(complete_adjacency(m).template cast<S>())
                                         : Mat<S>(Mat<S>::Zero(m, m));
    const ad::Var<S> weights = kernel_weights_var(tape, dist, sigma);
    const ad::Var<S> f_in = gnn_stack_forward(tape, f_stack, params, prefix + "enc.f.",
                                              tape.constant(feats), weights, adj);
    const ad::Var<S> h_sub = ad::gather_rows(h, valid);
    const ad::Var<S> h_in =
        gnn_stack_forward(tape, h_stack, params, prefix + "enc.h.", h_sub, weights, adj);
    const ad::Var<S> h_up = gru_cell(tape, f_in, h_in, h_sub);
    h = ad::scatter_rows(h, h_up, valid);
    out.memory.push_back(ad::scatter_rows(h_init, h_up, valid));
  }
  out.final_hidden = h;
  return out;
}

template <class S>
struct AttentionResult {
  ad::Var<S> context;          // n x d_h, convex combination of memory slots
  ad::Var<S> weights;          // n x (t_h + 1), rows sum to 1
  ad::Var<S> state_embedding;  // n x d_h, shared with the decoder input
};

// Attention over the encoder memory: the query itself is the logit vector
// over history slots; masked slots are excluded from the softmax.
template <class S>
AttentionResult<S> temporal_attention(ad::Tape<S>& tape, const RecurrentConfig& cfg,
                                      const BoundParams<S>& params, const std::string& prefix,
                                      ad::Var<S> h_dec_prev, ad::Var<S> prev_states,
                                      const EncoderResult<S>& memory, const Mat<S>& mask) {
  if (static_cast<int>(memory.memory.size()) != cfg.memory_slots())
    throw ConfigError("encoder memory slot count does not match the configuration");
  if (prev_states.cols() != cfg.components * cfg.state_dim)
    throw ConfigError("previous-state width must be components * state_dim");
  const Eigen::Index n = h_dec_prev.rows();
  AttentionResult<S> out;
  out.state_embedding =
      ad::add(ad::matmul(prev_states, params[prefix + "dec.Wx"]), params[prefix + "dec.bx"]);
  const ad::Var<S> q =
      ad::add(ad::matmul(ad::concat_cols<S>({h_dec_prev, out.state_embedding}),
                         params[prefix + "dec.Walpha"]),
              params[prefix + "dec.balpha"]);
  out.weights = ad::masked_softmax_rows(q, tape.constant(mask));
  ad::Var<S> context;
  for (int l = 0; l < cfg.memory_slots(); ++l) {
    const ad::Var<S> term = ad::mul(ad::block(out.weights, 0, l, n, 1),
                                    memory.memory[static_cast<std::size_t>(l)]);
    context = l == 0 ? term : ad::add(context, term);
  }
  out.context = context;
  return out;
}

enum class DecodeMode { kTeacherForcing, kRollout };

template <class S>
struct DecoderStep {
  ad::Var<S> u;          // n x 2M motion inputs
  ad::Var<S> noise;      // n x 3M raw process-noise parameters
  ad::Var<S> attention;  // n x (t_h + 1) attention weights
};

template <class S>
struct DecoderResult {
  std::vector<DecoderStep<S>> steps;  // t_f entries
  ad::Var<S> logits;                  // n x M mixture logits (horizon-constant)
};

// Feedback callback for rollout decoding: given the just-emitted step k
// (1-based), return the n x (M * d_s) motion states at time t + k.
template <class S>
using RolloutFeedback = std::function<ad::Var<S>(int, const DecoderStep<S>&)>;

// Tiles one shared state matrix (n x d_s) across all M component slots.
template <class S>
Mat<S> tile_components(const Mat<S>& state, int components) {
  Mat<S> tiled(state.rows(), state.cols() * components);
  for (int j = 0; j < components; ++j)
    tiled.middleCols(j * state.cols(), state.cols()) = state;
  return tiled;
}

// Unrolls the decoder over the horizon on the frozen graph of the current
// step. `initial_states` holds the observed motion state at time t tiled over
// components. Teacher forcing feeds ground-truth states (tiled internally);
// rollout asks the callback for the predicted states after every step.
template <class S>
DecoderResult<S> decode(ad::Tape<S>& tape, const RecurrentConfig& cfg,
                        const BoundParams<S>& params, const std::string& prefix,
                        const EncoderResult<S>& memory,
                        const std::type_identity_t<Mat<S>>& attention_mask_matrix,
                        const std::type_identity_t<Mat<S>>& distances, int future_steps,
                        const std::type_identity_t<Mat<S>>& initial_states, DecodeMode mode,
                        const std::type_identity_t<std::vector<Mat<S>>>& teacher_states,
                        const std::type_identity_t<RolloutFeedback<S>>& feedback) {
  cfg.check();
  if (future_steps < 1) throw ConfigError("future_steps must be >= 1");
  const int n = static_cast<int>(distances.rows());
  if (initial_states.rows() != n || initial_states.cols() != cfg.components * cfg.state_dim)
    throw ConfigError("initial decoder states must be n x (components * state_dim)");
  if (mode == DecodeMode::kRollout && !feedback)
    throw ConfigError("rollout decoding requires a motion-model feedback callback");
  if (mode == DecodeMode::kTeacherForcing &&
      static_cast<int>(teacher_states.size()) < future_steps - 1)
    throw ConfigError("teacher forcing needs ground-truth states for every step but the last");

  const ad::Var<S> sigma = params[prefix + "sigma_e"];
  const Mat<S> adj = cfg.decoder_edges ? Mat<S>(complete_adjacency(n).template cast<S>())
                                       : Mat<S>(Mat<S>::Zero(n, n));
  const ad::Var<S> weights = kernel_weights_var(tape, distances, sigma);
  const GnnStackConfig d_stack = cfg.stack(cfg.hidden_width);

  DecoderResult<S> out;
  ad::Var<S> h_dec = memory.final_hidden;
  ad::Var<S> prev = tape.constant(initial_states);
  for (int k = 1; k <= future_steps; ++k) {
    const AttentionResult<S> att = temporal_attention(tape, cfg, params, prefix, h_dec, prev,
                                                      memory, attention_mask_matrix);
    const ad::Var<S> fhat = ad::leaky_relu(
        ad::add(ad::matmul(ad::concat_cols<S>({att.context, att.state_embedding}),
                           params[prefix + "dec.Wfhat"]),
                params[prefix + "dec.bfhat"]),
        S(kActivationLeakySlope));
    const ad::Var<S> f_in =
        gnn_stack_forward(tape, d_stack, params, prefix + "dec.f.", fhat, weights, adj);
    const ad::Var<S> h_in =
        gnn_stack_forward(tape, d_stack, params, prefix + "dec.h.", h_dec, weights, adj);
    h_dec = gru_cell(tape, f_in, h_in, h_dec);

    DecoderStep<S> step;
    step.u = ad::add(ad::matmul(h_dec, params[prefix + "dec.Wu"]), params[prefix + "dec.bu"]);
    step.noise = ad::add(ad::matmul(h_dec, params[prefix + "dec.Wq"]), params[prefix + "dec.bq"]);
    step.attention = att.weights;
    out.steps.push_back(step);

    if (k < future_steps) {
      if (mode == DecodeMode::kTeacherForcing) {
        const Mat<S>& truth = teacher_states[static_cast<std::size_t>(k - 1)];
        if (truth.rows() != n || truth.cols() != cfg.state_dim)
          throw ConfigError("teacher-forcing states must be n x state_dim");
        prev = tape.constant(tile_components(truth, cfg.components));
      } else {
        prev = feedback(k, step);
        if (prev.rows() != n || prev.cols() != cfg.components * cfg.state_dim)
          throw ConfigError("rollout feedback must return n x (components * state_dim) states");
      }
    }
  }
  out.logits =
      ad::add(ad::matmul(memory.final_hidden, params[prefix + "pi.W"]), params[prefix + "pi.b"]);
  return out;
}

}  // namespace mtpgo
