#pragma once

// Mini-batch training driver: a bias-corrected first-order optimizer with
// global-norm gradient clipping minimizes the scheduled mixture objective
// under teacher forcing, records one structured history line per epoch,
// aborts on divergence while keeping the last good checkpoint, and evaluates
// rollout forecasts (plus constant-velocity / constant-acceleration
// baselines) through a common per-scene forecaster interface.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtpgo/gradcheck.hpp"
#include "mtpgo/metrics.hpp"
#include "mtpgo/model.hpp"
#include "mtpgo/parameters.hpp"

namespace mtpgo {

// --- training configuration -----------------------------------------------------

// Every field is settable from a configuration file under exactly these
// names; `gnn_kind` holds the textual layer name so the file syntax and the
// in-memory form coincide.
struct TrainConfig {
  int epochs = 40;
  int batch_size = 128;
  double learning_rate = 3e-4;
  int hidden_width = 32;
  std::string gnn_kind = "gatplus";
  int gnn_heads = 1;
  int gnn_depth = 2;
  int ode_hidden_width = 16;
  int motion_order = 2;
  int components = 8;
  double sample_time = 0.2;
  int history_steps = 15;
  int future_steps = 25;
  std::uint64_t seed = 0;
  bool use_encoder_gnn = true;
  bool use_decoder_gnn = true;
  bool use_ekf = true;
  bool use_ode = true;
  bool use_static = false;

  ModelConfig model() const {
    ModelConfig m;
    m.hidden_width = hidden_width;
    m.history_steps = history_steps;
    m.future_steps = future_steps;
    m.components = components;
    m.motion_order = motion_order;
    m.gnn_kind = gnn_kind_from_name(gnn_kind);
    m.gnn_heads = gnn_heads;
    m.gnn_depth = gnn_depth;
    m.ode_hidden_width = ode_hidden_width;
    m.use_encoder_gnn = use_encoder_gnn;
    m.use_decoder_gnn = use_decoder_gnn;
    m.use_ekf = use_ekf;
    m.use_ode = use_ode;
    m.use_static = use_static;
    return m;
  }

  void check() const {
    if (epochs < 8)
      throw ConfigError("training needs at least eight epochs so the objective schedule has "
                        "nonzero phases");
    if (components < 1) throw ConfigError("training needs at least one mixture component");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
    if (sample_time <= 0) throw ConfigError("sample time must be positive");
    model().check();
  }
};

// Applies one configuration key; returns false when the key does not name a
// TrainConfig field (the caller decides whether that is an error).
inline bool apply_train_key(TrainConfig& cfg, const std::string& key,
                            const nlohmann::json& value) {
  try {
    if (key == "epochs") cfg.epochs = value.get<int>();
    else if (key == "batch_size") cfg.batch_size = value.get<int>();
    else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
    else if (key == "hidden_width") cfg.hidden_width = value.get<int>();
    else if (key == "gnn_kind") cfg.gnn_kind = value.get<std::string>();
    else if (key == "gnn_heads") cfg.gnn_heads = value.get<int>();
    else if (key == "gnn_depth") cfg.gnn_depth = value.get<int>();
    else if (key == "ode_hidden_width") cfg.ode_hidden_width = value.get<int>();
    else if (key == "motion_order") cfg.motion_order = value.get<int>();
    else if (key == "components") cfg.components = value.get<int>();
    else if (key == "sample_time") cfg.sample_time = value.get<double>();
    else if (key == "history_steps") cfg.history_steps = value.get<int>();
    else if (key == "future_steps") cfg.future_steps = value.get<int>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "use_encoder_gnn") cfg.use_encoder_gnn = value.get<bool>();
    else if (key == "use_decoder_gnn") cfg.use_decoder_gnn = value.get<bool>();
    else if (key == "use_ekf") cfg.use_ekf = value.get<bool>();
    else if (key == "use_ode") cfg.use_ode = value.get<bool>();
    else if (key == "use_static") cfg.use_static = value.get<bool>();
    else return false;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for configuration key '" + key + "': " + e.what());
  }
  return true;
}

inline nlohmann::json train_config_json(const TrainConfig& cfg) {
  return nlohmann::json{{"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"learning_rate", cfg.learning_rate},
                        {"hidden_width", cfg.hidden_width},
                        {"gnn_kind", cfg.gnn_kind},
                        {"gnn_heads", cfg.gnn_heads},
                        {"gnn_depth", cfg.gnn_depth},
                        {"ode_hidden_width", cfg.ode_hidden_width},
                        {"motion_order", cfg.motion_order},
                        {"components", cfg.components},
                        {"sample_time", cfg.sample_time},
                        {"history_steps", cfg.history_steps},
                        {"future_steps", cfg.future_steps},
                        {"seed", cfg.seed},
                        {"use_encoder_gnn", cfg.use_encoder_gnn},
                        {"use_decoder_gnn", cfg.use_decoder_gnn},
                        {"use_ekf", cfg.use_ekf},
                        {"use_ode", cfg.use_ode},
                        {"use_static", cfg.use_static}};
}

// Overlays the given keys onto an existing configuration; unknown keys are
// rejected so typos cannot silently fall back to defaults.
inline void apply_train_json(TrainConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a key/value object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!apply_train_key(cfg, it.key(), it.value()))
      throw ConfigError("unknown configuration key '" + it.key() + "'");
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  apply_train_json(cfg, j);
  return cfg;
}

// --- optimizer --------------------------------------------------------------------

inline constexpr double kGradClipNorm = 10.0;

// Scales the vector down to the given maximum Euclidean norm; returns the
// norm before clipping.
inline double clip_global_norm(Vec<double>& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm && norm > 0.0) grad *= max_norm / norm;
  return norm;
}

// First-order optimizer with bias-corrected exponential moment estimates
// (decay 0.9 / 0.999, epsilon 1e-8).
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index size, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon),
        m_(Vec<double>::Zero(size)), v_(Vec<double>::Zero(size)) {
    if (size < 1) throw ConfigError("optimizer needs at least one parameter");
    if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
  }

  void step(Vec<double>& theta, const Vec<double>& grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size())
      throw ConfigError("optimizer step size mismatch");
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    theta -= (lr_ * (m_ / bc1).array() / ((v_ / bc2).array().sqrt() + epsilon_)).matrix();
  }

  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  long t_ = 0;
  Vec<double> m_, v_;
};

// --- per-scene losses ---------------------------------------------------------------

namespace detail {

inline void check_scene_window(const TrainConfig& cfg, const SceneSequence& scene) {
  if (scene.history_steps != cfg.history_steps || scene.future_steps < cfg.future_steps)
    throw ConfigError("scene window does not match the training configuration");
  if (std::abs(scene.sample_time - cfg.sample_time) > 1e-9)
    throw ConfigError("scene sample time does not match the training configuration");
}

}  // namespace detail

struct SceneLoss {
  double value = 0.0;  // loss summed over the scene's ground-truth agents
  int agents = 0;      // number of agents contributing to the loss
};

// Scheduled teacher-forcing loss of one scene over the agents that carry
// ground-truth futures. When `grad_accum` is given, parameter gradients are
// accumulated onto it in flattened registration order.
inline SceneLoss scene_scheduled_loss(const TrainConfig& cfg, const ParameterSet<double>& params,
                                      const SceneSequence& scene, const LossRecipe& recipe,
                                      Vec<double>* grad_accum = nullptr) {
  detail::check_scene_window(cfg, scene);
  const std::vector<int> agents = scene.loss_indices();
  if (agents.empty()) return {};

  ad::Tape<double> tape;
  BoundParams<double> bound(tape, params);
  const ModelConfig mc = cfg.model();
  ModelForward<double> fwd =
      model_forward(tape, mc, bound, "", scene, DecodeMode::kTeacherForcing);
  const MixtureTrack<double> sub = restrict_track(fwd.track, agents);
  const std::vector<ad::Var<double>> truth =
      truth_positions(tape, scene, agents, mc.future_steps);
  ad::Var<double> loss = scheduled_loss(sub, truth, recipe);

  SceneLoss out{loss.scalar(), static_cast<int>(agents.size())};
  if (grad_accum != nullptr && std::isfinite(out.value)) {
    tape.backward(loss);
    Eigen::Index k = 0;
    for (const auto& name : params.names()) {
      const Mat<double> g = tape.gradient(bound[name]);
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j) (*grad_accum)(k++) += g(i, j);
    }
  }
  return out;
}

// Per-agent mixture likelihood loss over a held-out set, teacher-forced like
// training so the number is comparable to the training objective.
inline double validation_nll(const TrainConfig& cfg, const ParameterSet<double>& params,
                             const std::vector<SceneSequence>& scenes) {
  LossRecipe nll_recipe;
  nll_recipe.phase = LossPhase::kNll;
  nll_recipe.winners = 1;
  nll_recipe.blend = 0.0;
  double total = 0.0;
  long agents = 0;
  for (const SceneSequence& scene : scenes) {
    const SceneLoss part = scene_scheduled_loss(cfg, params, scene, nll_recipe, nullptr);
    total += part.value;
    agents += part.agents;
  }
  if (agents == 0) throw ConfigError("validation set has no ground-truth agents");
  return total / static_cast<double>(agents);
}

// --- history and checkpoints ----------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // "ewta", "blend", or "nll"
  int winners = 1;
  double blend = 0.0;
  double train_loss = 0.0;  // per-agent scheduled loss averaged over batches
  double val_nll = std::numeric_limits<double>::quiet_NaN();  // NaN when no validation set
  double grad_norm = 0.0;   // largest pre-clip gradient norm seen this epoch

  bool operator==(const EpochRecord&) const = default;
};

inline const char* phase_name(LossPhase phase) {
  switch (phase) {
    case LossPhase::kEwta: return "ewta";
    case LossPhase::kBlend: return "blend";
    case LossPhase::kNll: return "nll";
  }
  return "unknown";
}

inline nlohmann::json epoch_record_json(const EpochRecord& rec) {
  nlohmann::json j{{"epoch", rec.epoch},       {"phase", rec.phase},
                   {"winners", rec.winners},   {"blend", rec.blend},
                   {"train_loss", rec.train_loss}, {"grad_norm", rec.grad_norm}};
  if (std::isfinite(rec.val_nll)) j["val_nll"] = rec.val_nll;
  else j["val_nll"] = nullptr;
  return j;
}

inline EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  try {
    EpochRecord rec;
    rec.epoch = j.at("epoch").get<int>();
    rec.phase = j.at("phase").get<std::string>();
    rec.winners = j.at("winners").get<int>();
    rec.blend = j.at("blend").get<double>();
    rec.train_loss = j.at("train_loss").get<double>();
    rec.grad_norm = j.at("grad_norm").get<double>();
    if (j.at("val_nll").is_number()) rec.val_nll = j.at("val_nll").get<double>();
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed epoch record: ") + e.what());
  }
}

// One line-delimited structured record per epoch, for the training log.
inline std::string epoch_record_line(const EpochRecord& rec) {
  return epoch_record_json(rec).dump();
}

inline std::string rng_state_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw DataError("invalid random generator state");
  return rng;
}

// A resumable training artifact: the parameters plus everything needed to
// reproduce or continue the run.
struct Checkpoint {
  TrainConfig config;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;
  std::string rng_state;
  ParameterSet<double> params;
};

// Writes the parameter file at `path` (binary, bit-exact) and the run
// metadata beside it at `path + ".meta.json"`.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  save_parameters(ck.params, path);
  nlohmann::json meta;
  meta["format"] = 1;
  meta["config"] = train_config_json(ck.config);
  meta["epoch"] = ck.epoch;
  meta["rng_state"] = ck.rng_state;
  nlohmann::json hist = nlohmann::json::array();
  for (const EpochRecord& rec : ck.history) hist.push_back(epoch_record_json(rec));
  meta["history"] = std::move(hist);
  std::ofstream out(path + ".meta.json");
  if (!out) throw DataError("cannot open '" + path + ".meta.json' for writing");
  out << meta.dump(2) << '\n';
  if (!out) throw DataError("write failure while saving '" + path + ".meta.json'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ck;
  ck.params = load_parameters<double>(path);
  std::ifstream in(path + ".meta.json");
  if (!in) throw DataError("cannot open '" + path + ".meta.json' for reading");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
    ck.config = train_config_from_json(meta.at("config"));
    ck.epoch = meta.at("epoch").get<int>();
    ck.rng_state = meta.at("rng_state").get<std::string>();
    for (const nlohmann::json& rec : meta.at("history"))
      ck.history.push_back(epoch_record_from_json(rec));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint metadata '" + path + ".meta.json': " + e.what());
  }
  return ck;
}

// --- training loop -----------------------------------------------------------------

struct TrainOutcome {
  Checkpoint checkpoint;  // state after the last epoch that finished cleanly
  bool diverged = false;
  std::string note;  // diagnostic when diverged
};

// Trains a freshly initialised model. Per epoch: the objective schedule fixes
// the loss recipe, scenes are shuffled and batched, each batch accumulates
// the per-agent mean gradient which is clipped and applied; a non-finite
// loss or gradient (or a numeric failure inside a forward pass) aborts
// training and the last good checkpoint is returned. When `log` is given,
// one structured record per epoch is written to it.
inline TrainOutcome train(const TrainConfig& cfg, const std::vector<SceneSequence>& train_scenes,
                          const std::vector<SceneSequence>& val_scenes,
                          std::ostream* log = nullptr) {
  cfg.check();
  if (train_scenes.empty()) throw ConfigError("training needs at least one scene");
  for (const SceneSequence& scene : train_scenes) detail::check_scene_window(cfg, scene);
  for (const SceneSequence& scene : val_scenes) detail::check_scene_window(cfg, scene);

  const ModelConfig mc = cfg.model();
  std::mt19937_64 rng(cfg.seed);
  ParameterSet<double> params;
  register_model(params, "", mc, rng);
  AdamOptimizer opt(params.total_size(), cfg.learning_rate);

  TrainOutcome out;
  out.checkpoint.config = cfg;
  out.checkpoint.params = params;
  out.checkpoint.rng_state = rng_state_string(rng);

  std::vector<std::size_t> order(train_scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LossRecipe recipe = schedule_step(cfg.epochs, cfg.components, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    double epoch_grad_norm = 0.0;
    int batches = 0;
    std::string failure;
    for (std::size_t start = 0; start < order.size() && failure.empty();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Vec<double> grad = Vec<double>::Zero(params.total_size());
      double batch_value = 0.0;
      int batch_agents = 0;
      try {
        for (std::size_t s = start; s < stop; ++s) {
          const SceneLoss part =
              scene_scheduled_loss(cfg, params, train_scenes[order[s]], recipe, &grad);
          batch_value += part.value;
          batch_agents += part.agents;
        }
      } catch (const NumericError& e) {
        failure = e.what();
        break;
      }
      if (batch_agents == 0) continue;

      const double mean_loss = batch_value / batch_agents;
      grad /= static_cast<double>(batch_agents);
      if (!std::isfinite(mean_loss) || !grad.allFinite()) {
        failure = "non-finite loss or gradient";
        break;
      }
      epoch_grad_norm = std::max(epoch_grad_norm, clip_global_norm(grad, kGradClipNorm));
      Vec<double> theta = params.flatten();
      opt.step(theta, grad);
      params.unflatten(theta);
      epoch_loss += mean_loss;
      ++batches;
    }
    if (!failure.empty()) {
      out.diverged = true;
      out.note = "aborted in epoch " + std::to_string(epoch) + ": " + failure;
      break;
    }
    if (batches == 0) throw ConfigError("no scene contributed ground-truth agents");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase_name(recipe.phase);
    rec.winners = recipe.winners;
    rec.blend = recipe.blend;
    rec.train_loss = epoch_loss / batches;
    rec.grad_norm = epoch_grad_norm;
    if (!val_scenes.empty()) {
      try {
        rec.val_nll = validation_nll(cfg, params, val_scenes);
      } catch (const NumericError& e) {
        out.diverged = true;
        out.note = "aborted in epoch " + std::to_string(epoch) + " validation: " + e.what();
        break;
      }
      if (!std::isfinite(rec.val_nll)) {
        out.diverged = true;
        out.note = "aborted in epoch " + std::to_string(epoch) + ": non-finite validation loss";
        break;
      }
    }

    out.checkpoint.epoch = epoch + 1;
    out.checkpoint.history.push_back(rec);
    out.checkpoint.params = params;
    out.checkpoint.rng_state = rng_state_string(rng);
    if (log != nullptr) *log << epoch_record_line(rec) << '\n';
  }
  return out;
}

// --- evaluation ------------------------------------------------------------------------

// A forecaster maps one scene and a set of agent indices to per-agent
// mixture forecasts over a fixed horizon. The trained model and the physics
// baselines all evaluate through this interface.
using SceneForecaster =
    std::function<std::vector<GmmForecast>(const SceneSequence&, const std::vector<int>&)>;

// Ground-truth future positions of one agent as a horizon x 2 matrix.
inline Mat<double> agent_truth(const SceneSequence& scene, int agent, int horizon) {
  if (horizon < 1 || horizon > scene.future_steps)
    throw ConfigError("truth horizon exceeds the scene's future steps");
  Mat<double> truth(horizon, 2);
  for (int k = 0; k < horizon; ++k) {
    truth(k, 0) = scene.future_x(k, agent);
    truth(k, 1) = scene.future_y(k, agent);
  }
  return truth;
}

// Scores a forecaster over every scene's ground-truth agents; scenes without
// any are skipped. Confidence intervals need at least two contributing
// scenes.
inline MetricsReport evaluate_forecaster(const SceneForecaster& forecaster,
                                         const std::vector<SceneSequence>& scenes, int horizon) {
  MetricsAccumulator acc;
  for (const SceneSequence& scene : scenes) {
    const std::vector<int> agents = scene.loss_indices();
    if (agents.empty()) continue;
    const std::vector<GmmForecast> forecasts = forecaster(scene, agents);
    if (forecasts.size() != agents.size())
      throw ConfigError("forecaster returned the wrong number of agents");
    std::vector<AgentEvaluation> evals;
    evals.reserve(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i)
      evals.push_back(evaluate_agent(forecasts[i], agent_truth(scene, agents[i], horizon)));
    acc.add_scene(evals);
  }
  return acc.report();
}

// Rollout forecasts from a trained model: one forward pass per scene, then
// per-agent weights, means, and covariances read off the mixture track.
inline SceneForecaster model_forecaster(const TrainConfig& cfg, ParameterSet<double> params) {
  const ModelConfig mc = cfg.model();
  return [mc, params = std::move(params)](const SceneSequence& scene,
                                          const std::vector<int>& agents) {
    ad::Tape<double> tape;
    BoundParams<double> bound(tape, params);
    const ModelForward<double> fwd =
        model_forward(tape, mc, bound, "", scene, DecodeMode::kRollout);
    const Mat<double> logits = fwd.track.logits.value();
    const int M = mc.components;
    const int horizon = mc.future_steps;

    std::vector<GmmForecast> out;
    out.reserve(agents.size());
    for (const int a : agents) {
      GmmForecast f;
      f.weights = softmax_vector(logits.row(a).transpose());
      f.mean.resize(static_cast<std::size_t>(M));
      f.cov.resize(static_cast<std::size_t>(M));
      for (int j = 0; j < M; ++j) {
        Mat<double>& mean = f.mean[static_cast<std::size_t>(j)];
        Mat<double>& cov = f.cov[static_cast<std::size_t>(j)];
        mean.resize(horizon, 2);
        cov.resize(horizon, 4);
        for (int k = 0; k < horizon; ++k) {
          mean.row(k) = fwd.track.pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]
                            .value().row(a);
          cov.row(k) = fwd.track.cov[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]
                           .value().row(a);
        }
      }
      out.push_back(std::move(f));
    }
    return out;
  };
}

enum class BaselineKind { kConstantVelocity, kConstantAcceleration };

inline BaselineKind baseline_from_name(const std::string& name) {
  if (name == "cv") return BaselineKind::kConstantVelocity;
  if (name == "ca") return BaselineKind::kConstantAcceleration;
  throw ConfigError("unknown baseline '" + name + "' (expected cv or ca)");
}

// Physics baselines as single-component forecasts extrapolated from the
// current state. They model no uncertainty, so the covariance is a fixed
// unit disc — the distance metrics ignore it and the likelihood metrics
// remain well defined.
inline SceneForecaster baseline_forecaster(BaselineKind kind, int horizon) {
  return [kind, horizon](const SceneSequence& scene, const std::vector<int>& agents) {
    const Mat<double>& now = scene.features.back();
    std::vector<GmmForecast> out;
    out.reserve(agents.size());
    for (const int a : agents) {
      const Eigen::Vector2d pos(now(a, kIdxX), now(a, kIdxY));
      const Eigen::Vector2d vel(now(a, kIdxVx), now(a, kIdxVy));
      GmmForecast f;
      f.weights = Eigen::VectorXd::Ones(1);
      if (kind == BaselineKind::kConstantVelocity) {
        f.mean.push_back(cv_predict(pos, vel, scene.sample_time, horizon));
      } else {
        const Eigen::Vector2d acc(now(a, kIdxAx), now(a, kIdxAy));
        f.mean.push_back(ca_predict(pos, vel, acc, scene.sample_time, horizon));
      }
      Mat<double> cov(horizon, 4);
      cov.rowwise() = Eigen::RowVector4d(1.0, 0.0, 0.0, 1.0);
      f.cov.push_back(std::move(cov));
      out.push_back(std::move(f));
    }
    return out;
  };
}

// Rollout evaluation of a trained checkpoint: the metrics suite over the
// scenes' ground-truth agents.
inline MetricsReport evaluate_checkpoint(const Checkpoint& ck,
                                         const std::vector<SceneSequence>& scenes) {
  for (const SceneSequence& scene : scenes) detail::check_scene_window(ck.config, scene);
  return evaluate_forecaster(model_forecaster(ck.config, ck.params), scenes,
                             ck.config.future_steps);
}

}  // namespace mtpgo
