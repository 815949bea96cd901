// Command-line driver for the forecasting library.
//
// Subcommands:
//   generate   write synthetic traffic as a CSV table plus a geometry sidecar
//   train      fit a model on windowed scenes and write a checkpoint
//   evaluate   score a checkpoint or a physics baseline with the metric suite
//   predict    write per-agent, per-step mixture forecasts as line records
//   gradcheck  compare analytic gradients against finite differences
//
// Model and training settings come from one JSON configuration file whose
// keys mirror the TrainConfig field names exactly; any of those fields can
// also be overridden by a flag of the same name, and flags win. Exit codes:
// 0 success, 1 validation error (bad flags, config, or input files),
// 2 numeric failure (divergence or a failed gradient check).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtpgo/data.hpp"
#include "mtpgo/synthetic.hpp"
#include "mtpgo/trainer.hpp"

namespace {

using mtpgo::ConfigError;
using mtpgo::DataError;
using mtpgo::Mat;
using mtpgo::NumericError;
using mtpgo::SceneSequence;
using mtpgo::TrainConfig;

// One override flag per training-configuration field, named exactly like the
// configuration file key; only flags the user actually passed are applied.
class TrainFlags {
 public:
  void attach(CLI::App* cmd) {
    add(cmd, "--epochs", &TrainConfig::epochs, "training epochs (>= 8)");
    add(cmd, "--batch_size", &TrainConfig::batch_size, "scenes per gradient step");
    add(cmd, "--learning_rate", &TrainConfig::learning_rate, "optimizer step size");
    add(cmd, "--hidden_width", &TrainConfig::hidden_width, "recurrent state width");
    add(cmd, "--gnn_kind", &TrainConfig::gnn_kind,
        "graph layer kind: graphconv, gcn, gat, gatplus");
    add(cmd, "--gnn_heads", &TrainConfig::gnn_heads, "attention heads per graph layer");
    add(cmd, "--gnn_depth", &TrainConfig::gnn_depth, "graph layers per stack");
    add(cmd, "--ode_hidden_width", &TrainConfig::ode_hidden_width, "motion network width");
    add(cmd, "--motion_order", &TrainConfig::motion_order,
        "1 for position states, 2 for position and velocity");
    add(cmd, "--components", &TrainConfig::components, "mixture components");
    add(cmd, "--sample_time", &TrainConfig::sample_time, "seconds per step");
    add(cmd, "--history_steps", &TrainConfig::history_steps, "observed steps before now");
    add(cmd, "--future_steps", &TrainConfig::future_steps, "forecast horizon steps");
    add(cmd, "--seed", &TrainConfig::seed, "master random seed");
    add(cmd, "--use_encoder_gnn", &TrainConfig::use_encoder_gnn, "graph edges in the encoder");
    add(cmd, "--use_decoder_gnn", &TrainConfig::use_decoder_gnn, "graph edges in the decoder");
    add(cmd, "--use_ekf", &TrainConfig::use_ekf,
        "propagate covariances through the motion model");
    add(cmd, "--use_ode", &TrainConfig::use_ode,
        "learned motion model (off: heads emit positions directly)");
    add(cmd, "--use_static", &TrainConfig::use_static,
        "feed agent categories to the motion model");
  }

  void overlay(TrainConfig& cfg) const {
    for (const auto& [option, copy] : overrides_)
      if (option->count() > 0) copy(cfg);
  }

 private:
  template <class T>
  void add(CLI::App* cmd, const char* name, T TrainConfig::* member, const char* help) {
    CLI::Option* option = cmd->add_option(name, values_.*member, help);
    overrides_.emplace_back(option,
                            [this, member](TrainConfig& cfg) { cfg.*member = values_.*member; });
  }

  TrainConfig values_;
  std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> overrides_;
};

// Configuration file (if any) overlaid on `base`, then flag overrides.
TrainConfig resolve_config(const std::string& path, const TrainFlags& flags,
                           const TrainConfig& base = TrainConfig{}) {
  TrainConfig cfg = base;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open configuration file '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw ConfigError("configuration file '" + path + "': " + e.what());
    }
    mtpgo::apply_train_json(cfg, j);
  }
  flags.overlay(cfg);
  cfg.check();
  return cfg;
}

std::string geometry_path_for(const std::string& data_path, const std::string& explicit_path) {
  return explicit_path.empty() ? data_path + ".geometry.json" : explicit_path;
}

// CSV plus sidecar, windowed under the configuration's horizons.
std::vector<SceneSequence> load_windows(const std::string& data_path,
                                        const std::string& geometry_path,
                                        const TrainConfig& cfg, int stride) {
  const mtpgo::TrajectoryTable table =
      mtpgo::ingest_csv(data_path, mtpgo::load_geometry(geometry_path_for(data_path, geometry_path)));
  if (std::abs(table.sample_time() - cfg.sample_time) > 1e-9)
    throw ConfigError("table sample time " + std::to_string(table.sample_time()) +
                      " s does not match the configured sample_time " +
                      std::to_string(cfg.sample_time) + " s");
  mtpgo::WindowConfig wc;
  wc.history_steps = cfg.history_steps;
  wc.future_steps = cfg.future_steps;
  wc.stride = stride;
  wc.seed = cfg.seed;
  std::vector<SceneSequence> scenes = mtpgo::window_scenes(table, wc);
  if (scenes.empty())
    throw DataError("'" + data_path + "' yields no usable prediction windows");
  return scenes;
}

mtpgo::SyntheticKind synthetic_kind_from_name(const std::string& name) {
  if (name == "highway") return mtpgo::SyntheticKind::kHighway;
  if (name == "roundabout") return mtpgo::SyntheticKind::kRoundabout;
  if (name == "fork") return mtpgo::SyntheticKind::kFork;
  throw ConfigError("unknown scenario kind '" + name + "' (highway, roundabout, or fork)");
}

int run_generate(const std::string& kind_name, int scenes, std::uint64_t seed, int rate_divisor,
                 const std::string& out_path) {
  const mtpgo::SyntheticKind kind = synthetic_kind_from_name(kind_name);
  if (scenes < 0) throw ConfigError("scene count must be non-negative");
  // Zero scenes still writes a valid (header-only) table with its geometry.
  mtpgo::TrajectoryTable table = mtpgo::generate_synthetic(kind, std::max(scenes, 1), seed);
  if (scenes == 0) table.rows.clear();
  table = mtpgo::downsample(table, rate_divisor);
  mtpgo::write_csv(table, out_path);
  mtpgo::save_geometry(table.geometry, out_path + ".geometry.json");
  std::cout << "wrote " << table.rows.size() << " rows (" << scenes << " " << kind_name
            << " scenes at " << table.geometry.rate_hz << " Hz) to " << out_path << "\n";
  return 0;
}

int run_train(const TrainConfig& cfg, const std::string& data_path,
              const std::string& geometry_path, int stride, double val_fraction,
              const std::string& out_path) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("validation fraction must be in [0, 1)");
  const std::vector<SceneSequence> scenes = load_windows(data_path, geometry_path, cfg, stride);
  mtpgo::SplitSpec spec;
  spec.train = 1.0 - val_fraction;
  spec.val = val_fraction;
  spec.test = 0.0;
  mtpgo::SplitScenes parts = mtpgo::split(scenes, spec, cfg.seed);
  if (parts.train.empty()) throw ConfigError("the split leaves no training scenes");

  const mtpgo::TrainOutcome outcome = mtpgo::train(cfg, parts.train, parts.val, &std::cout);
  mtpgo::save_checkpoint(outcome.checkpoint, out_path);
  if (outcome.diverged) {
    std::cerr << "training diverged (" << outcome.note << "); wrote the last good checkpoint ("
              << outcome.checkpoint.epoch << " epochs) to " << out_path << "\n";
    return 2;
  }
  std::cerr << "trained " << outcome.checkpoint.epoch << " epochs on " << parts.train.size()
            << " scenes (" << parts.val.size() << " validation); checkpoint at " << out_path
            << "\n";
  return 0;
}

int run_evaluate(const std::string& config_path, const TrainFlags& flags,
                 const std::string& data_path, const std::string& geometry_path, int stride,
                 const std::string& checkpoint_path, const std::string& baseline_name,
                 const std::string& out_path, bool table) {
  if (checkpoint_path.empty() && baseline_name.empty())
    throw ConfigError("evaluate needs --checkpoint or --baseline");

  mtpgo::MetricsReport report;
  if (!checkpoint_path.empty()) {
    // The stored training configuration governs the model and the windows.
    const mtpgo::Checkpoint ck = mtpgo::load_checkpoint(checkpoint_path);
    const std::vector<SceneSequence> scenes =
        load_windows(data_path, geometry_path, ck.config, stride);
    report = mtpgo::evaluate_checkpoint(ck, scenes);
  } else {
    const TrainConfig cfg = resolve_config(config_path, flags);
    const std::vector<SceneSequence> scenes = load_windows(data_path, geometry_path, cfg, stride);
    report = mtpgo::evaluate_forecaster(
        mtpgo::baseline_forecaster(mtpgo::baseline_from_name(baseline_name), cfg.future_steps),
        scenes, cfg.future_steps);
  }

  std::cout << (table ? mtpgo::metrics_to_table(report) : mtpgo::metrics_to_json(report));
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot open '" + out_path + "' for writing");
    out << mtpgo::metrics_to_json(report);
  }
  return 0;
}

int run_predict(const std::string& checkpoint_path, const std::string& data_path,
                const std::string& geometry_path, int stride, const std::string& out_path) {
  const mtpgo::Checkpoint ck = mtpgo::load_checkpoint(checkpoint_path);
  const std::vector<SceneSequence> scenes =
      load_windows(data_path, geometry_path, ck.config, stride);
  const mtpgo::SceneForecaster forecaster = mtpgo::model_forecaster(ck.config, ck.params);

  std::ofstream out(out_path);
  if (!out) throw DataError("cannot open '" + out_path + "' for writing");
  out << nlohmann::json{{"format", "gmm-forecast/1"},
                        {"components", ck.config.components},
                        {"future_steps", ck.config.future_steps},
                        {"sample_time", ck.config.sample_time}}
             .dump()
      << '\n';

  long records = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const SceneSequence& scene = scenes[i];
    std::vector<int> all(static_cast<std::size_t>(scene.agent_count()));
    std::iota(all.begin(), all.end(), 0);
    const std::vector<mtpgo::GmmForecast> forecasts = forecaster(scene, all);
    for (std::size_t a = 0; a < all.size(); ++a) {
      const mtpgo::GmmForecast& f = forecasts[a];
      std::vector<double> weights(f.weights.data(), f.weights.data() + f.weights.size());
      for (int k = 0; k < f.horizon(); ++k) {
        nlohmann::json mean = nlohmann::json::array();
        nlohmann::json cov = nlohmann::json::array();
        for (int j = 0; j < f.components(); ++j) {
          mean.push_back({f.mean[static_cast<std::size_t>(j)](k, 0),
                          f.mean[static_cast<std::size_t>(j)](k, 1)});
          cov.push_back({f.cov[static_cast<std::size_t>(j)](k, 0),
                         f.cov[static_cast<std::size_t>(j)](k, 1),
                         f.cov[static_cast<std::size_t>(j)](k, 2),
                         f.cov[static_cast<std::size_t>(j)](k, 3)});
        }
        out << nlohmann::json{{"scene", i},
                              {"agent", scene.agents[a]},
                              {"step", k},
                              {"weights", weights},
                              {"mean", std::move(mean)},
                              {"cov", std::move(cov)}}
                   .dump()
            << '\n';
        ++records;
      }
    }
  }
  if (!out) throw DataError("write failure on '" + out_path + "'");
  std::cout << "wrote " << records << " forecast records over " << scenes.size()
            << " scenes to " << out_path << "\n";
  return 0;
}

// Smooth three-car scene for the gradient check: adjacent lanes, gentle
// constant accelerations, futures continuing the same kinematics plus a small
// perturbation. A well-conditioned scene keeps the loss moderate, so the
// cancellation noise of central differences stays far below the threshold;
// i.i.d. random features blow the loss (and with it the noise) up by orders
// of magnitude.
SceneSequence gradcheck_scene(const TrainConfig& cfg) {
  const int n = 3;
  std::mt19937_64 rng(cfg.seed + 17);
  std::uniform_real_distribution<double> wiggle(-0.01, 0.01);
  // Near-origin, slow kinematics keep every network input O(1); an untrained
  // jittered model then predicts within a covariance spread of the truth,
  // which keeps the loss surface gentle enough for finite differences.
  const double x0[] = {-3.0, 0.0, 2.5};
  const double y0[] = {-3.0, 0.0, 3.0};
  const double vx0[] = {1.2, 1.5, 1.8};
  const double vy0[] = {0.15, -0.1, 0.05};
  const double ax0[] = {0.05, -0.04, 0.03};
  const double ay0[] = {-0.02, 0.03, -0.01};
  auto state_at = [&](int v, double t) {
    mtpgo::NodeFeatures f;
    f.vx = vx0[v] + ax0[v] * t;
    f.vy = vy0[v] + ay0[v] * t;
    f.x = x0[v] + vx0[v] * t + 0.5 * ax0[v] * t * t;
    f.y = y0[v] + vy0[v] * t + 0.5 * ay0[v] * t * t;
    f.ax = ax0[v];
    f.ay = ay0[v];
    f.psi = std::atan2(f.vy, f.vx);
    return f;
  };

  SceneSequence s;
  s.kind = mtpgo::SceneKind::kHighway;
  s.sample_time = cfg.sample_time;
  s.history_steps = cfg.history_steps;
  s.future_steps = cfg.future_steps;
  for (int v = 0; v < n; ++v) {
    s.agents.push_back(v + 1);
    s.categories.push_back(mtpgo::AgentCategory::kCar);
  }
  for (int i = 0; i <= cfg.history_steps; ++i) {
    const double t = (i - cfg.history_steps) * cfg.sample_time;  // current step at t = 0
    Mat<double> f(n, mtpgo::kFeatureDim);
    for (int v = 0; v < n; ++v) {
      const mtpgo::NodeFeatures nf = state_at(v, t);
      f(v, mtpgo::kIdxX) = nf.x + wiggle(rng);
      f(v, mtpgo::kIdxY) = nf.y + wiggle(rng);
      f(v, mtpgo::kIdxVx) = nf.vx + wiggle(rng);
      f(v, mtpgo::kIdxVy) = nf.vy + wiggle(rng);
      f(v, mtpgo::kIdxAx) = nf.ax + wiggle(rng);
      f(v, mtpgo::kIdxAy) = nf.ay + wiggle(rng);
      f(v, mtpgo::kIdxPsi) = nf.psi + wiggle(rng);
      f(v, mtpgo::kIdxCtx0) = mtpgo::lane_offset(nf.y, 0.0, -6.0, 12.0);
      f(v, mtpgo::kIdxCtx1) = mtpgo::lane_offset(nf.y, 0.0, -6.0, 4.0);
    }
    Mat<double> d = Mat<double>::Zero(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        d(a, b) = std::hypot(f(a, mtpgo::kIdxX) - f(b, mtpgo::kIdxX),
                             f(a, mtpgo::kIdxY) - f(b, mtpgo::kIdxY));
        d(b, a) = d(a, b);
      }
    s.features.push_back(std::move(f));
    s.distances.push_back(std::move(d));
    s.valid.emplace_back(static_cast<std::size_t>(n), 1);
  }
  s.future_x.resize(cfg.future_steps, n);
  s.future_y.resize(cfg.future_steps, n);
  s.future_vx.resize(cfg.future_steps, n);
  s.future_vy.resize(cfg.future_steps, n);
  for (int k = 0; k < cfg.future_steps; ++k) {
    const double t = (k + 1) * cfg.sample_time;
    for (int v = 0; v < n; ++v) {
      const mtpgo::NodeFeatures nf = state_at(v, t);
      s.future_x(k, v) = nf.x + wiggle(rng);
      s.future_y(k, v) = nf.y + wiggle(rng);
      s.future_vx(k, v) = nf.vx + wiggle(rng);
      s.future_vy(k, v) = nf.vy + wiggle(rng);
    }
  }
  s.has_future.assign(static_cast<std::size_t>(n), 1);
  s.validate();
  return s;
}

// Default shape for the gradient check: small enough that central finite
// differences over every coordinate finish in well under a minute.
TrainConfig gradcheck_base() {
  TrainConfig cfg;
  cfg.hidden_width = 8;
  cfg.components = 2;
  cfg.history_steps = 5;
  cfg.future_steps = 4;
  return cfg;
}

int run_gradcheck(const TrainConfig& cfg, bool tamper) {
  const mtpgo::ModelConfig mc = cfg.model();
  const SceneSequence scene = gradcheck_scene(cfg);

  std::mt19937_64 rng(cfg.seed);
  mtpgo::ParameterSet<double> params;
  mtpgo::register_model(params, "", mc, rng);
  // Move to a generic point: fresh parameters hold exact zeros that place
  // piecewise-linear activations on their kinks, where one-sided derivatives
  // and central differences legitimately disagree.
  std::mt19937_64 jitter(cfg.seed + 1);
  mtpgo::jitter_parameters(params, jitter, 0.05);
  if (mc.use_ekf) {
    // Condition the covariance path: fresh noise heads predict ~0.7 units of
    // acceleration noise, which propagates to millimetre position spreads;
    // against decimetre untrained prediction errors, the likelihood's
    // inverse-covariance terms then carry so much curvature that central
    // differences cannot track them at any step size. Raising the raw-noise
    // bias puts the predicted spread on the data scale, as training would.
    Mat<double>& bq = params.at("dec.bq");
    for (int j = 0; j < mc.components; ++j) {
      bq(0, 3 * j) += 3.0;
      bq(0, 3 * j + 1) += 3.0;
    }
  }

  // The blended recipe exercises both the winner-takes-all and the
  // likelihood halves of the objective in a single scalar.
  mtpgo::LossRecipe recipe;
  recipe.phase = mtpgo::LossPhase::kBlend;
  recipe.winners = 1;
  recipe.blend = 0.5;

  const mtpgo::LossFn<double> loss_fn = [&](mtpgo::ad::Tape<double>& tape,
                                            const mtpgo::BoundParams<double>& bound) {
    const mtpgo::ModelForward<double> fwd =
        mtpgo::model_forward(tape, mc, bound, "", scene, mtpgo::DecodeMode::kTeacherForcing);
    const std::vector<int> agents = scene.loss_indices();
    const mtpgo::MixtureTrack<double> sub = mtpgo::restrict_track(fwd.track, agents);
    const std::vector<mtpgo::ad::Var<double>> truth =
        mtpgo::truth_positions(tape, scene, agents, mc.future_steps);
    return mtpgo::scheduled_loss(sub, truth, recipe);
  };

  std::function<void(mtpgo::GradientRecord<double>&)> hook;
  if (tamper)
    hook = [](mtpgo::GradientRecord<double>& grads) {
      Mat<double>& m = grads.at(grads.names().front());
      m(0, 0) += 1.0 + std::abs(m(0, 0));
    };

  const mtpgo::GradCheckReport report =
      mtpgo::check_gradients<double>(loss_fn, params, 1e-5, 1e-4, hook);
  const bool ok = report.passed(1e-4);
  std::cout << "loss " << report.loss << ", " << report.coords << " coordinates, max rel err "
            << report.max_rel_err << "\n";
  std::cout << "worst: " << report.worst.name << "[" << report.worst.row << ","
            << report.worst.col << "] analytic " << report.worst.analytic << " vs numeric "
            << report.worst.numeric << "\n";
  std::cout << (ok ? "PASS" : "FAIL") << " (threshold 1e-4)\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal trajectory forecasting over interaction graphs"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic traffic as CSV plus geometry");
  std::string gen_kind = "highway";
  int gen_scenes = 10;
  std::uint64_t gen_seed = 0;
  int gen_rate_divisor = 5;
  std::string gen_out;
  gen->add_option("--kind", gen_kind, "highway, roundabout, or fork")->capture_default_str();
  gen->add_option("--scenes", gen_scenes, "number of scenes (0 writes a header-only table)")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--rate-divisor", gen_rate_divisor, "downsample factor from the native 25 Hz")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "output CSV path")->required();

  // shared options for the model subcommands
  struct ModelArgs {
    std::string config, data, geometry, out;
    int stride = 10;
  };

  // train
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  ModelArgs tr_args;
  double tr_val_fraction = 0.1;
  TrainFlags tr_flags;
  tr->add_option("--config", tr_args.config, "JSON configuration file");
  tr->add_option("--data", tr_args.data, "trajectory CSV")->required();
  tr->add_option("--geometry", tr_args.geometry, "geometry sidecar (default <data>.geometry.json)");
  tr->add_option("--stride", tr_args.stride, "window stride in steps")->capture_default_str();
  tr->add_option("--val-fraction", tr_val_fraction, "held-out fraction for validation loss")
      ->capture_default_str();
  tr->add_option("--out", tr_args.out, "checkpoint output path")->required();
  tr_flags.attach(tr);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint or a physics baseline");
  ModelArgs ev_args;
  std::string ev_checkpoint, ev_baseline;
  bool ev_table = false;
  TrainFlags ev_flags;
  ev->add_option("--config", ev_args.config, "JSON configuration file (baseline mode)");
  ev->add_option("--data", ev_args.data, "trajectory CSV")->required();
  ev->add_option("--geometry", ev_args.geometry, "geometry sidecar (default <data>.geometry.json)");
  ev->add_option("--stride", ev_args.stride, "window stride in steps")->capture_default_str();
  CLI::Option* ev_ck = ev->add_option("--checkpoint", ev_checkpoint,
                                      "trained checkpoint (its stored configuration governs)");
  ev->add_option("--baseline", ev_baseline, "cv or ca (no checkpoint needed)")->excludes(ev_ck);
  ev->add_option("--out", ev_args.out, "also write the JSON report here");
  ev->add_flag("--table", ev_table, "print a tab-separated table instead of JSON");
  ev_flags.attach(ev);

  // predict
  auto* pr = app.add_subcommand("predict", "Write mixture forecasts as line records");
  ModelArgs pr_args;
  std::string pr_checkpoint;
  pr->add_option("--checkpoint", pr_checkpoint, "trained checkpoint")->required();
  pr->add_option("--data", pr_args.data, "trajectory CSV")->required();
  pr->add_option("--geometry", pr_args.geometry, "geometry sidecar (default <data>.geometry.json)");
  pr->add_option("--stride", pr_args.stride, "window stride in steps")->capture_default_str();
  pr->add_option("--out", pr_args.out, "forecast record file")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "Check analytic gradients against finite differences");
  std::string gc_config;
  bool gc_tamper = false;
  TrainFlags gc_flags;
  gc->add_option("--config", gc_config, "JSON configuration file");
  gc->add_flag("--tamper", gc_tamper)->group("");  // negative control, hidden
  gc_flags.attach(gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(gen))
      return run_generate(gen_kind, gen_scenes, gen_seed, gen_rate_divisor, gen_out);
    if (app.got_subcommand(tr))
      return run_train(resolve_config(tr_args.config, tr_flags), tr_args.data, tr_args.geometry,
                       tr_args.stride, tr_val_fraction, tr_args.out);
    if (app.got_subcommand(ev))
      return run_evaluate(ev_args.config, ev_flags, ev_args.data, ev_args.geometry,
                          ev_args.stride, ev_checkpoint, ev_baseline, ev_args.out, ev_table);
    if (app.got_subcommand(pr))
      return run_predict(pr_checkpoint, pr_args.data, pr_args.geometry, pr_args.stride,
                         pr_args.out);
    if (app.got_subcommand(gc))
      return run_gradcheck(resolve_config(gc_config, gc_flags, gradcheck_base()), gc_tamper);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
