#pragma once

// Harness for validating reverse-mode gradients against a central finite
// difference oracle. The oracle only ever evaluates the loss forward, so it
// is independent of the backward pass it is checking.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/parameters.hpp"

namespace mtpgo {

// Parameter matrices bound onto a tape as differentiable leaves, looked up
// by name inside a loss builder.
template <class S = double>
class BoundParams {
 public:
  BoundParams(ad::Tape<S>& tape, const ParameterSet<S>& params) {
    for (const auto& name : params.names())
      vars_.emplace(name, tape.leaf(params.at(name), name));
  }

  ad::Var<S> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::logic_error("no bound parameter '" + name + "'");
    return it->second;
  }

 private:
  std::unordered_map<std::string, ad::Var<S>> vars_;
};

// A loss builder constructs a 1x1 scalar loss on the given tape from bound
// parameters. It must be a pure function of the parameter values.
template <class S = double>
using LossFn = std::function<ad::Var<S>(ad::Tape<S>&, const BoundParams<S>&)>;

template <class S>
S evaluate_loss(const LossFn<S>& loss_fn, const ParameterSet<S>& params) {
  ad::Tape<S> tape;
  BoundParams<S> bound(tape, params);
  return loss_fn(tape, bound).scalar();
}

// One forward + one backward pass; returns the loss value and a gradient for
// every parameter entry (zero where the loss does not depend on it).
template <class S>
std::pair<S, GradientRecord<S>> evaluate_with_gradients(const LossFn<S>& loss_fn,
                                                        const ParameterSet<S>& params) {
  ad::Tape<S> tape;
  BoundParams<S> bound(tape, params);
  ad::Var<S> loss = loss_fn(tape, bound);
  const S value = loss.scalar();
  tape.backward(loss);
  GradientRecord<S> grads;
  for (const auto& name : params.names()) {
    const Mat<S>& p = params.at(name);
    grads.add(name, p.rows(), p.cols()) = tape.gradient(bound[name]);
  }
  return {value, grads};
}

// Central finite differences, one coordinate at a time.
template <class S>
GradientRecord<S> finite_difference_oracle(const LossFn<S>& loss_fn,
                                           const ParameterSet<S>& params, S step) {
  ParameterSet<S> work = params;
  GradientRecord<S> grads;
  for (const auto& name : params.names()) {
    const Mat<S>& p = params.at(name);
    grads.add(name, p.rows(), p.cols());
  }
  for (const auto& name : params.names()) {
    Mat<S>& m = work.at(name);
    Mat<S>& g = grads.at(name);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const S saved = m(i, j);
        m(i, j) = saved + step;
        const S f_plus = evaluate_loss(loss_fn, work);
        m(i, j) = saved - step;
        const S f_minus = evaluate_loss(loss_fn, work);
        m(i, j) = saved;
        g(i, j) = (f_plus - f_minus) / (S(2) * step);
      }
    }
  }
  return grads;
}

// Moves every parameter to a generic point by adding uniform noise. Freshly
// initialised models hold exact zeros (initial hidden state, biases), which
// place piecewise-linear activations precisely at their kinks; there a
// one-sided analytic subgradient and a central finite difference legitimately
// disagree, so gradient checks must evaluate off those measure-zero points.
template <class S>
void jitter_parameters(ParameterSet<S>& params, std::mt19937_64& rng, S amplitude) {
  std::uniform_real_distribution<double> noise(-static_cast<double>(amplitude),
                                               static_cast<double>(amplitude));
  for (const auto& name : params.names()) {
    Mat<S>& m = params.at(name);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += S(noise(rng));
  }
}

// Guarded relative error: |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheckEntry {
  std::string name;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double loss = 0.0;
  std::size_t coords = 0;
  double max_rel_err = 0.0;
  GradCheckEntry worst;

  bool passed(double threshold) const { return max_rel_err < threshold; }
};

// Compares analytic gradients against the finite difference oracle over every
// parameter coordinate. `tamper`, if given, mutates the analytic record
// before comparison (a hook for proving the check catches wrong gradients).
template <class S>
GradCheckReport check_gradients(const LossFn<S>& loss_fn, const ParameterSet<S>& params,
                                S step = S(1e-5), double floor = 1e-4,
                                const std::function<void(GradientRecord<S>&)>& tamper = nullptr) {
  auto [loss, analytic] = evaluate_with_gradients(loss_fn, params);
  if (tamper) tamper(analytic);
  const GradientRecord<S> numeric = finite_difference_oracle(loss_fn, params, step);
  GradCheckReport report;
  report.loss = static_cast<double>(loss);
  for (const auto& name : params.names()) {
    const Mat<S>& ga = analytic.at(name);
    const Mat<S>& gn = numeric.at(name);
    for (Eigen::Index i = 0; i < ga.rows(); ++i) {
      for (Eigen::Index j = 0; j < ga.cols(); ++j) {
        const double a = static_cast<double>(ga(i, j));
        const double n = static_cast<double>(gn(i, j));
        const double rel = relative_error(a, n, floor);
        ++report.coords;
        if (rel >= report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst = GradCheckEntry{name, i, j, a, n, rel};
        }
      }
    }
  }
  return report;
}

}  // namespace mtpgo
