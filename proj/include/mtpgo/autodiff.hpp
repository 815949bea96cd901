#pragma once

// Reverse-mode automatic differentiation on a flat tape of dense matrices.
// Operations evaluate eagerly; backward() replays the tape in reverse and
// accumulates adjoints. Every operation checks its result for non-finite
// entries and throws NumericError with the offending operation's name, so
// numerical blow-ups surface at the node that produced them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mtpgo/errors.hpp"

namespace mtpgo {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Scalar nonlinearities shared by tape operations and plain (non-tracked)
// code paths. All are numerically stable for large |x|.
namespace num {

template <class S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                   : std::exp(x) / (S(1) + std::exp(x));
}

template <class S>
S softplus(S x) {
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class S>
S softsign(S x) {
  return x / (S(1) + std::abs(x));
}

template <class S>
S elu(S x) {
  return x > S(0) ? x : std::expm1(x);
}

template <class S>
S elu_prime(S x) {
  return x > S(0) ? S(1) : std::exp(x);
}

template <class S>
S leaky_relu(S x, S slope) {
  return x > S(0) ? x : slope * x;
}

template <class S>
S huber(S x, S delta) {
  const S a = std::abs(x);
  return a <= delta ? S(0.5) * x * x : delta * (a - S(0.5) * delta);
}

}  // namespace num

namespace ad {

enum class Op : std::uint8_t {
  kConst,
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLog,
  kSqrt,
  kRsqrt,
  kSquare,
  kSigmoid,
  kTanh,
  kLeakyRelu,
  kSoftplus,
  kSoftsign,
  kElu,
  kEluPrime,
  kHuber,
  kMatmul,
  kTranspose,
  kConcatRows,
  kConcatCols,
  kBlock,
  kGatherRows,
  kScatterRows,
  kReshape,
  kRowSum,
  kSumAll,
  kSoftmaxRows,
  kMaskedSoftmaxRows,
  kLogSumExpRows,
  kBmm2x2,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kRsqrt: return "rsqrt";
    case Op::kSquare: return "square";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kSoftplus: return "softplus";
    case Op::kSoftsign: return "softsign";
    case Op::kElu: return "elu";
    case Op::kEluPrime: return "elu_prime";
    case Op::kHuber: return "huber";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kConcatRows: return "concat_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kBlock: return "block";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterRows: return "scatter_rows";
    case Op::kReshape: return "reshape";
    case Op::kRowSum: return "row_sum";
    case Op::kSumAll: return "sum_all";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kMaskedSoftmaxRows: return "masked_softmax_rows";
    case Op::kLogSumExpRows: return "logsumexp_rows";
    case Op::kBmm2x2: return "bmm2x2";
  }
  return "unknown";
}

template <class S>
class Tape;

// Lightweight handle to a tape node. Copyable; valid as long as the owning
// tape is alive and has not been cleared.
template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
  const Mat<S>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Scalar payload of a 1x1 node.
  S scalar() const;
};

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::logic_error(std::string("autodiff: ") + msg);
}

inline Eigen::Index bcast_dim(Eigen::Index a, Eigen::Index b, const char* opn) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw std::logic_error(std::string("autodiff: incompatible shapes in ") + opn);
}

template <class S>
Mat<S> broadcast_to(const Mat<S>& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  return m.replicate(r / m.rows(), c / m.cols());
}

// Sum a gradient of broadcast shape back down to the operand's shape.
template <class S>
Mat<S> reduce_to(const Mat<S>& g, Eigen::Index r, Eigen::Index c) {
  Mat<S> out = g;
  if (out.rows() != r) out = out.colwise().sum().eval();
  if (out.cols() != c) out = out.rowwise().sum().eval();
  return out;
}

}  // namespace detail

template <class S = double>
class Tape {
 public:
  struct Node {
    Op op = Op::kConst;
    int a = -1;
    int b = -1;
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0;  // op-specific: block extents, reshape dims, bmm flags
    S attr = S(0);                        // op-specific: leaky slope, huber delta
    std::vector<int> list;                // concat members or gather/scatter row indices
    std::string label;                    // leaf/constant name for diagnostics
    Mat<S> value;
    Mat<S> grad;                          // empty until touched by backward()
  };

  Tape() { nodes_.reserve(1024); }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  Node& at(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  const Node& at(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  int push(Node&& n) {
    if (!n.value.allFinite()) {
      std::string msg = std::string("non-finite value produced by '") + op_name(n.op) + "'";
      if (!n.label.empty()) msg += " (" + n.label + ")";
      throw NumericError(msg);
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Var<S> wrap(int i) { return Var<S>{this, i}; }

  Var<S> constant(Mat<S> v, std::string label = {}) {
    Node n;
    n.op = Op::kConst;
    n.value = std::move(v);
    n.label = std::move(label);
    return wrap(push(std::move(n)));
  }

  Var<S> constant(S v) {
    Mat<S> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var<S> leaf(Mat<S> v, std::string label) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(v);
    n.label = std::move(label);
    return wrap(push(std::move(n)));
  }

  // Accumulates adjoints of every node reachable from `root` (a 1x1 scalar).
  // Gradients from a previous backward() call are discarded.
  void backward(Var<S> root) {
    detail::require(root.valid() && root.tape == this, "backward root is not on this tape");
    detail::require(root.rows() == 1 && root.cols() == 1, "backward root must be a 1x1 scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_of(root.idx)(0, 0) = S(1);
    for (int i = root.idx; i >= 0; --i) {
      if (nodes_[static_cast<std::size_t>(i)].grad.size() == 0) continue;
      adjoint(i);
    }
  }

  // Gradient of the last backward() pass w.r.t. node `v`; zero matrix if the
  // node did not participate.
  Mat<S> gradient(Var<S> v) const {
    detail::require(v.valid() && v.tape == this, "gradient query is not on this tape");
    const Node& n = at(v.idx);
    if (n.grad.size() == 0) return Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  std::vector<Node> nodes_;

  Mat<S>& grad_of(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void adjoint(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    const Mat<S>& g = n.grad;
    switch (n.op) {
      case Op::kConst:
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        const Node& a = at(n.a);
        const Node& b = at(n.b);
        grad_of(n.a) += detail::reduce_to(g, a.value.rows(), a.value.cols());
        grad_of(n.b) += detail::reduce_to(g, b.value.rows(), b.value.cols());
        break;
      }
      case Op::kSub: {
        const Node& a = at(n.a);
        const Node& b = at(n.b);
        grad_of(n.a) += detail::reduce_to(g, a.value.rows(), a.value.cols());
        grad_of(n.b) -= detail::reduce_to(g, b.value.rows(), b.value.cols());
        break;
      }
      case Op::kMul: {
        const Node& a = at(n.a);
        const Node& b = at(n.b);
        const Mat<S> av = detail::broadcast_to(a.value, g.rows(), g.cols());
        const Mat<S> bv = detail::broadcast_to(b.value, g.rows(), g.cols());
        grad_of(n.a) += detail::reduce_to<S>(g.cwiseProduct(bv), a.value.rows(), a.value.cols());
        grad_of(n.b) += detail::reduce_to<S>(g.cwiseProduct(av), b.value.rows(), b.value.cols());
        break;
      }
      case Op::kDiv: {
        const Node& a = at(n.a);
        const Node& b = at(n.b);
        const Mat<S> bv = detail::broadcast_to(b.value, g.rows(), g.cols());
        grad_of(n.a) += detail::reduce_to<S>(g.cwiseQuotient(bv), a.value.rows(), a.value.cols());
        grad_of(n.b) -= detail::reduce_to<S>(g.cwiseProduct(n.value).cwiseQuotient(bv),
                                             b.value.rows(), b.value.cols());
        break;
      }
      case Op::kNeg:
        grad_of(n.a) -= g;
        break;
      case Op::kExp:
        grad_of(n.a) += g.cwiseProduct(n.value);
        break;
      case Op::kLog:
        grad_of(n.a) += g.cwiseQuotient(at(n.a).value);
        break;
      case Op::kSqrt:
        grad_of(n.a).array() += g.array() * (S(0.5) / n.value.array());
        break;
      case Op::kRsqrt:
        grad_of(n.a).array() += g.array() * (S(-0.5) * n.value.array().cube());
        break;
      case Op::kSquare:
        grad_of(n.a).array() += g.array() * S(2) * at(n.a).value.array();
        break;
      case Op::kSigmoid:
        grad_of(n.a).array() += g.array() * n.value.array() * (S(1) - n.value.array());
        break;
      case Op::kTanh:
        grad_of(n.a).array() += g.array() * (S(1) - n.value.array().square());
        break;
      case Op::kLeakyRelu: {
        const auto& x = at(n.a).value.array();
        grad_of(n.a).array() += g.array() * (x > S(0)).select(Mat<S>::Ones(g.rows(), g.cols()).array(),
                                                              Mat<S>::Constant(g.rows(), g.cols(), n.attr).array());
        break;
      }
      case Op::kSoftplus: {
        const auto& x = at(n.a).value;
        grad_of(n.a).array() += g.array() * x.unaryExpr([](S v) { return num::sigmoid(v); }).array();
        break;
      }
      case Op::kSoftsign: {
        const auto& x = at(n.a).value.array();
        grad_of(n.a).array() += g.array() / (S(1) + x.abs()).square();
        break;
      }
      case Op::kElu: {
        const auto& x = at(n.a).value.array();
        grad_of(n.a).array() +=
            g.array() * (x > S(0)).select(Mat<S>::Ones(g.rows(), g.cols()).array(), n.value.array() + S(1));
        break;
      }
      case Op::kEluPrime: {
        // d/dx elu'(x) = 0 for x > 0, exp(x) otherwise; exp(x) == elu'(x) there.
        const auto& x = at(n.a).value.array();
        grad_of(n.a).array() +=
            g.array() * (x > S(0)).select(Mat<S>::Zero(g.rows(), g.cols()).array(), n.value.array());
        break;
      }
      case Op::kHuber: {
        const auto& x = at(n.a).value.array();
        grad_of(n.a).array() += g.array() * x.min(n.attr).max(-n.attr);
        break;
      }
      case Op::kMatmul:
        grad_of(n.a) += g * at(n.b).value.transpose();
        grad_of(n.b) += at(n.a).value.transpose() * g;
        break;
      case Op::kTranspose:
        grad_of(n.a) += g.transpose();
        break;
      case Op::kConcatRows: {
        Eigen::Index r0 = 0;
        for (int src : n.list) {
          const Eigen::Index r = at(src).value.rows();
          grad_of(src) += g.middleRows(r0, r);
          r0 += r;
        }
        break;
      }
      case Op::kConcatCols: {
        Eigen::Index c0 = 0;
        for (int src : n.list) {
          const Eigen::Index c = at(src).value.cols();
          grad_of(src) += g.middleCols(c0, c);
          c0 += c;
        }
        break;
      }
      case Op::kBlock:
        grad_of(n.a).block(n.i0, n.i1, n.i2, n.i3) += g;
        break;
      case Op::kGatherRows: {
        Mat<S>& ga = grad_of(n.a);
        for (std::size_t p = 0; p < n.list.size(); ++p)
          ga.row(n.list[p]) += g.row(static_cast<Eigen::Index>(p));
        break;
      }
      case Op::kScatterRows: {
        Mat<S> gb_base = g;
        Mat<S>& grows = grad_of(n.b);
        for (std::size_t p = 0; p < n.list.size(); ++p) {
          grows.row(static_cast<Eigen::Index>(p)) += g.row(n.list[p]);
          gb_base.row(n.list[p]).setZero();
        }
        grad_of(n.a) += gb_base;
        break;
      }
      case Op::kReshape: {
        // Inverse of the forward row-major reinterpretation.
        using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        RowMat rm = g;
        const Node& a = at(n.a);
        Eigen::Map<const RowMat> view(rm.data(), a.value.rows(), a.value.cols());
        grad_of(n.a) += view;
        break;
      }
      case Op::kRowSum:
        grad_of(n.a) += g.replicate(1, at(n.a).value.cols());
        break;
      case Op::kSumAll:
        grad_of(n.a).array() += g(0, 0);
        break;
      case Op::kSoftmaxRows:
      case Op::kMaskedSoftmaxRows: {
        Mat<S>& ga = grad_of(n.a);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const S dot = g.row(r).cwiseProduct(n.value.row(r)).sum();
          ga.row(r).array() += n.value.row(r).array() * (g.row(r).array() - dot);
        }
        break;
      }
      case Op::kLogSumExpRows: {
        const Mat<S>& x = at(n.a).value;
        Mat<S>& ga = grad_of(n.a);
        for (Eigen::Index r = 0; r < x.rows(); ++r)
          ga.row(r).array() += g(r, 0) * (x.row(r).array() - n.value(r, 0)).exp();
        break;
      }
      case Op::kBmm2x2: {
        const Mat<S>& av = at(n.a).value;
        const Mat<S>& bv = at(n.b).value;
        Mat<S>& ga = grad_of(n.a);
        Mat<S>& gb = grad_of(n.b);
        const bool ta = n.i0 != 0;
        const bool tb = n.i1 != 0;
        using M2 = Eigen::Matrix<S, 2, 2>;
        for (Eigen::Index r = 0; r < av.rows(); ++r) {
          M2 A, B, G;
          A << av(r, 0), av(r, 1), av(r, 2), av(r, 3);
          B << bv(r, 0), bv(r, 1), bv(r, 2), bv(r, 3);
          G << g(r, 0), g(r, 1), g(r, 2), g(r, 3);
          if (ta) A.transposeInPlace();
          if (tb) B.transposeInPlace();
          M2 gA = G * B.transpose();
          M2 gB = A.transpose() * G;
          if (ta) gA.transposeInPlace();
          if (tb) gB.transposeInPlace();
          ga(r, 0) += gA(0, 0); ga(r, 1) += gA(0, 1); ga(r, 2) += gA(1, 0); ga(r, 3) += gA(1, 1);
          gb(r, 0) += gB(0, 0); gb(r, 1) += gB(0, 1); gb(r, 2) += gB(1, 0); gb(r, 3) += gB(1, 1);
        }
        break;
      }
    }
  }
};

template <class S>
const Mat<S>& Var<S>::value() const {
  detail::require(valid(), "value() on an invalid Var");
  return tape->at(idx).value;
}

template <class S>
S Var<S>::scalar() const {
  const Mat<S>& v = value();
  detail::require(v.rows() == 1 && v.cols() == 1, "scalar() on a non-1x1 Var");
  return v(0, 0);
}

namespace detail {

template <class S>
Tape<S>* same_tape(Var<S> a, Var<S> b, const char* opn) {
  require(a.valid() && b.valid(), opn);
  require(a.tape == b.tape, "operands live on different tapes");
  return a.tape;
}

template <class S>
Var<S> binary_ew(Op op, Var<S> a, Var<S> b) {
  Tape<S>* t = same_tape(a, b, op_name(op));
  const Mat<S>& av = a.value();
  const Mat<S>& bv = b.value();
  const Eigen::Index r = bcast_dim(av.rows(), bv.rows(), op_name(op));
  const Eigen::Index c = bcast_dim(av.cols(), bv.cols(), op_name(op));
  const Mat<S> ab = broadcast_to(av, r, c);
  const Mat<S> bb = broadcast_to(bv, r, c);
  typename Tape<S>::Node n;
  n.op = op;
  n.a = a.idx;
  n.b = b.idx;
  switch (op) {
    case Op::kAdd: n.value = ab + bb; break;
    case Op::kSub: n.value = ab - bb; break;
    case Op::kMul: n.value = ab.cwiseProduct(bb); break;
    case Op::kDiv: n.value = ab.cwiseQuotient(bb); break;
    default: require(false, "binary_ew misuse");
  }
  return t->wrap(t->push(std::move(n)));
}

template <class S, class F>
Var<S> unary_ew(Op op, Var<S> a, S attr, F&& fwd) {
  require(a.valid(), op_name(op));
  typename Tape<S>::Node n;
  n.op = op;
  n.a = a.idx;
  n.attr = attr;
  n.value = a.value().unaryExpr(fwd);
  return a.tape->wrap(a.tape->push(std::move(n)));
}

}  // namespace detail

template <class S> Var<S> add(Var<S> a, Var<S> b) { return detail::binary_ew(Op::kAdd, a, b); }
template <class S> Var<S> sub(Var<S> a, Var<S> b) { return detail::binary_ew(Op::kSub, a, b); }
template <class S> Var<S> mul(Var<S> a, Var<S> b) { return detail::binary_ew(Op::kMul, a, b); }
template <class S> Var<S> div(Var<S> a, Var<S> b) { return detail::binary_ew(Op::kDiv, a, b); }

template <class S> Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <class S> Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <class S> Var<S> operator*(Var<S> a, Var<S> b) { return mul(a, b); }
template <class S> Var<S> operator/(Var<S> a, Var<S> b) { return div(a, b); }

template <class S> Var<S> operator+(Var<S> a, double s) { return add(a, a.tape->constant(S(s))); }
template <class S> Var<S> operator-(Var<S> a, double s) { return sub(a, a.tape->constant(S(s))); }
template <class S> Var<S> operator*(Var<S> a, double s) { return mul(a, a.tape->constant(S(s))); }
template <class S> Var<S> operator/(Var<S> a, double s) { return div(a, a.tape->constant(S(s))); }
template <class S> Var<S> operator+(double s, Var<S> a) { return add(a.tape->constant(S(s)), a); }
template <class S> Var<S> operator-(double s, Var<S> a) { return sub(a.tape->constant(S(s)), a); }
template <class S> Var<S> operator*(double s, Var<S> a) { return mul(a.tape->constant(S(s)), a); }
template <class S> Var<S> operator/(double s, Var<S> a) { return div(a.tape->constant(S(s)), a); }

template <class S>
Var<S> neg(Var<S> a) {
  detail::require(a.valid(), "neg");
  typename Tape<S>::Node n;
  n.op = Op::kNeg;
  n.a = a.idx;
  n.value = -a.value();
  return a.tape->wrap(a.tape->push(std::move(n)));
}
template <class S> Var<S> operator-(Var<S> a) { return neg(a); }

template <class S> Var<S> exp(Var<S> a) {
  return detail::unary_ew(Op::kExp, a, S(0), [](S x) { return std::exp(x); });
}
template <class S> Var<S> log(Var<S> a) {
  return detail::unary_ew(Op::kLog, a, S(0), [](S x) { return std::log(x); });
}
template <class S> Var<S> sqrt(Var<S> a) {
  return detail::unary_ew(Op::kSqrt, a, S(0), [](S x) { return std::sqrt(x); });
}
template <class S> Var<S> rsqrt(Var<S> a) {
  return detail::unary_ew(Op::kRsqrt, a, S(0), [](S x) { return S(1) / std::sqrt(x); });
}
template <class S> Var<S> square(Var<S> a) {
  return detail::unary_ew(Op::kSquare, a, S(0), [](S x) { return x * x; });
}
template <class S> Var<S> sigmoid(Var<S> a) {
  return detail::unary_ew(Op::kSigmoid, a, S(0), [](S x) { return num::sigmoid(x); });
}
template <class S> Var<S> tanh(Var<S> a) {
  return detail::unary_ew(Op::kTanh, a, S(0), [](S x) { return std::tanh(x); });
}
template <class S> Var<S> leaky_relu(Var<S> a, S slope) {
  return detail::unary_ew(Op::kLeakyRelu, a, slope, [slope](S x) { return num::leaky_relu(x, slope); });
}
template <class S> Var<S> softplus(Var<S> a) {
  return detail::unary_ew(Op::kSoftplus, a, S(0), [](S x) { return num::softplus(x); });
}
template <class S> Var<S> softsign(Var<S> a) {
  return detail::unary_ew(Op::kSoftsign, a, S(0), [](S x) { return num::softsign(x); });
}
template <class S> Var<S> elu(Var<S> a) {
  return detail::unary_ew(Op::kElu, a, S(0), [](S x) { return num::elu(x); });
}
template <class S> Var<S> elu_prime(Var<S> a) {
  return detail::unary_ew(Op::kEluPrime, a, S(0), [](S x) { return num::elu_prime(x); });
}
template <class S> Var<S> huber(Var<S> a, S delta) {
  return detail::unary_ew(Op::kHuber, a, delta, [delta](S x) { return num::huber(x, delta); });
}

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>* t = detail::same_tape(a, b, "matmul");
  detail::require(a.cols() == b.rows(), "matmul inner dimensions differ");
  typename Tape<S>::Node n;
  n.op = Op::kMatmul;
  n.a = a.idx;
  n.b = b.idx;
  n.value = a.value() * b.value();
  return t->wrap(t->push(std::move(n)));
}

template <class S>
Var<S> transpose(Var<S> a) {
  detail::require(a.valid(), "transpose");
  typename Tape<S>::Node n;
  n.op = Op::kTranspose;
  n.a = a.idx;
  n.value = a.value().transpose();
  return a.tape->wrap(a.tape->push(std::move(n)));
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_rows of nothing");
  Tape<S>* t = parts.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    detail::require(p.valid() && p.tape == t, "concat_rows operands on different tapes");
    detail::require(p.cols() == cols, "concat_rows column counts differ");
    rows += p.rows();
  }
  typename Tape<S>::Node n;
  n.op = Op::kConcatRows;
  n.value.resize(rows, cols);
  Eigen::Index r0 = 0;
  for (const auto& p : parts) {
    n.list.push_back(p.idx);
    n.value.middleRows(r0, p.rows()) = p.value();
    r0 += p.rows();
  }
  return t->wrap(t->push(std::move(n)));
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_cols of nothing");
  Tape<S>* t = parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    detail::require(p.valid() && p.tape == t, "concat_cols operands on different tapes");
    detail::require(p.rows() == rows, "concat_cols row counts differ");
    cols += p.cols();
  }
  typename Tape<S>::Node n;
  n.op = Op::kConcatCols;
  n.value.resize(rows, cols);
  Eigen::Index c0 = 0;
  for (const auto& p : parts) {
    n.list.push_back(p.idx);
    n.value.middleCols(c0, p.cols()) = p.value();
    c0 += p.cols();
  }
  return t->wrap(t->push(std::move(n)));
}

template <class S>
Var<S> block(Var<S> a, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols) {
  detail::require(a.valid(), "block");
  detail::require(r0 >= 0 && c0 >= 0 && rows >= 0 && cols >= 0 && r0 + rows <= a.rows() && c0 + cols <= a.cols(),
                  "block extents out of range");
  typename Tape<S>::Node n;
  n.op = Op::kBlock;
  n.a = a.idx;
  n.i0 = static_cast<int>(r0);
  n.i1 = static_cast<int>(c0);
  n.i2 = static_cast<int>(rows);
  n.i3 = static_cast<int>(cols);
  n.value = a.value().block(r0, c0, rows, cols);
  return a.tape->wrap(a.tape->push(std::move(n)));
}

template <class S>
Var<S> gather_rows(Var<S> a, const std::vector<int>& indices) {
  detail::require(a.valid(), "gather_rows");
  typename Tape<S>::Node n;
  n.op = Op::kGatherRows;
  n.a = a.idx;
  n.list = indices;
  n.value.resize(static_cast<Eigen::Index>(indices.size()), a.cols());
  for (std::size_t p = 0; p < indices.size(); ++p) {
    detail::require(indices[p] >= 0 && indices[p] < a.rows(), "gather_rows index out of range");
    n.value.row(static_cast<Eigen::Index>(p)) = a.value().row(indices[p]);
  }
  return a.tape->wrap(a.tape->push(std::move(n)));
}

// Returns a copy of `base` whose rows `indices[p]` are replaced by row p of
// `rows`. Indices must be unique.
template <class S>
Var<S> scatter_rows(Var<S> base, Var<S> rows, const std::vector<int>& indices) {
  Tape<S>* t = detail::same_tape(base, rows, "scatter_rows");
  detail::require(rows.rows() == static_cast<Eigen::Index>(indices.size()), "scatter_rows row count mismatch");
  detail::require(rows.cols() == base.cols(), "scatter_rows column count mismatch");
  typename Tape<S>::Node n;
  n.op = Op::kScatterRows;
  n.a = base.idx;
  n.b = rows.idx;
  n.list = indices;
  n.value = base.value();
  for (std::size_t p = 0; p < indices.size(); ++p) {
    detail::require(indices[p] >= 0 && indices[p] < base.rows(), "scatter_rows index out of range");
    n.value.row(indices[p]) = rows.value().row(static_cast<Eigen::Index>(p));
  }
  return t->wrap(t->push(std::move(n)));
}

// Row-major reinterpretation to a new shape with the same element count.
template <class S>
Var<S> reshape(Var<S> a, Eigen::Index rows, Eigen::Index cols) {
  detail::require(a.valid(), "reshape");
  detail::require(rows * cols == a.rows() * a.cols(), "reshape element count mismatch");
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  typename Tape<S>::Node n;
  n.op = Op::kReshape;
  n.a = a.idx;
  n.i0 = static_cast<int>(rows);
  n.i1 = static_cast<int>(cols);
  RowMat rm = a.value();
  Eigen::Map<const RowMat> view(rm.data(), rows, cols);
  n.value = view;
  return a.tape->wrap(a.tape->push(std::move(n)));
}

template <class S>
Var<S> row_sum(Var<S> a) {
  detail::require(a.valid(), "row_sum");
  typename Tape<S>::Node n;
  n.op = Op::kRowSum;
  n.a = a.idx;
  n.value = a.value().rowwise().sum();
  return a.tape->wrap(a.tape->push(std::move(n)));
}

template <class S>
Var<S> sum_all(Var<S> a) {
  detail::require(a.valid(), "sum_all");
  typename Tape<S>::Node n;
  n.op = Op::kSumAll;
  n.a = a.idx;
  n.value.resize(1, 1);
  n.value(0, 0) = a.value().sum();
  return a.tape->wrap(a.tape->push(std::move(n)));
}

namespace detail {

template <class S>
void softmax_row_into(const Eigen::Matrix<S, 1, Eigen::Dynamic>& x,
                      const Eigen::Matrix<S, 1, Eigen::Dynamic>* mask,
                      Eigen::Matrix<S, 1, Eigen::Dynamic>& out) {
  const Eigen::Index c = x.cols();
  S m = std::numeric_limits<S>::lowest();
  bool any = false;
  for (Eigen::Index j = 0; j < c; ++j) {
    if (mask && (*mask)(j) <= S(0.5)) continue;
    any = true;
    m = std::max(m, x(j));
  }
  out.setZero();
  if (!any) return;
  S sum = S(0);
  for (Eigen::Index j = 0; j < c; ++j) {
    if (mask && (*mask)(j) <= S(0.5)) continue;
    out(j) = std::exp(x(j) - m);
    sum += out(j);
  }
  out /= sum;
}

}  // namespace detail

// Row-wise softmax. Masked variant restricts each row's normalisation to the
// entries whose mask is 1; masked-out entries get weight 0 and the mask
// itself receives no gradient. A fully masked row yields all zeros.
template <class S>
Var<S> softmax_rows(Var<S> a) {
  detail::require(a.valid(), "softmax_rows");
  typename Tape<S>::Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a.idx;
  n.value.resize(a.rows(), a.cols());
  using Row = Eigen::Matrix<S, 1, Eigen::Dynamic>;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Row x = a.value().row(r);
    Row out(a.cols());
    detail::softmax_row_into<S>(x, nullptr, out);
    n.value.row(r) = out;
  }
  return a.tape->wrap(a.tape->push(std::move(n)));
}

template <class S>
Var<S> masked_softmax_rows(Var<S> a, Var<S> mask) {
  Tape<S>* t = detail::same_tape(a, mask, "masked_softmax_rows");
  detail::require(a.rows() == mask.rows() && a.cols() == mask.cols(), "masked_softmax_rows shape mismatch");
  typename Tape<S>::Node n;
  n.op = Op::kMaskedSoftmaxRows;
  n.a = a.idx;
  n.b = mask.idx;
  n.value.resize(a.rows(), a.cols());
  using Row = Eigen::Matrix<S, 1, Eigen::Dynamic>;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Row x = a.value().row(r);
    Row m = mask.value().row(r);
    Row out(a.cols());
    detail::softmax_row_into<S>(x, &m, out);
    n.value.row(r) = out;
  }
  return t->wrap(t->push(std::move(n)));
}

// Per-row log(sum(exp(x))), returned as a column vector.
template <class S>
Var<S> logsumexp_rows(Var<S> a) {
  detail::require(a.valid(), "logsumexp_rows");
  typename Tape<S>::Node n;
  n.op = Op::kLogSumExpRows;
  n.a = a.idx;
  n.value.resize(a.rows(), 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const S m = a.value().row(r).maxCoeff();
    n.value(r, 0) = m + std::log((a.value().row(r).array() - m).exp().sum());
  }
  return a.tape->wrap(a.tape->push(std::move(n)));
}

// Batched 2x2 matrix product. Each row of `a` and `b` holds a 2x2 matrix in
// row-major order [m00 m01 m10 m11]; row i of the result is op(A_i) * op(B_i)
// where op transposes when the corresponding flag is set.
template <class S>
Var<S> bmm2x2(Var<S> a, Var<S> b, bool trans_a = false, bool trans_b = false) {
  Tape<S>* t = detail::same_tape(a, b, "bmm2x2");
  detail::require(a.cols() == 4 && b.cols() == 4, "bmm2x2 rows must hold 4 entries");
  detail::require(a.rows() == b.rows(), "bmm2x2 batch sizes differ");
  typename Tape<S>::Node n;
  n.op = Op::kBmm2x2;
  n.a = a.idx;
  n.b = b.idx;
  n.i0 = trans_a ? 1 : 0;
  n.i1 = trans_b ? 1 : 0;
  n.value.resize(a.rows(), 4);
  using M2 = Eigen::Matrix<S, 2, 2>;
  const Mat<S>& av = a.value();
  const Mat<S>& bv = b.value();
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    M2 A, B;
    A << av(r, 0), av(r, 1), av(r, 2), av(r, 3);
    B << bv(r, 0), bv(r, 1), bv(r, 2), bv(r, 3);
    if (trans_a) A.transposeInPlace();
    if (trans_b) B.transposeInPlace();
    const M2 C = A * B;
    n.value(r, 0) = C(0, 0);
    n.value(r, 1) = C(0, 1);
    n.value(r, 2) = C(1, 0);
    n.value(r, 3) = C(1, 1);
  }
  return t->wrap(t->push(std::move(n)));
}

}  // namespace ad
}  // namespace mtpgo
