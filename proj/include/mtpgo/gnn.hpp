#pragma once

// Graph layers used inside the recurrent cells: GraphConv, GCN, GAT (the
// attentive variant with the edge weight appended as a feature), and GAT+
// (GAT with an extra linear transform of the center node). All forwards run
// on the autodiff tape and operate on every node of a graph at once.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mtpgo/autodiff.hpp"
#include "mtpgo/gradcheck.hpp"
#include "mtpgo/parameters.hpp"

namespace mtpgo {

// Slope of the leaky ReLU inside attention logits.
inline constexpr double kAttentionLeakySlope = 0.2;
// Slope of leaky ReLU activations between stacked layers and in embeddings.
inline constexpr double kActivationLeakySlope = 0.01;

enum class GnnKind : std::uint8_t { kGraphConv, kGcn, kGat, kGatPlus };
enum class HeadCombine : std::uint8_t { kConcatenate, kAverage };

inline const char* gnn_kind_name(GnnKind k) {
  switch (k) {
    case GnnKind::kGraphConv: return "graphconv";
    case GnnKind::kGcn: return "gcn";
    case GnnKind::kGat: return "gat";
    case GnnKind::kGatPlus: return "gatplus";
  }
  return "unknown";
}

inline GnnKind gnn_kind_from_name(const std::string& name) {
  if (name == "graphconv") return GnnKind::kGraphConv;
  if (name == "gcn") return GnnKind::kGcn;
  if (name == "gat") return GnnKind::kGat;
  if (name == "gatplus") return GnnKind::kGatPlus;
  throw ConfigError("unknown gnn layer kind '" + name + "'");
}

struct GnnLayerConfig {
  GnnKind kind = GnnKind::kGatPlus;
  int in_width = 0;
  int out_width = 0;  // per attention head
  int heads = 1;
  HeadCombine combine = HeadCombine::kConcatenate;

  void check() const {
    if (in_width <= 0 || out_width <= 0) throw ConfigError("gnn layer widths must be positive");
    if (heads < 1) throw ConfigError("gnn head count must be >= 1");
  }
};

inline bool gnn_uses_attention(GnnKind k) {
  return k == GnnKind::kGat || k == GnnKind::kGatPlus;
}

// Width of the layer output after head combination.
inline int gnn_output_width(const GnnLayerConfig& cfg) {
  if (gnn_uses_attention(cfg.kind) && cfg.combine == HeadCombine::kConcatenate)
    return cfg.out_width * cfg.heads;
  return cfg.out_width;
}

// A plain (non-tape) graph: node representations, undirected edges without
// self loops, and one weight per edge.
struct GraphBatch {
  Mat<double> h;
  std::vector<std::pair<int, int>> edges;
  std::vector<double> weights;

  int nodes() const { return static_cast<int>(h.rows()); }

  void check() const {
    if (weights.size() != edges.size()) throw DataError("graph weights do not match edges");
    for (const auto& [a, b] : edges) {
      if (a == b) throw DataError("graph stores a self edge");
      if (a < 0 || b < 0 || a >= nodes() || b >= nodes()) throw DataError("graph edge out of range");
    }
  }
};

// Dense symmetric weight matrix with the conventional self weight 1.
inline Mat<double> dense_weights(const GraphBatch& batch) {
  batch.check();
  Mat<double> w = Mat<double>::Identity(batch.nodes(), batch.nodes());
  for (std::size_t e = 0; e < batch.edges.size(); ++e) {
    const auto [a, b] = batch.edges[e];
    w(a, b) = batch.weights[e];
    w(b, a) = batch.weights[e];
  }
  return w;
}

// Dense 0/1 adjacency without self loops.
inline Mat<double> dense_adjacency(int nodes, const std::vector<std::pair<int, int>>& edges) {
  Mat<double> a = Mat<double>::Zero(nodes, nodes);
  for (const auto& [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

inline Mat<double> complete_adjacency(int nodes) {
  return Mat<double>::Ones(nodes, nodes) - Mat<double>::Identity(nodes, nodes);
}

// --- parameter registration --------------------------------------------------

template <class S>
void register_gnn_layer(ParameterSet<S>& ps, const std::string& prefix,
                        const GnnLayerConfig& cfg, std::mt19937_64& rng) {
  cfg.check();
  const int eff_out = gnn_output_width(cfg);
  switch (cfg.kind) {
    case GnnKind::kGraphConv:
      init_glorot(ps.add(prefix + "W1", cfg.in_width, cfg.out_width), rng);
      init_glorot(ps.add(prefix + "W2", cfg.in_width, cfg.out_width), rng);
      ps.add(prefix + "b", 1, cfg.out_width);
      break;
    case GnnKind::kGcn:
      init_glorot(ps.add(prefix + "W2", cfg.in_width, cfg.out_width), rng);
      ps.add(prefix + "b", 1, cfg.out_width);
      break;
    case GnnKind::kGatPlus:
    case GnnKind::kGat:
      for (int h = 0; h < cfg.heads; ++h) {
        const std::string hp = prefix + "h" + std::to_string(h) + ".";
        init_glorot(ps.add(hp + "att_W", 2 * cfg.in_width + 1, cfg.out_width), rng);
        init_glorot(ps.add(hp + "att_a", cfg.out_width, 1), rng);
        init_glorot(ps.add(hp + "W2", cfg.in_width, cfg.out_width), rng);
      }
      ps.add(prefix + "b", 1, eff_out);
      if (cfg.kind == GnnKind::kGatPlus)
        init_glorot(ps.add(prefix + "W1", cfg.in_width, eff_out), rng);
      break;
  }
}

// --- forwards ----------------------------------------------------------------

namespace detail {

// Attention distribution of one head over inclusive neighborhoods. Rows are
// center nodes; masked (non-neighbor) entries are exactly zero.
template <class S>
ad::Var<S> gat_head_attention(ad::Tape<S>& tape, const BoundParams<S>& params,
                              const std::string& head_prefix, ad::Var<S> h,
                              ad::Var<S> weights, const Mat<S>& adjacency) {
  const int n = static_cast<int>(h.rows());
  std::vector<int> center(static_cast<std::size_t>(n) * n), neighbor(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      center[static_cast<std::size_t>(i) * n + j] = i;
      neighbor[static_cast<std::size_t>(i) * n + j] = j;
    }
  }
  ad::Var<S> h_center = ad::gather_rows(h, center);
  ad::Var<S> h_neighbor = ad::gather_rows(h, neighbor);
  ad::Var<S> w_feature = ad::reshape(weights, static_cast<Eigen::Index>(n) * n, 1);
  ad::Var<S> z = ad::concat_cols<S>({h_center, h_neighbor, w_feature});
  ad::Var<S> scores = ad::matmul(
      ad::leaky_relu(ad::matmul(z, params[head_prefix + "att_W"]), S(kAttentionLeakySlope)),
      params[head_prefix + "att_a"]);
  ad::Var<S> logits = ad::reshape(scores, n, n);
  Mat<S> incl = adjacency + Mat<S>::Identity(n, n);
  return ad::masked_softmax_rows(logits, tape.constant(std::move(incl), "gat_mask"));
}

}  // namespace detail

// Attention weights of one head (n x n rows summing to 1 over inclusive
// neighborhoods), exposed for inspection and tests.
template <class S>
ad::Var<S> gat_attention_weights(ad::Tape<S>& tape, const GnnLayerConfig& cfg,
                                 const BoundParams<S>& params, const std::string& prefix,
                                 int head, ad::Var<S> h, ad::Var<S> weights,
                                 const Mat<S>& adjacency) {
  cfg.check();
  if (!gnn_uses_attention(cfg.kind)) throw ConfigError("attention weights requested from a non-attention layer");
  if (head < 0 || head >= cfg.heads) throw ConfigError("attention head index out of range");
  return detail::gat_head_attention(tape, params, prefix + "h" + std::to_string(head) + ".",
                                    h, weights, adjacency);
}

// One graph layer. `weights` is the dense symmetric kernel-weight matrix
// (self weights 1); `adjacency` is the 0/1 edge indicator without self loops.
template <class S>
ad::Var<S> gnn_layer_forward(ad::Tape<S>& tape, const GnnLayerConfig& cfg,
                             const BoundParams<S>& params, const std::string& prefix,
                             ad::Var<S> h, ad::Var<S> weights, const Mat<S>& adjacency) {
  cfg.check();
  const int n = static_cast<int>(h.rows());
  if (h.cols() != cfg.in_width) throw ConfigError("gnn input width mismatch at " + prefix);
  if (weights.rows() != n || weights.cols() != n)
    throw ConfigError("gnn weight matrix shape mismatch at " + prefix);

  switch (cfg.kind) {
    case GnnKind::kGraphConv: {
      // Neighbor mean of W2-transformed representations, kernel-weighted.
      ad::Var<S> w_off = ad::mul(weights, tape.constant(Mat<S>(adjacency), "adj"));
      Mat<S> inv_counts(n, 1);
      for (int i = 0; i < n; ++i) {
        const double c = adjacency.row(i).sum();
        inv_counts(i, 0) = c > 0 ? S(1) / static_cast<S>(c) : S(0);  // empty neighborhood -> zero aggregate
      }
      ad::Var<S> agg = ad::mul(ad::matmul(w_off, ad::matmul(h, params[prefix + "W2"])),
                               tape.constant(std::move(inv_counts), "inv_counts"));
      return ad::add(ad::add(agg, ad::matmul(h, params[prefix + "W1"])), params[prefix + "b"]);
    }
    case GnnKind::kGcn: {
      // Symmetrically normalised inclusive aggregation with self weight 1.
      ad::Var<S> w_off = ad::mul(weights, tape.constant(Mat<S>(adjacency), "adj"));
      ad::Var<S> w_incl = ad::add(w_off, tape.constant(Mat<S>(Mat<S>::Identity(n, n)), "self"));
      ad::Var<S> degree = ad::add(ad::row_sum(w_off), tape.constant(S(1)));  // n x 1
      ad::Var<S> inv_sqrt = ad::rsqrt(degree);
      ad::Var<S> normalized = ad::mul(ad::mul(w_incl, inv_sqrt), ad::transpose(inv_sqrt));
      return ad::add(ad::matmul(normalized, ad::matmul(h, params[prefix + "W2"])), params[prefix + "b"]);
    }
    case GnnKind::kGat:
    case GnnKind::kGatPlus: {
      std::vector<ad::Var<S>> head_outputs;
      for (int hd = 0; hd < cfg.heads; ++hd) {
        const std::string hp = prefix + "h" + std::to_string(hd) + ".";
        ad::Var<S> alpha = detail::gat_head_attention(tape, params, hp, h, weights, adjacency);
        head_outputs.push_back(ad::matmul(alpha, ad::matmul(h, params[hp + "W2"])));
      }
      ad::Var<S> combined;
      if (cfg.combine == HeadCombine::kConcatenate) {
        combined = head_outputs.size() == 1 ? head_outputs[0] : ad::concat_cols<S>(head_outputs);
      } else {
        combined = head_outputs[0];
        for (std::size_t i = 1; i < head_outputs.size(); ++i) combined = ad::add(combined, head_outputs[i]);
        if (head_outputs.size() > 1) combined = ad::mul(combined, tape.constant(S(1) / S(head_outputs.size())));
      }
      ad::Var<S> out = ad::add(combined, params[prefix + "b"]);
      if (cfg.kind == GnnKind::kGatPlus)
        out = ad::add(out, ad::matmul(h, params[prefix + "W1"]));
      return out;
    }
  }
  throw std::logic_error("unreachable gnn kind");
}

// --- stacked per-gate networks ------------------------------------------------

// The network inside each recurrent gate: `depth` graph layers with leaky
// ReLU activations between them. Hidden layers concatenate attention heads,
// the final layer averages them so its width is exact.
struct GnnStackConfig {
  GnnKind kind = GnnKind::kGatPlus;
  int in_width = 0;
  int hidden_width = 0;
  int out_width = 0;
  int heads = 1;
  int depth = 2;

  GnnLayerConfig layer(int index) const {
    if (depth < 1) throw ConfigError("gnn stack depth must be >= 1");
    GnnLayerConfig cfg;
    cfg.kind = kind;
    cfg.heads = heads;
    if (index + 1 == depth) {
      cfg.combine = HeadCombine::kAverage;
      cfg.out_width = out_width;
    } else {
      cfg.combine = HeadCombine::kConcatenate;
      cfg.out_width = hidden_width;
    }
    cfg.in_width = index == 0 ? in_width : gnn_output_width(layer(index - 1));
    return cfg;
  }
};

template <class S>
void register_gnn_stack(ParameterSet<S>& ps, const std::string& prefix,
                        const GnnStackConfig& cfg, std::mt19937_64& rng) {
  for (int l = 0; l < cfg.depth; ++l)
    register_gnn_layer(ps, prefix + "l" + std::to_string(l) + ".", cfg.layer(l), rng);
}

template <class S>
ad::Var<S> gnn_stack_forward(ad::Tape<S>& tape, const GnnStackConfig& cfg,
                             const BoundParams<S>& params, const std::string& prefix,
                             ad::Var<S> h, ad::Var<S> weights, const Mat<S>& adjacency) {
  ad::Var<S> x = h;
  for (int l = 0; l < cfg.depth; ++l) {
    x = gnn_layer_forward(tape, cfg.layer(l), params, prefix + "l" + std::to_string(l) + ".",
                          x, weights, adjacency);
    if (l + 1 < cfg.depth) x = ad::leaky_relu(x, S(kActivationLeakySlope));
  }
  return x;
}

}  // namespace mtpgo
