#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mtpgo/gnn.hpp"
#include "mtpgo/gradcheck.hpp"
#include "mtpgo/scene.hpp"

namespace ad = mtpgo::ad;
using mtpgo::GnnKind;
using mtpgo::GnnLayerConfig;
using mtpgo::Mat;
using mtpgo::ParameterSet;

namespace {

Mat<double> random_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                       double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Runs one layer forward on fresh parameter bindings and returns the output.
Mat<double> run_layer(const GnnLayerConfig& cfg, const ParameterSet<double>& params,
                      const Mat<double>& h, const Mat<double>& weights, const Mat<double>& adjacency) {
  ad::Tape<double> tape;
  mtpgo::BoundParams<double> bound(tape, params);
  ad::Var<double> out = mtpgo::gnn_layer_forward(tape, cfg, bound, "", tape.constant(h),
                                                 tape.constant(weights), adjacency);
  return out.value();
}

GnnLayerConfig make_cfg(GnnKind kind, int in, int out, int heads = 1) {
  GnnLayerConfig cfg;
  cfg.kind = kind;
  cfg.in_width = in;
  cfg.out_width = out;
  cfg.heads = heads;
  return cfg;
}

}  // namespace

TEST_CASE("graphconv matches hand-computed anchors", "[gnn]") {
  std::mt19937_64 rng(3);
  const auto cfg = make_cfg(GnnKind::kGraphConv, 3, 3);
  ParameterSet<double> params;
  mtpgo::register_gnn_layer(params, "", cfg, rng);

  SECTION("isolated node sees only its own transform") {
    params.at("W1") = Mat<double>::Identity(3, 3) * 2.0;
    params.at("W2") = random_mat(3, 3, rng);
    params.at("b").setConstant(0.5);
    Mat<double> h = random_mat(1, 3, rng);
    const Mat<double> out = run_layer(cfg, params, h, Mat<double>::Identity(1, 1), Mat<double>::Zero(1, 1));
    const Mat<double> expect = (2.0 * h).array() + 0.5;
    REQUIRE((out - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("two nodes with identity transforms sum self and neighbor") {
    params.at("W1") = Mat<double>::Identity(3, 3);
    params.at("W2") = Mat<double>::Identity(3, 3);
    params.at("b").setZero();
    Mat<double> h = random_mat(2, 3, rng);
    Mat<double> w = Mat<double>::Ones(2, 2);
    const Mat<double> out = run_layer(cfg, params, h, w, mtpgo::complete_adjacency(2));
    REQUIRE((out.row(0) - (h.row(0) + h.row(1))).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((out.row(1) - (h.row(0) + h.row(1))).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("identical neighbors average to a single transformed value") {
    params.at("W1").setZero();
    params.at("W2") = random_mat(3, 3, rng);
    params.at("b").setZero();
    Mat<double> h(3, 3);
    h.row(0) = random_mat(1, 3, rng);
    h.row(1) = h.row(0);
    h.row(2) = h.row(0);
    const Mat<double> out =
        run_layer(cfg, params, h, Mat<double>::Ones(3, 3), mtpgo::complete_adjacency(3));
    const Mat<double> expect = h.row(0) * params.at("W2");
    REQUIRE((out.row(0) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gcn matches hand-computed anchors", "[gnn]") {
  std::mt19937_64 rng(5);
  const auto cfg = make_cfg(GnnKind::kGcn, 3, 2);
  ParameterSet<double> params;
  mtpgo::register_gnn_layer(params, "", cfg, rng);
  params.at("W2") = random_mat(3, 2, rng);
  params.at("b").setConstant(0.25);

  SECTION("isolated node reduces to its own transform") {
    Mat<double> h = random_mat(1, 3, rng);
    const Mat<double> out = run_layer(cfg, params, h, Mat<double>::Identity(1, 1), Mat<double>::Zero(1, 1));
    const Mat<double> expect = (h * params.at("W2")).array() + 0.25;
    REQUIRE((out - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("two nodes with unit weight use degree 2 normalisation") {
    Mat<double> h = random_mat(2, 3, rng);
    const Mat<double> out =
        run_layer(cfg, params, h, Mat<double>::Ones(2, 2), mtpgo::complete_adjacency(2));
    // d_hat = 2 for both nodes: self coefficient 1/2, neighbor coefficient 1/2.
    const Mat<double> expect0 = (0.5 * h.row(0) + 0.5 * h.row(1)) * params.at("W2");
    REQUIRE((out.row(0) - ((expect0.array() + 0.25).matrix())).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("zero edge weights reduce to the isolated case") {
    Mat<double> h = random_mat(2, 3, rng);
    Mat<double> w = Mat<double>::Identity(2, 2);  // self weights 1, edges 0
    const Mat<double> out = run_layer(cfg, params, h, w, mtpgo::complete_adjacency(2));
    const Mat<double> expect = ((h * params.at("W2")).array() + 0.25).matrix();
    REQUIRE((out - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gat attention is uniform for identical inputs and one on self when isolated", "[gnn]") {
  std::mt19937_64 rng(7);
  const auto cfg = make_cfg(GnnKind::kGat, 3, 4);
  ParameterSet<double> params;
  mtpgo::register_gnn_layer(params, "", cfg, rng);

  {
    // Three identical nodes with identical weights: uniform attention.
    Mat<double> h(3, 3);
    h.row(0) = random_mat(1, 3, rng);
    h.row(1) = h.row(0);
    h.row(2) = h.row(0);
    ad::Tape<double> tape;
    mtpgo::BoundParams<double> bound(tape, params);
    ad::Var<double> alpha =
        mtpgo::gat_attention_weights(tape, cfg, bound, "", 0, tape.constant(h),
                                     tape.constant(Mat<double>(Mat<double>::Ones(3, 3))),
                                     mtpgo::complete_adjacency(3));
    REQUIRE((alpha.value().array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
  }
  {
    // Isolated node: all attention on self.
    Mat<double> h = random_mat(1, 3, rng);
    ad::Tape<double> tape;
    mtpgo::BoundParams<double> bound(tape, params);
    ad::Var<double> alpha = mtpgo::gat_attention_weights(
        tape, cfg, bound, "", 0, tape.constant(h), tape.constant(Mat<double>(Mat<double>::Identity(1, 1))),
        Mat<double>(Mat<double>::Zero(1, 1)));
    REQUIRE(alpha.value()(0, 0) == 1.0);
  }
}

TEST_CASE("gat attention rows sum to one over the neighborhood", "[gnn]") {
  std::mt19937_64 rng(11);
  const auto cfg = make_cfg(GnnKind::kGat, 4, 3, 2);
  ParameterSet<double> params;
  mtpgo::register_gnn_layer(params, "", cfg, rng);
  Mat<double> h = random_mat(5, 4, rng);
  Mat<double> w = random_mat(5, 5, rng, 0.1, 1.0);
  w = ((w + w.transpose()) / 2).eval();
  w.diagonal().setOnes();
  for (int head = 0; head < 2; ++head) {
    ad::Tape<double> tape;
    mtpgo::BoundParams<double> bound(tape, params);
    ad::Var<double> alpha = mtpgo::gat_attention_weights(
        tape, cfg, bound, "", head, tape.constant(h), tape.constant(w), mtpgo::complete_adjacency(5));
    for (int r = 0; r < 5; ++r) {
      REQUIRE(std::abs(alpha.value().row(r).sum() - 1.0) < 1e-9);
      REQUIRE(alpha.value().row(r).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("gat and gatplus anchors", "[gnn]") {
  std::mt19937_64 rng(13);

  SECTION("isolated gat node is its W2 transform plus bias") {
    const auto cfg = make_cfg(GnnKind::kGat, 3, 4);
    ParameterSet<double> params;
    mtpgo::register_gnn_layer(params, "", cfg, rng);
    params.at("b").setZero();
    Mat<double> h = random_mat(1, 3, rng);
    const Mat<double> out = run_layer(cfg, params, h, Mat<double>::Identity(1, 1), Mat<double>::Zero(1, 1));
    const Mat<double> expect = h * params.at("h0.W2");
    REQUIRE((out - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("uniform attention over identical neighbors returns the shared transform") {
    const auto cfg = make_cfg(GnnKind::kGat, 3, 4);
    ParameterSet<double> params;
    mtpgo::register_gnn_layer(params, "", cfg, rng);
    params.at("b").setZero();
    Mat<double> h(3, 3);
    h.row(0) = random_mat(1, 3, rng);
    h.row(1) = h.row(0);
    h.row(2) = h.row(0);
    const Mat<double> out =
        run_layer(cfg, params, h, Mat<double>::Ones(3, 3), mtpgo::complete_adjacency(3));
    const Mat<double> expect = h.row(0) * params.at("h0.W2");
    REQUIRE((out.row(0) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("two-head concatenation doubles the output width") {
    const auto cfg = make_cfg(GnnKind::kGat, 3, 4, 2);
    REQUIRE(mtpgo::gnn_output_width(cfg) == 8);
    ParameterSet<double> params;
    mtpgo::register_gnn_layer(params, "", cfg, rng);
    Mat<double> h = random_mat(3, 3, rng);
    const Mat<double> out =
        run_layer(cfg, params, h, Mat<double>::Ones(3, 3), mtpgo::complete_adjacency(3));
    REQUIRE(out.cols() == 8);
    REQUIRE(out.rows() == 3);
  }

  SECTION("gatplus adds the center transform and reduces to gat when W1 is zero") {
    const auto cfg_plus = make_cfg(GnnKind::kGatPlus, 3, 4);
    ParameterSet<double> params;
    mtpgo::register_gnn_layer(params, "", cfg_plus, rng);
    Mat<double> h = random_mat(3, 3, rng);
    Mat<double> w = Mat<double>::Ones(3, 3);
    const Mat<double> with_w1 = run_layer(cfg_plus, params, h, w, mtpgo::complete_adjacency(3));

    // Same parameters evaluated as plain gat.
    const auto cfg_gat = make_cfg(GnnKind::kGat, 3, 4);
    ParameterSet<double> gat_params;
    mtpgo::register_gnn_layer(gat_params, "", cfg_gat, rng);
    gat_params.at("h0.att_W") = params.at("h0.att_W");
    gat_params.at("h0.att_a") = params.at("h0.att_a");
    gat_params.at("h0.W2") = params.at("h0.W2");
    gat_params.at("b") = params.at("b");
    const Mat<double> gat_out = run_layer(cfg_gat, gat_params, h, w, mtpgo::complete_adjacency(3));

    REQUIRE(((with_w1 - gat_out) - h * params.at("W1")).cwiseAbs().maxCoeff() < 1e-12);

    params.at("W1").setZero();
    const Mat<double> zeroed = run_layer(cfg_plus, params, h, w, mtpgo::complete_adjacency(3));
    REQUIRE((zeroed - gat_out).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero edge weights remove neighbor influence for graphconv and gcn", "[gnn]") {
  std::mt19937_64 rng(17);
  for (const GnnKind kind : {GnnKind::kGraphConv, GnnKind::kGcn}) {
    const auto cfg = make_cfg(kind, 4, 4);
    ParameterSet<double> params;
    mtpgo::register_gnn_layer(params, "", cfg, rng);
    Mat<double> h = random_mat(4, 4, rng);
    Mat<double> w_zero = Mat<double>::Identity(4, 4);
    const Mat<double> out = run_layer(cfg, params, h, w_zero, mtpgo::complete_adjacency(4));
    // Changing a different node's representation must not change node 0.
    Mat<double> h2 = h;
    h2.row(2) = random_mat(1, 4, rng);
    const Mat<double> out2 = run_layer(cfg, params, h2, w_zero, mtpgo::complete_adjacency(4));
    REQUIRE((out.row(0) - out2.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("all layer kinds are permutation equivariant", "[gnn]") {
  std::mt19937_64 rng(19);
  const int n = 6;
  Mat<double> h = random_mat(n, 5, rng);
  Mat<double> pos = random_mat(n, 2, rng, -20.0, 20.0);
  const auto graph = mtpgo::build_ego_graph(pos);
  Mat<double> w(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) w(i, j) = mtpgo::kernel_weight(graph.distances(i, j), 10.0);

  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Mat<double> hp(n, 5), wp(n, n);
  for (int i = 0; i < n; ++i) {
    hp.row(i) = h.row(perm[i]);
    for (int j = 0; j < n; ++j) wp(i, j) = w(perm[i], perm[j]);
  }

  for (const GnnKind kind :
       {GnnKind::kGraphConv, GnnKind::kGcn, GnnKind::kGat, GnnKind::kGatPlus}) {
    DYNAMIC_SECTION(mtpgo::gnn_kind_name(kind)) {
      const auto cfg = make_cfg(kind, 5, 4, mtpgo::gnn_uses_attention(kind) ? 2 : 1);
      ParameterSet<double> params;
      mtpgo::register_gnn_layer(params, "", cfg, rng);
      const Mat<double> out = run_layer(cfg, params, h, w, mtpgo::complete_adjacency(n));
      const Mat<double> out_p = run_layer(cfg, params, hp, wp, mtpgo::complete_adjacency(n));
      for (int i = 0; i < n; ++i)
        REQUIRE((out_p.row(i) - out.row(perm[i])).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("every layer kind passes gradient checks including sigma-driven weights", "[gnn]") {
  std::mt19937_64 rng(23);
  const int n = 4;
  Mat<double> h_init = random_mat(n, 3, rng);
  Mat<double> pos = random_mat(n, 2, rng, -15.0, 15.0);
  const auto graph = mtpgo::build_ego_graph(pos);
  const Mat<double> sq_dist = graph.distances.array().square();

  for (const GnnKind kind :
       {GnnKind::kGraphConv, GnnKind::kGcn, GnnKind::kGat, GnnKind::kGatPlus}) {
    DYNAMIC_SECTION(mtpgo::gnn_kind_name(kind)) {
      const auto cfg = make_cfg(kind, 3, 3, mtpgo::gnn_uses_attention(kind) ? 2 : 1);
      ParameterSet<double> params;
      mtpgo::register_gnn_layer(params, "", cfg, rng);
      params.add("sigma_e", 1, 1)(0, 0) = 10.0;
      params.add("h", n, 3) = h_init;
      auto loss = [&](ad::Tape<double>& tape, const mtpgo::BoundParams<double>& p) {
        // Kernel weights derived from the learned sigma so its gradient is live.
        ad::Var<double> inv_sq = ad::div(tape.constant(1.0), ad::square(p["sigma_e"]));
        ad::Var<double> weights =
            ad::exp(ad::neg(ad::mul(tape.constant(sq_dist), inv_sq)));
        ad::Var<double> out =
            mtpgo::gnn_layer_forward(tape, cfg, p, "", p["h"], weights, mtpgo::complete_adjacency(n));
        return ad::sum_all(ad::square(out));
      };
      const auto report = mtpgo::check_gradients<double>(loss, params, 1e-5, 1e-4);
      INFO("worst " << report.worst.name << " analytic " << report.worst.analytic << " numeric "
                    << report.worst.numeric);
      REQUIRE(report.max_rel_err < 1e-6);
    }
  }
}

TEST_CASE("stacked gate network has the requested output width and differentiates", "[gnn]") {
  std::mt19937_64 rng(29);
  mtpgo::GnnStackConfig stack;
  stack.kind = GnnKind::kGat;
  stack.in_width = 5;
  stack.hidden_width = 4;
  stack.out_width = 6;
  stack.heads = 2;
  stack.depth = 2;
  // Hidden layer concatenates heads (width 8); final layer averages to 6.
  REQUIRE(mtpgo::gnn_output_width(stack.layer(0)) == 8);
  REQUIRE(stack.layer(1).in_width == 8);
  REQUIRE(mtpgo::gnn_output_width(stack.layer(1)) == 6);

  ParameterSet<double> params;
  mtpgo::register_gnn_stack(params, "s.", stack, rng);
  params.add("h", 3, 5) = random_mat(3, 5, rng);
  Mat<double> w = random_mat(3, 3, rng, 0.2, 0.9);
  w = ((w + w.transpose()) / 2).eval();
  w.diagonal().setOnes();
  auto loss = [&](ad::Tape<double>& tape, const mtpgo::BoundParams<double>& p) {
    ad::Var<double> out = mtpgo::gnn_stack_forward(tape, stack, p, "s.", p["h"],
                                                   tape.constant(w), mtpgo::complete_adjacency(3));
    return ad::sum_all(ad::square(out));
  };
  ad::Tape<double> probe;
  mtpgo::BoundParams<double> bound(probe, params);
  REQUIRE(mtpgo::gnn_stack_forward(probe, stack, bound, "s.", bound["h"], probe.constant(w),
                                   mtpgo::complete_adjacency(3))
              .cols() == 6);
  const auto report = mtpgo::check_gradients<double>(loss, params, 1e-5, 1e-4);
  REQUIRE(report.max_rel_err < 1e-6);
}
