#include <doctest.h>

#include <cmath>
#include <random>

#include "uspil/losses.hpp"
#include "uspil/training.hpp"

using namespace uspil;

namespace {

LVParams unit_params() {
  LVParams p;
  p.alpha = p.beta = p.delta = p.gamma = 1.0;
  p.d_u = 0.12;
  p.d_v = 0.05;
  return p;
}

ProblemSpec ode_problem() {
  ProblemSpec prob;
  prob.mode = ProblemMode::kOde1d;
  prob.params = unit_params();
  prob.domain.t0 = 0.0;
  prob.domain.t1 = 20.0;
  prob.ic1d = {2.0, 1.0};
  return prob;
}

// constant-output network: zero weights, output bias (u0, v0)
Network constant_net(int input_dim, double u0, double v0) {
  NetworkSpec s;
  s.input_dim = input_dim;
  s.embed_dim = 4;
  s.hidden = {4};
  const NetworkLayout lay = build_layout(s);
  std::vector<double> p(lay.n_params, 0.0);
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 0] = 1.0;  // a_tanh (irrelevant)
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 1] = 1.0;
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 3] = 1.0;
  p[lay.layers.back().b_off + 0] = u0;
  p[lay.layers.back().b_off + 1] = v0;
  return Network(s, p);
}

// u_hat(t) = 2 + t, v_hat(t) = 1 through identity activations
Network linear_time_net() {
  NetworkSpec s;
  s.input_dim = 1;
  s.embed_dim = 1;
  s.hidden = {1};
  const NetworkLayout lay = build_layout(s);
  std::vector<double> p(lay.n_params, 0.0);
  p[lay.layers[0].w_off] = 1.0;                                  // embed: z = t
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 4] = 1.0;  // e_lin = 1
  p[lay.layers[1].w_off] = 1.0;                                  // hidden: z = t
  p[lay.layers[2].w_off + 0] = 1.0;                              // u = t + 2
  p[lay.layers[2].b_off + 0] = 2.0;
  p[lay.layers[2].w_off + 1] = 0.0;                              // v = 1
  p[lay.layers[2].b_off + 1] = 1.0;
  return Network(s, p);
}

// u_hat(x,y,t) = sin(2 pi x / L), v_hat = 0 via the sine activation branch
Network sine_x_net(double length) {
  NetworkSpec s;
  s.input_dim = 3;
  s.embed_dim = 1;
  s.hidden = {1};
  const NetworkLayout lay = build_layout(s);
  std::vector<double> p(lay.n_params, 0.0);
  p[lay.layers[0].w_off + 0] = 2.0 * M_PI / length;  // embed: z = 2 pi x / L
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 2] = 1.0;  // c_sin = 1
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 3] = 1.0;  // d_freq = 1
  p[lay.layers[1].w_off] = 1.0;
  p[lay.layers[2].w_off + 0] = 1.0;  // u = sin(z)
  return Network(s, p);
}

}  // namespace

TEST_CASE("sample_collocation: bounds and determinism") {
  const ProblemSpec prob = ode_problem();
  CollocationCounts counts;
  counts.interior = 1000;
  counts.ic = 2;
  counts.data = 0;
  const CollocationBatch a = sample_collocation(prob, counts, 99);
  CHECK(a.interior.size() == 1000);
  for (const auto& x : a.interior) {
    CHECK(x[0] >= 0.0);
    CHECK(x[0] <= 20.0);
  }
  for (const auto& pt : a.ic_points) {
    CHECK(pt.x[0] == 0.0);
    CHECK(pt.u == 2.0);
    CHECK(pt.v == 1.0);
  }

  const CollocationBatch b = sample_collocation(prob, counts, 99);
  REQUIRE(a.interior.size() == b.interior.size());
  for (std::size_t i = 0; i < a.interior.size(); ++i) CHECK(a.interior[i][0] == b.interior[i][0]);

  const CollocationBatch c = sample_collocation(prob, counts, 100);
  CHECK(a.interior[0][0] != c.interior[0][0]);
}

TEST_CASE("sample_collocation: 2D regions") {
  ProblemSpec prob = ode_problem();
  prob.mode = ProblemMode::kPde2d;
  prob.domain.length = 20.0;
  CollocationCounts counts;
  counts.interior = 200;
  counts.ic = 50;
  counts.bc = 60;
  counts.data = 0;
  counts.cons_slices = 4;
  counts.cons_points_per_slice = 8;
  const CollocationBatch b = sample_collocation(prob, counts, 5);
  CHECK(b.input_dim == 3);
  CHECK(b.length == 20.0);
  for (const auto& x : b.interior) {
    CHECK(x[0] >= 0.0);
    CHECK(x[0] <= 20.0);
    CHECK(x[1] >= 0.0);
    CHECK(x[1] <= 20.0);
    CHECK(x[2] >= 0.0);
    CHECK(x[2] <= 20.0);
  }
  for (const auto& pt : b.ic_points) CHECK(pt.x[2] == 0.0);
  // bc points pair the axis faces x in {0, L} / y in {0, L}
  for (const auto& bc : b.bc_points) {
    CHECK((bc.axis == 0 || bc.axis == 1));
    CHECK(bc.a >= 0.0);
    CHECK(bc.a <= 20.0);
    CHECK(bc.t >= 0.0);
    CHECK(bc.t <= 20.0);
  }
  CHECK(b.cons_slice_times.size() == 4);
  CHECK(b.cons_slice_xy.size() == 8);
}

TEST_CASE("data_loss") {
  const ProblemSpec prob = ode_problem();
  CollocationBatch batch;
  batch.input_dim = 1;

  SUBCASE("exact match gives zero") {
    const Network net = constant_net(1, 2.0, 1.0);
    batch.data_points.push_back({{0.5, 0, 0}, 2.0, 1.0});
    CHECK(data_loss(net, batch) == 0.0);
  }
  SUBCASE("single point squared error") {
    const Network net = constant_net(1, 1.0, 1.0);
    batch.data_points.push_back({{0.5, 0, 0}, 0.0, 0.0});
    CHECK(data_loss(net, batch) == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("mean, not sum: duplicating points changes nothing") {
    const Network net = constant_net(1, 1.0, 1.0);
    batch.data_points.push_back({{0.5, 0, 0}, 0.0, 0.0});
    const double l1 = data_loss(net, batch);
    batch.data_points.push_back(batch.data_points[0]);
    CHECK(data_loss(net, batch) == l1);
  }
  SUBCASE("empty data set is zero with a warning flag") {
    const Network net = constant_net(1, 1.0, 1.0);
    bool warned = false;
    CHECK(data_loss(net, batch, &warned) == 0.0);
    CHECK(warned);
  }
  (void)prob;
}

TEST_CASE("physics_loss: constant equilibrium network is exactly zero") {
  const ProblemSpec prob = ode_problem();
  const Network net = constant_net(1, 1.0, 1.0);  // the unit-parameter equilibrium
  const CollocationBatch batch = sample_collocation(prob, {128, 2, 0, 0, 0, 0}, 1);
  CHECK(physics_loss(net, batch, prob.params, ProblemMode::kOde1d) == 0.0);

  NetworkSpec s;
  s.input_dim = 1;
  s.embed_dim = 8;
  s.hidden = {8};
  s.seed = 77;
  const Network random_net(s);
  CHECK(physics_loss(random_net, batch, prob.params, ProblemMode::kOde1d) > 0.0);
}

TEST_CASE("physics_loss zero for constant equilibrium nets of any architecture") {
  const ProblemSpec prob = ode_problem();
  const CollocationBatch batch = sample_collocation(prob, {32, 2, 0, 0, 0, 0}, 2);
  for (int embed : {2, 8}) {
    for (int width : {3, 9}) {
      NetworkSpec s;
      s.input_dim = 1;
      s.embed_dim = embed;
      s.hidden = {width, width};
      const NetworkLayout lay = build_layout(s);
      std::vector<double> p(lay.n_params, 0.0);
      for (const auto& L : lay.layers)
        if (L.act_off >= 0) {
          p[static_cast<std::size_t>(L.act_off) + 0] = 1.0;
          p[static_cast<std::size_t>(L.act_off) + 1] = 1.0;
          p[static_cast<std::size_t>(L.act_off) + 3] = 1.0;
        }
      p[lay.layers.back().b_off + 0] = 1.0;
      p[lay.layers.back().b_off + 1] = 1.0;
      const Network net(s, p);
      CHECK(physics_loss(net, batch, prob.params, ProblemMode::kOde1d) == 0.0);
    }
  }
}

TEST_CASE("icbc_loss") {
  SUBCASE("network equal to the initial condition gives zero L_ic") {
    const Network net = constant_net(1, 2.0, 1.0);
    CollocationBatch batch;
    batch.input_dim = 1;
    batch.ic_points.push_back({{0.0, 0, 0}, 2.0, 1.0});
    auto [lic, lbc] = icbc_loss(net, batch, "periodic");
    CHECK(lic == 0.0);
    CHECK(lbc == 0.0);  // 1D mode: no boundary term, ever
  }

  SUBCASE("sin(2 pi x / L): periodic match, Neumann penalty (2 pi / L)^2") {
    const double L = 20.0;
    const Network net = sine_x_net(L);
    CollocationBatch batch;
    batch.input_dim = 3;
    batch.length = L;
    for (int i = 0; i < 8; ++i)
      batch.bc_points.push_back({0, 2.5 * i, 1.0});  // axis 0: faces x=0 and x=L

    auto [lic_p, lbc_p] = icbc_loss(net, batch, "periodic");
    CHECK(lic_p == 0.0);
    CHECK(lbc_p < 1e-20);

    auto [lic_n, lbc_n] = icbc_loss(net, batch, "neumann");
    (void)lic_n;
    const double expect = std::pow(2.0 * M_PI / L, 2);
    CHECK(lbc_n == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("conservation_loss") {
  const LVParams p = unit_params();
  SUBCASE("constant equilibrium network gives zero") {
    const Network net = constant_net(1, 1.0, 1.0);
    CollocationBatch batch;
    batch.input_dim = 1;
    for (int i = 0; i < 16; ++i) batch.interior.push_back({1.25 * i, 0, 0});
    CHECK(conservation_loss(net, batch, p, ProblemMode::kOde1d) == 0.0);
  }
  SUBCASE("hand chain rule for u = 2 + t, v = 1") {
    const Network net = linear_time_net();
    CollocationBatch batch;
    batch.input_dim = 1;
    for (int i = 0; i < 16; ++i) batch.interior.push_back({0.5 + 1.2 * i, 0, 0});
    double expect = 0.0;
    for (const auto& x : batch.interior) {
      const double u = 2.0 + x[0];
      const double hdot = (1.0 - 1.0 / u) * 1.0;  // (delta - gamma/u) u_t, v term zero
      const double mdot = 1.0;                    // u_t + v_t
      expect += hdot * hdot + mdot * mdot;
    }
    expect /= static_cast<double>(batch.interior.size());
    CHECK(conservation_loss(net, batch, p, ProblemMode::kOde1d) ==
          doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("temporal_reg_loss") {
  SUBCASE("linear-in-time network has zero curvature") {
    const Network net = linear_time_net();
    CollocationBatch batch;
    batch.input_dim = 1;
    for (int i = 0; i < 8; ++i) batch.interior.push_back({0.5 + 2.0 * i, 0, 0});
    CHECK(temporal_reg_loss(net, batch, ProblemMode::kOde1d) == 0.0);
  }
  SUBCASE("per-point term: u_tt = 2 contributes 4") {
    CHECK(reg_point_term(2.0, 0.0) == 4.0);
  }
  SUBCASE("output scaling scales the loss quadratically") {
    NetworkSpec s;
    s.input_dim = 1;
    s.embed_dim = 4;
    s.hidden = {6};
    s.seed = 5;
    Network net(s);
    CollocationBatch batch;
    batch.input_dim = 1;
    for (int i = 0; i < 8; ++i) batch.interior.push_back({0.3 * i, 0, 0});
    const double l1 = temporal_reg_loss(net, batch, ProblemMode::kOde1d);

    const LayerLayout& out = net.layout().layers.back();
    std::vector<double> scaled(net.params().begin(), net.params().end());
    const double c = 3.0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(out.in * out.out); ++k)
      scaled[out.w_off + k] *= c;
    scaled[out.b_off + 0] *= c;
    scaled[out.b_off + 1] *= c;
    const Network net_scaled(s, scaled);
    const double l2 = temporal_reg_loss(net_scaled, batch, ProblemMode::kOde1d);
    CHECK(l2 == doctest::Approx(c * c * l1).epsilon(1e-12));
  }
}

TEST_CASE("total_loss") {
  LossWeights w;
  w.data = 1.0;
  w.pde = w.ic = w.bc = w.cons = w.reg = 0.0;
  auto [t1, b1] = total_loss({3.0, 9.0, 1.0, 1.0, 1.0, 1.0}, w);
  CHECK(t1 == 3.0);
  CHECK(b1.total == 3.0);

  auto [t2, b2] = total_loss({0, 0, 0, 0, 0, 0}, LossWeights{});
  CHECK(t2 == 0.0);
  (void)b2;

  LossWeights w3;
  w3.data = 1.0;
  w3.pde = 2.0;
  w3.ic = w3.bc = w3.cons = w3.reg = 0.0;
  auto [t3, b3] = total_loss({3.0, 4.0, 7.0, 7.0, 7.0, 7.0}, w3);
  CHECK(t3 == 11.0);

  // breakdown identity
  double acc = 0.0;
  for (int k = 0; k < kNumLossComponents; ++k) acc += b3.weights[k] * b3.raw_of(k);
  CHECK(std::abs(acc - b3.total) < 1e-12);
}

TEST_CASE("update_weights") {
  SUBCASE("equal components leave equal weights unchanged") {
    LossWeights w;
    w.data = w.pde = w.ic = 1.0;
    w.bc = w.cons = w.reg = 0.0;
    w.adapt_exponent = 1.0;
    auto [t, b] = total_loss({2.5, 2.5, 2.5, 0, 0, 0}, w);
    (void)t;
    const LossWeights u = update_weights(w, b);
    CHECK(u.data == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(u.pde == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(u.ic == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("worked two-component example") {
    LossWeights w;
    w.data = w.pde = 1.0;
    w.ic = w.bc = w.cons = w.reg = 0.0;
    w.adapt_exponent = 1.0;
    auto [t, b] = total_loss({1.0, 4.0, 0, 0, 0, 0}, w);
    (void)t;
    const LossWeights u = update_weights(w, b);
    CHECK(u.data == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(u.pde == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(u.ic == 0.0);  // inactive components untouched
  }
  SUBCASE("zero exponent freezes the weights") {
    LossWeights w;
    w.data = 0.7;
    w.pde = 0.3;
    w.adapt_exponent = 0.0;
    auto [t, b] = total_loss({1.0, 100.0, 0, 0, 0, 0}, w);
    (void)t;
    const LossWeights u = update_weights(w, b);
    CHECK(u.data == 0.7);
    CHECK(u.pde == 0.3);
  }
  SUBCASE("one update tightens the weighted-term spread") {
    std::mt19937_64 rng(31);
    auto u01 = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    for (int round = 0; round < 50; ++round) {
      LossWeights w;
      w.data = 0.2 + u01();
      w.pde = 0.2 + u01();
      w.ic = 0.2 + u01();
      w.cons = 0.2 + u01();
      w.adapt_exponent = 0.25 + 0.5 * u01();
      const std::array<double, 6> comps = {0.01 + u01(), 0.01 + u01(), 0.01 + u01(),
                                           0.0,          0.01 + u01(), 0.0};
      auto [t, b] = total_loss(comps, w);
      (void)t;
      const LossWeights u = update_weights(w, b);
      auto spread = [&](const LossWeights& ww) {
        double lo = 1e300, hi = 0.0;
        for (int k : {0, 1, 2, 4}) {
          const double pk = ww[k] * comps[static_cast<std::size_t>(k)];
          lo = std::min(lo, pk);
          hi = std::max(hi, pk);
        }
        return hi / lo;
      };
      CHECK(spread(u) <= spread(w) * (1.0 + 1e-12));
    }
  }
  SUBCASE("normalization restores the weight budget") {
    LossWeights w;
    w.data = w.pde = 1.0;
    w.ic = w.bc = w.cons = w.reg = 0.0;
    w.adapt_exponent = 1.0;
    auto [t, b] = total_loss({1.0, 4.0, 0, 0, 0, 0}, w);
    (void)t;
    const LossWeights u = normalize_weights(update_weights(w, b), w);
    CHECK(u.data + u.pde == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(u.data / u.pde == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_CASE("curriculum phases") {
  const CurriculumSchedule s2d = CurriculumSchedule::for_epochs(1000, true);
  CHECK(curriculum_phase(0, s2d, true).phase == 1);
  CHECK(curriculum_phase(99, s2d, true).phase == 1);
  CHECK(curriculum_phase(100, s2d, true).phase == 2);
  CHECK(curriculum_phase(100, s2d, true).interior_density == 0.25);
  CHECK(curriculum_phase(300, s2d, true).phase == 3);
  CHECK(curriculum_phase(700, s2d, true).phase == 4);
  CHECK(curriculum_phase(5000, s2d, true).phase == 4);  // clamps past the end
  CHECK(curriculum_phase(700, s2d, true).adapt_weights);
  CHECK_FALSE(curriculum_phase(0, s2d, true).adapt_weights);

  // phase 1 in 2D trains on data + ic only
  const PhaseInfo p1 = curriculum_phase(0, s2d, true);
  CHECK(p1.active.get(LossComponent::kData));
  CHECK(p1.active.get(LossComponent::kIc));
  CHECK_FALSE(p1.active.get(LossComponent::kPde));
  CHECK_FALSE(p1.active.get(LossComponent::kCons));

  // 1D schedule collapses to phases 1 and 4
  const CurriculumSchedule s1d = CurriculumSchedule::for_epochs(1000, false);
  CHECK(curriculum_phase(0, s1d, false).phase == 1);
  CHECK(curriculum_phase(299, s1d, false).phase == 1);
  CHECK(curriculum_phase(300, s1d, false).phase == 4);
  const PhaseInfo q1 = curriculum_phase(0, s1d, false);
  CHECK(q1.active.get(LossComponent::kPde));  // physics active from the start in 1D
  CHECK_FALSE(q1.active.get(LossComponent::kReg));
}

TEST_CASE("taped epoch evaluation agrees with the component ops and fd") {
  const ProblemSpec prob = ode_problem();
  NetworkSpec s;
  s.input_dim = 1;
  s.embed_dim = 4;
  s.hidden = {6};
  s.seed = 21;
  s.input_lo = {0.0};
  s.input_hi = {20.0};
  std::vector<double> init_params;
  {
    const Network fresh(s);
    init_params.assign(fresh.params().begin(), fresh.params().end());
    const LayerLayout& out = fresh.layout().layers.back();
    init_params[out.b_off + 0] = 1.6;  // keep outputs well inside u,v > 0
    init_params[out.b_off + 1] = 1.1;
  }
  const Network net(s, init_params);

  const ReferenceSolution1D ref =
      integrate_ode(prob.params, prob.ic1d, {0.0, 20.0}, 1e-9, 1e-9, 201);
  CollocationCounts counts;
  counts.interior = 7;
  counts.ic = 2;
  counts.data = 5;
  const CollocationBatch batch = sample_collocation(prob, counts, 77, &ref);

  LossWeights w;
  w.data = 0.9;
  w.pde = 1.3;
  w.ic = 0.7;
  w.cons = 0.4;
  w.reg = 0.2;
  ActiveSet active;
  for (int k : {0, 1, 2, 4, 5}) active.on[static_cast<std::size_t>(k)] = true;

  const EpochEval ev = evaluate_epoch(net, batch, prob, w, active, 1);

  // raw component values equal the public double-path operations
  CHECK(ev.raw[0] == doctest::Approx(data_loss(net, batch)).epsilon(1e-13));
  CHECK(ev.raw[1] ==
        doctest::Approx(physics_loss(net, batch, prob.params, prob.mode)).epsilon(1e-13));
  auto [lic, lbc] = icbc_loss(net, batch, "");
  CHECK(ev.raw[2] == doctest::Approx(lic).epsilon(1e-13));
  CHECK(ev.raw[3] == 0.0);
  (void)lbc;
  CHECK(ev.raw[4] ==
        doctest::Approx(conservation_loss(net, batch, prob.params, prob.mode)).epsilon(1e-13));
  CHECK(ev.raw[5] == doctest::Approx(temporal_reg_loss(net, batch, prob.mode)).epsilon(1e-13));

  // gradient of the weighted total against central differences through the
  // double path
  auto weighted_total = [&](const std::vector<double>& theta) {
    const Network n2(s, theta);
    const std::array<double, kNumLossComponents> comps = {
        data_loss(n2, batch),
        physics_loss(n2, batch, prob.params, prob.mode),
        icbc_loss(n2, batch, "").first,
        0.0,
        conservation_loss(n2, batch, prob.params, prob.mode),
        temporal_reg_loss(n2, batch, prob.mode)};
    return total_loss(comps, w).first;
  };
  std::vector<double> theta(net.params().begin(), net.params().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    const double h = 1e-6 * std::max(1.0, std::abs(saved));
    theta[i] = saved + h;
    const double fp = weighted_total(theta);
    theta[i] = saved - h;
    const double fm = weighted_total(theta);
    theta[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - ev.grads[i]) /
                                std::max({1.0, std::abs(fd), std::abs(ev.grads[i])}));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("taped epoch evaluation: 2D with boundary and conservation slices") {
  ProblemSpec prob;
  prob.mode = ProblemMode::kPde2d;
  prob.params = unit_params();
  prob.domain.t0 = 0.0;
  prob.domain.t1 = 2.0;
  prob.domain.length = 10.0;
  prob.domain.boundary = "periodic";

  NetworkSpec s;
  s.input_dim = 3;
  s.embed_dim = 4;
  s.hidden = {5};
  s.seed = 13;
  std::vector<double> init_params;
  {
    const Network fresh(s);
    init_params.assign(fresh.params().begin(), fresh.params().end());
    const LayerLayout& out = fresh.layout().layers.back();
    init_params[out.b_off + 0] = 1.6;
    init_params[out.b_off + 1] = 1.1;
  }
  const Network net(s, init_params);

  CollocationCounts counts;
  counts.interior = 4;
  counts.ic = 3;
  counts.bc = 4;
  counts.data = 0;
  counts.cons_slices = 2;
  counts.cons_points_per_slice = 3;
  const CollocationBatch batch = sample_collocation(prob, counts, 3);

  LossWeights w;
  w.data = 0.0;
  w.pde = 1.1;
  w.ic = 0.8;
  w.bc = 0.6;
  w.cons = 0.5;
  w.reg = 0.3;
  ActiveSet active;
  for (int k : {1, 2, 3, 4, 5}) active.on[static_cast<std::size_t>(k)] = true;

  const EpochEval ev = evaluate_epoch(net, batch, prob, w, active, 1);
  CHECK(ev.raw[1] ==
        doctest::Approx(physics_loss(net, batch, prob.params, prob.mode)).epsilon(1e-12));
  auto [lic, lbc] = icbc_loss(net, batch, prob.domain.boundary);
  CHECK(ev.raw[2] == doctest::Approx(lic).epsilon(1e-12));
  CHECK(ev.raw[3] == doctest::Approx(lbc).epsilon(1e-12));
  CHECK(ev.raw[4] ==
        doctest::Approx(conservation_loss(net, batch, prob.params, prob.mode)).epsilon(1e-12));

  auto weighted_total = [&](const std::vector<double>& theta) {
    const Network n2(s, theta);
    const auto [l_ic, l_bc] = icbc_loss(n2, batch, prob.domain.boundary);
    const std::array<double, kNumLossComponents> comps = {
         0.0,
        physics_loss(n2, batch, prob.params, prob.mode),
        l_ic,
        l_bc,
        conservation_loss(n2, batch, prob.params, prob.mode),
        temporal_reg_loss(n2, batch, prob.mode)};
    return total_loss(comps, w).first;
  };
  std::vector<double> theta(net.params().begin(), net.params().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); i += 3) {  // every third parameter
    const double saved = theta[i];
    const double h = 1e-6 * std::max(1.0, std::abs(saved));
    theta[i] = saved + h;
    const double fp = weighted_total(theta);
    theta[i] = saved - h;
    const double fm = weighted_total(theta);
    theta[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - ev.grads[i]) /
                                std::max({1.0, std::abs(fd), std::abs(ev.grads[i])}));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("neumann boundary gradient is also taped correctly") {
  ProblemSpec prob;
  prob.mode = ProblemMode::kPde2d;
  prob.params = unit_params();
  prob.domain.length = 10.0;
  prob.domain.boundary = "neumann";
  prob.domain.t1 = 2.0;

  NetworkSpec s;
  s.input_dim = 3;
  s.embed_dim = 3;
  s.hidden = {4};
  s.seed = 19;
  const Network net(s);
  CollocationCounts counts;
  counts.interior = 2;
  counts.ic = 1;
  counts.bc = 5;
  counts.data = 0;
  const CollocationBatch batch = sample_collocation(prob, counts, 8);

  LossWeights w;
  w.data = w.cons = w.reg = 0.0;
  w.pde = 0.0;
  w.ic = 0.0;
  w.bc = 1.0;
  ActiveSet active;
  active.set(LossComponent::kBc, true);
  const EpochEval ev = evaluate_epoch(net, batch, prob, w, active, 1);
  CHECK(ev.raw[3] ==
        doctest::Approx(icbc_loss(net, batch, "neumann").second).epsilon(1e-12));

  auto lbc_at = [&](const std::vector<double>& theta) {
    return icbc_loss(Network(s, theta), batch, "neumann").second;
  };
  std::vector<double> theta(net.params().begin(), net.params().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); i += 2) {
    const double saved = theta[i];
    const double h = 1e-6;
    theta[i] = saved + h;
    const double fp = lbc_at(theta);
    theta[i] = saved - h;
    const double fm = lbc_at(theta);
    theta[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - ev.grads[i]) /
                                std::max({1.0, std::abs(fd), std::abs(ev.grads[i])}));
  }
  CHECK(worst < 1e-7);
}
