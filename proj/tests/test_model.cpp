#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "uspil/model.hpp"

using namespace uspil;

namespace {

NetworkSpec small_spec() {
  NetworkSpec s;
  s.input_dim = 1;
  s.embed_dim = 8;
  s.hidden = {8};
  s.seed = 7;
  return s;
}

ScalarJetFn net_output_fn(const Network& net, int channel) {
  return [&net, channel](std::span<const Jet2d> in) {
    std::vector<Jet2d> norm(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      double sc, sh;
      input_norm_coeffs(net.spec(), static_cast<int>(i), &sc, &sh);
      norm[i] = wmul(sc, in[i]) + sh;
    }
    Jet2d out[2];
    eval_layers<Jet2d, double>(net.layout(), net.params(), norm, out,
                               [](double b) { return Jet2d::constant(b); });
    return out[static_cast<std::size_t>(channel)];
  };
}

}  // namespace

TEST_CASE("init is deterministic for a fixed seed") {
  const Network a(small_spec());
  const Network b(small_spec());
  CHECK(a == b);
}

TEST_CASE("init shapes follow the spec") {
  NetworkSpec s = small_spec();
  s.input_dim = 3;
  const Network net(s);
  CHECK(net.layout().layers.front().in == 3);
  CHECK(net.layout().layers.front().out == 8);
  CHECK(net.layout().layers.back().out == 2);

  const NetworkSpec defaults;
  CHECK(defaults.embed_dim == 128);
  CHECK(defaults.output_dim == 2);
}

TEST_CASE("invalid input_dim is a configuration error") {
  NetworkSpec s = small_spec();
  s.input_dim = 2;
  CHECK_THROWS_AS(Network{s}, ConfigError);
}

TEST_CASE("dimension unification: hidden stack identical across input dims") {
  NetworkSpec s1 = small_spec();
  NetworkSpec s3 = small_spec();
  s3.input_dim = 3;
  const Network n1(s1), n3(s3);
  REQUIRE(n1.layout().layers.size() == n3.layout().layers.size());
  for (std::size_t l = 1; l < n1.layout().layers.size(); ++l) {
    CHECK(n1.layout().layers[l].in == n3.layout().layers[l].in);
    CHECK(n1.layout().layers[l].out == n3.layout().layers[l].out);
  }
  CHECK(n1.layout().layers[0].in == 1);
  CHECK(n3.layout().layers[0].in == 3);
}

TEST_CASE("adaptive activation") {
  ActivationParams p;
  SUBCASE("sigma(0) = 0 for any parameters") {
    p = {0.3, 2.0, -0.7, 1.3, 0.9};
    CHECK(adaptive_activation(0.0, p) == 0.0);
  }
  SUBCASE("defaults reduce to tanh") {
    CHECK(adaptive_activation(1.0, ActivationParams{}) ==
          doctest::Approx(0.7615941559557649).epsilon(1e-14));
  }
  SUBCASE("pure sine branch") {
    p = {0.0, 1.0, 1.0, 1.0, 0.0};
    CHECK(adaptive_activation(M_PI / 2.0, p) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("forward: zero weights give zero output") {
  NetworkSpec s = small_spec();
  const NetworkLayout lay = build_layout(s);
  std::vector<double> params(lay.n_params, 0.0);
  const Network net(s, params);
  const double x[1] = {3.7};
  auto [u, v] = forward(net, std::span<const double>(x, 1));
  CHECK(u == 0.0);
  CHECK(v == 0.0);
}

TEST_CASE("forward: hand-computed linear instance") {
  // 1 -> 2 -> 2 -> 2 with identity activation (e_lin = 1, others off)
  NetworkSpec s;
  s.input_dim = 1;
  s.embed_dim = 2;
  s.hidden = {2};
  const NetworkLayout lay = build_layout(s);
  std::vector<double> p(lay.n_params, 0.0);
  // embed: W = [[1],[2]], b = [0.5, -1]
  p[lay.layers[0].w_off + 0] = 1.0;
  p[lay.layers[0].w_off + 1] = 2.0;
  p[lay.layers[0].b_off + 0] = 0.5;
  p[lay.layers[0].b_off + 1] = -1.0;
  // hidden: W = [[1, 0.5], [-1, 2]], b = [0, 1], sigma(x) = x
  p[lay.layers[1].w_off + 0] = 1.0;
  p[lay.layers[1].w_off + 1] = 0.5;
  p[lay.layers[1].w_off + 2] = -1.0;
  p[lay.layers[1].w_off + 3] = 2.0;
  p[lay.layers[1].b_off + 1] = 1.0;
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 0] = 0.0;  // a_tanh
  p[static_cast<std::size_t>(lay.layers[1].act_off) + 4] = 1.0;  // e_lin
  // out: W = [[1, 1], [2, -1]], b = [0, 0.25]
  p[lay.layers[2].w_off + 0] = 1.0;
  p[lay.layers[2].w_off + 1] = 1.0;
  p[lay.layers[2].w_off + 2] = 2.0;
  p[lay.layers[2].w_off + 3] = -1.0;
  p[lay.layers[2].b_off + 1] = 0.25;

  const Network net(s, p);
  const double x[1] = {2.0};
  auto [u, v] = forward(net, std::span<const double>(x, 1));
  // h0 = [2.5, 3]; h1 = [2.5 + 1.5, -2.5 + 6 + 1] = [4, 4.5]
  // out = [4 + 4.5, 8 - 4.5 + 0.25] = [8.5, 3.75]
  CHECK(u == doctest::Approx(8.5).epsilon(1e-14));
  CHECK(v == doctest::Approx(3.75).epsilon(1e-14));
}

TEST_CASE("forward is pure and rejects dimension mismatches") {
  const Network net(small_spec());
  const double x[1] = {0.42};
  auto [u1, v1] = forward(net, std::span<const double>(x, 1));
  auto [u2, v2] = forward(net, std::span<const double>(x, 1));
  CHECK(u1 == u2);
  CHECK(v1 == v2);

  const double xy[2] = {0.1, 0.2};
  CHECK_THROWS_AS((void)forward(net, std::span<const double>(xy, 2)), StructuralError);
}

TEST_CASE("default activation params make a plain tanh MLP") {
  NetworkSpec s = small_spec();
  const Network net(s);
  // manual tanh-MLP evaluation from the same parameters
  const auto& lay = net.layout();
  std::span<const double> p = net.params();
  const double x = -0.3;
  std::vector<double> cur = {x};
  for (std::size_t li = 0; li < lay.layers.size(); ++li) {
    const LayerLayout& L = lay.layers[li];
    std::vector<double> next(static_cast<std::size_t>(L.out));
    for (int i = 0; i < L.out; ++i) {
      double acc = p[L.b_off + static_cast<std::size_t>(i)];
      for (int j = 0; j < L.in; ++j)
        acc += p[L.w_off + static_cast<std::size_t>(i * L.in + j)] * cur[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = (L.act_off >= 0) ? std::tanh(acc) : acc;
    }
    cur = std::move(next);
  }
  const double xin[1] = {x};
  auto [u, v] = forward(net, std::span<const double>(xin, 1));
  CHECK(u == doctest::Approx(cur[0]).epsilon(1e-14));
  CHECK(v == doctest::Approx(cur[1]).epsilon(1e-14));
}

TEST_CASE("taped evaluation matches plain evaluation") {
  NetworkSpec s = small_spec();
  s.hidden = {8, 8};
  s.input_lo = {0.0};
  s.input_hi = {20.0};
  const Network net(s);
  Tape tape;
  TapedNetwork tnet(tape, net);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const double x[1] = {20.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53};
    auto [u, v] = forward(net, std::span<const double>(x, 1));
    auto [tu, tv] = tnet.value(std::span<const double>(x, 1));
    CHECK(tu.value() == doctest::Approx(u).epsilon(1e-15));
    CHECK(tv.value() == doctest::Approx(v).epsilon(1e-15));

    auto [ju, jv] = forward_jet<1, true>(net, std::span<const double>(x, 1), {0});
    auto [gu, gv] = tnet.jet<1, true>(std::span<const double>(x, 1), {0});
    CHECK(gu.v.value() == doctest::Approx(ju.v).epsilon(1e-14));
    CHECK(gu.d1[0].value() == doctest::Approx(ju.d1[0]).epsilon(1e-12));
    CHECK(gu.d2[0].value() == doctest::Approx(ju.d2[0]).epsilon(1e-12));
    CHECK(gv.d1[0].value() == doctest::Approx(jv.d1[0]).epsilon(1e-12));
    tape.rewind();
  }
}

TEST_CASE("network output is smooth (fd audit at random points)") {
  NetworkSpec s = small_spec();
  s.hidden = {8, 8};
  const Network net(s);
  std::mt19937_64 rng(17);
  for (int i = 0; i < 5; ++i) {
    const double pt[1] = {-2.0 + 4.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53};
    for (int ch = 0; ch < 2; ++ch) {
      const FdReport rep = fd_check(net_output_fn(net, ch), pt, 1e-6);
      CHECK(rep.max_rel_dev_d1 < 1e-6);
      CHECK(rep.max_rel_dev_d2 < 1e-4);
    }
  }
}

TEST_CASE("checkpoint roundtrip") {
  const auto dir = std::filesystem::temp_directory_path() / "uspil_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto file = dir / "net.json";

  NetworkSpec s = small_spec();
  s.input_lo = {0.0};
  s.input_hi = {20.0};
  NetworkCheckpoint ckpt{Network(s), CheckpointMeta{}};
  ckpt.meta.epoch = 123;
  LossBreakdown b;
  b.raw = {0.1, 0.2, 0.3, 0.0, 0.4, 0.5};
  b.weights = LossWeights{};
  b.total = 1.5;
  b.epoch = 123;
  ckpt.meta.final_loss = b;

  SUBCASE("field-for-field equality and stable bytes") {
    save_checkpoint(ckpt, file);
    const NetworkCheckpoint loaded = load_checkpoint(file);
    CHECK(loaded == ckpt);
    CHECK(loaded.meta.final_loss.has_value());
    CHECK(loaded.meta.final_loss->total == 1.5);

    const auto file2 = dir / "net2.json";
    save_checkpoint(loaded, file2);
    std::ifstream f1(file), f2(file2);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
  }

  SUBCASE("identical forward outputs after reload") {
    save_checkpoint(ckpt, file);
    const NetworkCheckpoint loaded = load_checkpoint(file);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
      const double x[1] = {20.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53};
      auto [u0, v0] = forward(ckpt.network, std::span<const double>(x, 1));
      auto [u1, v1] = forward(loaded.network, std::span<const double>(x, 1));
      CHECK(u0 == u1);
      CHECK(v0 == v1);
    }
  }

  SUBCASE("truncated file reports a parse error with byte offset") {
    save_checkpoint(ckpt, file);
    std::ifstream in(file);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(file, std::ios::trunc);
    out << content.substr(0, content.size() / 2);
    out.close();
    try {
      (void)load_checkpoint(file);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  }

  std::filesystem::remove_all(dir);
}
