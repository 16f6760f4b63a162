#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uspil/autodiff.hpp"
#include "uspil/errors.hpp"
#include "uspil/loss_types.hpp"

namespace uspil {

/// Trainable coefficients of sigma(x) = a*tanh(b*x) + c*sin(d*x) + e*x.
/// Defaults reduce sigma to plain tanh.
struct ActivationParams {
  double a_tanh = 1.0;
  double b_scale = 1.0;
  double c_sin = 0.0;
  double d_freq = 1.0;
  double e_lin = 0.0;
};

inline double adaptive_activation(double x, const ActivationParams& p) {
  return p.a_tanh * std::tanh(p.b_scale * x) + p.c_sin * std::sin(p.d_freq * x) +
         p.e_lin * x;
}

/// Architecture description. The same hidden stack serves input_dim 1
/// (time) and 3 (x, y, t); only the embedding matrix shape differs.
struct NetworkSpec {
  int input_dim = 1;  // 1 or 3
  int embed_dim = 128;
  std::vector<int> hidden = {64, 64, 64};
  int output_dim = 2;  // [u_hat, v_hat], always 2
  std::uint64_t seed = 42;
  // Optional affine input normalization to [-1,1]; identity when lo==hi.
  std::vector<double> input_lo;
  std::vector<double> input_hi;

  void validate() const;
  bool normalized() const { return !input_lo.empty(); }
};

/// Offsets of one dense layer inside the flat parameter vector.
struct LayerLayout {
  int in = 0;
  int out = 0;
  std::size_t w_off = 0;    // row-major [out x in]
  std::size_t b_off = 0;    // [out]
  std::ptrdiff_t act_off = -1;  // 5 activation params, -1 for linear layers
};

struct NetworkLayout {
  std::vector<LayerLayout> layers;  // embed, hidden..., output
  std::size_t n_params = 0;
};

NetworkLayout build_layout(const NetworkSpec& spec);

/// The unified feed-forward network: flat parameter storage plus layout.
/// Construction from a spec is deterministic in spec.seed.
class Network {
 public:
  explicit Network(NetworkSpec spec);
  Network(NetworkSpec spec, std::vector<double> params);

  const NetworkSpec& spec() const { return spec_; }
  const NetworkLayout& layout() const { return layout_; }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::size_t n_params() const { return params_.size(); }

  ActivationParams activation(int hidden_layer) const;

  bool operator==(const Network& other) const {
    return spec_.input_dim == other.spec_.input_dim &&
           spec_.embed_dim == other.spec_.embed_dim &&
           spec_.hidden == other.spec_.hidden &&
           spec_.seed == other.spec_.seed &&
           spec_.input_lo == other.spec_.input_lo &&
           spec_.input_hi == other.spec_.input_hi && params_ == other.params_;
  }

 private:
  NetworkSpec spec_;
  NetworkLayout layout_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Generic evaluation. S is the state scalar (double, Var, or a Jet over
// either); WS is the weight scalar (double for plain evaluation, Var when
// the pass is tape-recorded). Promote lifts a weight to a state constant.
// ---------------------------------------------------------------------------

template <class S, class WS>
inline S adaptive_act_generic(const S& z, const WS* p) {
  return wmul(p[0], tanh(wmul(p[1], z))) + wmul(p[2], sin(wmul(p[3], z))) +
         wmul(p[4], z);
}

template <class S, class WS, class Promote>
void eval_layers(const NetworkLayout& lay, std::span<const WS> w,
                 std::span<const S> input, S out[2], Promote&& promote) {
  std::vector<S> cur(input.begin(), input.end());
  std::vector<S> next;
  const std::size_t n_layers = lay.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LayerLayout& L = lay.layers[l];
    next.assign(static_cast<std::size_t>(L.out), S{});
    for (int i = 0; i < L.out; ++i) {
      S acc = promote(w[L.b_off + static_cast<std::size_t>(i)]);
      const WS* row = &w[L.w_off + static_cast<std::size_t>(i * L.in)];
      for (int j = 0; j < L.in; ++j) acc = fmadd(acc, row[j], cur[static_cast<std::size_t>(j)]);
      if (L.act_off >= 0)
        acc = adaptive_act_generic(acc, &w[static_cast<std::size_t>(L.act_off)]);
      next[static_cast<std::size_t>(i)] = acc;
    }
    cur.swap(next);
  }
  out[0] = cur[0];
  out[1] = cur[1];
}

/// Affine map of raw input coordinate i to [-1,1] (identity if disabled).
inline void input_norm_coeffs(const NetworkSpec& spec, int i, double* scale,
                              double* shift) {
  *scale = 1.0;
  *shift = 0.0;
  if (spec.normalized() && spec.input_hi[static_cast<std::size_t>(i)] >
                               spec.input_lo[static_cast<std::size_t>(i)]) {
    const double lo = spec.input_lo[static_cast<std::size_t>(i)];
    const double hi = spec.input_hi[static_cast<std::size_t>(i)];
    *scale = 2.0 / (hi - lo);
    *shift = -(lo + hi) / (hi - lo);
  }
}

/// Plain forward pass: (u_hat, v_hat) at one point.
std::pair<double, double> forward(const Network& net, std::span<const double> x);

/// Forward pass carrying jets over doubles; axes[k] names the input
/// coordinate differentiated along jet axis k.
template <int A, bool P>
std::pair<Jet<double, A, P>, Jet<double, A, P>> forward_jet(
    const Network& net, std::span<const double> x, const std::array<int, A>& axes) {
  using J = Jet<double, A, P>;
  const NetworkSpec& spec = net.spec();
  if (static_cast<int>(x.size()) != spec.input_dim)
    throw StructuralError("forward_jet: point dimension mismatch");
  std::vector<J> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double sc, sh;
    input_norm_coeffs(spec, static_cast<int>(i), &sc, &sh);
    J xi = J::constant(x[i] * sc + sh);
    for (int k = 0; k < A; ++k)
      if (axes[static_cast<std::size_t>(k)] == static_cast<int>(i)) xi.d1[static_cast<std::size_t>(k)] = sc;
    in[i] = xi;
  }
  J out[2];
  eval_layers<J, double>(net.layout(), net.params(), in, out,
                         [](double b) { return J::constant(b); });
  return {out[0], out[1]};
}

/// Network bound to a tape: parameters registered as Vars so every pass
/// recorded through it is differentiable with respect to them.
class TapedNetwork {
 public:
  TapedNetwork(Tape& tape, const Network& net) : tape_(&tape), net_(&net) {
    vars_.reserve(net.n_params());
    for (double p : net.params()) vars_.push_back(tape.param(p));
    zero_ = tape.leaf(0.0);
    one_ = tape.leaf(1.0);
    tape.freeze_prefix();
  }

  Tape& tape() const { return *tape_; }
  const Network& network() const { return *net_; }
  std::span<const Var> param_vars() const { return vars_; }

  std::pair<Var, Var> value(std::span<const double> x) const {
    check_dim(x);
    std::vector<Var> cur(x.size()), next;
    for (std::size_t i = 0; i < x.size(); ++i) cur[i] = normalized_input(x[i], static_cast<int>(i));
    std::span<const Var> w(vars_);
    for (const LayerLayout& L : net_->layout().layers) {
      next.resize(static_cast<std::size_t>(L.out));
      tape_->dense_affine(static_cast<std::int32_t>(L.w_off), static_cast<std::int32_t>(L.b_off),
                          L.out, L.in, cur.data(), next.data());
      if (L.act_off >= 0)
        for (Var& z : next)
          z = adaptive_act_generic(z, &w[static_cast<std::size_t>(L.act_off)]);
      cur.swap(next);
    }
    return {cur[0], cur[1]};
  }

  template <int A, bool P>
  std::pair<Jet<Var, A, P>, Jet<Var, A, P>> jet(std::span<const double> x,
                                                const std::array<int, A>& axes) const {
    using J = Jet<Var, A, P>;
    check_dim(x);
    constexpr int kComps = 1 + A + (P ? A : 0);
    std::vector<J> cur(x.size()), next;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double sc, sh;
      input_norm_coeffs(net_->spec(), static_cast<int>(i), &sc, &sh);
      J xi;
      xi.v = normalized_input(x[i], static_cast<int>(i));
      detail::fill_zero(xi, zero_);
      for (int k = 0; k < A; ++k)
        if (axes[static_cast<std::size_t>(k)] == static_cast<int>(i))
          xi.d1[static_cast<std::size_t>(k)] = (sc == 1.0) ? one_ : tape_->leaf(sc);
      cur[i] = xi;
    }
    std::span<const Var> w(vars_);
    std::vector<Var> in_comp, out_comp;
    for (const LayerLayout& L : net_->layout().layers) {
      next.resize(static_cast<std::size_t>(L.out));
      in_comp.resize(static_cast<std::size_t>(L.in));
      out_comp.resize(static_cast<std::size_t>(L.out));
      // each jet component is an independent pass through the same weights;
      // only the value component sees the bias
      for (int comp = 0; comp < kComps; ++comp) {
        const bool is_value = comp == 0;
        const int axis = is_value ? 0 : (comp - 1) % A;
        const bool second = !is_value && comp > A;
        for (int j = 0; j < L.in; ++j) {
          const J& cj = cur[static_cast<std::size_t>(j)];
          in_comp[static_cast<std::size_t>(j)] =
              is_value ? cj.v
                       : (second ? cj.d2[static_cast<std::size_t>(axis)]
                                 : cj.d1[static_cast<std::size_t>(axis)]);
        }
        tape_->dense_affine(static_cast<std::int32_t>(L.w_off),
                            is_value ? static_cast<std::int32_t>(L.b_off) : -1, L.out,
                            L.in, in_comp.data(), out_comp.data());
        for (int i = 0; i < L.out; ++i) {
          J& t = next[static_cast<std::size_t>(i)];
          if (is_value) t.v = out_comp[static_cast<std::size_t>(i)];
          else if (second) t.d2[static_cast<std::size_t>(axis)] = out_comp[static_cast<std::size_t>(i)];
          else t.d1[static_cast<std::size_t>(axis)] = out_comp[static_cast<std::size_t>(i)];
        }
      }
      if (L.act_off >= 0)
        for (J& z : next)
          z = adaptive_act_generic(z, &w[static_cast<std::size_t>(L.act_off)]);
      cur.swap(next);
    }
    return {cur[0], cur[1]};
  }

  /// Copies current parameter values back out (after an optimizer step the
  /// taped copies are stale; the trainer rebuilds instead).
  Var zero() const { return zero_; }
  Var one() const { return one_; }

 private:
  Var normalized_input(double xi, int i) const {
    double sc, sh;
    input_norm_coeffs(net_->spec(), i, &sc, &sh);
    return tape_->leaf(xi * sc + sh);
  }
  void check_dim(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != net_->spec().input_dim)
      throw StructuralError("TapedNetwork: point dimension mismatch");
  }

  Tape* tape_;
  const Network* net_;
  std::vector<Var> vars_;
  Var zero_, one_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  long epoch = 0;
  std::optional<LossBreakdown> final_loss;
};

struct NetworkCheckpoint {
  Network network;
  CheckpointMeta meta;

  bool operator==(const NetworkCheckpoint& o) const {
    return network == o.network && meta.epoch == o.meta.epoch;
  }
};

/// JSON layout: {"spec":{...},"layers":[{"w":[[...]],"b":[...],"act":{...}}],
/// "meta":{...}}. Doubles are written with 17 significant digits, so
/// save -> load -> save is byte-identical.
void save_checkpoint(const NetworkCheckpoint& ckpt, const std::filesystem::path& file);
NetworkCheckpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace uspil
