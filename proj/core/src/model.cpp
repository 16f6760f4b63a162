#include "uspil/model.hpp"

#include <random>

namespace uspil {

void NetworkSpec::validate() const {
  if (input_dim != 1 && input_dim != 3)
    throw ConfigError("input_dim must be 1 (t) or 3 (x,y,t)");
  if (output_dim != 2) throw ConfigError("output_dim must be 2");
  if (embed_dim <= 0) throw ConfigError("embed_dim must be positive");
  if (hidden.empty()) throw ConfigError("at least one hidden layer required");
  for (int h : hidden)
    if (h <= 0) throw ConfigError("hidden layer widths must be positive");
  if (!input_lo.empty() &&
      (input_lo.size() != static_cast<std::size_t>(input_dim) ||
       input_hi.size() != static_cast<std::size_t>(input_dim)))
    throw ConfigError("input normalization bounds must match input_dim");
}

NetworkLayout build_layout(const NetworkSpec& spec) {
  spec.validate();
  NetworkLayout lay;
  std::size_t off = 0;
  auto push = [&](int in, int out, bool act) {
    LayerLayout L;
    L.in = in;
    L.out = out;
    L.w_off = off;
    off += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
    L.b_off = off;
    off += static_cast<std::size_t>(out);
    if (act) {
      L.act_off = static_cast<std::ptrdiff_t>(off);
      off += 5;
    }
    lay.layers.push_back(L);
  };
  push(spec.input_dim, spec.embed_dim, false);
  int prev = spec.embed_dim;
  for (int h : spec.hidden) {
    push(prev, h, true);
    prev = h;
  }
  push(prev, spec.output_dim, false);
  lay.n_params = off;
  return lay;
}

namespace {

// Portable uniform in [0,1): top 53 bits of the engine output.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double> init_params(const NetworkSpec& spec, const NetworkLayout& lay) {
  std::vector<double> p(lay.n_params, 0.0);
  std::mt19937_64 rng(spec.seed);
  const ActivationParams defaults;
  for (const LayerLayout& L : lay.layers) {
    const double limit = std::sqrt(6.0 / (L.in + L.out));
    for (std::size_t k = 0; k < static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out); ++k)
      p[L.w_off + k] = limit * (2.0 * uniform01(rng) - 1.0);
    // biases stay zero
    if (L.act_off >= 0) {
      double* a = &p[static_cast<std::size_t>(L.act_off)];
      a[0] = defaults.a_tanh;
      a[1] = defaults.b_scale;
      a[2] = defaults.c_sin;
      a[3] = defaults.d_freq;
      a[4] = defaults.e_lin;
    }
  }
  return p;
}

}  // namespace

Network::Network(NetworkSpec spec)
    : spec_(std::move(spec)), layout_(build_layout(spec_)), params_(init_params(spec_, layout_)) {}

Network::Network(NetworkSpec spec, std::vector<double> params)
    : spec_(std::move(spec)), layout_(build_layout(spec_)), params_(std::move(params)) {
  if (params_.size() != layout_.n_params)
    throw StructuralError("parameter vector does not match layout");
}

ActivationParams Network::activation(int hidden_layer) const {
  const LayerLayout& L = layout_.layers.at(static_cast<std::size_t>(hidden_layer + 1));
  if (L.act_off < 0) throw StructuralError("layer has no activation params");
  const double* a = &params_[static_cast<std::size_t>(L.act_off)];
  return ActivationParams{a[0], a[1], a[2], a[3], a[4]};
}

std::pair<double, double> forward(const Network& net, std::span<const double> x) {
  if (static_cast<int>(x.size()) != net.spec().input_dim)
    throw StructuralError("forward: point dimension mismatch");
  std::vector<double> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double sc, sh;
    input_norm_coeffs(net.spec(), static_cast<int>(i), &sc, &sh);
    in[i] = x[i] * sc + sh;
  }
  double out[2];
  eval_layers<double, double>(net.layout(), net.params(), in, out,
                              [](double b) { return b; });
  return {out[0], out[1]};
}

}  // namespace uspil
