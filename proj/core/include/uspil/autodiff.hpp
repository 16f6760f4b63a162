#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "uspil/errors.hpp"

namespace uspil {

class Tape;

/// Handle to one node of a reverse-mode tape. Carries its value so
/// arithmetic never has to read back through the tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id, double value)
      : tape_(tape), id_(id), value_(value) {}

  double value() const { return value_; }
  std::int32_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool attached() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
  double value_ = 0.0;
};

/// Dense map parameter-id -> d(loss)/d(parameter). Ids are the order in
/// which parameters were registered on the tape (0-based).
class GradMap {
 public:
  GradMap() = default;
  explicit GradMap(std::size_t n) : g_(n, 0.0) {}

  std::size_t size() const { return g_.size(); }
  double operator[](std::size_t id) const { return g_[id]; }
  double& operator[](std::size_t id) { return g_[id]; }
  std::span<const double> values() const { return g_; }
  std::span<double> values() { return g_; }

  void add_scaled(const GradMap& other, double scale) {
    assert(other.size() == size());
    for (std::size_t i = 0; i < g_.size(); ++i) g_[i] += scale * other.g_[i];
  }

 private:
  std::vector<double> g_;
};

/// Append-only record of primitive operations (a Wengert list). Scalar
/// nodes store up to three parents with precomputed local partials. Dense
/// affine layers are recorded as single super-nodes whose backward pass
/// recomputes partials from the cached weights and inputs, which keeps the
/// tape cache-resident instead of storing every multiply-accumulate edge.
///
/// Usage pattern for training: register parameters, freeze_prefix(), then
/// per collocation point record the forward graph, backward_accumulate()
/// on that point's contribution, and rewind(). Parameter adjoints keep
/// accumulating across points until begin_accumulation() is called again.
class Tape {
 public:
  Tape() { nodes_.reserve(1 << 16); }

  /// Registers a trainable parameter leaf. Only valid before freeze_prefix().
  Var param(double value) {
    if (frozen_) throw StructuralError("param registered after freeze_prefix");
    Var v = leaf(value);
    param_vals_.push_back(value);
    n_params_ = static_cast<std::int32_t>(nodes_.size());
    return v;
  }

  /// Constant leaf (zero adjoint flow out of it is fine; it has no parents).
  Var leaf(double value) {
    nodes_.push_back(Node{0.0, 0.0, 0.0, -1, -1, -1});
    return Var(this, static_cast<std::int32_t>(nodes_.size()) - 1, value);
  }

  /// Marks the end of the persistent region (parameters + shared constants).
  /// rewind() truncates back to this mark.
  void freeze_prefix() {
    frozen_ = true;
    prefix_ = static_cast<std::int32_t>(nodes_.size());
  }

  void rewind() {
    assert(frozen_);
    nodes_.resize(static_cast<std::size_t>(prefix_));
    layers_.clear();
    aux_ids_.clear();
    aux_vals_.clear();
  }

  /// Full reset, including parameters.
  void clear() {
    nodes_.clear();
    adj_.clear();
    param_vals_.clear();
    layers_.clear();
    aux_ids_.clear();
    aux_vals_.clear();
    n_params_ = 0;
    prefix_ = 0;
    frozen_ = false;
  }

  std::size_t size() const { return nodes_.size(); }
  std::int32_t n_params() const { return n_params_; }
  std::int32_t prefix() const { return frozen_ ? prefix_ : n_params_; }

  Var record1(double value, std::int32_t pa, double wa) {
    nodes_.push_back(Node{wa, 0.0, 0.0, pa, -1, -1});
    return Var(this, static_cast<std::int32_t>(nodes_.size()) - 1, value);
  }
  Var record2(double value, std::int32_t pa, double wa, std::int32_t pb,
              double wb) {
    nodes_.push_back(Node{wa, wb, 0.0, pa, pb, -1});
    return Var(this, static_cast<std::int32_t>(nodes_.size()) - 1, value);
  }
  Var record3(double value, std::int32_t pa, double wa, std::int32_t pb,
              double wb, std::int32_t pc, double wc) {
    nodes_.push_back(Node{wa, wb, wc, pa, pb, pc});
    return Var(this, static_cast<std::int32_t>(nodes_.size()) - 1, value);
  }

  /// Records y = W x (+ b) against contiguous parameter blocks: W row-major
  /// [n_out x n_in] starting at parameter id w_param, bias at b_param (or -1
  /// for none, as in derivative components of a jet). Inputs are existing
  /// nodes; their current values are cached for the backward pass. Appends
  /// the outputs into `out`.
  void dense_affine(std::int32_t w_param, std::int32_t b_param, int n_out, int n_in,
                    const Var* in, Var* out) {
    const std::int32_t aux_begin = static_cast<std::int32_t>(aux_ids_.size());
    for (int j = 0; j < n_in; ++j) {
      aux_ids_.push_back(in[j].id());
      aux_vals_.push_back(in[j].value());
    }
    const std::int32_t out_begin = static_cast<std::int32_t>(nodes_.size());
    layers_.push_back(LayerRec{out_begin, n_out, n_in, w_param, b_param, aux_begin});
    const double* x = &aux_vals_[static_cast<std::size_t>(aux_begin)];
    for (int i = 0; i < n_out; ++i) {
      const double* w_row = &param_vals_[static_cast<std::size_t>(w_param) +
                                         static_cast<std::size_t>(i) * static_cast<std::size_t>(n_in)];
      double acc = (b_param >= 0) ? param_vals_[static_cast<std::size_t>(b_param) + static_cast<std::size_t>(i)] : 0.0;
      for (int j = 0; j < n_in; ++j) acc += w_row[j] * x[j];
      nodes_.push_back(Node{0.0, 0.0, 0.0, kLayerOutput, -1, -1});
      out[i] = Var(this, out_begin + i, acc);
    }
  }

  /// One-shot gradient of a scalar root with respect to every parameter.
  /// Idempotent: adjoints are cleared on every call.
  GradMap grad(const Var& root) {
    check_root(root);
    adj_.assign(nodes_.size(), 0.0);
    adj_[static_cast<std::size_t>(root.id())] = 1.0;
    sweep(root.id(), 0);
    GradMap out(static_cast<std::size_t>(n_params_));
    for (std::int32_t i = 0; i < n_params_; ++i)
      out[static_cast<std::size_t>(i)] = adj_[static_cast<std::size_t>(i)];
    return out;
  }

  /// Resets parameter adjoints; call once per accumulation round (epoch).
  void begin_accumulation() { adj_.assign(static_cast<std::size_t>(prefix()), 0.0); }

  /// Accumulates d(root)/d(theta) into the parameter adjoints. Only the
  /// region above the frozen prefix is cleared, so contributions from
  /// successive points sum in the parameter slots.
  void backward_accumulate(const Var& root) {
    check_root(root);
    if (adj_.size() < nodes_.size()) adj_.resize(nodes_.size());
    std::fill(adj_.begin() + prefix(), adj_.begin() + static_cast<std::ptrdiff_t>(nodes_.size()), 0.0);
    adj_[static_cast<std::size_t>(root.id())] = 1.0;
    sweep(root.id(), prefix_);
    // parents below prefix_ received their contributions inside sweep()
  }

  /// Parameter adjoints accumulated so far.
  std::span<const double> param_adjoints() const {
    return {adj_.data(), static_cast<std::size_t>(n_params_)};
  }

 private:
  static constexpr std::int32_t kLayerOutput = -2;

  struct Node {
    double wa, wb, wc;
    std::int32_t pa, pb, pc;
  };

  struct LayerRec {
    std::int32_t out_begin;
    std::int32_t n_out, n_in;
    std::int32_t w_param, b_param;
    std::int32_t aux_begin;
  };

  void check_root(const Var& root) const {
    if (!root.attached() || root.tape() != this ||
        root.id() >= static_cast<std::int32_t>(nodes_.size()))
      throw StructuralError("gradient root is not a node of this tape");
  }

  // W^T-adjoint, weight-outer-product and bias accumulation for one layer.
  void backward_layer(const LayerRec& L) {
    const double* x = &aux_vals_[static_cast<std::size_t>(L.aux_begin)];
    const std::int32_t* ids = &aux_ids_[static_cast<std::size_t>(L.aux_begin)];
    for (int i = 0; i < L.n_out; ++i) {
      const double a = adj_[static_cast<std::size_t>(L.out_begin + i)];
      if (a == 0.0) continue;
      if (L.b_param >= 0) adj_[static_cast<std::size_t>(L.b_param + i)] += a;
      const std::size_t row = static_cast<std::size_t>(L.w_param) +
                              static_cast<std::size_t>(i) * static_cast<std::size_t>(L.n_in);
      const double* w_row = &param_vals_[row];
      double* adj_w = &adj_[row];
      for (int j = 0; j < L.n_in; ++j) {
        adj_w[j] += a * x[j];
        adj_[static_cast<std::size_t>(ids[j])] += a * w_row[j];
      }
    }
  }

  // Reverse sweep from `top` down to `stop` (exclusive for scalar handling);
  // leaves below stop only receive contributions. Dense layers are handled
  // wholesale when the sweep enters their output range.
  void sweep(std::int32_t top, std::int32_t stop) {
    std::ptrdiff_t li = static_cast<std::ptrdiff_t>(layers_.size()) - 1;
    while (li >= 0 && layers_[static_cast<std::size_t>(li)].out_begin > top) --li;
    for (std::int32_t i = top; i >= stop; --i) {
      if (li >= 0) {
        const LayerRec& L = layers_[static_cast<std::size_t>(li)];
        if (i < L.out_begin + L.n_out && i >= L.out_begin) {
          backward_layer(L);
          i = L.out_begin;  // loop decrement steps below the layer
          --li;
          continue;
        }
      }
      const double a = adj_[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.pa == kLayerOutput) continue;
      if (n.pa >= 0) adj_[static_cast<std::size_t>(n.pa)] += n.wa * a;
      if (n.pb >= 0) adj_[static_cast<std::size_t>(n.pb)] += n.wb * a;
      if (n.pc >= 0) adj_[static_cast<std::size_t>(n.pc)] += n.wc * a;
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> adj_;
  std::vector<double> param_vals_;
  std::vector<LayerRec> layers_;
  std::vector<std::int32_t> aux_ids_;
  std::vector<double> aux_vals_;
  std::int32_t n_params_ = 0;
  std::int32_t prefix_ = 0;
  bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Primitive operations. The set is closed: {+, -, *, /, tanh, sin, cos, exp,
// ln, clamp_min}. Adding one requires a forward-jet rule, a reverse-adjoint
// rule, and a finite-difference test.
// ---------------------------------------------------------------------------

inline Tape* same_tape(const Var& a, const Var& b) {
  assert(a.tape() == b.tape());
  return a.tape();
}

inline Var operator+(const Var& a, const Var& b) {
  return same_tape(a, b)->record2(a.value() + b.value(), a.id(), 1.0, b.id(), 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return same_tape(a, b)->record2(a.value() - b.value(), a.id(), 1.0, b.id(), -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return same_tape(a, b)->record2(a.value() * b.value(), a.id(), b.value(), b.id(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  if (b.value() == 0.0) throw std::domain_error("division by zero");
  const double q = a.value() / b.value();
  return same_tape(a, b)->record2(q, a.id(), 1.0 / b.value(), b.id(), -q / b.value());
}
inline Var operator+(const Var& a, double c) { return a.tape()->record1(a.value() + c, a.id(), 1.0); }
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a + (-c); }
inline Var operator-(double c, const Var& a) { return a.tape()->record1(c - a.value(), a.id(), -1.0); }
inline Var operator*(const Var& a, double c) { return a.tape()->record1(a.value() * c, a.id(), c); }
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator/(const Var& a, double c) { return a * (1.0 / c); }
inline Var operator/(double c, const Var& a) {
  if (a.value() == 0.0) throw std::domain_error("division by zero");
  const double q = c / a.value();
  return a.tape()->record1(q, a.id(), -q / a.value());
}
inline Var operator-(const Var& a) { return a * -1.0; }

inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return a.tape()->record1(t, a.id(), 1.0 - t * t);
}
inline Var sin(const Var& a) {
  return a.tape()->record1(std::sin(a.value()), a.id(), std::cos(a.value()));
}
inline Var cos(const Var& a) {
  return a.tape()->record1(std::cos(a.value()), a.id(), -std::sin(a.value()));
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return a.tape()->record1(e, a.id(), e);
}
inline Var log(const Var& a) {
  if (!(a.value() > 0.0)) throw std::domain_error("log of non-positive value");
  return a.tape()->record1(std::log(a.value()), a.id(), 1.0 / a.value());
}
/// max(x, lo) with constant lo; sub-gradient 0 on the clamped branch.
inline Var clamp_min(const Var& a, double lo) {
  const bool pass = a.value() > lo;
  return a.tape()->record1(pass ? a.value() : lo, a.id(), pass ? 1.0 : 0.0);
}

/// Fused multiply-add acc + w*x: one tape node instead of two.
inline Var fmadd(const Var& acc, const Var& w, const Var& x) {
  return acc.tape()->record3(acc.value() + w.value() * x.value(), acc.id(), 1.0,
                             w.id(), x.value(), x.id(), w.value());
}

// double overloads so generic code instantiates for plain evaluation
inline double tanh(double x) { return std::tanh(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) {
  if (!(x > 0.0)) throw std::domain_error("log of non-positive value");
  return std::log(x);
}
inline double clamp_min(double x, double lo) { return x > lo ? x : lo; }
inline double fmadd(double acc, double w, double x) { return acc + w * x; }

// ---------------------------------------------------------------------------
// Truncated Taylor jets: value plus first (and optionally second) directional
// derivatives along `Axes` independent input directions. Mixed partials are
// never formed; the Laplacian needs pure seconds only.
// ---------------------------------------------------------------------------

template <class S, int Axes, bool Second>
struct Jet {
  S v{};
  std::array<S, Axes> d1{};
  std::array<S, Axes> d2{};  // used only when Second

  static Jet constant(const S& value) {
    Jet j;
    j.v = value;
    return j;
  }
};

namespace detail {
// For S=double the default-constructed derivative slots are already 0.0;
// for S=Var they must be seeded with zero-constant tape leaves.
template <class S, int Axes, bool Second>
inline void fill_zero(Jet<S, Axes, Second>& j, const S& zero) {
  for (int i = 0; i < Axes; ++i) {
    j.d1[i] = zero;
    if constexpr (Second) j.d2[i] = zero;
  }
}
}  // namespace detail

/// Independent variable along `axis`: d1[axis] = 1.
template <class S, int Axes, bool Second>
inline Jet<S, Axes, Second> jet_variable(const S& value, int axis, const S& one,
                                         const S& zero) {
  Jet<S, Axes, Second> j;
  j.v = value;
  detail::fill_zero(j, zero);
  j.d1[axis] = one;
  return j;
}

template <class S, int A, bool P>
inline Jet<S, A, P> operator+(const Jet<S, A, P>& a, const Jet<S, A, P>& b) {
  Jet<S, A, P> r;
  r.v = a.v + b.v;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = a.d1[i] + b.d1[i];
    if constexpr (P) r.d2[i] = a.d2[i] + b.d2[i];
  }
  return r;
}
template <class S, int A, bool P>
inline Jet<S, A, P> operator-(const Jet<S, A, P>& a, const Jet<S, A, P>& b) {
  Jet<S, A, P> r;
  r.v = a.v - b.v;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = a.d1[i] - b.d1[i];
    if constexpr (P) r.d2[i] = a.d2[i] - b.d2[i];
  }
  return r;
}
template <class S, int A, bool P>
inline Jet<S, A, P> operator*(const Jet<S, A, P>& a, const Jet<S, A, P>& b) {
  Jet<S, A, P> r;
  r.v = a.v * b.v;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = a.d1[i] * b.v + a.v * b.d1[i];
    if constexpr (P)
      r.d2[i] = a.d2[i] * b.v + 2.0 * (a.d1[i] * b.d1[i]) + a.v * b.d2[i];
  }
  return r;
}
template <class S, int A, bool P>
inline Jet<S, A, P> operator/(const Jet<S, A, P>& a, const Jet<S, A, P>& b) {
  Jet<S, A, P> r;
  r.v = a.v / b.v;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = (a.d1[i] - r.v * b.d1[i]) / b.v;
    if constexpr (P)
      r.d2[i] = (a.d2[i] - 2.0 * (r.d1[i] * b.d1[i]) - r.v * b.d2[i]) / b.v;
  }
  return r;
}

/// Scale by a jet-constant (weights, reaction rates): w has no dependence on
/// the jet directions, so the chain collapses to per-component products.
template <class S, int A, bool P>
inline Jet<S, A, P> wmul(const S& w, const Jet<S, A, P>& x) {
  Jet<S, A, P> r;
  r.v = w * x.v;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = w * x.d1[i];
    if constexpr (P) r.d2[i] = w * x.d2[i];
  }
  return r;
}
template <class S, int A, bool P>
  requires(!std::same_as<S, double>)
inline Jet<S, A, P> wmul(double w, const Jet<S, A, P>& x) {
  Jet<S, A, P> r;
  r.v = w * x.v;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = w * x.d1[i];
    if constexpr (P) r.d2[i] = w * x.d2[i];
  }
  return r;
}
inline double wmul(double w, double x) { return w * x; }
inline Var wmul(const Var& w, const Var& x) { return w * x; }
inline Var wmul(double w, const Var& x) { return x * w; }

/// acc + w*x with jet-constant w, fused per component.
template <class S, int A, bool P>
inline Jet<S, A, P> fmadd(const Jet<S, A, P>& acc, const S& w,
                          const Jet<S, A, P>& x) {
  Jet<S, A, P> r;
  r.v = fmadd(acc.v, w, x.v);
  for (int i = 0; i < A; ++i) {
    r.d1[i] = fmadd(acc.d1[i], w, x.d1[i]);
    if constexpr (P) r.d2[i] = fmadd(acc.d2[i], w, x.d2[i]);
  }
  return r;
}

namespace detail {
// Order-2 chain rule: r = f(a) from f(a.v), f'(a.v), f''(a.v).
template <class S, int A, bool P>
inline Jet<S, A, P> unary_chain(const Jet<S, A, P>& a, const S& f, const S& fp,
                                const S& fpp) {
  Jet<S, A, P> r;
  r.v = f;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = fp * a.d1[i];
    if constexpr (P) r.d2[i] = fpp * (a.d1[i] * a.d1[i]) + fp * a.d2[i];
  }
  return r;
}
}  // namespace detail

template <class S, int A, bool P>
inline Jet<S, A, P> tanh(const Jet<S, A, P>& a) {
  const S t = tanh(a.v);
  const S sech2 = 1.0 - t * t;
  return detail::unary_chain(a, t, sech2, -2.0 * (t * sech2));
}
template <class S, int A, bool P>
inline Jet<S, A, P> sin(const Jet<S, A, P>& a) {
  const S s = sin(a.v);
  const S c = cos(a.v);
  return detail::unary_chain(a, s, c, -s);
}
template <class S, int A, bool P>
inline Jet<S, A, P> exp(const Jet<S, A, P>& a) {
  const S e = exp(a.v);
  return detail::unary_chain(a, e, e, e);
}
template <class S, int A, bool P>
inline Jet<S, A, P> log(const Jet<S, A, P>& a) {
  const S f = log(a.v);  // throws on non-positive
  const S inv = 1.0 / a.v;
  return detail::unary_chain(a, f, inv, -(inv * inv));
}
template <int A, bool P>
inline Jet<double, A, P> clamp_min(const Jet<double, A, P>& a, double lo) {
  const bool pass = a.v > lo;
  Jet<double, A, P> r;
  r.v = pass ? a.v : lo;
  for (int i = 0; i < A; ++i) {
    r.d1[i] = pass ? a.d1[i] : 0.0;
    if constexpr (P) r.d2[i] = pass ? a.d2[i] : 0.0;
  }
  return r;
}
template <int A, bool P>
inline Jet<Var, A, P> clamp_min(const Jet<Var, A, P>& a, double lo) {
  const bool pass = a.v.value() > lo;
  Jet<Var, A, P> r;
  r.v = clamp_min(a.v, lo);
  for (int i = 0; i < A; ++i) {
    r.d1[i] = pass ? a.d1[i] : a.d1[i] * 0.0;
    if constexpr (P) r.d2[i] = pass ? a.d2[i] : a.d2[i] * 0.0;
  }
  return r;
}

// Mixed scalar convenience
template <class S, int A, bool P>
inline Jet<S, A, P> operator+(const Jet<S, A, P>& a, double c) {
  Jet<S, A, P> r = a;
  r.v = a.v + c;
  return r;
}
template <class S, int A, bool P>
inline Jet<S, A, P> operator+(double c, const Jet<S, A, P>& a) { return a + c; }
template <class S, int A, bool P>
inline Jet<S, A, P> operator-(const Jet<S, A, P>& a, double c) { return a + (-c); }
template <class S, int A, bool P>
inline Jet<S, A, P> operator*(double c, const Jet<S, A, P>& a) { return wmul(c, a); }
template <class S, int A, bool P>
inline Jet<S, A, P> operator*(const Jet<S, A, P>& a, double c) { return wmul(c, a); }

/// Single-axis jets over plain doubles: the working type for jet_eval,
/// finite-difference checks, and inference-time derivatives.
using Jet2d = Jet<double, 1, true>;

inline Jet2d jet2d_variable(double x) { return jet_variable<double, 1, true>(x, 0, 1.0, 0.0); }
inline Jet2d jet2d_constant(double x) { return Jet2d::constant(x); }

/// f composed of closed-set primitives, evaluated as a second-order jet.
using ScalarJetFn = std::function<Jet2d(std::span<const Jet2d>)>;

/// Value, first and second derivative of f along one input coordinate.
Jet2d jet_eval(const ScalarJetFn& f, std::span<const double> point, int direction);

/// Comparison of jet derivatives against central finite differences.
struct FdReport {
  double max_rel_dev_d1 = 0.0;
  double max_rel_dev_d2 = 0.0;
  double tol_d1 = 1e-6;
  double tol_d2 = 1e-4;
  bool ok() const { return max_rel_dev_d1 <= tol_d1 && max_rel_dev_d2 <= tol_d2; }
};

/// Central-difference audit of jet_eval over every input axis. `h` is the
/// first-order step; the second-order step is floored at eps^0.25 * scale
/// to keep roundoff below truncation.
FdReport fd_check(const ScalarJetFn& f, std::span<const double> point, double h,
                  double tol_d1 = 1e-6, double tol_d2 = 1e-4);

/// Gradient of a scalar tape node with respect to all registered parameters.
GradMap param_grad(const Var& loss);

}  // namespace uspil
