#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "uspil/dynamics.hpp"
#include "uspil/loss_types.hpp"
#include "uspil/model.hpp"
#include "uspil/reference.hpp"

namespace uspil {

enum class ProblemMode { kOde1d, kPde2d };

/// Where the network lives: time span for both modes, square spatial domain
/// and boundary handling for the 2D mode.
struct DomainSpec {
  double t0 = 0.0;
  double t1 = 20.0;
  double length = 20.0;               // 2D only
  std::string boundary = "periodic";  // 2D only: "periodic" | "neumann"
};

/// Full problem statement the losses are evaluated against.
struct ProblemSpec {
  ProblemMode mode = ProblemMode::kOde1d;
  LVParams params;
  DomainSpec domain;
  std::pair<double, double> ic1d = {2.0, 1.0};
  FieldIc ic2d;  // empty -> spiral_seed_ic default

  int input_dim() const { return mode == ProblemMode::kOde1d ? 1 : 3; }
  void validate() const;
};

struct CollocationCounts {
  int interior = 2000;
  int ic = 2;
  int bc = 0;
  int data = 50;
  int cons_slices = 0;           // 2D mass term: number of sampled time slices
  int cons_points_per_slice = 0; // spatial points shared by every slice
};

/// A point with a supervised target (data and initial-condition sets).
struct TargetPoint {
  std::array<double, 3> x{};  // (t) or (x,y,t); unused trailing entries zero
  double u = 0.0, v = 0.0;
};

/// One boundary sample: axis 0 pairs the faces x=0 / x=L at (a=y, t);
/// axis 1 pairs y=0 / y=L at (a=x, t).
struct BcPoint {
  int axis = 0;
  double a = 0.0;
  double t = 0.0;
};

struct CollocationBatch {
  int input_dim = 1;
  double length = 0.0;  // spatial domain size the bc points refer to (2D)
  std::vector<std::array<double, 3>> interior;
  std::vector<TargetPoint> ic_points;
  std::vector<BcPoint> bc_points;
  std::vector<TargetPoint> data_points;
  // 2D conservation: d/dt of the domain-mean of u+v per time slice
  std::vector<double> cons_slice_times;
  std::vector<std::array<double, 2>> cons_slice_xy;
};

/// Uniform, seed-deterministic sampling per region. Data targets are
/// subsampled from the supplied reference: evenly spaced in time for 1D,
/// random snapshot cells for 2D. Either reference may be null (empty data).
CollocationBatch sample_collocation(const ProblemSpec& problem,
                                    const CollocationCounts& counts,
                                    std::uint64_t seed,
                                    const ReferenceSolution1D* ref1d = nullptr,
                                    const ReferenceSolution2D* ref2d = nullptr);

// ---------------------------------------------------------------------------
// Per-point loss terms, shared by the plain (double) evaluation path and the
// tape-recorded training path.
// ---------------------------------------------------------------------------

template <class T>
T sq_error_pair(const T& uh, const T& vh, double u, double v) {
  const T du = uh - u;
  const T dv = vh - v;
  return du * du + dv * dv;
}

template <class T>
T pde_point_term_1d(const LVParams& p, const T& u, const T& v, const T& u_t,
                    const T& v_t) {
  auto [fu, fv] = residual_ode(p, u, v, u_t, v_t);
  return fu * fu + fv * fv;
}

template <class T>
T pde_point_term_2d(const LVParams& p, const T& u, const T& v, const T& u_t,
                    const T& v_t, const T& lap_u, const T& lap_v) {
  auto [gu, gv] = residual_pde(p, u, v, u_t, v_t, lap_u, lap_v);
  return gu * gu + gv * gv;
}

inline constexpr double kDensityClamp = 1e-6;

/// (dH/dt)^2 with densities soft-clamped before the logarithmic terms.
template <class T>
T cons_hamiltonian_term(const LVParams& p, const T& u, const T& v, const T& u_t,
                        const T& v_t) {
  const T uc = clamp_min(u, kDensityClamp);
  const T vc = clamp_min(v, kDensityClamp);
  const T hdot = hamiltonian_rate(p, uc, vc, u_t, v_t);
  return hdot * hdot;
}

template <class T>
T cons_mass_term(const T& u_t, const T& v_t) {
  const T mdot = u_t + v_t;
  return mdot * mdot;
}

template <class T>
T reg_point_term(const T& u_tt, const T& v_tt) {
  return u_tt * u_tt + v_tt * v_tt;
}

// ---------------------------------------------------------------------------
// Loss operations on a plain network (evaluation / tests). The training path
// evaluates the same terms through a TapedNetwork; see training.hpp.
// ---------------------------------------------------------------------------

/// Mean squared misfit over data points; 0 (with the flag set) when empty.
double data_loss(const Network& net, const CollocationBatch& batch,
                 bool* empty_warning = nullptr);

/// Mean of squared equation residuals over interior points; derivatives via
/// input jets.
double physics_loss(const Network& net, const CollocationBatch& batch,
                    const LVParams& p, ProblemMode mode);

/// (L_ic, L_bc). Periodic boundaries penalize value mismatches between
/// opposite faces; Neumann penalizes the squared normal derivative at both
/// faces. L_bc == 0 in 1D mode.
std::pair<double, double> icbc_loss(const Network& net, const CollocationBatch& batch,
                                    const std::string& boundary_mode);

/// Mean of (dH/dt)^2 + (dM/dt)^2 over interior points (1D). In 2D the mass
/// term switches to the sampled time slices: (d/dt domain-mean(u+v))^2.
double conservation_loss(const Network& net, const CollocationBatch& batch,
                         const LVParams& p, ProblemMode mode);

/// Mean of (d2u/dt2)^2 + (d2v/dt2)^2 over interior points.
double temporal_reg_loss(const Network& net, const CollocationBatch& batch,
                         ProblemMode mode);

/// Weighted sum plus the recorded breakdown; total == sum(w_k L_k).
std::pair<double, LossBreakdown> total_loss(
    const std::array<double, kNumLossComponents>& components,
    const LossWeights& weights, long epoch = 0);

/// One multiplicative balance update: each active (weight > 0) component k
/// moves by (Gbar / P_k)^adapt_exponent where P_k = w_k * max(L_k, 1e-12) is
/// the weighted term and Gbar their geometric mean. Inactive components are
/// untouched. No normalization here; see normalize_weights.
LossWeights update_weights(const LossWeights& w, const LossBreakdown& b);

/// Rescales active weights so their sum matches the pre-update sum.
LossWeights normalize_weights(const LossWeights& updated, const LossWeights& pre_update);

// ---------------------------------------------------------------------------
// Curriculum
// ---------------------------------------------------------------------------

struct ActiveSet {
  std::array<bool, kNumLossComponents> on{};
  bool operator[](int k) const { return on[static_cast<std::size_t>(k)]; }
  void set(LossComponent c, bool v) { on[static_cast<std::size_t>(c)] = v; }
  bool get(LossComponent c) const { return on[static_cast<std::size_t>(c)]; }
};

/// Four non-overlapping, ordered epoch ranges [begin, end). Empty ranges are
/// allowed (the 1D schedule collapses to phases 1 and 4).
struct CurriculumSchedule {
  std::array<std::pair<long, long>, 4> ranges{};

  void validate() const;
  /// 2D split 10/20/40/30 of the budget; 1D collapses to 30% phase 1,
  /// 70% phase 4.
  static CurriculumSchedule for_epochs(long total_epochs, bool spatial);
};

struct PhaseInfo {
  int phase = 4;  // 1..4
  ActiveSet active;
  double interior_density = 1.0;  // phase 2 samples interior at 25%
  bool adapt_weights = false;     // weight adaptation runs in phase 4 only
};

/// Active loss set per phase. 1D: {data,pde,ic} then all-but-bc in phase 4.
/// 2D: phase 1 {data,ic}; phase 2 adds {pde,bc} at quarter density;
/// phase 3 full density; phase 4 adds {cons,reg} and weight adaptation.
/// Epochs beyond the schedule clamp to phase 4.
PhaseInfo curriculum_phase(long epoch, const CurriculumSchedule& schedule, bool spatial);

}  // namespace uspil
