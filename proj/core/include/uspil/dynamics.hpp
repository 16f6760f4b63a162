#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uspil/errors.hpp"

namespace uspil {

/// Reaction rates and diffusion coefficients of the predator-prey system.
///   du/dt = alpha*u - beta*u*v   (+ d_u * lap u in the spatial system)
///   dv/dt = delta*u*v - gamma*v  (+ d_v * lap v)
struct LVParams {
  double alpha = 1.0;  // prey growth rate           [1/time]
  double beta = 1.0;   // predation rate             [1/(density*time)]
  double delta = 1.0;  // predator growth per prey   [1/(density*time)]
  double gamma = 1.0;  // predator death rate        [1/time]
  double d_u = 0.12;   // prey diffusion             [length^2/time]
  double d_v = 0.05;   // predator diffusion         [length^2/time]

  void validate() const {
    if (!(alpha > 0 && beta > 0 && delta > 0 && gamma > 0 && d_u > 0 && d_v > 0))
      throw ConfigError("all LV parameters must be strictly positive");
  }

  /// Coexistence fixed point (u*, v*) where both reaction terms vanish.
  std::pair<double, double> equilibrium() const { return {gamma / delta, alpha / beta}; }
};

/// Densities plus the derivative fields needed in PDE mode.
struct StatePoint {
  double u = 0.0, v = 0.0;
  double u_t = 0.0, v_t = 0.0;
  double lap_u = 0.0, lap_v = 0.0;
  bool pde = false;
};

// Reaction right-hand sides. Templated so they run on plain doubles,
// tape variables, and jets alike.
template <class T>
std::pair<T, T> rhs_ode(const LVParams& p, const T& u, const T& v) {
  const T uv = u * v;
  return {p.alpha * u - p.beta * uv, p.delta * uv - p.gamma * v};
}

template <class T>
std::pair<T, T> rhs_reaction_2d(const LVParams& p, const T& u, const T& v,
                                const T& lap_u, const T& lap_v) {
  auto [fu, fv] = rhs_ode(p, u, v);
  return {fu + p.d_u * lap_u, fv + p.d_v * lap_v};
}

// PINN residuals: left-minus-right of the governing equations; zero for an
// exact solution.
template <class T>
std::pair<T, T> residual_ode(const LVParams& p, const T& u, const T& v,
                             const T& u_t, const T& v_t) {
  auto [fu, fv] = rhs_ode(p, u, v);
  return {u_t - fu, v_t - fv};
}

template <class T>
std::pair<T, T> residual_pde(const LVParams& p, const T& u, const T& v,
                             const T& u_t, const T& v_t, const T& lap_u,
                             const T& lap_v) {
  auto [fu, fv] = rhs_reaction_2d(p, u, v, lap_u, lap_v);
  return {u_t - fu, v_t - fv};
}

/// First integral of the temporal system: H = delta*u - gamma*ln u
/// + beta*v - alpha*ln v. Constant along exact ODE trajectories.
inline double hamiltonian(const LVParams& p, double u, double v) {
  if (!(u > 0.0) || !(v > 0.0))
    throw std::domain_error("hamiltonian requires positive densities");
  return p.delta * u - p.gamma * std::log(u) + p.beta * v - p.alpha * std::log(v);
}

/// dH/dt by the chain rule given (u, v) and their time derivatives.
template <class T>
T hamiltonian_rate(const LVParams& p, const T& u, const T& v, const T& u_t,
                   const T& v_t) {
  return (p.delta - p.gamma / u) * u_t + (p.beta - p.alpha / v) * v_t;
}

/// d(u+v)/dt evaluated as the sum of the two reaction terms.
inline double mass_balance(const LVParams& p, double u, double v) {
  auto [fu, fv] = rhs_ode(p, u, v);
  return fu + fv;
}

// ---------------------------------------------------------------------------
// Linear stability about the coexistence equilibrium
// ---------------------------------------------------------------------------

struct TuringAnalysis {
  std::array<std::array<double, 2>, 2> jacobian{};  // reaction Jacobian at (u*,v*)
  std::vector<double> wavenumbers;
  std::vector<double> growth_rates;         // max Re lambda(k), exact 2x2 eigenproblem
  std::vector<double> growth_rates_closed;  // simplified closed form, diagnostic only
  bool critical_ratio_flag = false;         // d_u/d_v > 2.3
  double k_star = 0.0;                      // argmax of the exact growth curve
  double max_growth = 0.0;
};

/// Scans Re lambda(k) for det(J - k^2 diag(d_u, d_v) - lambda I) = 0 over a
/// uniform k grid. The exact eigenvalues are authoritative; the closed-form
/// column uses d_eff = (d_u+d_v)/2 and d_diff = d_u*d_v for comparison.
TuringAnalysis dispersion_relation(const LVParams& p, double k_max = 6.0,
                                   int n_k = 241);

enum class Regime { kReactionDominated, kMixed, kDiffusionDominated };

std::string to_string(Regime r);

/// Compares the diffusion time scale L^2/max(d_u,d_v) against the reaction
/// time scale 1/max(alpha,beta,gamma,delta). Ratio > 10 is reaction-
/// dominated, < 0.1 diffusion-dominated, anything else (ties included) mixed.
Regime classify_regime(const LVParams& p, double domain_length);

}  // namespace uspil
