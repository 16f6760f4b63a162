#include "uspil/dynamics.hpp"

#include <algorithm>
#include <limits>

namespace uspil {

TuringAnalysis dispersion_relation(const LVParams& p, double k_max, int n_k) {
  // diffusion-free limits are allowed here; only the reaction rates must be
  // positive for the equilibrium to exist
  if (!(p.alpha > 0 && p.beta > 0 && p.delta > 0 && p.gamma > 0))
    throw ConfigError("reaction rates must be strictly positive");
  if (p.d_u < 0 || p.d_v < 0) throw ConfigError("diffusion must be non-negative");
  const auto [ustar, vstar] = p.equilibrium();

  TuringAnalysis out;
  // Reaction Jacobian at the coexistence point. For classic LV the diagonal
  // vanishes identically: alpha - beta*v* = 0 and delta*u* - gamma = 0.
  out.jacobian = {{{p.alpha - p.beta * vstar, -p.beta * ustar},
                   {p.delta * vstar, p.delta * ustar - p.gamma}}};
  out.critical_ratio_flag = (p.d_u / p.d_v > 2.3);

  const double j00 = out.jacobian[0][0], j01 = out.jacobian[0][1];
  const double j10 = out.jacobian[1][0], j11 = out.jacobian[1][1];
  const double tr_j = j00 + j11;
  const double det_j = j00 * j11 - j01 * j10;
  const double d_eff = 0.5 * (p.d_u + p.d_v);
  const double d_diff = p.d_u * p.d_v;

  out.wavenumbers.resize(static_cast<std::size_t>(n_k));
  out.growth_rates.resize(static_cast<std::size_t>(n_k));
  out.growth_rates_closed.resize(static_cast<std::size_t>(n_k));
  out.max_growth = -std::numeric_limits<double>::infinity();

  for (int i = 0; i < n_k; ++i) {
    const double k = (n_k == 1) ? 0.0 : k_max * static_cast<double>(i) / (n_k - 1);
    const double k2 = k * k;
    // exact 2x2 eigenproblem of A = J - k^2 diag(d_u, d_v)
    const double a00 = j00 - k2 * p.d_u;
    const double a11 = j11 - k2 * p.d_v;
    const double tr = a00 + a11;
    const double det = a00 * a11 - j01 * j10;
    const double disc = tr * tr - 4.0 * det;
    const double re = (disc >= 0.0) ? 0.5 * (tr + std::sqrt(disc)) : 0.5 * tr;

    // paper-style closed form, reported for comparison only
    const double arg = tr_j * tr_j - 4.0 * (det_j - d_diff * k2);
    const double re_closed =
        (arg >= 0.0) ? tr_j - d_eff * k2 + std::sqrt(arg) : tr_j - d_eff * k2;

    out.wavenumbers[static_cast<std::size_t>(i)] = k;
    out.growth_rates[static_cast<std::size_t>(i)] = re;
    out.growth_rates_closed[static_cast<std::size_t>(i)] = re_closed;
    if (re > out.max_growth) {
      out.max_growth = re;
      out.k_star = k;
    }
  }
  return out;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kReactionDominated: return "reaction-dominated";
    case Regime::kMixed: return "mixed";
    case Regime::kDiffusionDominated: return "diffusion-dominated";
  }
  return "unknown";
}

Regime classify_regime(const LVParams& p, double domain_length) {
  if (!(domain_length > 0.0)) throw ConfigError("domain length must be positive");
  const double tau_d = domain_length * domain_length / std::max(p.d_u, p.d_v);
  const double tau_r = 1.0 / std::max({p.alpha, p.beta, p.gamma, p.delta});
  const double ratio = tau_d / tau_r;
  if (ratio > 10.0) return Regime::kReactionDominated;
  if (ratio < 0.1) return Regime::kDiffusionDominated;
  return Regime::kMixed;
}

}  // namespace uspil
