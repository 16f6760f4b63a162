#include "uspil/losses.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace uspil {

void ProblemSpec::validate() const {
  params.validate();
  if (!(domain.t1 > domain.t0)) throw ConfigError("time span must be increasing");
  if (mode == ProblemMode::kPde2d) {
    if (!(domain.length > 0.0)) throw ConfigError("domain length must be positive");
    if (domain.boundary != "periodic" && domain.boundary != "neumann")
      throw ConfigError("boundary must be 'periodic' or 'neumann'");
  }
  if (mode == ProblemMode::kOde1d && (!(ic1d.first > 0.0) || !(ic1d.second > 0.0)))
    throw ConfigError("1D initial densities must be positive");
}

CollocationBatch sample_collocation(const ProblemSpec& problem,
                                    const CollocationCounts& counts,
                                    std::uint64_t seed,
                                    const ReferenceSolution1D* ref1d,
                                    const ReferenceSolution2D* ref2d) {
  problem.validate();
  if (counts.interior <= 0) throw ConfigError("interior count must be positive");
  const bool spatial = problem.mode == ProblemMode::kPde2d;
  const DomainSpec& dom = problem.domain;

  std::mt19937_64 rng(seed);
  CollocationBatch batch;
  batch.input_dim = problem.input_dim();
  batch.length = spatial ? dom.length : 0.0;

  // draw order is fixed: interior, ic, bc, conservation slices, data
  batch.interior.reserve(static_cast<std::size_t>(counts.interior));
  for (int i = 0; i < counts.interior; ++i) {
    std::array<double, 3> x{};
    if (spatial) {
      x[0] = detail::uniform(rng, 0.0, dom.length);
      x[1] = detail::uniform(rng, 0.0, dom.length);
      x[2] = detail::uniform(rng, dom.t0, dom.t1);
    } else {
      x[0] = detail::uniform(rng, dom.t0, dom.t1);
    }
    batch.interior.push_back(x);
  }

  FieldIc ic2d = problem.ic2d;
  if (spatial && !ic2d)
    ic2d = spiral_seed_ic(problem.params, dom.length, 2.0 * dom.length / 128.0);

  for (int i = 0; i < counts.ic; ++i) {
    TargetPoint pt;
    if (spatial) {
      pt.x[0] = detail::uniform(rng, 0.0, dom.length);
      pt.x[1] = detail::uniform(rng, 0.0, dom.length);
      pt.x[2] = dom.t0;
      auto [u0, v0] = ic2d(pt.x[0], pt.x[1]);
      pt.u = u0;
      pt.v = v0;
    } else {
      pt.x[0] = dom.t0;
      pt.u = problem.ic1d.first;
      pt.v = problem.ic1d.second;
    }
    batch.ic_points.push_back(pt);
  }

  if (spatial) {
    for (int i = 0; i < counts.bc; ++i) {
      BcPoint b;
      b.axis = (rng() & 1) ? 1 : 0;
      b.a = detail::uniform(rng, 0.0, dom.length);
      b.t = detail::uniform(rng, dom.t0, dom.t1);
      batch.bc_points.push_back(b);
    }
    for (int s = 0; s < counts.cons_slices; ++s)
      batch.cons_slice_times.push_back(detail::uniform(rng, dom.t0, dom.t1));
    for (int i = 0; i < counts.cons_points_per_slice; ++i)
      batch.cons_slice_xy.push_back({detail::uniform(rng, 0.0, dom.length),
                                     detail::uniform(rng, 0.0, dom.length)});
  }

  if (counts.data > 0) {
    if (!spatial && ref1d != nullptr && !ref1d->times.empty()) {
      // evenly spaced in time, endpoints included: the fixed training set
      const std::size_t n_ref = ref1d->times.size();
      const int n = std::min<int>(counts.data, static_cast<int>(n_ref));
      for (int i = 0; i < n; ++i) {
        const std::size_t idx =
            (n == 1) ? 0
                     : static_cast<std::size_t>(std::llround(
                           static_cast<double>(i) * static_cast<double>(n_ref - 1) / (n - 1)));
        TargetPoint pt;
        pt.x[0] = ref1d->times[idx];
        pt.u = ref1d->u[idx];
        pt.v = ref1d->v[idx];
        batch.data_points.push_back(pt);
      }
    } else if (spatial && ref2d != nullptr && !ref2d->times.empty()) {
      for (int i = 0; i < counts.data; ++i) {
        const std::size_t s = static_cast<std::size_t>(rng() % ref2d->times.size());
        const int ix = static_cast<int>(rng() % static_cast<std::uint64_t>(ref2d->nx));
        const int iy = static_cast<int>(rng() % static_cast<std::uint64_t>(ref2d->ny));
        TargetPoint pt;
        pt.x[0] = ix * ref2d->dx;
        pt.x[1] = iy * ref2d->dx;
        pt.x[2] = ref2d->times[s];
        pt.u = ref2d->at_u(s, ix, iy);
        pt.v = ref2d->at_v(s, ix, iy);
        batch.data_points.push_back(pt);
      }
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Plain-network loss evaluation
// ---------------------------------------------------------------------------

namespace {

std::span<const double> point_span(const std::array<double, 3>& x, int dim) {
  return {x.data(), static_cast<std::size_t>(dim)};
}

}  // namespace

double data_loss(const Network& net, const CollocationBatch& batch, bool* empty_warning) {
  if (batch.data_points.empty()) {
    if (empty_warning) *empty_warning = true;
    return 0.0;
  }
  if (empty_warning) *empty_warning = false;
  double acc = 0.0;
  for (const TargetPoint& pt : batch.data_points) {
    auto [uh, vh] = forward(net, point_span(pt.x, batch.input_dim));
    acc += sq_error_pair(uh, vh, pt.u, pt.v);
  }
  return acc / static_cast<double>(batch.data_points.size());
}

double physics_loss(const Network& net, const CollocationBatch& batch,
                    const LVParams& p, ProblemMode mode) {
  if (batch.interior.empty()) return 0.0;
  double acc = 0.0;
  if (mode == ProblemMode::kOde1d) {
    for (const auto& x : batch.interior) {
      auto [ju, jv] = forward_jet<1, false>(net, point_span(x, 1), {0});
      acc += pde_point_term_1d(p, ju.v, jv.v, ju.d1[0], jv.d1[0]);
    }
  } else {
    for (const auto& x : batch.interior) {
      auto [ju, jv] = forward_jet<3, true>(net, point_span(x, 3), {0, 1, 2});
      const double lap_u = ju.d2[0] + ju.d2[1];
      const double lap_v = jv.d2[0] + jv.d2[1];
      acc += pde_point_term_2d(p, ju.v, jv.v, ju.d1[2], jv.d1[2], lap_u, lap_v);
    }
  }
  return acc / static_cast<double>(batch.interior.size());
}

std::pair<double, double> icbc_loss(const Network& net, const CollocationBatch& batch,
                                    const std::string& boundary_mode) {
  double l_ic = 0.0;
  if (!batch.ic_points.empty()) {
    for (const TargetPoint& pt : batch.ic_points) {
      auto [uh, vh] = forward(net, point_span(pt.x, batch.input_dim));
      l_ic += sq_error_pair(uh, vh, pt.u, pt.v);
    }
    l_ic /= static_cast<double>(batch.ic_points.size());
  }

  double l_bc = 0.0;  // identically zero in 1D mode
  if (batch.input_dim == 3 && !batch.bc_points.empty()) {
    const bool periodic = boundary_mode == "periodic";
    const double length = batch.length;
    for (const BcPoint& b : batch.bc_points) {
      double p0[3], p1[3];
      if (b.axis == 0) {
        p0[0] = 0.0;    p0[1] = b.a;
        p1[0] = length; p1[1] = b.a;
      } else {
        p0[0] = b.a; p0[1] = 0.0;
        p1[0] = b.a; p1[1] = length;
      }
      p0[2] = p1[2] = b.t;
      if (periodic) {
        auto [u0, v0] = forward(net, std::span<const double>(p0, 3));
        auto [u1, v1] = forward(net, std::span<const double>(p1, 3));
        const double du = u0 - u1, dv = v0 - v1;
        l_bc += du * du + dv * dv;
      } else {
        const std::array<int, 1> normal = {b.axis};
        auto [ju0, jv0] = forward_jet<1, false>(net, std::span<const double>(p0, 3), normal);
        auto [ju1, jv1] = forward_jet<1, false>(net, std::span<const double>(p1, 3), normal);
        l_bc += 0.5 * (ju0.d1[0] * ju0.d1[0] + jv0.d1[0] * jv0.d1[0] +
                       ju1.d1[0] * ju1.d1[0] + jv1.d1[0] * jv1.d1[0]);
      }
    }
    l_bc /= static_cast<double>(batch.bc_points.size());
  }
  return {l_ic, l_bc};
}

double conservation_loss(const Network& net, const CollocationBatch& batch,
                         const LVParams& p, ProblemMode mode) {
  double acc_h = 0.0;
  if (!batch.interior.empty()) {
    const int t_axis = (mode == ProblemMode::kOde1d) ? 0 : 2;
    for (const auto& x : batch.interior) {
      auto [ju, jv] =
          forward_jet<1, false>(net, point_span(x, batch.input_dim), {t_axis});
      acc_h += cons_hamiltonian_term(p, ju.v, jv.v, ju.d1[0], jv.d1[0]);
      if (mode == ProblemMode::kOde1d) acc_h += cons_mass_term(ju.d1[0], jv.d1[0]);
    }
    acc_h /= static_cast<double>(batch.interior.size());
  }

  double acc_m = 0.0;
  if (mode == ProblemMode::kPde2d && !batch.cons_slice_times.empty() &&
      !batch.cons_slice_xy.empty()) {
    for (double ts : batch.cons_slice_times) {
      double mdot = 0.0;
      for (const auto& xy : batch.cons_slice_xy) {
        const double pt[3] = {xy[0], xy[1], ts};
        auto [ju, jv] = forward_jet<1, false>(net, std::span<const double>(pt, 3), {2});
        mdot += ju.d1[0] + jv.d1[0];
      }
      mdot /= static_cast<double>(batch.cons_slice_xy.size());
      acc_m += mdot * mdot;
    }
    acc_m /= static_cast<double>(batch.cons_slice_times.size());
  }
  return acc_h + acc_m;
}

double temporal_reg_loss(const Network& net, const CollocationBatch& batch,
                         ProblemMode mode) {
  if (batch.interior.empty()) return 0.0;
  const int t_axis = (mode == ProblemMode::kOde1d) ? 0 : 2;
  double acc = 0.0;
  for (const auto& x : batch.interior) {
    auto [ju, jv] = forward_jet<1, true>(net, point_span(x, batch.input_dim), {t_axis});
    acc += reg_point_term(ju.d2[0], jv.d2[0]);
  }
  return acc / static_cast<double>(batch.interior.size());
}

std::pair<double, LossBreakdown> total_loss(
    const std::array<double, kNumLossComponents>& components,
    const LossWeights& weights, long epoch) {
  LossBreakdown b;
  b.raw = components;
  b.weights = weights;
  b.epoch = epoch;
  double total = 0.0;
  for (int k = 0; k < kNumLossComponents; ++k)
    total += weights[k] * components[static_cast<std::size_t>(k)];
  b.total = total;
  return {total, b};
}

LossWeights update_weights(const LossWeights& w, const LossBreakdown& b) {
  constexpr double kFloor = 1e-12;
  double log_sum = 0.0;
  int n_active = 0;
  std::array<double, kNumLossComponents> log_p{};
  for (int k = 0; k < kNumLossComponents; ++k) {
    if (!(w[k] > 0.0)) continue;
    log_p[static_cast<std::size_t>(k)] =
        std::log(w[k] * std::max(b.raw_of(k), kFloor));
    log_sum += log_p[static_cast<std::size_t>(k)];
    ++n_active;
  }
  LossWeights out = w;
  if (n_active == 0) return out;
  const double log_gmean = log_sum / n_active;
  for (int k = 0; k < kNumLossComponents; ++k) {
    if (!(w[k] > 0.0)) continue;
    const double factor =
        std::exp(w.adapt_exponent * (log_gmean - log_p[static_cast<std::size_t>(k)]));
    out.set(k, w[k] * factor);
  }
  return out;
}

LossWeights normalize_weights(const LossWeights& updated, const LossWeights& pre_update) {
  double sum_pre = 0.0, sum_new = 0.0;
  for (int k = 0; k < kNumLossComponents; ++k) {
    sum_pre += pre_update[k];
    sum_new += updated[k];
  }
  LossWeights out = updated;
  if (sum_new > 0.0) {
    const double s = sum_pre / sum_new;
    for (int k = 0; k < kNumLossComponents; ++k) out.set(k, updated[k] * s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curriculum
// ---------------------------------------------------------------------------

void CurriculumSchedule::validate() const {
  long prev_end = 0;
  for (const auto& [b, e] : ranges) {
    if (b > e) throw ConfigError("curriculum range must have begin <= end");
    if (b < prev_end) throw ConfigError("curriculum ranges must not overlap");
    prev_end = std::max(prev_end, e);
  }
}

CurriculumSchedule CurriculumSchedule::for_epochs(long total_epochs, bool spatial) {
  CurriculumSchedule s;
  if (spatial) {
    const long p1 = total_epochs / 10;
    const long p2 = p1 + 2 * total_epochs / 10;
    const long p3 = p2 + 4 * total_epochs / 10;
    s.ranges = {{{0, p1}, {p1, p2}, {p2, p3}, {p3, total_epochs}}};
  } else {
    const long p1 = 3 * total_epochs / 10;
    s.ranges = {{{0, p1}, {p1, p1}, {p1, p1}, {p1, total_epochs}}};
  }
  return s;
}

PhaseInfo curriculum_phase(long epoch, const CurriculumSchedule& schedule, bool spatial) {
  schedule.validate();
  int phase = 4;  // beyond the schedule clamps to phase 4
  for (int i = 0; i < 4; ++i) {
    const auto& [b, e] = schedule.ranges[static_cast<std::size_t>(i)];
    if (epoch >= b && epoch < e) {
      phase = i + 1;
      break;
    }
  }
  PhaseInfo info;
  info.phase = phase;
  info.interior_density = 1.0;
  info.adapt_weights = (phase == 4);
  ActiveSet a;
  a.set(LossComponent::kData, true);
  a.set(LossComponent::kIc, true);
  if (!spatial) {
    a.set(LossComponent::kPde, true);
    if (phase == 4) {
      a.set(LossComponent::kCons, true);
      a.set(LossComponent::kReg, true);
    }
  } else {
    if (phase >= 2) {
      a.set(LossComponent::kPde, true);
      a.set(LossComponent::kBc, true);
    }
    if (phase == 2) info.interior_density = 0.25;
    if (phase == 4) {
      a.set(LossComponent::kCons, true);
      a.set(LossComponent::kReg, true);
    }
  }
  info.active = a;
  return info;
}

}  // namespace uspil
