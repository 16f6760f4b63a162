#include "uspil/training.hpp"

#include <chrono>
#include <cmath>

#include "rng.hpp"
#include "uspil/parallel.hpp"

namespace uspil {

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw StructuralError("adam_step: gradient does not cover all parameters");
  if (state.m.size() != params.size()) state = AdamState(params.size());

  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NumericError("non-finite gradient for parameter " + std::to_string(i));

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void TrainingConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (weight_update_cadence <= 0) throw ConfigError("weight cadence must be positive");
  if (log_cadence <= 0) throw ConfigError("log cadence must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (schedule) schedule->validate();
}

// ---------------------------------------------------------------------------
// Taped epoch evaluation
// ---------------------------------------------------------------------------

namespace {

constexpr int kData = static_cast<int>(LossComponent::kData);
constexpr int kPde = static_cast<int>(LossComponent::kPde);
constexpr int kIc = static_cast<int>(LossComponent::kIc);
constexpr int kBc = static_cast<int>(LossComponent::kBc);
constexpr int kCons = static_cast<int>(LossComponent::kCons);
constexpr int kReg = static_cast<int>(LossComponent::kReg);

// Per-point gradient scales lambda_k / N_k. The 2D conservation mass term
// has its own slice count.
struct Scales {
  std::array<double, kNumLossComponents> s{};
  double cons_slice = 0.0;
};

// Shard of every region handled by one worker.
struct Ranges {
  std::pair<std::size_t, std::size_t> interior, data, ic, bc, slices;
};

// Raw term sums (not yet divided by counts); cons_slice kept separate from
// the interior-point conservation terms.
struct RawSums {
  std::array<double, kNumLossComponents> sums{};
  double cons_slice = 0.0;
};

void eval_ranges(const Network& net, const CollocationBatch& batch,
                 const ProblemSpec& problem, const Scales& sc,
                 const ActiveSet& active, const Ranges& r, RawSums& raw_out,
                 GradMap& grads_out) {
  const LVParams& p = problem.params;
  const bool spatial = problem.mode == ProblemMode::kPde2d;

  Tape tape;
  TapedNetwork tnet(tape, net);
  tape.begin_accumulation();

  RawSums raw;
  auto backward_point = [&](const Var& contribution) {
    tape.backward_accumulate(contribution);
    tape.rewind();
  };

  const bool want_pde = active[kPde];
  const bool want_cons = active[kCons];
  const bool want_reg = active[kReg];

  if (want_pde || want_cons || want_reg) {
    for (std::size_t i = r.interior.first; i < r.interior.second; ++i) {
      const auto& x = batch.interior[i];
      Var c = tnet.zero();
      if (!spatial) {
        const std::span<const double> pt(x.data(), 1);
        // regularization needs second-order jets; otherwise first order is
        // enough for the residual and the conservation rates
        if (want_reg) {
          auto [ju, jv] = tnet.jet<1, true>(pt, {0});
          if (want_pde) {
            const Var term = pde_point_term_1d(p, ju.v, jv.v, ju.d1[0], jv.d1[0]);
            raw.sums[static_cast<std::size_t>(kPde)] += term.value();
            c = c + term * sc.s[static_cast<std::size_t>(kPde)];
          }
          if (want_cons) {
            const Var term = cons_hamiltonian_term(p, ju.v, jv.v, ju.d1[0], jv.d1[0]) +
                             cons_mass_term(ju.d1[0], jv.d1[0]);
            raw.sums[static_cast<std::size_t>(kCons)] += term.value();
            c = c + term * sc.s[static_cast<std::size_t>(kCons)];
          }
          const Var term = reg_point_term(ju.d2[0], jv.d2[0]);
          raw.sums[static_cast<std::size_t>(kReg)] += term.value();
          c = c + term * sc.s[static_cast<std::size_t>(kReg)];
        } else {
          auto [ju, jv] = tnet.jet<1, false>(pt, {0});
          if (want_pde) {
            const Var term = pde_point_term_1d(p, ju.v, jv.v, ju.d1[0], jv.d1[0]);
            raw.sums[static_cast<std::size_t>(kPde)] += term.value();
            c = c + term * sc.s[static_cast<std::size_t>(kPde)];
          }
          if (want_cons) {
            const Var term = cons_hamiltonian_term(p, ju.v, jv.v, ju.d1[0], jv.d1[0]) +
                             cons_mass_term(ju.d1[0], jv.d1[0]);
            raw.sums[static_cast<std::size_t>(kCons)] += term.value();
            c = c + term * sc.s[static_cast<std::size_t>(kCons)];
          }
        }
      } else {
        const std::span<const double> pt(x.data(), 3);
        auto [ju, jv] = tnet.jet<3, true>(pt, {0, 1, 2});
        const Var lap_u = ju.d2[0] + ju.d2[1];
        const Var lap_v = jv.d2[0] + jv.d2[1];
        if (want_pde) {
          const Var term =
              pde_point_term_2d(p, ju.v, jv.v, ju.d1[2], jv.d1[2], lap_u, lap_v);
          raw.sums[static_cast<std::size_t>(kPde)] += term.value();
          c = c + term * sc.s[static_cast<std::size_t>(kPde)];
        }
        if (want_cons) {
          const Var term = cons_hamiltonian_term(p, ju.v, jv.v, ju.d1[2], jv.d1[2]);
          raw.sums[static_cast<std::size_t>(kCons)] += term.value();
          c = c + term * sc.s[static_cast<std::size_t>(kCons)];
        }
        if (want_reg) {
          const Var term = reg_point_term(ju.d2[2], jv.d2[2]);
          raw.sums[static_cast<std::size_t>(kReg)] += term.value();
          c = c + term * sc.s[static_cast<std::size_t>(kReg)];
        }
      }
      backward_point(c);
    }
  }

  // 2D conservation mass term: d/dt of the domain mean, one backward per slice
  if (spatial && want_cons && !batch.cons_slice_xy.empty()) {
    for (std::size_t s = r.slices.first; s < r.slices.second; ++s) {
      const double ts = batch.cons_slice_times[s];
      Var mdot = tnet.zero();
      for (const auto& xy : batch.cons_slice_xy) {
        const double pt[3] = {xy[0], xy[1], ts};
        auto [ju, jv] = tnet.jet<1, false>(std::span<const double>(pt, 3), {2});
        mdot = mdot + (ju.d1[0] + jv.d1[0]);
      }
      mdot = mdot * (1.0 / static_cast<double>(batch.cons_slice_xy.size()));
      const Var term = mdot * mdot;
      raw.cons_slice += term.value();
      backward_point(term * sc.cons_slice);
    }
  }

  if (active[kData]) {
    for (std::size_t i = r.data.first; i < r.data.second; ++i) {
      const TargetPoint& ptv = batch.data_points[i];
      auto [uh, vh] = tnet.value(std::span<const double>(
          ptv.x.data(), static_cast<std::size_t>(batch.input_dim)));
      const Var term = sq_error_pair(uh, vh, ptv.u, ptv.v);
      raw.sums[static_cast<std::size_t>(kData)] += term.value();
      backward_point(term * sc.s[static_cast<std::size_t>(kData)]);
    }
  }

  if (active[kIc]) {
    for (std::size_t i = r.ic.first; i < r.ic.second; ++i) {
      const TargetPoint& ptv = batch.ic_points[i];
      auto [uh, vh] = tnet.value(std::span<const double>(
          ptv.x.data(), static_cast<std::size_t>(batch.input_dim)));
      const Var term = sq_error_pair(uh, vh, ptv.u, ptv.v);
      raw.sums[static_cast<std::size_t>(kIc)] += term.value();
      backward_point(term * sc.s[static_cast<std::size_t>(kIc)]);
    }
  }

  if (spatial && active[kBc]) {
    const bool periodic = problem.domain.boundary == "periodic";
    const double length = batch.length;
    for (std::size_t i = r.bc.first; i < r.bc.second; ++i) {
      const BcPoint& b = batch.bc_points[i];
      double p0[3], p1[3];
      if (b.axis == 0) {
        p0[0] = 0.0;    p0[1] = b.a;
        p1[0] = length; p1[1] = b.a;
      } else {
        p0[0] = b.a; p0[1] = 0.0;
        p1[0] = b.a; p1[1] = length;
      }
      p0[2] = p1[2] = b.t;
      Var term = tnet.zero();
      if (periodic) {
        auto [u0, v0] = tnet.value(std::span<const double>(p0, 3));
        auto [u1, v1] = tnet.value(std::span<const double>(p1, 3));
        const Var du = u0 - u1, dv = v0 - v1;
        term = du * du + dv * dv;
      } else {
        const std::array<int, 1> normal = {b.axis};
        auto [ju0, jv0] = tnet.jet<1, false>(std::span<const double>(p0, 3), normal);
        auto [ju1, jv1] = tnet.jet<1, false>(std::span<const double>(p1, 3), normal);
        term = (ju0.d1[0] * ju0.d1[0] + jv0.d1[0] * jv0.d1[0] +
                ju1.d1[0] * ju1.d1[0] + jv1.d1[0] * jv1.d1[0]) * 0.5;
      }
      raw.sums[static_cast<std::size_t>(kBc)] += term.value();
      backward_point(term * sc.s[static_cast<std::size_t>(kBc)]);
    }
  }

  raw_out = raw;
  grads_out = GradMap(net.n_params());
  std::span<const double> adj = tape.param_adjoints();
  for (std::size_t i = 0; i < adj.size(); ++i) grads_out[i] = adj[i];
}

}  // namespace

EpochEval evaluate_epoch(const Network& net, const CollocationBatch& batch,
                         const ProblemSpec& problem, const LossWeights& weights,
                         const ActiveSet& active, int threads) {
  Scales sc;
  const auto w = weights.as_array();
  const double n_int = static_cast<double>(std::max<std::size_t>(batch.interior.size(), 1));
  const double n_data = static_cast<double>(std::max<std::size_t>(batch.data_points.size(), 1));
  const double n_ic = static_cast<double>(std::max<std::size_t>(batch.ic_points.size(), 1));
  const double n_bc = static_cast<double>(std::max<std::size_t>(batch.bc_points.size(), 1));
  const double n_slices =
      static_cast<double>(std::max<std::size_t>(batch.cons_slice_times.size(), 1));
  sc.s[0] = w[0] / n_data;
  sc.s[1] = w[1] / n_int;
  sc.s[2] = w[2] / n_ic;
  sc.s[3] = w[3] / n_bc;
  sc.s[4] = w[4] / n_int;
  sc.s[5] = w[5] / n_int;
  sc.cons_slice = w[4] / n_slices;

  const int n_workers = std::max(1, threads);
  std::vector<RawSums> raws(static_cast<std::size_t>(n_workers));
  std::vector<GradMap> grads(static_cast<std::size_t>(n_workers));

  const auto ri = shard_ranges(batch.interior.size(), n_workers);
  const auto rd = shard_ranges(batch.data_points.size(), n_workers);
  const auto rc = shard_ranges(batch.ic_points.size(), n_workers);
  const auto rb = shard_ranges(batch.bc_points.size(), n_workers);
  const auto rs = shard_ranges(batch.cons_slice_times.size(), n_workers);

  run_workers(n_workers, [&](int wk) {
    Ranges r;
    r.interior = ri[static_cast<std::size_t>(wk)];
    r.data = rd[static_cast<std::size_t>(wk)];
    r.ic = rc[static_cast<std::size_t>(wk)];
    r.bc = rb[static_cast<std::size_t>(wk)];
    r.slices = rs[static_cast<std::size_t>(wk)];
    eval_ranges(net, batch, problem, sc, active, r, raws[static_cast<std::size_t>(wk)],
                grads[static_cast<std::size_t>(wk)]);
  });

  RawSums total;
  EpochEval out;
  out.grads = GradMap(net.n_params());
  for (int wk = 0; wk < n_workers; ++wk) {
    for (int k = 0; k < kNumLossComponents; ++k)
      total.sums[static_cast<std::size_t>(k)] +=
          raws[static_cast<std::size_t>(wk)].sums[static_cast<std::size_t>(k)];
    total.cons_slice += raws[static_cast<std::size_t>(wk)].cons_slice;
    out.grads.add_scaled(grads[static_cast<std::size_t>(wk)], 1.0);
  }
  out.raw[0] = total.sums[0] / n_data;
  out.raw[1] = total.sums[1] / n_int;
  out.raw[2] = total.sums[2] / n_ic;
  out.raw[3] = total.sums[3] / n_bc;
  out.raw[4] = total.sums[4] / n_int + total.cons_slice / n_slices;
  out.raw[5] = total.sums[5] / n_int;
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

std::pair<NetworkCheckpoint, TrainingLog> train(const TrainingConfig& cfg,
                                                const NetworkSpec& spec,
                                                const TrainingProblem& tp,
                                                const TrainCallbacks& callbacks) {
  cfg.validate();
  tp.problem.validate();
  const bool spatial = tp.problem.mode == ProblemMode::kPde2d;

  Network net = tp.warm_start.empty() ? Network(spec) : Network(spec, tp.warm_start);
  AdamState adam(net.n_params());
  LossWeights weights = cfg.initial_weights;
  const CurriculumSchedule schedule =
      cfg.schedule ? *cfg.schedule : CurriculumSchedule::for_epochs(cfg.epochs, spatial);

  TrainingLog log;
  LossBreakdown last_breakdown;
  std::vector<double> last_good(net.params().begin(), net.params().end());

  double best_total = std::numeric_limits<double>::infinity();
  long last_improve_epoch = 0;

  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    const PhaseInfo phase = curriculum_phase(epoch, schedule, spatial);

    ActiveSet active = phase.active;
    for (int k = 0; k < kNumLossComponents; ++k)
      if (!(weights[k] > 0.0)) active.on[static_cast<std::size_t>(k)] = false;

    CollocationCounts counts = cfg.counts;
    counts.interior = std::max(
        1, static_cast<int>(std::lround(counts.interior * phase.interior_density)));

    const CollocationBatch batch = sample_collocation(
        tp.problem, counts, detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)),
        tp.ref1d, tp.ref2d);

    EpochEval ev = evaluate_epoch(net, batch, tp.problem, weights, active, cfg.threads);
    auto [total, breakdown] = total_loss(ev.raw, weights, epoch);

    if (!std::isfinite(total)) {
      log.aborted = true;
      log.abort_reason = "non-finite total loss at epoch " + std::to_string(epoch);
      std::copy(last_good.begin(), last_good.end(), net.params().begin());
      break;
    }
    last_breakdown = breakdown;
    std::copy(net.params().begin(), net.params().end(), last_good.begin());

    if (phase.adapt_weights && epoch > 0 && epoch % cfg.weight_update_cadence == 0)
      weights = normalize_weights(update_weights(weights, breakdown), weights);

    adam_step(net.params(), ev.grads.values(), adam, cfg.adam);

    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
    if (epoch % cfg.log_cadence == 0 || epoch + 1 == cfg.epochs) {
      LogEntry e{epoch, breakdown, ms};
      log.entries.push_back(e);
      if (callbacks.on_log) callbacks.on_log(e);
    }
    if (cfg.checkpoint_cadence > 0 && epoch > 0 && epoch % cfg.checkpoint_cadence == 0 &&
        callbacks.on_checkpoint) {
      NetworkCheckpoint snap{net, CheckpointMeta{epoch, breakdown}};
      callbacks.on_checkpoint(epoch, snap);
    }
    log.epochs_run = epoch + 1;

    if (cfg.early_stop) {
      const double rel = (best_total - total) / std::max(std::abs(best_total), 1e-300);
      if (total < best_total && rel >= cfg.min_rel_improvement) {
        best_total = total;
        last_improve_epoch = epoch;
      } else if (epoch - last_improve_epoch >= cfg.patience) {
        break;
      }
    }
  }

  log.final_weights = weights;
  NetworkCheckpoint ckpt{net, CheckpointMeta{log.epochs_run, std::nullopt}};
  if (log.epochs_run > 0) ckpt.meta.final_loss = last_breakdown;
  return {std::move(ckpt), std::move(log)};
}

}  // namespace uspil
