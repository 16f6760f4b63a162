#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uspil/losses.hpp"
#include "uspil/model.hpp"

namespace uspil {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Standard bias-corrected Adam update, in place. Throws NumericError with
/// the offending parameter id if a gradient is non-finite.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, const AdamConfig& cfg);

struct TrainingConfig {
  long epochs = 50000;
  AdamConfig adam;
  std::uint64_t seed = 42;
  CollocationCounts counts;
  LossWeights initial_weights;
  std::optional<CurriculumSchedule> schedule;  // default: derived from epochs
  long weight_update_cadence = 100;
  long log_cadence = 100;
  long checkpoint_cadence = 0;  // 0 disables periodic checkpoints
  int threads = 1;
  // early stopping, off by default to mirror fixed-epoch runs
  bool early_stop = false;
  long patience = 2000;
  double min_rel_improvement = 1e-6;

  void validate() const;
};

struct TrainingProblem {
  ProblemSpec problem;
  const ReferenceSolution1D* ref1d = nullptr;  // data targets for 1D mode
  const ReferenceSolution2D* ref2d = nullptr;  // data targets for 2D mode
  std::vector<double> warm_start;  // optional initial parameters (continuation)
};

struct LogEntry {
  long epoch = 0;
  LossBreakdown breakdown;
  double wall_ms = 0.0;  // per-epoch wall clock at this log point
};

struct TrainingLog {
  std::vector<LogEntry> entries;
  LossWeights final_weights;
  long epochs_run = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainCallbacks {
  std::function<void(const LogEntry&)> on_log;
  std::function<void(long epoch, const NetworkCheckpoint&)> on_checkpoint;
};

/// Full training run: fresh seeded collocation every epoch, curriculum-gated
/// loss assembly, adaptive weight updates on cadence (phase 4), Adam steps.
/// A non-finite total loss aborts and returns the last good checkpoint.
std::pair<NetworkCheckpoint, TrainingLog> train(const TrainingConfig& cfg,
                                                const NetworkSpec& spec,
                                                const TrainingProblem& tp,
                                                const TrainCallbacks& callbacks = {});

/// Raw loss components and the gradient of sum(w_k L_k) over one batch,
/// evaluated through a tape. Exposed for tests and ablation studies.
struct EpochEval {
  std::array<double, kNumLossComponents> raw{};
  GradMap grads;
};
EpochEval evaluate_epoch(const Network& net, const CollocationBatch& batch,
                         const ProblemSpec& problem, const LossWeights& weights,
                         const ActiveSet& active, int threads = 1);

}  // namespace uspil
