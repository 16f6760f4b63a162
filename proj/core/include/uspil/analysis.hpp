#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uspil/model.hpp"
#include "uspil/reference.hpp"

namespace uspil {

using Sampler1D = std::function<std::pair<double, double>(double t)>;
using Sampler2D = std::function<std::pair<double, double>(double x, double y, double t)>;

/// Wraps a trained network as a trajectory / field sampler.
Sampler1D make_sampler(const Network& net);
Sampler2D make_sampler_2d(const Network& net);

// ---------------------------------------------------------------------------
// 1D evaluation (Table-1-style metrics)
// ---------------------------------------------------------------------------

struct EvaluationReport1D {
  double mae_u = 0.0, mae_v = 0.0, mae_combined = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  double max_error = 0.0;
  double phase_error_deg = 0.0;
  double frequency_error_pct = 0.0;
  double hamiltonian_drift_pct = 0.0;
  double period_estimate = 0.0;
};

/// Aligned-sample error metrics plus phase/frequency/conservation
/// diagnostics. Throws NumericError when the reference is constant (R2
/// undefined).
EvaluationReport1D evaluate_1d(const Sampler1D& prediction,
                               const ReferenceSolution1D& reference,
                               const LVParams& p);

/// RMS of the relative radial gap between the predicted and reference orbits
/// in (u,v) phase space, binned by angle about the coexistence equilibrium.
/// Phase lag does not contribute; only the orbit shape does.
double orbit_radial_deviation_rms(const Sampler1D& prediction,
                                  const ReferenceSolution1D& reference,
                                  const LVParams& p, int angle_bins = 72);

// ---------------------------------------------------------------------------
// 2D evaluation (Table-2-style metrics)
// ---------------------------------------------------------------------------

struct SnapshotMetrics {
  double time = 0.0;
  double mae_u = 0.0, mae_v = 0.0;
  double rmse = 0.0;
  double ssim = 0.0;                // prey field, 7x7 window
  double pattern_similarity = 0.0;  // Pearson correlation of flattened prey fields
};

struct EvaluationReport2D {
  std::vector<SnapshotMetrics> rows;
  SnapshotMetrics average;
};

/// Per-snapshot field metrics at the requested times (each must match a
/// reference snapshot time; grid mismatch raises StructuralError).
EvaluationReport2D evaluate_2d(const Sampler2D& prediction,
                               const ReferenceSolution2D& reference,
                               std::span<const double> times);

/// Pearson correlation of two flattened fields.
double pearson(std::span<const double> a, std::span<const double> b);

/// Mean SSIM over sliding windows (default 7x7, k1=0.01, k2=0.03, dynamic
/// range taken from the pooled min/max of both fields).
double ssim(std::span<const double> a, std::span<const double> b, int nx, int ny,
            int window = 7, double k1 = 0.01, double k2 = 0.03);

// ---------------------------------------------------------------------------
// Spectral analysis
// ---------------------------------------------------------------------------

struct SpectrumReport {
  std::vector<double> frequency;
  std::vector<double> power;       // reference/self signal
  std::vector<double> power_pred;  // empty in single-signal mode
  double dominant_frequency = 0.0;
  double dominant_frequency_pred = 0.0;
  double rmse_psd = 0.0;           // on unit-sum-normalized spectra
  double parseval_ratio = 0.0;     // sum(power) / variance of the signal
};

/// Hann-windowed periodogram of the mean-removed series, zero-padded 8x for
/// peak localization; dominant frequency by parabolic interpolation of the
/// log-power peak.
SpectrumReport power_spectrum(std::span<const double> series, double dt);

/// Validates uniform sampling first (NumericError: resampling required).
SpectrumReport power_spectrum(std::span<const double> times, std::span<const double> series);

/// Two-signal comparison on a common frequency grid.
SpectrumReport power_spectrum_compare(std::span<const double> truth,
                                      std::span<const double> pred, double dt);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse = false);

// ---------------------------------------------------------------------------
// Recurrence / complexity
// ---------------------------------------------------------------------------

struct RecurrenceReport {
  int n = 0;
  std::vector<std::uint8_t> matrix;  // n*n row-major, 1 = recurrent pair
  double threshold = 0.0;            // fraction * max pairwise distance
  double recurrence_rate = 0.0;      // mean of matrix entries
  double shannon_entropy_u = 0.0;    // bits, histogram of u values
  double shannon_entropy_v = 0.0;

  bool at(int i, int j) const {
    return matrix[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                  static_cast<std::size_t>(j)] != 0;
  }
};

RecurrenceReport recurrence_analysis(std::span<const double> u,
                                     std::span<const double> v,
                                     double threshold_fraction, int histogram_bins = 32);

// ---------------------------------------------------------------------------
// Stability and pattern kinematics
// ---------------------------------------------------------------------------

/// Largest Lyapunov exponent by the two-trajectory (Benettin) method with
/// periodic renormalization of the separation.
double estimate_lyapunov(const OdeRhs& rhs, std::span<const double> y0, double t_end,
                         double delta0 = 1e-8, double renorm_interval = 0.5,
                         double tol = 1e-10);

struct WaveMetricsReport {
  bool defined = false;  // false when no front motion is detectable
  double speed = 0.0;              // mid-domain slice cross-correlation, prey field
  double speed_v = 0.0;            // same estimator on the predator field
  double wavelength = 0.0;         // dominant radial spatial mode, prey field
  double wavelength_v = 0.0;
  double rotation_period = 0.0;    // temporal PSD at a probe point; 0 if too few snapshots
};

WaveMetricsReport wave_metrics(const ReferenceSolution2D& sol);

// ---------------------------------------------------------------------------
// Benchmarking
// ---------------------------------------------------------------------------

struct BenchmarkRow {
  std::string method;
  double mae = 0.0;
  double r2 = 0.0;
  double time_ms = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  double speedup_inference_vs_solver = 0.0;
  int n_points = 0;
  int repetitions = 0;
};

/// Times (a) dense trained-model evaluation at n_points times and (b) a
/// fresh adaptive solve with dense output at the same points; medians over
/// `reps` repetitions. Errors are measured against a tighter-tolerance
/// reference solve.
BenchmarkReport run_benchmark(const Network& net, const LVParams& p,
                              std::pair<double, double> ic,
                              std::pair<double, double> t_span, int n_points = 2000,
                              int reps = 10, double solver_tol = 1e-10);

}  // namespace uspil
