#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uspil/dynamics.hpp"

namespace uspil {

/// Dense ground-truth trajectory of the temporal system.
struct ReferenceSolution1D {
  std::vector<double> times;  // strictly increasing
  std::vector<double> u;
  std::vector<double> v;
  LVParams params;
  double rtol = 0.0, atol = 0.0;
  long n_steps = 0;     // accepted steps
  long n_rejected = 0;

  void validate() const;
};

/// Snapshot sequence of the 2D reaction-diffusion system on a uniform grid.
struct ReferenceSolution2D {
  int nx = 0, ny = 0;
  double dx = 0.0;  // dy == dx
  std::string boundary;  // "periodic" | "neumann"
  std::vector<double> times;
  std::vector<std::vector<double>> u;  // per snapshot, row-major ny x nx
  std::vector<std::vector<double>> v;
  LVParams params;
  double dt = 0.0;
  double cfl = 0.0;  // max(d_u,d_v)*dt/dx^2, recorded at setup
  // per-snapshot diagnostics
  std::vector<double> mass_u, mass_v;  // sum(field)*dx*dy
  std::vector<double> min_u, max_u, min_v, max_v;

  std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  double at_u(std::size_t snap, int ix, int iy) const {
    return u[snap][static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix)];
  }
  double at_v(std::size_t snap, int ix, int iy) const {
    return v[snap][static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix)];
  }
};

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

/// Adaptive embedded Runge-Kutta solve of y' = f(t, y) with dense output by
/// stepping exactly onto each requested time. The pair is Dormand-Prince
/// 5(4); callers wanting 8th-order-reference behaviour should tighten the
/// tolerances (1e-10 and below is cheap for these systems).
struct OdeResult {
  std::vector<std::vector<double>> states;  // aligned with output times
  long n_steps = 0;
  long n_rejected = 0;
};
OdeResult integrate(const OdeRhs& f, std::span<const double> y0, double t0,
                    std::span<const double> output_times, double rtol, double atol);

/// Ground-truth LV trajectory at the given output times.
ReferenceSolution1D integrate_ode(const LVParams& p, std::pair<double, double> ic,
                                  std::pair<double, double> t_span, double rtol,
                                  double atol, int n_output);
ReferenceSolution1D integrate_ode(const LVParams& p, std::pair<double, double> ic,
                                  std::span<const double> output_times, double rtol,
                                  double atol);

/// Oscillation period from successive upward crossings of u through its
/// mean, refined by linear interpolation. Returns mean and spread (max-min)
/// across cycles. Throws NumericError when fewer than two crossings exist.
struct PeriodEstimate {
  double mean = 0.0;
  double spread = 0.0;
  int cycles = 0;
};
PeriodEstimate find_period(std::span<const double> times, std::span<const double> u);
PeriodEstimate find_period(const ReferenceSolution1D& sol);

/// Explicit FDM configuration. dt <= 0 picks the default
/// min(0.2*dx^2/max(d_u,d_v), 0.005/max reaction rate).
struct FdmConfig {
  int nx = 128, ny = 128;
  double length = 20.0;  // square domain [0,L)^2
  double dt = 0.0;
  double t_end = 5.0;
  std::string boundary = "periodic";  // or "neumann"
  std::vector<double> snapshot_times; // defaults to {0, ..., t_end} (6 frames)
};

using FieldIc = std::function<std::pair<double, double>(double x, double y)>;

/// Forward-Euler, 5-point-Laplacian integration of the reaction-diffusion
/// system. Enforces the CFL bound max(d)*dt/dx^2 <= 0.25 before stepping and
/// aborts with the step index if the fields leave the finite range.
ReferenceSolution2D simulate_fdm(const LVParams& p, const FieldIc& ic, const FdmConfig& cfg);

/// Default spiral-seeding initial condition: equilibrium plus quadrant
/// asymmetric perturbations smoothed by a tanh ramp of width 2*dx.
FieldIc spiral_seed_ic(const LVParams& p, double length, double ramp_width);

// Export / import. 1D: single CSV (t,u,v). 2D: one CSV per snapshot
// (x,y,u,v) plus a JSON manifest describing grid, times, files, params.
void export_reference(const ReferenceSolution1D& sol, const std::filesystem::path& csv_file);
ReferenceSolution1D import_reference_1d(const std::filesystem::path& csv_file);

std::vector<std::filesystem::path> export_reference(const ReferenceSolution2D& sol,
                                                    const std::filesystem::path& dir,
                                                    const std::string& stem = "snapshot");
ReferenceSolution2D import_reference_2d(const std::filesystem::path& manifest_file);

}  // namespace uspil
