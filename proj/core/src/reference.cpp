#include "uspil/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json_io.hpp"
#include "uspil/io.hpp"

namespace uspil {

void ReferenceSolution1D::validate() const {
  if (times.size() != u.size() || times.size() != v.size())
    throw StructuralError("reference arrays must have equal lengths");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw StructuralError("reference times must be strictly increasing");
  for (std::size_t i = 0; i < times.size(); ++i)
    if (!(u[i] > 0.0) || !(v[i] > 0.0))
      throw NumericError("reference densities must stay positive");
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with standard embedded error control
// ---------------------------------------------------------------------------

namespace {

constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA2[1] = {1.0 / 5};
constexpr double kA3[2] = {3.0 / 40, 9.0 / 40};
constexpr double kA4[3] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
constexpr double kA5[4] = {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729};
constexpr double kA6[5] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656};
constexpr double kB[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kBhat[7] = {5179.0 / 57600, 0.0,          7571.0 / 16695, 393.0 / 640,
                             -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

}  // namespace

OdeResult integrate(const OdeRhs& f, std::span<const double> y0, double t0,
                    std::span<const double> output_times, double rtol, double atol) {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("tolerances must be positive");
  for (std::size_t i = 0; i < output_times.size(); ++i) {
    if (!std::isfinite(output_times[i])) throw ConfigError("output times must be finite");
    if (output_times[i] < t0 || (i > 0 && output_times[i] <= output_times[i - 1]))
      throw ConfigError("output times must be increasing and >= t0");
  }

  const std::size_t n = y0.size();
  OdeResult res;
  res.states.reserve(output_times.size());

  std::vector<double> y(y0.begin(), y0.end());
  std::vector<double> ynew(n), yerr(n), tmp(n);
  std::vector<std::vector<double>> k(7, std::vector<double>(n));

  double t = t0;
  std::size_t next_out = 0;
  while (next_out < output_times.size() && output_times[next_out] <= t0) {
    res.states.emplace_back(y);
    ++next_out;
  }
  if (next_out >= output_times.size()) return res;

  const double t_end = output_times.back();
  double h = std::min(1e-3 * (t_end - t0), output_times[next_out] - t);
  bool have_k1 = false;

  while (t < t_end) {
    const double t_target = output_times[next_out];
    h = std::min(h, t_target - t);
    if (!(h > std::abs(t) * 16.0 * std::numeric_limits<double>::epsilon() + 1e-300))
      throw NumericError("step-size underflow (stiffness?) at t = " + format_g17(t));

    if (!have_k1) f(t, y, k[0]);

    auto stage = [&](int s, const double* a) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < s - 1; ++j) acc += a[j] * k[static_cast<std::size_t>(j)][i];
        tmp[i] = y[i] + h * acc;
      }
      f(t + kC[s - 1] * h, tmp, k[static_cast<std::size_t>(s - 1)]);
    };
    stage(2, kA2);
    stage(3, kA3);
    stage(4, kA4);
    stage(5, kA5);
    stage(6, kA6);

    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 6; ++j) acc += kB[j] * k[static_cast<std::size_t>(j)][i];
      ynew[i] = y[i] + h * acc;
    }
    f(t + h, ynew, k[6]);  // FSAL stage

    double err_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double de = 0.0;
      for (int j = 0; j < 7; ++j) de += (kB[j] - kBhat[j]) * k[static_cast<std::size_t>(j)][i];
      const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double r = h * de / sc;
      err_sq += r * r;
    }
    const double err = std::sqrt(err_sq / static_cast<double>(n));

    if (err <= 1.0) {
      t += h;
      y.swap(ynew);
      k[0].swap(k[6]);
      have_k1 = true;
      ++res.n_steps;
      if (t >= t_target - 1e-14 * std::max(1.0, std::abs(t_target))) {
        res.states.emplace_back(y);
        ++next_out;
        if (next_out >= output_times.size()) break;
      }
    } else {
      ++res.n_rejected;
      have_k1 = false;
    }
    const double factor =
        std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
    h *= factor;
  }
  return res;
}

ReferenceSolution1D integrate_ode(const LVParams& p, std::pair<double, double> ic,
                                  std::span<const double> output_times, double rtol,
                                  double atol) {
  p.validate();
  if (!(ic.first > 0.0) || !(ic.second > 0.0))
    throw ConfigError("initial densities must be positive");

  const OdeRhs rhs = [&p](double, std::span<const double> y, std::span<double> dy) {
    auto [fu, fv] = rhs_ode(p, y[0], y[1]);
    dy[0] = fu;
    dy[1] = fv;
  };
  const double y0[2] = {ic.first, ic.second};
  OdeResult r = integrate(rhs, y0, output_times.empty() ? 0.0 : output_times.front(),
                          output_times, rtol, atol);

  ReferenceSolution1D sol;
  sol.params = p;
  sol.rtol = rtol;
  sol.atol = atol;
  sol.n_steps = r.n_steps;
  sol.n_rejected = r.n_rejected;
  sol.times.assign(output_times.begin(), output_times.end());
  sol.u.reserve(r.states.size());
  sol.v.reserve(r.states.size());
  for (const auto& s : r.states) {
    sol.u.push_back(s[0]);
    sol.v.push_back(s[1]);
  }
  sol.validate();
  return sol;
}

ReferenceSolution1D integrate_ode(const LVParams& p, std::pair<double, double> ic,
                                  std::pair<double, double> t_span, double rtol,
                                  double atol, int n_output) {
  if (!(t_span.second > t_span.first) || !std::isfinite(t_span.first) ||
      !std::isfinite(t_span.second))
    throw ConfigError("t_span must be finite and increasing");
  if (n_output < 2) throw ConfigError("need at least 2 output times");
  std::vector<double> times(static_cast<std::size_t>(n_output));
  for (int i = 0; i < n_output; ++i)
    times[static_cast<std::size_t>(i)] =
        t_span.first + (t_span.second - t_span.first) * i / (n_output - 1);
  return integrate_ode(p, ic, times, rtol, atol);
}

// ---------------------------------------------------------------------------
// Period estimation
// ---------------------------------------------------------------------------

PeriodEstimate find_period(std::span<const double> times, std::span<const double> u) {
  if (times.size() != u.size() || times.size() < 4)
    throw ConfigError("find_period: need aligned series of length >= 4");
  double mean = 0.0;
  for (double x : u) mean += x;
  mean /= static_cast<double>(u.size());

  std::vector<double> crossings;
  for (std::size_t i = 0; i + 1 < u.size(); ++i) {
    if (u[i] < mean && u[i + 1] >= mean) {
      const double frac = (mean - u[i]) / (u[i + 1] - u[i]);
      crossings.push_back(times[i] + frac * (times[i + 1] - times[i]));
    }
  }
  if (crossings.size() < 2)
    throw NumericError("find_period: insufficient data (fewer than 2 upward crossings)");

  PeriodEstimate est;
  est.cycles = static_cast<int>(crossings.size()) - 1;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 1; i < crossings.size(); ++i) {
    const double T = crossings[i] - crossings[i - 1];
    est.mean += T;
    lo = std::min(lo, T);
    hi = std::max(hi, T);
  }
  est.mean /= static_cast<double>(est.cycles);
  est.spread = (est.cycles > 1) ? hi - lo : 0.0;
  return est;
}

PeriodEstimate find_period(const ReferenceSolution1D& sol) {
  return find_period(sol.times, sol.u);
}

// ---------------------------------------------------------------------------
// Explicit finite differences for the reaction-diffusion system
// ---------------------------------------------------------------------------

namespace {

std::vector<int> neighbor_minus(int nvals, bool periodic) {
  std::vector<int> m(static_cast<std::size_t>(nvals));
  for (int i = 0; i < nvals; ++i) m[static_cast<std::size_t>(i)] = i - 1;
  m[0] = periodic ? nvals - 1 : 1;  // Neumann: mirror across the boundary node
  return m;
}
std::vector<int> neighbor_plus(int nvals, bool periodic) {
  std::vector<int> m(static_cast<std::size_t>(nvals));
  for (int i = 0; i < nvals; ++i) m[static_cast<std::size_t>(i)] = i + 1;
  m[static_cast<std::size_t>(nvals - 1)] = periodic ? 0 : nvals - 2;
  return m;
}

}  // namespace

FieldIc spiral_seed_ic(const LVParams& p, double length, double ramp_width) {
  const auto [ustar, vstar] = p.equilibrium();
  const double half = 0.5 * length;
  const double w = std::max(ramp_width, 1e-12);
  return [=](double x, double y) {
    // smooth step: 1 left of the mid-line, 0 right of it
    const double sx = 0.5 * (1.0 - std::tanh((x - half) / w));
    const double sy = 0.5 * (1.0 - std::tanh((y - half) / w));
    return std::make_pair(ustar * (1.0 + 0.5 * sx), vstar * (1.0 + 0.5 * sy));
  };
}

ReferenceSolution2D simulate_fdm(const LVParams& p, const FieldIc& ic, const FdmConfig& cfg) {
  // zero reaction rates are allowed (pure-diffusion verification problems)
  if (!(p.d_u > 0.0) || !(p.d_v > 0.0))
    throw ConfigError("diffusion coefficients must be positive");
  if (p.alpha < 0 || p.beta < 0 || p.delta < 0 || p.gamma < 0)
    throw ConfigError("reaction rates must be non-negative");
  if (cfg.nx < 4 || cfg.ny < 4) throw ConfigError("grid must be at least 4x4");
  if (!(cfg.length > 0.0)) throw ConfigError("domain length must be positive");
  if (!(cfg.t_end > 0.0)) throw ConfigError("t_end must be positive");
  const bool periodic = cfg.boundary == "periodic";
  if (!periodic && cfg.boundary != "neumann")
    throw ConfigError("boundary must be 'periodic' or 'neumann'");

  const double dx = cfg.length / cfg.nx;
  const double d_max = std::max(p.d_u, p.d_v);
  const double rate_max = std::max({p.alpha, p.beta, p.gamma, p.delta});
  double dt = cfg.dt;
  if (dt <= 0.0) dt = std::min(0.2 * dx * dx / d_max, 0.005 / rate_max);
  const double cfl = d_max * dt / (dx * dx);
  if (cfl > 0.25 + 1e-12)
    throw ConfigError("CFL violation: max(d)*dt/dx^2 = " + format_g17(cfl) + " > 0.25");

  std::vector<double> snaps = cfg.snapshot_times;
  if (snaps.empty())
    for (int i = 0; i <= 5; ++i) snaps.push_back(cfg.t_end * i / 5.0);
  std::sort(snaps.begin(), snaps.end());

  ReferenceSolution2D sol;
  sol.nx = cfg.nx;
  sol.ny = cfg.ny;
  sol.dx = dx;
  sol.boundary = cfg.boundary;
  sol.params = p;
  sol.dt = dt;
  sol.cfl = cfl;

  const std::size_t cells = sol.cells();
  std::vector<double> u(cells), v(cells), un(cells), vn(cells);
  for (int iy = 0; iy < cfg.ny; ++iy)
    for (int ix = 0; ix < cfg.nx; ++ix) {
      auto [u0, v0] = ic(ix * dx, iy * dx);
      u[static_cast<std::size_t>(iy) * static_cast<std::size_t>(cfg.nx) + static_cast<std::size_t>(ix)] = u0;
      v[static_cast<std::size_t>(iy) * static_cast<std::size_t>(cfg.nx) + static_cast<std::size_t>(ix)] = v0;
    }
  for (double val : u)
    if (!(val > 0.0)) throw ConfigError("initial prey field must be positive");
  for (double val : v)
    if (!(val > 0.0)) throw ConfigError("initial predator field must be positive");

  const std::vector<int> xm = neighbor_minus(cfg.nx, periodic);
  const std::vector<int> xp = neighbor_plus(cfg.nx, periodic);
  const std::vector<int> ym = neighbor_minus(cfg.ny, periodic);
  const std::vector<int> yp = neighbor_plus(cfg.ny, periodic);

  const double inv_dx2 = 1.0 / (dx * dx);
  auto record_snapshot = [&](double t_now) {
    sol.times.push_back(t_now);
    sol.u.push_back(u);
    sol.v.push_back(v);
    double mu = 0.0, mv = 0.0;
    double umin = u[0], umax = u[0], vmin = v[0], vmax = v[0];
    for (std::size_t i = 0; i < cells; ++i) {
      mu += u[i];
      mv += v[i];
      umin = std::min(umin, u[i]);
      umax = std::max(umax, u[i]);
      vmin = std::min(vmin, v[i]);
      vmax = std::max(vmax, v[i]);
    }
    sol.mass_u.push_back(mu * dx * dx);
    sol.mass_v.push_back(mv * dx * dx);
    sol.min_u.push_back(umin);
    sol.max_u.push_back(umax);
    sol.min_v.push_back(vmin);
    sol.max_v.push_back(vmax);
  };

  std::size_t next_snap = 0;
  while (next_snap < snaps.size() && snaps[next_snap] <= 0.0) {
    record_snapshot(0.0);
    ++next_snap;
  }

  const long n_total = static_cast<long>(std::ceil(cfg.t_end / dt - 1e-12));
  double t = 0.0;
  for (long step = 1; step <= n_total; ++step) {
    double max_abs = 0.0;
    for (int iy = 0; iy < cfg.ny; ++iy) {
      const std::size_t row = static_cast<std::size_t>(iy) * static_cast<std::size_t>(cfg.nx);
      const std::size_t rym = static_cast<std::size_t>(ym[static_cast<std::size_t>(iy)]) * static_cast<std::size_t>(cfg.nx);
      const std::size_t ryp = static_cast<std::size_t>(yp[static_cast<std::size_t>(iy)]) * static_cast<std::size_t>(cfg.nx);
      for (int ix = 0; ix < cfg.nx; ++ix) {
        const std::size_t c = row + static_cast<std::size_t>(ix);
        const std::size_t cxm = row + static_cast<std::size_t>(xm[static_cast<std::size_t>(ix)]);
        const std::size_t cxp = row + static_cast<std::size_t>(xp[static_cast<std::size_t>(ix)]);
        const double uc = u[c], vc = v[c];
        const double lap_u = (u[cxm] + u[cxp] + u[rym + static_cast<std::size_t>(ix)] +
                              u[ryp + static_cast<std::size_t>(ix)] - 4.0 * uc) * inv_dx2;
        const double lap_v = (v[cxm] + v[cxp] + v[rym + static_cast<std::size_t>(ix)] +
                              v[ryp + static_cast<std::size_t>(ix)] - 4.0 * vc) * inv_dx2;
        const double uv = uc * vc;
        const double du = p.alpha * uc - p.beta * uv + p.d_u * lap_u;
        const double dv = p.delta * uv - p.gamma * vc + p.d_v * lap_v;
        un[c] = uc + dt * du;
        vn[c] = vc + dt * dv;
        max_abs = std::max({max_abs, std::abs(un[c]), std::abs(vn[c])});
      }
    }
    if (!std::isfinite(max_abs))
      throw NumericError("FDM diverged (non-finite field) at step " + std::to_string(step));
    u.swap(un);
    v.swap(vn);
    t = static_cast<double>(step) * dt;
    while (next_snap < snaps.size() && t >= snaps[next_snap] - 0.5 * dt) {
      record_snapshot(t);
      ++next_snap;
    }
  }
  while (next_snap < snaps.size()) {  // numerical tail: t_end not quite reached
    record_snapshot(t);
    ++next_snap;
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Export / import
// ---------------------------------------------------------------------------

void export_reference(const ReferenceSolution1D& sol, const std::filesystem::path& csv_file) {
  const std::vector<std::string> header = {"t", "u", "v"};
  CsvWriter w(csv_file, header);
  for (std::size_t i = 0; i < sol.times.size(); ++i) {
    const double row[3] = {sol.times[i], sol.u[i], sol.v[i]};
    w.write_row(row);
  }
}

ReferenceSolution1D import_reference_1d(const std::filesystem::path& csv_file) {
  const CsvTable t = read_csv(csv_file);
  ReferenceSolution1D sol;
  sol.times = t.col("t");
  sol.u = t.col("u");
  sol.v = t.col("v");
  sol.validate();
  return sol;
}

std::vector<std::filesystem::path> export_reference(const ReferenceSolution2D& sol,
                                                    const std::filesystem::path& dir,
                                                    const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  nlohmann::ordered_json manifest;
  manifest["grid"] = {{"nx", sol.nx}, {"ny", sol.ny}, {"dx", sol.dx}};
  manifest["times"] = sol.times;
  nlohmann::ordered_json file_list = nlohmann::ordered_json::array();

  const std::vector<std::string> header = {"x", "y", "u", "v"};
  for (std::size_t s = 0; s < sol.times.size(); ++s) {
    const std::string name = stem + "_" + std::to_string(s) + ".csv";
    const std::filesystem::path f = dir / name;
    CsvWriter w(f, header);
    for (int iy = 0; iy < sol.ny; ++iy)
      for (int ix = 0; ix < sol.nx; ++ix) {
        const double row[4] = {ix * sol.dx, iy * sol.dx, sol.at_u(s, ix, iy),
                               sol.at_v(s, ix, iy)};
        w.write_row(row);
      }
    file_list.push_back(name);
    files.push_back(f);
  }
  manifest["files"] = std::move(file_list);
  manifest["params"] = {{"alpha", sol.params.alpha}, {"beta", sol.params.beta},
                        {"delta", sol.params.delta}, {"gamma", sol.params.gamma},
                        {"d_u", sol.params.d_u},     {"d_v", sol.params.d_v}};
  manifest["boundary"] = sol.boundary;
  manifest["dt"] = sol.dt;
  manifest["cfl"] = sol.cfl;
  const std::filesystem::path mf = dir / (stem + "_manifest.json");
  detail::write_json_file(manifest, mf);
  files.push_back(mf);
  return files;
}

ReferenceSolution2D import_reference_2d(const std::filesystem::path& manifest_file) {
  const nlohmann::ordered_json m = detail::read_json_file(manifest_file);
  ReferenceSolution2D sol;
  try {
    sol.nx = m.at("grid").at("nx").get<int>();
    sol.ny = m.at("grid").at("ny").get<int>();
    sol.dx = m.at("grid").at("dx").get<double>();
    sol.times = m.at("times").get<std::vector<double>>();
    sol.boundary = m.at("boundary").get<std::string>();
    sol.dt = m.at("dt").get<double>();
    sol.cfl = m.at("cfl").get<double>();
    const auto& pj = m.at("params");
    sol.params.alpha = pj.at("alpha").get<double>();
    sol.params.beta = pj.at("beta").get<double>();
    sol.params.delta = pj.at("delta").get<double>();
    sol.params.gamma = pj.at("gamma").get<double>();
    sol.params.d_u = pj.at("d_u").get<double>();
    sol.params.d_v = pj.at("d_v").get<double>();

    const auto dir = manifest_file.parent_path();
    for (const auto& fname : m.at("files")) {
      const CsvTable t = read_csv(dir / fname.get<std::string>());
      if (t.rows.size() != sol.cells())
        throw ConfigError("snapshot size does not match manifest grid");
      std::vector<double> u(sol.cells()), v(sol.cells());
      const std::size_t cu = t.column("u"), cv = t.column("v");
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        u[i] = t.rows[i][cu];
        v[i] = t.rows[i][cv];
      }
      sol.u.push_back(std::move(u));
      sol.v.push_back(std::move(v));
    }
    if (sol.u.size() != sol.times.size())
      throw ConfigError("manifest times and files disagree");
  } catch (const nlohmann::ordered_json::exception& e) {
    throw ConfigError("malformed manifest " + manifest_file.string() + ": " + e.what());
  }
  // rebuild per-snapshot diagnostics
  for (std::size_t s = 0; s < sol.times.size(); ++s) {
    double mu = 0.0, mv = 0.0;
    double umin = sol.u[s][0], umax = umin, vmin = sol.v[s][0], vmax = vmin;
    for (std::size_t i = 0; i < sol.cells(); ++i) {
      mu += sol.u[s][i];
      mv += sol.v[s][i];
      umin = std::min(umin, sol.u[s][i]);
      umax = std::max(umax, sol.u[s][i]);
      vmin = std::min(vmin, sol.v[s][i]);
      vmax = std::max(vmax, sol.v[s][i]);
    }
    sol.mass_u.push_back(mu * sol.dx * sol.dx);
    sol.mass_v.push_back(mv * sol.dx * sol.dx);
    sol.min_u.push_back(umin);
    sol.max_u.push_back(umax);
    sol.min_v.push_back(vmin);
    sol.max_v.push_back(vmax);
  }
  return sol;
}

}  // namespace uspil
