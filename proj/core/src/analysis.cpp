#include "uspil/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "uspil/io.hpp"

namespace uspil {

Sampler1D make_sampler(const Network& net) {
  if (net.spec().input_dim != 1)
    throw StructuralError("make_sampler: network is not 1D");
  return [&net](double t) {
    const double x[1] = {t};
    return forward(net, std::span<const double>(x, 1));
  };
}

Sampler2D make_sampler_2d(const Network& net) {
  if (net.spec().input_dim != 3)
    throw StructuralError("make_sampler_2d: network is not 2D");
  return [&net](double x, double y, double t) {
    const double pt[3] = {x, y, t};
    return forward(net, std::span<const double>(pt, 3));
  };
}

// ---------------------------------------------------------------------------
// FFT and spectra
// ---------------------------------------------------------------------------

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw StructuralError("fft_radix2: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> p = a[i + k];
        const std::complex<double> q = a[i + k + len / 2] * w;
        a[i + k] = p + q;
        a[i + k + len / 2] = p - q;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct Psd {
  std::vector<double> freq;
  std::vector<double> power;
  double dominant = 0.0;
  double parseval_ratio = 0.0;
};

constexpr int kZeroPadFactor = 8;

Psd periodogram(std::span<const double> series, double dt) {
  const std::size_t n = series.size();
  if (n < 16) throw ConfigError("power_spectrum: series length must be >= 16");
  if (!(dt > 0.0)) throw ConfigError("power_spectrum: dt must be positive");

  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);

  double variance = 0.0;
  std::vector<double> w(n), wx(n);
  double wsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = series[i] - mean;
    variance += x * x;
    w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                 static_cast<double>(n - 1)));
    wx[i] = w[i] * x;
    wsq += w[i] * w[i];
  }
  variance /= static_cast<double>(n);

  const std::size_t nfft = next_pow2(n) * kZeroPadFactor;
  std::vector<std::complex<double>> buf(nfft, 0.0);
  for (std::size_t i = 0; i < n; ++i) buf[i] = wx[i];
  fft_radix2(buf);

  Psd out;
  const std::size_t half = nfft / 2;
  out.freq.resize(half + 1);
  out.power.resize(half + 1);
  // One-sided power normalized so sum(power) equals the Hann-weighted
  // variance of the series (Parseval): sum|X_k|^2 = nfft * sum|w x|^2.
  const double norm = 1.0 / (static_cast<double>(nfft) * wsq);
  for (std::size_t k = 0; k <= half; ++k) {
    const double mag2 = std::norm(buf[k]);
    const double mult = (k == 0 || k == half) ? 1.0 : 2.0;
    out.freq[k] = static_cast<double>(k) / (static_cast<double>(nfft) * dt);
    out.power[k] = mult * mag2 * norm;
  }

  double psum = 0.0;
  for (double pw : out.power) psum += pw;
  out.parseval_ratio = (variance > 0.0) ? psum / variance : 0.0;

  // dominant peak (skip DC), parabolic interpolation on log power
  std::size_t kbest = 1;
  for (std::size_t k = 2; k < half; ++k)
    if (out.power[k] > out.power[kbest]) kbest = k;
  double kfrac = static_cast<double>(kbest);
  if (kbest > 1 && kbest + 1 < out.power.size() && out.power[kbest] > 0.0) {
    const double eps = 1e-300;
    const double lm = std::log(out.power[kbest - 1] + eps);
    const double l0 = std::log(out.power[kbest] + eps);
    const double lp = std::log(out.power[kbest + 1] + eps);
    const double denom = lm - 2.0 * l0 + lp;
    if (denom < 0.0) kfrac += 0.5 * (lm - lp) / denom;
  }
  out.dominant = kfrac / (static_cast<double>(nfft) * dt);
  return out;
}

double rms_of_normalized_difference(std::span<const double> a, std::span<const double> b) {
  double sa = 0.0, sb = 0.0;
  for (double x : a) sa += x;
  for (double x : b) sb += x;
  if (sa <= 0.0 || sb <= 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] / sa - b[i] / sb;
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace

SpectrumReport power_spectrum(std::span<const double> series, double dt) {
  const Psd p = periodogram(series, dt);
  SpectrumReport rep;
  rep.frequency = p.freq;
  rep.power = p.power;
  rep.dominant_frequency = p.dominant;
  rep.parseval_ratio = p.parseval_ratio;
  return rep;
}

SpectrumReport power_spectrum(std::span<const double> times, std::span<const double> series) {
  if (times.size() != series.size() || times.size() < 2)
    throw ConfigError("power_spectrum: need aligned times/values");
  const double dt = times[1] - times[0];
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double step = times[i] - times[i - 1];
    if (std::abs(step - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
      throw NumericError("power_spectrum: non-uniform sampling, resample required");
  }
  return power_spectrum(series, dt);
}

SpectrumReport power_spectrum_compare(std::span<const double> truth,
                                      std::span<const double> pred, double dt) {
  if (truth.size() != pred.size())
    throw ConfigError("power_spectrum_compare: length mismatch");
  const Psd pt = periodogram(truth, dt);
  const Psd pp = periodogram(pred, dt);
  SpectrumReport rep;
  rep.frequency = pt.freq;
  rep.power = pt.power;
  rep.power_pred = pp.power;
  rep.dominant_frequency = pt.dominant;
  rep.dominant_frequency_pred = pp.dominant;
  rep.parseval_ratio = pt.parseval_ratio;
  rep.rmse_psd = rms_of_normalized_difference(pt.power, pp.power);
  return rep;
}

// ---------------------------------------------------------------------------
// 1D evaluation
// ---------------------------------------------------------------------------

namespace {

// argmax lag of the linear cross-correlation of mean-removed series,
// parabolic-refined; positive lag means `b` trails `a`. The window keeps the
// search inside one oscillation where the phase is unambiguous.
double best_lag(std::span<const double> a, std::span<const double> b, double dt,
                int window) {
  const int n = static_cast<int>(a.size());
  double ma = 0.0, mb = 0.0;
  for (double x : a) ma += x;
  for (double x : b) mb += x;
  ma /= n;
  mb /= n;
  const int max_lag = std::min(window, n / 2);
  std::vector<double> c(static_cast<std::size_t>(2 * max_lag + 1), 0.0);
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i) {
      const int j = i + lag;
      if (j < 0 || j >= n) continue;
      acc += (a[static_cast<std::size_t>(i)] - ma) * (b[static_cast<std::size_t>(j)] - mb);
      ++cnt;
    }
    c[static_cast<std::size_t>(lag + max_lag)] = (cnt > 0) ? acc / cnt : 0.0;
  }
  int best = max_lag;  // lag 0
  for (int i = 0; i < static_cast<int>(c.size()); ++i)
    if (c[static_cast<std::size_t>(i)] > c[static_cast<std::size_t>(best)]) best = i;
  double refined = static_cast<double>(best);
  if (best > 0 && best + 1 < static_cast<int>(c.size())) {
    const double lm = c[static_cast<std::size_t>(best - 1)];
    const double l0 = c[static_cast<std::size_t>(best)];
    const double lp = c[static_cast<std::size_t>(best + 1)];
    const double denom = lm - 2.0 * l0 + lp;
    if (denom < 0.0) refined += 0.5 * (lm - lp) / denom;
  }
  return (refined - max_lag) * dt;
}

}  // namespace

EvaluationReport1D evaluate_1d(const Sampler1D& prediction,
                               const ReferenceSolution1D& reference, const LVParams& p) {
  reference.validate();
  const std::size_t n = reference.times.size();
  std::vector<double> up(n), vp(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [uh, vh] = prediction(reference.times[i]);
    up[i] = uh;
    vp[i] = vh;
  }

  EvaluationReport1D rep;
  double sum_au = 0.0, sum_av = 0.0, sum_sq = 0.0, maxe = 0.0;
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += reference.u[i];
    mv += reference.v[i];
  }
  mu /= static_cast<double>(n);
  mv /= static_cast<double>(n);
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eu = up[i] - reference.u[i];
    const double ev = vp[i] - reference.v[i];
    sum_au += std::abs(eu);
    sum_av += std::abs(ev);
    sum_sq += eu * eu + ev * ev;
    maxe = std::max({maxe, std::abs(eu), std::abs(ev)});
    ss_res += eu * eu + ev * ev;
    ss_tot += (reference.u[i] - mu) * (reference.u[i] - mu) +
              (reference.v[i] - mv) * (reference.v[i] - mv);
  }
  if (!(ss_tot > 0.0))
    throw NumericError("evaluate_1d: constant reference, R^2 undefined");

  rep.mae_u = sum_au / static_cast<double>(n);
  rep.mae_v = sum_av / static_cast<double>(n);
  rep.mae_combined = 0.5 * (rep.mae_u + rep.mae_v);
  rep.rmse = std::sqrt(sum_sq / static_cast<double>(2 * n));
  rep.r2 = 1.0 - ss_res / ss_tot;
  rep.max_error = maxe;

  const double dt = reference.times[1] - reference.times[0];
  const PeriodEstimate t_ref = find_period(reference.times, reference.u);
  try {
    rep.period_estimate = find_period(reference.times, up).mean;
  } catch (const NumericError&) {
    rep.period_estimate = 0.0;  // prediction without oscillations
  }

  const SpectrumReport spec = power_spectrum_compare(reference.u, up, dt);
  if (spec.dominant_frequency > 0.0)
    rep.frequency_error_pct =
        100.0 * std::abs(spec.dominant_frequency_pred - spec.dominant_frequency) /
        spec.dominant_frequency;

  const int lag_window = static_cast<int>(std::lround(0.6 * t_ref.mean / dt));
  const double lag = best_lag(reference.u, up, dt, lag_window);
  double phase = std::fmod(std::abs(lag) / t_ref.mean * 360.0, 360.0);
  rep.phase_error_deg = std::min(phase, 360.0 - phase);

  double h0 = hamiltonian(p, std::max(up[0], 1e-6), std::max(vp[0], 1e-6));
  double drift = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double h = hamiltonian(p, std::max(up[i], 1e-6), std::max(vp[i], 1e-6));
    drift = std::max(drift, std::abs(h - h0));
  }
  rep.hamiltonian_drift_pct = 100.0 * drift / std::abs(h0);
  return rep;
}

double orbit_radial_deviation_rms(const Sampler1D& prediction,
                                  const ReferenceSolution1D& reference,
                                  const LVParams& p, int angle_bins) {
  const auto [ustar, vstar] = p.equilibrium();
  auto bin_radii = [&](std::span<const double> u, std::span<const double> v) {
    std::vector<double> sum(static_cast<std::size_t>(angle_bins), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(angle_bins), 0);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double du = u[i] - ustar, dv = v[i] - vstar;
      const double r = std::hypot(du, dv);
      if (r < 1e-12) continue;
      const double theta = std::atan2(dv, du);  // [-pi, pi]
      int b = static_cast<int>((theta + M_PI) / (2.0 * M_PI) * angle_bins);
      b = std::clamp(b, 0, angle_bins - 1);
      sum[static_cast<std::size_t>(b)] += r;
      cnt[static_cast<std::size_t>(b)] += 1;
    }
    std::vector<double> mean(static_cast<std::size_t>(angle_bins), 0.0);
    for (int b = 0; b < angle_bins; ++b)
      if (cnt[static_cast<std::size_t>(b)] > 0)
        mean[static_cast<std::size_t>(b)] =
            sum[static_cast<std::size_t>(b)] / cnt[static_cast<std::size_t>(b)];
    return mean;
  };

  const std::size_t n = reference.times.size();
  std::vector<double> up(n), vp(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [uh, vh] = prediction(reference.times[i]);
    up[i] = uh;
    vp[i] = vh;
  }
  const std::vector<double> r_ref = bin_radii(reference.u, reference.v);
  const std::vector<double> r_pred = bin_radii(up, vp);

  double acc = 0.0;
  int used = 0;
  for (int b = 0; b < angle_bins; ++b) {
    const double rr = r_ref[static_cast<std::size_t>(b)];
    const double rp = r_pred[static_cast<std::size_t>(b)];
    if (rr <= 0.0 || rp <= 0.0) continue;
    const double rel = (rp - rr) / rr;
    acc += rel * rel;
    ++used;
  }
  if (used == 0) throw NumericError("orbit_radial_deviation: no overlapping angle bins");
  return std::sqrt(acc / used);
}

// ---------------------------------------------------------------------------
// 2D evaluation
// ---------------------------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw StructuralError("pearson: size mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double ssim(std::span<const double> a, std::span<const double> b, int nx, int ny,
            int window, double k1, double k2) {
  if (a.size() != b.size() ||
      a.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
    throw StructuralError("ssim: field size mismatch");
  double lo = a[0], hi = a[0];
  for (double x : a) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  for (double x : b) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const double range = std::max(hi - lo, 1e-12);
  const double c1 = (k1 * range) * (k1 * range);
  const double c2 = (k2 * range) * (k2 * range);

  const int w = window;
  if (nx < w || ny < w) throw ConfigError("ssim: window larger than field");
  const double wn = static_cast<double>(w * w);
  double acc = 0.0;
  long cnt = 0;
  for (int y0 = 0; y0 + w <= ny; ++y0) {
    for (int x0 = 0; x0 + w <= nx; ++x0) {
      double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int dy = 0; dy < w; ++dy)
        for (int dx = 0; dx < w; ++dx) {
          const std::size_t idx = static_cast<std::size_t>(y0 + dy) * static_cast<std::size_t>(nx) +
                                  static_cast<std::size_t>(x0 + dx);
          const double va = a[idx], vb = b[idx];
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      const double mua = sa / wn, mub = sb / wn;
      const double vara = saa / wn - mua * mua;
      const double varb = sbb / wn - mub * mub;
      const double cov = sab / wn - mua * mub;
      const double val = ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) /
                         ((mua * mua + mub * mub + c1) * (vara + varb + c2));
      acc += val;
      ++cnt;
    }
  }
  return acc / static_cast<double>(cnt);
}

EvaluationReport2D evaluate_2d(const Sampler2D& prediction,
                               const ReferenceSolution2D& reference,
                               std::span<const double> times) {
  EvaluationReport2D rep;
  const std::size_t cells = reference.cells();
  std::vector<double> pu(cells), pv(cells);

  for (double t : times) {
    std::size_t snap = reference.times.size();
    for (std::size_t s = 0; s < reference.times.size(); ++s)
      if (std::abs(reference.times[s] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
        snap = s;
        break;
      }
    if (snap == reference.times.size())
      throw StructuralError("evaluate_2d: requested time is not a reference snapshot");

    for (int iy = 0; iy < reference.ny; ++iy)
      for (int ix = 0; ix < reference.nx; ++ix) {
        auto [uh, vh] = prediction(ix * reference.dx, iy * reference.dx, t);
        pu[static_cast<std::size_t>(iy) * static_cast<std::size_t>(reference.nx) +
           static_cast<std::size_t>(ix)] = uh;
        pv[static_cast<std::size_t>(iy) * static_cast<std::size_t>(reference.nx) +
           static_cast<std::size_t>(ix)] = vh;
      }

    SnapshotMetrics m;
    m.time = t;
    double sau = 0.0, sav = 0.0, ssq = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      const double eu = pu[i] - reference.u[snap][i];
      const double ev = pv[i] - reference.v[snap][i];
      sau += std::abs(eu);
      sav += std::abs(ev);
      ssq += eu * eu + ev * ev;
    }
    m.mae_u = sau / static_cast<double>(cells);
    m.mae_v = sav / static_cast<double>(cells);
    m.rmse = std::sqrt(ssq / static_cast<double>(2 * cells));
    m.pattern_similarity = pearson(pu, reference.u[snap]);
    m.ssim = ssim(pu, reference.u[snap], reference.nx, reference.ny);
    rep.rows.push_back(m);
  }

  if (!rep.rows.empty()) {
    SnapshotMetrics avg;
    for (const auto& m : rep.rows) {
      avg.mae_u += m.mae_u;
      avg.mae_v += m.mae_v;
      avg.rmse += m.rmse;
      avg.ssim += m.ssim;
      avg.pattern_similarity += m.pattern_similarity;
    }
    const double k = static_cast<double>(rep.rows.size());
    avg.mae_u /= k;
    avg.mae_v /= k;
    avg.rmse /= k;
    avg.ssim /= k;
    avg.pattern_similarity /= k;
    rep.average = avg;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Recurrence
// ---------------------------------------------------------------------------

namespace {

double shannon_entropy_bits(std::span<const double> x, int bins) {
  double lo = x[0], hi = x[0];
  for (double v : x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<long> hist(static_cast<std::size_t>(bins), 0);
  if (hi <= lo) {
    hist[0] = static_cast<long>(x.size());
  } else {
    for (double v : x) {
      int b = static_cast<int>((v - lo) / (hi - lo) * bins);
      b = std::clamp(b, 0, bins - 1);
      hist[static_cast<std::size_t>(b)] += 1;
    }
  }
  double h = 0.0;
  const double n = static_cast<double>(x.size());
  for (long c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

RecurrenceReport recurrence_analysis(std::span<const double> u,
                                     std::span<const double> v,
                                     double threshold_fraction, int histogram_bins) {
  if (u.size() != v.size() || u.size() < 10)
    throw ConfigError("recurrence_analysis: need aligned series of length >= 10");
  if (!(threshold_fraction > 0.0) || !(threshold_fraction < 1.0))
    throw ConfigError("recurrence_analysis: threshold fraction must be in (0,1)");

  const int n = static_cast<int>(u.size());
  double dmax = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dmax = std::max(dmax, std::hypot(u[static_cast<std::size_t>(i)] - u[static_cast<std::size_t>(j)],
                                       v[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)]));

  RecurrenceReport rep;
  rep.n = n;
  rep.threshold = threshold_fraction * dmax;
  rep.matrix.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
  long hits = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double d = std::hypot(u[static_cast<std::size_t>(i)] - u[static_cast<std::size_t>(j)],
                                  v[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)]);
      const bool rec = d <= rep.threshold;
      rep.matrix[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(j)] = rec ? 1 : 0;
      hits += rec ? 1 : 0;
    }
  rep.recurrence_rate =
      static_cast<double>(hits) / (static_cast<double>(n) * static_cast<double>(n));
  rep.shannon_entropy_u = shannon_entropy_bits(u, histogram_bins);
  rep.shannon_entropy_v = shannon_entropy_bits(v, histogram_bins);
  return rep;
}

// ---------------------------------------------------------------------------
// Lyapunov
// ---------------------------------------------------------------------------

double estimate_lyapunov(const OdeRhs& rhs, std::span<const double> y0, double t_end,
                         double delta0, double renorm_interval, double tol) {
  if (!(delta0 > 0.0) || !(renorm_interval > 0.0) || !(t_end > renorm_interval))
    throw ConfigError("estimate_lyapunov: bad configuration");

  const std::size_t n = y0.size();
  std::vector<double> ref(y0.begin(), y0.end());
  std::vector<double> pert(y0.begin(), y0.end());
  pert[0] += delta0;

  double t = 0.0;
  double log_sum = 0.0;
  long intervals = 0;
  while (t + renorm_interval <= t_end + 1e-12) {
    const double t_next = t + renorm_interval;
    const double out[1] = {t_next};
    OdeResult rr = integrate(rhs, ref, t, std::span<const double>(out, 1), tol, tol);
    OdeResult rp = integrate(rhs, pert, t, std::span<const double>(out, 1), tol, tol);
    ref = rr.states.back();
    pert = rp.states.back();

    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = pert[i] - ref[i];
      d += diff * diff;
    }
    d = std::sqrt(d);
    if (!(d > 0.0))
      throw NumericError("estimate_lyapunov: separation underflow at t = " + format_g17(t_next));
    log_sum += std::log(d / delta0);
    ++intervals;
    const double scale = delta0 / d;
    for (std::size_t i = 0; i < n; ++i)
      pert[i] = ref[i] + scale * (pert[i] - ref[i]);
    t = t_next;
  }
  return log_sum / (static_cast<double>(intervals) * renorm_interval);
}

// ---------------------------------------------------------------------------
// Wave kinematics
// ---------------------------------------------------------------------------

namespace {

// circular cross-correlation lag between two equal-length rows. A periodic
// pattern has correlation peaks one wavelength apart, so the estimator takes
// the local maximum nearest zero lag, not the global argmax.
double circular_lag(std::span<const double> a, std::span<const double> b) {
  const int n = static_cast<int>(a.size());
  double ma = 0.0, mb = 0.0;
  for (double x : a) ma += x;
  for (double x : b) mb += x;
  ma /= n;
  mb /= n;
  std::vector<double> c(static_cast<std::size_t>(n), 0.0);
  for (int lag = 0; lag < n; ++lag) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += (a[static_cast<std::size_t>(i)] - ma) *
             (b[static_cast<std::size_t>((i + lag) % n)] - mb);
    c[static_cast<std::size_t>(lag)] = acc;
  }
  auto at = [&](int lag) { return c[static_cast<std::size_t>(((lag % n) + n) % n)]; };
  int best = 0;
  bool found = false;
  for (int dist = 0; dist <= n / 2 && !found; ++dist) {
    for (int sign : {1, -1}) {
      const int lag = sign * dist;
      if (dist == 0 && sign < 0) continue;
      if (at(lag) >= at(lag - 1) && at(lag) >= at(lag + 1)) {
        best = lag;
        found = true;
        break;
      }
    }
  }
  if (!found) return 0.0;
  const double lm = at(best - 1), l0 = at(best), lp = at(best + 1);
  const double denom = lm - 2.0 * l0 + lp;
  double refined = static_cast<double>(best);
  if (denom < 0.0) refined += 0.5 * (lm - lp) / denom;
  return refined;
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

WaveMetricsReport wave_metrics(const ReferenceSolution2D& sol) {
  WaveMetricsReport rep;
  if (sol.times.size() < 3)
    throw ConfigError("wave_metrics: need at least 3 snapshots");

  const int nx = sol.nx, ny = sol.ny;
  const int probe_row = ny / 2;

  // front motion check: any appreciable change between snapshots?
  double change = 0.0, scale = 0.0;
  for (std::size_t s = 0; s + 1 < sol.times.size(); ++s)
    for (std::size_t i = 0; i < sol.cells(); ++i) {
      change = std::max(change, std::abs(sol.u[s + 1][i] - sol.u[s][i]));
      scale = std::max(scale, std::abs(sol.u[s][i]));
    }
  if (change <= 1e-12 * std::max(scale, 1.0)) {
    rep.defined = false;
    return rep;
  }
  rep.defined = true;

  // speed: mid-row slice translation between consecutive snapshot pairs
  auto slice_speed = [&](bool prey) {
    std::vector<double> speeds;
    for (std::size_t s = 0; s + 1 < sol.times.size(); ++s) {
      const double dt_snap = sol.times[s + 1] - sol.times[s];
      if (!(dt_snap > 0.0)) continue;
      std::vector<double> row0(static_cast<std::size_t>(nx)), row1(static_cast<std::size_t>(nx));
      for (int ix = 0; ix < nx; ++ix) {
        row0[static_cast<std::size_t>(ix)] =
            prey ? sol.at_u(s, ix, probe_row) : sol.at_v(s, ix, probe_row);
        row1[static_cast<std::size_t>(ix)] =
            prey ? sol.at_u(s + 1, ix, probe_row) : sol.at_v(s + 1, ix, probe_row);
      }
      const double lag = circular_lag(row0, row1);
      if (std::abs(lag) > nx / 4.0) continue;  // ambiguous wrap
      speeds.push_back(std::abs(lag) * sol.dx / dt_snap);
    }
    if (speeds.empty()) return 0.0;
    std::sort(speeds.begin(), speeds.end());
    return speeds[speeds.size() / 2];
  };
  rep.speed = slice_speed(true);
  rep.speed_v = slice_speed(false);

  // wavelength: dominant radial mode of the final fields (pow2 grids)
  auto radial_wavelength = [&](const std::vector<double>& data) {
    const std::size_t last = sol.times.size() - 1;
    (void)last;
    std::vector<std::complex<double>> field(sol.cells());
    double mean = 0.0;
    for (double x : data) mean += x;
    mean /= static_cast<double>(sol.cells());
    for (std::size_t i = 0; i < sol.cells(); ++i) field[i] = data[i] - mean;
    // row FFTs then column FFTs
    std::vector<std::complex<double>> tmp(static_cast<std::size_t>(std::max(nx, ny)));
    for (int iy = 0; iy < ny; ++iy) {
      std::vector<std::complex<double>> row(field.begin() + static_cast<std::ptrdiff_t>(iy) * nx,
                                            field.begin() + static_cast<std::ptrdiff_t>(iy + 1) * nx);
      fft_radix2(row);
      std::copy(row.begin(), row.end(), field.begin() + static_cast<std::ptrdiff_t>(iy) * nx);
    }
    for (int ix = 0; ix < nx; ++ix) {
      std::vector<std::complex<double>> col(static_cast<std::size_t>(ny));
      for (int iy = 0; iy < ny; ++iy)
        col[static_cast<std::size_t>(iy)] = field[static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) +
                                                  static_cast<std::size_t>(ix)];
      fft_radix2(col);
      for (int iy = 0; iy < ny; ++iy)
        field[static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix)] =
            col[static_cast<std::size_t>(iy)];
    }
    const int max_bin = std::min(nx, ny) / 2;
    std::vector<double> radial(static_cast<std::size_t>(max_bin + 1), 0.0);
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        const int kx = (ix <= nx / 2) ? ix : ix - nx;
        const int ky = (iy <= ny / 2) ? iy : iy - ny;
        const int kr = static_cast<int>(std::lround(std::hypot(kx, ky)));
        if (kr >= 1 && kr <= max_bin)
          radial[static_cast<std::size_t>(kr)] +=
              std::norm(field[static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) +
                              static_cast<std::size_t>(ix)]);
      }
    int kbest = 1;
    for (int kk = 2; kk <= max_bin; ++kk)
      if (radial[static_cast<std::size_t>(kk)] > radial[static_cast<std::size_t>(kbest)]) kbest = kk;
    double kfrac = static_cast<double>(kbest);
    if (kbest > 1 && kbest < max_bin) {
      const double eps = 1e-300;
      const double lm = std::log(radial[static_cast<std::size_t>(kbest - 1)] + eps);
      const double l0 = std::log(radial[static_cast<std::size_t>(kbest)] + eps);
      const double lp = std::log(radial[static_cast<std::size_t>(kbest + 1)] + eps);
      const double denom = lm - 2.0 * l0 + lp;
      if (denom < 0.0) kfrac += 0.5 * (lm - lp) / denom;
    }
    return static_cast<double>(nx) * sol.dx / kfrac;
  };
  if (is_pow2(nx) && is_pow2(ny)) {
    rep.wavelength = radial_wavelength(sol.u.back());
    rep.wavelength_v = radial_wavelength(sol.v.back());
  }

  // rotation period: temporal PSD at a fixed probe point (needs >= 16 frames)
  if (sol.times.size() >= 16) {
    std::vector<double> probe(sol.times.size());
    for (std::size_t s = 0; s < sol.times.size(); ++s)
      probe[s] = sol.at_u(s, nx / 4, ny / 4);
    const double dts = sol.times[1] - sol.times[0];
    bool uniform = true;
    for (std::size_t s = 1; s < sol.times.size(); ++s)
      if (std::abs(sol.times[s] - sol.times[s - 1] - dts) > 1e-9) uniform = false;
    if (uniform) {
      const SpectrumReport spec = power_spectrum(probe, dts);
      if (spec.dominant_frequency > 0.0) rep.rotation_period = 1.0 / spec.dominant_frequency;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

namespace {

template <class Fn>
double median_ms(int reps, Fn&& fn) {
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

struct ErrStats {
  double mae = 0.0, r2 = 0.0;
};

ErrStats error_stats(std::span<const double> u, std::span<const double> v,
                     const ReferenceSolution1D& ref) {
  ErrStats e;
  const std::size_t n = ref.times.size();
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += ref.u[i];
    mv += ref.v[i];
  }
  mu /= static_cast<double>(n);
  mv /= static_cast<double>(n);
  double sa = 0.0, ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eu = u[i] - ref.u[i], ev = v[i] - ref.v[i];
    sa += std::abs(eu) + std::abs(ev);
    ss_res += eu * eu + ev * ev;
    ss_tot += (ref.u[i] - mu) * (ref.u[i] - mu) + (ref.v[i] - mv) * (ref.v[i] - mv);
  }
  e.mae = sa / static_cast<double>(2 * n);
  e.r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 0.0;
  return e;
}

}  // namespace

BenchmarkReport run_benchmark(const Network& net, const LVParams& p,
                              std::pair<double, double> ic,
                              std::pair<double, double> t_span, int n_points,
                              int reps, double solver_tol) {
  if (n_points < 2 || reps < 1) throw ConfigError("run_benchmark: bad configuration");

  std::vector<double> times(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i)
    times[static_cast<std::size_t>(i)] =
        t_span.first + (t_span.second - t_span.first) * i / (n_points - 1);

  // tightest-tolerance reference for error columns
  const double tight = std::max(solver_tol * 1e-2, 1e-13);
  const ReferenceSolution1D ref = integrate_ode(p, ic, times, tight, tight);

  std::vector<double> mu(static_cast<std::size_t>(n_points)),
      mv(static_cast<std::size_t>(n_points));
  const double t_model = median_ms(reps, [&] {
    for (int i = 0; i < n_points; ++i) {
      const double x[1] = {times[static_cast<std::size_t>(i)]};
      auto [uh, vh] = forward(net, std::span<const double>(x, 1));
      mu[static_cast<std::size_t>(i)] = uh;
      mv[static_cast<std::size_t>(i)] = vh;
    }
  });

  ReferenceSolution1D solve;
  const double t_solver = median_ms(reps, [&] {
    solve = integrate_ode(p, ic, times, solver_tol, solver_tol);
  });

  BenchmarkReport rep;
  rep.n_points = n_points;
  rep.repetitions = reps;
  const ErrStats em = error_stats(mu, mv, ref);
  const ErrStats es = error_stats(solve.u, solve.v, ref);
  rep.rows.push_back({"model-inference", em.mae, em.r2, t_model});
  rep.rows.push_back({"rk-dense-solve", es.mae, es.r2, t_solver});
  rep.speedup_inference_vs_solver = (t_model > 0.0) ? t_solver / t_model : 0.0;
  return rep;
}

}  // namespace uspil
