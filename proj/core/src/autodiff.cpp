#include "uspil/autodiff.hpp"

#include <algorithm>
#include <limits>

namespace uspil {

namespace {

std::vector<Jet2d> seed_inputs(std::span<const double> point, int direction) {
  std::vector<Jet2d> in(point.size());
  for (std::size_t i = 0; i < point.size(); ++i)
    in[i] = (static_cast<int>(i) == direction) ? jet2d_variable(point[i])
                                               : jet2d_constant(point[i]);
  return in;
}

double value_at(const ScalarJetFn& f, std::span<const double> point) {
  std::vector<Jet2d> in(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) in[i] = jet2d_constant(point[i]);
  return f(in).v;
}

double rel_dev(double ad, double fd) {
  const double denom = std::max({1.0, std::abs(ad), std::abs(fd)});
  return std::abs(ad - fd) / denom;
}

}  // namespace

Jet2d jet_eval(const ScalarJetFn& f, std::span<const double> point, int direction) {
  if (direction < 0 || direction >= static_cast<int>(point.size()))
    throw ConfigError("jet_eval: direction out of range");
  const std::vector<Jet2d> in = seed_inputs(point, direction);
  return f(in);
}

FdReport fd_check(const ScalarJetFn& f, std::span<const double> point, double h,
                  double tol_d1, double tol_d2) {
  if (!(h > 0.0)) throw ConfigError("fd_check: step must be positive");
  FdReport rep;
  rep.tol_d1 = tol_d1;
  rep.tol_d2 = tol_d2;

  constexpr double kEps = std::numeric_limits<double>::epsilon();
  std::vector<double> x(point.begin(), point.end());
  const double f0 = value_at(f, x);

  for (int axis = 0; axis < static_cast<int>(x.size()); ++axis) {
    const Jet2d jet = jet_eval(f, x, axis);
    const double xi = x[axis];
    const double scale = std::max(1.0, std::abs(xi));

    const double h1 = h * scale;
    x[axis] = xi + h1;
    const double fp = value_at(f, x);
    x[axis] = xi - h1;
    const double fm = value_at(f, x);
    const double d1_fd = (fp - fm) / (2.0 * h1);

    // second-order step floored so roundoff stays below truncation
    const double h2 = std::max(h, std::pow(kEps, 0.25)) * scale;
    x[axis] = xi + h2;
    const double fp2 = value_at(f, x);
    x[axis] = xi - h2;
    const double fm2 = value_at(f, x);
    const double d2_fd = (fp2 - 2.0 * f0 + fm2) / (h2 * h2);
    x[axis] = xi;

    rep.max_rel_dev_d1 = std::max(rep.max_rel_dev_d1, rel_dev(jet.d1[0], d1_fd));
    rep.max_rel_dev_d2 = std::max(rep.max_rel_dev_d2, rel_dev(jet.d2[0], d2_fd));
  }
  return rep;
}

GradMap param_grad(const Var& loss) {
  if (!loss.attached())
    throw StructuralError("param_grad: loss node was never recorded on a tape");
  return loss.tape()->grad(loss);
}

}  // namespace uspil
