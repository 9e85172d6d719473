#include "qrambench/fit.hpp"

#include <cmath>
#include <limits>

#include "qrambench/topology.hpp"

namespace qrambench {

double PowerLawFit::operator()(double n) const { return prefactor * std::pow(n, exponent); }

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DomainError("regression inputs differ in length");
  if (x.size() < 2) throw DomainError("regression needs at least two points");
  const double m = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("regression needs at least two distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

PowerLawFit fit_power_law(const std::vector<FitPoint>& points) {
  if (points.size() < 3) throw DomainError("power-law fit needs at least three points");
  std::vector<double> lx, ly;
  for (const auto& p : points) {
    if (!(p.n > 0.0)) throw DomainError("power-law fit needs positive n");
    if (!(p.infidelity > 0.0)) throw DomainError("power-law fit needs positive infidelities");
    lx.push_back(std::log(p.n));
    ly.push_back(std::log(p.infidelity));
  }
  const LinearFit l = fit_linear(lx, ly);
  return PowerLawFit{l.slope, std::exp(l.intercept), l.r2};
}

std::uint32_t max_feasible_n(const PowerLawFit& fit, double eps_max) {
  if (!(eps_max > 0.0) || !(fit.prefactor > 0.0)) return 0;
  if (fit(1.0) > eps_max) return 0;
  if (fit.exponent <= 0.0) return std::numeric_limits<std::uint32_t>::max();
  // Solve prefactor * n^a = eps_max, then fix rounding at the boundary.
  const double x = std::pow(eps_max / fit.prefactor, 1.0 / fit.exponent);
  auto n = static_cast<std::uint64_t>(std::min(std::floor(x), 4.0e9));
  while (n > 1 && fit(static_cast<double>(n)) > eps_max) --n;
  while (n < 4000000000ULL && fit(static_cast<double>(n + 1)) <= eps_max) ++n;
  return static_cast<std::uint32_t>(n);
}

}  // namespace qrambench
