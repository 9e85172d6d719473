#pragma once

#include <cstdint>
#include <vector>

namespace qrambench {

struct FitPoint {
  double n = 0.0;
  double infidelity = 0.0;
};

/// y = prefactor * n^exponent, least squares in log-log space.
struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double r2 = 0.0;

  double operator()(double n) const;
};

/// Requires >= 3 points with n > 0; throws DomainError on non-positive
/// infidelity.
PowerLawFit fit_power_law(const std::vector<FitPoint>& points);

/// Largest integer n >= 1 with fit(n) <= eps_max; 0 when even n = 1 fails.
std::uint32_t max_feasible_n(const PowerLawFit& fit, double eps_max);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = slope * x + intercept; needs >= 2 distinct x.
LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace qrambench
