#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace pstrat {

enum class CIMethod { AnalyticNormal, BootstrapPercentile };

std::string_view to_string(CIMethod method);
CIMethod parse_ci_method(std::string_view text);

struct CIConfig {
  CIMethod method = CIMethod::AnalyticNormal;
  double level = 0.95;
  int n_boot = 1000;
  std::uint64_t seed = 0;
  int jobs = 1;

  // Throws ValidationError for level outside (0,1) or n_boot < 100 (bootstrap).
  void check() const;
};

// Two-sided standard normal critical value for the given coverage level.
double normal_critical_value(double level);

// Weighted mean of y with fixed weights, and its variance
// sum w^2 (y - mean)^2 / (sum w)^2.
struct WeightedMean {
  double mean = 0.0;
  double mass = 0.0;
  double variance = 0.0;
  // All weight sits on one unit: the variance is 0 by arithmetic, not data.
  bool single_point_mass = false;
};

// Throws EstimationError when the weights have no positive mass.
WeightedMean weighted_mean(std::span<const double> weights, std::span<const double> y);

struct AnalyticSE {
  double se = 0.0;
  bool single_point_mass = false;
};

// Standard error of a weighted difference in means, weights treated as fixed.
AnalyticSE analytic_se(std::span<const double> w1, std::span<const double> y1,
                       std::span<const double> w0, std::span<const double> y0);

}  // namespace pstrat
