#include "pstrat/variance.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <string>

#include "pstrat/error.hpp"

namespace pstrat {

std::string_view to_string(CIMethod method) {
  return method == CIMethod::AnalyticNormal ? "analytic" : "bootstrap";
}

CIMethod parse_ci_method(std::string_view text) {
  if (text == "analytic") return CIMethod::AnalyticNormal;
  if (text == "bootstrap") return CIMethod::BootstrapPercentile;
  throw ValidationError("unknown CI method '" + std::string(text) + "'");
}

void CIConfig::check() const {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("CI level must lie in (0,1)");
  if (method == CIMethod::BootstrapPercentile && n_boot < 100) {
    throw ValidationError("bootstrap needs at least 100 replicates");
  }
  if (jobs < 1) throw ValidationError("jobs must be at least 1");
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("CI level must lie in (0,1)");
  const boost::math::normal_distribution<> standard;
  return boost::math::quantile(standard, 0.5 + level / 2.0);
}

WeightedMean weighted_mean(std::span<const double> weights, std::span<const double> y) {
  if (weights.size() != y.size()) throw ValidationError("weights and outcomes differ in length");
  WeightedMean out;
  double sum_wy = 0.0;
  std::size_t positive = 0;
  bool constant = true;
  double first = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (weights[i] < 0.0) throw ValidationError("negative analysis weight");
    out.mass += weights[i];
    sum_wy += weights[i] * y[i];
    if (weights[i] > 0.0) {
      if (positive > 0 && y[i] != first) constant = false;
      if (positive == 0) first = y[i];
      ++positive;
    }
  }
  if (!(out.mass > 0.0)) throw EstimationError("zero weight mass");
  out.single_point_mass = positive == 1;
  if (constant) {
    // Exact, so equal outcomes give a zero contrast rather than roundoff.
    out.mean = first;
    return out;
  }
  out.mean = sum_wy / out.mass;
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - out.mean;
    ss += weights[i] * weights[i] * r * r;
  }
  out.variance = ss / (out.mass * out.mass);
  return out;
}

AnalyticSE analytic_se(std::span<const double> w1, std::span<const double> y1,
                       std::span<const double> w0, std::span<const double> y0) {
  const auto treated = weighted_mean(w1, y1);
  const auto control = weighted_mean(w0, y0);
  return {std::sqrt(treated.variance + control.variance),
          treated.single_point_mass || control.single_point_mass};
}

}  // namespace pstrat
