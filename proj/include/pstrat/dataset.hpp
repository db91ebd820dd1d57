#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pstrat {

enum class Design { OneSided, TwoSided };

// One-sided strata are High/Low takers. Two-sided strata assume
// monotonicity, so there is no Defier.
enum class Stratum { High, Low, Always, Complier, Never };

enum class Assumption {
  StrongPI,
  WeakPI,
  WeakPIWithERNeverTakers,
  BothExclusionRestrictions,
  ERNeverTakersOnly,
};

std::string_view to_string(Design design);
std::string_view to_string(Stratum stratum);
std::string_view to_string(Assumption assumption);
// Short key used in serialized output: "h", "l", "a", "c", "n".
std::string_view stratum_key(Stratum stratum);

Design parse_design(std::string_view text);
Assumption parse_assumption(std::string_view text);

// Strata of a design, in canonical order: (H, L) or (a, c, n).
std::span<const Stratum> strata_of(Design design);

// Throws ValidationError when the assumption set is not defined for the design.
void check_assumption_legal(Design design, Assumption assumption);

// Sentinel for a missing dose (one-sided controls).
inline constexpr int kNoDose = -1;

struct UnitRecord {
  int z = 0;
  int d = kNoDose;  // one-sided: 1 = High, 0 = Low; two-sided: 0/1
  double y = 0.0;
  std::vector<double> x;

  bool has_dose() const { return d != kNoDose; }
};

struct ValidationIssue {
  std::optional<std::size_t> unit;  // nullopt for dataset-level issues
  std::string field;
  std::string message;
};

// Column-oriented, immutable unit table. The constructor only checks that
// the columns have matching shapes; use validate() for the domain invariants.
class Dataset {
 public:
  Dataset(Design design, std::vector<int> z, std::vector<int> d,
          std::vector<double> y, Eigen::MatrixXd x,
          std::vector<std::string> covariate_names);

  static Dataset from_units(Design design, const std::vector<UnitRecord>& units,
                            std::vector<std::string> covariate_names);

  Design design() const { return design_; }
  std::size_t size() const { return y_.size(); }
  std::size_t num_covariates() const { return static_cast<std::size_t>(x_.cols()); }

  int z(std::size_t i) const { return z_[i]; }
  int d(std::size_t i) const { return d_[i]; }
  double y(std::size_t i) const { return y_[i]; }
  bool has_dose(std::size_t i) const { return d_[i] != kNoDose; }

  std::span<const int> z() const { return z_; }
  std::span<const int> d() const { return d_; }
  std::span<const double> y() const { return y_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  UnitRecord unit(std::size_t i) const;

  // Units in the given arm, in index order.
  std::vector<std::size_t> arm(int z) const;
  std::size_t arm_size(int z) const;

  // Rows picked by index (repeats allowed), e.g. for resampling.
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset with_outcomes(std::vector<double> y) const;
  Dataset with_covariates(Eigen::MatrixXd x, std::vector<std::string> names) const;

 private:
  Design design_;
  std::vector<int> z_;
  std::vector<int> d_;
  std::vector<double> y_;
  Eigen::MatrixXd x_;
  std::vector<std::string> names_;
};

// counts[z][d] for d in {0,1}; units without a dose are not counted.
using CellCounts = std::array<std::array<std::size_t, 2>, 2>;
CellCounts cell_counts(const Dataset& data);

// Empty iff every domain invariant holds.
std::vector<ValidationIssue> validate(const Dataset& data);

// Delimited text with a header row naming z, d, y and the covariates.
// Throws ValidationError with row/column context on any defect.
Dataset read_dataset(std::istream& in, Design design);
Dataset load_dataset(const std::filesystem::path& path, Design design);

void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::filesystem::path& path, const Dataset& data);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace pstrat
