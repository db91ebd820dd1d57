#include "pstrat/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pstrat/error.hpp"

namespace pstrat {

namespace {

constexpr std::array<Stratum, 2> kOneSidedStrata = {Stratum::High, Stratum::Low};
constexpr std::array<Stratum, 3> kTwoSidedStrata = {Stratum::Always, Stratum::Complier,
                                                    Stratum::Never};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

std::optional<double> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::string where(std::size_t row, std::string_view column) {
  std::ostringstream os;
  os << "row " << row << " (line " << row + 1 << "), column '" << column << "'";
  return os.str();
}

}  // namespace

std::string_view to_string(Design design) {
  return design == Design::OneSided ? "one-sided" : "two-sided";
}

std::string_view to_string(Stratum stratum) {
  switch (stratum) {
    case Stratum::High: return "high-taker";
    case Stratum::Low: return "low-taker";
    case Stratum::Always: return "always-taker";
    case Stratum::Complier: return "complier";
    case Stratum::Never: return "never-taker";
  }
  return "?";
}

std::string_view stratum_key(Stratum stratum) {
  switch (stratum) {
    case Stratum::High: return "h";
    case Stratum::Low: return "l";
    case Stratum::Always: return "a";
    case Stratum::Complier: return "c";
    case Stratum::Never: return "n";
  }
  return "?";
}

std::string_view to_string(Assumption assumption) {
  switch (assumption) {
    case Assumption::StrongPI: return "strong-pi";
    case Assumption::WeakPI: return "weak-pi";
    case Assumption::WeakPIWithERNeverTakers: return "weak-pi-er-nt";
    case Assumption::BothExclusionRestrictions: return "both-er";
    case Assumption::ERNeverTakersOnly: return "er-nt";
  }
  return "?";
}

Design parse_design(std::string_view text) {
  if (text == "one-sided") return Design::OneSided;
  if (text == "two-sided") return Design::TwoSided;
  throw ValidationError("unknown design '" + std::string(text) +
                        "' (expected one-sided or two-sided)");
}

Assumption parse_assumption(std::string_view text) {
  if (text == "strong-pi") return Assumption::StrongPI;
  if (text == "weak-pi") return Assumption::WeakPI;
  if (text == "weak-pi-er-nt") return Assumption::WeakPIWithERNeverTakers;
  if (text == "both-er") return Assumption::BothExclusionRestrictions;
  if (text == "er-nt") return Assumption::ERNeverTakersOnly;
  throw ValidationError("unknown assumption set '" + std::string(text) + "'");
}

std::span<const Stratum> strata_of(Design design) {
  if (design == Design::OneSided) return kOneSidedStrata;
  return kTwoSidedStrata;
}

void check_assumption_legal(Design design, Assumption assumption) {
  const bool two_sided_only = assumption == Assumption::WeakPIWithERNeverTakers ||
                              assumption == Assumption::BothExclusionRestrictions;
  if (design == Design::OneSided && two_sided_only) {
    throw ValidationError("assumption set '" + std::string(to_string(assumption)) +
                          "' requires a two-sided design");
  }
  if (design == Design::TwoSided && assumption == Assumption::ERNeverTakersOnly) {
    throw ValidationError(
        "assumption set 'er-nt' is the one-sided exclusion restriction; use "
        "'weak-pi-er-nt' or 'both-er' for two-sided data");
  }
}

Dataset::Dataset(Design design, std::vector<int> z, std::vector<int> d,
                 std::vector<double> y, Eigen::MatrixXd x,
                 std::vector<std::string> covariate_names)
    : design_(design),
      z_(std::move(z)),
      d_(std::move(d)),
      y_(std::move(y)),
      x_(std::move(x)),
      names_(std::move(covariate_names)) {
  const auto n = y_.size();
  if (z_.size() != n || d_.size() != n || static_cast<std::size_t>(x_.rows()) != n) {
    throw ValidationError("dataset columns have mismatched lengths");
  }
  if (names_.size() != static_cast<std::size_t>(x_.cols())) {
    throw ValidationError("covariate name count does not match covariate columns");
  }
}

Dataset Dataset::from_units(Design design, const std::vector<UnitRecord>& units,
                            std::vector<std::string> covariate_names) {
  const auto n = units.size();
  const auto k = covariate_names.size();
  std::vector<int> z(n), d(n);
  std::vector<double> y(n);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (units[i].x.size() != k) {
      throw ValidationError("unit " + std::to_string(i) + " has " +
                            std::to_string(units[i].x.size()) + " covariates, expected " +
                            std::to_string(k));
    }
    z[i] = units[i].z;
    d[i] = units[i].d;
    y[i] = units[i].y;
    for (std::size_t j = 0; j < k; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = units[i].x[j];
    }
  }
  return Dataset(design, std::move(z), std::move(d), std::move(y), std::move(x),
                 std::move(covariate_names));
}

UnitRecord Dataset::unit(std::size_t i) const {
  UnitRecord u;
  u.z = z_[i];
  u.d = d_[i];
  u.y = y_[i];
  u.x.resize(num_covariates());
  for (std::size_t j = 0; j < num_covariates(); ++j) {
    u.x[j] = x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return u;
}

std::vector<std::size_t> Dataset::arm(int z) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (z_[i] == z) rows.push_back(i);
  }
  return rows;
}

std::size_t Dataset::arm_size(int z) const {
  return static_cast<std::size_t>(std::count(z_.begin(), z_.end(), z));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const auto n = rows.size();
  std::vector<int> z(n), d(n);
  std::vector<double> y(n);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), x_.cols());
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = rows[r];
    z[r] = z_[i];
    d[r] = d_[i];
    y[r] = y_[i];
    x.row(static_cast<Eigen::Index>(r)) = x_.row(static_cast<Eigen::Index>(i));
  }
  return Dataset(design_, std::move(z), std::move(d), std::move(y), std::move(x), names_);
}

Dataset Dataset::with_outcomes(std::vector<double> y) const {
  return Dataset(design_, z_, d_, std::move(y), x_, names_);
}

Dataset Dataset::with_covariates(Eigen::MatrixXd x, std::vector<std::string> names) const {
  return Dataset(design_, z_, d_, y_, std::move(x), std::move(names));
}

CellCounts cell_counts(const Dataset& data) {
  CellCounts counts{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int z = data.z(i);
    const int d = data.d(i);
    if ((z == 0 || z == 1) && (d == 0 || d == 1)) {
      ++counts[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)];
    }
  }
  return counts;
}

std::vector<ValidationIssue> validate(const Dataset& data) {
  std::vector<ValidationIssue> issues;
  const bool one_sided = data.design() == Design::OneSided;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int z = data.z(i);
    const int d = data.d(i);
    if (z != 0 && z != 1) {
      issues.push_back({i, "z", "assignment " + std::to_string(z) + " not in {0,1}"});
    }
    if (!std::isfinite(data.y(i))) {
      issues.push_back({i, "y", "outcome is not finite"});
    }
    for (std::size_t j = 0; j < data.num_covariates(); ++j) {
      if (!std::isfinite(data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))) {
        issues.push_back({i, data.covariate_names()[j], "covariate is not finite"});
      }
    }
    if (d != kNoDose && d != 0 && d != 1) {
      issues.push_back({i, "d", "treatment received " + std::to_string(d) + " not in {0,1}"});
      continue;
    }
    if (one_sided && z == 0 && d != kNoDose) {
      issues.push_back({i, "d", "one-sided control unit carries a dose"});
    } else if (one_sided && z == 1 && d == kNoDose) {
      issues.push_back({i, "d", "one-sided treated unit is missing its dose"});
    } else if (!one_sided && d == kNoDose) {
      issues.push_back({i, "d", "two-sided unit is missing treatment received"});
    }
  }
  if (data.arm_size(0) == 0) issues.push_back({std::nullopt, "z", "no control units"});
  if (data.arm_size(1) == 0) issues.push_back({std::nullopt, "z", "no treated units"});
  return issues;
}

Dataset read_dataset(std::istream& in, Design design) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty input: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const char delim =
      (line.find(',') == std::string::npos && line.find('\t') != std::string::npos) ? '\t' : ',';

  const auto header = split(line, delim);
  std::optional<std::size_t> col_z, col_d, col_y;
  std::vector<std::size_t> covariate_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.empty()) throw ValidationError("header column " + std::to_string(c + 1) + " is empty");
    if (h == "z") {
      col_z = c;
    } else if (h == "d") {
      col_d = c;
    } else if (h == "y") {
      col_y = c;
    } else {
      if (std::find(names.begin(), names.end(), h) != names.end()) {
        throw ValidationError("duplicate column '" + std::string(h) + "'");
      }
      covariate_cols.push_back(c);
      names.emplace_back(h);
    }
  }
  if (!col_z) throw ValidationError("missing column 'z'");
  if (!col_d) throw ValidationError("missing column 'd'");
  if (!col_y) throw ValidationError("missing column 'y'");

  std::vector<int> z, d;
  std::vector<double> y;
  std::vector<double> xs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split(line, delim);
    if (fields.size() != header.size()) {
      throw ValidationError("row " + std::to_string(row) + " (line " + std::to_string(row + 1) +
                            ") has " + std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
    }
    const auto zv = parse_number(fields[*col_z]);
    if (!zv) throw ValidationError(where(row, "z") + ": non-numeric value '" +
                                   std::string(fields[*col_z]) + "'");
    if (*zv != 0.0 && *zv != 1.0) {
      throw ValidationError(where(row, "z") + ": value " + std::string(fields[*col_z]) +
                            " not in {0,1}");
    }
    const int zi = static_cast<int>(*zv);

    int di = kNoDose;
    const auto dtext = fields[*col_d];
    if (!dtext.empty()) {
      if (design == Design::OneSided && (dtext == "H" || dtext == "h")) {
        di = 1;
      } else if (design == Design::OneSided && (dtext == "L" || dtext == "l")) {
        di = 0;
      } else {
        const auto dv = parse_number(dtext);
        if (!dv) throw ValidationError(where(row, "d") + ": non-numeric value '" +
                                       std::string(dtext) + "'");
        if (*dv != 0.0 && *dv != 1.0) {
          throw ValidationError(where(row, "d") + ": value " + std::string(dtext) +
                                " not in {0,1}");
        }
        di = static_cast<int>(*dv);
      }
    }
    if (design == Design::OneSided && zi == 0 && di != kNoDose) {
      throw ValidationError(where(row, "d") + ": one-sided control unit must leave d empty");
    }
    if (design == Design::OneSided && zi == 1 && di == kNoDose) {
      throw ValidationError(where(row, "d") + ": treated unit is missing its dose");
    }
    if (design == Design::TwoSided && di == kNoDose) {
      throw ValidationError(where(row, "d") + ": two-sided design requires d on every row");
    }

    const auto yv = parse_number(fields[*col_y]);
    if (!yv) throw ValidationError(where(row, "y") + ": non-numeric value '" +
                                   std::string(fields[*col_y]) + "'");
    if (!std::isfinite(*yv)) throw ValidationError(where(row, "y") + ": outcome is not finite");

    for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
      const auto text = fields[covariate_cols[j]];
      const auto xv = parse_number(text);
      if (!xv) {
        throw ValidationError(where(row, names[j]) + ": non-numeric value '" + std::string(text) +
                              "' (factor covariates must be expanded to 0/1 indicators)");
      }
      if (!std::isfinite(*xv)) throw ValidationError(where(row, names[j]) + ": not finite");
      xs.push_back(*xv);
    }
    z.push_back(zi);
    d.push_back(di);
    y.push_back(*yv);
  }

  const auto k = covariate_cols.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i * k + j];
    }
  }
  Dataset data(design, std::move(z), std::move(d), std::move(y), std::move(x), std::move(names));
  for (int arm = 0; arm < 2; ++arm) {
    if (data.arm_size(arm) < 2) {
      throw ValidationError("arm z=" + std::to_string(arm) + " has " +
                            std::to_string(data.arm_size(arm)) + " units; at least 2 required");
    }
  }
  const auto issues = validate(data);
  if (!issues.empty()) {
    const auto& first = issues.front();
    throw ValidationError("invalid dataset: " + first.message +
                          (first.unit ? " (unit " + std::to_string(*first.unit) + ")" : ""));
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, Design design) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file '" + path.string() + "'");
  return read_dataset(in, design);
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw InvariantViolation("to_chars failed");
  return std::string(buf.data(), ptr);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "z,d,y";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.z(i) << ',';
    if (data.has_dose(i)) out << data.d(i);
    out << ',' << format_double(data.y(i));
    for (std::size_t j = 0; j < data.num_covariates(); ++j) {
      out << ',' << format_double(data.x()(static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  write_dataset(out, data);
}

}  // namespace pstrat
