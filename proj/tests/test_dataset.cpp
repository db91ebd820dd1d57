#include <doctest.h>

#include <limits>
#include <sstream>

#include "pstrat/dataset.hpp"
#include "pstrat/error.hpp"
#include "support.hpp"

using namespace pstrat;

namespace {

Dataset parse(const std::string& text, Design design) {
  std::istringstream in(text);
  return read_dataset(in, design);
}

std::string error_of(const std::string& text, Design design) {
  try {
    parse(text, design);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("one-sided csv parses doses, covariates and missing control doses") {
  const auto data = parse("z,d,y,age,score\n1,H,2.5,30,1\n1,L,1,40,0\n0,,0.5,35,1\n0,,0,50,0\n",
                          Design::OneSided);
  REQUIRE(data.size() == 4);
  CHECK(data.num_covariates() == 2);
  CHECK(data.covariate_names() == std::vector<std::string>{"age", "score"});
  CHECK(data.d(0) == 1);
  CHECK(data.d(1) == 0);
  CHECK_FALSE(data.has_dose(2));
  CHECK(data.x()(3, 0) == 50.0);
  CHECK(data.arm_size(1) == 2);
  CHECK(validate(data).empty());
}

TEST_CASE("columns may come in any order and tabs work as delimiter") {
  const auto data = parse("x1\ty\tz\td\n1\t2\t1\t1\n2\t3\t1\t0\n3\t4\t0\t0\n4\t5\t0\t1\n",
                          Design::TwoSided);
  CHECK(data.z(0) == 1);
  CHECK(data.y(3) == 5.0);
  CHECK(data.d(3) == 1);
  CHECK(data.x()(2, 0) == 3.0);
}

TEST_CASE("a leading byte order mark is ignored") {
  const auto data = parse("\xEF\xBB\xBFz,d,y\n1,1,1\n1,0,2\n0,,3\n0,,4\n", Design::OneSided);
  CHECK(data.size() == 4);
}

TEST_CASE("parse errors name the row and column") {
  SUBCASE("non-numeric outcome") {
    const auto msg = error_of("z,d,y\n1,1,1\n1,0,abc\n0,,1\n0,,1\n", Design::OneSided);
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'y'") != std::string::npos);
  }
  SUBCASE("z outside {0,1}") {
    const auto msg = error_of("z,d,y\n2,1,1\n1,0,1\n0,,1\n0,,1\n", Design::OneSided);
    CHECK(msg.find("'z'") != std::string::npos);
  }
  SUBCASE("one-sided control carrying a dose") {
    const auto msg = error_of("z,d,y\n1,1,1\n1,0,1\n0,1,1\n0,,1\n", Design::OneSided);
    CHECK(msg.find("control") != std::string::npos);
  }
  SUBCASE("treated unit without a dose") {
    CHECK_FALSE(error_of("z,d,y\n1,,1\n1,0,1\n0,,1\n0,,1\n", Design::OneSided).empty());
  }
  SUBCASE("two-sided requires every dose") {
    CHECK_FALSE(error_of("z,d,y\n1,1,1\n1,0,1\n0,,1\n0,1,1\n", Design::TwoSided).empty());
  }
  SUBCASE("missing required column") {
    CHECK(error_of("z,y\n1,1\n", Design::OneSided).find("'d'") != std::string::npos);
  }
  SUBCASE("non-finite covariate") {
    CHECK_FALSE(error_of("z,d,y,x\n1,1,1,inf\n1,0,1,1\n0,,1,1\n0,,1,1\n", Design::OneSided).empty());
  }
  SUBCASE("an arm with fewer than two units") {
    CHECK(error_of("z,d,y\n1,1,1\n1,0,1\n0,,1\n", Design::OneSided).find("z=0") != std::string::npos);
  }
  SUBCASE("ragged row") {
    CHECK_FALSE(error_of("z,d,y\n1,1\n1,0,1\n0,,1\n0,,1\n", Design::OneSided).empty());
  }
}

TEST_CASE("validate reports every domain violation on an in-memory dataset") {
  Eigen::MatrixXd x(3, 1);
  x << 1, std::numeric_limits<double>::quiet_NaN(), 0;
  Dataset data(Design::OneSided, {1, 0, 3}, {kNoDose, 1, 0}, {1.0, 2.0, 3.0}, x, {"x"});
  const auto issues = validate(data);
  CHECK(issues.size() >= 3);
}

TEST_CASE("write then read round-trips every value exactly") {
  const auto data = testing_support::hand("hand_onesided_b.csv", Design::OneSided);
  std::ostringstream out;
  write_dataset(out, data);
  const auto back = parse(out.str(), Design::OneSided);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back.z(i) == data.z(i));
    CHECK(back.d(i) == data.d(i));
    CHECK(back.y(i) == data.y(i));
    CHECK(back.x()(static_cast<Eigen::Index>(i), 0) == data.x()(static_cast<Eigen::Index>(i), 0));
  }
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  const double third = 1.0 / 3.0;
  CHECK(std::stod(format_double(third)) == third);
}

TEST_CASE("subset repeats rows and keeps the design") {
  const auto data = testing_support::hand("hand_twosided_a.csv", Design::TwoSided);
  const std::vector<std::size_t> rows{0, 0, 7};
  const auto sub = data.subset(rows);
  CHECK(sub.size() == 3);
  CHECK(sub.y(1) == data.y(0));
  CHECK(sub.z(2) == 0);
  CHECK(sub.design() == Design::TwoSided);
}

TEST_CASE("cell counts tally (z, d) pairs") {
  const auto data = testing_support::hand("hand_twosided_a.csv", Design::TwoSided);
  const auto c = cell_counts(data);
  CHECK(c[1][1] == 4);
  CHECK(c[1][0] == 2);
  CHECK(c[0][1] == 2);
  CHECK(c[0][0] == 4);
}

TEST_CASE("assumption sets are checked against the design") {
  CHECK_THROWS_AS(check_assumption_legal(Design::OneSided, Assumption::WeakPIWithERNeverTakers),
                  ValidationError);
  CHECK_THROWS_AS(check_assumption_legal(Design::OneSided, Assumption::BothExclusionRestrictions),
                  ValidationError);
  CHECK_THROWS_AS(check_assumption_legal(Design::TwoSided, Assumption::ERNeverTakersOnly),
                  ValidationError);
  CHECK_NOTHROW(check_assumption_legal(Design::TwoSided, Assumption::WeakPI));
  CHECK(parse_assumption("weak-pi-er-nt") == Assumption::WeakPIWithERNeverTakers);
  CHECK(parse_design("two-sided") == Design::TwoSided);
  CHECK_THROWS_AS(parse_design("three-sided"), ValidationError);
}
