#include <doctest.h>

#include <sstream>

#include "oracle.hpp"
#include "pstrat/error.hpp"
#include "pstrat/onesided.hpp"
#include "pstrat/simulation.hpp"
#include "support.hpp"

using namespace pstrat;
using testing_support::data_path;
using testing_support::hand;

namespace {

void check_against(const StratumEstimate& got, const oracle::Diff& want, double tol) {
  CHECK(got.mu1 == doctest::Approx(want.mu1).epsilon(tol));
  CHECK(got.mu0 == doctest::Approx(want.mu0).epsilon(tol));
  CHECK(got.itt == doctest::Approx(want.mu1 - want.mu0).epsilon(tol));
  CHECK(got.se == doctest::Approx(want.se).epsilon(tol));
}

double naive_difference(const Dataset& data) {
  double s1 = 0, n1 = 0, s0 = 0, n0 = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (data.z(i) == 1 ? s1 : s0) += data.y(i);
    (data.z(i) == 1 ? n1 : n0) += 1;
  }
  return s1 / n1 - s0 / n0;
}

}  // namespace

TEST_CASE("weighting estimators match the brute-force formulas on hand data") {
  for (const auto& file : testing_support::onesided_hand_files()) {
    CAPTURE(file);
    const auto data = hand(file, Design::OneSided);
    const auto rows = oracle::read_rows(data_path(file));
    const auto fixed = testing_support::fixed_high_scores(data.size());
    const auto cell = oracle::onesided_cell_scores(rows);
    for (const auto* pi : {&fixed, &cell}) {
      const auto scores = make_onesided_scores(*pi);
      const auto weak = estimate_weighting_weak(data, scores);
      const auto strong = estimate_weighting_strong(data, scores);
      check_against(weak.at(Stratum::High), oracle::onesided_weak(rows, *pi, 1), 1e-12);
      check_against(weak.at(Stratum::Low), oracle::onesided_weak(rows, *pi, 0), 1e-12);
      check_against(strong.at(Stratum::High), oracle::onesided_strong(rows, *pi, 1), 1e-12);
      check_against(strong.at(Stratum::Low), oracle::onesided_strong(rows, *pi, 0), 1e-12);
      CHECK_NOTHROW(check_estimate(weak));
    }
  }
}

TEST_CASE("subgroup and exclusion-restriction estimators match the brute-force formulas") {
  for (const auto& file : testing_support::onesided_hand_files()) {
    CAPTURE(file);
    const auto data = hand(file, Design::OneSided);
    const auto rows = oracle::read_rows(data_path(file));
    // Alternate high and low scores within each arm so both subgroups are
    // populated on both sides.
    std::vector<double> pi;
    int seen[2] = {0, 0};
    for (const auto& r : rows) pi.push_back(seen[r.z]++ % 2 == 0 ? 0.8 + 0.01 * seen[r.z] : 0.2);
    const auto sub = estimate_discrete_subgroup(data, make_onesided_scores(pi));
    check_against(sub.at(Stratum::High), oracle::onesided_subgroup(rows, pi, 1), 1e-12);
    check_against(sub.at(Stratum::Low), oracle::onesided_subgroup(rows, pi, 0), 1e-12);

    const auto er = estimate_er_onesided(data);
    check_against(er.at(Stratum::High), oracle::onesided_er(rows), 1e-12);
    CHECK(er.at(Stratum::Low).itt == 0.0);
    CHECK(er.at(Stratum::Low).fixed_by_assumption);
  }
}

TEST_CASE("one-sided exclusion restriction gives the Wald ratio") {
  const auto data = hand("hand_onesided_b.csv", Design::OneSided);
  const auto er = estimate_er_onesided(data);
  const auto counts = cell_counts(data);
  const double pi = static_cast<double>(counts[1][1]) / static_cast<double>(counts[1][0] + counts[1][1]);
  CHECK(er.at(Stratum::High).itt == doctest::Approx(naive_difference(data) / pi).epsilon(1e-12));
}

TEST_CASE("weak plug-in equals weak weighting with cell scores") {
  for (const auto& file : {"hand_onesided_a.csv", "hand_onesided_c.csv"}) {
    CAPTURE(file);
    const auto data = hand(file, Design::OneSided);
    const auto plugin = estimate_binary_plugin(data, Assumption::WeakPI);
    const auto weighting = estimate_weighting_weak(data, pscore_cell(data));
    for (const auto s : {Stratum::High, Stratum::Low}) {
      CHECK(plugin.at(s).itt == doctest::Approx(weighting.at(s).itt).epsilon(1e-10));
      CHECK(plugin.at(s).mu0 == doctest::Approx(weighting.at(s).mu0).epsilon(1e-10));
    }
  }
}

TEST_CASE("strong plug-in is the stratum-weighted average of the cell ITTs") {
  const auto data = hand("hand_onesided_a.csv", Design::OneSided);
  const auto rows = oracle::read_rows(data_path("hand_onesided_a.csv"));
  const auto plugin = estimate_binary_plugin(data, Assumption::StrongPI);
  // x=0: pi_h = 1/2, x=1: pi_h = 2/3; pooled p(x=0) = 5/10.
  double itt[2] = {0, 0};
  for (int x = 0; x < 2; ++x) {
    double s1 = 0, n1 = 0, s0 = 0, n0 = 0;
    for (const auto& r : rows) {
      if (r.x != x) continue;
      (r.z == 1 ? s1 : s0) += r.y;
      (r.z == 1 ? n1 : n0) += 1;
    }
    itt[x] = s1 / n1 - s0 / n0;
  }
  const double w0 = 0.5 * 0.5, w1 = (2.0 / 3.0) * 0.5;
  CHECK(plugin.at(Stratum::High).itt == doctest::Approx((w0 * itt[0] + w1 * itt[1]) / (w0 + w1)).epsilon(1e-12));
}

TEST_CASE("plug-in needs exactly one binary covariate") {
  CHECK_THROWS_AS(estimate_binary_plugin(hand("hand_onesided_b.csv", Design::OneSided), Assumption::WeakPI),
                  ValidationError);
}

TEST_CASE("constant scores collapse weighting to the naive difference in means") {
  for (const auto& file : testing_support::onesided_hand_files()) {
    const auto data = hand(file, Design::OneSided);
    const std::vector<double> pi(data.size(), 0.37);
    const auto strong = estimate_weighting_strong(data, make_onesided_scores(pi));
    CHECK(strong.at(Stratum::High).itt == doctest::Approx(naive_difference(data)).epsilon(1e-12));
    CHECK(strong.at(Stratum::Low).itt == doctest::Approx(naive_difference(data)).epsilon(1e-12));
    // Weak PI: control side collapses to the control mean.
    const auto weak = estimate_weighting_weak(data, make_onesided_scores(pi));
    double s0 = 0, n0 = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.z(i) == 0) {
        s0 += data.y(i);
        n0 += 1;
      }
    }
    CHECK(weak.at(Stratum::High).mu0 == doctest::Approx(s0 / n0).epsilon(1e-12));
  }
}

TEST_CASE("subgroup threshold is the treated High share with ties going High") {
  // Treated High share 2/4 = 0.5; a score exactly at 0.5 is predicted High.
  std::istringstream in("z,d,y\n1,1,4\n1,1,2\n1,0,1\n1,0,3\n0,,1\n0,,2\n0,,0\n0,,5\n");
  const auto data = read_dataset(in, Design::OneSided);
  const std::vector<double> pi{0.5, 0.9, 0.1, 0.2, 0.5, 0.8, 0.3, 0.05};
  const auto est = estimate_discrete_subgroup(data, make_onesided_scores(pi));
  CHECK(est.at(Stratum::High).mu1 == doctest::Approx(3.0));
  CHECK(est.at(Stratum::High).mu0 == doctest::Approx(1.5));
  CHECK(est.at(Stratum::Low).mu1 == doctest::Approx(2.0));
  CHECK(est.at(Stratum::Low).mu0 == doctest::Approx(2.5));
}

TEST_CASE("subgroup with a degenerate score distribution is an error") {
  const auto data = hand("hand_onesided_a.csv", Design::OneSided);
  const std::vector<double> pi(data.size(), 0.99);
  CHECK_THROWS_AS(estimate_discrete_subgroup(data, make_onesided_scores(pi)), EstimationError);
}

TEST_CASE("weights follow the weak and strong definitions") {
  const auto data = hand("hand_onesided_a.csv", Design::OneSided);
  const auto pi = testing_support::fixed_high_scores(data.size());
  const auto scores = make_onesided_scores(pi);
  const auto weak = onesided_weights(data, scores, Stratum::Low, Assumption::WeakPI);
  const auto strong = onesided_weights(data, scores, Stratum::Low, Assumption::StrongPI);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(weak.control[i] == doctest::Approx(1.0 - pi[i]));
    CHECK(strong.treated[i] == doctest::Approx(1.0 - pi[i]));
    if (data.z(i) == 1) CHECK(weak.treated[i] == (data.d(i) == 0 ? 1.0 : 0.0));
  }
}

TEST_CASE("noiseless constant effect is recovered exactly by every estimator") {
  SimConfig c;
  c.n = 400;
  c.sigma_y = 0;
  c.sigma_tau = 0;
  c.beta0 = 0;
  const auto draw = simulate(c, 1);
  const auto scores = pscore_onesided(draw.data);
  for (const auto& est : {estimate_weighting_weak(draw.data, scores),
                          estimate_weighting_strong(draw.data, scores),
                          estimate_discrete_subgroup(draw.data, scores)}) {
    CHECK(est.at(Stratum::High).itt == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(est.at(Stratum::Low).itt == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(est.at(Stratum::High).se == doctest::Approx(0.0));
  }
}

TEST_CASE("weighting estimates are equivariant to affine outcome maps") {
  const auto data = hand("hand_onesided_b.csv", Design::OneSided);
  const auto scores = make_onesided_scores(testing_support::fixed_high_scores(data.size()));
  std::vector<double> y2;
  for (std::size_t i = 0; i < data.size(); ++i) y2.push_back(3.0 * data.y(i) - 7.0);
  const auto shifted = data.with_outcomes(y2);
  const auto a = estimate_weighting_weak(data, scores);
  const auto b = estimate_weighting_weak(shifted, scores);
  for (const auto s : {Stratum::High, Stratum::Low}) {
    CHECK(b.at(s).itt == doctest::Approx(3.0 * a.at(s).itt).epsilon(1e-12));
    CHECK(b.at(s).se == doctest::Approx(3.0 * a.at(s).se).epsilon(1e-12));
  }
}

TEST_CASE("Strong PI implication test accepts when PI holds and rejects a clear violation") {
  SimConfig c;
  c.n = 4000;
  const auto ok = simulate(c, 12);
  const auto fit = pscore_onesided(ok.data);
  const auto pass = strong_pi_implication_test(ok.data, fit, 300, 1);
  REQUIRE(pass.rows.size() == 2);
  for (const auto& r : pass.rows) CHECK_FALSE(r.reject);

  c.gamma1 = 1.5;
  const auto bad = simulate(c, 12);
  const auto fail = strong_pi_implication_test(bad.data, pscore_onesided(bad.data), 300, 1);
  bool any = false;
  for (const auto& r : fail.rows) any = any || r.reject;
  CHECK(any);
  CHECK(to_json(fail)["rows"].size() == 2);
}

TEST_CASE("implication test with every treated unit High has a zero contrast") {
  std::istringstream in("z,d,y,x\n1,1,1,0\n1,1,2,1\n1,1,4,1\n0,,1,0\n0,,1,1\n");
  const auto data = read_dataset(in, Design::OneSided);
  const auto test = strong_pi_implication_test(data, pscore_cell(data), 100, 3);
  REQUIRE(test.rows.size() == 1);
  CHECK(test.rows[0].stratum == Stratum::High);
  CHECK(test.rows[0].contrast == doctest::Approx(0.0));
  CHECK_FALSE(test.rows[0].reject);
}

TEST_CASE("estimate serialization lists every stratum") {
  const auto data = hand("hand_onesided_a.csv", Design::OneSided);
  const auto est = estimate_weighting_weak(data, pscore_cell(data));
  const auto j = to_json(est);
  CHECK(j["strata"].contains("h"));
  CHECK(j["strata"]["l"].contains("ci_lo"));
  std::ostringstream csv;
  write_estimate_csv(csv, est, true);
  CHECK(csv.str().find("h_itt") != std::string::npos);
  CHECK(render_table(est).find("high-taker") != std::string::npos);
}
