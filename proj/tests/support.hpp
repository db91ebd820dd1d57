#pragma once

#include <string>
#include <vector>

#include "pstrat/dataset.hpp"
#include "pstrat/pscore.hpp"

namespace testing_support {

inline std::string data_path(const std::string& name) {
  return std::string(PSTRAT_TEST_DATA_DIR) + "/" + name;
}

inline pstrat::Dataset hand(const std::string& name, pstrat::Design design) {
  return pstrat::load_dataset(data_path(name), design);
}

inline const std::vector<std::string>& onesided_hand_files() {
  static const std::vector<std::string> files{"hand_onesided_a.csv", "hand_onesided_b.csv",
                                              "hand_onesided_c.csv"};
  return files;
}

inline const std::vector<std::string>& twosided_hand_files() {
  static const std::vector<std::string> files{"hand_twosided_a.csv", "hand_twosided_b.csv",
                                              "hand_twosided_c.csv"};
  return files;
}

// Arbitrary but fixed interior scores, different from any fitted model.
inline std::vector<double> fixed_high_scores(std::size_t n) {
  std::vector<double> pi;
  for (std::size_t i = 0; i < n; ++i) pi.push_back(0.15 + 0.07 * static_cast<double>(i % 9));
  return pi;
}

struct Three {
  std::vector<double> a, c, n;
};

inline Three fixed_twosided_scores(std::size_t n) {
  Three s;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 0.1 + 0.05 * static_cast<double>(i % 4);
    const double nv = 0.15 + 0.04 * static_cast<double>(i % 3);
    s.a.push_back(a);
    s.n.push_back(nv);
    s.c.push_back(1.0 - a - nv);
  }
  return s;
}

}  // namespace testing_support
