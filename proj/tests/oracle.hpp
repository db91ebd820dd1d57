#pragma once

// Brute-force reference evaluations for the small hand datasets. Deliberately
// written against plain rows, without any of the library types, so that a
// mistake in the library cannot leak into the expected values.

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

struct Row {
  int z;
  int d;  // -1 when missing
  double y;
  double x;
};

inline std::vector<Row> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path);
  std::string line;
  std::getline(in, line);
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string z, d, y, x;
    std::getline(ss, z, ',');
    std::getline(ss, d, ',');
    std::getline(ss, y, ',');
    std::getline(ss, x, ',');
    int dose = -1;
    if (d == "1" || d == "H") dose = 1;
    if (d == "0" || d == "L") dose = 0;
    rows.push_back({std::stoi(z), dose, std::stod(y), std::stod(x)});
  }
  return rows;
}

struct Diff {
  double mu1 = 0, mu0 = 0, itt = 0, se = 0;
};

// mean and fixed-weight variance sum w^2 (y - m)^2 / (sum w)^2
struct MV {
  double mean = 0, var = 0, mass = 0;
};

inline MV mv(const std::vector<double>& w, const std::vector<double>& y) {
  MV r;
  double s = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    r.mass += w[i];
    s += w[i] * y[i];
  }
  r.mean = s / r.mass;
  double v = 0;
  for (size_t i = 0; i < w.size(); ++i) v += w[i] * w[i] * (y[i] - r.mean) * (y[i] - r.mean);
  r.var = v / (r.mass * r.mass);
  return r;
}

inline MV cell(const std::vector<Row>& rows, int z, int d) {
  std::vector<double> w, y;
  for (const auto& r : rows) {
    if (r.z == z && r.d == d) {
      w.push_back(1);
      y.push_back(r.y);
    }
  }
  return mv(w, y);
}

inline bool cell_empty(const std::vector<Row>& rows, int z, int d) {
  for (const auto& r : rows) {
    if (r.z == z && r.d == d) return false;
  }
  return true;
}

// Treated weighted by w1, controls by w0.
inline Diff weighted(const std::vector<Row>& rows, const std::vector<double>& w1,
                     const std::vector<double>& w0) {
  std::vector<double> a, ya, b, yb;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].z == 1) {
      a.push_back(w1[i]);
      ya.push_back(rows[i].y);
    } else {
      b.push_back(w0[i]);
      yb.push_back(rows[i].y);
    }
  }
  const auto t = mv(a, ya);
  const auto c = mv(b, yb);
  return {t.mean, c.mean, t.mean - c.mean, std::sqrt(t.var + c.var)};
}

// ---- one-sided ----

// Share of High takers among treated units with the same x.
inline std::vector<double> onesided_cell_scores(const std::vector<Row>& rows) {
  std::map<double, std::pair<double, double>> tally;  // x -> (high, treated)
  for (const auto& r : rows) {
    if (r.z != 1) continue;
    tally[r.x].second += 1;
    if (r.d == 1) tally[r.x].first += 1;
  }
  std::vector<double> pi;
  for (const auto& r : rows) pi.push_back(tally.at(r.x).first / tally.at(r.x).second);
  return pi;
}

// stratum: 1 = High, 0 = Low. pi = High score.
inline Diff onesided_weak(const std::vector<Row>& rows, const std::vector<double>& pi, int stratum) {
  std::vector<double> w1, w0;
  for (size_t i = 0; i < rows.size(); ++i) {
    w1.push_back(rows[i].z == 1 && rows[i].d == stratum ? 1.0 : 0.0);
    w0.push_back(stratum == 1 ? pi[i] : 1.0 - pi[i]);
  }
  return weighted(rows, w1, w0);
}

inline Diff onesided_strong(const std::vector<Row>& rows, const std::vector<double>& pi, int stratum) {
  std::vector<double> w;
  for (size_t i = 0; i < rows.size(); ++i) w.push_back(stratum == 1 ? pi[i] : 1.0 - pi[i]);
  return weighted(rows, w, w);
}

inline Diff onesided_subgroup(const std::vector<Row>& rows, const std::vector<double>& pi, int stratum) {
  double high = 0, treated = 0;
  for (const auto& r : rows) {
    if (r.z == 1) {
      treated += 1;
      high += r.d == 1 ? 1 : 0;
    }
  }
  const double cut = high / treated;
  std::vector<double> w;
  for (size_t i = 0; i < rows.size(); ++i) {
    const bool predicted_high = pi[i] >= cut;
    w.push_back(predicted_high == (stratum == 1) ? 1.0 : 0.0);
  }
  return weighted(rows, w, w);
}

// ITT_l = 0; ITT_h = (Ybar_z1 - Ybar_z0) / pi written as mu1 - mu0.
inline Diff onesided_er(const std::vector<Row>& rows) {
  const auto h = cell(rows, 1, 1);
  const auto l = cell(rows, 1, 0);
  std::vector<double> w, y;
  for (const auto& r : rows) {
    if (r.z == 0) {
      w.push_back(1);
      y.push_back(r.y);
    }
  }
  const auto c = mv(w, y);
  const double p = h.mass / (h.mass + l.mass);
  Diff out;
  out.mu1 = h.mean;
  out.mu0 = (c.mean - (1 - p) * l.mean) / p;
  out.itt = out.mu1 - out.mu0;
  out.se = std::sqrt(h.var + c.var / (p * p) + ((1 - p) / p) * ((1 - p) / p) * l.var);
  return out;
}

// ---- two-sided ----

struct Scores3 {
  std::vector<double> a, c, n;
};

// a from controls, n from treateds, per x cell; negative c clipped to 0 and
// (a, n) rescaled to sum to one.
inline Scores3 twosided_cell_scores(const std::vector<Row>& rows) {
  std::map<double, double> ctl, ctl_d, trt, trt_nd;
  for (const auto& r : rows) {
    if (r.z == 0) {
      ctl[r.x] += 1;
      ctl_d[r.x] += r.d == 1 ? 1 : 0;
    } else {
      trt[r.x] += 1;
      trt_nd[r.x] += r.d == 0 ? 1 : 0;
    }
  }
  Scores3 s;
  for (const auto& r : rows) {
    double a = ctl_d[r.x] / ctl.at(r.x);
    double n = trt_nd[r.x] / trt.at(r.x);
    double c = 1 - a - n;
    if (c < 0) {
      const double t = a + n;
      a /= t;
      n /= t;
      c = 0;
    }
    s.a.push_back(a);
    s.c.push_back(c);
    s.n.push_back(n);
  }
  return s;
}

struct Props {
  double a, c, n;
};

inline Props proportions(const std::vector<Row>& rows) {
  double n0 = 0, n01 = 0, n1 = 0, n10 = 0;
  for (const auto& r : rows) {
    if (r.z == 0) {
      n0 += 1;
      n01 += r.d == 1;
    } else {
      n1 += 1;
      n10 += r.d == 0;
    }
  }
  return {n01 / n0, 1 - n01 / n0 - n10 / n1, n10 / n1};
}

// 'a', 'c' or 'n'
inline Diff twosided_strong(const std::vector<Row>& rows, const Scores3& s, char stratum) {
  const auto& w = stratum == 'a' ? s.a : (stratum == 'c' ? s.c : s.n);
  return weighted(rows, w, w);
}

inline Diff twosided_weak(const std::vector<Row>& rows, const Scores3& s, char stratum) {
  std::vector<double> w;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    double wa = 0, wc = 0, wn = 0;
    if (r.z == 1 && r.d == 1) {
      wa = s.a[i] / (s.a[i] + s.c[i]);
      wc = s.c[i] / (s.a[i] + s.c[i]);
    } else if (r.z == 0 && r.d == 0) {
      wn = s.n[i] / (s.n[i] + s.c[i]);
      wc = s.c[i] / (s.n[i] + s.c[i]);
    } else if (r.z == 1) {
      wn = 1;
    } else {
      wa = 1;
    }
    w.push_back(stratum == 'a' ? wa : (stratum == 'c' ? wc : wn));
  }
  return weighted(rows, w, w);
}

// Control-side complier mean under the never-taker exclusion restriction.
inline void complier_mu0(const std::vector<Row>& rows, const Props& p, Diff& out, double& var) {
  const auto y00 = cell(rows, 0, 0);
  out.mu0 = (p.c + p.n) / p.c * y00.mean;
  var += std::pow((p.c + p.n) / p.c, 2) * y00.var;
  if (!cell_empty(rows, 1, 0)) {
    const auto y10 = cell(rows, 1, 0);
    out.mu0 -= p.n / p.c * y10.mean;
    var += std::pow(p.n / p.c, 2) * y10.var;
  }
}

inline Diff twosided_weak_er_nt(const std::vector<Row>& rows, const Scores3& s, char stratum) {
  const auto p = proportions(rows);
  Diff out;
  if (stratum == 'n') {
    out.mu1 = out.mu0 = cell(rows, 1, 0).mean;
    return out;
  }
  std::vector<double> w, y;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].z != 1 || rows[i].d != 1) continue;
    const double phi = s.c[i] / (s.c[i] + s.a[i]);
    w.push_back(stratum == 'c' ? phi : 1 - phi);
    y.push_back(rows[i].y);
  }
  const auto t = mv(w, y);
  out.mu1 = t.mean;
  double var = t.var;
  if (stratum == 'a') {
    const auto y01 = cell(rows, 0, 1);
    out.mu0 = y01.mean;
    var += y01.var;
  } else {
    complier_mu0(rows, p, out, var);
  }
  out.itt = out.mu1 - out.mu0;
  out.se = std::sqrt(var);
  return out;
}

inline Diff twosided_iv(const std::vector<Row>& rows, char stratum) {
  const auto p = proportions(rows);
  Diff out;
  if (stratum == 'a') {
    out.mu1 = out.mu0 = cell(rows, 0, 1).mean;
    return out;
  }
  if (stratum == 'n') {
    out.mu1 = out.mu0 = cell(rows, 1, 0).mean;
    return out;
  }
  const auto y11 = cell(rows, 1, 1);
  out.mu1 = (p.c + p.a) / p.c * y11.mean;
  double var = std::pow((p.c + p.a) / p.c, 2) * y11.var;
  if (!cell_empty(rows, 0, 1)) {
    const auto y01 = cell(rows, 0, 1);
    out.mu1 -= p.a / p.c * y01.mean;
    var += std::pow(p.a / p.c, 2) * y01.var;
  }
  complier_mu0(rows, p, out, var);
  out.itt = out.mu1 - out.mu0;
  out.se = std::sqrt(var);
  return out;
}

// (Ybar_{z=1} - Ybar_{z=0}) / pi_c
inline double wald(const std::vector<Row>& rows) {
  double s1 = 0, n1 = 0, s0 = 0, n0 = 0;
  for (const auto& r : rows) {
    if (r.z == 1) {
      s1 += r.y;
      n1 += 1;
    } else {
      s0 += r.y;
      n0 += 1;
    }
  }
  return (s1 / n1 - s0 / n0) / proportions(rows).c;
}

}  // namespace oracle
