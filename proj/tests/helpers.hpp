#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dewm/bitvector.hpp"
#include "dewm/data.hpp"

namespace testing {

// Small deterministic generator for property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>()(rng); }
  int coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng) ? 1 : 0; }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  // Values on a coarse grid so ties and collinear points show up.
  double grid(int lo, int hi) { return static_cast<double>(integer(lo, hi)); }
};

// Two-stage panel with one stage-1 covariate; outcomes from N(mu, 1).
inline dewm::PanelDataset random_panel(Gen& g, std::size_t n, bool coarse = false, double mu = 0.0) {
  std::vector<dewm::Trajectory> trajs;
  for (std::size_t i = 0; i < n; ++i) {
    dewm::Trajectory tr;
    tr.id = std::to_string(i + 1);
    tr.treatments = {g.coin(), g.coin()};
    tr.outcomes = {coarse ? g.grid(-3, 3) : mu + g.normal(), coarse ? g.grid(-3, 3) : mu + g.normal()};
    tr.covariates.emplace_back(Eigen::VectorXd::Constant(1, coarse ? g.grid(-2, 2) : g.normal()));
    tr.covariates.emplace_back(0);
    trajs.push_back(std::move(tr));
  }
  return dewm::PanelDataset(std::move(trajs), {1, 0});
}

inline std::string key(const dewm::BitVector& b) {
  std::string s(b.size(), '0');
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b.test(i)) s[i] = '1';
  return s;
}

// Dichotomies 1{b0 + b1 x >= 0} over all thresholds and both orientations,
// plus the two constants. Brute force over midpoints of sorted values.
inline std::set<std::string> threshold_dichotomies(const std::vector<double>& x) {
  std::vector<double> v = x;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> cuts{v.front() - 1.0};
  for (std::size_t k = 0; k + 1 < v.size(); ++k) cuts.push_back(0.5 * (v[k] + v[k + 1]));
  cuts.push_back(v.back() + 1.0);
  std::set<std::string> out;
  for (double c : cuts)
    for (int dir : {1, -1}) {
      std::string s(x.size(), '0');
      for (std::size_t i = 0; i < x.size(); ++i)
        if (dir * (x[i] - c) >= 0) s[i] = '1';
      out.insert(s);
    }
  return out;
}

// Phase-one simplex (Bland's rule) deciding whether {y >= 0 : A y <= b} is
// nonempty. Dense and slow; only for small oracle instances.
inline bool lp_feasible(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Eigen::Index m = A.rows(), k = A.cols(), cols = k + 2 * m;
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, cols + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index r = 0; r < m; ++r) {
    const double sgn = b[r] < 0 ? -1.0 : 1.0;
    T.row(r).head(k) = sgn * A.row(r);
    T(r, k + r) = sgn;      // slack
    T(r, k + m + r) = 1.0;  // artificial
    T(r, cols) = sgn * b[r];
    basis[static_cast<std::size_t>(r)] = k + m + r;
  }
  for (Eigen::Index j = 0; j < k + m; ++j) T(m, j) = -T.col(j).head(m).sum();
  T(m, cols) = -T.col(cols).head(m).sum();
  for (int iter = 0; iter < 10000; ++iter) {
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < cols; ++j)
      if (T(m, j) < -1e-11) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (T(r, enter) <= 1e-11) continue;
      const double ratio = T(r, cols) / T(r, enter);
      if (leave < 0 || ratio < best - 1e-12 ||
          (ratio <= best + 1e-12 && basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
        leave = r;
        best = ratio;
      }
    }
    if (leave < 0) break;
    T.row(leave) /= T(leave, enter);
    for (Eigen::Index r = 0; r <= m; ++r)
      if (r != leave && T(r, enter) != 0.0) T.row(r) -= T(r, enter) * T.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  return T(m, cols) > -1e-9;
}

// Whether some beta (intercept first) realizes `labels` on the rows of F:
// score >= 0 on label 1 and < 0 on label 0. signs[j] is +1 (beta_j >= 0),
// -1 (beta_j <= 0) or 0 (free).
inline bool realizable(const Eigen::MatrixXd& F, const std::string& labels, const std::vector<int>& signs = {}) {
  const Eigen::Index n = F.rows(), q = F.cols() + 1;
  // beta = u - v with u, v >= 0; strictness by scale: untreated score <= -1.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd a(q);
    a << 1.0, F.row(i).transpose();
    if (labels[static_cast<std::size_t>(i)] == '1') {
      rows.push_back(-a);
      rhs.push_back(0.0);
    } else {
      rows.push_back(a);
      rhs.push_back(-1.0);
    }
  }
  for (std::size_t j = 0; j < signs.size(); ++j) {
    if (signs[j] == 0) continue;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(q);
    a[static_cast<Eigen::Index>(j)] = signs[j] > 0 ? -1.0 : 1.0;
    rows.push_back(a);
    rhs.push_back(0.0);
  }
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), 2 * q);
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    A.row(static_cast<Eigen::Index>(r)) << rows[r].transpose(), -rows[r].transpose();
    b[static_cast<Eigen::Index>(r)] = rhs[r];
  }
  return lp_feasible(A, b);
}

}  // namespace testing
