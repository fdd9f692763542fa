#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dewm/data.hpp"
#include "dewm/keyvalue.hpp"

namespace dewm {

inline constexpr double kDefaultClipFloor = 0.01;

// Per-stage assignment probability P(D_t = 1 | H_t).
struct PropensityStage {
  enum class Kind { KnownConstant, KnownTable, Logistic };

  Kind kind = Kind::KnownConstant;
  double p1 = 0.5;
  // Known table: selected history features are rounded to integers and the
  // resulting key looks up P(D_t = 1). Missing keys fall back to `p1`.
  std::vector<int> selector;
  std::map<std::vector<long>, double> table;
  // Logistic: P(D_t = 1 | h) = sigmoid(beta[0] + sum_j beta[j+1] h[selector[j]]).
  Eigen::VectorXd beta;

  static PropensityStage known(double p1);
  static PropensityStage known_table(std::vector<int> selector, std::map<std::vector<long>, double> table,
                                     double fallback);
  static PropensityStage logistic(std::vector<int> selector, Eigen::VectorXd beta);

  template <typename Derived>
  double raw_p1(const Eigen::MatrixBase<Derived>& h) const;
};

struct PropensityModel {
  std::vector<PropensityStage> stages;
  double clip_floor = kDefaultClipFloor;

  int stage_count() const { return static_cast<int>(stages.size()); }
};

PropensityModel known_propensity(int T, double p1, double clip_floor = kDefaultClipFloor);

// P(D_t = d | h), clipped into [clip_floor, 1 - clip_floor].
double propensity_at(const PropensityModel& model, int t, int d, const HistoryVector& h);

// e_t(D_it, H_it) for every row; rows of `histories` are canonical stage-t histories.
Eigen::VectorXd realized_propensities(const PropensityModel& model, int t, const Eigen::MatrixXd& histories,
                                      const std::vector<int>& treatments);

struct LogisticFitOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
  // Coefficients beyond this magnitude are taken as divergence (separation).
  double divergence_bound = 50.0;
};

struct LogisticFitTrace {
  std::vector<double> log_likelihood;
  int iterations = 0;
};

PropensityStage fit_logistic_stage(const PanelDataset& ds, int t, const std::vector<int>& selector,
                                   const LogisticFitOptions& options = {}, LogisticFitTrace* trace = nullptr);

// Logistic fits at every stage with per-stage selectors.
PropensityModel fit_logistic_propensity(const PanelDataset& ds, const std::vector<std::vector<int>>& selectors,
                                        double clip_floor = kDefaultClipFloor);

KeyValueDoc to_keyvalue(const PropensityModel& model);
PropensityModel propensity_from_keyvalue(const KeyValueDoc& doc);
void write_propensity(const PropensityModel& model, std::ostream& out);
PropensityModel read_propensity(std::istream& in);

template <typename Derived>
double PropensityStage::raw_p1(const Eigen::MatrixBase<Derived>& h) const {
  switch (kind) {
    case Kind::KnownConstant:
      return p1;
    case Kind::KnownTable: {
      std::vector<long> key;
      key.reserve(selector.size());
      for (int idx : selector) key.push_back(std::lround(h[idx]));
      const auto it = table.find(key);
      return it == table.end() ? p1 : it->second;
    }
    case Kind::Logistic: {
      double s = beta[0];
      for (std::size_t j = 0; j < selector.size(); ++j) s += beta[static_cast<Eigen::Index>(j) + 1] * h[selector[j]];
      return 1.0 / (1.0 + std::exp(-s));
    }
  }
  return p1;
}

}  // namespace dewm
