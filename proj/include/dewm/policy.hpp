#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "dewm/data.hpp"
#include "dewm/keyvalue.hpp"

namespace dewm {

enum class SignConstraint { Free, NonNeg, NonPos };
enum class Intertemporal { None, OneShot, StartTime, StopTime };

// A single-stage treatment rule. Linear rules assign 1 when
//   beta[0] + sum_j beta[j+1] * h[selector[j]] >= 0
// so the threshold c_t lives in the intercept as beta[0] = -c_t. A score of
// exactly zero assigns treatment.
struct StageRule {
  enum class Kind { Constant, Linear };

  Kind kind = Kind::Constant;
  int stage = 1;
  int value = 0;
  std::vector<int> selector;
  Eigen::VectorXd beta;

  static StageRule constant(int stage, int value);
  static StageRule linear(int stage, std::vector<int> selector, Eigen::VectorXd beta);

  bool is_constant() const { return kind == Kind::Constant; }

  // Raw score on a history row (Constant rules return +1 / -1).
  template <typename Derived>
  double score(const Eigen::MatrixBase<Derived>& h) const {
    if (kind == Kind::Constant) return value ? 1.0 : -1.0;
    double s = beta[0];
    for (std::size_t j = 0; j < selector.size(); ++j) s += beta[static_cast<Eigen::Index>(j) + 1] * h[selector[j]];
    return s;
  }

  template <typename Derived>
  int operator()(const Eigen::MatrixBase<Derived>& h) const {
    return score(h) >= 0.0 ? 1 : 0;
  }

  bool operator==(const StageRule& other) const;
};

int apply_rule(const StageRule& rule, const HistoryVector& h);

// A T-stage regime. `outcome_centering` records per-stage offsets that were
// subtracted from outcomes before the rules were fitted (empty = none); rules
// read prior outcomes in those centered units.
struct Dtr {
  std::vector<StageRule> rules;
  std::vector<double> outcome_centering;

  int stage_count() const { return static_cast<int>(rules.size()); }
  const StageRule& operator[](int t) const { return rules[t - 1]; }
  double centering(int t) const {
    return outcome_centering.empty() ? 0.0 : outcome_centering[t - 1];
  }
  bool same_rules(const Dtr& other) const { return rules == other.rules; }
};

Dtr constant_dtr(const std::vector<int>& values);

// Moves raw-unit histories into the units a DTR's rules expect.
HistoryVector center_history(const Dtr& dtr, const HistoryVector& raw);

// Stage-t rule inputs for every row of `ds`, adjusted from the dataset's own
// centering to the DTR's.
Eigen::MatrixXd rule_inputs(const PanelDataset& ds, const Dtr& dtr, int t);

// prod_{s<=t} 1{g_s(H_s) = D_s}; the trajectory is read in rule units.
int match_indicator(const Dtr& dtr, const Trajectory& traj, int t);

struct StageClass {
  enum class Kind { Constants, Linear };
  Kind kind = Kind::Constants;
  std::vector<int> selector;
  // One entry per beta coordinate (intercept first); empty means all free.
  std::vector<SignConstraint> signs;

  static StageClass constants() { return {}; }
  static StageClass linear(std::vector<int> selector, std::vector<SignConstraint> signs = {});

  std::size_t beta_size() const { return selector.size() + 1; }
  SignConstraint sign(std::size_t j) const { return signs.empty() ? SignConstraint::Free : signs[j]; }
  bool admits(const StageRule& rule) const;
};

struct PolicyClassSpec {
  std::vector<StageClass> stages;
  Intertemporal intertemporal = Intertemporal::None;

  int stage_count() const { return static_cast<int>(stages.size()); }
  const StageClass& operator[](int t) const { return stages[t - 1]; }
  void validate(const PanelDataset& ds) const;
};

PolicyClassSpec constant_classes(int T, Intertemporal kind = Intertemporal::None);

// Grammar: stages separated by ';', each "const" or
// "linear:<i,j,...>[:<signs>]" with signs over {f,+,-} (intercept first).
// The preset "table1" expands to "linear:0;linear:0,1".
std::vector<StageClass> parse_stage_classes(const std::string& text);
std::string to_string(const std::vector<StageClass>& classes);

Intertemporal parse_intertemporal(const std::string& text);
std::string to_string(Intertemporal kind);

enum class TreatmentPath { Observed, Rule };

struct IntertemporalReport {
  bool feasible = true;
  int first_violation = 0;  // stage index, 0 when feasible
};

// Checks the DTR's assignments along `traj` against the constraint. With
// TreatmentPath::Observed the prior d_s come from the data; with
// TreatmentPath::Rule they are the DTR's own prior assignments.
IntertemporalReport check_intertemporal(const Dtr& dtr, const Trajectory& traj, Intertemporal kind,
                                        TreatmentPath path = TreatmentPath::Observed);

// Pairwise admissibility of (prior d_s, current g_t) for one pair of stages.
bool intertemporal_pair_ok(Intertemporal kind, int prior, int current);

KeyValueDoc to_keyvalue(const Dtr& dtr);
Dtr dtr_from_keyvalue(const KeyValueDoc& doc);
void write_dtr(const Dtr& dtr, std::ostream& out);
Dtr read_dtr(std::istream& in);
Dtr load_dtr(const std::string& path);

}  // namespace dewm
