#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dewm/data.hpp"
#include "dewm/policy.hpp"
#include "dewm/propensity.hpp"
#include "dewm/welfare.hpp"

namespace dewm {

struct MilpTerm {
  std::string var;
  double coef = 0.0;
};

enum class RowSense { LessEqual, GreaterEqual, Equal };

struct MilpRow {
  std::string name;
  std::vector<MilpTerm> terms;
  RowSense sense = RowSense::LessEqual;
  double rhs = 0.0;
};

struct MilpVariable {
  std::string name;
  bool binary = false;
  double lower = 0.0;
  double upper = 1.0;
};

// Two-stage threshold-rule MILP. Continuous b{t}_{j} hold the stage-t
// coefficients (j = 0 is the intercept) inside the box [-1, 1]; binaries
// z{t}_{i} are the rule outputs and z3_{i} = z1_{i} z2_{i}. A constants class
// ties every z{t}_{i} to a single binary k{t}.
struct MilpModel {
  std::string title;
  std::vector<MilpVariable> variables;
  std::vector<MilpTerm> objective;
  double objective_constant = 0.0;
  std::vector<MilpRow> rows;
  // big_m[s][i] = 1 + ||(1, H_sel)||_1 for the s-th entry of `stages`
  // (empty for a constants class).
  std::vector<std::vector<double>> big_m;
  double eps_strict = 1e-6;
  std::vector<int> stages;  // stages whose rules are decision variables
};

// step 1 fits g2; step 2 fits g1 given the stage-2 rule of `fitted`.
MilpModel build_backward_milp(const PanelDataset& ds, const PropensityModel& pm, const WelfareWeights& w,
                              const PolicyClassSpec& classes, int step, const std::optional<Dtr>& fitted = {});

MilpModel build_simultaneous_milp(const PanelDataset& ds, const PropensityModel& pm, const WelfareWeights& w,
                                  const PolicyClassSpec& classes, const std::optional<BudgetSpec>& budget = {});

void write_lp(const MilpModel& model, std::ostream& out);
std::string write_lp(const MilpModel& model);

// Reads the LP subset produced by write_lp.
MilpModel read_lp(std::istream& in);

using MilpAssignment = std::map<std::string, double>;

// Variable values implied by a DTR: coefficients rescaled into the box and
// z from applying the rules to the data.
MilpAssignment milp_assignment(const MilpModel& model, const PanelDataset& ds, const PolicyClassSpec& classes,
                               const Dtr& dtr);

double evaluate_objective(const MilpModel& model, const MilpAssignment& values);

// Names of rows violated by more than `tol` (empty when all hold).
std::vector<std::string> violated_rows(const MilpModel& model, const MilpAssignment& values, double tol = 1e-9);

}  // namespace dewm
