#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dewm/data.hpp"
#include "dewm/policy.hpp"
#include "dewm/propensity.hpp"

namespace dewm {

struct WelfareWeights {
  std::vector<double> gamma;

  int stage_count() const { return static_cast<int>(gamma.size()); }
  double operator[](int t) const { return gamma[t - 1]; }
  void validate(int T) const;
};

// sum_t K_tb * share_t <= C_b + alpha_n for each row b.
struct BudgetRow {
  std::vector<double> K;
  double C = 0.0;
};

struct BudgetSpec {
  std::vector<BudgetRow> rows;
  double alpha_n = 0.0;

  int row_count() const { return static_cast<int>(rows.size()); }
  void validate(int T) const;
};

// (1/n) sum_i sum_t [prod_{s<=t} 1{g_s(H_is) = D_is}] gamma_t Y_it / prod_{s<=t} e_s(D_is, H_is)
double empirical_welfare(const PanelDataset& ds, const Dtr& dtr, const PropensityModel& pm, const WelfareWeights& w);

// Stage-t backward objective with `future` holding the rules for t+1..T.
double backward_objective(const PanelDataset& ds, int t, const StageRule& g_t, const std::vector<StageRule>& future,
                          const PropensityModel& pm, const WelfareWeights& w);

struct ShareResult {
  double share = 0.0;
  bool empty_path = false;
};

// Share treated at stage t among units whose observed path matched the DTR
// before t. An empty conditioning set yields share 0 with `empty_path` set.
ShareResult empirical_treated_share(const PanelDataset& ds, const Dtr& dtr, int t);

struct BudgetRowResult {
  double lhs = 0.0;
  bool empty_path = false;
};

BudgetRowResult budget_lhs(const PanelDataset& ds, const Dtr& dtr, const BudgetSpec& spec, int b);

// Feasible iff lhs <= C_b + alpha_n for every row. In strict mode a row that
// touches an empty conditioning path makes the DTR infeasible.
bool budget_feasible(const PanelDataset& ds, const Dtr& dtr, const BudgetSpec& spec, bool strict = false);

struct WelfareReport {
  double welfare = 0.0;
  std::vector<double> shares;
  std::vector<double> budget_lhs;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

WelfareReport welfare_report(const PanelDataset& ds, const Dtr& dtr, const PropensityModel& pm,
                             const WelfareWeights& w, const std::optional<BudgetSpec>& budget = std::nullopt);

}  // namespace dewm
