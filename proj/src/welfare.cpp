#include "dewm/welfare.hpp"

#include <cmath>
#include "json.hpp"

#include "dewm/error.hpp"

namespace dewm {

void WelfareWeights::validate(int T) const {
  if (stage_count() != T)
    throw DimensionError("welfare weights have " + std::to_string(stage_count()) + " entries, expected " +
                         std::to_string(T));
  for (double g : gamma)
    if (!(g >= 0.0 && g <= 1.0)) throw Error("welfare weights must lie in [0, 1]");
}

void BudgetSpec::validate(int T) const {
  if (rows.empty()) throw Error("budget spec has no rows");
  if (!(alpha_n >= 0.0)) throw Error("alpha_n must be non-negative");
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& r = rows[b];
    if (static_cast<int>(r.K.size()) != T)
      throw DimensionError("budget row " + std::to_string(b + 1) + " needs " + std::to_string(T) + " K entries");
    double sum = 0.0;
    for (double k : r.K) {
      if (!(k >= 0.0 && k <= 1.0)) throw Error("budget K entries must lie in [0, 1]");
      sum += k;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("budget row " + std::to_string(b + 1) + " K entries must sum to 1");
    if (!(r.C >= 0.0)) throw Error("budget level C must be non-negative");
  }
}

namespace {

void check_dims(const PanelDataset& ds, const Dtr& dtr, const PropensityModel& pm, const WelfareWeights& w) {
  const int T = ds.stage_count();
  if (dtr.stage_count() != T || pm.stage_count() != T) throw DimensionError("dtr/propensity stage count mismatch");
  w.validate(T);
}

// assignments[t-1][i] = g_t(H_it) in the DTR's units.
std::vector<std::vector<int>> assignments(const PanelDataset& ds, const Dtr& dtr) {
  std::vector<std::vector<int>> a(ds.stage_count(), std::vector<int>(ds.size()));
  for (int t = 1; t <= ds.stage_count(); ++t) {
    const Eigen::MatrixXd h = rule_inputs(ds, dtr, t);
    const auto& rule = dtr[t];
    if (rule.stage != t) throw DimensionError("dtr rule stage labels out of order");
    for (Eigen::Index i = 0; i < h.rows(); ++i) a[t - 1][static_cast<std::size_t>(i)] = rule(h.row(i));
  }
  return a;
}

std::vector<Eigen::VectorXd> propensities(const PanelDataset& ds, const PropensityModel& pm) {
  std::vector<Eigen::VectorXd> e;
  for (int t = 1; t <= ds.stage_count(); ++t)
    e.push_back(realized_propensities(pm, t, ds.history_matrix(t), ds.treatments(t)));
  return e;
}

}  // namespace

double empirical_welfare(const PanelDataset& ds, const Dtr& dtr, const PropensityModel& pm, const WelfareWeights& w) {
  check_dims(ds, dtr, pm, w);
  if (ds.size() == 0) return 0.0;
  const auto g = assignments(ds, dtr);
  const auto e = propensities(ds, pm);
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& tr = ds[i];
    double denom = 1.0;
    for (int t = 1; t <= ds.stage_count(); ++t) {
      if (g[t - 1][i] != tr.treatments[t - 1]) break;
      denom *= e[t - 1][static_cast<Eigen::Index>(i)];
      total += w[t] * tr.outcomes[t - 1] / denom;
    }
  }
  return total / static_cast<double>(ds.size());
}

double backward_objective(const PanelDataset& ds, int t, const StageRule& g_t, const std::vector<StageRule>& future,
                          const PropensityModel& pm, const WelfareWeights& w) {
  const int T = ds.stage_count();
  if (t < 1 || t > T) throw DimensionError("stage out of range");
  if (static_cast<int>(future.size()) != T - t)
    throw Error("backward objective at stage " + std::to_string(t) + " needs rules for stages " +
                std::to_string(t + 1) + ".." + std::to_string(T));
  if (pm.stage_count() != T) throw DimensionError("propensity stage count mismatch");
  w.validate(T);
  if (ds.size() == 0) return 0.0;

  // Stages before t are unconstrained; fill them with placeholders.
  Dtr dtr;
  for (int s = 1; s < t; ++s) dtr.rules.push_back(StageRule::constant(s, 0));
  dtr.rules.push_back(g_t);
  for (const auto& r : future) dtr.rules.push_back(r);
  dtr.outcome_centering = ds.outcome_means();
  const auto g = assignments(ds, dtr);
  const auto e = propensities(ds, pm);

  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& tr = ds[i];
    double denom = 1.0;
    for (int s = t; s <= T; ++s) {
      if (g[s - 1][i] != tr.treatments[s - 1]) break;
      denom *= e[s - 1][static_cast<Eigen::Index>(i)];
      total += w[s] * tr.outcomes[s - 1] / denom;
    }
  }
  return total / static_cast<double>(ds.size());
}

ShareResult empirical_treated_share(const PanelDataset& ds, const Dtr& dtr, int t) {
  if (t < 1 || t > ds.stage_count() || dtr.stage_count() != ds.stage_count())
    throw DimensionError("stage out of range");
  const auto g = assignments(ds, dtr);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bool on_path = true;
    for (int s = 1; s < t && on_path; ++s) on_path = g[s - 1][i] == ds[i].treatments[s - 1];
    if (!on_path) continue;
    den += 1.0;
    num += g[t - 1][i];
  }
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}

BudgetRowResult budget_lhs(const PanelDataset& ds, const Dtr& dtr, const BudgetSpec& spec, int b) {
  if (b < 1 || b > spec.row_count()) throw DimensionError("budget row out of range");
  const auto& row = spec.rows[b - 1];
  BudgetRowResult r;
  for (int t = 1; t <= ds.stage_count(); ++t) {
    if (row.K[t - 1] == 0.0) continue;
    const auto s = empirical_treated_share(ds, dtr, t);
    r.lhs += row.K[t - 1] * s.share;
    r.empty_path = r.empty_path || s.empty_path;
  }
  return r;
}

bool budget_feasible(const PanelDataset& ds, const Dtr& dtr, const BudgetSpec& spec, bool strict) {
  for (int b = 1; b <= spec.row_count(); ++b) {
    const auto r = budget_lhs(ds, dtr, spec, b);
    if (strict && r.empty_path) return false;
    if (r.lhs > spec.rows[b - 1].C + spec.alpha_n) return false;
  }
  return true;
}

std::string WelfareReport::to_json() const {
  nlohmann::ordered_json j;
  j["welfare"] = welfare;
  j["shares"] = shares;
  if (!budget_lhs.empty()) j["budget_lhs"] = budget_lhs;
  j["warnings"] = warnings;
  return j.dump();
}

WelfareReport welfare_report(const PanelDataset& ds, const Dtr& dtr, const PropensityModel& pm,
                             const WelfareWeights& w, const std::optional<BudgetSpec>& budget) {
  WelfareReport rep;
  rep.welfare = empirical_welfare(ds, dtr, pm, w);
  for (int t = 1; t <= ds.stage_count(); ++t) {
    const auto s = empirical_treated_share(ds, dtr, t);
    rep.shares.push_back(s.share);
    if (s.empty_path) rep.warnings.push_back("empty-path at stage " + std::to_string(t));
  }
  if (budget) {
    for (int b = 1; b <= budget->row_count(); ++b) rep.budget_lhs.push_back(budget_lhs(ds, dtr, *budget, b).lhs);
  }
  return rep;
}

}  // namespace dewm
