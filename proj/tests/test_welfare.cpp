#include <doctest.h>

#include <cmath>

#include "dewm/error.hpp"
#include "dewm/estimators.hpp"
#include "dewm/welfare.hpp"
#include "helpers.hpp"

using namespace dewm;

namespace {

// Independent route: full indicator products over raw histories.
double welfare_oracle(const PanelDataset& ds, const Dtr& dtr, double p, const std::vector<double>& gamma) {
  double total = 0.0;
  for (const auto& tr : ds.trajectories()) {
    for (int t = 1; t <= ds.stage_count(); ++t) {
      double ind = 1.0, e = 1.0;
      for (int s = 1; s <= t; ++s) {
        HistoryVector raw = history(tr, s);
        // The dataset may itself be centered; move to raw units first.
        for (int r = 1; r < s; ++r) raw.values[static_cast<Eigen::Index>(layout::outcome_slot(s, r))] += ds.outcome_means()[r - 1];
        const int g = apply_rule(dtr[s], center_history(dtr, raw));
        ind *= g == tr.treatments[s - 1] ? 1.0 : 0.0;
        e *= tr.treatments[s - 1] ? p : 1.0 - p;
      }
      total += ind * gamma[t - 1] * tr.outcomes[t - 1] / e;
    }
  }
  return total / static_cast<double>(ds.size());
}

Dtr random_dtr(testing::Gen& g) {
  Dtr d;
  d.rules = {StageRule::linear(1, {0}, Eigen::Vector2d(g.normal(), g.normal())),
             StageRule::linear(2, {0, 1}, Eigen::Vector3d(g.normal(), g.normal(), g.normal()))};
  return d;
}

}  // namespace

TEST_CASE("hand-computed welfare on three units") {
  // Units (d1, y1, x1, d2, y2); rule g1 = 1{x1 >= 0}, g2 = 1{y1 >= 1}.
  std::vector<Trajectory> trajs{
      {"a", {1, 1}, {2.0, 4.0}, {Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd(0)}},   // on path both
      {"b", {0, 0}, {1.0, 6.0}, {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd(0)}},  // g2 = 1 != 0
      {"c", {1, 0}, {3.0, 9.0}, {Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd(0)}},  // g1 = 0 != 1
  };
  const PanelDataset ds(std::move(trajs), {1, 0});
  Dtr d;
  d.rules = {StageRule::linear(1, {0}, Eigen::Vector2d(0.0, 1.0)), StageRule::linear(2, {1}, Eigen::Vector2d(-1.0, 1.0))};
  const PropensityModel pm = known_propensity(2, 0.5);
  // gamma = (1, 1): a contributes 2/0.5 + 4/0.25 = 20; b contributes 1/0.5 = 2.
  CHECK(empirical_welfare(ds, d, pm, {{1.0, 1.0}}) == doctest::Approx(22.0 / 3.0));
  CHECK(empirical_welfare(ds, d, pm, {{0.0, 1.0}}) == doctest::Approx(16.0 / 3.0));
  // Backward stage-2 objective: g2 treats all three; only a matches (4/0.5).
  CHECK(backward_objective(ds, 2, d.rules[1], {}, pm, {{0.0, 1.0}}) == doctest::Approx(8.0 / 3.0));
  // Shares: stage 1 treats a only; stage 2 among {a, b} treats both.
  CHECK(empirical_treated_share(ds, d, 1).share == doctest::Approx(1.0 / 3.0));
  CHECK(empirical_treated_share(ds, d, 2).share == doctest::Approx(1.0));
}

TEST_CASE("empirical welfare agrees with the indicator-product oracle") {
  testing::Gen g(31);
  for (int inst = 0; inst < 100; ++inst) {
    const PanelDataset raw = testing::random_panel(g, static_cast<std::size_t>(g.integer(1, 40)), inst % 2, 1.0);
    const PanelDataset ds = inst % 3 ? demean_outcomes(raw) : raw;
    Dtr d = random_dtr(g);
    if (inst % 4 == 0) d.outcome_centering = {g.normal(), g.normal()};
    const double p = g.uniform(0.2, 0.8);
    const std::vector<double> gamma{g.uniform(0, 1), g.uniform(0, 1)};
    const double got = empirical_welfare(ds, d, known_propensity(2, p), {gamma});
    CHECK(got == doctest::Approx(welfare_oracle(ds, d, p, gamma)).epsilon(1e-12));
  }
}

TEST_CASE("default alpha") {
  CHECK(default_alpha(1, 0.05, 200) == doctest::Approx(0.10940).epsilon(5e-5));
  CHECK(default_alpha(2, 0.05, 200) == doctest::Approx(std::sqrt(std::log(240.0) / 400.0)));
}

TEST_CASE("budget feasibility uses C + alpha") {
  testing::Gen g(32);
  const PanelDataset ds = testing::random_panel(g, 30);
  const Dtr all = constant_dtr({1, 1});
  BudgetSpec spec{{BudgetRow{{1.0, 0.0}, 0.5}}, 0.0};
  CHECK(budget_lhs(ds, all, spec, 1).lhs == doctest::Approx(1.0));
  CHECK_FALSE(budget_feasible(ds, all, spec));
  spec.alpha_n = 0.5;
  CHECK(budget_feasible(ds, all, spec));
  // Stage-2 share conditions on units whose d1 matched; with g1 = 1 that is
  // the treated-at-stage-1 subsample.
  BudgetSpec s2{{BudgetRow{{0.0, 1.0}, 0.0}}, 0.0};
  const Dtr d10 = constant_dtr({1, 0});
  CHECK(budget_lhs(ds, d10, s2, 1).lhs == 0.0);
}

TEST_CASE("empty conditioning path gives share 0 with a flag") {
  std::vector<Trajectory> trajs{{"a", {0, 1}, {0, 0}, {Eigen::VectorXd(0), Eigen::VectorXd(0)}}};
  const PanelDataset ds(std::move(trajs), {0, 0});
  const auto s = empirical_treated_share(ds, constant_dtr({1, 1}), 2);
  CHECK(s.empty_path);
  CHECK(s.share == 0.0);
  BudgetSpec spec{{BudgetRow{{0.0, 1.0}, 0.5}}, 0.0};
  CHECK(budget_feasible(ds, constant_dtr({1, 1}), spec));
  CHECK_FALSE(budget_feasible(ds, constant_dtr({1, 1}), spec, true));
  const auto rep = welfare_report(ds, constant_dtr({1, 1}), known_propensity(2, 0.5), {{0.0, 1.0}}, spec);
  CHECK_FALSE(rep.warnings.empty());
}

TEST_CASE("welfare input validation") {
  testing::Gen g(33);
  const PanelDataset ds = testing::random_panel(g, 5);
  CHECK_THROWS(empirical_welfare(ds, constant_dtr({1, 1}), known_propensity(2, 0.5), {{1.0}}));
  CHECK_THROWS(empirical_welfare(ds, constant_dtr({1}), known_propensity(2, 0.5), {{0.0, 1.0}}));
  CHECK_THROWS(empirical_welfare(ds, constant_dtr({1, 1}), known_propensity(2, 0.5), {{-1.0, 1.0}}));
}
