#include <doctest.h>

#include <sstream>

#include "dewm/error.hpp"
#include "dewm/estimators.hpp"
#include "dewm/simlab.hpp"
#include "helpers.hpp"

using namespace dewm;

namespace {

EstimationConfig config(const std::string& classes, std::vector<double> gamma = {0.0, 1.0}) {
  EstimationConfig cfg;
  cfg.weights = {std::move(gamma)};
  cfg.class_spec.stages = parse_stage_classes(classes);
  return cfg;
}

Dtr with_centering(Dtr d, const PanelDataset& ds) {
  if (ds.demeaned()) d.outcome_centering = ds.outcome_means();
  return d;
}

// Brute force over the product of candidate sets, scored by the welfare module.
double best_welfare(const EstimationContext& ctx, const EstimationConfig& cfg,
                    const std::optional<BudgetSpec>& budget = {}) {
  double best = -1e300;
  const auto& c1 = ctx.candidates(1);
  const auto& c2 = ctx.candidates(2);
  for (std::size_t a = 0; a < c1.size(); ++a)
    for (std::size_t b = 0; b < c2.size(); ++b) {
      Dtr d = with_centering({{c1.rule(a), c2.rule(b)}, {}}, ctx.data());
      if (budget && !budget_feasible(ctx.data(), d, *budget)) continue;
      if (cfg.class_spec.intertemporal != Intertemporal::None) {
        bool ok = true;
        for (const auto& tr : ctx.data().trajectories())
          ok = ok && check_intertemporal(d, tr, cfg.class_spec.intertemporal, TreatmentPath::Rule).feasible;
        if (!ok) continue;
      }
      best = std::max(best, empirical_welfare(ctx.data(), d, ctx.propensity(), cfg.weights));
    }
  return best;
}

}  // namespace

TEST_CASE("backward induction on the constant-class example") {
  const DgpSpec spec = DgpSpec::make(DgpId::Remark1);
  const PanelDataset ds = generate_dgp(spec, 4000, 5);
  EstimationConfig cfg;
  cfg.weights = spec.default_weights();
  cfg.class_spec = constant_classes(3);
  const auto b = fit_backward(ds, spec.propensity(), cfg);
  const auto s = fit_simultaneous(ds, spec.propensity(), cfg);
  CHECK(b.dtr.same_rules(constant_dtr({1, 1, 0})));
  CHECK(s.dtr.same_rules(constant_dtr({1, 1, 1})));
  CHECK(s.strategy == "exhaustive");
  CHECK(oracle_welfare(b.dtr, spec, 10, 1) == 0.5);
  CHECK(oracle_welfare(s.dtr, spec, 10, 1) == 1.0);
}

TEST_CASE("backward stages maximize the backward objective") {
  testing::Gen g(41);
  for (int inst = 0; inst < 20; ++inst) {
    const PanelDataset raw = testing::random_panel(g, static_cast<std::size_t>(g.integer(3, 30)), inst % 2, 1.0);
    const PanelDataset ds = demean_outcomes(raw);
    const PropensityModel pm = known_propensity(2, 0.5);
    const auto cfg = config("table1", {g.uniform(0, 1), 1.0});
    const EstimationContext ctx(ds, pm, cfg.class_spec);
    const auto fit = fit_backward(ctx, cfg);
    // Stage 2 against every candidate.
    const double v2 = backward_objective(ds, 2, fit.dtr[2], {}, pm, cfg.weights);
    for (std::size_t k = 0; k < ctx.candidates(2).size(); ++k)
      REQUIRE(backward_objective(ds, 2, ctx.candidates(2).rule(k), {}, pm, cfg.weights) <= v2 + 1e-12);
    const double v1 = backward_objective(ds, 1, fit.dtr[1], {fit.dtr[2]}, pm, cfg.weights);
    for (std::size_t k = 0; k < ctx.candidates(1).size(); ++k)
      REQUIRE(backward_objective(ds, 1, ctx.candidates(1).rule(k), {fit.dtr[2]}, pm, cfg.weights) <= v1 + 1e-12);
    CHECK(fit.welfare == doctest::Approx(empirical_welfare(ds, fit.dtr, pm, cfg.weights)).epsilon(1e-12));
  }
}

TEST_CASE("exhaustive simultaneous search attains the brute-force optimum") {
  testing::Gen g(42);
  for (int inst = 0; inst < 15; ++inst) {
    const PanelDataset ds = demean_outcomes(testing::random_panel(g, static_cast<std::size_t>(g.integer(2, 14)), inst % 2));
    const PropensityModel pm = known_propensity(2, g.uniform(0.3, 0.7));
    auto cfg = config("table1", {g.uniform(0, 1), 1.0});
    if (inst % 3 == 1) cfg.class_spec.intertemporal = Intertemporal::StartTime;
    if (inst % 3 == 2) cfg.class_spec.intertemporal = Intertemporal::OneShot;
    const EstimationContext ctx(ds, pm, cfg.class_spec);
    const auto fit = fit_simultaneous(ctx, cfg);
    CHECK(fit.strategy == "exhaustive");
    CHECK(fit.welfare == doctest::Approx(best_welfare(ctx, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("coordinate ascent is monotone and coordinate-wise optimal") {
  testing::Gen g(43);
  for (int inst = 0; inst < 8; ++inst) {
    const PanelDataset ds = demean_outcomes(testing::random_panel(g, 40));
    const PropensityModel pm = known_propensity(2, 0.5);
    auto cfg = config("table1");
    cfg.exhaustive_cap = 0;
    cfg.ascent.restarts = 3;
    cfg.seed = static_cast<std::uint64_t>(inst);
    const EstimationContext ctx(ds, pm, cfg.class_spec);
    const auto fit = fit_simultaneous(ctx, cfg);
    CHECK(fit.strategy == "coordinate-ascent");
    for (std::size_t k = 1; k < fit.trace.size(); ++k) CHECK(fit.trace[k] >= fit.trace[k - 1]);
    for (int t = 1; t <= 2; ++t)
      for (std::size_t k = 0; k < ctx.candidates(t).size(); ++k) {
        Dtr d = fit.dtr;
        d.rules[t - 1] = ctx.candidates(t).rule(k);
        REQUIRE(empirical_welfare(ds, d, pm, cfg.weights) <= fit.welfare + 1e-9);
      }
    CHECK(fit.welfare <= best_welfare(ctx, cfg) + 1e-12);
    // Same seed, same answer.
    CHECK(fit_simultaneous(ctx, cfg).dtr.same_rules(fit.dtr));
  }
}

TEST_CASE("budget-constrained fit is feasible and optimal among feasible rules") {
  testing::Gen g(44);
  for (int inst = 0; inst < 10; ++inst) {
    const PanelDataset ds = demean_outcomes(testing::random_panel(g, static_cast<std::size_t>(g.integer(4, 14))));
    const PropensityModel pm = known_propensity(2, 0.5);
    auto cfg = config("table1");
    cfg.budget = BudgetSpec{{BudgetRow{{0.5, 0.5}, g.uniform(0.1, 0.6)}}, 0.0};
    cfg.alpha = 0.0;
    const EstimationContext ctx(ds, pm, cfg.class_spec);
    const auto fit = fit_simultaneous_budget(ctx, cfg);
    BudgetSpec spec = *cfg.budget;
    CHECK(budget_feasible(ds, fit.dtr, spec));
    CHECK(fit.welfare == doctest::Approx(best_welfare(ctx, cfg, spec)).epsilon(1e-12));
    REQUIRE(fit.alpha_n);
    CHECK(*fit.alpha_n == 0.0);
  }
}

TEST_CASE("estimator argument checks") {
  testing::Gen g(45);
  const PanelDataset ds = testing::random_panel(g, 10);
  const PropensityModel pm = known_propensity(2, 0.5);
  auto cfg = config("table1");
  cfg.budget = BudgetSpec{{BudgetRow{{1.0, 0.0}, 0.5}}, 0.0};
  CHECK_THROWS(fit_backward(ds, pm, cfg));
  CHECK_THROWS(fit_simultaneous(ds, pm, cfg));
  auto bad = config("table1", {1.0});
  CHECK_THROWS_AS(fit_backward(ds, pm, bad), DimensionError);
  CHECK_THROWS(fit_qlearning(ds, pm, config("table1", {0.5, 1.0})));
  auto neg = config("table1");
  neg.delta = 1.5;
  CHECK_THROWS(fit_backward(ds, pm, neg));
}

TEST_CASE("Q-learning recovers the always-treat stage-2 rule under DGP1") {
  const DgpSpec spec = DgpSpec::make(DgpId::Dgp1);
  const PanelDataset ds = generate_dgp(spec, 20000, 9);
  const auto fit = fit_qlearning(ds, spec.propensity(), config("table1"));
  // Stage-2 effect 0.5 + 0.5 d1 is positive for every history.
  const auto h2 = ds.history_matrix(2);
  for (Eigen::Index i = 0; i < h2.rows(); ++i) REQUIRE(fit.dtr[2](h2.row(i)) == 1);
  // Stage-1 coefficients close to the population regression.
  CHECK(fit.dtr[1].selector == std::vector<int>{0});
}

TEST_CASE("fit results round trip through the key-value format") {
  testing::Gen g(46);
  const PanelDataset ds = demean_outcomes(testing::random_panel(g, 12));
  const auto fit = fit_backward(ds, known_propensity(2, 0.5), config("table1"));
  std::stringstream ss;
  write_fit_result(fit, ss);
  CHECK(ss.str().find("metrics = {") != std::string::npos);
  const Dtr back = read_fit_dtr(ss);
  CHECK(back.same_rules(fit.dtr));
  CHECK(back.outcome_centering == fit.dtr.outcome_centering);
}

TEST_CASE("demeaning does not change the fitted rules on shifted outcomes") {
  testing::Gen g(47);
  const PanelDataset ds = testing::random_panel(g, 20);
  const PropensityModel pm = known_propensity(2, 0.5);
  const auto cfg = config("table1");
  const auto base = fit_simultaneous(demean_outcomes(ds), pm, cfg);
  for (double c : {-10.0, 3.0, 100.0}) {
    const auto shifted = fit_simultaneous(demean_outcomes(shift_outcomes(ds, c)), pm, cfg);
    const auto h2 = ds.history_matrix(2);
    // Compare assignments in raw units rather than coefficients.
    for (Eigen::Index i = 0; i < h2.rows(); ++i) {
      Eigen::VectorXd hs = h2.row(i).transpose();
      hs[1] += c;
      REQUIRE(apply_rule(base.dtr[2], center_history(base.dtr, {2, h2.row(i).transpose()})) ==
              apply_rule(shifted.dtr[2], center_history(shifted.dtr, {2, hs})));
    }
  }
}
