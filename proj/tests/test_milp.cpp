#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dewm/error.hpp"
#include "dewm/estimators.hpp"
#include "dewm/milp.hpp"
#include "helpers.hpp"

using namespace dewm;

namespace {

PolicyClassSpec table1(Intertemporal kind = Intertemporal::None) {
  PolicyClassSpec c;
  c.stages = parse_stage_classes("table1");
  c.intertemporal = kind;
  return c;
}

Dtr random_dtr(testing::Gen& g) {
  Dtr d;
  d.rules = {StageRule::linear(1, {0}, Eigen::Vector2d(g.normal(), g.normal())),
             StageRule::linear(2, {0, 1}, Eigen::Vector3d(g.normal(), g.normal(), g.normal()))};
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("simultaneous MILP objective equals n times empirical welfare") {
  testing::Gen g(51);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 30));
    const PanelDataset ds = demean_outcomes(testing::random_panel(g, n, inst % 2, 2.0));
    const PropensityModel pm = known_propensity(2, g.uniform(0.2, 0.8));
    const WelfareWeights w{{g.uniform(0, 1), g.uniform(0, 1)}};
    const auto model = build_simultaneous_milp(ds, pm, w, table1());
    Dtr d = random_dtr(g);
    if (inst % 2) d.outcome_centering = ds.outcome_means();
    const auto a = milp_assignment(model, ds, table1(), d);
    const double expect = static_cast<double>(n) * empirical_welfare(ds, d, pm, w);
    CHECK(evaluate_objective(model, a) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(violated_rows(model, a, 1e-9).empty());

    // Text round trip preserves the model exactly.
    std::stringstream ss;
    write_lp(model, ss);
    const MilpModel back = read_lp(ss);
    CHECK(evaluate_objective(back, a) == doctest::Approx(expect).epsilon(1e-9));
    REQUIRE(back.rows.size() == model.rows.size());
    for (std::size_t r = 0; r < model.rows.size(); ++r) {
      CHECK(back.rows[r].name == model.rows[r].name);
      CHECK(back.rows[r].rhs == model.rows[r].rhs);
      REQUIRE(back.rows[r].terms.size() == model.rows[r].terms.size());
      for (std::size_t k = 0; k < model.rows[r].terms.size(); ++k)
        CHECK(back.rows[r].terms[k].coef == model.rows[r].terms[k].coef);
    }
    CHECK(violated_rows(back, a, 1e-9).empty());
    CHECK(write_lp(back) == write_lp(model));
  }
}

TEST_CASE("backward MILPs reproduce the stage objectives") {
  testing::Gen g(52);
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 25));
    const PanelDataset ds = demean_outcomes(testing::random_panel(g, n));
    const PropensityModel pm = known_propensity(2, 0.4);
    const WelfareWeights w{{0.3, 1.0}};
    Dtr d = random_dtr(g);
    d.outcome_centering = ds.outcome_means();
    const auto m1 = build_backward_milp(ds, pm, w, table1(), 1);
    CHECK(evaluate_objective(m1, milp_assignment(m1, ds, table1(), d)) ==
          doctest::Approx(static_cast<double>(n) * backward_objective(ds, 2, d[2], {}, pm, w)).epsilon(1e-9));
    const auto m2 = build_backward_milp(ds, pm, w, table1(), 2, d);
    CHECK(evaluate_objective(m2, milp_assignment(m2, ds, table1(), d)) ==
          doctest::Approx(static_cast<double>(n) * backward_objective(ds, 1, d[1], {d[2]}, pm, w)).epsilon(1e-9));
    CHECK_THROWS(build_backward_milp(ds, pm, w, table1(), 2));
  }
}

TEST_CASE("intertemporal and budget rows accept exactly the admissible rules") {
  testing::Gen g(53);
  const PanelDataset ds = demean_outcomes(testing::random_panel(g, 15));
  const PropensityModel pm = known_propensity(2, 0.5);
  const WelfareWeights w{{0.0, 1.0}};
  for (auto kind : {Intertemporal::StartTime, Intertemporal::StopTime, Intertemporal::OneShot}) {
    const auto model = build_simultaneous_milp(ds, pm, w, table1(kind));
    for (int k = 0; k < 30; ++k) {
      Dtr d = random_dtr(g);
      d.outcome_centering = ds.outcome_means();
      bool ok = true;
      for (const auto& tr : ds.trajectories()) ok = ok && check_intertemporal(d, tr, kind, TreatmentPath::Rule).feasible;
      CHECK(violated_rows(model, milp_assignment(model, ds, table1(kind), d)).empty() == ok);
    }
  }
  // Budget rows use unconditional shares: sum_i (K1 z1 + K2 z2) / n <= C + alpha.
  BudgetSpec spec{{BudgetRow{{0.5, 0.5}, 0.4}}, 0.05};
  const auto model = build_simultaneous_milp(ds, pm, w, table1(), spec);
  REQUIRE(model.rows.back().name == "budget_1");
  CHECK(model.rows.back().rhs == doctest::Approx(0.45));
  CHECK(model.rows.back().terms.size() == 2 * ds.size());
}

TEST_CASE("constant classes tie the stage binaries together") {
  testing::Gen g(54);
  const PanelDataset ds = testing::random_panel(g, 6);
  PolicyClassSpec classes = constant_classes(2);
  const auto model = build_simultaneous_milp(ds, known_propensity(2, 0.5), {{0.0, 1.0}}, classes);
  for (auto v : {std::vector<int>{0, 0}, {0, 1}, {1, 0}, {1, 1}}) {
    const Dtr d = constant_dtr(v);
    const auto a = milp_assignment(model, ds, classes, d);
    CHECK(violated_rows(model, a).empty());
    CHECK(evaluate_objective(model, a) ==
          doctest::Approx(6.0 * empirical_welfare(ds, d, known_propensity(2, 0.5), {{0.0, 1.0}})).epsilon(1e-12));
  }
  auto a = milp_assignment(model, ds, classes, constant_dtr({1, 1}));
  a["z1_1"] = 0.0;
  CHECK_FALSE(violated_rows(model, a).empty());
}

TEST_CASE("MILP export rejects other horizons") {
  std::vector<Trajectory> trajs{{"a", {1}, {1.0}, {Eigen::VectorXd(0)}}};
  const PanelDataset ds(std::move(trajs), {0});
  CHECK_THROWS(build_simultaneous_milp(ds, known_propensity(1, 0.5), {{1.0}}, constant_classes(1)));
}

TEST_CASE("LP reader accepts common variations") {
  std::istringstream in(
      "\\ hand written\nMaximize\n obj: 2 x + 3.5 y - z + 1.5\nSubject To\n c1: x + y <= 4\n -x + z >= -2\n"
      " c3: x - y = 0\nBounds\n -1 <= z <= 1\n y >= -3\nBinaries\n x\nEnd\n");
  const auto m = read_lp(in);
  CHECK(m.objective.size() == 3);
  CHECK(m.objective_constant == 1.5);
  REQUIRE(m.rows.size() == 3);
  CHECK(m.rows[1].name == "R1");
  CHECK(m.rows[1].sense == RowSense::GreaterEqual);
  CHECK(m.rows[1].rhs == -2.0);
  CHECK(evaluate_objective(m, {{"x", 1}, {"y", 1}, {"z", 0.5}}) == doctest::Approx(2 + 3.5 - 0.5 + 1.5));
  std::istringstream bad("Maximize\n obj: 2 x +\nSubject To\n c: x <= \nEnd\n");
  CHECK_THROWS(read_lp(bad));
}

TEST_CASE("golden LP for a single observation") {
  // One unit: d1 = 1, y1 = 1, x1 = 2, d2 = 0, y2 = 3; e = 1/2 throughout.
  std::vector<Trajectory> trajs{{"1", {1, 0}, {1.0, 3.0}, {Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd(0)}}};
  const PanelDataset ds(std::move(trajs), {1, 0});
  BudgetSpec budget{{BudgetRow{{0.5, 0.5}, 0.5}}, 0.0};
  const auto model =
      build_simultaneous_milp(ds, known_propensity(2, 0.5), {{0.0, 1.0}}, table1(Intertemporal::StartTime), budget);
  const std::string text = write_lp(model);
  CHECK(text == slurp(std::string(DEWM_TEST_DATA) + "/golden_n1.lp"));
}

TEST_CASE("empty dataset still gives valid LP text") {
  const PanelDataset ds(std::vector<Trajectory>{}, {1, 0});
  const auto model = build_simultaneous_milp(ds, known_propensity(2, 0.5), {{0.0, 1.0}}, table1());
  CHECK(model.rows.empty());
  std::istringstream in(write_lp(model));
  const auto back = read_lp(in);
  CHECK(back.objective.empty());
  CHECK(back.variables.size() == 5);
  CHECK(evaluate_objective(back, {}) == 0.0);
}
