#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dewm/error.hpp"
#include "dewm/propensity.hpp"
#include "helpers.hpp"

using namespace dewm;

namespace {

// Two-stage panel where D1 ~ Bernoulli(sigmoid(a + b x1)).
PanelDataset logistic_panel(testing::Gen& g, std::size_t n, double a, double b) {
  std::vector<Trajectory> trajs;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = g.normal();
    const double p = 1.0 / (1.0 + std::exp(-(a + b * x)));
    Trajectory tr{std::to_string(i), {g.coin(p), g.coin()}, {g.normal(), g.normal()},
                  {Eigen::VectorXd::Constant(1, x), Eigen::VectorXd(0)}};
    trajs.push_back(std::move(tr));
  }
  return PanelDataset(std::move(trajs), {1, 0});
}

}  // namespace

TEST_CASE("known propensities and clipping") {
  PropensityModel m = known_propensity(2, 0.5);
  const HistoryVector h{1, Eigen::VectorXd::Zero(1)};
  CHECK(propensity_at(m, 1, 1, h) == 0.5);
  CHECK(propensity_at(m, 1, 0, h) == 0.5);
  m = known_propensity(2, 0.999, 0.01);
  CHECK(propensity_at(m, 2, 1, h) == doctest::Approx(0.99));
  CHECK(propensity_at(m, 2, 0, h) == doctest::Approx(0.01));
}

TEST_CASE("known table looks up rounded features") {
  PropensityModel m;
  m.stages = {PropensityStage::known(0.5),
              PropensityStage::known_table({0}, {{{0L}, 0.3}, {{1L}, 0.8}}, 0.5)};
  Eigen::MatrixXd h2(3, 3);
  h2 << 0, 1.0, 2.0, 1, 0.0, 0.0, 1, 5.0, 5.0;
  const auto e = realized_propensities(m, 2, h2, {1, 0, 1});
  CHECK(e[0] == doctest::Approx(0.3));
  CHECK(e[1] == doctest::Approx(0.2));
  CHECK(e[2] == doctest::Approx(0.8));
}

TEST_CASE("logistic fit recovers the generating coefficients") {
  testing::Gen g(21);
  const PanelDataset ds = logistic_panel(g, 40000, -0.4, 0.9);
  LogisticFitTrace trace;
  const auto stage = fit_logistic_stage(ds, 1, {0}, {}, &trace);
  CHECK(stage.beta[0] == doctest::Approx(-0.4).epsilon(0.06));
  CHECK(stage.beta[1] == doctest::Approx(0.9).epsilon(0.06));
  // Newton steps never decrease the likelihood.
  for (std::size_t k = 1; k < trace.log_likelihood.size(); ++k)
    CHECK(trace.log_likelihood[k] >= trace.log_likelihood[k - 1]);
}

TEST_CASE("logistic separation is reported") {
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 20; ++i) {
    const double x = i - 9.5;
    trajs.push_back({std::to_string(i), {x > 0 ? 1 : 0}, {0.0}, {Eigen::VectorXd::Constant(1, x)}});
  }
  const PanelDataset ds(std::move(trajs), {1});
  CHECK_THROWS_AS(fit_logistic_stage(ds, 1, {0}), FitError);

  std::vector<Trajectory> same;
  for (int i = 0; i < 5; ++i) same.push_back({std::to_string(i), {1}, {0.0}, {Eigen::VectorXd::Constant(1, i)}});
  CHECK_THROWS_AS(fit_logistic_stage(PanelDataset(std::move(same), {1}), 1, {0}), FitError);
}

TEST_CASE("propensity model key-value round trip") {
  PropensityModel m;
  m.clip_floor = 0.02;
  Eigen::Vector2d beta(0.1, -0.7);
  m.stages = {PropensityStage::logistic({0}, beta), PropensityStage::known(0.25),
              PropensityStage::known_table({1, 0}, {{{0L, 1L}, 0.4}}, 0.6)};
  std::stringstream ss;
  write_propensity(m, ss);
  const PropensityModel back = read_propensity(ss);
  REQUIRE(back.stage_count() == 3);
  CHECK(back.clip_floor == 0.02);
  CHECK(back.stages[0].beta == beta);
  CHECK(back.stages[1].p1 == 0.25);
  CHECK(back.stages[2].table == m.stages[2].table);
  CHECK(back.stages[2].p1 == 0.6);
}
