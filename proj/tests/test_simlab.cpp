#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "dewm/error.hpp"
#include "dewm/simlab.hpp"

using namespace dewm;

namespace {

// E[Y2] under constant treatments, from Gaussian moments of Y1.
double constant_rule_mean(const DgpSpec& s, int d1, int d2) {
  const double m = s.stage1[0] + s.stage1[2] * d1;
  const double b = s.stage1[1] + s.stage1[3] * d1;
  const double v = b * b + 1.0;
  const double ey2 = m * m + v, ey3 = m * m * m + 3 * m * v;
  const double effect = s.stage2[2] + s.stage2[3] * d1 + s.poly[0] * m + s.poly[1] * ey2 + s.poly[2] * ey3;
  return s.stage2[0] + s.stage2[1] * m + d2 * effect;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double se(const std::vector<double>& v) {
  const double mu = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("DGP1 conditional means of the first outcome") {
  const auto spec = DgpSpec::make(DgpId::Dgp1);
  const PanelDataset ds = generate_dgp(spec, 100000, 3);
  double s[2] = {0, 0};
  int c[2] = {0, 0};
  for (const auto& tr : ds.trajectories()) {
    s[tr.treatments[0]] += tr.outcomes[0];
    ++c[tr.treatments[0]];
  }
  CHECK(s[1] / c[1] == doctest::Approx(1.5).epsilon(0.02));
  CHECK(s[0] / c[0] == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(c[1] - 50000) < 4 * 158);
  CHECK(ds.covariate_dims() == std::vector<int>{1, 0});
}

TEST_CASE("generation is deterministic in the seed") {
  const auto spec = DgpSpec::make(DgpId::Dgp3);
  const PanelDataset a = generate_dgp(spec, 50, 11), b = generate_dgp(spec, 50, 11), c = generate_dgp(spec, 50, 12);
  CHECK(a.history_matrix(2) == b.history_matrix(2));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.trajectories()[i].outcomes == b.trajectories()[i].outcomes);
  CHECK_FALSE(a.history_matrix(2) == c.history_matrix(2));
}

TEST_CASE("oracle welfare of constant rules matches the analytic mean") {
  for (auto id : {DgpId::Dgp1, DgpId::Dgp2, DgpId::Dgp3}) {
    const auto spec = DgpSpec::make(id);
    for (int d1 = 0; d1 <= 1; ++d1)
      for (int d2 = 0; d2 <= 1; ++d2) {
        const auto draws = oracle_welfare_draws(constant_dtr({d1, d2}), spec, 100000, 7);
        CHECK(std::abs(mean(draws) - constant_rule_mean(spec, d1, d2)) < 4 * se(draws));
      }
  }
  CHECK(constant_rule_mean(DgpSpec::make(DgpId::Dgp1), 1, 1) == doctest::Approx(2.25));
}

TEST_CASE("constant-class example has exact oracle values") {
  const auto spec = DgpSpec::make(DgpId::Remark1);
  CHECK(oracle_welfare(constant_dtr({1, 1, 0}), spec, 100, 1) == 0.5);
  CHECK(oracle_welfare(constant_dtr({1, 1, 1}), spec, 100, 1) == 1.0);
  CHECK(oracle_welfare(constant_dtr({0, 0, 0}), spec, 100, 1) == doctest::Approx(0.2));
  CHECK(oracle_welfare(constant_dtr({1, 1, 1}), spec, 100, 1, WelfareWeights{{1.0, 1.0, 0.0}}) == 0.0);
  const PanelDataset ds = generate_dgp(spec, 800, 2);
  for (const auto& tr : ds.trajectories()) {
    const int cell = tr.treatments[0] + 2 * tr.treatments[1] + 4 * tr.treatments[2];
    REQUIRE(tr.outcomes[2] == spec.remark_means[static_cast<std::size_t>(cell)]);
  }
}

TEST_CASE("zero weights give zero welfare") {
  const auto spec = DgpSpec::make(DgpId::Dgp2);
  CHECK(oracle_welfare(constant_dtr({1, 0}), spec, 500, 4, WelfareWeights{{0.0, 0.0}}) == 0.0);
}

TEST_CASE("seed derivation separates streams and cells") {
  const auto a = derive_seed(1, DgpId::Dgp1, 200, 0, 0);
  CHECK(a == derive_seed(1, DgpId::Dgp1, 200, 0, 0));
  CHECK(a != derive_seed(1, DgpId::Dgp1, 200, 0, 1));
  CHECK(a != derive_seed(1, DgpId::Dgp2, 200, 0, 0));
  CHECK(a != derive_seed(1, DgpId::Dgp1, 400, 0, 0));
  CHECK(a != derive_seed(1, DgpId::Dgp1, 200, 1, 0));
  CHECK(a != derive_seed(2, DgpId::Dgp1, 200, 0, 0));
}

TEST_CASE("Monte Carlo reports are reproducible and thread-count independent") {
  McOptions opt;
  opt.reps = 2;
  opt.n_eval = 400;
  opt.seed = 9;
  const std::vector<McEstimator> est{McEstimator::QLearning, McEstimator::Backward, McEstimator::Simultaneous};
  const std::vector<DgpSpec> specs{DgpSpec::make(DgpId::Dgp1), DgpSpec::make(DgpId::Dgp3)};
  const auto r1 = run_monte_carlo(est, specs, {60}, opt);
  opt.threads = 3;
  const auto r2 = run_monte_carlo(est, specs, {60}, opt);
  CHECK(r1.to_text() == r2.to_text());
  std::ostringstream c1, c2;
  r1.write_csv(c1);
  r2.write_csv(c2);
  CHECK(c1.str() == c2.str());
  CHECK(c1.str().rfind("estimator,dgp,n,rep,data_seed,eval_seed,welfare\n", 0) == 0);
  CHECK(r1.cells.size() == 6);
  const auto& cell = r1.cell(McEstimator::Backward, DgpId::Dgp3, 60);
  CHECK(cell.welfare.size() == 2);
  CHECK(cell.data_seeds[1] == derive_seed(9, DgpId::Dgp3, 60, 1, 0));
  CHECK_THROWS(r1.cell(McEstimator::Backward, DgpId::Dgp2, 60));
}

TEST_CASE("single replication reports zero spread with a note") {
  McOptions opt;
  opt.reps = 1;
  opt.n_eval = 200;
  const auto r = run_monte_carlo({McEstimator::QLearning}, {DgpSpec::make(DgpId::Dgp1)}, {50}, opt);
  const auto& cell = r.cells.at(0);
  CHECK(cell.single_replication());
  CHECK(cell.sd() == 0.0);
  CHECK(cell.median() == cell.mean());
  CHECK(r.to_text().find("single replication") != std::string::npos);
}

TEST_CASE("DGP and estimator names parse") {
  CHECK(parse_dgp("1") == DgpId::Dgp1);
  CHECK(parse_dgp("dgp3") == DgpId::Dgp3);
  CHECK(parse_dgp("remark1") == DgpId::Remark1);
  CHECK_THROWS(parse_dgp("7"));
  CHECK(parse_estimator(to_string(McEstimator::Simultaneous)) == McEstimator::Simultaneous);
  CHECK_THROWS(parse_estimator("lasso"));
}
