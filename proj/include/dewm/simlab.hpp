#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dewm/data.hpp"
#include "dewm/estimators.hpp"
#include "dewm/policy.hpp"
#include "dewm/propensity.hpp"
#include "dewm/welfare.hpp"

namespace dewm {

enum class DgpId { Dgp1, Dgp2, Dgp3, Remark1 };

// Two-stage outcome model
//   Y1 = phi01 + phi11 X1 + (psi01 + psi11 X1) D1 + U1
//   Y2 = phi02 + phi12 Y1 + (psi02 + psi12 D1 + sum_j psi[j+1,2] Y1^j) D2 + U2
// with X1, U1, U2 ~ N(0,1) and fair-coin treatments. Remark1 is the
// three-stage constant-class example: H1 empty, Y1 = Y2 = 0, and Y3 fixed
// at the conditional mean of its treatment cell (no noise).
struct DgpSpec {
  DgpId id = DgpId::Dgp1;
  std::array<double, 4> stage1{0.5, -1.0, 1.0, 1.5};  // phi01, phi11, psi01, psi11
  std::array<double, 4> stage2{0.5, 0.5, 0.5, 0.5};   // phi02, phi12, psi02, psi12
  std::array<double, 3> poly{0.0, 0.0, 0.0};          // psi22, psi32, psi42
  // Remark1: E[Y3 | d1, d2, d3] at index d1 + 2 d2 + 4 d3.
  std::array<double, 8> remark_means{0.2, 0.3, 0.4, 0.5, 0.0, 0.0, 0.0, 1.0};
  double p_treat = 0.5;

  static DgpSpec make(DgpId id);
  int stage_count() const { return id == DgpId::Remark1 ? 3 : 2; }
  std::vector<int> covariate_dims() const;
  // (0, 1) for the two-stage designs, (0, 0, 1) for Remark1.
  WelfareWeights default_weights() const;
  PropensityModel propensity() const;
  std::string name() const;
};

DgpId parse_dgp(const std::string& text);

PanelDataset generate_dgp(const DgpSpec& spec, std::size_t n, std::uint64_t seed);

// Mean of sum_t gamma_t Y_t over n_eval fresh draws with D_t = g_t(H_t)
// along the simulated path. Rules read outcomes in the DTR's centered units.
double oracle_welfare(const Dtr& dtr, const DgpSpec& spec, std::size_t n_eval, std::uint64_t seed,
                      const std::optional<WelfareWeights>& weights = std::nullopt);

// Per-unit realized welfare (for standard errors).
std::vector<double> oracle_welfare_draws(const Dtr& dtr, const DgpSpec& spec, std::size_t n_eval,
                                         std::uint64_t seed,
                                         const std::optional<WelfareWeights>& weights = std::nullopt);

enum class McEstimator { QLearning, Backward, Simultaneous };
std::string to_string(McEstimator e);
McEstimator parse_estimator(const std::string& text);

struct McOptions {
  std::size_t reps = 100;
  std::size_t n_eval = 3000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool demean_dewm = true;
  bool demean_qlearning = false;
  CoordinateAscentOptions ascent;
  std::size_t exhaustive_cap = 1'000'000;
};

struct McCell {
  McEstimator estimator;
  DgpId dgp;
  std::size_t n = 0;
  std::vector<double> welfare;  // one per replication, in replication order
  std::vector<std::uint64_t> data_seeds, eval_seeds;

  double mean() const;
  double median() const;
  // Sample SD; 0 with a single replication.
  double sd() const;
  bool single_replication() const { return welfare.size() == 1; }
};

struct McReport {
  std::vector<McCell> cells;
  std::uint64_t seed = 0;
  std::size_t reps = 0, n_eval = 0;

  const McCell& cell(McEstimator e, DgpId d, std::size_t n) const;
  std::string to_text() const;
  void write_csv(std::ostream& out) const;
};

// Seed for (dgp, n, rep, stream); stream 0 draws data, 1 draws the
// evaluation sample.
std::uint64_t derive_seed(std::uint64_t master, DgpId dgp, std::size_t n, std::size_t rep, int stream);

// Replication grid: every estimator on every (spec, n) cell with the two-stage
// classes (1, X1) and (1, D1, Y1), gamma = (0, 1).
McReport run_monte_carlo(const std::vector<McEstimator>& estimators, const std::vector<DgpSpec>& specs,
                         const std::vector<std::size_t>& ns, const McOptions& options);

// Stage classes used for the two-stage replication cells.
PolicyClassSpec table1_classes();

}  // namespace dewm
