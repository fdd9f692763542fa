#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dewm/bitvector.hpp"
#include "dewm/data.hpp"
#include "dewm/policy.hpp"
#include "dewm/propensity.hpp"
#include "dewm/search.hpp"
#include "dewm/welfare.hpp"

namespace dewm {

struct CoordinateAscentOptions {
  int restarts = 20;
  int max_sweeps = 100;
  // A restart stops once a full sweep improves the objective by no more
  // than this.
  double tolerance = 0.0;
};

struct EstimationConfig {
  WelfareWeights weights;
  PolicyClassSpec class_spec;
  std::optional<BudgetSpec> budget;
  // Explicit alpha_n; when empty the budget fit uses default_alpha.
  std::optional<double> alpha;
  double delta = 0.05;
  CoordinateAscentOptions ascent;
  std::uint64_t seed = 0;
  // Strategy A (full product search) runs when prod_t |candidates_t| is at
  // most this.
  std::size_t exhaustive_cap = 1'000'000;
  bool strict_empty_path = false;
  EnumerationOptions enumeration;

  void validate(int T) const;
};

struct FitResult {
  std::string method;
  std::string strategy;
  Dtr dtr;
  double welfare = 0.0;
  std::vector<double> shares;
  std::vector<double> budget_lhs;
  std::optional<double> alpha_n;
  std::vector<std::string> warnings;
  std::vector<std::size_t> candidate_counts;
  int sweeps = 0;
  int restarts = 0;
  // Objective after every accepted coordinate step of the winning restart.
  std::vector<double> trace;
};

std::string metrics_json(const FitResult& r);
void write_fit_result(const FitResult& r, std::ostream& out);
// Reads the DTR part of a FitResult file (the metrics line is ignored).
Dtr read_fit_dtr(std::istream& in);

// Candidate sets and IPW ingredients shared by the DEWM estimators on one
// dataset. `ds` and `pm` must outlive the context.
class EstimationContext {
 public:
  EstimationContext(const PanelDataset& ds, const PropensityModel& pm, const PolicyClassSpec& classes,
                    const EnumerationOptions& options = {});

  const PanelDataset& data() const { return *ds_; }
  const PropensityModel& propensity() const { return *pm_; }
  const PolicyClassSpec& classes() const { return classes_; }
  int stage_count() const { return static_cast<int>(cands_.size()); }
  std::size_t size() const { return ds_->size(); }

  const CandidateSet& candidates(int t) const { return cands_[t - 1]; }
  const BitVector& treated(int t) const { return treated_[t - 1]; }
  double outcome(int t, std::size_t i) const { return y_[t - 1][i]; }
  // Realized clipped propensity e_t(D_it, H_it).
  double propensity(int t, std::size_t i) const { return e_[t - 1][i]; }
  // 1{g_t(H_it) = D_it} for candidate k of stage t.
  BitVector matches(int t, std::size_t k) const;

  Dtr dtr(const std::vector<std::size_t>& choice) const;

 private:
  const PanelDataset* ds_;
  const PropensityModel* pm_;
  PolicyClassSpec classes_;
  std::vector<CandidateSet> cands_;
  std::vector<BitVector> treated_;
  std::vector<std::vector<double>> y_, e_;
};

FitResult fit_backward(const EstimationContext& ctx, const EstimationConfig& cfg);
FitResult fit_backward(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg);

FitResult fit_simultaneous(const EstimationContext& ctx, const EstimationConfig& cfg);
FitResult fit_simultaneous(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg);

FitResult fit_simultaneous_budget(const EstimationContext& ctx, const EstimationConfig& cfg);
FitResult fit_simultaneous_budget(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg);

// sqrt(log(6B/delta) / (2n))
double default_alpha(int B, double delta, std::size_t n);

// Two-stage linear Q-learning baseline. Needs T = 2 and weights (0, 1).
FitResult fit_qlearning(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg);

}  // namespace dewm
