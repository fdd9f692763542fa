#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "dewm/bitvector.hpp"
#include "dewm/data.hpp"
#include "dewm/policy.hpp"

namespace dewm {

// Finite set of stage rules that realizes every dichotomy of the data points
// reachable by the stage's policy class. Each candidate stores its induced
// assignment over the n points; no two candidates share one.
class CandidateSet {
 public:
  enum class Provenance { Constants, HyperplaneEnumeration };

  CandidateSet(int stage, Provenance provenance, std::size_t dimension, std::size_t point_count);

  int stage() const { return stage_; }
  Provenance provenance() const { return provenance_; }
  std::size_t dimension() const { return dimension_; }
  std::size_t point_count() const { return point_count_; }
  std::size_t size() const { return dichotomies_.size(); }

  StageRule rule(std::size_t k) const;
  const BitVector& dichotomy(std::size_t k) const { return dichotomies_[k]; }

  // sum_i w_i * rule_k(H_i) for every candidate k.
  std::vector<double> scores(std::span<const double> weights) const;

  // Appends a candidate unless its dichotomy is already present. `reference`
  // names an earlier candidate whose dichotomy is close, used to
  // difference-encode the new one (-1 for none). Returns the index holding
  // this dichotomy.
  std::size_t add_constant(int value, BitVector dichotomy);
  std::size_t add_linear(std::vector<int> selector, const Eigen::VectorXd& beta, BitVector dichotomy,
                         std::int64_t reference);

  // Index of the candidate with this dichotomy, or -1.
  std::int64_t find(const BitVector& dichotomy) const;

 private:
  // Returns (index, inserted).
  std::pair<std::size_t, bool> insert(BitVector dichotomy, std::int64_t reference);
  void grow_table();

  int stage_;
  Provenance provenance_;
  std::size_t dimension_;
  std::size_t point_count_;
  std::vector<int> selector_;
  std::vector<std::int8_t> constant_value_;  // -1 for linear candidates
  std::vector<double> betas_;                // (dimension + 1) per linear candidate
  std::vector<std::size_t> beta_offset_;
  std::vector<BitVector> dichotomies_;
  // Difference encoding: score(k) = score(ref[k]) + sum over diff entries.
  std::vector<std::int64_t> reference_;
  std::vector<std::uint32_t> diff_begin_;
  std::vector<std::uint32_t> diff_;  // point index << 1 | (1 if the bit is cleared)
  std::vector<std::size_t> hashes_;
  std::vector<std::int64_t> table_;  // open addressing over candidate indices
};

struct EnumerationOptions {
  // Boundary perturbation scale relative to max(1, max |feature|).
  double tie_scale = 1e-9;
  // Upper bound on the number of point subsets examined.
  std::size_t max_subsets = 50'000'000;
};

// `features` is n x p: the selected history features for one stage.
CandidateSet enumerate_candidates(const Eigen::MatrixXd& features, const StageClass& cls, int stage,
                                  const EnumerationOptions& options = {});

// Convenience: selects the class's features from the stage-t histories of `ds`.
CandidateSet stage_candidates(const PanelDataset& ds, int t, const StageClass& cls,
                              const EnumerationOptions& options = {});

struct WeightedArgmax {
  std::size_t index = 0;
  StageRule rule;
  double value = 0.0;
};

using CandidatePredicate = std::function<bool(std::size_t)>;

// Feasible candidate maximizing sum_i w_i rule(H_i); ties (within 1e-12 of
// sum |w_i|) go to the lowest index. Throws InfeasibleError when no
// candidate passes `feasible`.
WeightedArgmax argmax_weighted_rule(const CandidateSet& cands, std::span<const double> weights,
                                    const CandidatePredicate& feasible = {});

// Same selection given scores from cands.scores(weights).
WeightedArgmax argmax_from_scores(const CandidateSet& cands, std::span<const double> scores,
                                  std::span<const double> weights, const CandidatePredicate& feasible = {});

double dichotomy_value(const BitVector& dichotomy, std::span<const double> weights);

}  // namespace dewm
