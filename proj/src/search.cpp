#include "dewm/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "dewm/error.hpp"

namespace dewm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

CandidateSet::CandidateSet(int stage, Provenance provenance, std::size_t dimension, std::size_t point_count)
    : stage_(stage), provenance_(provenance), dimension_(dimension), point_count_(point_count) {
  diff_begin_.push_back(0);
  table_.assign(64, -1);
}

StageRule CandidateSet::rule(std::size_t k) const {
  if (constant_value_[k] >= 0) return StageRule::constant(stage_, constant_value_[k]);
  const double* b = betas_.data() + beta_offset_[k];
  return StageRule::linear(stage_, selector_,
                           Eigen::Map<const VectorXd>(b, static_cast<Index>(dimension_) + 1));
}

void CandidateSet::grow_table() {
  std::vector<std::int64_t> next(table_.size() * 2, -1);
  const std::size_t mask = next.size() - 1;
  for (std::size_t k = 0; k < dichotomies_.size(); ++k) {
    std::size_t slot = hashes_[k] & mask;
    while (next[slot] >= 0) slot = (slot + 1) & mask;
    next[slot] = static_cast<std::int64_t>(k);
  }
  table_ = std::move(next);
}

std::int64_t CandidateSet::find(const BitVector& dichotomy) const {
  const std::size_t h = dichotomy.hash();
  const std::size_t mask = table_.size() - 1;
  for (std::size_t slot = h & mask; table_[slot] >= 0; slot = (slot + 1) & mask) {
    const auto k = static_cast<std::size_t>(table_[slot]);
    if (hashes_[k] == h && dichotomies_[k] == dichotomy) return table_[slot];
  }
  return -1;
}

std::pair<std::size_t, bool> CandidateSet::insert(BitVector dichotomy, std::int64_t reference) {
  if (dichotomy.size() != point_count_) throw DimensionError("dichotomy length differs from point count");
  const std::size_t h = dichotomy.hash();
  std::size_t mask = table_.size() - 1;
  std::size_t slot = h & mask;
  for (; table_[slot] >= 0; slot = (slot + 1) & mask) {
    const auto k = static_cast<std::size_t>(table_[slot]);
    if (hashes_[k] == h && dichotomies_[k] == dichotomy) return {k, false};
  }
  const std::size_t idx = dichotomies_.size();
  table_[slot] = static_cast<std::int64_t>(idx);

  std::int64_t ref = -1;
  if (reference >= 0) {
    const BitVector diff = dichotomy ^ dichotomies_[static_cast<std::size_t>(reference)];
    if (diff.count() < dichotomy.count()) {
      ref = reference;
      diff.for_each_set([&](std::size_t i) {
        diff_.push_back(static_cast<std::uint32_t>(i << 1) | (dichotomy.test(i) ? 0u : 1u));
      });
    }
  }
  reference_.push_back(ref);
  diff_begin_.push_back(static_cast<std::uint32_t>(diff_.size()));
  hashes_.push_back(h);
  dichotomies_.push_back(std::move(dichotomy));
  if (2 * dichotomies_.size() > table_.size()) grow_table();
  return {idx, true};
}

std::size_t CandidateSet::add_constant(int value, BitVector dichotomy) {
  const auto [idx, inserted] = insert(std::move(dichotomy), -1);
  if (inserted) {
    constant_value_.push_back(static_cast<std::int8_t>(value ? 1 : 0));
    beta_offset_.push_back(0);
  }
  return idx;
}

std::size_t CandidateSet::add_linear(std::vector<int> selector, const VectorXd& beta, BitVector dichotomy,
                                     std::int64_t reference) {
  if (beta.size() != static_cast<Index>(dimension_) + 1) throw DimensionError("candidate beta has wrong length");
  if (selector_.empty()) selector_ = std::move(selector);
  const auto [idx, inserted] = insert(std::move(dichotomy), reference);
  if (inserted) {
    constant_value_.push_back(-1);
    beta_offset_.push_back(betas_.size());
    betas_.insert(betas_.end(), beta.data(), beta.data() + beta.size());
  }
  return idx;
}

std::vector<double> CandidateSet::scores(std::span<const double> weights) const {
  if (weights.size() != point_count_)
    throw DimensionError("weights have " + std::to_string(weights.size()) + " entries, expected " +
                         std::to_string(point_count_));
  std::vector<double> out(size());
  for (std::size_t k = 0; k < size(); ++k) {
    double s = 0.0;
    if (reference_[k] < 0) {
      dichotomies_[k].for_each_set([&](std::size_t i) { s += weights[i]; });
    } else {
      s = out[static_cast<std::size_t>(reference_[k])];
      for (std::uint32_t e = diff_begin_[k]; e < diff_begin_[k + 1]; ++e) {
        const std::uint32_t entry = diff_[e];
        s += (entry & 1u) ? -weights[entry >> 1] : weights[entry >> 1];
      }
    }
    out[k] = s;
  }
  return out;
}

double dichotomy_value(const BitVector& dichotomy, std::span<const double> weights) {
  double s = 0.0;
  dichotomy.for_each_set([&](std::size_t i) { s += weights[i]; });
  return s;
}

namespace {

constexpr double kTightRelative = 1e-12;

template <typename F>
void for_each_combination(int m, int k, F&& f) {
  if (k > m) return;
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    f(idx);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j) - 1] + 1;
  }
}

double binomial(double m, int k) {
  double c = 1.0;
  for (int j = 0; j < k; ++j) c = c * (m - j) / (j + 1);
  return c;
}

MatrixXd rows_of(const MatrixXd& V, const std::vector<int>& idx) {
  MatrixXd M(static_cast<Index>(idx.size()), V.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) M.row(static_cast<Index>(j)) = V.row(idx[j]);
  return M;
}

// Orthonormal basis (q x (q-1)) of the complement of b.
MatrixXd orthogonal_complement(const VectorXd& b) {
  const Index q = b.size();
  const MatrixXd bm = b;
  Eigen::HouseholderQR<MatrixXd> qr(bm);
  const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(q, q);
  return Q.rightCols(q - 1);
}

// One direction beta per open cell of the central arrangement
// {beta : v_k . beta = 0}: together they realize every strict sign pattern
// over the nonzero rows of V. Each cell's closure has an extreme ray lying
// on q-1 independent hyperplanes; the cell is reached by perturbing that ray
// inside the cell of the lower-dimensional arrangement of its tight rows.
std::vector<VectorXd> cell_representatives(const MatrixXd& V) {
  const Index q = V.cols();
  if (q == 0) return {VectorXd()};
  double max_norm = 0.0;
  for (Index k = 0; k < V.rows(); ++k) max_norm = std::max(max_norm, V.row(k).norm());
  std::vector<int> keep;
  for (Index k = 0; k < V.rows(); ++k)
    if (V.row(k).norm() > 1e-12 * max_norm) keep.push_back(static_cast<int>(k));
  if (keep.empty()) return {VectorXd::Zero(q)};
  const MatrixXd W = rows_of(V, keep);

  Eigen::JacobiSVD<MatrixXd> svd(W, Eigen::ComputeFullV);
  svd.setThreshold(1e-10);
  const Index r = svd.rank();
  if (r < q) {
    const MatrixXd B = svd.matrixV().leftCols(r);
    std::vector<VectorXd> out;
    for (const auto& u : cell_representatives(W * B)) out.push_back(B * u);
    return out;
  }
  if (q == 1) return {VectorXd::Constant(1, 1.0), VectorXd::Constant(1, -1.0)};

  const Index m = W.rows();
  double vmax = 0.0;
  VectorXd l1(m);
  for (Index k = 0; k < m; ++k) {
    vmax = std::max(vmax, W.row(k).norm());
    l1[k] = W.row(k).lpNorm<1>();
  }
  std::vector<VectorXd> out;
  std::set<std::string> patterns;
  std::set<std::vector<int>> seen_tight;
  for_each_combination(static_cast<int>(m), static_cast<int>(q - 1), [&](const std::vector<int>& S) {
    Eigen::FullPivLU<MatrixXd> lu(rows_of(W, S));
    if (lu.rank() != q - 1) return;
    const VectorXd b0 = lu.kernel().col(0).normalized();
    const VectorXd s = W * b0;
    std::vector<int> tight;
    double margin = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < m; ++k) {
      const bool in_s = std::find(S.begin(), S.end(), static_cast<int>(k)) != S.end();
      if (in_s || std::abs(s[k]) <= kTightRelative * l1[k])
        tight.push_back(static_cast<int>(k));
      else
        margin = std::min(margin, std::abs(s[k]));
    }
    if (!seen_tight.insert(tight).second) return;
    const MatrixXd Qp = orthogonal_complement(b0);
    for (const auto& u : cell_representatives(rows_of(W, tight) * Qp)) {
      const VectorXd d = Qp * u;
      const double nd = d.norm();
      const double eps = nd > 0.0 ? std::min(1.0 / nd, 0.5 * margin / (vmax * nd)) : 0.0;
      for (double o : {1.0, -1.0}) {
        const VectorXd beta = o * b0 + eps * d;
        const VectorXd sb = W * beta;
        std::string key(static_cast<std::size_t>(m), '0');
        for (Index k = 0; k < m; ++k) key[static_cast<std::size_t>(k)] = sb[k] > 0 ? '+' : (sb[k] < 0 ? '-' : '0');
        if (patterns.insert(key).second) out.push_back(beta);
      }
    }
  });
  return out;
}

class Enumerator {
 public:
  Enumerator(const MatrixXd& features, const StageClass& cls, int stage, const EnumerationOptions& options)
      : F_(features),
        cls_(cls),
        n_(features.rows()),
        p_(features.cols()),
        q_(p_ + 1),
        out_(stage, CandidateSet::Provenance::HyperplaneEnumeration, static_cast<std::size_t>(p_),
             static_cast<std::size_t>(n_)),
        options_(options) {
    for (Index j = 0; j < q_; ++j)
      if (cls.sign(static_cast<std::size_t>(j)) != SignConstraint::Free) constrained_.push_back(j);
    m_ = n_ + static_cast<Index>(constrained_.size());
    V_.resize(m_, q_);
    V_.topLeftCorner(n_, 1).setOnes();
    V_.topRightCorner(n_, p_) = F_;
    V_.bottomRows(m_ - n_).setZero();
    for (std::size_t c = 0; c < constrained_.size(); ++c) V_(n_ + static_cast<Index>(c), constrained_[c]) = 1.0;
    l1_.resize(m_);
    vmax_ = 0.0;
    for (Index k = 0; k < m_; ++k) {
      l1_[k] = V_.row(k).lpNorm<1>();
      vmax_ = std::max(vmax_, V_.row(k).norm());
    }
    const double scale = n_ > 0 && p_ > 0 ? F_.cwiseAbs().maxCoeff() : 0.0;
    eps_cap_ = options.tie_scale * std::max(1.0, scale);
    s_.resize(m_);
    pos_ = BitVector(static_cast<std::size_t>(n_));
    neg_ = BitVector(static_cast<std::size_t>(n_));
  }

  CandidateSet run() {
    BitVector none(static_cast<std::size_t>(n_));
    BitVector all = ~none;
    if (cls_.admits(StageRule::constant(out_.stage(), 0))) out_.add_constant(0, none);
    if (cls_.admits(StageRule::constant(out_.stage(), 1))) out_.add_constant(1, all);

    const double subsets = binomial(static_cast<double>(m_), static_cast<int>(p_));
    if (subsets > static_cast<double>(options_.max_subsets))
      throw Error("linear class with p=" + std::to_string(p_) + " over n=" + std::to_string(n_) +
                  " points needs about " + std::to_string(static_cast<long long>(subsets)) +
                  " subsets, above the enumeration budget; export the problem as a MILP instead");

    Eigen::FullPivLU<MatrixXd> lu(V_);
    if (lu.rank() < q_) {
      degenerate_all();
    } else {
      visit_subsets([&](const std::vector<int>& S) { process(S); });
    }
    return std::move(out_);
  }

 private:
  template <typename F>
  void visit_subsets(F&& f) {
    std::vector<int> S(static_cast<std::size_t>(p_));
    if (p_ == 1) {
      std::vector<int> order(static_cast<std::size_t>(m_));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.begin() + n_, [&](int a, int b) { return F_(a, 0) < F_(b, 0); });
      for (int r : order) {
        S[0] = r;
        f(S);
      }
      return;
    }
    if (p_ == 2) {
      // Rotate a line about each pivot so consecutive hyperplanes differ in
      // few points.
      std::vector<std::pair<double, int>> partners;
      for (Index i = 0; i < n_; ++i) {
        partners.clear();
        for (Index j = i + 1; j < n_; ++j)
          partners.emplace_back(std::atan2(F_(j, 1) - F_(i, 1), F_(j, 0) - F_(i, 0)), static_cast<int>(j));
        std::stable_sort(partners.begin(), partners.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& pr : partners) {
          S[0] = static_cast<int>(i);
          S[1] = pr.second;
          f(S);
        }
      }
      for (Index a = 0; a < m_; ++a)
        for (Index b = std::max(a + 1, n_); b < m_; ++b) {
          S[0] = static_cast<int>(a);
          S[1] = static_cast<int>(b);
          f(S);
        }
      return;
    }
    for_each_combination(static_cast<int>(m_), static_cast<int>(p_), f);
  }

  bool kernel(const std::vector<int>& S, VectorXd& beta) const {
    if (p_ == 1) {
      const auto r = V_.row(S[0]);
      beta.resize(2);
      beta << -r[1], r[0];
    } else if (p_ == 2) {
      const Eigen::Vector3d a = V_.row(S[0]).transpose();
      const Eigen::Vector3d b = V_.row(S[1]).transpose();
      const Eigen::Vector3d c = a.cross(b);
      if (c.norm() <= 1e-12 * a.norm() * b.norm()) return false;
      beta = c;
    } else {
      Eigen::FullPivLU<MatrixXd> lu(rows_of(V_, S));
      if (lu.rank() != p_) return false;
      beta = lu.kernel().col(0);
    }
    const double scale = beta.lpNorm<Eigen::Infinity>();
    if (!(scale > 0.0)) return false;
    beta /= scale;
    return true;
  }

  void process(const std::vector<int>& S) {
    VectorXd b0;
    if (!kernel(S, b0)) return;
    s_.noalias() = V_ * b0;
    tight_.clear();
    double margin = std::numeric_limits<double>::infinity();
    std::fill(pos_.words().begin(), pos_.words().end(), 0);
    std::fill(neg_.words().begin(), neg_.words().end(), 0);
    for (Index k = 0; k < m_; ++k) {
      const bool in_s = std::find(S.begin(), S.end(), static_cast<int>(k)) != S.end();
      if (in_s || std::abs(s_[k]) <= kTightRelative * l1_[k]) {
        tight_.push_back(static_cast<int>(k));
        continue;
      }
      margin = std::min(margin, std::abs(s_[k]));
      if (k < n_) {
        if (s_[k] > 0)
          pos_.set(static_cast<std::size_t>(k));
        else
          neg_.set(static_cast<std::size_t>(k));
      }
    }

    if (static_cast<Index>(tight_.size()) > p_) {
      if (!seen_tight_.insert(tight_).second) return;
      const MatrixXd Qp = orthogonal_complement(b0);
      const auto reps = cell_representatives(rows_of(V_, tight_) * Qp);
      for (int o : {1, -1})
        for (const auto& u : reps) {
          const VectorXd d = Qp * u;
          const double nd = d.norm();
          const double eps = nd > 0.0 ? std::min(eps_cap_ / nd, 0.5 * margin / (vmax_ * nd)) : 0.0;
          emit(o * b0 + eps * d, o);
        }
      return;
    }

    // Independent tight rows: min-norm perturbations hitting +-1 on each.
    const MatrixXd M = rows_of(V_, S);
    const MatrixXd D = M.transpose() * (M * M.transpose()).inverse();
    double dnorm = 0.0;
    for (Index j = 0; j < p_; ++j) dnorm += D.col(j).norm();
    const double eps = std::min(eps_cap_, 0.5 * margin / (vmax_ * dnorm));
    VectorXd beta(q_);
    for (int o : {1, -1})
      for (unsigned mask = 0; mask < (1u << p_); ++mask) {
        beta = o * b0;
        for (Index j = 0; j < p_; ++j) beta += ((mask >> j) & 1u ? eps : -eps) * D.col(j);
        emit(beta, o);
      }
  }

  bool sign_ok(const VectorXd& beta) const {
    for (Index j : constrained_) {
      const auto s = cls_.sign(static_cast<std::size_t>(j));
      if (s == SignConstraint::NonNeg && beta[j] < 0.0) return false;
      if (s == SignConstraint::NonPos && beta[j] > 0.0) return false;
    }
    return true;
  }

  // Same arithmetic order as StageRule::score.
  bool assigns(const VectorXd& beta, Index k) const {
    double s = beta[0];
    for (Index j = 0; j < p_; ++j) s += beta[j + 1] * F_(k, j);
    return s >= 0.0;
  }

  void emit(const VectorXd& beta, int orientation) {
    if (!sign_ok(beta)) return;
    BitVector d = orientation > 0 ? pos_ : neg_;
    for (int k : tight_)
      if (k < n_) d.set(static_cast<std::size_t>(k), assigns(beta, k));
    add(beta, std::move(d), orientation > 0 ? 0 : 1);
  }

  void add(const VectorXd& beta, BitVector d, int lane) {
    last_[lane] = static_cast<std::int64_t>(out_.add_linear(cls_.selector, beta, std::move(d), last_[lane]));
  }

  void degenerate_all() {
    for (const auto& beta : cell_representatives(V_)) {
      if (!sign_ok(beta)) continue;
      BitVector d(static_cast<std::size_t>(n_));
      for (Index k = 0; k < n_; ++k) d.set(static_cast<std::size_t>(k), assigns(beta, k));
      add(beta, std::move(d), 0);
    }
  }

  const MatrixXd& F_;
  const StageClass& cls_;
  Index n_, p_, q_, m_ = 0;
  CandidateSet out_;
  EnumerationOptions options_;
  std::vector<Index> constrained_;
  MatrixXd V_;
  VectorXd l1_, s_;
  double vmax_ = 0.0, eps_cap_ = 0.0;
  BitVector pos_, neg_;
  std::vector<int> tight_;
  std::set<std::vector<int>> seen_tight_;
  std::int64_t last_[2] = {-1, -1};
};

}  // namespace

CandidateSet enumerate_candidates(const MatrixXd& features, const StageClass& cls, int stage,
                                  const EnumerationOptions& options) {
  if (features.rows() == 0) throw DimensionError("candidate enumeration needs at least one observation");
  const auto n = static_cast<std::size_t>(features.rows());
  if (cls.kind == StageClass::Kind::Constants) {
    CandidateSet cs(stage, CandidateSet::Provenance::Constants, 0, n);
    BitVector none(n);
    cs.add_constant(0, none);
    cs.add_constant(1, ~none);
    return cs;
  }
  if (features.cols() == 0) throw DimensionError("linear class needs at least one feature");
  if (static_cast<std::size_t>(features.cols()) != cls.selector.size())
    throw DimensionError("feature matrix width differs from class selector");
  if (!cls.signs.empty() && cls.signs.size() != cls.beta_size())
    throw DimensionError("sign constraints must cover intercept and every feature");
  return Enumerator(features, cls, stage, options).run();
}

CandidateSet stage_candidates(const PanelDataset& ds, int t, const StageClass& cls, const EnumerationOptions& options) {
  if (t < 1 || t > ds.stage_count()) throw DimensionError("stage out of range");
  const MatrixXd h = ds.history_matrix(t);
  MatrixXd f(h.rows(), static_cast<Index>(cls.selector.size()));
  for (std::size_t j = 0; j < cls.selector.size(); ++j) {
    const int idx = cls.selector[j];
    if (idx < 0 || idx >= h.cols())
      throw DimensionError("selector index " + std::to_string(idx) + " outside stage-" + std::to_string(t) +
                           " history");
    f.col(static_cast<Index>(j)) = h.col(idx);
  }
  if (cls.kind == StageClass::Kind::Constants) f.resize(h.rows(), 0);
  return enumerate_candidates(f, cls, t, options);
}

WeightedArgmax argmax_from_scores(const CandidateSet& cands, std::span<const double> scores,
                                  std::span<const double> weights, const CandidatePredicate& feasible) {
  if (scores.size() != cands.size()) throw DimensionError("score vector length differs from candidate count");
  std::vector<char> ok(cands.size(), 1);
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (feasible && !feasible(k)) {
      ok[k] = 0;
      continue;
    }
    any = true;
    best = std::max(best, scores[k]);
  }
  if (!any) throw InfeasibleError("no feasible candidate at stage " + std::to_string(cands.stage()));

  // Incremental scores carry rounding; settle near-ties on exact sums.
  double wsum = 0.0;
  for (double w : weights) wsum += std::abs(w);
  const double tol = 1e-12 * wsum;
  WeightedArgmax r;
  bool found = false;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (!ok[k] || scores[k] < best - tol) continue;
    const double v = dichotomy_value(cands.dichotomy(k), weights);
    if (!found || v > r.value) {
      r.index = k;
      r.value = v;
      found = true;
    }
  }
  r.rule = cands.rule(r.index);
  return r;
}

WeightedArgmax argmax_weighted_rule(const CandidateSet& cands, std::span<const double> weights,
                                    const CandidatePredicate& feasible) {
  const auto sc = cands.scores(weights);
  return argmax_from_scores(cands, sc, weights, feasible);
}

}  // namespace dewm
