#include "dewm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

#include "dewm/error.hpp"
#include "json.hpp"

namespace dewm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void EstimationConfig::validate(int T) const {
  weights.validate(T);
  if (class_spec.stage_count() != T)
    throw DimensionError("policy class has " + std::to_string(class_spec.stage_count()) + " stages, expected " +
                         std::to_string(T));
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
  if (ascent.restarts < 1) throw Error("coordinate ascent needs at least one restart");
  if (ascent.max_sweeps < 1) throw Error("coordinate ascent needs at least one sweep");
  if (!(ascent.tolerance >= 0.0)) throw Error("coordinate ascent tolerance must be non-negative");
  if (alpha && !(*alpha >= 0.0)) throw Error("alpha_n must be non-negative");
}

std::string metrics_json(const FitResult& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["strategy"] = r.strategy;
  j["welfare"] = r.welfare;
  j["shares"] = r.shares;
  if (!r.budget_lhs.empty()) j["budget_lhs"] = r.budget_lhs;
  if (r.alpha_n) j["alpha_n"] = *r.alpha_n;
  j["warnings"] = r.warnings;
  j["candidates"] = r.candidate_counts;
  j["sweeps"] = r.sweeps;
  j["restarts"] = r.restarts;
  return j.dump();
}

void write_fit_result(const FitResult& r, std::ostream& out) {
  KeyValueDoc doc = to_keyvalue(r.dtr);
  doc.set("metrics", metrics_json(r));
  doc.write(out, "dewm fit v1");
}

Dtr read_fit_dtr(std::istream& in) { return read_dtr(in); }

EstimationContext::EstimationContext(const PanelDataset& ds, const PropensityModel& pm,
                                     const PolicyClassSpec& classes, const EnumerationOptions& options)
    : ds_(&ds), pm_(&pm), classes_(classes) {
  classes.validate(ds);
  const int T = ds.stage_count();
  if (pm.stage_count() != T) throw DimensionError("propensity model stage count differs from data");
  if (ds.size() == 0) throw DimensionError("estimation needs at least one observation");
  for (int t = 1; t <= T; ++t) {
    cands_.push_back(stage_candidates(ds, t, classes[t], options));
    const auto d = ds.treatments(t);
    BitVector b(ds.size());
    for (std::size_t i = 0; i < d.size(); ++i) b.set(i, d[i] == 1);
    treated_.push_back(std::move(b));
    const VectorXd y = ds.outcomes(t);
    y_.emplace_back(y.data(), y.data() + y.size());
    const VectorXd e = realized_propensities(pm, t, ds.history_matrix(t), d);
    e_.emplace_back(e.data(), e.data() + e.size());
  }
}

BitVector EstimationContext::matches(int t, std::size_t k) const {
  return ~(cands_[t - 1].dichotomy(k) ^ treated_[t - 1]);
}

Dtr EstimationContext::dtr(const std::vector<std::size_t>& choice) const {
  Dtr d;
  for (int t = 1; t <= stage_count(); ++t) d.rules.push_back(cands_[t - 1].rule(choice[t - 1]));
  if (ds_->demeaned()) d.outcome_centering = ds_->outcome_means();
  return d;
}

double default_alpha(int B, double delta, std::size_t n) {
  if (B < 1) throw Error("default_alpha needs at least one budget row");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
  if (n < 1) throw Error("default_alpha needs n >= 1");
  return std::sqrt(std::log(6.0 * B / delta) / (2.0 * static_cast<double>(n)));
}

namespace {

double sum_over(const BitVector& bits, const std::vector<double>& v) {
  double s = 0.0;
  bits.for_each_set([&](std::size_t i) { s += v[i]; });
  return s;
}

bool pair_ok_bits(Intertemporal kind, const BitVector& prior, const BitVector& current) {
  switch (kind) {
    case Intertemporal::None:
      return true;
    case Intertemporal::StartTime:
      return prior.subset_of(current);
    case Intertemporal::StopTime:
      return current.subset_of(prior);
    case Intertemporal::OneShot:
      return prior.disjoint(current);
  }
  return true;
}

FitResult finish(const EstimationContext& ctx, const EstimationConfig& cfg, const Dtr& dtr, std::string method,
                 std::string strategy, const std::optional<BudgetSpec>& budget) {
  FitResult r;
  r.method = std::move(method);
  r.strategy = std::move(strategy);
  r.dtr = dtr;
  const auto rep = welfare_report(ctx.data(), dtr, ctx.propensity(), cfg.weights, budget);
  r.welfare = rep.welfare;
  r.shares = rep.shares;
  r.budget_lhs = rep.budget_lhs;
  r.warnings = rep.warnings;
  if (budget) r.alpha_n = budget->alpha_n;
  for (int t = 1; t <= ctx.stage_count(); ++t) r.candidate_counts.push_back(ctx.candidates(t).size());
  return r;
}

// Simultaneous search state over candidate indices, one per stage.
class Simultaneous {
 public:
  Simultaneous(const EstimationContext& ctx, const EstimationConfig& cfg, std::optional<BudgetSpec> budget)
      : ctx_(ctx), cfg_(cfg), budget_(std::move(budget)), T_(ctx.stage_count()), n_(ctx.size()) {
    for (int t = 1; t <= T_; ++t) {
      std::vector<double> v(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        double denom = 1.0;
        for (int s = 1; s <= t; ++s) denom *= ctx.propensity(s, i);
        v[i] = cfg.weights[t] * ctx.outcome(t, i) / denom;
      }
      v_.push_back(std::move(v));
    }
    all_ = ~BitVector(n_);
  }

  double objective(const std::vector<std::size_t>& choice) const {
    BitVector path = all_;
    double total = 0.0;
    for (int t = 1; t <= T_; ++t) {
      path &= ctx_.matches(t, choice[t - 1]);
      total += sum_over(path, v_[t - 1]);
    }
    return total / static_cast<double>(n_);
  }

  bool intertemporal_ok(const std::vector<std::size_t>& choice, int t, std::size_t k) const {
    const auto kind = cfg_.class_spec.intertemporal;
    if (kind == Intertemporal::None) return true;
    const BitVector& dk = ctx_.candidates(t).dichotomy(k);
    for (int s = 1; s <= T_; ++s) {
      if (s == t) continue;
      const BitVector& ds = ctx_.candidates(s).dichotomy(choice[s - 1]);
      if (!(s < t ? pair_ok_bits(kind, ds, dk) : pair_ok_bits(kind, dk, ds))) return false;
    }
    return true;
  }

  // Mirrors budget_lhs/budget_feasible on bitsets, with stage t taking candidate k.
  bool budget_ok(const std::vector<std::size_t>& choice, int t, std::size_t k) const {
    if (!budget_) return true;
    std::vector<double> share(static_cast<std::size_t>(T_));
    std::vector<char> empty(static_cast<std::size_t>(T_), 0);
    BitVector path = all_;
    for (int s = 1; s <= T_; ++s) {
      const std::size_t ks = s == t ? k : choice[s - 1];
      const BitVector& d = ctx_.candidates(s).dichotomy(ks);
      const std::size_t den = path.count();
      if (den == 0) {
        empty[s - 1] = 1;
      } else {
        share[s - 1] = static_cast<double>(path.count_and(d)) / static_cast<double>(den);
      }
      if (s < T_) path &= ctx_.matches(s, ks);
    }
    for (const auto& row : budget_->rows) {
      double lhs = 0.0;
      bool touched_empty = false;
      for (int s = 1; s <= T_; ++s) {
        if (row.K[s - 1] == 0.0) continue;
        lhs += row.K[s - 1] * share[s - 1];
        touched_empty = touched_empty || empty[s - 1];
      }
      if (cfg_.strict_empty_path && touched_empty) return false;
      if (lhs > row.C + budget_->alpha_n) return false;
    }
    return true;
  }

  bool feasible(const std::vector<std::size_t>& choice) const {
    for (int t = 2; t <= T_; ++t)
      if (!intertemporal_ok(choice, t, choice[t - 1])) return false;
    return budget_ok(choice, 1, choice[0]);
  }

  struct Outcome {
    std::vector<std::size_t> choice;
    double objective = 0.0;
    int sweeps = 0;
    std::vector<double> trace;
  };

  Outcome exhaustive() const {
    Outcome best;
    best.objective = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> choice(static_cast<std::size_t>(T_), 0);
    std::vector<double> partial(static_cast<std::size_t>(T_) + 1, 0.0);
    std::vector<BitVector> path(static_cast<std::size_t>(T_) + 1, all_);
    bool found = false;
    // Depth-first over the product in lexicographic order; strict improvement
    // keeps the first maximizer.
    auto dfs = [&](auto&& self, int t) -> void {
      if (t > T_) {
        if (!budget_ok(choice, 1, choice[0])) return;
        const double obj = partial[static_cast<std::size_t>(T_)] / static_cast<double>(n_);
        if (!found || obj > best.objective) {
          best.choice = choice;
          best.objective = obj;
          found = true;
        }
        return;
      }
      const auto& cs = ctx_.candidates(t);
      for (std::size_t k = 0; k < cs.size(); ++k) {
        choice[t - 1] = k;
        if (!prefix_intertemporal_ok(choice, t)) continue;
        path[t] = path[t - 1] & ctx_.matches(t, k);
        partial[t] = partial[t - 1] + sum_over(path[t], v_[t - 1]);
        self(self, t + 1);
      }
    };
    dfs(dfs, 1);
    if (!found) throw InfeasibleError("no DTR in the policy class satisfies the constraints");
    best.objective = objective(best.choice);
    best.trace = {best.objective};
    return best;
  }

  Outcome coordinate_ascent(int& total_sweeps) const {
    std::mt19937_64 rng(cfg_.seed);
    Outcome best;
    best.objective = -std::numeric_limits<double>::infinity();
    bool found = false;
    std::set<std::vector<std::size_t>> visited;
    total_sweeps = 0;
    for (int r = 0; r < cfg_.ascent.restarts; ++r) {
      std::vector<std::size_t> choice;
      if (!initial_state(r, rng, choice)) continue;
      double obj = objective(choice);
      Outcome run;
      run.trace.push_back(obj);
      for (int sweep = 1; sweep <= cfg_.ascent.max_sweeps; ++sweep) {
        ++total_sweeps;
        run.sweeps = sweep;
        const double before = obj;
        for (int t = 1; t <= T_; ++t) {
          if (!step(choice, t)) continue;
          const double next = objective(choice);
          if (next < obj - 1e-9 * (1.0 + std::abs(obj)))
            throw std::logic_error("coordinate ascent decreased the objective");
          obj = next;
          run.trace.push_back(obj);
        }
        if (obj - before <= cfg_.ascent.tolerance) break;
        if (!visited.insert(choice).second) break;
      }
      if (!found || obj > best.objective) {
        best.choice = choice;
        best.objective = obj;
        best.sweeps = run.sweeps;
        best.trace = std::move(run.trace);
        found = true;
      }
    }
    if (!found) throw InfeasibleError("no feasible starting DTR found for coordinate ascent");
    return best;
  }

 private:
  bool prefix_intertemporal_ok(const std::vector<std::size_t>& choice, int t) const {
    const auto kind = cfg_.class_spec.intertemporal;
    if (kind == Intertemporal::None) return true;
    const BitVector& dk = ctx_.candidates(t).dichotomy(choice[t - 1]);
    for (int s = 1; s < t; ++s)
      if (!pair_ok_bits(kind, ctx_.candidates(s).dichotomy(choice[s - 1]), dk)) return false;
    return true;
  }

  bool initial_state(int restart, std::mt19937_64& rng, std::vector<std::size_t>& choice) const {
    choice.assign(static_cast<std::size_t>(T_), 0);
    if (restart == 0 && feasible(choice)) return true;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (int t = 1; t <= T_; ++t) {
        std::uniform_int_distribution<std::size_t> pick(0, ctx_.candidates(t).size() - 1);
        choice[t - 1] = pick(rng);
      }
      if (feasible(choice)) return true;
    }
    return false;
  }

  // Replaces stage t by its exact best response; returns true when it moved.
  bool step(std::vector<std::size_t>& choice, int t) const {
    BitVector prefix = all_;
    for (int s = 1; s < t; ++s) prefix &= ctx_.matches(s, choice[s - 1]);
    std::vector<double> A(n_, 0.0);
    {
      BitVector tail = all_;
      for (int tp = t; tp <= T_; ++tp) {
        if (tp > t) tail &= ctx_.matches(tp, choice[tp - 1]);
        const BitVector active = tail & prefix;
        const auto& v = v_[tp - 1];
        active.for_each_set([&](std::size_t i) { A[i] += v[i]; });
      }
    }
    std::vector<double> w(n_);
    const BitVector& d = ctx_.treated(t);
    for (std::size_t i = 0; i < n_; ++i) w[i] = d.test(i) ? A[i] : -A[i];

    const auto& cs = ctx_.candidates(t);
    const auto pred = [&](std::size_t k) { return intertemporal_ok(choice, t, k) && budget_ok(choice, t, k); };
    const auto res = argmax_weighted_rule(cs, w, pred);
    if (res.index == choice[t - 1]) return false;
    const double current = dichotomy_value(cs.dichotomy(choice[t - 1]), w);
    if (res.value <= current) return false;
    choice[t - 1] = res.index;
    return true;
  }

  const EstimationContext& ctx_;
  const EstimationConfig& cfg_;
  std::optional<BudgetSpec> budget_;
  int T_;
  std::size_t n_;
  std::vector<std::vector<double>> v_;
  BitVector all_;
};

FitResult solve_simultaneous(const EstimationContext& ctx, const EstimationConfig& cfg,
                             const std::optional<BudgetSpec>& budget, std::string method) {
  Simultaneous sim(ctx, cfg, budget);
  double product = 1.0;
  for (int t = 1; t <= ctx.stage_count(); ++t) product *= static_cast<double>(ctx.candidates(t).size());
  Simultaneous::Outcome out;
  std::string strategy;
  int sweeps = 0;
  if (product <= static_cast<double>(cfg.exhaustive_cap)) {
    out = sim.exhaustive();
    strategy = "exhaustive";
  } else {
    out = sim.coordinate_ascent(sweeps);
    strategy = "coordinate-ascent";
  }
  FitResult r = finish(ctx, cfg, ctx.dtr(out.choice), std::move(method), strategy, budget);
  r.sweeps = sweeps;
  r.restarts = strategy == "exhaustive" ? 0 : cfg.ascent.restarts;
  r.trace = std::move(out.trace);
  return r;
}

}  // namespace

FitResult fit_backward(const EstimationContext& ctx, const EstimationConfig& cfg) {
  const int T = ctx.stage_count();
  cfg.validate(T);
  if (cfg.budget) throw Error("the backward estimator takes no budget constraint; use the simultaneous method");
  const std::size_t n = ctx.size();
  const auto kind = cfg.class_spec.intertemporal;
  std::vector<std::size_t> choice(static_cast<std::size_t>(T), 0);
  std::vector<BitVector> match(static_cast<std::size_t>(T));
  for (int t = T; t >= 1; --t) {
    // m_i = sum_{t'>=t} [prod_{t<s<=t'} M_s] gamma_t' Y_t' / prod_{s=t..t'} e_s
    std::vector<double> m(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double denom = 1.0;
      for (int tp = t; tp <= T; ++tp) {
        if (tp > t && !match[tp - 1].test(i)) break;
        denom *= ctx.propensity(tp, i);
        m[i] += cfg.weights[tp] * ctx.outcome(tp, i) / denom;
      }
    }
    const BitVector& d = ctx.treated(t);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = d.test(i) ? m[i] : -m[i];

    BitVector any_prior(n), all_prior = ~BitVector(n);
    for (int s = 1; s < t; ++s) {
      any_prior |= ctx.treated(s);
      all_prior &= ctx.treated(s);
    }
    const auto& cs = ctx.candidates(t);
    CandidatePredicate pred;
    if (kind != Intertemporal::None && t > 1) {
      pred = [&](std::size_t k) {
        const BitVector& g = cs.dichotomy(k);
        switch (kind) {
          case Intertemporal::StartTime:
            return any_prior.subset_of(g);
          case Intertemporal::StopTime:
            return g.subset_of(all_prior);
          case Intertemporal::OneShot:
            return g.disjoint(any_prior);
          case Intertemporal::None:
            break;
        }
        return true;
      };
    }
    choice[t - 1] = argmax_weighted_rule(cs, w, pred).index;
    match[t - 1] = ctx.matches(t, choice[t - 1]);
  }
  return finish(ctx, cfg, ctx.dtr(choice), "backward", "backward", std::nullopt);
}

FitResult fit_backward(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg) {
  cfg.validate(ds.stage_count());
  return fit_backward(EstimationContext(ds, pm, cfg.class_spec, cfg.enumeration), cfg);
}

FitResult fit_simultaneous(const EstimationContext& ctx, const EstimationConfig& cfg) {
  cfg.validate(ctx.stage_count());
  if (cfg.budget) throw Error("budget given; use fit_simultaneous_budget");
  return solve_simultaneous(ctx, cfg, std::nullopt, "simultaneous");
}

FitResult fit_simultaneous(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg) {
  cfg.validate(ds.stage_count());
  return fit_simultaneous(EstimationContext(ds, pm, cfg.class_spec, cfg.enumeration), cfg);
}

FitResult fit_simultaneous_budget(const EstimationContext& ctx, const EstimationConfig& cfg) {
  cfg.validate(ctx.stage_count());
  if (!cfg.budget) throw Error("fit_simultaneous_budget needs a budget specification");
  BudgetSpec spec = *cfg.budget;
  spec.alpha_n = cfg.alpha ? *cfg.alpha : default_alpha(spec.row_count(), cfg.delta, ctx.size());
  spec.validate(ctx.stage_count());
  return solve_simultaneous(ctx, cfg, spec, "simultaneous-budget");
}

FitResult fit_simultaneous_budget(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg) {
  cfg.validate(ds.stage_count());
  return fit_simultaneous_budget(EstimationContext(ds, pm, cfg.class_spec, cfg.enumeration), cfg);
}

namespace {

VectorXd ols(const MatrixXd& X, const VectorXd& y, const char* what) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw FitError(std::string("rank-deficient design matrix in ") + what + " regression");
  return qr.solve(y);
}

}  // namespace

FitResult fit_qlearning(const PanelDataset& ds, const PropensityModel& pm, const EstimationConfig& cfg) {
  if (ds.stage_count() != 2) throw Error("Q-learning baseline is defined for two stages only");
  if (cfg.weights.stage_count() != 2 || cfg.weights[1] != 0.0 || cfg.weights[2] != 1.0)
    throw Error("Q-learning baseline needs welfare weights (0, 1)");
  const auto n = static_cast<Index>(ds.size());
  const VectorXd y1 = ds.outcomes(1), y2 = ds.outcomes(2);
  const auto d1 = ds.treatments(1), d2 = ds.treatments(2);

  MatrixXd X2(n, 5);
  for (Index i = 0; i < n; ++i) {
    const double a = d1[static_cast<std::size_t>(i)], b = d2[static_cast<std::size_t>(i)];
    X2.row(i) << 1.0, y1[i], b, b * a, b * y1[i];
  }
  const VectorXd c2 = ols(X2, y2, "stage-2");
  const double a02 = c2[0], a12 = c2[1], g02 = c2[2], g12 = c2[3], g22 = c2[4];

  VectorXd pseudo(n);
  for (Index i = 0; i < n; ++i)
    pseudo[i] = a02 + a12 * y1[i] + std::max(0.0, g02 + g12 * d1[static_cast<std::size_t>(i)] + g22 * y1[i]);

  const int k1 = ds.covariate_dims()[0];
  const MatrixXd H1 = ds.history_matrix(1);
  MatrixXd X1(n, 2 + 2 * k1);
  for (Index i = 0; i < n; ++i) {
    const double a = d1[static_cast<std::size_t>(i)];
    X1(i, 0) = 1.0;
    for (int j = 0; j < k1; ++j) X1(i, 1 + j) = H1(i, j);
    X1(i, 1 + k1) = a;
    for (int j = 0; j < k1; ++j) X1(i, 2 + k1 + j) = a * H1(i, j);
  }
  const VectorXd c1 = ols(X1, pseudo, "stage-1");

  std::vector<int> sel1;
  for (int j = 0; j < k1; ++j)
    sel1.push_back(static_cast<int>(layout::covariate_slot(ds.covariate_dims(), 1, 1, j)));
  VectorXd b1(1 + k1);
  b1[0] = c1[1 + k1];
  for (int j = 0; j < k1; ++j) b1[1 + j] = c1[2 + k1 + j];
  VectorXd b2(3);
  b2 << g02, g12, g22;

  Dtr dtr;
  dtr.rules.push_back(StageRule::linear(1, sel1, b1));
  dtr.rules.push_back(StageRule::linear(
      2, {static_cast<int>(layout::treatment_slot(2, 1)), static_cast<int>(layout::outcome_slot(2, 1))}, b2));
  if (ds.demeaned()) dtr.outcome_centering = ds.outcome_means();

  FitResult r;
  r.method = "qlearning";
  r.strategy = "regression";
  r.dtr = dtr;
  const auto rep = welfare_report(ds, dtr, pm, cfg.weights);
  r.welfare = rep.welfare;
  r.shares = rep.shares;
  r.warnings = rep.warnings;
  return r;
}

}  // namespace dewm
