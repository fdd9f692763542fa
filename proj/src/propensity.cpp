#include "dewm/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dewm/error.hpp"

namespace dewm {

PropensityStage PropensityStage::known(double p1) {
  if (!(p1 > 0.0 && p1 < 1.0)) throw Error("known propensity must lie strictly in (0, 1)");
  PropensityStage s;
  s.kind = Kind::KnownConstant;
  s.p1 = p1;
  return s;
}

PropensityStage PropensityStage::known_table(std::vector<int> selector, std::map<std::vector<long>, double> table,
                                             double fallback) {
  PropensityStage s = known(fallback);
  s.kind = Kind::KnownTable;
  for (const auto& [k, p] : table) {
    if (k.size() != selector.size()) throw DimensionError("propensity table key length differs from selector");
    if (!(p > 0.0 && p < 1.0)) throw Error("known propensity must lie strictly in (0, 1)");
  }
  s.selector = std::move(selector);
  s.table = std::move(table);
  return s;
}

PropensityStage PropensityStage::logistic(std::vector<int> selector, Eigen::VectorXd beta) {
  if (beta.size() != static_cast<Eigen::Index>(selector.size()) + 1)
    throw DimensionError("logistic propensity needs 1 + |selector| coefficients");
  PropensityStage s;
  s.kind = Kind::Logistic;
  s.selector = std::move(selector);
  s.beta = std::move(beta);
  return s;
}

PropensityModel known_propensity(int T, double p1, double clip_floor) {
  PropensityModel m;
  m.stages.assign(T, PropensityStage::known(p1));
  m.clip_floor = clip_floor;
  return m;
}

namespace {

double clip(double p, double floor) { return std::clamp(p, floor, 1.0 - floor); }

void check_floor(double floor) {
  if (!(floor > 0.0 && floor < 0.5)) throw Error("clip floor must lie in (0, 0.5)");
}

}  // namespace

double propensity_at(const PropensityModel& model, int t, int d, const HistoryVector& h) {
  if (t < 1 || t > model.stage_count()) throw DimensionError("propensity stage out of range");
  check_floor(model.clip_floor);
  const double p1 = model.stages[t - 1].raw_p1(h.values);
  return clip(d ? p1 : 1.0 - p1, model.clip_floor);
}

Eigen::VectorXd realized_propensities(const PropensityModel& model, int t, const Eigen::MatrixXd& histories,
                                      const std::vector<int>& treatments) {
  if (t < 1 || t > model.stage_count()) throw DimensionError("propensity stage out of range");
  check_floor(model.clip_floor);
  const auto& stage = model.stages[t - 1];
  Eigen::VectorXd e(histories.rows());
  for (Eigen::Index i = 0; i < histories.rows(); ++i) {
    const double p1 = stage.raw_p1(histories.row(i));
    e[i] = clip(treatments[static_cast<std::size_t>(i)] ? p1 : 1.0 - p1, model.clip_floor);
  }
  return e;
}

namespace {

// Mean log-likelihood; stable for large |score|.
double mean_log_likelihood(const Eigen::VectorXd& score, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < score.size(); ++i) {
    const double s = score[i];
    const double log1pexp = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    ll += y[i] * s - log1pexp;
  }
  return ll / static_cast<double>(score.size());
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& s) {
  return s.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

PropensityStage fit_logistic_stage(const PanelDataset& ds, int t, const std::vector<int>& selector,
                                   const LogisticFitOptions& options, LogisticFitTrace* trace) {
  if (t < 1 || t > ds.stage_count()) throw DimensionError("stage out of range");
  const auto n = static_cast<Eigen::Index>(ds.size());
  const Eigen::MatrixXd h = ds.history_matrix(t);
  for (int idx : selector)
    if (idx < 0 || idx >= h.cols()) throw DimensionError("logistic selector index outside history");

  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(selector.size()) + 1);
  X.col(0).setOnes();
  for (std::size_t j = 0; j < selector.size(); ++j) X.col(static_cast<Eigen::Index>(j) + 1) = h.col(selector[j]);
  Eigen::VectorXd y(n);
  const auto d = ds.treatments(t);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = d[static_cast<std::size_t>(i)];
  const double treated = y.sum();
  if (treated == 0.0 || treated == static_cast<double>(n))
    throw FitError("stage " + std::to_string(t) + " has a single treatment arm; logistic propensity is not estimable");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  beta[0] = std::log(treated / (static_cast<double>(n) - treated));
  Eigen::VectorXd score = X * beta;
  double ll = mean_log_likelihood(score, y);
  if (trace) trace->log_likelihood.push_back(ll);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd p = sigmoid(score);
    const Eigen::VectorXd grad = X.transpose() * (y - p) / static_cast<double>(n);
    if (trace) trace->iterations = iter - 1;
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      // A vanishing gradient with near-perfect fitted labels means the
      // likelihood has no finite maximizer.
      if ((y - p).lpNorm<Eigen::Infinity>() < 1e-6)
        throw FitError("stage " + std::to_string(t) +
                       " treatment is perfectly separated by the logistic features; use a known propensity model");
      return PropensityStage::logistic(selector, beta);
    }

    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X / static_cast<double>(n);
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) break;

    double scale = 1.0;
    Eigen::VectorXd next;
    double next_ll = -std::numeric_limits<double>::infinity();
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      next = beta + scale * step;
      next_ll = mean_log_likelihood(X * next, y);
      if (next_ll >= ll) break;
    }
    if (!(next_ll >= ll)) break;
    beta = next;
    score = X * beta;
    ll = next_ll;
    if (trace) trace->log_likelihood.push_back(ll);
    if (beta.lpNorm<Eigen::Infinity>() > options.divergence_bound)
      throw FitError("stage " + std::to_string(t) +
                     " logistic coefficients diverge (perfect separation); use a known propensity model or a "
                     "larger clip floor with fewer features");
  }
  const Eigen::VectorXd p = sigmoid(X * beta);
  const Eigen::VectorXd grad = X.transpose() * (y - p) / static_cast<double>(n);
  if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) return PropensityStage::logistic(selector, beta);
  throw FitError("stage " + std::to_string(t) +
                 " logistic fit did not converge (possible separation); use a known propensity model or clipping");
}

PropensityModel fit_logistic_propensity(const PanelDataset& ds, const std::vector<std::vector<int>>& selectors,
                                        double clip_floor) {
  if (static_cast<int>(selectors.size()) != ds.stage_count())
    throw DimensionError("need one logistic selector per stage");
  PropensityModel m;
  m.clip_floor = clip_floor;
  for (int t = 1; t <= ds.stage_count(); ++t) m.stages.push_back(fit_logistic_stage(ds, t, selectors[t - 1]));
  return m;
}

KeyValueDoc to_keyvalue(const PropensityModel& model) {
  KeyValueDoc doc;
  doc.set("stages", std::to_string(model.stage_count()));
  doc.set("clip_floor", model.clip_floor);
  for (int t = 1; t <= model.stage_count(); ++t) {
    const auto& s = model.stages[t - 1];
    const std::string p = "stage." + std::to_string(t) + ".";
    switch (s.kind) {
      case PropensityStage::Kind::KnownConstant:
        doc.set(p + "kind", std::string("known"));
        doc.set(p + "p1", s.p1);
        break;
      case PropensityStage::Kind::KnownTable: {
        doc.set(p + "kind", std::string("known_table"));
        doc.set(p + "p1", s.p1);
        doc.set(p + "selector", s.selector);
        std::string tab;
        for (const auto& [key, prob] : s.table) {
          if (!tab.empty()) tab += ';';
          for (std::size_t j = 0; j < key.size(); ++j) tab += (j ? "," : "") + std::to_string(key[j]);
          tab += ':' + format_number(prob);
        }
        doc.set(p + "table", tab);
        break;
      }
      case PropensityStage::Kind::Logistic:
        doc.set(p + "kind", std::string("logistic"));
        doc.set(p + "selector", s.selector);
        doc.set(p + "beta", std::vector<double>(s.beta.data(), s.beta.data() + s.beta.size()));
        break;
    }
  }
  return doc;
}

PropensityModel propensity_from_keyvalue(const KeyValueDoc& doc) {
  PropensityModel m;
  m.clip_floor = doc.has("clip_floor") ? doc.get_double("clip_floor") : kDefaultClipFloor;
  const int T = doc.get_int("stages");
  for (int t = 1; t <= T; ++t) {
    const std::string p = "stage." + std::to_string(t) + ".";
    const std::string& kind = doc.get(p + "kind");
    if (kind == "known") {
      m.stages.push_back(PropensityStage::known(doc.get_double(p + "p1")));
    } else if (kind == "known_table") {
      const auto sel = doc.get_ints(p + "selector");
      std::map<std::vector<long>, double> table;
      std::stringstream ss(doc.get(p + "table"));
      std::string entry;
      while (std::getline(ss, entry, ';')) {
        const auto colon = entry.find(':');
        if (colon == std::string::npos) throw Error("bad propensity table entry '" + entry + "'");
        std::vector<long> key;
        for (int v : parse_int_list(entry.substr(0, colon))) key.push_back(v);
        table[key] = parse_number_list(entry.substr(colon + 1)).at(0);
      }
      m.stages.push_back(PropensityStage::known_table(sel, std::move(table), doc.get_double(p + "p1")));
    } else if (kind == "logistic") {
      const auto sel = doc.has(p + "selector") ? doc.get_ints(p + "selector") : std::vector<int>{};
      const auto b = doc.get_doubles(p + "beta");
      m.stages.push_back(PropensityStage::logistic(
          sel, Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()))));
    } else {
      throw Error("unknown propensity kind '" + kind + "'");
    }
  }
  return m;
}

void write_propensity(const PropensityModel& model, std::ostream& out) {
  to_keyvalue(model).write(out, "dewm propensity v1");
}

PropensityModel read_propensity(std::istream& in) { return propensity_from_keyvalue(KeyValueDoc::read(in)); }

}  // namespace dewm
