#include "dewm/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "dewm/error.hpp"

namespace dewm {

DgpSpec DgpSpec::make(DgpId id) {
  DgpSpec s;
  s.id = id;
  switch (id) {
    case DgpId::Dgp1:
      s.poly = {0.0, 0.0, 0.0};
      break;
    case DgpId::Dgp2:
      s.poly = {1.0, 0.0, 0.0};
      break;
    case DgpId::Dgp3:
      s.poly = {0.3, 0.3, -0.4};
      break;
    case DgpId::Remark1:
      break;
  }
  return s;
}

std::vector<int> DgpSpec::covariate_dims() const {
  if (id == DgpId::Remark1) return {0, 0, 0};
  return {1, 0};
}

WelfareWeights DgpSpec::default_weights() const {
  if (id == DgpId::Remark1) return {{0.0, 0.0, 1.0}};
  return {{0.0, 1.0}};
}

PropensityModel DgpSpec::propensity() const { return known_propensity(stage_count(), p_treat); }

std::string DgpSpec::name() const {
  switch (id) {
    case DgpId::Dgp1:
      return "DGP1";
    case DgpId::Dgp2:
      return "DGP2";
    case DgpId::Dgp3:
      return "DGP3";
    case DgpId::Remark1:
      return "Remark1";
  }
  return "?";
}

DgpId parse_dgp(const std::string& text) {
  if (text == "1" || text == "dgp1" || text == "DGP1") return DgpId::Dgp1;
  if (text == "2" || text == "dgp2" || text == "DGP2") return DgpId::Dgp2;
  if (text == "3" || text == "dgp3" || text == "DGP3") return DgpId::Dgp3;
  if (text == "remark1" || text == "Remark1" || text == "r1") return DgpId::Remark1;
  throw Error("unknown DGP '" + text + "' (expected 1, 2, 3 or remark1)");
}

namespace {

// One unit's primitive draws; the same stream feeds data and oracle draws.
struct UnitDraw {
  double x1 = 0.0, u1 = 0.0, u2 = 0.0;
  int d[3] = {0, 0, 0};
};

class DrawStream {
 public:
  DrawStream(const DgpSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed), coin_(spec.p_treat) {}

  UnitDraw next() {
    UnitDraw u;
    if (spec_.id == DgpId::Remark1) {
      for (int t = 0; t < 3; ++t) u.d[t] = coin_(rng_) ? 1 : 0;
      return u;
    }
    u.x1 = normal_(rng_);
    u.u1 = normal_(rng_);
    u.u2 = normal_(rng_);
    u.d[0] = coin_(rng_) ? 1 : 0;
    u.d[1] = coin_(rng_) ? 1 : 0;
    return u;
  }

 private:
  const DgpSpec& spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::bernoulli_distribution coin_;
};

double outcome1(const DgpSpec& s, double x1, int d1, double u1) {
  const auto& p = s.stage1;
  return p[0] + p[1] * x1 + (p[2] + p[3] * x1) * d1 + u1;
}

double outcome2(const DgpSpec& s, double y1, int d1, int d2, double u2) {
  const auto& p = s.stage2;
  const double effect = p[2] + p[3] * d1 + s.poly[0] * y1 + s.poly[1] * y1 * y1 + s.poly[2] * y1 * y1 * y1;
  return p[0] + p[1] * y1 + effect * d2 + u2;
}

double remark_y3(const DgpSpec& s, int d1, int d2, int d3) { return s.remark_means[d1 + 2 * d2 + 4 * d3]; }

}  // namespace

PanelDataset generate_dgp(const DgpSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error("generate_dgp needs n >= 1");
  DrawStream stream(spec, seed);
  std::vector<Trajectory> trajs;
  trajs.reserve(n);
  const int T = spec.stage_count();
  for (std::size_t i = 0; i < n; ++i) {
    const UnitDraw u = stream.next();
    Trajectory tr;
    tr.id = std::to_string(i + 1);
    tr.treatments.assign(u.d, u.d + T);
    if (spec.id == DgpId::Remark1) {
      tr.outcomes = {0.0, 0.0, remark_y3(spec, u.d[0], u.d[1], u.d[2])};
      for (int t = 0; t < 3; ++t) tr.covariates.emplace_back(0);
    } else {
      const double y1 = outcome1(spec, u.x1, u.d[0], u.u1);
      tr.outcomes = {y1, outcome2(spec, y1, u.d[0], u.d[1], u.u2)};
      tr.covariates.emplace_back(Eigen::VectorXd::Constant(1, u.x1));
      tr.covariates.emplace_back(0);
    }
    trajs.push_back(std::move(tr));
  }
  return PanelDataset(std::move(trajs), spec.covariate_dims());
}

std::vector<double> oracle_welfare_draws(const Dtr& dtr, const DgpSpec& spec, std::size_t n_eval,
                                         std::uint64_t seed, const std::optional<WelfareWeights>& weights) {
  const int T = spec.stage_count();
  if (dtr.stage_count() != T) throw DimensionError("DTR has " + std::to_string(dtr.stage_count()) +
                                                   " stages; " + spec.name() + " has " + std::to_string(T));
  const WelfareWeights w = weights ? *weights : spec.default_weights();
  w.validate(T);
  const double c1 = dtr.centering(1), c2 = dtr.centering(2);
  DrawStream stream(spec, seed);
  std::vector<double> out(n_eval);
  for (std::size_t i = 0; i < n_eval; ++i) {
    const UnitDraw u = stream.next();
    if (spec.id == DgpId::Remark1) {
      // H1 = (), H2 = (d1, y1), H3 = (d1, d2, y1, y2) with y1 = y2 = 0.
      const Eigen::VectorXd h1(0);
      const int d1 = dtr[1](h1);
      const Eigen::Vector2d h2(d1, 0.0 - c1);
      const int d2 = dtr[2](h2);
      const Eigen::Vector4d h3(d1, d2, 0.0 - c1, 0.0 - c2);
      const int d3 = dtr[3](h3);
      out[i] = w[3] * remark_y3(spec, d1, d2, d3);
      continue;
    }
    const Eigen::Matrix<double, 1, 1> h1(u.x1);
    const int d1 = dtr[1](h1);
    const double y1 = outcome1(spec, u.x1, d1, u.u1);
    const Eigen::Vector3d h2(d1, y1 - c1, u.x1);
    const int d2 = dtr[2](h2);
    const double y2 = outcome2(spec, y1, d1, d2, u.u2);
    out[i] = w[1] * y1 + w[2] * y2;
  }
  return out;
}

double oracle_welfare(const Dtr& dtr, const DgpSpec& spec, std::size_t n_eval, std::uint64_t seed,
                      const std::optional<WelfareWeights>& weights) {
  if (n_eval == 0) throw Error("oracle_welfare needs n_eval >= 1");
  const auto draws = oracle_welfare_draws(dtr, spec, n_eval, seed, weights);
  return std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(n_eval);
}

std::string to_string(McEstimator e) {
  switch (e) {
    case McEstimator::QLearning:
      return "Q-learning";
    case McEstimator::Backward:
      return "B-DEWM";
    case McEstimator::Simultaneous:
      return "S-DEWM";
  }
  return "?";
}

McEstimator parse_estimator(const std::string& text) {
  if (text == "qlearning" || text == "Q-learning") return McEstimator::QLearning;
  if (text == "backward" || text == "B-DEWM") return McEstimator::Backward;
  if (text == "simultaneous" || text == "S-DEWM") return McEstimator::Simultaneous;
  throw Error("unknown estimator '" + text + "'");
}

double McCell::mean() const {
  if (welfare.empty()) return 0.0;
  return std::accumulate(welfare.begin(), welfare.end(), 0.0) / static_cast<double>(welfare.size());
}

double McCell::median() const {
  if (welfare.empty()) return 0.0;
  auto v = welfare;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double McCell::sd() const {
  if (welfare.size() < 2) return 0.0;
  const double mu = mean();
  double ss = 0.0;
  for (double x : welfare) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(welfare.size() - 1));
}

const McCell& McReport::cell(McEstimator e, DgpId d, std::size_t n) const {
  for (const auto& c : cells)
    if (c.estimator == e && c.dgp == d && c.n == n) return c;
  throw Error("no Monte Carlo cell " + to_string(e) + "/" + DgpSpec::make(d).name() + "/n=" + std::to_string(n));
}

std::string McReport::to_text() const {
  std::vector<std::size_t> ns;
  std::vector<std::pair<DgpId, McEstimator>> rows;
  for (const auto& c : cells) {
    if (std::find(ns.begin(), ns.end(), c.n) == ns.end()) ns.push_back(c.n);
    const std::pair<DgpId, McEstimator> key{c.dgp, c.estimator};
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  std::sort(ns.begin(), ns.end());
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return static_cast<int>(a.first) < static_cast<int>(b.first); });

  std::ostringstream out;
  char buf[128];
  out << "reps=" << reps << " n_eval=" << n_eval << " seed=" << seed << "\n";
  std::snprintf(buf, sizeof buf, "%-12s %-8s", "", "");
  out << buf;
  for (auto n : ns) {
    std::snprintf(buf, sizeof buf, " | %-24s", ("n=" + std::to_string(n)).c_str());
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof buf, "%-12s %-8s", "Method", "DGP");
  out << buf;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    std::snprintf(buf, sizeof buf, " | %7s %8s %7s", "Mean", "Median", "SD");
    out << buf;
  }
  out << "\n";
  bool single = false;
  DgpId last = rows.empty() ? DgpId::Dgp1 : rows.front().first;
  for (const auto& [dgp, est] : rows) {
    if (dgp != last) {
      out << std::string(12 + 1 + 8 + ns.size() * 27, '-') << "\n";
      last = dgp;
    }
    std::string label = DgpSpec::make(dgp).name();
    if (label.rfind("DGP", 0) == 0) label = label.substr(3);
    std::snprintf(buf, sizeof buf, "%-12s %-8s", to_string(est).c_str(), label.c_str());
    out << buf;
    for (auto n : ns) {
      bool found = false;
      for (const auto& c : cells) {
        if (c.estimator != est || c.dgp != dgp || c.n != n) continue;
        std::snprintf(buf, sizeof buf, " | %7.3f %8.3f %7.3f", c.mean(), c.median(), c.sd());
        out << buf;
        single = single || c.single_replication();
        found = true;
      }
      if (!found) {
        std::snprintf(buf, sizeof buf, " | %7s %8s %7s", "-", "-", "-");
        out << buf;
      }
    }
    out << "\n";
  }
  if (single) out << "note: single replication; SD reported as 0\n";
  return out.str();
}

void McReport::write_csv(std::ostream& out) const {
  out << "estimator,dgp,n,rep,data_seed,eval_seed,welfare\n";
  char buf[64];
  for (const auto& c : cells) {
    for (std::size_t r = 0; r < c.welfare.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", c.welfare[r]);
      out << to_string(c.estimator) << ',' << DgpSpec::make(c.dgp).name() << ',' << c.n << ',' << r + 1 << ','
          << c.data_seeds[r] << ',' << c.eval_seeds[r] << ',' << buf << '\n';
    }
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, DgpId dgp, std::size_t n, std::size_t rep, int stream) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(dgp));
  h = splitmix64(h ^ static_cast<std::uint64_t>(n));
  h = splitmix64(h ^ static_cast<std::uint64_t>(rep));
  return splitmix64(h ^ static_cast<std::uint64_t>(stream));
}

PolicyClassSpec table1_classes() {
  PolicyClassSpec c;
  c.stages = parse_stage_classes("table1");
  return c;
}

McReport run_monte_carlo(const std::vector<McEstimator>& estimators, const std::vector<DgpSpec>& specs,
                         const std::vector<std::size_t>& ns, const McOptions& options) {
  if (options.reps < 1) throw Error("Monte Carlo needs reps >= 1");
  if (options.n_eval < 1) throw Error("Monte Carlo needs n_eval >= 1");

  McReport report;
  report.seed = options.seed;
  report.reps = options.reps;
  report.n_eval = options.n_eval;

  struct Task {
    std::size_t spec, n, rep;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < specs.size(); ++s)
    for (std::size_t k = 0; k < ns.size(); ++k) {
      for (auto e : estimators) {
        McCell c{e, specs[s].id, ns[k], {}, {}, {}};
        c.welfare.resize(options.reps);
        c.data_seeds.resize(options.reps);
        c.eval_seeds.resize(options.reps);
        report.cells.push_back(std::move(c));
      }
      for (std::size_t r = 0; r < options.reps; ++r) tasks.push_back({s, k, r});
    }

  auto run_task = [&](const Task& task) {
    const DgpSpec& spec = specs[task.spec];
    const std::size_t n = ns[task.n];
    const std::uint64_t data_seed = derive_seed(options.seed, spec.id, n, task.rep, 0);
    const std::uint64_t eval_seed = derive_seed(options.seed, spec.id, n, task.rep, 1);
    const PanelDataset raw = generate_dgp(spec, n, data_seed);
    const PropensityModel pm = spec.propensity();

    EstimationConfig cfg;
    cfg.weights = spec.default_weights();
    cfg.class_spec = spec.id == DgpId::Remark1 ? constant_classes(3) : table1_classes();
    cfg.ascent = options.ascent;
    cfg.exhaustive_cap = options.exhaustive_cap;
    cfg.seed = derive_seed(options.seed, spec.id, n, task.rep, 2);

    std::optional<PanelDataset> dewm_data;
    std::optional<EstimationContext> ctx;
    const std::size_t base = (task.spec * ns.size() + task.n) * estimators.size();
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      FitResult fit;
      try {
        if (estimators[e] == McEstimator::QLearning) {
          fit = options.demean_qlearning ? fit_qlearning(demean_outcomes(raw), pm, cfg)
                                         : fit_qlearning(raw, pm, cfg);
        } else {
          if (!ctx) {
            dewm_data.emplace(options.demean_dewm ? demean_outcomes(raw) : raw);
            ctx.emplace(*dewm_data, pm, cfg.class_spec);
          }
          fit = estimators[e] == McEstimator::Backward ? fit_backward(*ctx, cfg) : fit_simultaneous(*ctx, cfg);
        }
      } catch (const std::exception& ex) {
        throw Error(to_string(estimators[e]) + ": " + ex.what());
      }
      auto& cell = report.cells[base + e];
      cell.welfare[task.rep] = oracle_welfare(fit.dtr, spec, options.n_eval, eval_seed, cfg.weights);
      cell.data_seeds[task.rep] = data_seed;
      cell.eval_seeds[task.rep] = eval_seed;
    }
  };

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t err_task = tasks.size();
  std::string err_msg;
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      try {
        run_task(tasks[k]);
      } catch (const std::exception& ex) {
        const auto& t = tasks[k];
        std::lock_guard lock(err_mu);
        // Keep the lowest failing task so the reported error is deterministic.
        if (k < err_task) {
          err_task = k;
          err_msg = specs[t.spec].name() + " n=" + std::to_string(ns[t.n]) + " rep " + std::to_string(t.rep + 1) +
                    ": " + ex.what();
        }
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(tasks.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (err_task < tasks.size()) throw Error("Monte Carlo cell " + err_msg);
  return report;
}

}  // namespace dewm
