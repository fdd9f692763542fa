#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dewm/data.hpp"
#include "dewm/error.hpp"
#include "dewm/estimators.hpp"
#include "dewm/keyvalue.hpp"
#include "dewm/milp.hpp"
#include "dewm/policy.hpp"
#include "dewm/propensity.hpp"
#include "dewm/simlab.hpp"
#include "dewm/welfare.hpp"

namespace dewm::cli {

namespace {

struct ModelFlags {
  std::string data;
  std::string method;
  std::string gamma;
  std::string cls;
  std::string constraint = "none";
  std::vector<std::string> budget;
  std::optional<double> alpha;
  double delta = 0.05;
  std::string propensity = "known:0.5";
  std::string demean = "auto";
  std::uint64_t seed = 0;
  int restarts = 20;
  std::string out;
};

void add_data_flag(CLI::App* app, ModelFlags& f) {
  app->add_option("--data", f.data, "panel CSV (id, d<t>, y<t>, x<t>_<j> columns)")->required();
}

void add_model_flags(CLI::App* app, ModelFlags& f) {
  app->add_option("--gamma", f.gamma, "welfare weights, comma list (default: last stage only)");
  app->add_option("--class", f.cls, "per-stage classes, e.g. 'linear:0;linear:0,1' or 'table1' (default: const)");
  app->add_option("--constraint", f.constraint, "intertemporal constraint")
      ->check(CLI::IsMember({"none", "oneshot", "start", "stop"}));
  app->add_option("--budget", f.budget, "budget row as two tokens K=<k1,..,kT> C=<c>; repeat for more rows")
      ->expected(2)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app->add_option("--alpha", f.alpha, "budget slack alpha_n (default sqrt(log(6B/delta)/(2n)))");
  app->add_option("--delta", f.delta, "confidence level for the default alpha_n");
  app->add_option("--propensity", f.propensity, "known:<p> or logistic:<selector per stage, ';'-separated>");
  app->add_option("--demean", f.demean, "demean outcomes before fitting (auto: on except for qlearning)")
      ->check(CLI::IsMember({"on", "off", "auto"}));
}

std::ostream& open_out(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path);
  if (!file) throw Error("cannot open '" + path + "' for writing");
  return file;
}

WelfareWeights parse_gamma(const std::string& text, int T) {
  WelfareWeights w;
  if (text.empty()) {
    w.gamma.assign(T, 0.0);
    w.gamma.back() = 1.0;
  } else {
    w.gamma = parse_number_list(text);
  }
  w.validate(T);
  return w;
}

PolicyClassSpec parse_classes(const ModelFlags& f, int T) {
  PolicyClassSpec spec =
      f.cls.empty() ? constant_classes(T) : PolicyClassSpec{parse_stage_classes(f.cls), Intertemporal::None};
  spec.intertemporal = parse_intertemporal(f.constraint);
  return spec;
}

std::optional<BudgetSpec> parse_budget(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return std::nullopt;
  if (tokens.size() % 2) throw Error("--budget takes K=<list> C=<value> pairs");
  BudgetSpec spec;
  for (std::size_t k = 0; k < tokens.size(); k += 2) {
    BudgetRow row;
    bool have_k = false, have_c = false;
    for (const auto& tok : {tokens[k], tokens[k + 1]}) {
      if (tok.rfind("K=", 0) == 0) {
        row.K = parse_number_list(tok.substr(2));
        have_k = true;
      } else if (tok.rfind("C=", 0) == 0) {
        const auto c = parse_number_list(tok.substr(2));
        if (c.size() != 1) throw Error("budget token '" + tok + "' must hold one number");
        row.C = c[0];
        have_c = true;
      } else {
        throw Error("bad budget token '" + tok + "' (expected K=<list> or C=<value>)");
      }
    }
    if (!have_k || !have_c) throw Error("budget row needs both K= and C=");
    spec.rows.push_back(std::move(row));
  }
  return spec;
}

PropensityModel parse_propensity(const std::string& text, const PanelDataset& ds) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : text.substr(colon + 1);
  const int T = ds.stage_count();
  if (kind == "known") {
    const auto p = parse_number_list(arg);
    if (p.size() != 1 || !(p[0] > 0.0 && p[0] < 1.0)) throw Error("bad --propensity '" + text + "'");
    return known_propensity(T, p[0]);
  }
  if (kind == "logistic") {
    std::vector<std::vector<int>> selectors;
    std::size_t start = 0;
    while (true) {
      const auto semi = arg.find(';', start);
      selectors.push_back(parse_int_list(arg.substr(start, semi - start)));
      if (semi == std::string::npos) break;
      start = semi + 1;
    }
    if (static_cast<int>(selectors.size()) != T)
      throw Error("--propensity logistic needs " + std::to_string(T) + " ';'-separated selectors");
    return fit_logistic_propensity(ds, selectors);
  }
  throw Error("bad --propensity '" + text + "' (expected known:<p> or logistic:<selectors>)");
}

bool demean_for(const ModelFlags& f) {
  if (f.demean == "auto") return f.method != "qlearning";
  return f.demean == "on";
}

struct Prepared {
  PanelDataset data;
  PropensityModel pm;
  EstimationConfig cfg;
};

Prepared prepare(const ModelFlags& f) {
  PanelDataset raw = load_panel(f.data);
  PanelDataset ds = demean_for(f) ? demean_outcomes(raw) : std::move(raw);
  const int T = ds.stage_count();
  EstimationConfig cfg;
  cfg.weights = parse_gamma(f.gamma, T);
  cfg.class_spec = parse_classes(f, T);
  cfg.budget = parse_budget(f.budget);
  cfg.alpha = f.alpha;
  cfg.delta = f.delta;
  cfg.seed = f.seed;
  cfg.ascent.restarts = f.restarts;
  cfg.validate(T);
  if (cfg.budget) cfg.budget->validate(T);
  PropensityModel pm = parse_propensity(f.propensity, ds);
  return {std::move(ds), std::move(pm), std::move(cfg)};
}

void run_estimate(const ModelFlags& f, std::ostream& out) {
  const Prepared p = prepare(f);
  FitResult r;
  if (f.method == "backward") {
    r = fit_backward(p.data, p.pm, p.cfg);
  } else if (f.method == "simultaneous") {
    r = p.cfg.budget ? fit_simultaneous_budget(p.data, p.pm, p.cfg) : fit_simultaneous(p.data, p.pm, p.cfg);
  } else {
    r = fit_qlearning(p.data, p.pm, p.cfg);
  }
  std::ofstream file;
  write_fit_result(r, open_out(f.out, file, out));
}

void run_export(const ModelFlags& f, int step, const std::string& fitted_path, std::ostream& out) {
  const Prepared p = prepare(f);
  MilpModel model;
  if (f.method == "backward") {
    if (p.cfg.budget) throw Error("budget rows are only exported for --method simultaneous");
    std::optional<Dtr> fitted;
    if (step == 2) fitted = fitted_path.empty() ? fit_backward(p.data, p.pm, p.cfg).dtr : load_dtr(fitted_path);
    model = build_backward_milp(p.data, p.pm, p.cfg.weights, p.cfg.class_spec, step, fitted);
  } else {
    std::optional<BudgetSpec> budget = p.cfg.budget;
    if (budget)
      budget->alpha_n = p.cfg.alpha ? *p.cfg.alpha : default_alpha(budget->row_count(), p.cfg.delta, p.data.size());
    model = build_simultaneous_milp(p.data, p.pm, p.cfg.weights, p.cfg.class_spec, budget);
  }
  std::ofstream file;
  write_lp(model, open_out(f.out, file, out));
}

struct EvalFlags {
  std::string dtr, data, dgp, gamma, propensity = "known:0.5", demean = "off", out;
  std::vector<std::string> budget;
  std::optional<double> alpha;
  double delta = 0.05;
  std::size_t n_eval = 100000;
  std::uint64_t seed = 0;
};

void run_evaluate(const EvalFlags& f, std::ostream& out) {
  const Dtr dtr = load_dtr(f.dtr);
  std::ofstream file;
  std::ostream& os = open_out(f.out, file, out);
  if (!f.dgp.empty()) {
    const DgpSpec spec = DgpSpec::make(parse_dgp(f.dgp));
    const auto w = f.gamma.empty() ? spec.default_weights() : parse_gamma(f.gamma, spec.stage_count());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", oracle_welfare(dtr, spec, f.n_eval, f.seed, w));
    os << "{\"dgp\":\"" << spec.name() << "\",\"n_eval\":" << f.n_eval << ",\"seed\":" << f.seed
       << ",\"oracle_welfare\":" << buf << "}\n";
    return;
  }
  PanelDataset ds = load_panel(f.data);
  if (f.demean == "on") ds = demean_outcomes(ds);
  const int T = ds.stage_count();
  const auto w = parse_gamma(f.gamma, T);
  const PropensityModel pm = parse_propensity(f.propensity, ds);
  auto budget = parse_budget(f.budget);
  if (budget) {
    budget->alpha_n = f.alpha ? *f.alpha : default_alpha(budget->row_count(), f.delta, ds.size());
    budget->validate(T);
  }
  os << welfare_report(ds, dtr, pm, w, budget).to_json() << '\n';
}

struct SimFlags {
  std::string dgp = "1", out;
  std::size_t n = 200;
  std::uint64_t seed = 0;
};

void run_simulate(const SimFlags& f, std::ostream& out) {
  const PanelDataset ds = generate_dgp(DgpSpec::make(parse_dgp(f.dgp)), f.n, f.seed);
  std::ofstream file;
  write_panel(ds, open_out(f.out, file, out));
}

struct TableFlags {
  std::size_t reps = 100, n_eval = 3000;
  std::uint64_t seed = 1;
  std::vector<std::size_t> ns{200, 400, 600};
  std::vector<std::string> dgps{"1", "2", "3"};
  std::vector<std::string> methods{"qlearning", "backward", "simultaneous"};
  int restarts = 20;
  std::string demean = "on";
  std::string csv, out;
};

void run_table(const TableFlags& f, unsigned threads, std::ostream& out) {
  std::vector<McEstimator> estimators;
  for (const auto& m : f.methods) estimators.push_back(parse_estimator(m));
  std::vector<DgpSpec> specs;
  for (const auto& d : f.dgps) specs.push_back(DgpSpec::make(parse_dgp(d)));
  McOptions opt;
  opt.reps = f.reps;
  opt.n_eval = f.n_eval;
  opt.seed = f.seed;
  opt.threads = threads;
  opt.ascent.restarts = f.restarts;
  opt.demean_dewm = f.demean == "on";
  const McReport report = run_monte_carlo(estimators, specs, f.ns, opt);
  std::ofstream file;
  open_out(f.out, file, out) << report.to_text();
  if (!f.csv.empty()) {
    std::ofstream csv(f.csv);
    if (!csv) throw Error("cannot open '" + f.csv + "' for writing");
    report.write_csv(csv);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic treatment regimes by empirical welfare maximization"};
  app.set_config("--config", "", "INI/TOML file with flag values (command-line flags take precedence)");
  app.require_subcommand(1);

  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  ModelFlags est;
  auto* estimate = app.add_subcommand("estimate", "fit a DTR and write a FitResult file");
  add_data_flag(estimate, est);
  estimate->add_option("--method", est.method, "estimator")
      ->required()
      ->check(CLI::IsMember({"backward", "simultaneous", "qlearning"}));
  add_model_flags(estimate, est);
  estimate->add_option("--seed", est.seed, "seed for coordinate-ascent restarts");
  estimate->add_option("--restarts", est.restarts, "coordinate-ascent restarts")->check(CLI::PositiveNumber);
  estimate->add_option("--out", est.out, "output file (default stdout)");

  SimFlags sim;
  auto* simulate = app.add_subcommand("simulate", "draw a dataset from a built-in DGP");
  simulate->add_option("--dgp", sim.dgp, "1, 2, 3 or remark1");
  simulate->add_option("--n", sim.n, "sample size")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--out", sim.out, "output CSV (default stdout)");

  EvalFlags ev;
  auto* evaluate = app.add_subcommand("evaluate", "score a DTR on data (IPW) or against a DGP oracle");
  evaluate->add_option("--dtr", ev.dtr, "DTR or FitResult file")->required();
  auto* ev_data = evaluate->add_option("--data", ev.data, "panel CSV");
  auto* ev_dgp = evaluate->add_option("--dgp", ev.dgp, "built-in DGP for oracle welfare");
  ev_data->excludes(ev_dgp);
  evaluate->add_option("--gamma", ev.gamma, "welfare weights, comma list");
  evaluate->add_option("--propensity", ev.propensity, "known:<p> or logistic:<selectors>");
  evaluate->add_option("--demean", ev.demean, "demean the data before scoring")
      ->check(CLI::IsMember({"on", "off"}));
  evaluate->add_option("--budget", ev.budget, "budget row K=<list> C=<value>; repeat for more rows")
      ->expected(2)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  evaluate->add_option("--alpha", ev.alpha, "budget slack alpha_n");
  evaluate->add_option("--delta", ev.delta, "confidence level for the default alpha_n");
  evaluate->add_option("--n-eval", ev.n_eval, "oracle draws")->check(CLI::PositiveNumber);
  evaluate->add_option("--seed", ev.seed, "oracle seed");
  evaluate->add_option("--out", ev.out, "output file (default stdout)");

  ModelFlags mx;
  int step = 1;
  std::string fitted;
  auto* exportm = app.add_subcommand("export-milp", "write the MILP for an estimator as CPLEX LP text");
  add_data_flag(exportm, mx);
  exportm->add_option("--method", mx.method, "MILP family")
      ->required()
      ->check(CLI::IsMember({"backward", "simultaneous"}));
  add_model_flags(exportm, mx);
  exportm->add_option("--step", step, "backward step: 1 fits stage 2, 2 fits stage 1")->check(CLI::Range(1, 2));
  exportm->add_option("--fitted", fitted, "DTR whose stage-2 rule feeds backward step 2 (default: fit it)");
  exportm->add_option("--out", mx.out, "output .lp file (default stdout)");

  TableFlags tf;
  auto* table = app.add_subcommand("replicate-table1", "Monte Carlo grid over DGPs 1-3 and n = 200, 400, 600");
  table->add_option("--reps", tf.reps, "replications per cell")->check(CLI::PositiveNumber);
  table->add_option("--seed", tf.seed, "master seed");
  table->add_option("--n-eval", tf.n_eval, "oracle draws per replication")->check(CLI::PositiveNumber);
  table->add_option("--ns", tf.ns, "sample sizes")->delimiter(',');
  table->add_option("--dgps", tf.dgps, "DGPs")->delimiter(',');
  table->add_option("--methods", tf.methods, "estimators: qlearning, backward, simultaneous")->delimiter(',');
  table->add_option("--restarts", tf.restarts, "coordinate-ascent restarts for S-DEWM")->check(CLI::PositiveNumber);
  table->add_option("--demean", tf.demean, "demean outcomes before the DEWM fits (Q-learning always uses raw outcomes)")
      ->check(CLI::IsMember({"on", "off"}));
  table->add_option("--threads", threads, "worker threads (default: available cores)")
      ->envname("DEWM_THREADS")
      ->check(CLI::PositiveNumber);
  table->add_option("--csv", tf.csv, "per-replication CSV output");
  table->add_option("--out", tf.out, "table output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (estimate->parsed()) {
      run_estimate(est, out);
    } else if (simulate->parsed()) {
      run_simulate(sim, out);
    } else if (evaluate->parsed()) {
      if (ev.data.empty() && ev.dgp.empty()) throw Error("evaluate needs --data or --dgp");
      run_evaluate(ev, out);
    } else if (exportm->parsed()) {
      run_export(mx, step, fitted, out);
    } else if (table->parsed()) {
      run_table(tf, threads, out);
    }
  } catch (const LoadError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dewm::cli
