#include "dewm/milp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "dewm/error.hpp"

namespace dewm {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

std::string zname(int t, std::size_t i) { return "z" + std::to_string(t) + "_" + std::to_string(i + 1); }
std::string bname(int t, std::size_t j) { return "b" + std::to_string(t) + "_" + std::to_string(j); }
std::string kname(int t) { return "k" + std::to_string(t); }

// Per-stage ingredients on the dataset's own units.
struct StageData {
  MatrixXd features;  // n x p, class-selected history columns
  std::vector<int> d;
  std::vector<double> y, e;
};

StageData stage_data(const PanelDataset& ds, const PropensityModel& pm, const StageClass& cls, int t) {
  StageData s;
  const MatrixXd h = ds.history_matrix(t);
  s.features.resize(h.rows(), static_cast<Index>(cls.selector.size()));
  for (std::size_t j = 0; j < cls.selector.size(); ++j) s.features.col(static_cast<Index>(j)) = h.col(cls.selector[j]);
  s.d = ds.treatments(t);
  const auto y = ds.outcomes(t);
  s.y.assign(y.data(), y.data() + y.size());
  const auto e = realized_propensities(pm, t, h, s.d);
  s.e.assign(e.data(), e.data() + e.size());
  return s;
}

void check_two_stage(const PanelDataset& ds, const PropensityModel& pm, const WelfareWeights& w,
                     const PolicyClassSpec& classes) {
  if (ds.stage_count() != 2) throw Error("MILP export supports T = 2 only");
  if (pm.stage_count() != 2) throw DimensionError("propensity model must have two stages");
  w.validate(2);
  classes.validate(ds);
}

class Builder {
 public:
  Builder(MilpModel& m, const PanelDataset& ds, const PolicyClassSpec& classes) : m_(m), ds_(ds), classes_(classes) {}

  // Declares the stage-t decision variables and returns the stage's data.
  void declare_stage(int t, const StageData& sd) {
    const auto& cls = classes_[t];
    m_.stages.push_back(t);
    if (cls.kind == StageClass::Kind::Linear) {
      for (std::size_t j = 0; j < cls.beta_size(); ++j) {
        MilpVariable v{bname(t, j), false, -1.0, 1.0};
        if (cls.sign(j) == SignConstraint::NonNeg) v.lower = 0.0;
        if (cls.sign(j) == SignConstraint::NonPos) v.upper = 0.0;
        m_.variables.push_back(v);
      }
      std::vector<double> C(ds_.size());
      for (std::size_t i = 0; i < ds_.size(); ++i)
        C[i] = 1.0 + 1.0 + sd.features.row(static_cast<Index>(i)).lpNorm<1>();
      m_.big_m.push_back(std::move(C));
    } else {
      m_.big_m.emplace_back();
    }
  }

  void declare_binaries(bool with_product) {
    for (std::size_t i = 0; i < ds_.size(); ++i) {
      for (int t : m_.stages) m_.variables.push_back({zname(t, i), true, 0.0, 1.0});
      if (with_product) m_.variables.push_back({"z3_" + std::to_string(i + 1), true, 0.0, 1.0});
    }
    for (int t : m_.stages)
      if (classes_[t].kind == StageClass::Kind::Constants) m_.variables.push_back({kname(t), true, 0.0, 1.0});
  }

  void indicator_rows(const std::vector<const StageData*>& data) {
    const double eps = m_.eps_strict;
    for (std::size_t i = 0; i < ds_.size(); ++i) {
      for (std::size_t s = 0; s < m_.stages.size(); ++s) {
        const int t = m_.stages[s];
        const auto& cls = classes_[t];
        const std::string z = zname(t, i);
        const std::string tag = std::to_string(t) + "_" + std::to_string(i + 1);
        if (cls.kind == StageClass::Kind::Constants) {
          m_.rows.push_back({"fix" + tag, {{z, 1.0}, {kname(t), -1.0}}, RowSense::Equal, 0.0});
          continue;
        }
        std::vector<MilpTerm> score{{bname(t, 0), 1.0}};
        for (std::size_t j = 0; j < cls.selector.size(); ++j) {
          const double h = data[s]->features(static_cast<Index>(i), static_cast<Index>(j));
          if (h != 0.0) score.push_back({bname(t, j + 1), h});
        }
        const double C = m_.big_m[s][i];
        MilpRow lo{"ind" + tag + "_lo", score, RowSense::LessEqual, -eps * C};
        lo.terms.push_back({z, -C * (1.0 + eps)});
        MilpRow hi{"ind" + tag + "_hi", {}, RowSense::LessEqual, C};
        for (const auto& term : score) hi.terms.push_back({term.var, -term.coef});
        hi.terms.push_back({z, C});
        m_.rows.push_back(std::move(lo));
        m_.rows.push_back(std::move(hi));
      }
    }
  }

 private:
  MilpModel& m_;
  const PanelDataset& ds_;
  const PolicyClassSpec& classes_;
};

}  // namespace

MilpModel build_backward_milp(const PanelDataset& ds, const PropensityModel& pm, const WelfareWeights& w,
                              const PolicyClassSpec& classes, int step, const std::optional<Dtr>& fitted) {
  check_two_stage(ds, pm, w, classes);
  if (step != 1 && step != 2) throw Error("backward MILP step must be 1 or 2");
  if (step == 2 && !fitted) throw Error("backward MILP step 2 needs the fitted stage-2 rule");
  if (fitted && fitted->stage_count() != 2) throw DimensionError("fitted DTR must have two stages");

  MilpModel m;
  const int t = step == 1 ? 2 : 1;
  m.title = "dewm backward step " + std::to_string(step) + " (stage " + std::to_string(t) + "), n=" +
            std::to_string(ds.size());
  const StageData s1 = stage_data(ds, pm, classes[1], 1);
  const StageData s2 = stage_data(ds, pm, classes[2], 2);
  const StageData& sd = t == 1 ? s1 : s2;
  Builder b(m, ds, classes);
  b.declare_stage(t, sd);
  b.declare_binaries(false);

  std::vector<int> g2;
  if (step == 2) {
    const MatrixXd h2 = rule_inputs(ds, *fitted, 2);
    for (Index i = 0; i < h2.rows(); ++i) g2.push_back((*fitted)[2](h2.row(i)));
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double a;
    int d;
    if (step == 1) {
      d = s2.d[i];
      a = w[2] * s2.y[i] / s2.e[i];
    } else {
      d = s1.d[i];
      const int match2 = g2[i] == s2.d[i] ? 1 : 0;
      a = w[1] * s1.y[i] / s1.e[i] + match2 * w[2] * s2.y[i] / (s1.e[i] * s2.e[i]);
    }
    m.objective.push_back({zname(t, i), (2 * d - 1) * a});
    m.objective_constant += (1 - d) * a;
  }
  b.indicator_rows({&sd});

  const auto kind = classes.intertemporal;
  if (kind != Intertemporal::None) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      // Step 1 bounds z2 by the observed D1; step 2 bounds z1 by the observed D2.
      const double other = step == 1 ? s1.d[i] : s2.d[i];
      MilpRow r{"it_" + std::to_string(i + 1), {{zname(t, i), 1.0}}, RowSense::LessEqual, 0.0};
      const bool start = kind == Intertemporal::StartTime, stop = kind == Intertemporal::StopTime;
      if (kind == Intertemporal::OneShot) {
        r.rhs = 1.0 - other;
      } else if ((start && step == 1) || (stop && step == 2)) {
        r.sense = RowSense::GreaterEqual;
        r.rhs = other;
      } else {
        r.rhs = other;
      }
      m.rows.push_back(std::move(r));
    }
  }
  return m;
}

MilpModel build_simultaneous_milp(const PanelDataset& ds, const PropensityModel& pm, const WelfareWeights& w,
                                  const PolicyClassSpec& classes, const std::optional<BudgetSpec>& budget) {
  check_two_stage(ds, pm, w, classes);
  if (budget) budget->validate(2);
  MilpModel m;
  m.title = "dewm simultaneous, n=" + std::to_string(ds.size());
  const StageData s1 = stage_data(ds, pm, classes[1], 1);
  const StageData s2 = stage_data(ds, pm, classes[2], 2);
  Builder b(m, ds, classes);
  b.declare_stage(1, s1);
  b.declare_stage(2, s2);
  b.declare_binaries(true);

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int d1 = s1.d[i], d2 = s2.d[i];
    const double v1 = w[1] * s1.y[i] / s1.e[i];
    const double v2 = w[2] * s2.y[i] / (s1.e[i] * s2.e[i]);
    const int sg1 = 2 * d1 - 1, sg2 = 2 * d2 - 1;
    m.objective.push_back({zname(1, i), sg1 * v1 + sg1 * (1 - d2) * v2});
    m.objective.push_back({zname(2, i), (1 - d1) * sg2 * v2});
    m.objective.push_back({"z3_" + std::to_string(i + 1), sg1 * sg2 * v2});
    m.objective_constant += (1 - d1) * v1 + (1 - d1) * (1 - d2) * v2;
  }
  b.indicator_rows({&s1, &s2});

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string z1 = zname(1, i), z2 = zname(2, i), z3 = "z3_" + std::to_string(i + 1);
    const std::string tag = std::to_string(i + 1);
    m.rows.push_back({"mc" + tag + "_a", {{z3, 1.0}, {z1, -1.0}}, RowSense::LessEqual, 0.0});
    m.rows.push_back({"mc" + tag + "_b", {{z3, 1.0}, {z2, -1.0}}, RowSense::LessEqual, 0.0});
    m.rows.push_back({"mc" + tag + "_c", {{z3, 1.0}, {z1, -1.0}, {z2, -1.0}}, RowSense::GreaterEqual, -1.0});
  }

  const auto kind = classes.intertemporal;
  if (kind != Intertemporal::None) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::string name = "it_" + std::to_string(i + 1);
      switch (kind) {
        case Intertemporal::StartTime:
          m.rows.push_back({name, {{zname(2, i), 1.0}, {zname(1, i), -1.0}}, RowSense::GreaterEqual, 0.0});
          break;
        case Intertemporal::StopTime:
          m.rows.push_back({name, {{zname(2, i), 1.0}, {zname(1, i), -1.0}}, RowSense::LessEqual, 0.0});
          break;
        case Intertemporal::OneShot:
          m.rows.push_back({name, {{zname(1, i), 1.0}, {zname(2, i), 1.0}}, RowSense::LessEqual, 1.0});
          break;
        case Intertemporal::None:
          break;
      }
    }
  }

  if (budget && ds.size() > 0) {
    const double n = static_cast<double>(ds.size());
    for (int r = 1; r <= budget->row_count(); ++r) {
      const auto& row = budget->rows[r - 1];
      MilpRow br{"budget_" + std::to_string(r), {}, RowSense::LessEqual, row.C + budget->alpha_n};
      for (std::size_t i = 0; i < ds.size(); ++i)
        for (int t = 1; t <= 2; ++t)
          if (row.K[t - 1] != 0.0) br.terms.push_back({zname(t, i), row.K[t - 1] / n});
      m.rows.push_back(std::move(br));
    }
  }
  return m;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_terms(std::ostream& out, const std::vector<MilpTerm>& terms, std::optional<double> constant = {}) {
  int on_line = 0;
  auto emit = [&](double coef, const std::string& var) {
    if (on_line == 6) {
      out << "\n  ";
      on_line = 0;
    }
    out << (std::signbit(coef) ? " - " : " + ") << num(std::abs(coef));
    if (!var.empty()) out << ' ' << var;
    ++on_line;
  };
  for (const auto& t : terms) emit(t.coef, t.var);
  if (constant) emit(*constant, {});
}

const char* sense_text(RowSense s) {
  switch (s) {
    case RowSense::LessEqual:
      return "<=";
    case RowSense::GreaterEqual:
      return ">=";
    case RowSense::Equal:
      return "=";
  }
  return "=";
}

}  // namespace

void write_lp(const MilpModel& model, std::ostream& out) {
  out << "\\ " << model.title << "\n";
  out << "Maximize\n obj:";
  std::optional<double> constant;
  if (model.objective_constant != 0.0 || model.objective.empty()) constant = model.objective_constant;
  write_terms(out, model.objective, constant);
  out << "\nSubject To\n";
  for (const auto& r : model.rows) {
    out << ' ' << r.name << ':';
    write_terms(out, r.terms);
    out << ' ' << sense_text(r.sense) << ' ' << num(r.rhs) << '\n';
  }
  out << "Bounds\n";
  for (const auto& v : model.variables)
    if (!v.binary) out << ' ' << num(v.lower) << " <= " << v.name << " <= " << num(v.upper) << '\n';
  out << "Binaries\n";
  for (const auto& v : model.variables)
    if (v.binary) out << ' ' << v.name << '\n';
  out << "End\n";
}

std::string write_lp(const MilpModel& model) {
  std::ostringstream ss;
  write_lp(model, ss);
  return ss.str();
}

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool parse_double(const std::string& tok, double& v) {
  if (tok.empty()) return false;
  const char c = tok[0];
  if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || lower(tok) == "inf" || lower(tok) == "infinity"))
    return false;
  char* end = nullptr;
  v = std::strtod(tok.c_str(), &end);
  return end && *end == '\0';
}

bool is_sense(const std::string& tok) {
  return tok == "<=" || tok == ">=" || tok == "=" || tok == "<" || tok == ">" || tok == "=<" || tok == "=>";
}

RowSense to_sense(const std::string& tok) {
  if (tok == "<=" || tok == "<" || tok == "=<") return RowSense::LessEqual;
  if (tok == ">=" || tok == ">" || tok == "=>") return RowSense::GreaterEqual;
  return RowSense::Equal;
}

// Parses "[+|-] [number] [name]" terms from tok[pos] until a sense token or
// the end. Bare numbers accumulate into `constant`.
std::vector<MilpTerm> parse_expression(const std::vector<std::string>& tok, std::size_t& pos, double& constant) {
  std::vector<MilpTerm> terms;
  while (pos < tok.size() && !is_sense(tok[pos])) {
    double sign = 1.0;
    while (pos < tok.size() && (tok[pos] == "+" || tok[pos] == "-")) {
      if (tok[pos] == "-") sign = -sign;
      ++pos;
    }
    if (pos >= tok.size() || is_sense(tok[pos])) break;
    double coef = 1.0;
    bool has_num = false;
    double v;
    if (parse_double(tok[pos], v)) {
      coef = v;
      has_num = true;
      ++pos;
    }
    const bool has_var = pos < tok.size() && !is_sense(tok[pos]) && tok[pos] != "+" && tok[pos] != "-";
    if (has_var) {
      terms.push_back({tok[pos], sign * coef});
      ++pos;
    } else if (has_num) {
      constant += sign * coef;
    } else {
      throw Error("LP parse error near token '" + (pos < tok.size() ? tok[pos] : std::string("<end>")) + "'");
    }
  }
  return terms;
}

std::vector<std::string> tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string t;
  while (ss >> t) {
    // Split a leading "name:" from any glued expression text.
    const auto colon = t.find(':');
    if (colon != std::string::npos && colon + 1 < t.size()) {
      out.push_back(t.substr(0, colon + 1));
      out.push_back(t.substr(colon + 1));
    } else {
      out.push_back(t);
    }
  }
  return out;
}

// Expression text may glue a sign to its operand ("-x", "<= -4e-06").
std::vector<std::string> expression_tokens(const std::string& text) {
  std::vector<std::string> out;
  for (auto& t : tokens(text)) {
    if (t.size() > 1 && (t[0] == '+' || t[0] == '-') && t.back() != ':') {
      out.push_back(t.substr(0, 1));
      out.push_back(t.substr(1));
    } else {
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace

MilpModel read_lp(std::istream& in) {
  enum class Section { None, Objective, Constraints, Bounds, Binaries, End };
  Section section = Section::None;
  std::string objective_text, constraint_text;
  std::vector<std::string> bound_lines, binary_tokens;
  MilpModel m;
  std::string line;
  while (std::getline(in, line)) {
    const auto bs = line.find('\\');
    if (bs != std::string::npos) {
      if (bs == 0 && m.title.empty() && line.size() > 2) m.title = line.substr(2);
      line = line.substr(0, bs);
    }
    std::string key = lower(line);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t\r") + 1);
    if (key == "maximize" || key == "maximise" || key == "max") {
      section = Section::Objective;
      continue;
    }
    if (key == "minimize" || key == "minimise" || key == "min") throw Error("LP reader expects a maximization model");
    if (key == "subject to" || key == "such that" || key == "st" || key == "s.t.") {
      section = Section::Constraints;
      continue;
    }
    if (key == "bounds") {
      section = Section::Bounds;
      continue;
    }
    if (key == "binaries" || key == "binary" || key == "bin") {
      section = Section::Binaries;
      continue;
    }
    if (key == "end") {
      section = Section::End;
      continue;
    }
    switch (section) {
      case Section::Objective:
        objective_text += ' ' + line;
        break;
      case Section::Constraints:
        constraint_text += ' ' + line;
        break;
      case Section::Bounds:
        if (!key.empty()) bound_lines.push_back(line);
        break;
      case Section::Binaries:
        for (const auto& t : tokens(line)) binary_tokens.push_back(t);
        break;
      case Section::None:
        if (!key.empty()) throw Error("LP text before the objective section");
        break;
      case Section::End:
        break;
    }
  }

  {
    auto tok = expression_tokens(objective_text);
    std::size_t pos = 0;
    if (pos < tok.size() && tok[pos].back() == ':') ++pos;
    m.objective = parse_expression(tok, pos, m.objective_constant);
    if (pos != tok.size()) throw Error("LP objective has a relational operator");
  }
  {
    auto tok = expression_tokens(constraint_text);
    std::size_t pos = 0;
    int unnamed = 0;
    while (pos < tok.size()) {
      MilpRow r;
      if (tok[pos].back() == ':') {
        r.name = tok[pos].substr(0, tok[pos].size() - 1);
        ++pos;
      } else {
        r.name = "R" + std::to_string(++unnamed);
      }
      double lhs_constant = 0.0;
      r.terms = parse_expression(tok, pos, lhs_constant);
      if (pos >= tok.size()) throw Error("LP row '" + r.name + "' lacks a relational operator");
      r.sense = to_sense(tok[pos++]);
      double sign = 1.0;
      while (pos < tok.size() && (tok[pos] == "+" || tok[pos] == "-")) {
        if (tok[pos] == "-") sign = -sign;
        ++pos;
      }
      double rhs;
      if (pos >= tok.size() || !parse_double(tok[pos], rhs))
        throw Error("LP row '" + r.name + "' lacks a numeric right-hand side");
      ++pos;
      r.rhs = sign * rhs - lhs_constant;
      m.rows.push_back(std::move(r));
    }
  }

  std::map<std::string, std::size_t> index;
  auto variable = [&](const std::string& name) -> MilpVariable& {
    auto it = index.find(name);
    if (it == index.end()) {
      it = index.emplace(name, m.variables.size()).first;
      m.variables.push_back({name, false, 0.0, std::numeric_limits<double>::infinity()});
    }
    return m.variables[it->second];
  };
  for (const auto& bl : bound_lines) {
    const auto tok = tokens(bl);
    auto value = [&](const std::string& t) {
      double v;
      std::string s = t;
      double sign = 1.0;
      if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        sign = s[0] == '-' ? -1.0 : 1.0;
        s = s.substr(1);
      }
      if (!parse_double(s, v)) throw Error("bad LP bound '" + bl + "'");
      return sign * v;
    };
    if (tok.size() == 5 && tok[1] == "<=" && tok[3] == "<=") {
      auto& v = variable(tok[2]);
      v.lower = value(tok[0]);
      v.upper = value(tok[4]);
    } else if (tok.size() == 3 && tok[1] == "<=") {
      variable(tok[0]).upper = value(tok[2]);
    } else if (tok.size() == 3 && tok[1] == ">=") {
      variable(tok[0]).lower = value(tok[2]);
    } else if (tok.size() == 2 && lower(tok[1]) == "free") {
      auto& v = variable(tok[0]);
      v.lower = -std::numeric_limits<double>::infinity();
      v.upper = std::numeric_limits<double>::infinity();
    } else {
      throw Error("unsupported LP bound line '" + bl + "'");
    }
  }
  for (const auto& name : binary_tokens) {
    auto& v = variable(name);
    v.binary = true;
    v.lower = 0.0;
    v.upper = 1.0;
  }
  for (const auto& t : m.objective) variable(t.var);
  for (const auto& r : m.rows)
    for (const auto& t : r.terms) variable(t.var);
  return m;
}

MilpAssignment milp_assignment(const MilpModel& model, const PanelDataset& ds, const PolicyClassSpec& classes,
                               const Dtr& dtr) {
  if (dtr.stage_count() != ds.stage_count()) throw DimensionError("dtr stage count differs from data");
  MilpAssignment a;
  std::vector<std::vector<int>> z(static_cast<std::size_t>(ds.stage_count()) + 1);
  for (int t : model.stages) {
    const auto& cls = classes[t];
    const auto& rule = dtr[t];
    const MatrixXd h = rule_inputs(ds, dtr, t);
    for (Index i = 0; i < h.rows(); ++i) z[t].push_back(rule(h.row(i)));
    if (cls.kind == StageClass::Kind::Constants) {
      if (!rule.is_constant()) throw Error("stage " + std::to_string(t) + " rule is not a constant");
      a[kname(t)] = rule.value;
      continue;
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Index>(cls.beta_size()));
    if (rule.is_constant()) {
      beta[0] = rule.value ? 1.0 : -1.0;
    } else {
      if (rule.selector != cls.selector) throw Error("stage " + std::to_string(t) + " rule selector differs from class");
      beta = rule.beta;
      // Fold the DTR's outcome centering into the intercept so the
      // coefficients act on the dataset's own units.
      if (ds.size() > 0) {
        const MatrixXd raw = ds.history_matrix(t);
        for (std::size_t j = 0; j < cls.selector.size(); ++j)
          beta[0] += beta[static_cast<Index>(j) + 1] * (h(0, cls.selector[j]) - raw(0, cls.selector[j]));
      }
    }
    const double scale = beta.lpNorm<Eigen::Infinity>();
    if (scale > 0.0) beta /= scale;
    for (Index j = 0; j < beta.size(); ++j) a[bname(t, static_cast<std::size_t>(j))] = beta[j];
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int t : model.stages) a[zname(t, i)] = z[t][i];
    if (model.stages.size() == 2) a["z3_" + std::to_string(i + 1)] = z[1][i] * z[2][i];
  }
  return a;
}

double evaluate_objective(const MilpModel& model, const MilpAssignment& values) {
  double total = model.objective_constant;
  for (const auto& t : model.objective) {
    const auto it = values.find(t.var);
    if (it == values.end()) throw Error("no value for LP variable '" + t.var + "'");
    total += t.coef * it->second;
  }
  return total;
}

std::vector<std::string> violated_rows(const MilpModel& model, const MilpAssignment& values, double tol) {
  std::vector<std::string> bad;
  for (const auto& r : model.rows) {
    double lhs = 0.0;
    for (const auto& t : r.terms) {
      const auto it = values.find(t.var);
      if (it == values.end()) throw Error("no value for LP variable '" + t.var + "'");
      lhs += t.coef * it->second;
    }
    const bool ok = r.sense == RowSense::LessEqual      ? lhs <= r.rhs + tol
                    : r.sense == RowSense::GreaterEqual ? lhs >= r.rhs - tol
                                                        : std::abs(lhs - r.rhs) <= tol;
    if (!ok) bad.push_back(r.name);
  }
  return bad;
}

}  // namespace dewm
