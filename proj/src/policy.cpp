#include "dewm/policy.hpp"

#include <fstream>
#include <sstream>

#include "dewm/error.hpp"

namespace dewm {

StageRule StageRule::constant(int stage, int value) {
  if (value != 0 && value != 1) throw Error("constant rule value must be 0 or 1");
  StageRule r;
  r.kind = Kind::Constant;
  r.stage = stage;
  r.value = value;
  return r;
}

StageRule StageRule::linear(int stage, std::vector<int> selector, Eigen::VectorXd beta) {
  if (beta.size() != static_cast<Eigen::Index>(selector.size()) + 1)
    throw DimensionError("linear rule needs 1 + |selector| coefficients");
  StageRule r;
  r.kind = Kind::Linear;
  r.stage = stage;
  r.selector = std::move(selector);
  r.beta = std::move(beta);
  return r;
}

bool StageRule::operator==(const StageRule& other) const {
  if (kind != other.kind || stage != other.stage) return false;
  if (kind == Kind::Constant) return value == other.value;
  return selector == other.selector && beta == other.beta;
}

int apply_rule(const StageRule& rule, const HistoryVector& h) {
  if (h.stage != rule.stage)
    throw DimensionError("rule for stage " + std::to_string(rule.stage) + " applied to stage " +
                         std::to_string(h.stage) + " history");
  if (rule.kind == StageRule::Kind::Linear)
    for (int idx : rule.selector)
      if (idx < 0 || idx >= h.size())
        throw DimensionError("selector index " + std::to_string(idx) + " outside stage-" +
                             std::to_string(h.stage) + " history of length " + std::to_string(h.size()));
  return rule(h.values);
}

Dtr constant_dtr(const std::vector<int>& values) {
  Dtr d;
  for (std::size_t t = 0; t < values.size(); ++t) d.rules.push_back(StageRule::constant(static_cast<int>(t) + 1, values[t]));
  return d;
}

HistoryVector center_history(const Dtr& dtr, const HistoryVector& raw) {
  HistoryVector h = raw;
  for (int s = 1; s < raw.stage; ++s) h.values[static_cast<Eigen::Index>(layout::outcome_slot(raw.stage, s))] -= dtr.centering(s);
  return h;
}

Eigen::MatrixXd rule_inputs(const PanelDataset& ds, const Dtr& dtr, int t) {
  Eigen::MatrixXd h = ds.history_matrix(t);
  for (int s = 1; s < t; ++s) {
    const double shift = ds.outcome_means()[s - 1] - dtr.centering(s);
    if (shift != 0.0) h.col(static_cast<Eigen::Index>(layout::outcome_slot(t, s))).array() += shift;
  }
  return h;
}

int match_indicator(const Dtr& dtr, const Trajectory& traj, int t) {
  if (t < 1 || t > traj.stage_count() || t > dtr.stage_count()) throw DimensionError("stage out of range");
  for (int s = 1; s <= t; ++s)
    if (apply_rule(dtr[s], history(traj, s)) != traj.treatments[s - 1]) return 0;
  return 1;
}

StageClass StageClass::linear(std::vector<int> selector, std::vector<SignConstraint> signs) {
  StageClass c;
  c.kind = Kind::Linear;
  c.selector = std::move(selector);
  c.signs = std::move(signs);
  if (!c.signs.empty() && c.signs.size() != c.beta_size())
    throw DimensionError("sign constraint list must have 1 + |selector| entries");
  return c;
}

bool StageClass::admits(const StageRule& rule) const {
  if (kind == Kind::Constants) return rule.is_constant();
  if (rule.is_constant()) {
    // A constant is the linear rule (+-1, 0, ..., 0).
    const SignConstraint s0 = sign(0);
    return rule.value ? s0 != SignConstraint::NonPos : s0 != SignConstraint::NonNeg;
  }
  if (rule.selector != selector) return false;
  for (std::size_t j = 0; j < beta_size(); ++j) {
    const double b = rule.beta[static_cast<Eigen::Index>(j)];
    if (sign(j) == SignConstraint::NonNeg && b < 0.0) return false;
    if (sign(j) == SignConstraint::NonPos && b > 0.0) return false;
  }
  return true;
}

void PolicyClassSpec::validate(const PanelDataset& ds) const {
  if (stage_count() != ds.stage_count())
    throw DimensionError("policy class has " + std::to_string(stage_count()) + " stages, data has " +
                         std::to_string(ds.stage_count()));
  for (int t = 1; t <= stage_count(); ++t) {
    const auto& c = stages[t - 1];
    if (c.kind != StageClass::Kind::Linear) continue;
    const auto dim = static_cast<int>(ds.history_dim(t));
    for (int idx : c.selector)
      if (idx < 0 || idx >= dim)
        throw DimensionError("stage " + std::to_string(t) + " selector index " + std::to_string(idx) +
                             " outside history of length " + std::to_string(dim));
    if (!c.signs.empty() && c.signs.size() != c.beta_size())
      throw DimensionError("stage " + std::to_string(t) + " sign constraints have the wrong length");
  }
}

PolicyClassSpec constant_classes(int T, Intertemporal kind) {
  PolicyClassSpec spec;
  spec.stages.assign(T, StageClass::constants());
  spec.intertemporal = kind;
  return spec;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<StageClass> parse_stage_classes(const std::string& text) {
  if (text == "table1") return parse_stage_classes("linear:0;linear:0,1");
  std::vector<StageClass> out;
  for (const auto& part : split(text, ';')) {
    if (part == "const" || part == "constants") {
      out.push_back(StageClass::constants());
      continue;
    }
    const auto fields = split(part, ':');
    if (fields[0] != "linear" || fields.size() < 2 || fields.size() > 3)
      throw Error("bad stage class '" + part + "' (expected const or linear:<indices>[:<signs>])");
    std::vector<int> sel = parse_int_list(fields[1]);
    std::vector<SignConstraint> signs;
    if (fields.size() == 3) {
      for (char c : fields[2]) {
        if (c == 'f') signs.push_back(SignConstraint::Free);
        else if (c == '+') signs.push_back(SignConstraint::NonNeg);
        else if (c == '-') signs.push_back(SignConstraint::NonPos);
        else throw Error("bad sign code '" + std::string(1, c) + "' in '" + part + "'");
      }
    }
    out.push_back(StageClass::linear(std::move(sel), std::move(signs)));
  }
  return out;
}

std::string to_string(const std::vector<StageClass>& classes) {
  std::string s;
  for (std::size_t t = 0; t < classes.size(); ++t) {
    if (t) s += ';';
    const auto& c = classes[t];
    if (c.kind == StageClass::Kind::Constants) {
      s += "const";
      continue;
    }
    s += "linear:";
    for (std::size_t j = 0; j < c.selector.size(); ++j) s += (j ? "," : "") + std::to_string(c.selector[j]);
    if (!c.signs.empty()) {
      s += ':';
      for (auto sc : c.signs) s += sc == SignConstraint::Free ? 'f' : sc == SignConstraint::NonNeg ? '+' : '-';
    }
  }
  return s;
}

Intertemporal parse_intertemporal(const std::string& text) {
  if (text == "none") return Intertemporal::None;
  if (text == "oneshot") return Intertemporal::OneShot;
  if (text == "start") return Intertemporal::StartTime;
  if (text == "stop") return Intertemporal::StopTime;
  throw Error("unknown intertemporal constraint '" + text + "'");
}

std::string to_string(Intertemporal kind) {
  switch (kind) {
    case Intertemporal::None: return "none";
    case Intertemporal::OneShot: return "oneshot";
    case Intertemporal::StartTime: return "start";
    case Intertemporal::StopTime: return "stop";
  }
  return "none";
}

bool intertemporal_pair_ok(Intertemporal kind, int prior, int current) {
  switch (kind) {
    case Intertemporal::None: return true;
    case Intertemporal::OneShot: return prior + current <= 1;
    case Intertemporal::StartTime: return prior <= current;
    case Intertemporal::StopTime: return prior >= current;
  }
  return true;
}

IntertemporalReport check_intertemporal(const Dtr& dtr, const Trajectory& traj, Intertemporal kind,
                                        TreatmentPath path) {
  IntertemporalReport report;
  if (kind == Intertemporal::None) return report;
  const int T = std::min(dtr.stage_count(), traj.stage_count());
  std::vector<int> prior;
  for (int t = 1; t <= T; ++t) {
    const int g = apply_rule(dtr[t], history(traj, t));
    bool ok = true;
    if (kind == Intertemporal::OneShot) {
      int sum = 0;
      for (int d : prior) sum += d;
      ok = sum + g <= 1;
    } else {
      for (int d : prior) ok = ok && intertemporal_pair_ok(kind, d, g);
    }
    if (!ok) {
      report.feasible = false;
      report.first_violation = t;
      return report;
    }
    prior.push_back(path == TreatmentPath::Observed ? traj.treatments[t - 1] : g);
  }
  return report;
}

KeyValueDoc to_keyvalue(const Dtr& dtr) {
  KeyValueDoc doc;
  doc.set("stages", std::to_string(dtr.stage_count()));
  if (!dtr.outcome_centering.empty()) doc.set("outcome_centering", dtr.outcome_centering);
  for (const auto& r : dtr.rules) {
    const std::string p = "stage." + std::to_string(r.stage) + ".";
    if (r.is_constant()) {
      doc.set(p + "kind", std::string("constant"));
      doc.set(p + "value", std::to_string(r.value));
    } else {
      doc.set(p + "kind", std::string("linear"));
      doc.set(p + "selector", r.selector);
      doc.set(p + "beta", std::vector<double>(r.beta.data(), r.beta.data() + r.beta.size()));
    }
  }
  return doc;
}

Dtr dtr_from_keyvalue(const KeyValueDoc& doc) {
  Dtr dtr;
  const int T = doc.get_int("stages");
  if (T < 1) throw Error("dtr must have at least one stage");
  if (doc.has("outcome_centering")) {
    dtr.outcome_centering = doc.get_doubles("outcome_centering");
    if (static_cast<int>(dtr.outcome_centering.size()) != T) throw Error("outcome_centering length differs from stages");
  }
  for (int t = 1; t <= T; ++t) {
    const std::string p = "stage." + std::to_string(t) + ".";
    const std::string& kind = doc.get(p + "kind");
    if (kind == "constant") {
      dtr.rules.push_back(StageRule::constant(t, doc.get_int(p + "value")));
    } else if (kind == "linear") {
      const auto sel = doc.has(p + "selector") ? doc.get_ints(p + "selector") : std::vector<int>{};
      const auto b = doc.get_doubles(p + "beta");
      dtr.rules.push_back(StageRule::linear(t, sel, Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()))));
    } else {
      throw Error("unknown rule kind '" + kind + "' at stage " + std::to_string(t));
    }
  }
  return dtr;
}

void write_dtr(const Dtr& dtr, std::ostream& out) { to_keyvalue(dtr).write(out, "dewm dtr v1"); }

Dtr read_dtr(std::istream& in) { return dtr_from_keyvalue(KeyValueDoc::read(in)); }

Dtr load_dtr(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dtr file '" + path + "'");
  return read_dtr(in);
}

}  // namespace dewm
