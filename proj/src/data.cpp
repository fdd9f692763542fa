#include "dewm/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dewm/error.hpp"

namespace dewm {

namespace layout {

std::size_t history_dim(std::span<const int> covariate_dims, int t) {
  std::size_t dim = 2 * static_cast<std::size_t>(t - 1);
  for (int s = 1; s <= t; ++s) dim += covariate_dims[s - 1];
  return dim;
}

std::size_t treatment_slot(int /*t*/, int s) { return static_cast<std::size_t>(s - 1); }

std::size_t outcome_slot(int t, int s) { return static_cast<std::size_t>(t - 1 + s - 1); }

std::size_t covariate_slot(std::span<const int> covariate_dims, int t, int s, int j) {
  std::size_t slot = 2 * static_cast<std::size_t>(t - 1);
  for (int r = 1; r < s; ++r) slot += covariate_dims[r - 1];
  return slot + static_cast<std::size_t>(j);
}

}  // namespace layout

PanelDataset::PanelDataset(std::vector<Trajectory> trajectories, std::vector<int> covariate_dims,
                           std::optional<std::vector<double>> outcome_bounds)
    : trajectories_(std::move(trajectories)),
      covariate_dims_(std::move(covariate_dims)),
      outcome_bounds_(std::move(outcome_bounds)),
      outcome_means_(covariate_dims_.size(), 0.0) {
  const int T = stage_count();
  if (T < 1) throw DimensionError("panel needs at least one stage");
  if (outcome_bounds_ && static_cast<int>(outcome_bounds_->size()) != T)
    throw DimensionError("outcome bound vector length differs from stage count");
  for (std::size_t i = 0; i < trajectories_.size(); ++i) {
    const auto& tr = trajectories_[i];
    if (tr.stage_count() != T || static_cast<int>(tr.outcomes.size()) != T ||
        static_cast<int>(tr.covariates.size()) != T)
      throw DimensionError("trajectory " + tr.id + " has a different stage count");
    for (int t = 0; t < T; ++t) {
      if (tr.treatments[t] != 0 && tr.treatments[t] != 1)
        throw DimensionError("trajectory " + tr.id + ": treatment not binary");
      if (tr.covariates[t].size() != covariate_dims_[t])
        throw DimensionError("trajectory " + tr.id + ": covariate dimension mismatch at stage " +
                             std::to_string(t + 1));
      if (outcome_bounds_ && std::abs(tr.outcomes[t]) > (*outcome_bounds_)[t] / 2)
        throw DimensionError("trajectory " + tr.id + ": outcome outside bound at stage " +
                             std::to_string(t + 1));
    }
  }
}

std::size_t PanelDataset::history_dim(int t) const { return layout::history_dim(covariate_dims_, t); }

Eigen::MatrixXd PanelDataset::history_matrix(int t) const {
  if (t < 1 || t > stage_count()) throw DimensionError("stage out of range");
  Eigen::MatrixXd h(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(history_dim(t)));
  for (std::size_t i = 0; i < size(); ++i) h.row(static_cast<Eigen::Index>(i)) = history(trajectories_[i], t).values;
  return h;
}

Eigen::VectorXd PanelDataset::outcomes(int t) const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) y[static_cast<Eigen::Index>(i)] = trajectories_[i].outcomes[t - 1];
  return y;
}

std::vector<int> PanelDataset::treatments(int t) const {
  std::vector<int> d(size());
  for (std::size_t i = 0; i < size(); ++i) d[i] = trajectories_[i].treatments[t - 1];
  return d;
}

HistoryVector history(const Trajectory& traj, int t) {
  const int T = traj.stage_count();
  if (t < 1 || t > T) throw DimensionError("history stage " + std::to_string(t) + " out of range 1.." + std::to_string(T));
  Eigen::Index dim = 2 * (t - 1);
  for (int s = 0; s < t; ++s) dim += traj.covariates[s].size();
  HistoryVector h{t, Eigen::VectorXd(dim)};
  Eigen::Index k = 0;
  for (int s = 0; s < t - 1; ++s) h.values[k++] = traj.treatments[s];
  for (int s = 0; s < t - 1; ++s) h.values[k++] = traj.outcomes[s];
  for (int s = 0; s < t; ++s) {
    h.values.segment(k, traj.covariates[s].size()) = traj.covariates[s];
    k += traj.covariates[s].size();
  }
  return h;
}

PanelDataset demean_outcomes(const PanelDataset& ds) {
  if (ds.demeaned()) throw Error("dataset outcomes are already demeaned");
  const int T = ds.stage_count();
  const double n = static_cast<double>(ds.size());
  std::vector<double> means(T, 0.0);
  for (int t = 0; t < T; ++t) {
    double sum = 0.0;
    for (const auto& tr : ds.trajectories()) sum += tr.outcomes[t];
    means[t] = ds.size() ? sum / n : 0.0;
  }
  std::vector<Trajectory> trajs = ds.trajectories();
  for (auto& tr : trajs)
    for (int t = 0; t < T; ++t) tr.outcomes[t] -= means[t];
  // Bounds refer to raw outcomes, so they are not carried over.
  PanelDataset out(std::move(trajs), ds.covariate_dims());
  out.outcome_means_ = std::move(means);
  out.demeaned_ = true;
  return out;
}

PanelDataset shift_outcomes(const PanelDataset& ds, double c) {
  std::vector<Trajectory> trajs = ds.trajectories();
  for (auto& tr : trajs)
    for (auto& y : tr.outcomes) y += c;
  return PanelDataset(std::move(trajs), ds.covariate_dims());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& value) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(value);
}

bool parse_positive_int(const std::string& s, int& value) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  return ec == std::errc() && ptr == s.data() + s.size() && value >= 1;
}

enum class ColumnRole { Id, Treatment, Outcome, Covariate };

struct Column {
  ColumnRole role;
  int stage = 0;
  int index = 0;
};

Column classify_header(const std::string& raw) {
  const std::string name = trim(raw);
  auto fail = [&]() -> Column {
    throw LoadError(LoadError::Kind::Header, 0, name, "unrecognized column '" + name + "' in header");
  };
  if (name == "id") return {ColumnRole::Id};
  if (name.size() < 2) return fail();
  const char lead = name[0];
  const std::string rest = name.substr(1);
  int stage = 0;
  if (lead == 'd' || lead == 'y') {
    if (!parse_positive_int(rest, stage)) return fail();
    return {lead == 'd' ? ColumnRole::Treatment : ColumnRole::Outcome, stage};
  }
  if (lead == 'x') {
    const auto us = rest.find('_');
    int j = 0;
    if (us == std::string::npos || !parse_positive_int(rest.substr(0, us), stage) ||
        !parse_positive_int(rest.substr(us + 1), j))
      return fail();
    return {ColumnRole::Covariate, stage, j};
  }
  return fail();
}

}  // namespace

PanelDataset read_panel(std::istream& in, std::optional<std::vector<double>> outcome_bounds) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty())
    throw LoadError(LoadError::Kind::Empty, 0, "", "empty file: no header row");

  const auto header = split_csv_line(line);
  std::vector<Column> columns;
  int T = 0;
  std::map<int, int> max_cov;
  int id_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    columns.push_back(classify_header(header[c]));
    const auto& col = columns.back();
    if (col.role == ColumnRole::Id) {
      if (id_col >= 0) throw LoadError(LoadError::Kind::Header, 0, "id", "duplicate id column");
      id_col = static_cast<int>(c);
    }
    T = std::max(T, col.stage);
    if (col.role == ColumnRole::Covariate) max_cov[col.stage] = std::max(max_cov[col.stage], col.index);
  }
  if (id_col < 0) throw LoadError(LoadError::Kind::Header, 0, "id", "missing id column");
  if (T < 1) throw LoadError(LoadError::Kind::Header, 0, "", "no stage columns in header");

  std::vector<int> dims(T, 0);
  for (auto [s, k] : max_cov) dims[s - 1] = k;

  // Every expected column must appear exactly once.
  std::map<std::tuple<int, int, int>, int> seen;
  for (const auto& col : columns) {
    if (col.role == ColumnRole::Id) continue;
    auto key = std::make_tuple(static_cast<int>(col.role), col.stage, col.index);
    if (seen[key]++ > 0) throw LoadError(LoadError::Kind::Header, 0, "", "duplicate column in header");
  }
  for (int t = 1; t <= T; ++t) {
    const std::string st = std::to_string(t);
    if (!seen.count({static_cast<int>(ColumnRole::Treatment), t, 0}))
      throw LoadError(LoadError::Kind::Header, 0, "d" + st, "missing column d" + st);
    if (!seen.count({static_cast<int>(ColumnRole::Outcome), t, 0}))
      throw LoadError(LoadError::Kind::Header, 0, "y" + st, "missing column y" + st);
    for (int j = 1; j <= dims[t - 1]; ++j)
      if (!seen.count({static_cast<int>(ColumnRole::Covariate), t, j})) {
        const std::string name = "x" + st + "_" + std::to_string(j);
        throw LoadError(LoadError::Kind::Header, 0, name, "missing column " + name);
      }
  }

  std::vector<Trajectory> trajs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw LoadError(LoadError::Kind::Ragged, row, "",
                      "ragged row at row " + std::to_string(row) + ": expected " +
                          std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    Trajectory tr;
    tr.treatments.assign(T, 0);
    tr.outcomes.assign(T, 0.0);
    for (int t = 0; t < T; ++t) tr.covariates.emplace_back(Eigen::VectorXd::Zero(dims[t]));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& col = columns[c];
      const std::string name = trim(header[c]);
      if (col.role == ColumnRole::Id) {
        tr.id = trim(cells[c]);
        if (tr.id.empty())
          throw LoadError(LoadError::Kind::Malformed, row, name, "missing id at row " + std::to_string(row));
        continue;
      }
      double v = 0.0;
      if (!parse_double(cells[c], v))
        throw LoadError(LoadError::Kind::Malformed, row, name,
                        "malformed numeric cell '" + cells[c] + "' at row " + std::to_string(row) +
                            ", column " + name);
      switch (col.role) {
        case ColumnRole::Treatment:
          if (v != 0.0 && v != 1.0)
            throw LoadError(LoadError::Kind::Domain, row, name,
                            "treatment out of domain at row " + std::to_string(row) + ", column " + name);
          tr.treatments[col.stage - 1] = static_cast<int>(v);
          break;
        case ColumnRole::Outcome:
          if (outcome_bounds && std::abs(v) > (*outcome_bounds)[col.stage - 1] / 2)
            throw LoadError(LoadError::Kind::Bound, row, name,
                            "outcome outside [-M/2, M/2] at row " + std::to_string(row) + ", column " + name);
          tr.outcomes[col.stage - 1] = v;
          break;
        case ColumnRole::Covariate:
          tr.covariates[col.stage - 1][col.index - 1] = v;
          break;
        case ColumnRole::Id:
          break;
      }
    }
    trajs.push_back(std::move(tr));
  }
  if (trajs.empty()) throw LoadError(LoadError::Kind::Empty, 0, "", "empty file: no data rows");
  if (outcome_bounds && static_cast<int>(outcome_bounds->size()) != T)
    throw LoadError(LoadError::Kind::Bound, 0, "", "outcome bound vector length differs from stage count");
  return PanelDataset(std::move(trajs), std::move(dims), std::move(outcome_bounds));
}

PanelDataset load_panel(const std::string& path, std::optional<std::vector<double>> outcome_bounds) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file '" + path + "'");
  return read_panel(in, std::move(outcome_bounds));
}

namespace {
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void write_panel(const PanelDataset& ds, std::ostream& out) {
  const int T = ds.stage_count();
  out << "id";
  for (int t = 1; t <= T; ++t) {
    out << ",d" << t << ",y" << t;
    for (int j = 1; j <= ds.covariate_dims()[t - 1]; ++j) out << ",x" << t << '_' << j;
  }
  out << '\n';
  for (const auto& tr : ds.trajectories()) {
    out << tr.id;
    for (int t = 0; t < T; ++t) {
      out << ',' << tr.treatments[t] << ',' << format_double(tr.outcomes[t]);
      for (Eigen::Index j = 0; j < tr.covariates[t].size(); ++j) out << ',' << format_double(tr.covariates[t][j]);
    }
    out << '\n';
  }
}

void save_panel(const PanelDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open output file '" + path + "'");
  write_panel(ds, out);
}

}  // namespace dewm
