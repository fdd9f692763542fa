#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dewm {

// One individual's panel record. Stage indices are 1-based in the public
// API; the vectors below are stored 0-based.
struct Trajectory {
  std::string id;
  std::vector<int> treatments;
  std::vector<double> outcomes;
  std::vector<Eigen::VectorXd> covariates;

  int stage_count() const { return static_cast<int>(treatments.size()); }
};

// History H_t flattened in canonical order:
//   (d_1..d_{t-1}, y_1..y_{t-1}, x_1, ..., x_t)
struct HistoryVector {
  int stage = 1;
  Eigen::VectorXd values;

  Eigen::Index size() const { return values.size(); }
  double operator[](Eigen::Index i) const { return values[i]; }
};

// Slot arithmetic for the canonical history layout.
namespace layout {
std::size_t history_dim(std::span<const int> covariate_dims, int t);
std::size_t treatment_slot(int t, int s);
std::size_t outcome_slot(int t, int s);
std::size_t covariate_slot(std::span<const int> covariate_dims, int t, int s, int j);
}  // namespace layout

class PanelDataset {
 public:
  // `outcome_bounds`, when given, holds M_t per stage and every outcome must
  // lie in [-M_t/2, M_t/2].
  PanelDataset(std::vector<Trajectory> trajectories, std::vector<int> covariate_dims,
               std::optional<std::vector<double>> outcome_bounds = std::nullopt);

  std::size_t size() const { return trajectories_.size(); }
  int stage_count() const { return static_cast<int>(covariate_dims_.size()); }
  const std::vector<int>& covariate_dims() const { return covariate_dims_; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }

  bool demeaned() const { return demeaned_; }
  // Per-stage sample means removed by demean_outcomes (zeros otherwise).
  const std::vector<double>& outcome_means() const { return outcome_means_; }
  const std::optional<std::vector<double>>& outcome_bounds() const { return outcome_bounds_; }

  std::size_t history_dim(int t) const;
  // n x history_dim(t) matrix whose rows are the canonical histories.
  Eigen::MatrixXd history_matrix(int t) const;
  Eigen::VectorXd outcomes(int t) const;
  std::vector<int> treatments(int t) const;

 private:
  friend PanelDataset demean_outcomes(const PanelDataset& ds);

  std::vector<Trajectory> trajectories_;
  std::vector<int> covariate_dims_;
  std::optional<std::vector<double>> outcome_bounds_;
  std::vector<double> outcome_means_;
  bool demeaned_ = false;
};

HistoryVector history(const Trajectory& traj, int t);

PanelDataset demean_outcomes(const PanelDataset& ds);
PanelDataset shift_outcomes(const PanelDataset& ds, double c);

PanelDataset read_panel(std::istream& in,
                        std::optional<std::vector<double>> outcome_bounds = std::nullopt);
PanelDataset load_panel(const std::string& path,
                        std::optional<std::vector<double>> outcome_bounds = std::nullopt);
void write_panel(const PanelDataset& ds, std::ostream& out);
void save_panel(const PanelDataset& ds, const std::string& path);

}  // namespace dewm
