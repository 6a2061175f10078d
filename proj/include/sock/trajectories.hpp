#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <json.hpp>

namespace sock {

/// M realizations of a snapshot trajectory sharing one time grid and one
/// initial state. values[u] holds realization u as an (n+1) x d matrix whose
/// row i is the state observed at times[i].
struct TrajectoryBundle {
  Eigen::VectorXd times;
  std::vector<Eigen::MatrixXd> values;
  std::string initial_condition_id;

  int n_intervals() const { return static_cast<int>(times.size()) - 1; }
  int n_points() const { return static_cast<int>(times.size()); }
  int realizations() const { return static_cast<int>(values.size()); }
  int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }
  double dt(int i) const { return times[i + 1] - times[i]; }

  Eigen::VectorXd state(int u, int i) const { return values[u].row(i).transpose(); }

  /// Throws SchemaError on: non-increasing times, mismatched shapes,
  /// non-finite entries, or realizations disagreeing on the initial state.
  void validate() const;
};

/// A collection of bundles (one per initial condition) with a split tag.
/// All estimation sums run over every (bundle, interval) pair.
struct Dataset {
  std::vector<TrajectoryBundle> bundles;
  std::string split;
  nlohmann::json metadata = nlohmann::json::object();

  int dim() const { return bundles.empty() ? 0 : bundles.front().dim(); }
  int total_intervals() const;
  int total_points() const;  // realizations counted separately

  /// All observed states stacked as rows, ordered (bundle, point, realization).
  Eigen::MatrixXd all_points() const;

  void validate() const;
};

/// Realization-mean increments: row i is (1/M) sum_u (y_{i+1}^u - y_i^u).
Eigen::MatrixXd mean_increments(const TrajectoryBundle& bundle);

/// mean_increments of every bundle stacked in dataset order (n_total x d).
Eigen::MatrixXd mean_increments(const Dataset& dataset);

}  // namespace sock
