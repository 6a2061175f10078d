#pragma once

#include <Eigen/Dense>

#include "sock/rng.hpp"
#include "sock/trajectories.hpp"

namespace test_helpers {

inline Eigen::MatrixXd random_matrix(int rows, int cols, sock::rng::Stream& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline Eigen::MatrixXd random_symmetric(int n, sock::rng::Stream& rng) {
  Eigen::MatrixXd m = random_matrix(n, n, rng);
  return 0.5 * (m + m.transpose());
}

inline Eigen::MatrixXd random_psd(int n, sock::rng::Stream& rng, int rank = -1) {
  const int r = rank < 0 ? n : rank;
  Eigen::MatrixXd b = random_matrix(n, r, rng);
  return b * b.transpose();
}

/// Random bundle with strictly increasing times and finite values; all
/// realizations share the initial state.
inline sock::TrajectoryBundle random_bundle(int n_points, int realizations, int dim,
                                            sock::rng::Stream& rng, const char* id = "b") {
  sock::TrajectoryBundle b;
  b.initial_condition_id = id;
  b.times.resize(n_points);
  double t = 0.0;
  for (int i = 0; i < n_points; ++i) {
    b.times[i] = t;
    t += 0.05 + 0.1 * rng.uniform();
  }
  Eigen::RowVectorXd x0 = random_matrix(1, dim, rng);
  for (int u = 0; u < realizations; ++u) {
    Eigen::MatrixXd v = random_matrix(n_points, dim, rng);
    v.row(0) = x0;
    b.values.push_back(std::move(v));
  }
  return b;
}

inline sock::Dataset random_dataset(int bundles, int n_points, int realizations, int dim,
                                    sock::rng::Stream& rng) {
  sock::Dataset ds;
  ds.split = "train";
  for (int i = 0; i < bundles; ++i) {
    ds.bundles.push_back(random_bundle(n_points, realizations, dim, rng, ("b" + std::to_string(i)).c_str()));
  }
  return ds;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / scale;
}

}  // namespace test_helpers
