#include "sock/trajectories.hpp"

#include "sock/errors.hpp"

namespace sock {

void TrajectoryBundle::validate() const {
  if (times.size() < 2) {
    throw SchemaError("bundle '" + initial_condition_id + "': needs at least two time points");
  }
  for (int i = 0; i + 1 < times.size(); ++i) {
    if (!(times[i] < times[i + 1])) {
      throw SchemaError("bundle '" + initial_condition_id + "': times not strictly increasing at index " + std::to_string(i));
    }
  }
  if (values.empty()) {
    throw SchemaError("bundle '" + initial_condition_id + "': no realizations");
  }
  const int d = dim();
  for (std::size_t u = 0; u < values.size(); ++u) {
    const auto& v = values[u];
    if (v.rows() != times.size() || v.cols() != d) {
      throw SchemaError("bundle '" + initial_condition_id + "': realization " + std::to_string(u) + " has shape " +
                        std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
    }
    if (!v.allFinite()) {
      throw SchemaError("bundle '" + initial_condition_id + "': non-finite value in realization " + std::to_string(u));
    }
    // fixed initial condition: exact equality across realizations
    if (u > 0 && v.row(0) != values.front().row(0)) {
      throw SchemaError("bundle '" + initial_condition_id + "': realization " + std::to_string(u) +
                        " disagrees on the initial state");
    }
  }
}

int Dataset::total_intervals() const {
  int n = 0;
  for (const auto& b : bundles) n += b.n_intervals();
  return n;
}

int Dataset::total_points() const {
  int n = 0;
  for (const auto& b : bundles) n += b.n_points() * b.realizations();
  return n;
}

Eigen::MatrixXd Dataset::all_points() const {
  Eigen::MatrixXd pts(total_points(), dim());
  int row = 0;
  for (const auto& b : bundles) {
    for (int i = 0; i < b.n_points(); ++i) {
      for (int u = 0; u < b.realizations(); ++u) {
        pts.row(row++) = b.values[u].row(i);
      }
    }
  }
  return pts;
}

void Dataset::validate() const {
  if (bundles.empty()) throw SchemaError("dataset has no bundles");
  const int d = dim();
  for (const auto& b : bundles) {
    b.validate();
    if (b.dim() != d) {
      throw SchemaError("bundle '" + b.initial_condition_id + "': dimension " + std::to_string(b.dim()) +
                        " differs from dataset dimension " + std::to_string(d));
    }
  }
}

Eigen::MatrixXd mean_increments(const TrajectoryBundle& bundle) {
  const int n = bundle.n_intervals();
  const int d = bundle.dim();
  const int m = bundle.realizations();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, d);
  for (int u = 0; u < m; ++u) {
    out += bundle.values[u].bottomRows(n) - bundle.values[u].topRows(n);
  }
  return out / static_cast<double>(m);
}

Eigen::MatrixXd mean_increments(const Dataset& dataset) {
  Eigen::MatrixXd out(dataset.total_intervals(), dataset.dim());
  int row = 0;
  for (const auto& b : dataset.bundles) {
    out.middleRows(row, b.n_intervals()) = mean_increments(b);
    row += b.n_intervals();
  }
  return out;
}

}  // namespace sock
