#include "sock/drift.hpp"

#include <cmath>

#include "sock/errors.hpp"

namespace sock {

namespace {

struct IntervalRef {
  int bundle;
  int interval;
};

std::vector<IntervalRef> interval_index(const Dataset& ds) {
  std::vector<IntervalRef> refs;
  refs.reserve(ds.total_intervals());
  for (int b = 0; b < static_cast<int>(ds.bundles.size()); ++b) {
    for (int i = 0; i < ds.bundles[b].n_intervals(); ++i) refs.push_back({b, i});
  }
  return refs;
}

}  // namespace

IntervalWeights interval_weights(const Dataset& dataset) {
  IntervalWeights w;
  w.anchors = dataset.all_points();
  w.terms.resize(dataset.total_intervals());
  int interval = 0;
  int base = 0;  // anchor row of (bundle, point 0, realization 0)
  for (const auto& b : dataset.bundles) {
    const int m = b.realizations();
    for (int i = 0; i < b.n_intervals(); ++i, ++interval) {
      auto& terms = w.terms[interval];
      terms.reserve(2 * m);
      const double weight = b.dt(i) / (2.0 * m);
      for (int u = 0; u < m; ++u) {
        terms.emplace_back(base + i * m + u, weight);
        terms.emplace_back(base + (i + 1) * m + u, weight);
      }
    }
    base += b.n_points() * m;
  }
  return w;
}

namespace {

// Interval feature matrix: row I is the trapezoid/Monte-Carlo weighted sum of
// phi over interval I's endpoint anchors, so the interval-pair Gram is
// phi_mat phi_mat^T for kernels with an exact feature map.
Eigen::MatrixXd interval_feature_matrix(const Dataset& dataset, const KernelSpec& kernel) {
  const auto w = interval_weights(dataset);
  const int p = feature_dim(kernel, dataset.dim());
  Eigen::MatrixXd phi(static_cast<int>(w.terms.size()), p);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(w.terms.size()); ++i) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(p);
    for (const auto& [anchor, weight] : w.terms[i]) {
      row += weight * feature_map(kernel, w.anchors.row(anchor).transpose());
    }
    phi.row(i) = row.transpose();
  }
  return phi;
}

}  // namespace

Eigen::MatrixXd build_drift_gram(const Dataset& dataset, const KernelSpec& kernel) {
  dataset.validate();
  if (has_feature_map(kernel)) {
    const Eigen::MatrixXd phi = interval_feature_matrix(dataset, kernel);
    const int n = static_cast<int>(phi.rows());
    Eigen::MatrixXd gram(n, n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      gram.row(i).noalias() = phi.row(i) * phi.transpose();
    }
    return 0.5 * (gram + gram.transpose());
  }
  const auto refs = interval_index(dataset);
  const int n = static_cast<int>(refs.size());
  Eigen::MatrixXd gram(n, n);
#pragma omp parallel for schedule(dynamic, 16)
  for (int a = 0; a < n; ++a) {
    const auto& ba = dataset.bundles[refs[a].bundle];
    const int ia = refs[a].interval;
    const double ha = ba.dt(ia);
    for (int b = a; b < n; ++b) {
      const auto& bb = dataset.bundles[refs[b].bundle];
      const int ib = refs[b].interval;
      double acc = 0.0;
      for (int u = 0; u < ba.realizations(); ++u) {
        const Eigen::VectorXd a0 = ba.state(u, ia);
        const Eigen::VectorXd a1 = ba.state(u, ia + 1);
        for (int v = 0; v < bb.realizations(); ++v) {
          acc += eval_scalar(kernel, a0, bb.state(v, ib)) + eval_scalar(kernel, a0, bb.state(v, ib + 1)) +
                 eval_scalar(kernel, a1, bb.state(v, ib)) + eval_scalar(kernel, a1, bb.state(v, ib + 1));
        }
      }
      gram(a, b) = acc * ha * bb.dt(ib) / (4.0 * ba.realizations() * bb.realizations());
    }
  }
  gram.triangularView<Eigen::StrictlyLower>() = gram.transpose();
  return gram;
}

DriftModel fit_drift(const Dataset& dataset, const KernelSpec& kernel, double lambda_f) {
  if (!(lambda_f > 0)) throw SchemaError("lambda_f must be > 0");
  kernel.validate();
  const Eigen::MatrixXd gram = build_drift_gram(dataset, kernel);
  const Eigen::MatrixXd dy = mean_increments(dataset);
  const int n = static_cast<int>(gram.rows());

  Eigen::MatrixXd system = gram;
  system.diagonal().array() += n * lambda_f;

  Eigen::MatrixXd alpha;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() == Eigen::Success) {
    alpha = llt.solve(dy);
    alpha += llt.solve(dy - system * alpha);  // one refinement step
  } else {
    alpha = system.colPivHouseholderQr().solve(dy);
  }

  const double residual = (system * alpha - dy).norm();
  if (!alpha.allFinite() || residual > std::max(1e-8 * dy.norm(), 1e-14)) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(system);
    const double cond = svd.singularValues()(0) / svd.singularValues().tail(1)(0);
    throw SolverError("drift solve residual " + std::to_string(residual) + " too large (condition estimate " +
                      std::to_string(cond) + ")");
  }

  DriftModel model;
  model.kernel = kernel;
  model.lambda_f = lambda_f;
  model.alpha = std::move(alpha);
  model.training = dataset;
  model.build_fast_path();
  return model;
}

void DriftModel::build_fast_path() {
  const auto w = interval_weights(training);
  const int d = training.dim();
  anchor_points = w.anchors;
  anchor_sqnorms = anchor_points.rowwise().squaredNorm();
  anchor_weights = Eigen::MatrixXd::Zero(anchor_points.rows(), d);
  for (std::size_t i = 0; i < w.terms.size(); ++i) {
    for (const auto& [row, weight] : w.terms[i]) {
      anchor_weights.row(row) += weight * alpha.row(i);
    }
  }
  collapsed.resize(0, 0);
  if (!has_feature_map(kernel)) return;
  const int p = feature_dim(kernel, d);
  collapsed = Eigen::MatrixXd::Zero(d, p);
  for (int j = 0; j < anchor_points.rows(); ++j) {
    collapsed += anchor_weights.row(j).transpose() * feature_map(kernel, anchor_points.row(j).transpose()).transpose();
  }
}

Eigen::VectorXd DriftModel::eval(const Eigen::VectorXd& x) const {
  if (x.size() != training.dim()) {
    throw SchemaError("drift eval: dimension " + std::to_string(x.size()) + " != model dimension " +
                      std::to_string(training.dim()));
  }
  if (collapsed.size() > 0) return collapsed * feature_map(kernel, x);
  return anchor_weights.transpose() * kernel_column(kernel, anchor_points, anchor_sqnorms, x);
}

Eigen::VectorXd eval_drift(const DriftModel& model, const Eigen::VectorXd& x) { return model.eval(x); }

Eigen::MatrixXd eval_drift_batch(const DriftModel& model, const Eigen::MatrixXd& points) {
  Eigen::MatrixXd out(points.rows(), model.training.dim());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < points.rows(); ++i) {
    out.row(i) = model.eval(points.row(i).transpose()).transpose();
  }
  return out;
}

double drift_objective(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& alpha,
                       const Eigen::MatrixXd& mean_incr, double lambda_f) {
  const double n = static_cast<double>(gram.rows());
  const double fit = (gram * alpha - mean_incr).squaredNorm() / n;
  return fit + lambda_f * (alpha.transpose() * gram * alpha).trace();
}

}  // namespace sock
