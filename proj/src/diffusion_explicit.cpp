#include "sock/diffusion_explicit.hpp"

#include <cmath>

#include "sock/diffusion_implicit.hpp"
#include "sock/errors.hpp"

namespace sock {

MatList build_occupation(const Dataset& dataset, const KernelSpec& features) {
  dataset.validate();
  if (!has_feature_map(features)) throw SchemaError("explicit diffusion needs a kernel with a finite feature map");
  const int p = feature_dim(features, dataset.dim());
  MatList occ(dataset.total_intervals());
  std::vector<std::pair<int, int>> refs;
  refs.reserve(occ.size());
  for (int bi = 0; bi < static_cast<int>(dataset.bundles.size()); ++bi) {
    for (int i = 0; i < dataset.bundles[bi].n_intervals(); ++i) refs.emplace_back(bi, i);
  }
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < static_cast<int>(refs.size()); ++idx) {
    const auto [bi, i] = refs[idx];
    const auto& b = dataset.bundles[bi];
    const int m = b.realizations();
    Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(p, p);
    for (int u = 0; u < m; ++u) {
      const Eigen::VectorXd p0 = feature_map(features, b.state(u, i));
      const Eigen::VectorXd p1 = feature_map(features, b.state(u, i + 1));
      mi += p0 * p0.transpose() + p1 * p1.transpose();
    }
    occ[idx] = (b.dt(i) / (2.0 * m)) * mi;
  }
  return occ;
}

void DiffusionModelExplicit::build_fast_path() {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (coeff + coeff.transpose()));
  if (es.info() != Eigen::Success) throw SolverError("coefficient eigendecomposition failed");
  int rank = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > 0) ++rank;
  }
  psd_factor.resize(coeff.rows(), rank);
  int c = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > 0) {
      psd_factor.col(c++) = std::sqrt(es.eigenvalues()[i]) * es.eigenvectors().col(i);
    }
  }
}

Eigen::MatrixXd DiffusionModelExplicit::eval_a(const Eigen::VectorXd& x) const {
  if (x.size() != dim) throw SchemaError("diffusion eval: wrong dimension");
  const Eigen::VectorXd phi = feature_map(features, x);
  const int p = static_cast<int>(phi.size());
  if (psd_factor.size() > 0) {
    Eigen::MatrixXd b(psd_factor.cols(), dim);
    for (int l = 0; l < dim; ++l) {
      b.col(l) = psd_factor.middleRows(l * p, p).transpose() * phi;
    }
    return b.transpose() * b;
  }
  Eigen::MatrixXd a(dim, dim);
  for (int k = 0; k < dim; ++k) {
    for (int l = 0; l < dim; ++l) {
      a(k, l) = phi.dot(coeff.block(k * p, l * p, p, p) * phi);
    }
  }
  return 0.5 * (a + a.transpose());
}

DiffusionModelExplicit fit_diffusion_explicit(const Dataset& dataset, const DriftModel& drift,
                                              const KernelSpec& features, double lambda_sigma,
                                              const SolverConfig& cfg) {
  if (!(lambda_sigma > 0)) throw SchemaError("lambda_sigma must be > 0");
  DiffusionModelExplicit model;
  model.features = features;
  model.dim = dataset.dim();
  model.lambda_sigma = lambda_sigma;
  const MatList z = residuals(dataset, drift);
  const MatList occ = build_occupation(dataset, features);
  model.coeff = fit_psd_matrix(occ, z, lambda_sigma, cfg, &model.trace);
  model.build_fast_path();
  return model;
}

Eigen::MatrixXd eval_a_explicit(const DiffusionModelExplicit& model, const Eigen::VectorXd& x) {
  return model.eval_a(x);
}

Eigen::MatrixXd eval_sigma(const DiffusionModelExplicit& model, const Eigen::VectorXd& x) {
  return psd_sqrt(model.eval_a(x));
}

}  // namespace sock
