#include "sock/diffusion_implicit.hpp"

#include <cmath>

#include "sock/errors.hpp"

namespace sock {

Eigen::VectorXd DataFeatureMap::features(const Eigen::VectorXd& x) const {
  return projector * kernel_column(kernel, anchors, anchor_sqnorms, x);
}

DataFeatureMap build_gamma(const Dataset& dataset, const KernelSpec& kernel, double rank_tol,
                           const Eigen::MatrixXd* extra_anchors) {
  dataset.validate();
  Eigen::MatrixXd anchors = dataset.all_points();
  if (extra_anchors && extra_anchors->rows() > 0) {
    if (extra_anchors->cols() != anchors.cols()) throw SchemaError("extra anchors have wrong dimension");
    Eigen::MatrixXd joined(anchors.rows() + extra_anchors->rows(), anchors.cols());
    joined << anchors, *extra_anchors;
    anchors = std::move(joined);
  }
  const Eigen::MatrixXd g = gram(kernel, anchors);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  if (es.info() != Eigen::Success) throw SolverError("anchor Gram eigendecomposition failed");
  const double lam_max = es.eigenvalues().maxCoeff();
  if (!(lam_max > 0)) throw SolverError("anchor Gram is numerically zero");

  const double cutoff = rank_tol * lam_max;
  int r = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > cutoff) ++r;
  }
  // eigenvalues come back ascending; keep the top r in descending order
  DataFeatureMap map;
  map.anchors = std::move(anchors);
  map.anchor_sqnorms = map.anchors.rowwise().squaredNorm();
  map.kernel = kernel;
  map.gram_eigenvalues = es.eigenvalues().tail(r).reverse();
  Eigen::MatrixXd vecs = es.eigenvectors().rightCols(r).rowwise().reverse();
  map.factor = map.gram_eigenvalues.cwiseSqrt().asDiagonal() * vecs.transpose();
  map.projector = map.gram_eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() * vecs.transpose();
  map.anchor_features = map.projector * g;
  return map;
}

MatList residuals(const Dataset& dataset, const DriftModel& drift) {
  dataset.validate();
  const int d = dataset.dim();
  MatList z;
  z.reserve(dataset.total_intervals());
  for (const auto& b : dataset.bundles) {
    const int m = b.realizations();
    // drift at every observed state of the bundle
    std::vector<Eigen::MatrixXd> f(m);
    for (int u = 0; u < m; ++u) f[u] = eval_drift_batch(drift, b.values[u]);
    for (int i = 0; i < b.n_intervals(); ++i) {
      Eigen::MatrixXd zi = Eigen::MatrixXd::Zero(d, d);
      for (int u = 0; u < m; ++u) {
        const Eigen::VectorXd incr = (b.values[u].row(i + 1) - b.values[u].row(i)).transpose();
        const Eigen::VectorXd quad = (0.5 * b.dt(i)) * (f[u].row(i) + f[u].row(i + 1)).transpose();
        const Eigen::VectorXd v = incr - quad;
        zi += v * v.transpose();
      }
      z.push_back(zi / static_cast<double>(m));
    }
  }
  return z;
}

MatList build_occupation(const Dataset& dataset, const DataFeatureMap& map) {
  const int r = map.rank();
  MatList occ(dataset.total_intervals());
  // anchor_features columns follow dataset order (bundle, point, realization)
  std::vector<int> bundle_base;
  int base = 0;
  for (const auto& b : dataset.bundles) {
    bundle_base.push_back(base);
    base += b.n_points() * b.realizations();
  }
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
    Eigen::MatrixXd ni = Eigen::MatrixXd::Zero(r, r);
    for (int u = 0; u < m; ++u) {
      const auto g0 = map.anchor_features.col(bundle_base[bi] + i * m + u);
      const auto g1 = map.anchor_features.col(bundle_base[bi] + (i + 1) * m + u);
      ni += g0 * g0.transpose() + g1 * g1.transpose();
    }
    occ[idx] = (b.dt(i) / (2.0 * m)) * ni;
  }
  return occ;
}

void DiffusionModelImplicit::build_fast_path() {
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

Eigen::MatrixXd DiffusionModelImplicit::eval_a(const Eigen::VectorXd& x) const {
  const int r = map.rank();
  const int d = static_cast<int>(map.anchors.cols());
  if (x.size() != d) throw SchemaError("diffusion eval: wrong dimension");
  const Eigen::VectorXd g = map.features(x);
  if (psd_factor.size() > 0) {
    // a(x) = B^T B with B = psd_factor^T (I_d kron g): exactly PSD
    Eigen::MatrixXd b(psd_factor.cols(), d);
    for (int l = 0; l < d; ++l) {
      b.col(l) = psd_factor.middleRows(l * r, r).transpose() * g;
    }
    return b.transpose() * b;
  }
  Eigen::MatrixXd a(d, d);
  for (int k = 0; k < d; ++k) {
    for (int l = 0; l < d; ++l) {
      a(k, l) = g.dot(coeff.block(k * r, l * r, r, r) * g);
    }
  }
  return 0.5 * (a + a.transpose());
}

DiffusionModelImplicit fit_diffusion_implicit(const Dataset& dataset, const DriftModel& drift,
                                              const KernelSpec& kernel, double lambda_sigma,
                                              const SolverConfig& cfg,
                                              const Eigen::MatrixXd* extra_anchors) {
  if (!(lambda_sigma > 0)) throw SchemaError("lambda_sigma must be > 0");
  if (cfg.kind != SolverConfig::Kind::fista_dual) {
    throw SchemaError("implicit diffusion supports only the fista-dual solver");
  }
  DiffusionModelImplicit model;
  model.map = build_gamma(dataset, kernel, 1e-10, extra_anchors);
  model.lambda_sigma = lambda_sigma;
  const MatList z = residuals(dataset, drift);
  const MatList occ = build_occupation(dataset, model.map);
  model.coeff = fit_psd_matrix(occ, z, lambda_sigma, cfg, &model.trace);
  model.build_fast_path();
  return model;
}

Eigen::MatrixXd eval_a_implicit(const DiffusionModelImplicit& model, const Eigen::VectorXd& x) {
  return model.eval_a(x);
}

Eigen::MatrixXd eval_sigma(const DiffusionModelImplicit& model, const Eigen::VectorXd& x) {
  return psd_sqrt(model.eval_a(x));
}

}  // namespace sock
