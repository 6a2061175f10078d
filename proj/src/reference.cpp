#include "sock/reference.hpp"

#include <cmath>

#include "sock/quadrature.hpp"

namespace sock::reference {

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      g(i, j) = eval_scalar(spec, points.row(i).transpose(), points.row(j).transpose());
    }
  }
  g.triangularView<Eigen::StrictlyLower>() = g.transpose();
  return g;
}

Eigen::MatrixXd build_drift_gram(const Dataset& dataset, const KernelSpec& kernel) {
  std::vector<std::pair<int, int>> refs;
  for (int b = 0; b < static_cast<int>(dataset.bundles.size()); ++b) {
    for (int i = 0; i < dataset.bundles[b].n_intervals(); ++i) refs.emplace_back(b, i);
  }
  const int n = static_cast<int>(refs.size());
  auto k = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return eval_scalar(kernel, x, y); };
  Eigen::MatrixXd out(n, n);
  for (int a = 0; a < n; ++a) {
    const auto& ba = dataset.bundles[refs[a].first];
    for (int b = 0; b < n; ++b) {
      const auto& bb = dataset.bundles[refs[b].first];
      double acc = 0.0;
      for (int u = 0; u < ba.realizations(); ++u) {
        for (int v = 0; v < bb.realizations(); ++v) {
          acc += double_traj_integral(ba, u, refs[a].second, bb, v, refs[b].second, k);
        }
      }
      out(a, b) = acc / (static_cast<double>(ba.realizations()) * bb.realizations());
    }
  }
  return out;
}

Eigen::MatrixXd block_weighted_sum(const MatList& occ, const MatList& weights) {
  const int n = static_cast<int>(occ.size());
  const int m = static_cast<int>(occ.front().rows());
  const int d = static_cast<int>(weights.front().rows());
  constexpr int kSumChunks = 64;  // chunk order shared with the parallel kernel
  const int chunk = (n + kSumChunks - 1) / kSumChunks;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m * d, m * d);
  for (int k = 0; k < d; ++k) {
    for (int l = 0; l < d; ++l) {
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(m, m);
      for (int c = 0; c < n; c += chunk) {
        Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(m, m);
        const int end = std::min(c + chunk, n);
        for (int i = c; i < end; ++i) partial += weights[i](k, l) * occ[i];
        block += partial;
      }
      out.block(k * m, l * m, m, m) = block;
    }
  }
  return out;
}

MatList build_occupation(const Dataset& dataset, const DataFeatureMap& map) {
  const int r = map.rank();
  MatList occ;
  occ.reserve(dataset.total_intervals());
  int base = 0;
  for (const auto& b : dataset.bundles) {
    const int m = b.realizations();
    for (int i = 0; i < b.n_intervals(); ++i) {
      Eigen::MatrixXd ni = Eigen::MatrixXd::Zero(r, r);
      for (int u = 0; u < m; ++u) {
        const auto g0 = map.anchor_features.col(base + i * m + u);
        const auto g1 = map.anchor_features.col(base + (i + 1) * m + u);
        ni += g0 * g0.transpose() + g1 * g1.transpose();
      }
      occ.push_back((b.dt(i) / (2.0 * m)) * ni);
    }
    base += b.n_points() * m;
  }
  return occ;
}

MatList build_occupation(const Dataset& dataset, const KernelSpec& features) {
  const int p = feature_dim(features, dataset.dim());
  MatList occ;
  occ.reserve(dataset.total_intervals());
  for (const auto& b : dataset.bundles) {
    const int m = b.realizations();
    for (int i = 0; i < b.n_intervals(); ++i) {
      Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(p, p);
      for (int u = 0; u < m; ++u) {
        const Eigen::VectorXd p0 = feature_map(features, b.state(u, i));
        const Eigen::VectorXd p1 = feature_map(features, b.state(u, i + 1));
        mi += p0 * p0.transpose() + p1 * p1.transpose();
      }
      occ.push_back((b.dt(i) / (2.0 * m)) * mi);
    }
  }
  return occ;
}

Eigen::MatrixXd eval_drift_batch(const DriftModel& model, const Eigen::MatrixXd& points) {
  const auto& training = model.training;
  const int d = training.dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.rows(), d);
  for (int pt = 0; pt < points.rows(); ++pt) {
    const Eigen::VectorXd x = points.row(pt).transpose();
    int interval = 0;
    for (const auto& b : training.bundles) {
      const int m = b.realizations();
      for (int i = 0; i < b.n_intervals(); ++i, ++interval) {
        double li = 0.0;
        for (int u = 0; u < m; ++u) {
          li += eval_scalar(model.kernel, x, b.state(u, i)) + eval_scalar(model.kernel, x, b.state(u, i + 1));
        }
        out.row(pt) += (b.dt(i) / (2.0 * m)) * li * model.alpha.row(interval);
      }
    }
  }
  return out;
}

MatList dual_gradient(const MatList& beta, const MatList& occ, const MatList& z, double lambda) {
  const double n = static_cast<double>(z.size());
  const int m = static_cast<int>(occ.front().rows());
  const int d = static_cast<int>(beta.front().rows());
  const Eigen::MatrixXd y = negative_part(block_weighted_sum(occ, beta));
  MatList grad(beta.size());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    Eigen::MatrixXd g(d, d);
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        g(k, l) = -occ[i].cwiseProduct(y.block(k * m, l * m, m, m)).sum() / (2.0 * lambda);
      }
    }
    grad[i] = 0.5 * n * beta[i] + z[i] + g;
  }
  return grad;
}

Eigen::MatrixXd primal_gradient(const Eigen::MatrixXd& q, const MatList& occ, const MatList& z, double lambda) {
  const int n = static_cast<int>(z.size());
  const int m = static_cast<int>(occ.front().rows());
  const int d = static_cast<int>(z.front().rows());
  constexpr int kSumChunks = 64;
  const int chunk = (n + kSumChunks - 1) / kSumChunks;
  Eigen::MatrixXd grad = 2.0 * lambda * q;
  for (int k = 0; k < d; ++k) {
    for (int l = 0; l < d; ++l) {
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(m, m);
      for (int c = 0; c < n; c += chunk) {
        Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(m, m);
        const int end = std::min(c + chunk, n);
        for (int i = c; i < end; ++i) {
          const double r = occ[i].cwiseProduct(q.block(k * m, l * m, m, m)).sum() - z[i](k, l);
          partial += r * occ[i];
        }
        block += partial;
      }
      grad.block(k * m, l * m, m, m) += (2.0 / n) * block;
    }
  }
  return grad;
}

double mmd_vstat(const Eigen::VectorXd& times, const std::vector<Eigen::MatrixXd>& sample_a,
                 const std::vector<Eigen::MatrixXd>& sample_b, double eta) {
  auto kernel_mean = [&](const std::vector<Eigen::MatrixXd>& s1, const std::vector<Eigen::MatrixXd>& s2) {
    double acc = 0.0;
    for (const auto& x : s1) {
      for (const auto& y : s2) acc += std::exp(-trajectory_sq_dist(times, x, y) / eta);
    }
    return acc / (static_cast<double>(s1.size()) * s2.size());
  };
  const double mmd2 = kernel_mean(sample_a, sample_a) + kernel_mean(sample_b, sample_b) -
                      2.0 * kernel_mean(sample_a, sample_b);
  return std::sqrt(std::max(0.0, mmd2));
}

double power_iteration_lambda_max(const Eigen::MatrixXd& sym, int iterations) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(sym.rows()).normalized();
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Eigen::VectorXd w = sym * v;
    lambda = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
  }
  return lambda;
}

}  // namespace sock::reference
