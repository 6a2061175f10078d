#include "sock/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "sock/errors.hpp"
#include "sock/rng.hpp"

namespace sock {

namespace {

constexpr double kTwoPi = 6.283185307179586477;

void check_dims(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) {
    throw SchemaError("kernel arguments have dimensions " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (spec.kind == KernelKind::fourier && x.size() != spec.freq.cols()) {
    throw SchemaError("fourier kernel drawn for dimension " + std::to_string(spec.freq.cols()) + ", got " + std::to_string(x.size()));
  }
}

}  // namespace

void KernelSpec::validate() const {
  switch (kind) {
    case KernelKind::gaussian:
      if (!(scale > 0)) throw SchemaError("gaussian kernel needs scale > 0");
      break;
    case KernelKind::polynomial:
      if (degree < 1) throw SchemaError("polynomial kernel needs degree >= 1");
      break;
    case KernelKind::linear:
      break;
    case KernelKind::fourier:
      if (!(scale > 0)) throw SchemaError("fourier kernel needs scale > 0");
      if (n_features < 1) throw SchemaError("fourier kernel needs n_features >= 1");
      if (freq.rows() != n_features || phase.size() != n_features) {
        throw SchemaError("fourier kernel draws not initialized");
      }
      break;
  }
}

KernelSpec gaussian_kernel(double scale) {
  KernelSpec s;
  s.kind = KernelKind::gaussian;
  s.scale = scale;
  s.validate();
  return s;
}

KernelSpec polynomial_kernel(int degree) {
  KernelSpec s;
  s.kind = KernelKind::polynomial;
  s.degree = degree;
  s.validate();
  return s;
}

KernelSpec linear_kernel() {
  KernelSpec s;
  s.kind = KernelKind::linear;
  return s;
}

KernelSpec fourier_kernel(double scale, int n_features, std::uint64_t seed, int dim) {
  KernelSpec s;
  s.kind = KernelKind::fourier;
  s.scale = scale;
  s.n_features = n_features;
  s.seed = seed;
  s.freq.resize(n_features, dim);
  s.phase.resize(n_features);
  rng::Stream stream(seed);
  for (int j = 0; j < n_features; ++j) {
    for (int c = 0; c < dim; ++c) s.freq(j, c) = stream.normal();
    s.phase[j] = stream.uniform(0.0, kTwoPi);
  }
  s.validate();
  return s;
}

double eval_scalar(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  check_dims(spec, x, y);
  switch (spec.kind) {
    case KernelKind::gaussian:
      return std::exp(-(x - y).squaredNorm() / (2.0 * spec.scale * spec.scale));
    case KernelKind::polynomial:
      return std::pow(x.dot(y) + 1.0, spec.degree);
    case KernelKind::linear:
      return x.dot(y);
    case KernelKind::fourier:
      return fourier_features(spec, x).dot(fourier_features(spec, y));
  }
  return 0.0;
}

Eigen::VectorXd fourier_features(const KernelSpec& spec, const Eigen::VectorXd& x) {
  if (spec.kind != KernelKind::fourier) throw SchemaError("fourier_features on non-fourier kernel");
  if (x.size() != spec.freq.cols()) {
    throw SchemaError("fourier kernel drawn for dimension " + std::to_string(spec.freq.cols()) + ", got " + std::to_string(x.size()));
  }
  Eigen::VectorXd phi = (spec.freq * x / spec.scale + spec.phase).array().cos();
  phi *= std::sqrt(2.0 / spec.n_features);
  return phi;
}

bool has_feature_map(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::linear:
    case KernelKind::fourier:
      return true;
    case KernelKind::polynomial:
      return spec.degree == 2;
    case KernelKind::gaussian:
      return false;
  }
  return false;
}

int feature_dim(const KernelSpec& spec, int dim) {
  switch (spec.kind) {
    case KernelKind::linear:
      return dim;
    case KernelKind::fourier:
      return spec.n_features;
    case KernelKind::polynomial:
      return 1 + dim + dim * (dim + 1) / 2;
    case KernelKind::gaussian:
      break;
  }
  throw SchemaError("kernel has no exact finite feature map");
}

Eigen::VectorXd feature_map(const KernelSpec& spec, const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  switch (spec.kind) {
    case KernelKind::linear:
      return x;
    case KernelKind::fourier:
      return fourier_features(spec, x);
    case KernelKind::polynomial: {
      if (spec.degree != 2) break;
      // (x.y + 1)^2 = 1 + 2 x.y + (x.y)^2 expanded over monomials
      Eigen::VectorXd phi(feature_dim(spec, d));
      int k = 0;
      phi[k++] = 1.0;
      const double r2 = std::sqrt(2.0);
      for (int i = 0; i < d; ++i) phi[k++] = r2 * x[i];
      for (int i = 0; i < d; ++i) phi[k++] = x[i] * x[i];
      for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) phi[k++] = r2 * x[i] * x[j];
      return phi;
    }
    case KernelKind::gaussian:
      break;
  }
  throw SchemaError("kernel has no exact finite feature map");
}

Eigen::VectorXd kernel_column(const KernelSpec& spec, const Eigen::MatrixXd& anchors,
                              const Eigen::VectorXd& anchor_sqnorms, const Eigen::VectorXd& x) {
  switch (spec.kind) {
    case KernelKind::gaussian: {
      Eigen::ArrayXd sqdist = (anchor_sqnorms.array() - 2.0 * (anchors * x).array() + x.squaredNorm()).max(0.0);
      return (-sqdist / (2.0 * spec.scale * spec.scale)).exp();
    }
    case KernelKind::linear:
      return anchors * x;
    case KernelKind::polynomial: {
      Eigen::ArrayXd base = (anchors * x).array() + 1.0;
      if (spec.degree == 2) return base * base;
      return base.pow(spec.degree);
    }
    case KernelKind::fourier: {
      const Eigen::VectorXd phi = fourier_features(spec, x);
      Eigen::VectorXd out(anchors.rows());
      for (int j = 0; j < anchors.rows(); ++j) {
        out[j] = fourier_features(spec, anchors.row(j).transpose()).dot(phi);
      }
      return out;
    }
  }
  throw SchemaError("kernel_column: unhandled kernel kind");
}

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd g(n, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = points.row(i).transpose();
    for (int j = i; j < n; ++j) {
      g(i, j) = eval_scalar(spec, xi, points.row(j).transpose());
    }
  }
  g.triangularView<Eigen::StrictlyLower>() = g.transpose();
  return g;
}

Eigen::MatrixXd explicit_gram_check(const KernelSpec& spec, const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd phi(n, feature_dim(spec, static_cast<int>(points.cols())));
  for (int i = 0; i < n; ++i) phi.row(i) = feature_map(spec, points.row(i).transpose()).transpose();
  return phi * phi.transpose();
}

double median_pairwise_distance(const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      dists.push_back((points.row(i) - points.row(j)).norm());
    }
  }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + dists.size() / 2;
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

std::vector<double> default_scale_grid(const Eigen::MatrixXd& points) {
  const double med = std::max(median_pairwise_distance(points), 1e-12);
  return {0.1 * med, 0.3 * med, med, 3.0 * med, 10.0 * med};
}

}  // namespace sock
