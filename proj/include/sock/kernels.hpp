#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace sock {

enum class KernelKind { gaussian, polynomial, linear, fourier };

/// Scalar kernel description. Matrix-valued kernels are I-separable
/// throughout: K(x,y) = k(x,y) I_d.
///
/// Fourier feature draws (freq rows ~ N(0, I_d), phase ~ U[0, 2pi)) are frozen
/// at construction so a serialized model stays evaluable.
struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  double scale = 1.0;      // length scale of gaussian / fourier
  int degree = 2;          // polynomial degree
  int n_features = 100;    // fourier feature count p
  std::uint64_t seed = 0;  // fourier draw seed
  Eigen::MatrixXd freq;    // p x d, fourier only
  Eigen::VectorXd phase;   // p, fourier only

  void validate() const;
};

KernelSpec gaussian_kernel(double scale);
KernelSpec polynomial_kernel(int degree);
KernelSpec linear_kernel();
KernelSpec fourier_kernel(double scale, int n_features, std::uint64_t seed, int dim);

double eval_scalar(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// phi(x) = sqrt(2/p) [cos(freq_j . x / scale + phase_j)]_j for a fourier spec.
Eigen::VectorXd fourier_features(const KernelSpec& spec, const Eigen::VectorXd& x);

/// True when the spec admits an exact finite feature map phi with
/// k(x,y) = phi(x).phi(y): linear, polynomial of degree 2, fourier.
bool has_feature_map(const KernelSpec& spec);
int feature_dim(const KernelSpec& spec, int dim);
Eigen::VectorXd feature_map(const KernelSpec& spec, const Eigen::VectorXd& x);

/// [k(x, anchor_j)]_j vectorized over anchor rows. anchor_sqnorms must hold
/// the squared row norms (only read for the gaussian kernel).
Eigen::VectorXd kernel_column(const KernelSpec& spec, const Eigen::MatrixXd& anchors,
                              const Eigen::VectorXd& anchor_sqnorms, const Eigen::VectorXd& x);

/// Gram matrix [k(x_i, x_j)] over points given as rows. Parallel over entries.
Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& points);

/// Gram of the explicit feature map, [phi(x_i).phi(x_j)]. Testing aid.
Eigen::MatrixXd explicit_gram_check(const KernelSpec& spec, const Eigen::MatrixXd& points);

double median_pairwise_distance(const Eigen::MatrixXd& points);

/// Default tuning grid for gaussian/fourier scales:
/// {0.1, 0.3, 1, 3, 10} x median pairwise distance.
std::vector<double> default_scale_grid(const Eigen::MatrixXd& points);

}  // namespace sock
