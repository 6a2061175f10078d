#pragma once

#include <Eigen/Dense>
#include <optional>

#include "sock/drift.hpp"
#include "sock/kernels.hpp"
#include "sock/psd_optim.hpp"
#include "sock/trajectories.hpp"

namespace sock {

/// Data-adapted orthonormal feature map. From the anchor Gram G = V L V^T it
/// keeps the eigenvalues above rank_tol * lambda_max and sets
///   factor    R = L^(1/2) V^T          (r x N, R^T R reproduces G)
///   projector P = L^(-1/2) V^T         (so features(x) = P [k(x, anchor_j)]_j)
/// giving features(y_i).features(y_j) = k(y_i, y_j) on the anchor span and
/// an exactly orthonormal map: P G P^T = I_r.
struct DataFeatureMap {
  Eigen::MatrixXd anchors;  // N x d
  Eigen::VectorXd anchor_sqnorms;
  KernelSpec kernel;
  Eigen::MatrixXd factor;           // R, r x N
  Eigen::VectorXd gram_eigenvalues; // retained, descending (= R R^T diagonal)
  Eigen::MatrixXd projector;        // r x N
  Eigen::MatrixXd anchor_features;  // r x N, features of every anchor

  int rank() const { return static_cast<int>(factor.rows()); }
  Eigen::VectorXd features(const Eigen::VectorXd& x) const;
};

/// Builds the map from all observed states of the dataset (dataset order),
/// optionally extended with extra anchor rows appended at the end.
DataFeatureMap build_gamma(const Dataset& dataset, const KernelSpec& kernel,
                           double rank_tol = 1e-10,
                           const Eigen::MatrixXd* extra_anchors = nullptr);

/// Residual outer products z_i: with v_u = (y_{i+1}^u - y_i^u) - Q[f along u],
/// z_i = (1/M) sum_u v_u v_u^T. One d x d PSD matrix per dataset interval.
MatList residuals(const Dataset& dataset, const DriftModel& drift);

/// Occupation matrices over the feature map:
/// N_i = (dt_i / 2M) sum_u [ g(y_i^u) g(y_i^u)^T + g(y_{i+1}^u) g(y_{i+1}^u)^T ]
/// with g = map.features. Requires the map built from the same dataset.
MatList build_occupation(const Dataset& dataset, const DataFeatureMap& map);

struct DiffusionModelImplicit {
  Eigen::MatrixXd coeff;  // A, rd x rd symmetric PSD
  DataFeatureMap map;
  double lambda_sigma = 0.0;
  SolverTrace trace;

  // coeff = psd_factor psd_factor^T, cached for fast PSD-by-construction eval
  Eigen::MatrixXd psd_factor;
  void build_fast_path();

  Eigen::MatrixXd eval_a(const Eigen::VectorXd& x) const;
};

/// Two-step diffusion fit given a fitted drift: residuals -> feature map ->
/// occupation matrices -> FISTA on the Fenchel dual -> negative-part recovery.
DiffusionModelImplicit fit_diffusion_implicit(const Dataset& dataset, const DriftModel& drift,
                                              const KernelSpec& kernel, double lambda_sigma,
                                              const SolverConfig& cfg = {},
                                              const Eigen::MatrixXd* extra_anchors = nullptr);

Eigen::MatrixXd eval_a_implicit(const DiffusionModelImplicit& model, const Eigen::VectorXd& x);

/// sigma(x) = U sqrt(S) U^T for the eigendecomposition a(x) = U S U^T.
Eigen::MatrixXd eval_sigma(const DiffusionModelImplicit& model, const Eigen::VectorXd& x);

}  // namespace sock
