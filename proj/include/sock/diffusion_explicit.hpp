#pragma once

#include <Eigen/Dense>

#include "sock/drift.hpp"
#include "sock/kernels.hpp"
#include "sock/psd_optim.hpp"
#include "sock/trajectories.hpp"

namespace sock {

/// Feature occupation matrices:
/// M_i = (dt_i / 2M) sum_u [ phi(y_i^u) phi(y_i^u)^T + phi(y_{i+1}^u) phi(y_{i+1}^u)^T ].
/// Requires a kernel with an exact finite feature map.
MatList build_occupation(const Dataset& dataset, const KernelSpec& features);

struct DiffusionModelExplicit {
  Eigen::MatrixXd coeff;  // Q, pd x pd symmetric PSD
  KernelSpec features;    // includes frozen fourier draws when applicable
  int dim = 0;
  double lambda_sigma = 0.0;
  SolverTrace trace;

  Eigen::MatrixXd psd_factor;  // coeff = psd_factor psd_factor^T
  void build_fast_path();

  Eigen::MatrixXd eval_a(const Eigen::VectorXd& x) const;
};

/// Fits Q >= 0 by FISTA on the Fenchel dual (with negative-part recovery) or
/// projected gradient descent on the primal, per cfg.kind.
DiffusionModelExplicit fit_diffusion_explicit(const Dataset& dataset, const DriftModel& drift,
                                              const KernelSpec& features, double lambda_sigma,
                                              const SolverConfig& cfg = {});

Eigen::MatrixXd eval_a_explicit(const DiffusionModelExplicit& model, const Eigen::VectorXd& x);

Eigen::MatrixXd eval_sigma(const DiffusionModelExplicit& model, const Eigen::VectorXd& x);

}  // namespace sock
