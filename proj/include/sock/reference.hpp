#pragma once

#include <Eigen/Dense>

#include "sock/diffusion_implicit.hpp"
#include "sock/drift.hpp"
#include "sock/evaluate.hpp"
#include "sock/kernels.hpp"
#include "sock/psd_optim.hpp"
#include "sock/trajectories.hpp"

// Serial reference implementations of the OpenMP kernels. They spell out the
// defining sums directly (Monte Carlo means of trapezoid quadratures, plain
// double loops) and are compared against the parallel versions in tests and
// in the benchmark target.

namespace sock::reference {

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& points);

/// Literal realization-mean of double trapezoid quadratures per interval pair.
Eigen::MatrixXd build_drift_gram(const Dataset& dataset, const KernelSpec& kernel);

Eigen::MatrixXd block_weighted_sum(const MatList& occ, const MatList& weights);

MatList build_occupation(const Dataset& dataset, const DataFeatureMap& map);
MatList build_occupation(const Dataset& dataset, const KernelSpec& features);

/// Direct representer sum (no feature-map collapse), one row per point.
Eigen::MatrixXd eval_drift_batch(const DriftModel& model, const Eigen::MatrixXd& points);

MatList dual_gradient(const MatList& beta, const MatList& occ, const MatList& z, double lambda);

Eigen::MatrixXd primal_gradient(const Eigen::MatrixXd& q, const MatList& occ, const MatList& z, double lambda);

double mmd_vstat(const Eigen::VectorXd& times, const std::vector<Eigen::MatrixXd>& sample_a,
                 const std::vector<Eigen::MatrixXd>& sample_b, double eta);

/// Power-iteration estimate of lambda_max of the occupation Gram; lower bound
/// oracle for the analytic step-size computations.
double power_iteration_lambda_max(const Eigen::MatrixXd& sym, int iterations = 200);

}  // namespace sock::reference
