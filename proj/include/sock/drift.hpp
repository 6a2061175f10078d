#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sock/kernels.hpp"
#include "sock/trajectories.hpp"

namespace sock {

/// Fitted drift f(x) = sum_i l_i(x) alpha_i, where l_i(x) is the
/// Monte-Carlo/trapezoid estimate of the expected kernel integral over
/// training interval i. Intervals run over all bundles in dataset order.
struct DriftModel {
  KernelSpec kernel;
  double lambda_f = 0.0;
  Eigen::MatrixXd alpha;  // n_total x d
  Dataset training;

  // Exact collapse f(x) = collapsed * phi(x) for kernels with a finite
  // feature map; empty otherwise.
  Eigen::MatrixXd collapsed;  // d x feature_dim
  // Anchor-collapsed representer sum f(x) = anchor_weights^T k(x, anchors)
  // (per-anchor weights gathered across intervals), used when no feature map
  // exists; evaluates one vectorized kernel column per call.
  Eigen::MatrixXd anchor_points;   // N x d
  Eigen::VectorXd anchor_sqnorms;  // N
  Eigen::MatrixXd anchor_weights;  // N x d

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
  void build_fast_path();
};

/// Interval-pair Gram: entry (I, J) is the realization-averaged double
/// trapezoid of k over intervals I and J, (1/(M_I M_J)) sum_{u,v} Q[k].
/// Symmetric PSD up to quadrature roundoff. Parallel over entries.
Eigen::MatrixXd build_drift_gram(const Dataset& dataset, const KernelSpec& kernel);

/// Solves (L + n lambda_f I) alpha = mean_increments for the reduced scalar
/// system (n x n with an n x d right-hand side). SPD factorization with a
/// least-squares fallback.
DriftModel fit_drift(const Dataset& dataset, const KernelSpec& kernel, double lambda_f);

Eigen::VectorXd eval_drift(const DriftModel& model, const Eigen::VectorXd& x);

/// Rows of `points` evaluated in parallel; returns one drift per row.
Eigen::MatrixXd eval_drift_batch(const DriftModel& model, const Eigen::MatrixXd& points);

/// Training objective (1/n)||L alpha - dY||_F^2 + lambda_f tr(alpha^T L alpha).
double drift_objective(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& alpha,
                       const Eigen::MatrixXd& mean_incr, double lambda_f);

/// Trapezoid/Monte-Carlo occupation weights: for interval i of the dataset,
/// l_i(x) = sum over the interval's endpoint anchors of w * k(x, anchor).
/// Exposed for the diffusion residuals and the fast eval path.
struct IntervalWeights {
  Eigen::MatrixXd anchors;  // rows: all endpoint states in dataset order
  // per interval: list of (anchor row, weight) pairs
  std::vector<std::vector<std::pair<int, double>>> terms;
};
IntervalWeights interval_weights(const Dataset& dataset);

}  // namespace sock
