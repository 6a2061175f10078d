#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "sock/diffusion_explicit.hpp"
#include "sock/diffusion_implicit.hpp"
#include "sock/drift.hpp"
#include "sock/simulate.hpp"
#include "sock/trajectories.hpp"

namespace sock {

/// A drift/squared-diffusion pairing (fitted or ground truth) with the
/// likelihood jitter delta. sigma is used for trajectory simulation.
struct FittedSde {
  int dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> a;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> sigma;
  double delta = 0.0;
};

FittedSde make_fitted(const DriftModel& drift, const DiffusionModelImplicit& diffusion, double delta = 0.0);
FittedSde make_fitted(const DriftModel& drift, const DiffusionModelExplicit& diffusion, double delta = 0.0);
FittedSde true_sde(const SdeSpec& spec, double delta = 0.0);

/// Euler-Maruyama transition log likelihood: sum over realizations and
/// intervals of log N(y_{i+1}; y_i + h f(y_i), h a(y_i) + delta I), with
/// p(y_0) = 1. Throws SingularCovariance when a transition covariance is not
/// positive definite (signals delta too small).
double approx_loglik(const FittedSde& model, const TrajectoryBundle& bundle);
double approx_loglik(const FittedSde& model, const Dataset& dataset);

/// Number of transition terms in the dataset likelihood (sum of n * M).
long loglik_term_count(const Dataset& dataset);

/// P = exp((l_true - l_model) / (d n)) * 100%.
double perplexity_vs_true(const FittedSde& model, const FittedSde& true_model, const Dataset& dataset);

/// P' = exp(-l_model / (d n)) * 100%.
double perplexity_real(const FittedSde& model, const Dataset& dataset);

/// RE = ||Ghat - G||_F / ||G||_F * 100% over stacked evaluations at the given
/// points (rows). Returns nullopt when ||G||_F = 0.
std::optional<double> relative_error(const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& estimated,
                                     const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& truth,
                                     const Eigen::MatrixXd& points);

/// Median of pairwise squared trajectory L2 distances in the training set
/// (the MMD kernel bandwidth).
double mmd_bandwidth(const Dataset& train);

/// Squared trajectory L2 distance: trapezoid of ||x(t) - y(t)||^2 on the grid.
double trajectory_sq_dist(const Eigen::VectorXd& times, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Biased (V-statistic) MMD between two trajectory samples under the
/// exponentiated-L2 kernel exp(-dist^2 / eta). Returns sqrt(max(0, MMD^2)).
double mmd_vstat(const Eigen::VectorXd& times, const std::vector<Eigen::MatrixXd>& sample_a,
                 const std::vector<Eigen::MatrixXd>& sample_b, double eta);

struct MmdResult {
  std::vector<std::optional<double>> per_ic;
  int failed = 0;
  /// Mean over initial conditions; NA (nullopt) if any initial condition
  /// failed from model trajectory blow-up.
  std::optional<double> mean;
};

/// Simulates n_model_traj trajectories per test initial condition with
/// Euler-Maruyama (step em_dt) observed on the test grid, and compares them
/// to the test realizations.
MmdResult mmd(const FittedSde& model, const Dataset& test, double eta, int n_model_traj,
              std::uint64_t seed, double em_dt = 1e-3);

struct GridSpec {
  std::vector<KernelSpec> drift_kernels;
  std::vector<double> lambda_f;
  std::vector<KernelSpec> diffusion_kernels;
  std::vector<double> lambda_sigma;
  bool implicit_diffusion = false;
  SolverConfig solver;
  double delta = 0.0;  // retried at 1e-3 on singular covariances
};

struct GridCandidate {
  int drift_kernel = 0;
  double lambda_f = 0.0;
  int diffusion_kernel = 0;
  double lambda_sigma = 0.0;
  std::optional<double> val_loglik;
};

struct GridSearchResult {
  GridCandidate best;
  double delta_used = 0.0;
  std::vector<GridCandidate> trace;
  DriftModel drift;
  std::optional<DiffusionModelImplicit> diffusion_implicit;
  std::optional<DiffusionModelExplicit> diffusion_explicit;
};

/// Fits every grid candidate on train and returns the argmax of the
/// validation approximate likelihood (ties keep the earliest candidate).
/// If delta = 0 produces a singular covariance anywhere, the whole grid is
/// re-evaluated at delta = 1e-3. Throws SolverError when no candidate yields
/// a valid likelihood.
GridSearchResult grid_search(const Dataset& train, const Dataset& val, const GridSpec& grid);

struct EvalReport {
  std::optional<double> perplexity_pct;
  bool perplexity_is_real_variant = false;
  std::optional<double> re_f_pct;
  std::optional<double> re_a_pct;
  std::optional<double> mmd_mean;
  int mmd_failed_ics = 0;
  nlohmann::json provenance = nlohmann::json::object();  // seeds, configs, timing

  nlohmann::json to_json() const;
};

}  // namespace sock
