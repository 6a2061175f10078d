#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

#include <json.hpp>

#include "sock/trajectories.hpp"

namespace sock {

/// Ground-truth SDE dx = drift(x) dt + diffusion(x) dW.
struct SdeSpec {
  int dim = 1;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> diffusion;
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

/// Named benchmark systems. `dataset_seed` only matters for dense_matrix,
/// whose random A (2x2) and b (2) are drawn once per dataset and recorded in
/// params. Presets: gbm, exponential, dense_matrix, lorenz96_10.
SdeSpec make_preset(const std::string& name, std::uint64_t dataset_seed = 0);

/// Rebuilds a preset from recorded metadata (exact drawn constants included).
SdeSpec preset_from_metadata(const nlohmann::json& metadata);

/// Euler-Maruyama: x_{k+1} = x_k + f(x_k) dt + sigma(x_k) sqrt(dt) eps_k.
/// Normals are keyed by (seed, path_id, step * dim + component), so paths are
/// reproducible independently of generation order or thread count.
/// Returns (steps+1) x dim; throws NonFiniteError with the failing step.
Eigen::MatrixXd euler_maruyama(const SdeSpec& spec, const Eigen::VectorXd& x0, double dt,
                               long steps, std::uint64_t seed, std::uint64_t path_id = 0);

struct GenerateConfig {
  std::string preset = "gbm";
  int train = 70, val = 10, test = 20;
  int n_points = 101;
  double horizon = 1.0;
  double tau = 1e-4;  // fine integration step (snapped so observations land on it)
  std::uint64_t seed = 0;
  double box_lo = 0.5, box_hi = 1.5;  // initial-condition box per component
};

struct GeneratedData {
  Dataset train, val, test;
  nlohmann::json metadata;
};

/// One bundle per trajectory (M = 1), initial conditions uniform in the box,
/// fine integration subsampled onto n_points equispaced observations.
GeneratedData generate_dataset(const GenerateConfig& cfg);

struct SirSpec {
  double infection_rate = 0.6;  // beta
  double recovery_rate = 1.0 / 14.0;
  int population = 200;
  double horizon = 100.0;
  int n_points = 101;
};

/// Gillespie SSA for the stochastic SIR model. All trajectories start from a
/// single infected individual, so the result is one bundle with M = n_traj
/// realizations, states scaled by the population (S + I + R == 1 exactly,
/// S non-increasing, R non-decreasing along every realization).
Dataset gillespie_sir(const SirSpec& spec, int n_traj, std::uint64_t seed,
                      const std::string& split = "train");

}  // namespace sock
