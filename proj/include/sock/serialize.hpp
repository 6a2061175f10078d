#pragma once

#include <string>

#include <json.hpp>

#include "sock/diffusion_explicit.hpp"
#include "sock/diffusion_implicit.hpp"
#include "sock/drift.hpp"
#include "sock/kernels.hpp"
#include "sock/trajectories.hpp"

namespace sock {

nlohmann::json to_json(const Eigen::MatrixXd& m);
nlohmann::json to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json kernel_to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const nlohmann::json& j);

nlohmann::json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);

/// Canonical dataset file (JSON). Round-trips bit-exactly.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// CSV import: columns t, x1..xd (header optional), one trajectory per file.
TrajectoryBundle load_csv_trajectory(const std::string& path);

nlohmann::json drift_model_to_json(const DriftModel& model);
DriftModel drift_model_from_json(const nlohmann::json& j);
void save_drift_model(const DriftModel& model, const std::string& path);
DriftModel load_drift_model(const std::string& path);

nlohmann::json diffusion_model_to_json(const DiffusionModelImplicit& model);
nlohmann::json diffusion_model_to_json(const DiffusionModelExplicit& model);
void save_diffusion_model(const DiffusionModelImplicit& model, const std::string& path);
void save_diffusion_model(const DiffusionModelExplicit& model, const std::string& path);

/// Models are tagged by "type"; exactly one of the results is set.
struct LoadedDiffusionModel {
  std::optional<DiffusionModelImplicit> implicit;
  std::optional<DiffusionModelExplicit> explicit_;
};
LoadedDiffusionModel load_diffusion_model(const std::string& path);

nlohmann::json load_json_file(const std::string& path);
void save_json_file(const nlohmann::json& j, const std::string& path);

}  // namespace sock
