#include "sock/serialize.hpp"

#include <fstream>
#include <sstream>

#include "sock/errors.hpp"
#include "sock/psd_optim.hpp"

namespace sock {

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("expected an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(i).size()) != cols) throw ParseError("ragged matrix rows");
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("expected an array");
  Eigen::VectorXd v(j.size());
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

nlohmann::json kernel_to_json(const KernelSpec& spec) {
  nlohmann::json j;
  switch (spec.kind) {
    case KernelKind::gaussian:
      j["kind"] = "gaussian";
      j["scale"] = spec.scale;
      break;
    case KernelKind::polynomial:
      j["kind"] = "polynomial";
      j["degree"] = spec.degree;
      break;
    case KernelKind::linear:
      j["kind"] = "linear";
      break;
    case KernelKind::fourier:
      j["kind"] = "fourier";
      j["scale"] = spec.scale;
      j["n_features"] = spec.n_features;
      j["seed"] = spec.seed;
      j["freq"] = to_json(spec.freq);
      j["phase"] = to_json(spec.phase);
      break;
  }
  return j;
}

KernelSpec kernel_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") return gaussian_kernel(j.at("scale").get<double>());
  if (kind == "polynomial") return polynomial_kernel(j.at("degree").get<int>());
  if (kind == "linear") return linear_kernel();
  if (kind == "fourier") {
    KernelSpec s;
    s.kind = KernelKind::fourier;
    s.scale = j.at("scale").get<double>();
    s.n_features = j.at("n_features").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.freq = matrix_from_json(j.at("freq"));
    s.phase = vector_from_json(j.at("phase"));
    s.validate();
    return s;
  }
  throw ParseError("unknown kernel kind '" + kind + "'");
}

nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json j;
  j["dim"] = ds.dim();
  j["split"] = ds.split;
  j["metadata"] = ds.metadata;
  nlohmann::json bundles = nlohmann::json::array();
  for (const auto& b : ds.bundles) {
    nlohmann::json jb;
    jb["id"] = b.initial_condition_id;
    jb["times"] = to_json(b.times);
    nlohmann::json values = nlohmann::json::array();
    for (const auto& v : b.values) values.push_back(to_json(v));
    jb["values"] = std::move(values);
    bundles.push_back(std::move(jb));
  }
  j["bundles"] = std::move(bundles);
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset ds;
  try {
    ds.split = j.value("split", "");
    ds.metadata = j.value("metadata", nlohmann::json::object());
    for (const auto& jb : j.at("bundles")) {
      TrajectoryBundle b;
      b.initial_condition_id = jb.value("id", "");
      b.times = vector_from_json(jb.at("times"));
      for (const auto& jv : jb.at("values")) b.values.push_back(matrix_from_json(jv));
      ds.bundles.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset: ") + e.what());
  }
  ds.validate();
  if (j.contains("dim") && j.at("dim").get<int>() != ds.dim()) {
    throw SchemaError("dataset: declared dim " + j.at("dim").dump() + " does not match bundle dimension " +
                      std::to_string(ds.dim()));
  }
  return ds;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

void save_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  save_json_file(dataset_to_json(ds), path);
}

Dataset load_dataset(const std::string& path) { return dataset_from_json(load_json_file(path)); }

TrajectoryBundle load_csv_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    std::string field;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      try {
        row.push_back(std::stod(field));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (line_no == 1) continue;  // header
      throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": inconsistent column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().size() < 2) {
    throw ParseError(path + ": expected columns t, x1..xd");
  }
  TrajectoryBundle b;
  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows.front().size()) - 1;
  b.initial_condition_id = path;
  b.times.resize(n);
  Eigen::MatrixXd values(n, d);
  for (int i = 0; i < n; ++i) {
    b.times[i] = rows[i][0];
    for (int c = 0; c < d; ++c) values(i, c) = rows[i][c + 1];
  }
  b.values.push_back(std::move(values));
  b.validate();
  return b;
}

namespace {

nlohmann::json trace_to_json(const SolverTrace& t) {
  return {{"solver", t.solver},
          {"iterations", t.iterations},
          {"objective", t.objective},
          {"grad_norm", t.grad_norm},
          {"converged", t.converged}};
}

SolverTrace trace_from_json(const nlohmann::json& j) {
  SolverTrace t;
  t.solver = j.value("solver", "");
  t.iterations = j.value("iterations", 0);
  t.objective = j.value("objective", 0.0);
  t.grad_norm = j.value("grad_norm", 0.0);
  t.converged = j.value("converged", false);
  return t;
}

}  // namespace

nlohmann::json drift_model_to_json(const DriftModel& model) {
  nlohmann::json j;
  j["type"] = "drift";
  j["kernel"] = kernel_to_json(model.kernel);
  j["lambda_f"] = model.lambda_f;
  j["lambda_scaling"] = "n_lambda";  // ridge enters the solve as n * lambda_f
  j["alpha"] = to_json(model.alpha);
  j["training"] = dataset_to_json(model.training);
  return j;
}

DriftModel drift_model_from_json(const nlohmann::json& j) {
  if (j.value("type", "") != "drift") throw SchemaError("not a drift model file");
  DriftModel model;
  model.kernel = kernel_from_json(j.at("kernel"));
  model.lambda_f = j.at("lambda_f").get<double>();
  model.alpha = matrix_from_json(j.at("alpha"));
  model.training = dataset_from_json(j.at("training"));
  if (model.alpha.rows() != model.training.total_intervals() || model.alpha.cols() != model.training.dim()) {
    throw SchemaError("drift model: alpha shape does not match training intervals");
  }
  if (!model.alpha.allFinite()) throw SchemaError("drift model: non-finite alpha");
  model.build_fast_path();
  return model;
}

void save_drift_model(const DriftModel& model, const std::string& path) {
  save_json_file(drift_model_to_json(model), path);
}

DriftModel load_drift_model(const std::string& path) { return drift_model_from_json(load_json_file(path)); }

nlohmann::json diffusion_model_to_json(const DiffusionModelImplicit& model) {
  nlohmann::json j;
  j["type"] = "diffusion_implicit";
  j["kernel"] = kernel_to_json(model.map.kernel);
  j["lambda_sigma"] = model.lambda_sigma;
  j["anchors"] = to_json(model.map.anchors);
  j["factor"] = to_json(model.map.factor);
  j["gram_eigenvalues"] = to_json(model.map.gram_eigenvalues);
  j["anchor_features"] = to_json(model.map.anchor_features);
  j["coeff"] = to_json(model.coeff);
  j["solver"] = trace_to_json(model.trace);
  return j;
}

nlohmann::json diffusion_model_to_json(const DiffusionModelExplicit& model) {
  nlohmann::json j;
  j["type"] = "diffusion_explicit";
  j["features"] = kernel_to_json(model.features);
  j["dim"] = model.dim;
  j["lambda_sigma"] = model.lambda_sigma;
  j["coeff"] = to_json(model.coeff);
  j["solver"] = trace_to_json(model.trace);
  return j;
}

void save_diffusion_model(const DiffusionModelImplicit& model, const std::string& path) {
  save_json_file(diffusion_model_to_json(model), path);
}

void save_diffusion_model(const DiffusionModelExplicit& model, const std::string& path) {
  save_json_file(diffusion_model_to_json(model), path);
}

LoadedDiffusionModel load_diffusion_model(const std::string& path) {
  const nlohmann::json j = load_json_file(path);
  const std::string type = j.value("type", "");
  LoadedDiffusionModel out;
  if (type == "diffusion_implicit") {
    DiffusionModelImplicit m;
    m.map.kernel = kernel_from_json(j.at("kernel"));
    m.lambda_sigma = j.at("lambda_sigma").get<double>();
    m.map.anchors = matrix_from_json(j.at("anchors"));
    m.map.anchor_sqnorms = m.map.anchors.rowwise().squaredNorm();
    m.map.factor = matrix_from_json(j.at("factor"));
    m.map.gram_eigenvalues = vector_from_json(j.at("gram_eigenvalues"));
    m.map.projector = m.map.gram_eigenvalues.cwiseInverse().asDiagonal() * m.map.factor;
    m.map.anchor_features = matrix_from_json(j.at("anchor_features"));
    m.coeff = matrix_from_json(j.at("coeff"));
    m.trace = trace_from_json(j.at("solver"));
    m.build_fast_path();
    out.implicit = std::move(m);
  } else if (type == "diffusion_explicit") {
    DiffusionModelExplicit m;
    m.features = kernel_from_json(j.at("features"));
    m.dim = j.at("dim").get<int>();
    m.lambda_sigma = j.at("lambda_sigma").get<double>();
    m.coeff = matrix_from_json(j.at("coeff"));
    m.trace = trace_from_json(j.at("solver"));
    m.build_fast_path();
    out.explicit_ = std::move(m);
  } else {
    throw SchemaError("'" + path + "' is not a diffusion model file");
  }
  return out;
}

}  // namespace sock
