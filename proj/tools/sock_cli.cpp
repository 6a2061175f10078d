// Command-line front end: simulate -> fit-drift -> fit-diffusion ->
// grid-search -> evaluate, plus end-to-end `reproduce` rows, dataset
// splitting and plot-series export. All stochastic steps take explicit seeds;
// logs go to stderr, outputs are exactly the declared files.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sock/errors.hpp"
#include "sock/evaluate.hpp"
#include "sock/parallel.hpp"
#include "sock/reference.hpp"
#include "sock/rng.hpp"
#include "sock/serialize.hpp"
#include "sock/simulate.hpp"

namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void log_line(const std::string& msg) { std::cerr << "[sock] " << msg << "\n"; }

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (!field.empty()) out.push_back(std::stod(field));
  }
  if (out.empty()) throw sock::ParseError("empty list '" + csv + "'");
  return out;
}

sock::KernelSpec make_kernel(const std::string& kind, double scale, int degree, int n_features,
                             std::uint64_t seed, int dim) {
  if (kind == "gaussian") return sock::gaussian_kernel(scale);
  if (kind == "polynomial") return sock::polynomial_kernel(degree);
  if (kind == "linear") return sock::linear_kernel();
  if (kind == "fourier") return sock::fourier_kernel(scale, n_features, seed, dim);
  throw sock::SchemaError("unknown kernel '" + kind + "'");
}

struct DiffusionRef {
  std::optional<sock::DiffusionModelImplicit> implicit;
  std::optional<sock::DiffusionModelExplicit> explicit_;

  sock::FittedSde fitted(const sock::DriftModel& drift, double delta) const {
    if (implicit) return sock::make_fitted(drift, *implicit, delta);
    return sock::make_fitted(drift, *explicit_, delta);
  }
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> a_fn() const {
    if (implicit) {
      const auto* m = &*implicit;
      return [m](const Eigen::VectorXd& x) { return m->eval_a(x); };
    }
    const auto* m = &*explicit_;
    return [m](const Eigen::VectorXd& x) { return m->eval_a(x); };
  }
  const sock::SolverTrace& trace() const { return implicit ? implicit->trace : explicit_->trace; }
};

sock::FittedSde true_model_from_arg(const std::string& arg, double delta) {
  if (arg.rfind("preset:", 0) == 0) {
    return sock::true_sde(sock::make_preset(arg.substr(7)), delta);
  }
  if (arg.rfind("metadata:", 0) == 0) {
    return sock::true_sde(sock::preset_from_metadata(sock::load_json_file(arg.substr(9))), delta);
  }
  throw sock::SchemaError("--true-model expects preset:<name> or metadata:<file>");
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& preset, int train, int val, int test, int points, double horizon,
                 std::uint64_t seed, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();
  if (preset == "sir") {
    sock::SirSpec spec;
    spec.horizon = horizon;
    spec.n_points = points;
    sock::Dataset tr = sock::gillespie_sir(spec, train, sock::rng::mix(seed, 0, 0), "train");
    sock::Dataset va = sock::gillespie_sir(spec, val, sock::rng::mix(seed, 0, 1), "val");
    sock::Dataset te = sock::gillespie_sir(spec, test, sock::rng::mix(seed, 0, 2), "test");
    tr.metadata["seed"] = seed;
    va.metadata["seed"] = seed;
    te.metadata["seed"] = seed;
    sock::save_dataset(tr, out_dir + "/train.json");
    sock::save_dataset(va, out_dir + "/val.json");
    sock::save_dataset(te, out_dir + "/test.json");
    json meta = tr.metadata;
    meta["counts"] = {{"train", train}, {"val", val}, {"test", test}};
    sock::save_json_file(meta, out_dir + "/metadata.json");
  } else {
    sock::GenerateConfig cfg;
    cfg.preset = preset;
    cfg.train = train;
    cfg.val = val;
    cfg.test = test;
    cfg.n_points = points;
    cfg.horizon = horizon;
    cfg.seed = seed;
    sock::GeneratedData data = sock::generate_dataset(cfg);
    if (train > 0) sock::save_dataset(data.train, out_dir + "/train.json");
    if (val > 0) sock::save_dataset(data.val, out_dir + "/val.json");
    if (test > 0) sock::save_dataset(data.test, out_dir + "/test.json");
    sock::save_json_file(data.metadata, out_dir + "/metadata.json");
  }
  log_line("simulate: preset=" + preset + " seed=" + std::to_string(seed) + " wrote " + out_dir +
           "/{train,val,test,metadata}.json in " + std::to_string(seconds_since(start)) + "s");
  return 0;
}

// ---------------------------------------------------------------------------
// fit-drift / fit-diffusion

int cmd_fit_drift(const std::string& data_path, const std::string& kernel, double scale, int degree,
                  double lambda_f, const std::string& out_path) {
  const sock::Dataset train = sock::load_dataset(data_path);
  const auto start = std::chrono::steady_clock::now();
  const sock::KernelSpec spec = make_kernel(kernel, scale, degree, 0, 0, train.dim());
  const sock::DriftModel model = sock::fit_drift(train, spec, lambda_f);
  sock::save_drift_model(model, out_path);
  log_line("fit-drift: n=" + std::to_string(model.alpha.rows()) + " kernel=" + kernel +
           " lambda_f=" + std::to_string(lambda_f) + " time=" + std::to_string(seconds_since(start)) + "s");
  return 0;
}

int cmd_fit_diffusion(const std::string& data_path, const std::string& drift_path, const std::string& method,
                      const std::string& kernel, double scale, int degree, int n_features,
                      std::uint64_t kernel_seed, double lambda_sigma, const std::string& solver, double tol,
                      int max_iter, const std::string& out_path) {
  const sock::Dataset train = sock::load_dataset(data_path);
  const sock::DriftModel drift = sock::load_drift_model(drift_path);
  sock::SolverConfig cfg;
  cfg.kind = sock::solver_kind_from_string(solver);
  cfg.tol = tol;
  cfg.max_iter = max_iter;
  const sock::KernelSpec spec = make_kernel(kernel, scale, degree, n_features, kernel_seed, train.dim());
  const auto start = std::chrono::steady_clock::now();
  sock::SolverTrace trace;
  if (method == "implicit") {
    const auto model = sock::fit_diffusion_implicit(train, drift, spec, lambda_sigma, cfg);
    trace = model.trace;
    sock::save_diffusion_model(model, out_path);
  } else if (method == "explicit") {
    const auto model = sock::fit_diffusion_explicit(train, drift, spec, lambda_sigma, cfg);
    trace = model.trace;
    sock::save_diffusion_model(model, out_path);
  } else {
    throw sock::SchemaError("--method must be implicit or explicit");
  }
  log_line("fit-diffusion: method=" + method + " solver=" + trace.solver + " iterations=" +
           std::to_string(trace.iterations) + " objective=" + std::to_string(trace.objective) +
           " converged=" + std::to_string(trace.converged) + " time=" + std::to_string(seconds_since(start)) + "s");
  return 0;
}

// ---------------------------------------------------------------------------
// grid-search

int cmd_grid_search(const std::string& train_path, const std::string& val_path, const std::string& method,
                    const std::string& drift_kernel, const std::string& diffusion_kernel,
                    const std::string& lambda_f_csv, const std::string& lambda_sigma_csv,
                    const std::string& scales_csv, int n_features, std::uint64_t seed, double delta,
                    const std::string& solver, double tol, int max_iter, const std::string& out_dir) {
  const sock::Dataset train = sock::load_dataset(train_path);
  const sock::Dataset val = sock::load_dataset(val_path);
  std::filesystem::create_directories(out_dir);

  std::vector<double> scales;
  if (scales_csv == "auto") {
    scales = sock::default_scale_grid(train.all_points());
  } else {
    scales = parse_double_list(scales_csv);
  }

  auto kernel_grid = [&](const std::string& kind) {
    std::vector<sock::KernelSpec> specs;
    if (kind == "gaussian" || kind == "fourier") {
      for (double s : scales) specs.push_back(make_kernel(kind, s, 2, n_features, seed, train.dim()));
    } else {
      specs.push_back(make_kernel(kind, 1.0, 2, n_features, seed, train.dim()));
    }
    return specs;
  };

  sock::GridSpec grid;
  grid.drift_kernels = kernel_grid(drift_kernel);
  grid.diffusion_kernels = kernel_grid(diffusion_kernel);
  grid.lambda_f = parse_double_list(lambda_f_csv);
  grid.lambda_sigma = parse_double_list(lambda_sigma_csv);
  grid.implicit_diffusion = (method == "implicit");
  grid.solver.kind = sock::solver_kind_from_string(solver);
  grid.solver.tol = tol;
  grid.solver.max_iter = max_iter;
  grid.delta = delta;

  const auto start = std::chrono::steady_clock::now();
  const sock::GridSearchResult result = sock::grid_search(train, val, grid);

  sock::save_drift_model(result.drift, out_dir + "/drift.json");
  if (result.diffusion_implicit) {
    sock::save_diffusion_model(*result.diffusion_implicit, out_dir + "/diffusion.json");
  } else {
    sock::save_diffusion_model(*result.diffusion_explicit, out_dir + "/diffusion.json");
  }
  json summary;
  summary["best"] = {{"drift_kernel", sock::kernel_to_json(grid.drift_kernels[result.best.drift_kernel])},
                     {"lambda_f", result.best.lambda_f},
                     {"diffusion_kernel", sock::kernel_to_json(grid.diffusion_kernels[result.best.diffusion_kernel])},
                     {"lambda_sigma", result.best.lambda_sigma},
                     {"val_loglik", *result.best.val_loglik}};
  summary["delta_used"] = result.delta_used;
  json trace = json::array();
  for (const auto& c : result.trace) {
    trace.push_back({{"drift_kernel", c.drift_kernel},
                     {"lambda_f", c.lambda_f},
                     {"diffusion_kernel", c.diffusion_kernel},
                     {"lambda_sigma", c.lambda_sigma},
                     {"val_loglik", c.val_loglik ? json(*c.val_loglik) : json(nullptr)}});
  }
  summary["candidates"] = std::move(trace);
  sock::save_json_file(summary, out_dir + "/grid_search.json");
  log_line("grid-search: " + std::to_string(result.trace.size()) + " candidates, best val_loglik=" +
           std::to_string(*result.best.val_loglik) + " delta=" + std::to_string(result.delta_used) +
           " time=" + std::to_string(seconds_since(start)) + "s");
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const std::string& drift_path, const std::string& diffusion_path, const std::string& data_path,
                 const std::string& train_path, const std::string& true_model_arg, const std::string& metrics_csv,
                 std::uint64_t seed, int mmd_traj, double mmd_dt, double delta, const std::string& out_path) {
  const sock::DriftModel drift = sock::load_drift_model(drift_path);
  const sock::LoadedDiffusionModel loaded = sock::load_diffusion_model(diffusion_path);
  DiffusionRef diffusion{loaded.implicit, loaded.explicit_};
  const sock::Dataset test = sock::load_dataset(data_path);

  const bool want_p = metrics_csv.find('P') != std::string::npos;
  const bool want_re = metrics_csv.find("RE") != std::string::npos;
  const bool want_mmd = metrics_csv.find("MMD") != std::string::npos;

  sock::EvalReport report;
  report.provenance = {{"drift_model", drift_path}, {"diffusion_model", diffusion_path},
                       {"data", data_path},         {"true_model", true_model_arg},
                       {"seed", seed},              {"delta", delta},
                       {"mmd_trajectories", mmd_traj}};

  auto model = diffusion.fitted(drift, delta);
  std::optional<sock::FittedSde> truth;
  if (!true_model_arg.empty()) truth = true_model_from_arg(true_model_arg, delta);

  const auto start = std::chrono::steady_clock::now();
  if (want_p) {
    auto eval_p = [&](double d) {
      model.delta = d;
      if (truth) {
        truth->delta = d;
        report.perplexity_pct = sock::perplexity_vs_true(model, *truth, test);
      } else {
        report.perplexity_pct = sock::perplexity_real(model, test);
        report.perplexity_is_real_variant = true;
      }
    };
    try {
      eval_p(delta);
    } catch (const sock::SingularCovariance&) {
      log_line("evaluate: singular covariance at delta=" + std::to_string(delta) + ", retrying with 1e-3");
      report.provenance["delta"] = 1e-3;
      eval_p(1e-3);
    }
  }
  if (want_re && truth) {
    const Eigen::MatrixXd pts = test.all_points();
    auto est_f = [&](const Eigen::VectorXd& x) { return Eigen::MatrixXd(drift.eval(x)); };
    auto true_f = [&](const Eigen::VectorXd& x) { return Eigen::MatrixXd(truth->drift(x)); };
    report.re_f_pct = sock::relative_error(est_f, true_f, pts);
    report.re_a_pct = sock::relative_error(diffusion.a_fn(), truth->a, pts);
  }
  if (want_mmd) {
    const sock::Dataset train = sock::load_dataset(train_path);
    const double eta = sock::mmd_bandwidth(train);
    report.provenance["mmd_bandwidth"] = eta;
    const sock::MmdResult m = sock::mmd(model, test, eta, mmd_traj, seed, mmd_dt);
    report.mmd_mean = m.mean;
    report.mmd_failed_ics = m.failed;
  }
  report.provenance["time_sec"] = seconds_since(start);
  sock::save_json_file(report.to_json(), out_path);
  log_line("evaluate: wrote " + out_path);
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// split

int cmd_split(const std::string& data_path, double train_frac, double val_frac, std::uint64_t seed,
              const std::string& out_dir) {
  const sock::Dataset all = sock::load_dataset(data_path);
  std::filesystem::create_directories(out_dir);
  const int n = static_cast<int>(all.bundles.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  sock::rng::Stream stream(seed);
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<int>(stream.next_u64() % (i + 1))]);
  }
  const int n_train = static_cast<int>(std::lround(train_frac * n));
  const int n_val = static_cast<int>(std::lround(val_frac * n));
  sock::Dataset train, val, test;
  train.split = "train";
  val.split = "val";
  test.split = "test";
  for (int i = 0; i < n; ++i) {
    if (i < n_train) train.bundles.push_back(all.bundles[order[i]]);
    else if (i < n_train + n_val) val.bundles.push_back(all.bundles[order[i]]);
    else test.bundles.push_back(all.bundles[order[i]]);
  }
  json meta = all.metadata;
  meta["split_seed"] = seed;
  meta["split_counts"] = {{"train", train.bundles.size()}, {"val", val.bundles.size()}, {"test", test.bundles.size()}};
  train.metadata = meta;
  val.metadata = meta;
  test.metadata = meta;
  sock::save_dataset(train, out_dir + "/train.json");
  sock::save_dataset(val, out_dir + "/val.json");
  sock::save_dataset(test, out_dir + "/test.json");
  log_line("split: " + std::to_string(train.bundles.size()) + "/" + std::to_string(val.bundles.size()) + "/" +
           std::to_string(test.bundles.size()) + " bundles, seed=" + std::to_string(seed));
  return 0;
}

// ---------------------------------------------------------------------------
// export-plot

int cmd_export_plot(const std::string& drift_path, const std::string& diffusion_path,
                    const std::string& data_path, int grid_points, const std::string& out_path) {
  const sock::DriftModel drift = sock::load_drift_model(drift_path);
  const sock::LoadedDiffusionModel loaded = sock::load_diffusion_model(diffusion_path);
  DiffusionRef diffusion{loaded.implicit, loaded.explicit_};
  auto a_fn = diffusion.a_fn();

  Eigen::MatrixXd pts;
  const int d = drift.training.dim();
  if (!data_path.empty()) {
    pts = sock::load_dataset(data_path).all_points();
  } else {
    const Eigen::MatrixXd anchors = drift.training.all_points();
    const Eigen::VectorXd lo = anchors.colwise().minCoeff();
    const Eigen::VectorXd hi = anchors.colwise().maxCoeff();
    if (d == 1) {
      pts.resize(grid_points, 1);
      for (int i = 0; i < grid_points; ++i) pts(i, 0) = lo[0] + (hi[0] - lo[0]) * i / (grid_points - 1);
    } else if (d == 2) {
      pts.resize(grid_points * grid_points, 2);
      int r = 0;
      for (int i = 0; i < grid_points; ++i) {
        for (int j = 0; j < grid_points; ++j, ++r) {
          pts(r, 0) = lo[0] + (hi[0] - lo[0]) * i / (grid_points - 1);
          pts(r, 1) = lo[1] + (hi[1] - lo[1]) * j / (grid_points - 1);
        }
      }
    } else {
      pts = anchors;
    }
  }

  std::ofstream out(out_path);
  if (!out) throw sock::ParseError("cannot open '" + out_path + "' for writing");
  out.precision(12);
  for (int c = 0; c < d; ++c) out << "x" << c + 1 << ",";
  for (int c = 0; c < d; ++c) out << "f" << c + 1 << ",";
  for (int k = 0; k < d; ++k)
    for (int l = k; l < d; ++l) out << "a" << k + 1 << l + 1 << ",";
  out << (d == 2 ? "theta,ellipse_minor,ellipse_major\n" : "sigma_spectral_norm\n");
  for (int i = 0; i < pts.rows(); ++i) {
    const Eigen::VectorXd x = pts.row(i).transpose();
    const Eigen::VectorXd f = drift.eval(x);
    const Eigen::MatrixXd a = a_fn(x);
    for (int c = 0; c < d; ++c) out << x[c] << ",";
    for (int c = 0; c < d; ++c) out << f[c] << ",";
    for (int k = 0; k < d; ++k)
      for (int l = k; l < d; ++l) out << a(k, l) << ",";
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (d == 2) {
      // ellipse drawn from the eigendecomposition: axes proportional to
      // sqrt(eigenvalues), rotated to the leading eigenvector
      const double theta = std::atan2(es.eigenvectors()(1, 1), es.eigenvectors()(0, 1));
      out << theta << "," << std::sqrt(std::max(0.0, es.eigenvalues()[0])) << ","
          << std::sqrt(std::max(0.0, es.eigenvalues()[1])) << "\n";
    } else {
      out << std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())) << "\n";
    }
  }
  log_line("export-plot: wrote " + out_path + " (" + std::to_string(pts.rows()) + " rows)");
  return 0;
}

// ---------------------------------------------------------------------------
// reproduce

struct TableRowConfig {
  std::string preset;
  int train, val, test, points;
  double horizon;
  std::string drift_kernel;      // linear | gaussian | polynomial
  std::string diffusion_kernel;  // linear | fourier
};

TableRowConfig table_config(const std::string& table) {
  if (table == "gbm") return {"gbm", 70, 10, 20, 101, 1.0, "linear", "linear"};
  if (table == "exponential") return {"exponential", 42, 6, 12, 11, 1.0, "gaussian", "fourier"};
  if (table == "dense") return {"dense_matrix", 70, 10, 20, 11, 1.0, "linear", "linear"};
  if (table == "lorenz96") return {"lorenz96_10", 20, 5, 10, 101, 1.0, "polynomial", "linear"};
  if (table == "sir") return {"sir", 70, 50, 80, 101, 100.0, "polynomial", "linear"};
  throw sock::SchemaError("unknown table '" + table + "' (gbm, exponential, dense, lorenz96, sir)");
}

// Validation mean-increment error of a drift fit; the cheap stage-one
// criterion before the diffusion grid is scored by approximate likelihood.
double drift_val_error(const sock::DriftModel& drift, const sock::Dataset& val) {
  double err = 0.0;
  for (const auto& b : val.bundles) {
    const Eigen::MatrixXd dy = sock::mean_increments(b);
    for (int u = 0; u < b.realizations(); ++u) {
      const Eigen::MatrixXd f = sock::eval_drift_batch(drift, b.values[u]);
      for (int i = 0; i < b.n_intervals(); ++i) {
        const Eigen::VectorXd quad = (0.5 * b.dt(i)) * (f.row(i) + f.row(i + 1)).transpose();
        err += (quad - dy.row(i).transpose()).squaredNorm() / b.realizations();
      }
    }
  }
  return err;
}

int cmd_reproduce(const std::string& table, std::uint64_t seed, const std::string& out_dir) {
  const TableRowConfig cfg = table_config(table);
  std::filesystem::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();

  sock::Dataset train, val, test;
  json metadata;
  if (cfg.preset == "sir") {
    sock::SirSpec spec;
    spec.horizon = cfg.horizon;
    spec.n_points = cfg.points;
    train = sock::gillespie_sir(spec, cfg.train, sock::rng::mix(seed, 0, 0), "train");
    val = sock::gillespie_sir(spec, cfg.val, sock::rng::mix(seed, 0, 1), "val");
    test = sock::gillespie_sir(spec, cfg.test, sock::rng::mix(seed, 0, 2), "test");
    metadata = train.metadata;
  } else {
    sock::GenerateConfig gen;
    gen.preset = cfg.preset;
    gen.train = cfg.train;
    gen.val = cfg.val;
    gen.test = cfg.test;
    gen.n_points = cfg.points;
    gen.horizon = cfg.horizon;
    gen.seed = seed;
    sock::GeneratedData data = sock::generate_dataset(gen);
    train = std::move(data.train);
    val = std::move(data.val);
    test = std::move(data.test);
    metadata = data.metadata;
  }
  log_line("reproduce " + table + ": generated " + std::to_string(train.bundles.size()) + "/" +
           std::to_string(val.bundles.size()) + "/" + std::to_string(test.bundles.size()) + " bundles");

  // stage 1: drift kernel scale and lambda_f by validation increment error
  const Eigen::MatrixXd train_points = train.all_points();
  std::vector<sock::KernelSpec> drift_kernels;
  if (cfg.drift_kernel == "gaussian") {
    for (double s : sock::default_scale_grid(train_points)) drift_kernels.push_back(sock::gaussian_kernel(s));
  } else {
    drift_kernels.push_back(make_kernel(cfg.drift_kernel, 1.0, 2, 0, 0, train.dim()));
  }
  const std::vector<double> lambda_f_grid{1e-8, 1e-6, 1e-4, 1e-2};
  std::optional<sock::DriftModel> best_drift;
  double best_drift_err = 0.0;
  for (const auto& k : drift_kernels) {
    for (double lf : lambda_f_grid) {
      sock::DriftModel m = sock::fit_drift(train, k, lf);
      const double err = drift_val_error(m, val);
      log_line("  drift candidate lambda_f=" + std::to_string(lf) + " val_err=" + std::to_string(err));
      if (!best_drift || err < best_drift_err) {
        best_drift_err = err;
        best_drift = std::move(m);
      }
    }
  }

  // stage 2: diffusion by validation approximate likelihood
  std::vector<sock::KernelSpec> diff_kernels;
  if (cfg.diffusion_kernel == "fourier") {
    for (double s : sock::default_scale_grid(train_points)) {
      diff_kernels.push_back(sock::fourier_kernel(s, 100, sock::rng::mix(seed, 0xFF, 0), train.dim()));
    }
  } else {
    diff_kernels.push_back(make_kernel(cfg.diffusion_kernel, 1.0, 2, 0, 0, train.dim()));
  }
  const std::vector<double> lambda_sigma_grid{1e-7, 1e-5, 1e-3, 1e-1};
  sock::SolverConfig solver;
  solver.max_iter = 5000;

  std::optional<sock::DiffusionModelExplicit> best_diff;
  std::optional<double> best_ll;
  double delta_used = 0.0;
  for (int pass = 0; pass < 2 && !best_ll; ++pass) {
    const double delta = pass == 0 ? 0.0 : 1e-3;
    delta_used = delta;
    bool singular = false;
    for (const auto& k : diff_kernels) {
      for (double ls : lambda_sigma_grid) {
        auto m = sock::fit_diffusion_explicit(train, *best_drift, k, ls, solver);
        try {
          const double ll = sock::approx_loglik(sock::make_fitted(*best_drift, m, delta), val);
          log_line("  diffusion candidate lambda_sigma=" + std::to_string(ls) + " iters=" +
                   std::to_string(m.trace.iterations) + " val_loglik=" + std::to_string(ll));
          if (!best_ll || ll > *best_ll) {
            best_ll = ll;
            best_diff = std::move(m);
          }
        } catch (const sock::SingularCovariance&) {
          singular = true;
        }
      }
    }
    if (best_ll && singular) {
      // per-dataset jitter: if any candidate needed it, rescore all with it
      best_ll.reset();
      best_diff.reset();
      delta_used = 1e-3;
      for (const auto& k : diff_kernels) {
        for (double ls : lambda_sigma_grid) {
          auto m = sock::fit_diffusion_explicit(train, *best_drift, k, ls, solver);
          const double ll = sock::approx_loglik(sock::make_fitted(*best_drift, m, 1e-3), val);
          if (!best_ll || ll > *best_ll) {
            best_ll = ll;
            best_diff = std::move(m);
          }
        }
      }
      break;
    }
  }
  if (!best_ll) throw sock::SolverError("reproduce: no diffusion candidate produced a valid likelihood");

  sock::save_drift_model(*best_drift, out_dir + "/drift.json");
  sock::save_diffusion_model(*best_diff, out_dir + "/diffusion.json");

  // metrics on test
  sock::EvalReport report;
  report.provenance = {{"table", table},       {"seed", seed},
                       {"delta", delta_used},  {"lambda_f", best_drift->lambda_f},
                       {"lambda_sigma", best_diff->lambda_sigma},
                       {"drift_kernel", sock::kernel_to_json(best_drift->kernel)},
                       {"diffusion_kernel", sock::kernel_to_json(best_diff->features)},
                       {"metadata", metadata}};
  sock::FittedSde model = sock::make_fitted(*best_drift, *best_diff, delta_used);

  const auto* diff_ptr = &*best_diff;
  if (cfg.preset == "sir") {
    report.perplexity_pct = sock::perplexity_real(model, test);
    report.perplexity_is_real_variant = true;
  } else {
    sock::FittedSde truth = sock::true_sde(sock::preset_from_metadata(metadata), delta_used);
    report.perplexity_pct = sock::perplexity_vs_true(model, truth, test);
    const Eigen::MatrixXd pts = test.all_points();
    const auto* drift_ptr = &*best_drift;
    auto est_f = [drift_ptr](const Eigen::VectorXd& x) { return Eigen::MatrixXd(drift_ptr->eval(x)); };
    auto true_f = [&truth](const Eigen::VectorXd& x) { return Eigen::MatrixXd(truth.drift(x)); };
    auto est_a = [diff_ptr](const Eigen::VectorXd& x) { return diff_ptr->eval_a(x); };
    report.re_f_pct = sock::relative_error(est_f, true_f, pts);
    report.re_a_pct = sock::relative_error(est_a, truth.a, pts);
  }
  const double eta = sock::mmd_bandwidth(train);
  report.provenance["mmd_bandwidth"] = eta;
  const sock::MmdResult m = sock::mmd(model, test, eta, 500, sock::rng::mix(seed, 0x33D, 0), 1e-3);
  report.mmd_mean = m.mean;
  report.mmd_failed_ics = m.failed;
  report.provenance["time_sec"] = seconds_since(start);
  sock::save_json_file(report.to_json(), out_dir + "/report.json");

  auto fmt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("NA"); };
  std::cout << "table=" << table << " P=" << fmt(report.perplexity_pct)
            << (report.perplexity_is_real_variant ? " (P')" : "") << " RE_f=" << fmt(report.re_f_pct)
            << " RE_a=" << fmt(report.re_a_pct) << " MMD=" << fmt(report.mmd_mean)
            << " seed=" << seed << " time=" << seconds_since(start) << "s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic occupation kernel SDE learning"};
  app.set_config("--config", "", "Config file mirroring the flags (flags override)");
  int threads = 0;
  app.add_option("--threads", threads, "Cap worker threads (default: SOCK_THREADS or all cores)");
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a benchmark dataset");
  std::string preset = "gbm", out_dir = "out";
  int train_n = 70, val_n = 10, test_n = 20, points = 101;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  sim->add_option("--preset", preset, "gbm | exponential | dense_matrix | lorenz96_10 | sir")->required();
  sim->add_option("--train", train_n);
  sim->add_option("--val", val_n);
  sim->add_option("--test", test_n);
  sim->add_option("--points", points);
  sim->add_option("--horizon", horizon);
  sim->add_option("--seed", seed)->required();
  sim->add_option("--out", out_dir)->required();

  // fit-drift
  auto* fd = app.add_subcommand("fit-drift", "Fit the occupation-kernel drift");
  std::string data_path, drift_kernel = "gaussian", out_path = "drift.json";
  double scale = 1.0, lambda_f = 0.0;
  int degree = 2;
  fd->add_option("--data", data_path)->required();
  fd->add_option("--kernel", drift_kernel, "gaussian | polynomial | linear");
  fd->add_option("--scale", scale);
  fd->add_option("--degree", degree);
  fd->add_option("--lambda-f", lambda_f)->required();
  fd->add_option("--out", out_path);

  // fit-diffusion
  auto* fdi = app.add_subcommand("fit-diffusion", "Fit the PSD squared diffusion");
  std::string drift_path, method = "explicit", diff_kernel = "fourier", solver = "fista-dual";
  double lambda_sigma = 0.0, tol = 1e-6;
  int n_features = 100, max_iter = 5000;
  std::uint64_t kernel_seed = 0;
  fdi->add_option("--data", data_path)->required();
  fdi->add_option("--drift", drift_path)->required();
  fdi->add_option("--method", method, "implicit | explicit");
  fdi->add_option("--kernel", diff_kernel, "gaussian | polynomial | linear | fourier");
  fdi->add_option("--scale", scale);
  fdi->add_option("--degree", degree);
  fdi->add_option("--features", n_features, "Fourier feature count");
  fdi->add_option("--kernel-seed", kernel_seed, "Seed for frozen feature draws");
  fdi->add_option("--lambda-sigma", lambda_sigma)->required();
  fdi->add_option("--solver", solver, "fista-dual | pgd-primal");
  fdi->add_option("--tol", tol);
  fdi->add_option("--max-iter", max_iter);
  fdi->add_option("--out", out_path);

  // grid-search
  auto* gs = app.add_subcommand("grid-search", "Joint hyperparameter grid search");
  std::string train_path, val_path, lambda_f_csv = "1e-8,1e-6,1e-4,1e-2";
  std::string lambda_sigma_csv = "1e-7,1e-5,1e-3,1e-1", scales_csv = "auto";
  double delta = 0.0;
  gs->add_option("--train", train_path)->required();
  gs->add_option("--val", val_path)->required();
  gs->add_option("--method", method, "implicit | explicit");
  gs->add_option("--drift-kernel", drift_kernel)->required();
  gs->add_option("--diffusion-kernel", diff_kernel)->required();
  gs->add_option("--lambda-f", lambda_f_csv, "Comma-separated grid");
  gs->add_option("--lambda-sigma", lambda_sigma_csv, "Comma-separated grid");
  gs->add_option("--scales", scales_csv, "auto or comma-separated grid");
  gs->add_option("--features", n_features);
  gs->add_option("--seed", seed, "Seed for frozen feature draws");
  gs->add_option("--delta", delta);
  gs->add_option("--solver", solver);
  gs->add_option("--tol", tol);
  gs->add_option("--max-iter", max_iter);
  gs->add_option("--out", out_dir)->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a fitted model on a dataset");
  std::string diffusion_path, true_model_arg, metrics = "P,RE,MMD";
  int mmd_traj = 500;
  double mmd_dt = 1e-3;
  ev->add_option("--drift", drift_path)->required();
  ev->add_option("--diffusion", diffusion_path)->required();
  ev->add_option("--data", data_path)->required();
  ev->add_option("--train", train_path, "Training set (MMD bandwidth)");
  ev->add_option("--true-model", true_model_arg, "preset:<name> or metadata:<file>");
  ev->add_option("--metrics", metrics, "Any of P, RE, MMD (comma-separated)");
  ev->add_option("--seed", seed)->required();
  ev->add_option("--mmd-traj", mmd_traj);
  ev->add_option("--mmd-dt", mmd_dt);
  ev->add_option("--delta", delta);
  ev->add_option("--out", out_path)->required();

  // reproduce
  auto* rep = app.add_subcommand("reproduce", "Full pipeline for one results-table row");
  std::string table;
  rep->add_option("--table", table, "gbm | exponential | dense | lorenz96 | sir")->required();
  rep->add_option("--seed", seed)->required();
  rep->add_option("--out", out_dir)->required();

  // split
  auto* sp = app.add_subcommand("split", "Seeded random bundle split");
  double train_frac = 0.7, val_frac = 0.1;
  sp->add_option("--data", data_path)->required();
  sp->add_option("--train", train_frac);
  sp->add_option("--val", val_frac);
  sp->add_option("--seed", seed)->required();
  sp->add_option("--out", out_dir)->required();

  // export-plot
  auto* ep = app.add_subcommand("export-plot", "CSV of drift field and diffusion ellipse series");
  int grid_points = 25;
  ep->add_option("--drift", drift_path)->required();
  ep->add_option("--diffusion", diffusion_path)->required();
  ep->add_option("--data", data_path, "Evaluate at this dataset's points instead of a grid");
  ep->add_option("--grid-points", grid_points);
  ep->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
    sock::set_threads(threads);
    if (sim->parsed()) {
      return cmd_simulate(preset, train_n, val_n, test_n, points, horizon, seed, out_dir);
    }
    if (fd->parsed()) {
      return cmd_fit_drift(data_path, drift_kernel, scale, degree, lambda_f, out_path);
    }
    if (fdi->parsed()) {
      return cmd_fit_diffusion(data_path, drift_path, method, diff_kernel, scale, degree, n_features,
                               kernel_seed, lambda_sigma, solver, tol, max_iter, out_path);
    }
    if (gs->parsed()) {
      return cmd_grid_search(train_path, val_path, method, drift_kernel, diff_kernel, lambda_f_csv,
                             lambda_sigma_csv, scales_csv, n_features, seed, delta, solver, tol, max_iter,
                             out_dir);
    }
    if (ev->parsed()) {
      return cmd_evaluate(drift_path, diffusion_path, data_path, train_path, true_model_arg, metrics, seed,
                          mmd_traj, mmd_dt, delta, out_path);
    }
    if (rep->parsed()) {
      return cmd_reproduce(table, seed, out_dir);
    }
    if (sp->parsed()) {
      return cmd_split(data_path, train_frac, val_frac, seed, out_dir);
    }
    if (ep->parsed()) {
      return cmd_export_plot(drift_path, diffusion_path, data_path, grid_points, out_path);
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
