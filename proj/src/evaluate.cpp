#include "sock/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sock/errors.hpp"
#include "sock/rng.hpp"

namespace sock {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

FittedSde make_fitted(const DriftModel& drift, const DiffusionModelImplicit& diffusion, double delta) {
  auto dm = std::make_shared<DriftModel>(drift);
  auto am = std::make_shared<DiffusionModelImplicit>(diffusion);
  FittedSde sde;
  sde.dim = drift.training.dim();
  sde.delta = delta;
  sde.drift = [dm](const Eigen::VectorXd& x) { return dm->eval(x); };
  sde.a = [am](const Eigen::VectorXd& x) { return am->eval_a(x); };
  sde.sigma = [am](const Eigen::VectorXd& x) { return eval_sigma(*am, x); };
  return sde;
}

FittedSde make_fitted(const DriftModel& drift, const DiffusionModelExplicit& diffusion, double delta) {
  auto dm = std::make_shared<DriftModel>(drift);
  auto am = std::make_shared<DiffusionModelExplicit>(diffusion);
  FittedSde sde;
  sde.dim = drift.training.dim();
  sde.delta = delta;
  sde.drift = [dm](const Eigen::VectorXd& x) { return dm->eval(x); };
  sde.a = [am](const Eigen::VectorXd& x) { return am->eval_a(x); };
  sde.sigma = [am](const Eigen::VectorXd& x) { return eval_sigma(*am, x); };
  return sde;
}

FittedSde true_sde(const SdeSpec& spec, double delta) {
  FittedSde sde;
  sde.dim = spec.dim;
  sde.delta = delta;
  sde.drift = spec.drift;
  auto diffusion = spec.diffusion;
  sde.a = [diffusion](const Eigen::VectorXd& x) {
    const Eigen::MatrixXd s = diffusion(x);
    return Eigen::MatrixXd(s * s.transpose());
  };
  sde.sigma = diffusion;
  return sde;
}

namespace {

double loglik_bundle(const FittedSde& model, const TrajectoryBundle& bundle, long index_base) {
  const int d = bundle.dim();
  double total = 0.0;
  long index = index_base;
  for (int u = 0; u < bundle.realizations(); ++u) {
    for (int i = 0; i < bundle.n_intervals(); ++i, ++index) {
      const Eigen::VectorXd y = bundle.state(u, i);
      const double h = bundle.dt(i);
      Eigen::MatrixXd cov = h * model.a(y);
      cov.diagonal().array() += model.delta;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        throw SingularCovariance("transition covariance not positive definite at index " + std::to_string(index),
                                 index);
      }
      const Eigen::VectorXd r = bundle.state(u, i + 1) - y - h * model.drift(y);
      const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      const double maha = r.dot(llt.solve(r));
      total += -0.5 * (d * kLog2Pi + logdet + maha);
    }
  }
  if (!std::isfinite(total)) {
    throw SingularCovariance("non-finite log likelihood near index " + std::to_string(index), index);
  }
  return total;
}

}  // namespace

double approx_loglik(const FittedSde& model, const TrajectoryBundle& bundle) {
  return loglik_bundle(model, bundle, 0);
}

double approx_loglik(const FittedSde& model, const Dataset& dataset) {
  double total = 0.0;
  long base = 0;
  for (const auto& b : dataset.bundles) {
    total += loglik_bundle(model, b, base);
    base += static_cast<long>(b.realizations()) * b.n_intervals();
  }
  return total;
}

long loglik_term_count(const Dataset& dataset) {
  long n = 0;
  for (const auto& b : dataset.bundles) n += static_cast<long>(b.realizations()) * b.n_intervals();
  return n;
}

double perplexity_vs_true(const FittedSde& model, const FittedSde& true_model, const Dataset& dataset) {
  const double l_model = approx_loglik(model, dataset);
  const double l_true = approx_loglik(true_model, dataset);
  const double dn = static_cast<double>(dataset.dim()) * loglik_term_count(dataset);
  return std::exp((l_true - l_model) / dn) * 100.0;
}

double perplexity_real(const FittedSde& model, const Dataset& dataset) {
  const double l_model = approx_loglik(model, dataset);
  const double dn = static_cast<double>(dataset.dim()) * loglik_term_count(dataset);
  return std::exp(-l_model / dn) * 100.0;
}

std::optional<double> relative_error(const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& estimated,
                                     const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& truth,
                                     const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  Eigen::VectorXd diff_sq(n), true_sq(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = points.row(i).transpose();
    const Eigen::MatrixXd g = truth(x);
    diff_sq[i] = (estimated(x) - g).squaredNorm();
    true_sq[i] = g.squaredNorm();
  }
  const double denom = true_sq.sum();
  if (denom == 0.0) return std::nullopt;
  return std::sqrt(diff_sq.sum() / denom) * 100.0;
}

double trajectory_sq_dist(const Eigen::VectorXd& times, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double acc = 0.0;
  for (int i = 0; i + 1 < times.size(); ++i) {
    const double h = times[i + 1] - times[i];
    acc += 0.5 * h * ((a.row(i) - b.row(i)).squaredNorm() + (a.row(i + 1) - b.row(i + 1)).squaredNorm());
  }
  return acc;
}

double mmd_bandwidth(const Dataset& train) {
  // every trajectory (all bundles, all realizations); bundles share the grid
  // in all generated datasets, so cross-bundle distances are well defined
  std::vector<const Eigen::MatrixXd*> trajs;
  const Eigen::VectorXd& times = train.bundles.front().times;
  for (const auto& b : train.bundles) {
    if (b.times.size() != times.size() || b.times != times) {
      throw SchemaError("mmd_bandwidth requires a shared time grid across bundles");
    }
    for (const auto& v : b.values) trajs.push_back(&v);
  }
  const int n = static_cast<int>(trajs.size());
  if (n < 2) throw SchemaError("mmd_bandwidth needs at least two trajectories");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      dists.push_back(trajectory_sq_dist(times, *trajs[i], *trajs[j]));
    }
  }
  auto mid = dists.begin() + dists.size() / 2;
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

double mmd_vstat(const Eigen::VectorXd& times, const std::vector<Eigen::MatrixXd>& sample_a,
                 const std::vector<Eigen::MatrixXd>& sample_b, double eta) {
  if (!(eta > 0)) throw SchemaError("mmd bandwidth must be > 0");
  const int na = static_cast<int>(sample_a.size());
  const int nb = static_cast<int>(sample_b.size());
  auto kernel_mean = [&](const std::vector<Eigen::MatrixXd>& s1, const std::vector<Eigen::MatrixXd>& s2) {
    const int n1 = static_cast<int>(s1.size());
    const int n2 = static_cast<int>(s2.size());
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(n1);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n1; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n2; ++j) {
        acc += std::exp(-trajectory_sq_dist(times, s1[i], s2[j]) / eta);
      }
      row_sums[i] = acc;
    }
    return row_sums.sum() / (static_cast<double>(n1) * n2);
  };
  const double mmd2 = kernel_mean(sample_a, sample_a) + kernel_mean(sample_b, sample_b) -
                      2.0 * kernel_mean(sample_a, sample_b);
  return std::sqrt(std::max(0.0, mmd2));
}

namespace {

// Model trajectories on the bundle grid: EM with step <= em_dt inside each
// observation interval, noise keyed by (seed, ic * 2^20 + path, step).
std::vector<Eigen::MatrixXd> simulate_on_grid(const FittedSde& model, const TrajectoryBundle& bundle,
                                              int n_traj, std::uint64_t seed, std::uint64_t ic_index,
                                              double em_dt) {
  const int d = model.dim;
  const Eigen::VectorXd x0 = bundle.state(0, 0);
  std::vector<Eigen::MatrixXd> out(n_traj);
  bool failed = false;
#pragma omp parallel for schedule(dynamic)
  for (int path = 0; path < n_traj; ++path) {
    Eigen::MatrixXd obs(bundle.n_points(), d);
    obs.row(0) = x0.transpose();
    Eigen::VectorXd x = x0;
    Eigen::VectorXd eps(d);
    std::uint64_t step_counter = 0;
    const std::uint64_t stream = (ic_index << 20) + static_cast<std::uint64_t>(path);
    bool ok = true;
    for (int i = 0; i < bundle.n_intervals() && ok; ++i) {
      const long steps = std::max(1L, std::lround(bundle.dt(i) / em_dt));
      const double h = bundle.dt(i) / steps;
      const double sqrt_h = std::sqrt(h);
      for (long k = 0; k < steps; ++k) {
        for (int c = 0; c < d; ++c) {
          eps[c] = rng::normal_at(seed, stream, step_counter * d + c);
        }
        ++step_counter;
        x += model.drift(x) * h + model.sigma(x) * (sqrt_h * eps);
        if (!x.allFinite()) {
          ok = false;
          break;
        }
      }
      if (ok) obs.row(i + 1) = x.transpose();
    }
    if (!ok) {
#pragma omp atomic write
      failed = true;
    } else {
      out[path] = std::move(obs);
    }
  }
  if (failed) out.clear();
  return out;
}

}  // namespace

MmdResult mmd(const FittedSde& model, const Dataset& test, double eta, int n_model_traj,
              std::uint64_t seed, double em_dt) {
  MmdResult result;
  double sum = 0.0;
  int computed = 0;
  for (std::size_t ic = 0; ic < test.bundles.size(); ++ic) {
    const auto& bundle = test.bundles[ic];
    std::vector<Eigen::MatrixXd> sim = simulate_on_grid(model, bundle, n_model_traj, seed, ic, em_dt);
    if (sim.empty()) {
      result.per_ic.push_back(std::nullopt);
      ++result.failed;
      continue;
    }
    const double value = mmd_vstat(bundle.times, sim, bundle.values, eta);
    result.per_ic.push_back(value);
    sum += value;
    ++computed;
  }
  if (result.failed == 0 && computed > 0) result.mean = sum / computed;
  return result;
}

namespace {

struct FittedCandidate {
  FittedSde sde;
  GridCandidate info;
};

}  // namespace

GridSearchResult grid_search(const Dataset& train, const Dataset& val, const GridSpec& grid) {
  if (grid.drift_kernels.empty() || grid.lambda_f.empty() || grid.diffusion_kernels.empty() ||
      grid.lambda_sigma.empty()) {
    throw SchemaError("grid_search: empty grid");
  }

  auto run_pass = [&](double delta) {
    GridSearchResult result;
    result.delta_used = delta;
    bool have_best = false;
    bool singular_seen = false;
    for (int dk = 0; dk < static_cast<int>(grid.drift_kernels.size()); ++dk) {
      for (double lf : grid.lambda_f) {
        const DriftModel drift = fit_drift(train, grid.drift_kernels[dk], lf);
        for (int ak = 0; ak < static_cast<int>(grid.diffusion_kernels.size()); ++ak) {
          for (double ls : grid.lambda_sigma) {
            GridCandidate cand;
            cand.drift_kernel = dk;
            cand.lambda_f = lf;
            cand.diffusion_kernel = ak;
            cand.lambda_sigma = ls;
            std::optional<DiffusionModelImplicit> fit_impl;
            std::optional<DiffusionModelExplicit> fit_expl;
            FittedSde sde;
            try {
              if (grid.implicit_diffusion) {
                fit_impl = fit_diffusion_implicit(train, drift, grid.diffusion_kernels[ak], ls, grid.solver);
                sde = make_fitted(drift, *fit_impl, delta);
              } else {
                fit_expl = fit_diffusion_explicit(train, drift, grid.diffusion_kernels[ak], ls, grid.solver);
                sde = make_fitted(drift, *fit_expl, delta);
              }
              const double ll = approx_loglik(sde, val);
              cand.val_loglik = ll;
              if (!have_best || ll > *result.best.val_loglik) {
                have_best = true;
                result.best = cand;
                result.drift = drift;
                result.diffusion_implicit = std::move(fit_impl);
                result.diffusion_explicit = std::move(fit_expl);
              }
            } catch (const SingularCovariance&) {
              singular_seen = true;
            } catch (const SolverError&) {
              // candidate failed to fit; skip it
            }
            result.trace.push_back(cand);
          }
        }
      }
    }
    return std::make_pair(result, have_best && !singular_seen);
  };

  auto [result, clean] = run_pass(grid.delta);
  if (!clean && grid.delta == 0.0) {
    auto [retry, retry_clean] = run_pass(1e-3);
    if (retry.best.val_loglik.has_value()) return retry;
    result = std::move(retry);
  }
  if (!result.best.val_loglik.has_value()) {
    throw SolverError("grid_search: no candidate produced a valid likelihood");
  }
  return result;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["perplexity_pct"] = perplexity_pct ? nlohmann::json(*perplexity_pct) : nlohmann::json(nullptr);
  j["perplexity_variant"] = perplexity_is_real_variant ? "real" : "vs_true";
  j["re_f_pct"] = re_f_pct ? nlohmann::json(*re_f_pct) : nlohmann::json(nullptr);
  j["re_a_pct"] = re_a_pct ? nlohmann::json(*re_a_pct) : nlohmann::json(nullptr);
  j["mmd_mean"] = mmd_mean ? nlohmann::json(*mmd_mean) : nlohmann::json(nullptr);
  j["mmd_failed_ics"] = mmd_failed_ics;
  j["provenance"] = provenance;
  return j;
}

}  // namespace sock
