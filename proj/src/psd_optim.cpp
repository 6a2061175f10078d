#include "sock/psd_optim.hpp"

#include <cmath>

#include "sock/errors.hpp"

namespace sock {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_sym(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw SolverError("eigendecomposition failed");
  return es;
}

void check_shapes(const MatList& beta, const MatList& occ, const MatList& z) {
  if (beta.size() != occ.size() || z.size() != occ.size()) {
    throw SchemaError("dual variables, occupation matrices and residuals disagree on interval count");
  }
}

// Fixed chunking for i-sums so parallel and serial runs add in one order.
constexpr int kSumChunks = 64;

}  // namespace

Eigen::MatrixXd negative_part(const Eigen::MatrixXd& s) {
  auto es = eig_sym(s);
  Eigen::VectorXd lam = (-es.eigenvalues().array()).max(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& s) {
  auto es = eig_sym(s);
  Eigen::VectorXd lam = es.eigenvalues().array().max(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  auto es = eig_sym(s);
  const double floor = -1e-10 * s.norm();
  Eigen::VectorXd lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) {
    if (lam[i] < floor) {
      throw NotPsdError("matrix has eigenvalue " + std::to_string(lam[i]) + " below tolerance " + std::to_string(floor));
    }
    lam[i] = std::sqrt(std::max(lam[i], 0.0));
  }
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd block_weighted_sum(const MatList& occ, const MatList& weights) {
  const int n = static_cast<int>(occ.size());
  const int m = static_cast<int>(occ.front().rows());
  const int d = static_cast<int>(weights.front().rows());
  const int chunk = (n + kSumChunks - 1) / kSumChunks;
  const int n_chunks = (n + chunk - 1) / chunk;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m * d, m * d);
  if (d * d >= 8 || static_cast<long>(n_chunks) * m * m > (1L << 25)) {
    // enough block-level parallelism (or chunk buffers would be too large)
#pragma omp parallel for collapse(2) schedule(static)
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(m, m);
        for (int c = 0; c < n; c += chunk) {
          Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(m, m);
          const int end = std::min(c + chunk, n);
          for (int i = c; i < end; ++i) partial += weights[i](k, l) * occ[i];
          block += partial;
        }
        out.block(k * m, l * m, m, m) = block;
      }
    }
    return out;
  }
  // few blocks: parallelize the chunked sum, combine partials in chunk order
  std::vector<Eigen::MatrixXd> partials(n_chunks);
  for (int k = 0; k < d; ++k) {
    for (int l = 0; l < d; ++l) {
#pragma omp parallel for schedule(static)
      for (int c = 0; c < n_chunks; ++c) {
        Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(m, m);
        const int end = std::min((c + 1) * chunk, n);
        for (int i = c * chunk; i < end; ++i) partial += weights[i](k, l) * occ[i];
        partials[c] = std::move(partial);
      }
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(m, m);
      for (int c = 0; c < n_chunks; ++c) block += partials[c];
      out.block(k * m, l * m, m, m) = block;
    }
  }
  return out;
}

double dual_objective(const MatList& beta, const MatList& occ, const MatList& z, double lambda) {
  check_shapes(beta, occ, z);
  if (!(lambda > 0)) throw SchemaError("lambda must be > 0");
  const double n = static_cast<double>(z.size());
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    quad += beta[i].squaredNorm();
    lin += beta[i].cwiseProduct(z[i]).sum();
  }
  // ||[S]_-||^2 needs eigenvalues only
  const Eigen::MatrixXd s = block_weighted_sum(occ, beta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("eigendecomposition failed");
  const double neg_sq = es.eigenvalues().array().min(0.0).square().sum();
  return 0.25 * n * quad + lin + neg_sq / (4.0 * lambda);
}

MatList dual_gradient(const MatList& beta, const MatList& occ, const MatList& z, double lambda) {
  check_shapes(beta, occ, z);
  if (!(lambda > 0)) throw SchemaError("lambda must be > 0");
  const double n = static_cast<double>(z.size());
  const int m = static_cast<int>(occ.front().rows());
  const int d = static_cast<int>(beta.front().rows());
  const Eigen::MatrixXd y = negative_part(block_weighted_sum(occ, beta));
  MatList grad(beta.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(beta.size()); ++i) {
    Eigen::MatrixXd g(d, d);
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        g(k, l) = -occ[i].cwiseProduct(y.block(k * m, l * m, m, m)).sum() / (2.0 * lambda);
      }
    }
    grad[i] = 0.5 * n * beta[i] + z[i] + g;
  }
  return grad;
}

Eigen::MatrixXd occupation_gram(const MatList& occ) {
  const int n = static_cast<int>(occ.size());
  Eigen::MatrixXd h(n, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      h(i, j) = occ[i].cwiseProduct(occ[j]).sum();
    }
  }
  h.triangularView<Eigen::StrictlyLower>() = h.transpose();
  return h;
}

namespace {

// lambda_max of the occupation Gram H_ij = <occ_i, occ_j>. H = V^T V for
// V = [vec(occ_i)]_i, so the same value is the top eigenvalue of the m^2 x m^2
// second-moment matrix V V^T; use whichever side is smaller.
double occupation_gram_lambda_max(const MatList& occ) {
  const long n = static_cast<long>(occ.size());
  const long m2 = occ.front().size();
  if (m2 <= n) {
    Eigen::MatrixXd moment = Eigen::MatrixXd::Zero(m2, m2);
    for (const auto& o : occ) {
      const Eigen::Map<const Eigen::VectorXd> v(o.data(), m2);
      moment.noalias() += v * v.transpose();
    }
    return eig_sym(moment).eigenvalues().maxCoeff();
  }
  return eig_sym(occupation_gram(occ)).eigenvalues().maxCoeff();
}

}  // namespace

double dual_lipschitz(const MatList& occ, double lambda) {
  if (occ.empty()) throw SchemaError("no occupation matrices");
  const double n = static_cast<double>(occ.size());
  return 0.5 * n + occupation_gram_lambda_max(occ) / (2.0 * lambda);
}

double primal_lipschitz(const MatList& occ, double lambda) {
  if (occ.empty()) throw SchemaError("no occupation matrices");
  const double n = static_cast<double>(occ.size());
  return 2.0 * lambda + 2.0 * occupation_gram_lambda_max(occ) / n;
}

double primal_objective(const Eigen::MatrixXd& q, const MatList& occ, const MatList& z, double lambda) {
  const double n = static_cast<double>(z.size());
  const int m = static_cast<int>(occ.front().rows());
  const int d = static_cast<int>(z.front().rows());
  double fit = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        const double r = occ[i].cwiseProduct(q.block(k * m, l * m, m, m)).sum() - z[i](k, l);
        fit += r * r;
      }
    }
  }
  return fit / n + lambda * q.squaredNorm();
}

Eigen::MatrixXd primal_gradient(const Eigen::MatrixXd& q, const MatList& occ, const MatList& z, double lambda) {
  const int n = static_cast<int>(z.size());
  const int d = static_cast<int>(z.front().rows());
  // residual weights r_{i,kl} = <occ_i, Q_kl> - z_i(k,l), then one block sum
  MatList weights(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const int m = static_cast<int>(occ.front().rows());
    Eigen::MatrixXd w(d, d);
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        w(k, l) = occ[i].cwiseProduct(q.block(k * m, l * m, m, m)).sum() - z[i](k, l);
      }
    }
    weights[i] = std::move(w);
  }
  return 2.0 * lambda * q + (2.0 / n) * block_weighted_sum(occ, weights);
}

SolverConfig::Kind solver_kind_from_string(const std::string& name) {
  if (name == "fista-dual") return SolverConfig::Kind::fista_dual;
  if (name == "pgd-primal") return SolverConfig::Kind::pgd_primal;
  throw SchemaError("unknown solver '" + name + "' (expected fista-dual or pgd-primal)");
}

std::string to_string(SolverConfig::Kind kind) {
  return kind == SolverConfig::Kind::fista_dual ? "fista-dual" : "pgd-primal";
}

double dot(const MatList& a, const MatList& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i].cwiseProduct(b[i]).sum();
  return s;
}

double norm(const MatList& a) { return std::sqrt(dot(a, a)); }

DualState fista(const std::function<double(const MatList&)>& objective,
                const std::function<MatList(const MatList&)>& gradient,
                double step, MatList init, double tol, int max_iter) {
  DualState state;
  MatList x = std::move(init);
  MatList y = x;
  double t = 1.0;
  double fx = objective(x);
  if (!std::isfinite(fx)) throw SolverError("fista: non-finite objective at the initial point");
  state.objective_trace.push_back(fx);

  for (int iter = 0; iter < max_iter; ++iter) {
    MatList g = gradient(y);
    const double gnorm = norm(g);
    if (gnorm <= tol) {
      state.converged = true;
      state.beta = std::move(y);
      state.iterations = iter;
      state.objective_trace.push_back(objective(state.beta));
      return state;
    }
    MatList x_next(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) x_next[i] = y[i] - step * g[i];
    const double fx_next = objective(x_next);
    if (!std::isfinite(fx_next)) {
      throw SolverError("fista: non-finite objective at iteration " + std::to_string(iter) +
                        " (last finite value " + std::to_string(fx) + ")");
    }
    if (fx_next > fx) {
      // restart momentum
      t = 1.0;
      y = x;
      state.objective_trace.push_back(fx);
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = x_next[i] + ((t - 1.0) / t_next) * (x_next[i] - x[i]);
    }
    x = std::move(x_next);
    fx = fx_next;
    t = t_next;
    state.objective_trace.push_back(fx);
  }
  state.beta = std::move(x);
  state.iterations = max_iter;
  state.converged = false;
  return state;
}

Eigen::MatrixXd pgd_psd(const std::function<double(const Eigen::MatrixXd&)>& objective,
                        const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& gradient,
                        double step, Eigen::MatrixXd init, double tol, int max_iter,
                        SolverTrace* trace) {
  if (!(step > 0)) throw SchemaError("pgd step must be > 0");
  Eigen::MatrixXd q = std::move(init);
  double fq = objective(q);
  if (!std::isfinite(fq)) throw SolverError("pgd: non-finite objective at the initial point");
  int iter = 0;
  bool converged = false;
  for (; iter < max_iter; ++iter) {
    Eigen::MatrixXd next = psd_project(q - step * gradient(q));
    const double fn = objective(next);
    if (!std::isfinite(fn)) throw SolverError("pgd: non-finite objective at iteration " + std::to_string(iter));
    const double delta = (next - q).norm();
    q = std::move(next);
    fq = fn;
    if (delta <= tol * (1.0 + q.norm())) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (trace) {
    trace->solver = "pgd-primal";
    trace->iterations = iter;
    trace->objective = fq;
    trace->grad_norm = gradient(q).norm();
    trace->converged = converged;
  }
  return q;
}

Eigen::MatrixXd fit_psd_matrix(const MatList& occ, const MatList& z, double lambda,
                               const SolverConfig& cfg, SolverTrace* trace) {
  if (occ.empty() || z.size() != occ.size()) throw SchemaError("occupation matrices and residuals disagree");
  if (!(lambda > 0)) throw SchemaError("lambda_sigma must be > 0");
  const int m = static_cast<int>(occ.front().rows());
  const int d = static_cast<int>(z.front().rows());

  if (cfg.kind == SolverConfig::Kind::fista_dual) {
    const double step = cfg.step > 0 ? cfg.step : 1.0 / dual_lipschitz(occ, lambda);
    MatList init(occ.size(), Eigen::MatrixXd::Zero(d, d));
    const double tol = cfg.tol * (1.0 + norm(z));
    DualState state = fista(
        [&](const MatList& b) { return dual_objective(b, occ, z, lambda); },
        [&](const MatList& b) { return dual_gradient(b, occ, z, lambda); },
        step, std::move(init), tol, cfg.max_iter);
    Eigen::MatrixXd a = negative_part(block_weighted_sum(occ, state.beta)) / (2.0 * lambda);
    a = 0.5 * (a + a.transpose());
    if (trace) {
      trace->solver = "fista-dual";
      trace->iterations = state.iterations;
      trace->objective = primal_objective(a, occ, z, lambda);
      trace->grad_norm = norm(dual_gradient(state.beta, occ, z, lambda));
      trace->converged = state.converged;
    }
    return a;
  }

  const double step = cfg.step > 0 ? cfg.step : 1.0 / primal_lipschitz(occ, lambda);
  Eigen::MatrixXd init = Eigen::MatrixXd::Zero(m * d, m * d);
  Eigen::MatrixXd q = pgd_psd(
      [&](const Eigen::MatrixXd& x) { return primal_objective(x, occ, z, lambda); },
      [&](const Eigen::MatrixXd& x) { return primal_gradient(x, occ, z, lambda); },
      step, std::move(init), cfg.tol, cfg.max_iter, trace);
  return 0.5 * (q + q.transpose());
}

}  // namespace sock
