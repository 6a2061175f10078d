#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

// Convex machinery shared by both diffusion estimators: spectral operators on
// symmetric matrices, the Fenchel dual objective/gradient, FISTA on the dual,
// projected gradient descent on the primal, and analytic step sizes.

namespace sock {

using MatList = std::vector<Eigen::MatrixXd>;

/// [S]_- = U max(-Sigma, 0) U^T. Input is symmetrized first; result is PSD,
/// zero iff S is PSD.
Eigen::MatrixXd negative_part(const Eigen::MatrixXd& s);

/// Orthogonal projection onto the PSD cone (clips negative eigenvalues).
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& s);

/// Symmetric PSD square root. Eigenvalues in [-1e-10 ||S||_F, 0) are clipped
/// to zero; anything below that throws NotPsdError.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s);

/// Block-weighted sum: the (k,l) block (size m x m) of the returned
/// (m d) x (m d) matrix is sum_i weights[i](k,l) * occ[i].
/// Summation runs over fixed-size chunks of i so the result is independent of
/// thread count; the serial reference uses the same chunking.
Eigen::MatrixXd block_weighted_sum(const MatList& occ, const MatList& weights);

/// Dual objective
///   (n/4) ||beta||^2 + <beta, z> + (1/(4 lambda)) || [block_sum(occ,beta)]_- ||^2
/// with n = z.size(). Convex in beta.
double dual_objective(const MatList& beta, const MatList& occ, const MatList& z, double lambda);

/// Gradient of the dual objective:
///   (n/2) beta_i + z_i - (1/(2 lambda)) [ <occ_i, Y_kl> ]_{k,l},
/// where Y = [block_sum(occ, beta)]_-.
MatList dual_gradient(const MatList& beta, const MatList& occ, const MatList& z, double lambda);

/// Gram of the occupation matrices, H_ij = <occ_i, occ_j>_F. Parallel.
Eigen::MatrixXd occupation_gram(const MatList& occ);

/// Lipschitz bound for the dual gradient: n/2 + lambda_max(H) / (2 lambda).
double dual_lipschitz(const MatList& occ, double lambda);

/// Lipschitz bound for the primal gradient: 2 lambda + (2/n) lambda_max(H).
double primal_lipschitz(const MatList& occ, double lambda);

/// Primal objective (1/n) sum_i ||[<occ_i, Q_kl>]_{k,l} - z_i||^2 + lambda ||Q||^2.
double primal_objective(const Eigen::MatrixXd& q, const MatList& occ, const MatList& z, double lambda);

/// Gradient of the primal objective: block (k,l) is
/// (2/n) sum_i (<occ_i, Q_kl> - z_i(k,l)) occ_i + 2 lambda Q_kl.
Eigen::MatrixXd primal_gradient(const Eigen::MatrixXd& q, const MatList& occ, const MatList& z, double lambda);

struct SolverConfig {
  enum class Kind { fista_dual, pgd_primal };
  Kind kind = Kind::fista_dual;
  double tol = 1e-6;   // scaled by (1 + ||z||) inside the diffusion fits
  int max_iter = 5000;
  double step = 0.0;   // <= 0: 1/L from lipschitz bound
};

SolverConfig::Kind solver_kind_from_string(const std::string& name);
std::string to_string(SolverConfig::Kind kind);

struct SolverTrace {
  std::string solver;
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
};

struct DualState {
  MatList beta;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

/// FISTA with constant step 1/L, momentum t_{k+1} = (1+sqrt(1+4 t_k^2))/2 and
/// restart whenever the objective increases. The objective here is smooth, so
/// the proximal step is the identity. Stops when the gradient norm at the
/// extrapolated point drops below tol. Throws SolverError on non-finite
/// objective values.
DualState fista(const std::function<double(const MatList&)>& objective,
                const std::function<MatList(const MatList&)>& gradient,
                double step, MatList init, double tol, int max_iter);

/// Projected gradient descent over the PSD cone:
/// W <- Q - step grad(Q); Q <- psd_project(W). With step <= 1/L the objective
/// is non-increasing. Stops when ||Q_{k+1} - Q_k||_F <= tol (1 + ||Q_k||_F).
Eigen::MatrixXd pgd_psd(const std::function<double(const Eigen::MatrixXd&)>& objective,
                        const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& gradient,
                        double step, Eigen::MatrixXd init, double tol, int max_iter,
                        SolverTrace* trace = nullptr);

/// Shared diffusion fit: minimizes the PSD-constrained least squares problem
/// over (m d) x (m d) matrices for either solver route. For fista_dual the
/// primal matrix is recovered as (1/(2 lambda)) [block_sum(occ, beta*)]_-.
Eigen::MatrixXd fit_psd_matrix(const MatList& occ, const MatList& z, double lambda,
                               const SolverConfig& cfg, SolverTrace* trace = nullptr);

// Frobenius inner product / norm over lists of matrices.
double dot(const MatList& a, const MatList& b);
double norm(const MatList& a);

}  // namespace sock
