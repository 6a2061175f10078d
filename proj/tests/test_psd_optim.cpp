#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sock/errors.hpp"
#include "sock/psd_optim.hpp"
#include "sock/reference.hpp"
#include "test_helpers.hpp"

using namespace sock;
using test_helpers::random_matrix;
using test_helpers::random_psd;
using test_helpers::random_symmetric;

namespace {

Eigen::MatrixXd diag2(double a, double b) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

struct Instance {
  MatList occ, z;
  double lambda;
};

Instance random_instance(int n, int d, int m, rng::Stream& rng) {
  Instance inst;
  for (int i = 0; i < n; ++i) {
    inst.occ.push_back(random_psd(m, rng));
    inst.z.push_back(random_symmetric(d, rng));
  }
  inst.lambda = 0.1 + rng.uniform();
  return inst;
}

}  // namespace

TEST_CASE("negative_part spectral definition") {
  CHECK((negative_part(diag2(-1, 2)) - diag2(1, 0)).norm() < 1e-14);

  rng::Stream rng(21);
  SUBCASE("PSD input maps to zero") {
    CHECK(negative_part(random_psd(4, rng)).norm() < 1e-12);
  }
  SUBCASE("hand 2x2 with off-diagonal") {
    Eigen::MatrixXd s(2, 2);
    s << 0, 1, 1, 0;  // eigenvalues +-1
    Eigen::MatrixXd expect(2, 2);
    expect << 0.5, -0.5, -0.5, 0.5;
    CHECK((negative_part(s) - expect).norm() < 1e-14);
  }
  SUBCASE("Moreau decomposition against the eigenvalue-clipping oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd s = random_symmetric(5, rng);
      const Eigen::MatrixXd neg = negative_part(s);
      const Eigen::MatrixXd pos = psd_project(s);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_n(neg), es_p(pos);
      CHECK(es_n.eigenvalues().minCoeff() >= -1e-12 * (1 + neg.norm()));
      CHECK(es_p.eigenvalues().minCoeff() >= -1e-12 * (1 + pos.norm()));
      CHECK((pos - neg - s).norm() < 1e-12 * (1 + s.norm()));        // S = [S]_+ - [S]_-
      CHECK((pos * neg).norm() < 1e-10 * (1 + s.norm() * s.norm())); // complementary parts
      CHECK(neg.norm() <= s.norm() + 1e-12);
    }
  }
}

TEST_CASE("psd_project clips and is idempotent") {
  CHECK((psd_project(diag2(-1, 2)) - diag2(0, 2)).norm() < 1e-14);
  rng::Stream rng(22);
  const Eigen::MatrixXd p = random_psd(4, rng);
  CHECK((psd_project(p) - p).norm() < 1e-10 * p.norm());
  const Eigen::MatrixXd s = random_symmetric(6, rng);
  const Eigen::MatrixXd once = psd_project(s);
  CHECK((psd_project(once) - once).norm() < 1e-10 * (1 + once.norm()));
}

TEST_CASE("psd_sqrt") {
  CHECK((psd_sqrt(Eigen::MatrixXd::Identity(3, 3)) - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-14);
  CHECK((psd_sqrt(diag2(4, 9)) - diag2(2, 3)).norm() < 1e-13);

  rng::Stream rng(23);
  SUBCASE("reconstruction oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd s = random_psd(5, rng);
      const Eigen::MatrixXd root = psd_sqrt(s);
      CHECK((root * root - s).norm() <= 1e-8 * (1 + s.norm()));
      CHECK((root - root.transpose()).norm() < 1e-12 * (1 + root.norm()));
    }
  }
  SUBCASE("rejects indefinite input beyond tolerance") {
    CHECK_THROWS_AS(psd_sqrt(diag2(-0.5, 1)), NotPsdError);
  }
  SUBCASE("clips roundoff-negative eigenvalues") {
    Eigen::MatrixXd nearly = diag2(-1e-14, 1.0);
    CHECK_NOTHROW(psd_sqrt(nearly));
  }
}

TEST_CASE("block_weighted_sum matches the kronecker oracle and the serial reference") {
  rng::Stream rng(24);
  const int n = 150, d = 2, m = 3;
  auto inst = random_instance(n, d, m, rng);
  MatList weights;
  for (int i = 0; i < n; ++i) weights.push_back(random_symmetric(d, rng));

  Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(m * d, m * d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) oracle.block(k * m, l * m, m, m) += weights[i](k, l) * inst.occ[i];
  }
  const Eigen::MatrixXd fast = block_weighted_sum(inst.occ, weights);
  CHECK((fast - oracle).norm() < 1e-12 * (1 + oracle.norm()));
  // same chunked summation order: bit-identical to the serial reference
  CHECK(fast == reference::block_weighted_sum(inst.occ, weights));
}

TEST_CASE("dual objective basics") {
  rng::Stream rng(25);
  auto inst = random_instance(4, 2, 3, rng);
  MatList zero(4, Eigen::MatrixXd::Zero(2, 2));
  CHECK(dual_objective(zero, inst.occ, inst.z, inst.lambda) == 0.0);

  MatList beta;
  for (int i = 0; i < 4; ++i) beta.push_back(random_symmetric(2, rng));
  // third term vanishes as lambda -> infinity
  const double n = 4.0;
  double quad_lin = 0.25 * n * dot(beta, beta) + dot(beta, inst.z);
  CHECK(dual_objective(beta, inst.occ, inst.z, 1e14) == doctest::Approx(quad_lin).epsilon(1e-8));
}

TEST_CASE("scalar dual problem matches a grid-search oracle") {
  // n=1, d=1, m=1: J(b) = b^2/4 + b z + (max(-N b, 0))^2 / (4 lambda)
  rng::Stream rng(26);
  for (double z_val : {0.31, -0.17}) {
    const double occ_val = 0.8, lambda = 0.35;
    MatList occ{Eigen::MatrixXd::Constant(1, 1, occ_val)};
    MatList z{Eigen::MatrixXd::Constant(1, 1, z_val)};

    auto obj_scalar = [&](double b) {
      const double neg = std::max(-occ_val * b, 0.0);
      return 0.25 * b * b + b * z_val + neg * neg / (4.0 * lambda);
    };
    double best_b = 0, best_v = obj_scalar(0);
    for (double b = -4; b <= 4; b += 1e-5) {
      const double v = obj_scalar(b);
      if (v < best_v) {
        best_v = v;
        best_b = b;
      }
    }

    const double step = 1.0 / dual_lipschitz(occ, lambda);
    auto state = fista([&](const MatList& b) { return dual_objective(b, occ, z, lambda); },
                       [&](const MatList& b) { return dual_gradient(b, occ, z, lambda); }, step,
                       MatList{Eigen::MatrixXd::Zero(1, 1)}, 1e-12, 20000);
    CHECK(state.beta[0](0, 0) == doctest::Approx(best_b).epsilon(1e-4));
    CHECK(dual_objective(state.beta, occ, z, lambda) == doctest::Approx(best_v).epsilon(1e-6));
  }
}

TEST_CASE("dual gradient") {
  rng::Stream rng(27);
  SUBCASE("strictly PSD block sum leaves only the quadratic and linear parts") {
    // occ PSD and beta with positive diagonal weights => block sum PSD
    const int n = 3, d = 1, m = 2;
    MatList occ, z, beta;
    for (int i = 0; i < n; ++i) {
      occ.push_back(random_psd(m, rng) + Eigen::MatrixXd::Identity(m, m));
      z.push_back(random_symmetric(d, rng));
      beta.push_back(Eigen::MatrixXd::Constant(1, 1, 0.5 + rng.uniform()));
    }
    const MatList grad = dual_gradient(beta, occ, z, 0.7);
    for (int i = 0; i < n; ++i) {
      CHECK((grad[i] - (0.5 * n * beta[i] + z[i])).norm() < 1e-12);
    }
  }
  SUBCASE("central finite differences") {
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 3, d = 2, m = 3;
      auto inst = random_instance(n, d, m, rng);
      MatList beta;
      for (int i = 0; i < n; ++i) beta.push_back(random_matrix(d, d, rng));
      const MatList grad = dual_gradient(beta, inst.occ, inst.z, inst.lambda);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
          for (int l = 0; l < d; ++l) {
            const double h = 1e-6 * (1.0 + std::abs(beta[i](k, l)));
            MatList plus = beta, minus = beta;
            plus[i](k, l) += h;
            minus[i](k, l) -= h;
            const double fd = (dual_objective(plus, inst.occ, inst.z, inst.lambda) -
                               dual_objective(minus, inst.occ, inst.z, inst.lambda)) /
                              (2 * h);
            CHECK(grad[i](k, l) == doctest::Approx(fd).epsilon(1e-5));
          }
        }
      }
    }
  }
  SUBCASE("spectral-term gradient scales as 1/lambda") {
    const int n = 2, d = 2, m = 2;
    auto inst = random_instance(n, d, m, rng);
    MatList beta;
    for (int i = 0; i < n; ++i) beta.push_back(random_matrix(d, d, rng));
    auto h_part = [&](double lambda) {
      MatList g = dual_gradient(beta, inst.occ, inst.z, lambda);
      for (int i = 0; i < n; ++i) g[i] -= 0.5 * n * beta[i] + inst.z[i];
      return g;
    };
    const MatList g1 = h_part(0.4);
    const MatList g2 = h_part(0.4 * 5.0);
    for (int i = 0; i < n; ++i) {
      CHECK((g1[i] - 5.0 * g2[i]).norm() < 1e-10 * (1 + g1[i].norm()));
    }
  }
}

TEST_CASE("fista on a strongly convex quadratic") {
  rng::Stream rng(28);
  MatList target{random_matrix(2, 2, rng)};
  auto obj = [&](const MatList& b) { return (b[0] - target[0]).squaredNorm(); };
  auto grad = [&](const MatList& b) { return MatList{2.0 * (b[0] - target[0])}; };
  SUBCASE("converges within 100 iterations") {
    auto state = fista(obj, grad, 0.5, MatList{Eigen::MatrixXd::Zero(2, 2)}, 1e-10, 100);
    CHECK(state.converged);
    CHECK((state.beta[0] - target[0]).norm() < 1e-9);
    CHECK(state.objective_trace.back() <= state.objective_trace.front());
  }
  SUBCASE("init at the optimum stops immediately") {
    auto state = fista(obj, grad, 0.5, target, 1e-10, 100);
    CHECK(state.converged);
    CHECK(state.iterations <= 1);
  }
  SUBCASE("non-finite objective aborts") {
    auto bad_obj = [](const MatList&) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(fista(bad_obj, grad, 0.5, target, 1e-10, 10), SolverError);
  }
}

TEST_CASE("pgd_psd") {
  rng::Stream rng(29);
  SUBCASE("minimizes ||Q - S||^2 at the PSD projection of S") {
    const Eigen::MatrixXd s = random_symmetric(4, rng);
    auto obj = [&](const Eigen::MatrixXd& q) { return (q - s).squaredNorm(); };
    auto grad = [&](const Eigen::MatrixXd& q) { return Eigen::MatrixXd(2.0 * (q - s)); };
    SolverTrace trace;
    const Eigen::MatrixXd q = pgd_psd(obj, grad, 0.5, Eigen::MatrixXd::Zero(4, 4), 1e-12, 5000, &trace);
    CHECK((q - psd_project(s)).norm() < 1e-8 * (1 + s.norm()));
    CHECK(trace.converged);
  }
  SUBCASE("zero gradient at init returns init") {
    const Eigen::MatrixXd init = random_psd(3, rng);
    auto obj = [&](const Eigen::MatrixXd& q) { return (q - init).squaredNorm(); };
    auto grad = [&](const Eigen::MatrixXd& q) { return Eigen::MatrixXd(2.0 * (q - init)); };
    SolverTrace trace;
    const Eigen::MatrixXd q = pgd_psd(obj, grad, 0.4, init, 1e-12, 100, &trace);
    CHECK((q - init).norm() < 1e-12);
    CHECK(trace.iterations <= 1);
  }
  SUBCASE("objective is non-increasing with the analytic step") {
    const int n = 5, d = 2, m = 2;
    auto inst = random_instance(n, d, m, rng);
    const double step = 1.0 / primal_lipschitz(inst.occ, inst.lambda);
    std::vector<double> trace_values;
    auto obj = [&](const Eigen::MatrixXd& q) {
      const double v = primal_objective(q, inst.occ, inst.z, inst.lambda);
      trace_values.push_back(v);
      return v;
    };
    auto grad = [&](const Eigen::MatrixXd& q) { return primal_gradient(q, inst.occ, inst.z, inst.lambda); };
    pgd_psd(obj, grad, step, Eigen::MatrixXd::Zero(m * d, m * d), 1e-10, 2000, nullptr);
    for (std::size_t i = 1; i < trace_values.size(); ++i) {
      CHECK(trace_values[i] <= trace_values[i - 1] + 1e-12 * (1 + std::abs(trace_values[i - 1])));
    }
  }
  SUBCASE("iterates stay PSD") {
    const int n = 4, d = 1, m = 3;
    auto inst = random_instance(n, d, m, rng);
    const double step = 1.0 / primal_lipschitz(inst.occ, inst.lambda);
    auto obj = [&](const Eigen::MatrixXd& q) { return primal_objective(q, inst.occ, inst.z, inst.lambda); };
    auto grad = [&](const Eigen::MatrixXd& q) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1 + q.norm()));
      return primal_gradient(q, inst.occ, inst.z, inst.lambda);
    };
    pgd_psd(obj, grad, step, Eigen::MatrixXd::Zero(m, m), 1e-10, 500, nullptr);
  }
}

TEST_CASE("lipschitz bounds") {
  SUBCASE("scalar case: occ = {I_1}, n = 1, lambda = 1 gives L = 1") {
    MatList occ{Eigen::MatrixXd::Identity(1, 1)};
    CHECK(dual_lipschitz(occ, 1.0) == doctest::Approx(1.0));
  }
  SUBCASE("quadratic part scales with c^2") {
    rng::Stream rng(30);
    MatList occ;
    for (int i = 0; i < 4; ++i) occ.push_back(random_psd(3, rng));
    const double lambda = 0.8, c = 2.5;
    MatList scaled = occ;
    for (auto& o : scaled) o *= c;
    const double base = dual_lipschitz(occ, lambda) - 0.5 * 4;
    const double big = dual_lipschitz(scaled, lambda) - 0.5 * 4;
    CHECK(big == doctest::Approx(c * c * base).epsilon(1e-10));
  }
  SUBCASE("power iteration stays below the analytic bound") {
    rng::Stream rng(31);
    for (int trial = 0; trial < 5; ++trial) {
      MatList occ;
      for (int i = 0; i < 6; ++i) occ.push_back(random_psd(4, rng));
      const Eigen::MatrixXd h = occupation_gram(occ);
      const double power = reference::power_iteration_lambda_max(h, 100);
      const double lambda = 0.5;
      CHECK(power <= (dual_lipschitz(occ, lambda) - 0.5 * 6) * 2.0 * lambda + 1e-9);
      CHECK(power <= (primal_lipschitz(occ, lambda) - 2.0 * lambda) * 6 / 2.0 + 1e-9);
    }
  }
}

TEST_CASE("primal gradient matches finite differences") {
  rng::Stream rng(32);
  const int n = 4, d = 2, m = 2;
  auto inst = random_instance(n, d, m, rng);
  Eigen::MatrixXd q = random_symmetric(m * d, rng);
  const Eigen::MatrixXd grad = primal_gradient(q, inst.occ, inst.z, inst.lambda);
  for (int a = 0; a < m * d; ++a) {
    for (int b = 0; b < m * d; ++b) {
      const double h = 1e-6;
      Eigen::MatrixXd plus = q, minus = q;
      plus(a, b) += h;
      minus(a, b) -= h;
      const double fd = (primal_objective(plus, inst.occ, inst.z, inst.lambda) -
                         primal_objective(minus, inst.occ, inst.z, inst.lambda)) /
                        (2 * h);
      CHECK(grad(a, b) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

// The two solver routes must land on the same primal optimum.
TEST_CASE("primal-dual agreement on tiny instances") {
  rng::Stream rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 3);
    const int d = 1 + static_cast<int>(rng.next_u64() % 2);
    const int m = 1 + static_cast<int>(rng.next_u64() % 3);
    auto inst = random_instance(n, d, m, rng);

    SolverConfig dual_cfg;
    dual_cfg.kind = SolverConfig::Kind::fista_dual;
    dual_cfg.tol = 1e-12;
    dual_cfg.max_iter = 50000;
    SolverConfig primal_cfg;
    primal_cfg.kind = SolverConfig::Kind::pgd_primal;
    primal_cfg.tol = 1e-12;
    primal_cfg.max_iter = 50000;

    const Eigen::MatrixXd a_dual = fit_psd_matrix(inst.occ, inst.z, inst.lambda, dual_cfg);
    const Eigen::MatrixXd a_primal = fit_psd_matrix(inst.occ, inst.z, inst.lambda, primal_cfg);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_d(a_dual), es_p(a_primal);
    CHECK(es_d.eigenvalues().minCoeff() >= -1e-10 * (1 + a_dual.norm()));
    CHECK(es_p.eigenvalues().minCoeff() >= -1e-10 * (1 + a_primal.norm()));

    const double j_dual = primal_objective(a_dual, inst.occ, inst.z, inst.lambda);
    const double j_primal = primal_objective(a_primal, inst.occ, inst.z, inst.lambda);
    CHECK(test_helpers::rel_diff(j_dual, j_primal) < 1e-5);
  }
}

TEST_CASE("degenerate lambda is rejected") {
  rng::Stream rng(34);
  auto inst = random_instance(2, 1, 2, rng);
  SolverConfig cfg;
  CHECK_THROWS_AS(fit_psd_matrix(inst.occ, inst.z, 0.0, cfg), SchemaError);
  MatList beta(2, Eigen::MatrixXd::Zero(1, 1));
  CHECK_THROWS_AS(dual_objective(beta, inst.occ, inst.z, 0.0), SchemaError);
}
