#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sock/diffusion_explicit.hpp"
#include "sock/diffusion_implicit.hpp"
#include "sock/drift.hpp"
#include "sock/errors.hpp"
#include "sock/reference.hpp"
#include "sock/rng.hpp"
#include "sock/simulate.hpp"
#include "test_helpers.hpp"

using namespace sock;

namespace {

DriftModel zero_drift(const Dataset& ds) {
  DriftModel m = fit_drift(ds, linear_kernel(), 1e-3);
  m.alpha.setZero();
  m.build_fast_path();
  return m;
}

// one bundle, M realizations of pure Brownian scaling dx = sigma dW
Dataset constant_diffusion_dataset(double sigma, int realizations, int n_points, std::uint64_t seed) {
  SdeSpec spec;
  spec.dim = 1;
  spec.drift = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(x.size()); };
  spec.diffusion = [sigma](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, sigma); };
  TrajectoryBundle b;
  b.initial_condition_id = "cd";
  b.times = Eigen::VectorXd::LinSpaced(n_points, 0.0, 1.0);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Ones(1);
  const int per_obs = 20;
  const double dt = 1.0 / ((n_points - 1) * per_obs);
  for (int u = 0; u < realizations; ++u) {
    const Eigen::MatrixXd fine = euler_maruyama(spec, x0, dt, (n_points - 1) * per_obs, seed, u);
    Eigen::MatrixXd obs(n_points, 1);
    for (int i = 0; i < n_points; ++i) obs.row(i) = fine.row(i * per_obs);
    b.values.push_back(obs);
  }
  Dataset ds;
  ds.bundles.push_back(b);
  return ds;
}

}  // namespace

TEST_CASE("residuals") {
  rng::Stream rng(61);
  SUBCASE("constant trajectories with zero drift give zero residuals") {
    Dataset ds;
    TrajectoryBundle b;
    b.times = Eigen::VectorXd::LinSpaced(4, 0, 1);
    b.values.push_back(Eigen::MatrixXd::Constant(4, 2, 0.7));
    ds.bundles.push_back(b);
    const MatList z = residuals(ds, zero_drift(ds));
    for (const auto& zi : z) CHECK(zi.norm() == 0.0);
  }
  SUBCASE("M=1 gives rank-one outer products") {
    Dataset ds = test_helpers::random_dataset(1, 4, 1, 2, rng);
    const MatList z = residuals(ds, zero_drift(ds));
    for (std::size_t i = 0; i < z.size(); ++i) {
      const Eigen::VectorXd v =
          (ds.bundles[0].values[0].row(i + 1) - ds.bundles[0].values[0].row(i)).transpose();
      CHECK((z[i] - v * v.transpose()).norm() < 1e-14 * (1 + z[i].norm()));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(z[i]);
      CHECK(es.eigenvalues()(0) <= 1e-12 * (1 + z[i].norm()));  // rank <= 1
    }
  }
  SUBCASE("zero drift on hand data: mean of increment outer products") {
    TrajectoryBundle b;
    b.times.resize(2);
    b.times << 0, 1;
    Eigen::MatrixXd v1(2, 1), v2(2, 1);
    v1 << 1.0, 3.0;   // increment 2
    v2 << 1.0, -1.0;  // increment -2
    b.values = {v1, v2};
    Dataset ds;
    ds.bundles.push_back(b);
    const MatList z = residuals(ds, zero_drift(ds));
    CHECK(z[0](0, 0) == doctest::Approx(0.5 * (4.0 + 4.0)));
  }
  SUBCASE("residuals are symmetric PSD on random data with a fitted drift") {
    Dataset ds = test_helpers::random_dataset(2, 5, 3, 2, rng);
    DriftModel drift = fit_drift(ds, gaussian_kernel(1.0), 1e-3);
    for (const auto& zi : residuals(ds, drift)) {
      CHECK((zi - zi.transpose()).norm() < 1e-12 * (1 + zi.norm()));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(zi);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1 + zi.norm()));
    }
  }
}

TEST_CASE("data feature map identities") {
  rng::Stream rng(62);
  SUBCASE("near-orthonormal anchors reproduce the identity gram") {
    // gaussian kernel with far-apart anchors: G ~ I
    Dataset ds;
    TrajectoryBundle b;
    b.times = Eigen::VectorXd::LinSpaced(4, 0, 1);
    Eigen::MatrixXd v(4, 1);
    v << 0, 100, 200, 300;
    b.values.push_back(v);
    ds.bundles.push_back(b);
    const DataFeatureMap map = build_gamma(ds, gaussian_kernel(1.0));
    CHECK(map.rank() == 4);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const double dot = map.features(v.row(i).transpose()).dot(map.features(v.row(j).transpose()));
        CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));
      }
    }
  }
  SUBCASE("duplicated anchors reduce the rank") {
    Dataset ds;
    TrajectoryBundle b;
    b.times = Eigen::VectorXd::LinSpaced(3, 0, 1);
    Eigen::MatrixXd v(3, 1);
    v << 0.5, 0.5, 1.5;  // duplicate state
    b.values.push_back(v);
    ds.bundles.push_back(b);
    const DataFeatureMap map = build_gamma(ds, gaussian_kernel(1.0));
    CHECK(map.rank() < 3);
  }
  SUBCASE("orthonormality and gram reproduction on random anchors") {
    Dataset ds = test_helpers::random_dataset(2, 6, 2, 2, rng);
    const DataFeatureMap map = build_gamma(ds, gaussian_kernel(0.9));
    const int r = map.rank();
    const Eigen::MatrixXd g = gram(map.kernel, map.anchors);
    // gamma gamma^* = I_r
    const Eigen::MatrixXd ortho = map.projector * g * map.projector.transpose();
    CHECK((ortho - Eigen::MatrixXd::Identity(r, r)).norm() <= 1e-8);
    // R^T R = G
    CHECK((map.factor.transpose() * map.factor - g).norm() <= 1e-8 * g.norm());
    // anchor gram reproduction through the features
    const Eigen::MatrixXd reproduced = map.anchor_features.transpose() * map.anchor_features;
    CHECK((reproduced - g).norm() <= 1e-6 * (1 + g.norm()));
  }
}

TEST_CASE("occupation matrices from the feature map") {
  rng::Stream rng(63);
  SUBCASE("rank-one map: N = (a^2 + b^2) / 2 for a unit interval") {
    // linear kernel in 1-d has a rank-one gram
    Dataset ds;
    TrajectoryBundle b;
    b.times.resize(2);
    b.times << 0, 1;
    Eigen::MatrixXd v(2, 1);
    v << 0.8, -0.4;
    b.values.push_back(v);
    ds.bundles.push_back(b);
    const DataFeatureMap map = build_gamma(ds, linear_kernel());
    REQUIRE(map.rank() == 1);
    const MatList occ = build_occupation(ds, map);
    const double a = map.features(v.row(0).transpose())[0];
    const double bb = map.features(v.row(1).transpose())[0];
    CHECK(occ[0](0, 0) == doctest::Approx(0.5 * (a * a + bb * bb)).epsilon(1e-10));
  }
  SUBCASE("PSD and trace identity on random data") {
    Dataset ds = test_helpers::random_dataset(2, 5, 2, 2, rng);
    const DataFeatureMap map = build_gamma(ds, gaussian_kernel(1.1));
    const MatList occ = build_occupation(ds, map);
    int idx = 0;
    for (const auto& bundle : ds.bundles) {
      const int m = bundle.realizations();
      for (int i = 0; i < bundle.n_intervals(); ++i, ++idx) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(occ[idx]);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1 + occ[idx].norm()));
        double expect = 0.0;
        for (int u = 0; u < m; ++u) {
          expect += map.features(bundle.state(u, i)).squaredNorm() +
                    map.features(bundle.state(u, i + 1)).squaredNorm();
        }
        expect *= bundle.dt(i) / (2.0 * m);
        CHECK(occ[idx].trace() == doctest::Approx(expect).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("implicit diffusion fit") {
  rng::Stream rng(64);
  SUBCASE("zero residuals give the zero model") {
    Dataset ds;
    TrajectoryBundle b;
    b.times = Eigen::VectorXd::LinSpaced(5, 0, 1);
    b.values.push_back(Eigen::MatrixXd::Constant(5, 1, 2.0));
    b.values.push_back(Eigen::MatrixXd::Constant(5, 1, 2.0));
    ds.bundles.push_back(b);
    const auto model = fit_diffusion_implicit(ds, zero_drift(ds), gaussian_kernel(1.0), 1e-3);
    CHECK(model.coeff.norm() < 1e-12);
    CHECK(model.eval_a(Eigen::VectorXd::Constant(1, 2.0)).norm() < 1e-12);
  }
  SUBCASE("recovers a constant diffusion within 25%") {
    const double sigma = 0.5;
    Dataset ds = constant_diffusion_dataset(sigma, 400, 9, 777);
    SolverConfig cfg;
    cfg.max_iter = 20000;
    const auto model = fit_diffusion_implicit(ds, zero_drift(ds), gaussian_kernel(2.0), 1e-6, cfg);
    // ground truth a = sigma^2 by construction
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
    CHECK(model.eval_a(x)(0, 0) == doctest::Approx(sigma * sigma).epsilon(0.25));
  }
  SUBCASE("rejects the pgd solver and bad lambda") {
    Dataset ds = test_helpers::random_dataset(1, 4, 1, 1, rng);
    SolverConfig cfg;
    cfg.kind = SolverConfig::Kind::pgd_primal;
    CHECK_THROWS_AS(fit_diffusion_implicit(ds, zero_drift(ds), gaussian_kernel(1.0), 1e-3, cfg), SchemaError);
    CHECK_THROWS_AS(fit_diffusion_implicit(ds, zero_drift(ds), gaussian_kernel(1.0), 0.0), SchemaError);
  }
}

TEST_CASE("implicit evaluation") {
  rng::Stream rng(65);
  Dataset ds = test_helpers::random_dataset(2, 5, 1, 2, rng);
  DriftModel drift = fit_drift(ds, gaussian_kernel(1.0), 1e-4);
  auto model = fit_diffusion_implicit(ds, drift, gaussian_kernel(1.0), 1e-4);
  const int r = model.map.rank();
  const int d = 2;

  SUBCASE("zero coefficients evaluate to zero") {
    auto zero = model;
    zero.coeff.setZero();
    zero.build_fast_path();
    CHECK(zero.eval_a(Eigen::VectorXd::Zero(d)).norm() == 0.0);
  }
  SUBCASE("identity coefficients give the squared feature norm times I") {
    auto ident = model;
    ident.coeff = Eigen::MatrixXd::Identity(r * d, r * d);
    ident.build_fast_path();
    const Eigen::VectorXd x = test_helpers::random_matrix(d, 1, rng);
    const Eigen::MatrixXd a = ident.eval_a(x);
    const double gnorm = model.map.features(x).squaredNorm();
    CHECK((a - gnorm * Eigen::MatrixXd::Identity(d, d)).norm() < 1e-10 * (1 + gnorm));
  }
  SUBCASE("a(x) is PSD at random points") {
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = test_helpers::random_matrix(d, 1, rng);
      const Eigen::MatrixXd a = model.eval_a(x);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1 + a.norm()));
    }
  }
  SUBCASE("fast factor path matches the direct congruence") {
    auto direct = model;
    direct.psd_factor.resize(0, 0);  // force the coeff path
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd x = test_helpers::random_matrix(d, 1, rng);
      CHECK((model.eval_a(x) - direct.eval_a(x)).norm() < 1e-10 * (1 + direct.eval_a(x).norm()));
    }
  }
  SUBCASE("sigma squares back to a") {
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd x = test_helpers::random_matrix(d, 1, rng);
      const Eigen::MatrixXd s = eval_sigma(model, x);
      CHECK((s * s.transpose() - model.eval_a(x)).norm() <= 1e-8 * (1 + model.eval_a(x).norm()));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(model.eval_a(Eigen::VectorXd::Zero(3)), SchemaError);
  }
}

// Enlarging the anchor set with off-data points must not change the optimum:
// the optimal operator is supported on the data span.
TEST_CASE("representer support: off-data anchors leave the objective unchanged") {
  rng::Stream rng(66);
  Dataset ds = test_helpers::random_dataset(2, 5, 1, 1, rng);
  DriftModel drift = fit_drift(ds, gaussian_kernel(1.0), 1e-4);
  SolverConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iter = 100000;

  const MatList z = residuals(ds, drift);
  auto fit_objective = [&](const Eigen::MatrixXd* extra) {
    const auto model = fit_diffusion_implicit(ds, drift, gaussian_kernel(1.0), 1e-3, cfg, extra);
    const MatList occ = build_occupation(ds, model.map);
    return primal_objective(model.coeff, occ, z, model.lambda_sigma);
  };

  const double base = fit_objective(nullptr);
  const Eigen::MatrixXd extra = test_helpers::random_matrix(4, 1, rng, 2.0);
  const double extended = fit_objective(&extra);
  CHECK(test_helpers::rel_diff(base, extended) <= 1e-6);
}

// Objective computed through the coefficient matrix equals the objective of
// the induced operator on the anchor span, evaluated through gram-weighted
// traces (the isometry).
TEST_CASE("isometry consistency") {
  rng::Stream rng(67);
  Dataset ds = test_helpers::random_dataset(1, 5, 2, 2, rng);
  DriftModel drift = fit_drift(ds, gaussian_kernel(1.0), 1e-4);
  const auto model = fit_diffusion_implicit(ds, drift, gaussian_kernel(1.0), 1e-3);
  const MatList z = residuals(ds, drift);
  const MatList occ = build_occupation(ds, model.map);
  const double via_coeff = primal_objective(model.coeff, occ, z, model.lambda_sigma);

  // operator route: C_kl = psi^* W_kl psi with W_kl = P^T A_kl P
  const int r = model.map.rank();
  const int d = ds.dim();
  const int n_anchor = static_cast<int>(model.map.anchors.rows());
  const Eigen::MatrixXd g = gram(model.map.kernel, model.map.anchors);
  const auto weights = interval_weights(ds);

  double fit_term = 0.0;
  for (std::size_t i = 0; i < weights.terms.size(); ++i) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n_anchor);
    for (const auto& [row, w] : weights.terms[i]) diag[row] += w;
    Eigen::MatrixXd pred(d, d);
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        const Eigen::MatrixXd w_kl =
            model.map.projector.transpose() * model.coeff.block(k * r, l * r, r, r) * model.map.projector;
        pred(k, l) = (diag.asDiagonal() * g * w_kl * g).trace();
      }
    }
    fit_term += (pred - z[i]).squaredNorm();
  }
  double norm_term = 0.0;
  for (int k = 0; k < d; ++k) {
    for (int l = 0; l < d; ++l) {
      const Eigen::MatrixXd w_kl =
          model.map.projector.transpose() * model.coeff.block(k * r, l * r, r, r) * model.map.projector;
      norm_term += (w_kl.transpose() * g * w_kl * g).trace();
    }
  }
  const double via_operator =
      fit_term / static_cast<double>(z.size()) + model.lambda_sigma * norm_term;
  CHECK(test_helpers::rel_diff(via_coeff, via_operator) <= 1e-8);
}

TEST_CASE("explicit occupation matrices") {
  rng::Stream rng(68);
  SUBCASE("p=1 formula") {
    Dataset ds;
    TrajectoryBundle b;
    b.times.resize(2);
    b.times << 0, 1;
    Eigen::MatrixXd v(2, 1);
    v << 0.7, -0.3;
    b.values.push_back(v);
    ds.bundles.push_back(b);
    const MatList occ = build_occupation(ds, linear_kernel());
    CHECK(occ[0](0, 0) == doctest::Approx(0.5 * (0.49 + 0.09)));
  }
  SUBCASE("tiny interval gives a tiny matrix") {
    Dataset ds;
    TrajectoryBundle b;
    b.times.resize(2);
    b.times << 0, 1e-12;
    Eigen::MatrixXd v(2, 1);
    v << 1.0, 1.0;
    b.values.push_back(v);
    ds.bundles.push_back(b);
    CHECK(build_occupation(ds, linear_kernel())[0].norm() <= 1e-12);
  }
  SUBCASE("PSD on random data") {
    Dataset ds = test_helpers::random_dataset(2, 5, 2, 2, rng);
    for (const auto& mi : build_occupation(ds, fourier_kernel(1.0, 16, 2, 2))) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mi);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1 + mi.norm()));
    }
  }
  SUBCASE("gaussian kernel has no explicit features") {
    Dataset ds = test_helpers::random_dataset(1, 3, 1, 1, rng);
    CHECK_THROWS_AS(build_occupation(ds, gaussian_kernel(1.0)), SchemaError);
  }
}

TEST_CASE("explicit diffusion fit") {
  rng::Stream rng(69);
  SUBCASE("zero residuals give Q = 0") {
    Dataset ds;
    TrajectoryBundle b;
    b.times = Eigen::VectorXd::LinSpaced(5, 0, 1);
    b.values.push_back(Eigen::MatrixXd::Constant(5, 2, 1.2));
    ds.bundles.push_back(b);
    const auto model = fit_diffusion_explicit(ds, zero_drift(ds), linear_kernel(), 1e-3);
    CHECK(model.coeff.norm() < 1e-12);
  }
  SUBCASE("both solvers agree on a small instance") {
    Dataset ds = test_helpers::random_dataset(2, 4, 1, 2, rng);
    DriftModel drift = fit_drift(ds, linear_kernel(), 1e-4);
    SolverConfig dual_cfg, primal_cfg;
    dual_cfg.kind = SolverConfig::Kind::fista_dual;
    dual_cfg.tol = 1e-12;
    dual_cfg.max_iter = 50000;
    primal_cfg.kind = SolverConfig::Kind::pgd_primal;
    primal_cfg.tol = 1e-12;
    primal_cfg.max_iter = 50000;
    const auto m1 = fit_diffusion_explicit(ds, drift, linear_kernel(), 1e-2, dual_cfg);
    const auto m2 = fit_diffusion_explicit(ds, drift, linear_kernel(), 1e-2, primal_cfg);
    const MatList z = residuals(ds, drift);
    const MatList occ = build_occupation(ds, linear_kernel());
    const double j1 = primal_objective(m1.coeff, occ, z, 1e-2);
    const double j2 = primal_objective(m2.coeff, occ, z, 1e-2);
    CHECK(test_helpers::rel_diff(j1, j2) <= 1e-5);
  }
  SUBCASE("recovers a constant diffusion within 25% (fourier features)") {
    const double sigma = 0.4;
    Dataset ds = constant_diffusion_dataset(sigma, 300, 9, 401);
    SolverConfig cfg;
    cfg.max_iter = 20000;
    const auto model =
        fit_diffusion_explicit(ds, zero_drift(ds), fourier_kernel(3.0, 50, 11, 1), 1e-6, cfg);
    Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
    CHECK(model.eval_a(x)(0, 0) == doctest::Approx(sigma * sigma).epsilon(0.25));
  }
}

TEST_CASE("explicit evaluation") {
  rng::Stream rng(70);
  Dataset ds = test_helpers::random_dataset(2, 4, 1, 2, rng);
  DriftModel drift = fit_drift(ds, linear_kernel(), 1e-4);
  auto model = fit_diffusion_explicit(ds, drift, fourier_kernel(1.0, 12, 3, 2), 1e-3);
  const int p = 12, d = 2;

  SUBCASE("Q = 0 evaluates to zero") {
    auto zero = model;
    zero.coeff.setZero();
    zero.build_fast_path();
    CHECK(zero.eval_a(Eigen::VectorXd::Zero(d)).norm() == 0.0);
  }
  SUBCASE("Q = I gives the squared feature norm times I") {
    auto ident = model;
    ident.coeff = Eigen::MatrixXd::Identity(p * d, p * d);
    ident.build_fast_path();
    const Eigen::VectorXd x = test_helpers::random_matrix(d, 1, rng);
    const double pnorm = feature_map(model.features, x).squaredNorm();
    CHECK((ident.eval_a(x) - pnorm * Eigen::MatrixXd::Identity(d, d)).norm() < 1e-10 * (1 + pnorm));
  }
  SUBCASE("PSD at 100 random points") {
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = test_helpers::random_matrix(d, 1, rng);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.eval_a(x));
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1 + model.eval_a(x).norm()));
    }
  }
  SUBCASE("sigma squares back to a") {
    const Eigen::VectorXd x = test_helpers::random_matrix(d, 1, rng);
    const Eigen::MatrixXd s = eval_sigma(model, x);
    CHECK((s * s.transpose() - model.eval_a(x)).norm() <= 1e-8 * (1 + model.eval_a(x).norm()));
  }
}

TEST_CASE("dual gradient with data-built occupation matrices matches finite differences") {
  rng::Stream rng(71);
  Dataset ds = test_helpers::random_dataset(1, 4, 2, 2, rng);
  DriftModel drift = fit_drift(ds, linear_kernel(), 1e-4);
  const MatList z = residuals(ds, drift);
  const MatList occ = build_occupation(ds, fourier_kernel(1.0, 3, 1, 2));
  const double lambda = 0.3;
  const int n = static_cast<int>(z.size()), d = 2;
  MatList beta;
  for (int i = 0; i < n; ++i) beta.push_back(test_helpers::random_matrix(d, d, rng));
  const MatList grad = dual_gradient(beta, occ, z, lambda);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        const double h = 1e-6;
        MatList plus = beta, minus = beta;
        plus[i](k, l) += h;
        minus[i](k, l) -= h;
        const double fd =
            (dual_objective(plus, occ, z, lambda) - dual_objective(minus, occ, z, lambda)) / (2 * h);
        CHECK(grad[i](k, l) == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }
}
