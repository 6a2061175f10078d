#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sock/errors.hpp"
#include "sock/quadrature.hpp"
#include "test_helpers.hpp"

using namespace sock;

namespace {

TrajectoryBundle two_point_bundle(double t0, double t1, double y0, double y1) {
  TrajectoryBundle b;
  b.times.resize(2);
  b.times << t0, t1;
  Eigen::MatrixXd v(2, 1);
  v << y0, y1;
  b.values.push_back(v);
  return b;
}

}  // namespace

TEST_CASE("traj_integral trapezoid") {
  auto b = two_point_bundle(0, 1, 0, 2);
  SUBCASE("constant integrand") {
    CHECK(traj_integral(b, 0, [](const Eigen::VectorXd&) { return 3.5; }, 0) == doctest::Approx(3.5));
  }
  SUBCASE("identity integrand") {
    CHECK(traj_integral(b, 0, [](const Eigen::VectorXd& y) { return y[0]; }, 0) == doctest::Approx(1.0));
  }
  SUBCASE("vector-valued integrand is componentwise") {
    auto g = [](const Eigen::VectorXd& y) {
      Eigen::Vector2d out(y[0], 2 * y[0]);
      return out;
    };
    Eigen::Vector2d got = traj_integral(b, 0, g, 0);
    CHECK(got[0] == doctest::Approx(1.0));
    CHECK(got[1] == doctest::Approx(2.0));
  }
  SUBCASE("index out of range") {
    CHECK_THROWS_AS(traj_integral(b, 0, [](const Eigen::VectorXd&) { return 0.0; }, 1), SchemaError);
    CHECK_THROWS_AS(traj_integral(b, 1, [](const Eigen::VectorXd&) { return 0.0; }, 0), SchemaError);
  }
}

TEST_CASE("traj_integral exact for values affine in t") {
  // trapezoid reproduces the integral of the chord through the endpoints
  auto b = two_point_bundle(0.3, 1.1, 0.0, 0.0);
  b.values[0] << 2.0, 4.4;  // y(t) = a + c t sampled at the endpoints
  const double h = 1.1 - 0.3;
  const double exact = 0.5 * h * (2.0 + 4.4);
  CHECK(traj_integral(b, 0, [](const Eigen::VectorXd& y) { return y[0]; }, 0) == doctest::Approx(exact));
}

TEST_CASE("double_traj_integral tensor trapezoid") {
  auto one = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return 1.0; };
  SUBCASE("unit rectangle") {
    auto a = two_point_bundle(0, 1, 0, 1);
    CHECK(double_traj_integral(a, 0, 0, a, 0, 0, one) == doctest::Approx(1.0));
  }
  SUBCASE("general rectangle area") {
    auto a = two_point_bundle(0, 0.4, 0, 1);
    auto b = two_point_bundle(2, 2.7, 5, 6);
    CHECK(double_traj_integral(a, 0, 0, b, 0, 0, one) == doctest::Approx(0.4 * 0.7));
  }
  SUBCASE("product integrand, hand 4-corner sum") {
    // endpoints {0,2} on both axes: (1*1/4) * (0+0+0+4) = 1
    auto a = two_point_bundle(0, 1, 0, 2);
    auto prod = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return x[0] * y[0]; };
    CHECK(double_traj_integral(a, 0, 0, a, 0, 0, prod) == doctest::Approx(1.0));
  }
}

TEST_CASE("double_traj_integral symmetric under swap for symmetric kernels") {
  rng::Stream rng(3);
  auto a = test_helpers::random_bundle(5, 2, 2, rng, "a");
  auto b = test_helpers::random_bundle(4, 3, 2, rng, "b");
  auto k = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return std::exp(-(x - y).squaredNorm());
  };
  for (int i = 0; i < a.n_intervals(); ++i) {
    for (int j = 0; j < b.n_intervals(); ++j) {
      const double lhs = double_traj_integral(a, 1, i, b, 2, j, k);
      const double rhs = double_traj_integral(b, 2, j, a, 1, i, k);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("mc_mean") {
  TrajectoryBundle b;
  b.times.resize(2);
  b.times << 0, 1;
  for (double v : {1.0, 3.0}) {
    Eigen::MatrixXd m(2, 1);
    m << 0, v;
    b.values.push_back(m);
  }
  SUBCASE("mean of per-realization values") {
    CHECK(mc_mean(b, [&](int u) { return b.values[u](1, 0); }) == doctest::Approx(2.0));
  }
  SUBCASE("single realization is the identity") {
    TrajectoryBundle one = b;
    one.values.resize(1);
    CHECK(mc_mean(one, [&](int u) { return one.values[u](1, 0); }) == doctest::Approx(1.0));
  }
  SUBCASE("linearity") {
    auto f = [&](int u) { return b.values[u](1, 0); };
    auto g = [&](int u) { return b.values[u](1, 0) * b.values[u](1, 0); };
    const double a = 2.5, c = -1.25;
    const double lhs = mc_mean(b, [&](int u) { return a * f(u) + c * g(u); });
    CHECK(lhs == doctest::Approx(a * mc_mean(b, f) + c * mc_mean(b, g)).epsilon(1e-12));
  }
}

TEST_CASE("trapezoid linearity in the integrand") {
  rng::Stream rng(9);
  auto b = test_helpers::random_bundle(6, 1, 2, rng);
  auto f = [](const Eigen::VectorXd& y) { return y.squaredNorm(); };
  auto g = [](const Eigen::VectorXd& y) { return y[0] - y[1]; };
  for (int i = 0; i < b.n_intervals(); ++i) {
    const double lhs = traj_integral(b, 0, [&](const Eigen::VectorXd& y) { return 2.0 * f(y) - 3.0 * g(y); }, i);
    const double rhs = 2.0 * traj_integral(b, 0, f, i) - 3.0 * traj_integral(b, 0, g, i);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}
