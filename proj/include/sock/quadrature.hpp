#pragma once

#include <Eigen/Dense>
#include <string>

#include "sock/errors.hpp"
#include "sock/trajectories.hpp"

// Trapezoid quadratures on the observation grid and Monte Carlo means over
// realizations. An interval contributes only its two observed endpoints;
// nothing inside an interval is available from snapshot data.

namespace sock {

namespace detail {
inline void check_interval(const TrajectoryBundle& b, int u, int i, const char* who) {
  if (u < 0 || u >= b.realizations() || i < 0 || i >= b.n_intervals()) {
    throw SchemaError(std::string(who) + ": realization " + std::to_string(u) + ", interval " + std::to_string(i) + " out of range");
  }
}

// materialize Eigen expressions so no temporaries dangle past the return
template <typename T>
auto materialize(T&& v) {
  if constexpr (std::is_arithmetic_v<std::decay_t<T>>) {
    return v;
  } else {
    return std::forward<T>(v).eval();
  }
}
}  // namespace detail

/// (t_{i+1} - t_i) * (g(y_i) + g(y_{i+1})) / 2 along realization u.
/// g may return a double or any Eigen vector/matrix type.
template <typename Fn>
auto traj_integral(const TrajectoryBundle& bundle, int u, Fn&& g, int i) {
  detail::check_interval(bundle, u, i, "traj_integral");
  const double h = bundle.dt(i);
  return detail::materialize((0.5 * h) * (g(bundle.state(u, i)) + g(bundle.state(u, i + 1))));
}

/// Tensor-product trapezoid of k(., .) over the rectangle
/// [t_a, t_{a+1}] x [t_b, t_{b+1}] using the 2 x 2 endpoint grid.
template <typename Fn>
auto double_traj_integral(const TrajectoryBundle& bundle_a, int u, int interval_a,
                          const TrajectoryBundle& bundle_b, int v, int interval_b,
                          Fn&& k) {
  detail::check_interval(bundle_a, u, interval_a, "double_traj_integral");
  detail::check_interval(bundle_b, v, interval_b, "double_traj_integral");
  const double ha = bundle_a.dt(interval_a);
  const double hb = bundle_b.dt(interval_b);
  const auto a0 = bundle_a.state(u, interval_a);
  const auto a1 = bundle_a.state(u, interval_a + 1);
  const auto b0 = bundle_b.state(v, interval_b);
  const auto b1 = bundle_b.state(v, interval_b + 1);
  return (ha * hb / 4.0) * (k(a0, b0) + k(a0, b1) + k(a1, b0) + k(a1, b1));
}

/// Arithmetic mean of fn(u) over realizations u = 0..M-1.
template <typename Fn>
auto mc_mean(const TrajectoryBundle& bundle, Fn&& fn) {
  const int m = bundle.realizations();
  auto acc = fn(0);
  for (int u = 1; u < m; ++u) acc += fn(u);
  return acc / static_cast<double>(m);
}

}  // namespace sock
