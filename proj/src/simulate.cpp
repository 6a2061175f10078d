#include "sock/simulate.hpp"

#include <cmath>
#include <limits>

#include "sock/errors.hpp"
#include "sock/rng.hpp"

namespace sock {

namespace {

constexpr std::uint64_t kIcStream = 0x49435f53454544ULL;    // initial conditions
constexpr std::uint64_t kPathStream = 0x5041544853ULL;      // path noise
constexpr std::uint64_t kDenseStream = 0x44454e5345ULL;     // dense preset draws

Eigen::VectorXd lorenz96_drift(const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd f(d);
  constexpr double forcing = 8.0;
  for (int i = 0; i < d; ++i) {
    const int ip1 = (i + 1) % d;
    const int im1 = (i + d - 1) % d;
    const int im2 = (i + d - 2) % d;
    f[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
  }
  return f;
}

}  // namespace

SdeSpec make_preset(const std::string& name, std::uint64_t dataset_seed) {
  SdeSpec spec;
  spec.name = name;
  if (name == "gbm") {
    spec.dim = 1;
    spec.params = {{"mu", 1.0}, {"sigma", 0.3}};
    spec.drift = [](const Eigen::VectorXd& x) { return x; };
    spec.diffusion = [](const Eigen::VectorXd& x) { return Eigen::MatrixXd::Constant(1, 1, 0.3 * x[0]); };
  } else if (name == "exponential") {
    spec.dim = 1;
    spec.params = {{"sigma", 0.3}};
    spec.drift = [](const Eigen::VectorXd& x) {
      return Eigen::VectorXd::Constant(1, std::exp(-x[0] * x[0]));
    };
    spec.diffusion = [](const Eigen::VectorXd& x) {
      return Eigen::MatrixXd::Constant(1, 1, 0.3 * std::exp(-x[0] * x[0]));
    };
  } else if (name == "dense_matrix") {
    spec.dim = 2;
    rng::Stream stream(rng::mix(dataset_seed, kDenseStream, 0));
    Eigen::Matrix2d a;
    Eigen::Vector2d b;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) a(i, j) = stream.uniform(-1.0, 1.0);
    }
    for (int i = 0; i < 2; ++i) b[i] = stream.uniform(-1.0, 1.0);
    spec.params = {{"sigma", 0.3},
                   {"A", {{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}}},
                   {"b", {b[0], b[1]}}};
    spec.drift = [](const Eigen::VectorXd& x) { return x; };
    spec.diffusion = [a, b](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
      return 0.3 * (a * x) * b.transpose();
    };
  } else if (name == "lorenz96_10") {
    spec.dim = 10;
    spec.params = {{"F", 8.0}, {"sigma", 0.3}};
    spec.drift = lorenz96_drift;
    spec.diffusion = [](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
      return (0.3 * x).asDiagonal();
    };
  } else {
    throw SchemaError("unknown preset '" + name + "'");
  }
  return spec;
}

SdeSpec preset_from_metadata(const nlohmann::json& metadata) {
  const std::string name = metadata.at("preset").get<std::string>();
  if (name != "dense_matrix") return make_preset(name);
  SdeSpec spec = make_preset("dense_matrix");
  const auto& params = metadata.at("params");
  Eigen::Matrix2d a;
  Eigen::Vector2d b;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) a(i, j) = params.at("A").at(i).at(j).get<double>();
    b[i] = params.at("b").at(i).get<double>();
  }
  spec.params = params;
  spec.diffusion = [a, b](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    return 0.3 * (a * x) * b.transpose();
  };
  return spec;
}

Eigen::MatrixXd euler_maruyama(const SdeSpec& spec, const Eigen::VectorXd& x0, double dt,
                               long steps, std::uint64_t seed, std::uint64_t path_id) {
  if (!(dt > 0)) throw SchemaError("euler_maruyama needs dt > 0");
  const int d = spec.dim;
  if (x0.size() != d) throw SchemaError("euler_maruyama: initial state has wrong dimension");
  Eigen::MatrixXd path(steps + 1, d);
  path.row(0) = x0.transpose();
  Eigen::VectorXd x = x0;
  Eigen::VectorXd eps(d);
  const double sqrt_dt = std::sqrt(dt);
  for (long k = 0; k < steps; ++k) {
    for (int c = 0; c < d; ++c) {
      eps[c] = rng::normal_at(seed, path_id, static_cast<std::uint64_t>(k) * d + c);
    }
    x += spec.drift(x) * dt + spec.diffusion(x) * (sqrt_dt * eps);
    if (!x.allFinite()) {
      throw NonFiniteError("euler_maruyama: non-finite state at step " + std::to_string(k + 1), k + 1);
    }
    path.row(k + 1) = x.transpose();
  }
  return path;
}

namespace {

Dataset generate_split(const SdeSpec& spec, const GenerateConfig& cfg, const std::string& split,
                       int split_index, int count) {
  const int n_obs = cfg.n_points - 1;
  const long per_obs = std::max(1L, std::lround(cfg.horizon / n_obs / cfg.tau));
  const double dt = cfg.horizon / (static_cast<double>(n_obs) * per_obs);
  const long steps = static_cast<long>(n_obs) * per_obs;
  const double h_obs = cfg.horizon / n_obs;

  const std::uint64_t ic_seed = rng::mix(cfg.seed, kIcStream, split_index);
  const std::uint64_t path_seed = rng::mix(cfg.seed, kPathStream, split_index);

  Dataset ds;
  ds.split = split;
  ds.bundles.resize(count);
#pragma omp parallel for schedule(dynamic)
  for (int traj = 0; traj < count; ++traj) {
    Eigen::VectorXd x0(spec.dim);
    for (int c = 0; c < spec.dim; ++c) {
      x0[c] = cfg.box_lo + (cfg.box_hi - cfg.box_lo) * rng::uniform_at(ic_seed, traj, c);
    }
    const Eigen::MatrixXd fine = euler_maruyama(spec, x0, dt, steps, path_seed, traj);
    TrajectoryBundle b;
    b.initial_condition_id = split + "_" + std::to_string(traj);
    b.times.resize(cfg.n_points);
    Eigen::MatrixXd obs(cfg.n_points, spec.dim);
    for (int i = 0; i < cfg.n_points; ++i) {
      b.times[i] = i * h_obs;
      obs.row(i) = fine.row(static_cast<long>(i) * per_obs);
    }
    b.values.push_back(std::move(obs));
    ds.bundles[traj] = std::move(b);
  }
  return ds;
}

}  // namespace

GeneratedData generate_dataset(const GenerateConfig& cfg) {
  if (cfg.n_points < 2) throw SchemaError("n_points must be >= 2");
  const SdeSpec spec = make_preset(cfg.preset, cfg.seed);
  GeneratedData out;
  out.train = generate_split(spec, cfg, "train", 0, cfg.train);
  out.val = generate_split(spec, cfg, "val", 1, cfg.val);
  out.test = generate_split(spec, cfg, "test", 2, cfg.test);

  const int n_obs = cfg.n_points - 1;
  const long per_obs = std::max(1L, std::lround(cfg.horizon / n_obs / cfg.tau));
  out.metadata = {{"preset", cfg.preset},
                  {"params", spec.params},
                  {"dim", spec.dim},
                  {"tau", cfg.horizon / (static_cast<double>(n_obs) * per_obs)},
                  {"box", {cfg.box_lo, cfg.box_hi}},
                  {"horizon", cfg.horizon},
                  {"n_points", cfg.n_points},
                  {"counts", {{"train", cfg.train}, {"val", cfg.val}, {"test", cfg.test}}},
                  {"seed", cfg.seed}};
  out.train.metadata = out.metadata;
  out.val.metadata = out.metadata;
  out.test.metadata = out.metadata;
  return out;
}

namespace {

// Scaled SIR state with exact conservation: r is defined as 1 - (s + i), and
// t + fl(1 - t) always rounds back to exactly 1, so s + i + r == 1 holds in
// left-to-right double addition. i is clamped by a few ulps where rounding
// would otherwise let s + i (and hence 1 - r) creep upward across an
// infection event, keeping r non-decreasing along the trajectory.
struct ScaledSirState {
  double s, i, r;
};

ScaledSirState scale_sir(long s_cnt, long i_cnt, int n_pop, double& prev_total) {
  ScaledSirState out;
  out.s = static_cast<double>(s_cnt) / n_pop;
  out.i = static_cast<double>(i_cnt) / n_pop;
  if (out.s + out.i > prev_total) {
    // rounding bumped the total past the previous grid point (the integer
    // S + I cannot increase); pull i back onto it
    out.i = prev_total - out.s;
    for (int guard = 0; out.s + out.i > prev_total && guard < 4; ++guard) {
      out.i = std::nextafter(out.i, -std::numeric_limits<double>::infinity());
    }
    if (out.s + out.i > prev_total) throw SolverError("sir scaling: monotonicity fixup failed");
  }
  const double total = out.s + out.i;
  prev_total = total;
  out.r = 1.0 - total;
  return out;
}

}  // namespace

Dataset gillespie_sir(const SirSpec& spec, int n_traj, std::uint64_t seed, const std::string& split) {
  if (spec.population < 1 || n_traj < 1) throw SchemaError("sir: population and n_traj must be >= 1");
  if (!(spec.infection_rate > 0) || !(spec.recovery_rate > 0)) {
    throw SchemaError("sir: rates must be > 0");
  }
  const int n_pop = spec.population;
  const int n_pts = spec.n_points;
  const double h = spec.horizon / (n_pts - 1);

  TrajectoryBundle bundle;
  bundle.initial_condition_id = "sir";
  bundle.times.resize(n_pts);
  for (int i = 0; i < n_pts; ++i) bundle.times[i] = i * h;
  bundle.values.assign(n_traj, Eigen::MatrixXd(n_pts, 3));

#pragma omp parallel for schedule(dynamic)
  for (int traj = 0; traj < n_traj; ++traj) {
    long s = n_pop - 1, infected = 1;
    double t = 0.0;
    std::uint64_t draw = 0;
    auto& grid = bundle.values[traj];
    int next_obs = 0;
    double prev_total = std::numeric_limits<double>::infinity();
    // grid states carry the last event at or before the grid time
    auto record_before = [&](double event_time) {
      while (next_obs < n_pts && bundle.times[next_obs] < event_time) {
        const ScaledSirState state = scale_sir(s, infected, n_pop, prev_total);
        grid(next_obs, 0) = state.s;
        grid(next_obs, 1) = state.i;
        grid(next_obs, 2) = state.r;
        ++next_obs;
      }
    };
    while (infected > 0) {
      const double rate_inf = spec.infection_rate * s * infected / n_pop;
      const double rate_rec = spec.recovery_rate * infected;
      const double rate = rate_inf + rate_rec;
      const double wait = -std::log(rng::uniform_at(seed, traj, 2 * draw)) / rate;
      if (t + wait > spec.horizon) break;
      record_before(t + wait);
      t += wait;
      if (rng::uniform_at(seed, traj, 2 * draw + 1) * rate < rate_inf) {
        --s;
        ++infected;
      } else {
        --infected;
      }
      ++draw;
    }
    record_before(std::numeric_limits<double>::infinity());
  }

  Dataset ds;
  ds.split = split;
  ds.bundles.push_back(std::move(bundle));
  ds.metadata = {{"preset", "sir"},
                 {"params",
                  {{"infection_rate", spec.infection_rate},
                   {"recovery_rate", spec.recovery_rate},
                   {"population", spec.population}}},
                 {"dim", 3},
                 {"horizon", spec.horizon},
                 {"n_points", spec.n_points},
                 {"seed", seed}};
  return ds;
}

}  // namespace sock
