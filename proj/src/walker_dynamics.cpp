#include "sfmaxent/walker_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <thread>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "sfmaxent/errors.hpp"
#include "sfmaxent/stats_validation.hpp"

namespace sfmaxent {

SimMode SimConfig::mode() const {
  if (bounds && exchange) throw ConfigError("bounds and exchange cannot be combined");
  if (bounds) return SimMode::bounded;
  if (exchange) return SimMode::exchange;
  return SimMode::free;
}

void SimConfig::validate() const {
  const SimMode m = mode();
  if (n_walkers < 1) throw ConfigError("n_walkers must be at least 1");
  if (!(x_init > 0.0) || !std::isfinite(x_init)) throw ConfigError("x_init must be positive");
  if (!(K > 0.0) || !std::isfinite(K)) throw ConfigError("K must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (!std::isfinite(drift)) throw ConfigError("drift must be finite");
  if (m == SimMode::bounded) {
    if (!(bounds->x0 > 0.0) || !(bounds->x0 < x_init) || !(x_init <= bounds->x_max)) {
      throw ConfigError("bounds must satisfy 0 < x0 < x_init <= x_max");
    }
  }
  if (m == SimMode::exchange) {
    const auto& ex = *exchange;
    if (n_walkers < 2) throw ConfigError("exchange dynamics needs at least 2 walkers");
    if (!(ex.mean_u_target > 0.0)) throw ConfigError("mean_u_target must be positive");
    if (!(ex.x0 > 0.0)) throw ConfigError("exchange x0 must be positive");
    const double u0 = std::log(x_init / ex.x0);
    if (std::abs(u0 - ex.mean_u_target) > 1e-9 * std::max(1.0, ex.mean_u_target)) {
      throw ConfigError("exchange start must satisfy log(x_init / x0) = mean_u_target (got " +
                        std::to_string(u0) + ")");
    }
  }
}

double SimConfig::reference_x0() const {
  if (bounds) return bounds->x0;
  if (exchange) return exchange->x0;
  return 1.0;
}

double SimConfig::k_stddev() const {
  return noise == NoiseConvention::variance ? std::sqrt(K) : std::sqrt(K / dt);
}

double SimConfig::log_neutral_drift() const {
  const double sd = k_stddev();
  return 0.5 * sd * sd * dt;
}

WalkerEnsemble WalkerEnsemble::at(std::size_t n, double x) {
  WalkerEnsemble e;
  e.positions.assign(n, x);
  return e;
}

double WalkerEnsemble::sum_u(double x0) const {
  double s = 0.0;
  for (double x : positions) s += std::log(x / x0);
  return s;
}

void Diagnostics::merge(const Diagnostics& other) {
  proposals += other.proposals;
  redraws += other.redraws;
  rejections += other.rejections;
}

RngState::RngState(std::uint64_t seed, std::size_t n_walkers) {
  const auto lo = static_cast<std::uint32_t>(seed);
  const auto hi = static_cast<std::uint32_t>(seed >> 32);
  std::seed_seq global_seq{lo, hi, 0x9e3779b9u};
  global_.seed(global_seq);
  walkers_.reserve(n_walkers);
  for (std::size_t i = 0; i < n_walkers; ++i) {
    std::seed_seq seq{lo, hi, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32), 0x85ebca6bu};
    walkers_.emplace_back(seq);
  }
}

namespace {

// Advances walkers [begin, end) by n_steps, walker by walker. Each walker
// draws only from its own stream, so the order of traversal is irrelevant.
template <bool Bounded>
Diagnostics advance_range(std::span<double> xs, std::size_t begin, std::size_t end, const SimConfig& cfg,
                          RngState& rng, std::uint64_t n_steps) {
  Diagnostics d;
  boost::random::normal_distribution<double> normal(0.0, cfg.k_stddev());
  const double dt = cfg.dt;
  const double drift = cfg.drift;
  const double lo = Bounded ? cfg.bounds->x0 : 0.0;
  const double hi = Bounded ? cfg.bounds->x_max : 0.0;
  for (std::size_t w = begin; w < end; ++w) {
    auto engine = rng.walker(w);
    double x = xs[w];
    for (std::uint64_t s = 0; s < n_steps; ++s) {
      double factor = 0.0;
      for (;;) {
        factor = 1.0 + (normal(engine) + drift) * dt;
        if (factor > 0.0) break;
        ++d.redraws;
      }
      const double proposal = x * factor;
      if constexpr (Bounded) {
        if (proposal < lo || proposal > hi) {
          ++d.rejections;
          continue;
        }
      }
      x = proposal;
    }
    xs[w] = x;
    rng.walker(w) = engine;
  }
  d.proposals = static_cast<std::uint64_t>(end - begin) * n_steps;
  return d;
}

template <bool Bounded>
void advance_independent(WalkerEnsemble& ensemble, const SimConfig& cfg, RngState& rng, Diagnostics& diag,
                         std::uint64_t n_steps) {
  std::span<double> xs(ensemble.positions);
  const std::size_t n = xs.size();
  if (rng.size() != n) throw std::invalid_argument("RngState was built for a different ensemble size");
  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    diag.merge(advance_range<Bounded>(xs, 0, n, cfg, rng, n_steps));
  } else {
    std::vector<Diagnostics> parts(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        const std::size_t b = n * t / threads;
        const std::size_t e = n * (t + 1) / threads;
        pool.emplace_back([&, t, b, e] { parts[t] = advance_range<Bounded>(xs, b, e, cfg, rng, n_steps); });
      }
    }
    for (const auto& p : parts) diag.merge(p);
  }
  ensemble.step_count += n_steps;
  ensemble.time = static_cast<double>(ensemble.step_count) * cfg.dt;
}

}  // namespace

void gbm_step(WalkerEnsemble& ensemble, const SimConfig& cfg, RngState& rng, Diagnostics& diag) {
  advance_independent<false>(ensemble, cfg, rng, diag, 1);
}

void bounded_step(WalkerEnsemble& ensemble, const SimConfig& cfg, RngState& rng, Diagnostics& diag) {
  if (!cfg.bounds) throw ConfigError("bounded_step requires bounds");
  advance_independent<true>(ensemble, cfg, rng, diag, 1);
}

bool apply_exchange(WalkerEnsemble& ensemble, std::size_t i, std::size_t j, double k_grow, double k_shrink,
                    double dt, double x0, Diagnostics& diag) {
  auto& xs = ensemble.positions;
  const double grow = k_grow * dt;
  const double shrink = k_shrink * dt;
  const double xi = xs[i] * (1.0 + grow);
  const double xj = xs[j] * (1.0 - shrink);
  ++diag.proposals;
  ++diag.iterations;
  diag.max_k_dt_sq = std::max({diag.max_k_dt_sq, grow * grow, shrink * shrink});
  // A leg may not move a walker downward past the floor.
  const bool below_i = xi < x0 && xi < xs[i];
  const bool below_j = xj < x0 && xj < xs[j];
  bool accepted = false;
  if (below_i || below_j) {
    ++diag.rejections;
  } else {
    xs[i] = xi;
    xs[j] = xj;
    diag.sum_u += grow == shrink ? std::log1p(-grow * grow) : std::log1p(grow) + std::log1p(-shrink);
    accepted = true;
  }
  const double drift = std::abs(diag.sum_u - diag.sum_u_initial);
  diag.max_abs_sum_u_drift = std::max(diag.max_abs_sum_u_drift, drift);
  // Slack for the roundoff of carrying sum_u at its own magnitude.
  const double slack = 16.0 * std::numeric_limits<double>::epsilon() *
                       std::max(std::abs(diag.sum_u), std::abs(diag.sum_u_initial));
  if (drift > diag.conservation_bound() + slack) ++diag.bound_violations;
  return accepted;
}

void zipf_exchange_step(WalkerEnsemble& ensemble, const SimConfig& cfg, RngState& rng, Diagnostics& diag) {
  if (!cfg.exchange) throw ConfigError("zipf_exchange_step requires exchange settings");
  const std::size_t n = ensemble.positions.size();
  if (n < 2) throw ConfigError("exchange dynamics needs at least 2 walkers");
  const auto& ex = *cfg.exchange;
  auto& engine = rng.global();
  boost::random::uniform_int_distribution<std::size_t> pick_i(0, n - 1);
  boost::random::uniform_int_distribution<std::size_t> pick_j(0, n - 2);
  boost::random::normal_distribution<double> normal(0.0, cfg.k_stddev());

  const std::size_t i = pick_i(engine);
  std::size_t j = pick_j(engine);
  if (j >= i) ++j;

  double k_grow = 0.0;
  double k_shrink = 0.0;
  for (;;) {
    k_grow = normal(engine);
    k_shrink = ex.shared_k ? k_grow : normal(engine);
    if (1.0 + k_grow * cfg.dt > 0.0 && 1.0 - k_shrink * cfg.dt > 0.0) break;
    ++diag.redraws;
  }
  apply_exchange(ensemble, i, j, k_grow, k_shrink, cfg.dt, ex.x0, diag);
  ++ensemble.step_count;
  ensemble.time = static_cast<double>(ensemble.step_count) * cfg.dt;
}

void optional_rebalance(WalkerEnsemble& ensemble, double mean_u_target, double x0) {
  const double n = static_cast<double>(ensemble.positions.size());
  const double deficit = n * mean_u_target - ensemble.sum_u(x0);
  if (deficit == 0.0) return;
  const double factor = std::exp(deficit / n);
  for (double& x : ensemble.positions) x *= factor;
}

std::vector<double> to_u(std::span<const double> positions, double x0) {
  std::vector<double> u(positions.size());
  std::transform(positions.begin(), positions.end(), u.begin(), [x0](double x) { return std::log(x / x0); });
  return u;
}

std::optional<std::uint64_t> convergence_step(std::span<const WalkerEnsemble> snapshots, double x0,
                                              double threshold) {
  for (std::size_t s = 1; s < snapshots.size(); ++s) {
    const auto prev = to_u(snapshots[s - 1].positions, x0);
    const auto cur = to_u(snapshots[s].positions, x0);
    if (ks_two_sample(prev, cur) < threshold) return snapshots[s].step_count;
  }
  return std::nullopt;
}

ExperimentResult run_experiment(const SimConfig& cfg, std::uint64_t n_steps, std::uint64_t snapshot_every) {
  cfg.validate();
  if (n_steps < 1) throw ConfigError("n_steps must be at least 1");
  if (snapshot_every == 0) snapshot_every = n_steps;
  const SimMode mode = cfg.mode();

  ExperimentResult result;
  auto& diag = result.diagnostics;
  WalkerEnsemble ensemble = WalkerEnsemble::at(cfg.n_walkers, cfg.x_init);
  RngState rng(cfg.seed, mode == SimMode::exchange ? 0 : cfg.n_walkers);
  if (mode == SimMode::exchange) {
    diag.sum_u_initial = diag.sum_u = ensemble.sum_u(cfg.exchange->x0);
  }
  result.snapshots.push_back(ensemble);

  std::uint64_t done = 0;
  while (done < n_steps) {
    const std::uint64_t chunk = std::min(snapshot_every, n_steps - done);
    switch (mode) {
      case SimMode::free:
        advance_independent<false>(ensemble, cfg, rng, diag, chunk);
        break;
      case SimMode::bounded:
        advance_independent<true>(ensemble, cfg, rng, diag, chunk);
        break;
      case SimMode::exchange: {
        const auto& ex = *cfg.exchange;
        for (std::uint64_t c = 0; c < chunk; ++c) {
          zipf_exchange_step(ensemble, cfg, rng, diag);
          if (ex.rebalance_every != 0 && ensemble.step_count % ex.rebalance_every == 0) {
            optional_rebalance(ensemble, ex.mean_u_target, ex.x0);
            ++diag.rebalances;
            diag.sum_u = static_cast<double>(cfg.n_walkers) * ex.mean_u_target;
          }
        }
        break;
      }
    }
    done += chunk;
    result.snapshots.push_back(ensemble);
  }
  result.converged_step = convergence_step(result.snapshots, cfg.reference_x0());
  return result;
}

}  // namespace sfmaxent
