#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "sfmaxent/errors.hpp"
#include "sfmaxent/maxent_models.hpp"
#include "sfmaxent/stats_validation.hpp"
#include "sfmaxent/walker_dynamics.hpp"

using namespace sfmaxent;

namespace {

SimConfig small_free(std::size_t n = 500) {
  SimConfig cfg;
  cfg.n_walkers = n;
  return cfg;
}

SimConfig exchange_config(double mean_u, std::size_t n = 1000, std::uint64_t rebalance = 0) {
  SimConfig cfg;
  cfg.n_walkers = n;
  ExchangeSettings ex;
  ex.mean_u_target = mean_u;
  ex.rebalance_every = rebalance;
  cfg.exchange = ex;
  cfg.x_init = std::exp(mean_u);
  return cfg;
}

double min_position(const WalkerEnsemble& e) { return *std::min_element(e.positions.begin(), e.positions.end()); }

}  // namespace

TEST_CASE("update rule arithmetic") {
  CHECK(grown(100.0, 0.0, 0.0, 1e-5) == 100.0);
  CHECK(grown(100.0, 100.0, 0.0, 1e-5) == doctest::Approx(100.1).epsilon(1e-15));
  CHECK(grown(100.0, 60.0, 40.0, 1e-5) == doctest::Approx(100.1).epsilon(1e-15));
}

TEST_CASE("noise conventions") {
  SimConfig cfg;
  CHECK(cfg.noise == NoiseConvention::wiener);
  CHECK(cfg.k_stddev() == doctest::Approx(std::sqrt(10.0 / 1e-5)).epsilon(1e-15));
  CHECK(cfg.step_stddev() * cfg.step_stddev() == doctest::Approx(10.0 * 1e-5).epsilon(1e-12));
  cfg.noise = NoiseConvention::variance;
  CHECK(cfg.k_stddev() == doctest::Approx(std::sqrt(10.0)).epsilon(1e-15));
  CHECK(cfg.step_stddev() * cfg.step_stddev() == doctest::Approx(10.0 * 1e-10).epsilon(1e-12));
  CHECK(cfg.log_neutral_drift() == doctest::Approx(0.5 * 10.0 * 1e-5).epsilon(1e-12));
}

TEST_CASE("configuration errors") {
  SimConfig both = small_free();
  both.bounds = Bounds{};
  both.exchange = ExchangeSettings{};
  CHECK_THROWS_AS(both.mode(), ConfigError);
  CHECK_THROWS_AS(run_experiment(both, 10, 10), ConfigError);

  SimConfig bad = small_free();
  bad.dt = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_free();
  bad.K = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_free();
  bad.bounds = Bounds{1.0, 50.0};  // x_init = 100 > x_max
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = exchange_config(1.0);
  bad.x_init = 5.0;  // Σu != N <u>
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = exchange_config(1.0, 1);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(run_experiment(small_free(), 0, 1), ConfigError);

  WalkerEnsemble e = WalkerEnsemble::at(10, 100.0);
  RngState rng(1, 10);
  Diagnostics d;
  CHECK_THROWS_AS(bounded_step(e, small_free(10), rng, d), ConfigError);
  CHECK_THROWS_AS(zipf_exchange_step(e, small_free(10), rng, d), ConfigError);
}

TEST_CASE("single steps advance the clock") {
  SimConfig cfg = small_free(100);
  WalkerEnsemble e = WalkerEnsemble::at(100, 100.0);
  RngState rng(3, 100);
  Diagnostics d;
  gbm_step(e, cfg, rng, d);
  CHECK(e.step_count == 1);
  CHECK(e.time == doctest::Approx(cfg.dt));
  CHECK(d.proposals == 100);
  bool moved = false;
  for (double x : e.positions) moved |= x != 100.0;
  CHECK(moved);
}

TEST_CASE("determinism and thread independence") {
  SimConfig cfg = small_free(2000);
  cfg.seed = 42;
  const auto a = run_experiment(cfg, 500, 100);
  const auto b = run_experiment(cfg, 500, 100);
  REQUIRE(a.snapshots.size() == 6);
  for (std::size_t s = 0; s < a.snapshots.size(); ++s) CHECK(a.snapshots[s].positions == b.snapshots[s].positions);
  cfg.threads = 3;
  const auto c = run_experiment(cfg, 500, 100);
  CHECK(c.snapshots.back().positions == a.snapshots.back().positions);
  cfg.threads = 1;
  cfg.seed = 43;
  CHECK(run_experiment(cfg, 500, 500).snapshots.back().positions != a.snapshots.back().positions);

  SimConfig ex = exchange_config(1.0, 500);
  ex.seed = 9;
  CHECK(run_experiment(ex, 20000, 5000).snapshots.back().positions ==
        run_experiment(ex, 20000, 5000).snapshots.back().positions);
}

TEST_CASE("snapshots include the initial and final states") {
  const auto r = run_experiment(small_free(50), 250, 100);
  REQUIRE(r.snapshots.size() == 4);
  CHECK(r.snapshots.front().step_count == 0);
  CHECK(r.snapshots[1].step_count == 100);
  CHECK(r.snapshots.back().step_count == 250);
  for (double x : r.snapshots.front().positions) CHECK(x == 100.0);
}

TEST_CASE("positivity in all modes, even with a coarse step") {
  SimConfig cfg = small_free(500);
  cfg.dt = 0.05;  // k dt has sd 0.7; the redraw guard fires
  const auto r = run_experiment(cfg, 200, 50);
  for (const auto& s : r.snapshots) CHECK(min_position(s) > 0.0);
  CHECK(r.diagnostics.redraws > 0);

  SimConfig b = small_free(500);
  b.bounds = Bounds{1.0, 1e4};
  b.dt = 1e-3;
  for (const auto& s : run_experiment(b, 2000, 500).snapshots) CHECK(min_position(s) > 0.0);

  for (const auto& s : run_experiment(exchange_config(1.0, 200), 100000, 25000).snapshots) {
    CHECK(min_position(s) > 0.0);
  }
}

TEST_CASE("bounded mode keeps every walker in [0, u_M]") {
  SimConfig cfg = small_free(2000);
  cfg.bounds = Bounds{1.0, 1e4};
  cfg.x_init = 9000.0;  // close to the upper wall
  cfg.dt = 1e-4;
  const auto r = run_experiment(cfg, 3000, 300);
  const double um = std::log(1e4);
  for (const auto& s : r.snapshots) {
    for (double u : to_u(s.positions, 1.0)) {
      REQUIRE(u >= 0.0);
      REQUIRE(u <= um);
    }
  }
  CHECK(r.diagnostics.rejections > 0);
}

TEST_CASE("bounded mode accepts moves that stay inside") {
  SimConfig cfg = small_free(1000);
  cfg.bounds = Bounds{1.0, 1e4};
  cfg.noise = NoiseConvention::variance;  // tiny steps from u = u_M / 2
  const auto r = run_experiment(cfg, 10, 10);
  CHECK(r.diagnostics.rejections == 0);
  CHECK(r.diagnostics.proposals == 10000);
  CHECK(r.snapshots.back().positions != r.snapshots.front().positions);
}

TEST_CASE("bounded mode relaxes to <u> = u_M / 2 and a flat u-density") {
  SimConfig cfg;
  cfg.n_walkers = 20000;
  cfg.bounds = Bounds{1.0, 1e4};
  cfg.dt = 1e-4;  // K dt = 1e-3 per step: ten times the paper rate
  cfg.drift = cfg.log_neutral_drift();
  cfg.seed = 5;
  const auto r = run_experiment(cfg, 40000, 40000);
  const auto u = to_u(r.snapshots.back().positions, 1.0);
  const double um = std::log(1e4);
  CHECK(std::abs(oracle::mean(u) / (um / 2.0) - 1.0) < 0.01);
  CHECK(ks_distance(r.snapshots.back().positions, EquilibriumModel::benford(um)) < 0.02);
  const auto h = u_histogram(u, 20, 0.0, um);
  CHECK(chi_square_uniform(h).p_value > 0.01);
}

TEST_CASE("free diffusion: Var(u) grows by K dt^2 per step (variance convention)") {
  SimConfig cfg = small_free(10000);
  cfg.noise = NoiseConvention::variance;
  cfg.seed = 17;
  const std::uint64_t n = 400;
  const auto r = run_experiment(cfg, n, n);
  const auto u = to_u(r.snapshots.back().positions, 1.0);
  const double expected = n * cfg.K * cfg.dt * cfg.dt;
  const double se = expected * std::sqrt(2.0 / (u.size() - 1));
  CHECK(std::abs(oracle::variance(u) - expected) < 3.0 * se);
}

TEST_CASE("free diffusion: Var(u) grows by K dt per step (wiener convention)") {
  SimConfig cfg = small_free(10000);
  cfg.seed = 18;
  const std::uint64_t n = 400;
  const auto r = run_experiment(cfg, n, n);
  const auto u = to_u(r.snapshots.back().positions, 1.0);
  // Var(log(1 + k dt)) = s^2 + s^4/2 + O(s^6) for s^2 = K dt.
  const double s2 = cfg.K * cfg.dt;
  const double expected = n * (s2 + 0.5 * s2 * s2);
  const double se = expected * std::sqrt(2.0 / (u.size() - 1));
  CHECK(std::abs(oracle::variance(u) - expected) < 3.0 * se);
}

TEST_CASE("free diffusion law holds across 20 seeds") {
  std::vector<double> slopes;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SimConfig cfg = small_free(2000);
    cfg.noise = NoiseConvention::variance;
    cfg.seed = seed;
    const auto r = run_experiment(cfg, 300, 60);
    std::vector<double> steps, vars;
    for (const auto& s : r.snapshots) {
      steps.push_back(static_cast<double>(s.step_count));
      vars.push_back(oracle::variance(to_u(s.positions, 1.0)));
    }
    slopes.push_back(oracle::ols_slope(steps, vars));
  }
  const double expected = 10.0 * 1e-10;
  const double se = std::sqrt(oracle::variance(slopes) * 20.0 / 19.0 / 20.0);
  CHECK(std::abs(oracle::mean(slopes) - expected) < 3.0 * se);
}

TEST_CASE("free dynamics is scale covariant") {
  SimConfig cfg = small_free(300);
  cfg.seed = 4;
  const auto base = run_experiment(cfg, 300, 300).snapshots.back().positions;
  cfg.x_init = 100.0 * 8.0;  // a power of two scales exactly
  const auto scaled = run_experiment(cfg, 300, 300).snapshots.back().positions;
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::log(scaled[i]) - std::log(base[i]) == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  cfg.x_init = 100.0 * 3.0;
  const auto tripled = run_experiment(cfg, 300, 300).snapshots.back().positions;
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::abs(std::log(tripled[i]) - std::log(base[i]) - std::log(3.0)) < 1e-12);
  }
}

TEST_CASE("free u-distribution stays Gaussian") {
  SimConfig cfg = small_free(10000);
  cfg.seed = 2;
  const auto r = run_experiment(cfg, 3000, 1000);
  for (std::size_t s = 1; s < r.snapshots.size(); ++s) {
    CHECK(jarque_bera(to_u(r.snapshots[s].positions, 1.0)).p_value > 0.01);
  }
}

TEST_CASE("exchange with k = 0 changes nothing") {
  WalkerEnsemble e = WalkerEnsemble::at(5, std::exp(1.0));
  const auto before = e.positions;
  Diagnostics d;
  d.sum_u = d.sum_u_initial = e.sum_u(1.0);
  CHECK(apply_exchange(e, 1, 3, 0.0, 0.0, 1e-5, 1.0, d));
  CHECK(e.positions == before);
  CHECK(d.sum_u == d.sum_u_initial);
}

TEST_CASE("exchange moves the pair in opposite proportional directions") {
  WalkerEnsemble e = WalkerEnsemble::at(4, 10.0);
  Diagnostics d;
  d.sum_u = d.sum_u_initial = e.sum_u(1.0);
  CHECK(apply_exchange(e, 0, 2, 100.0, 100.0, 1e-3, 1.0, d));
  CHECK(e.positions[0] == doctest::Approx(11.0).epsilon(1e-15));
  CHECK(e.positions[2] == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(e.positions[1] == 10.0);
  CHECK(e.positions.size() == 4);
}

TEST_CASE("Σu drift of one exchange is -(k dt)^2 to leading order") {
  const double dt = 1e-5;
  for (double k : {-30.0, -7.0, 3.0, 30.0}) {
    WalkerEnsemble e = WalkerEnsemble::at(3, std::exp(2.0));
    const double before = e.sum_u(1.0);
    Diagnostics d;
    d.sum_u = d.sum_u_initial = before;
    apply_exchange(e, 0, 1, k, k, dt, 1.0, d);
    const double drift = e.sum_u(1.0) - before;
    const double g = k * dt;
    CHECK(std::abs(drift + g * g) < 1e-12);
    CHECK(std::abs(drift) <= 9.0e-8 + 1e-14);
    CHECK(d.sum_u - before == doctest::Approx(std::log1p(g) + std::log1p(-g)).epsilon(1e-12));
  }
}

TEST_CASE("exchange rejects legs that would cross the floor downward") {
  WalkerEnsemble e = WalkerEnsemble::at(3, 1.0);
  e.positions[0] = 5.0;
  Diagnostics d;
  // walker 1 sits on the floor and would shrink
  CHECK_FALSE(apply_exchange(e, 0, 1, 10.0, 10.0, 1e-3, 1.0, d));
  CHECK(e.positions[0] == 5.0);
  CHECK(e.positions[1] == 1.0);
  CHECK(d.rejections == 1);
  // the floor walker grows instead
  CHECK(apply_exchange(e, 1, 0, 10.0, 10.0, 1e-3, 1.0, d));
  CHECK(e.positions[1] > 1.0);
}

TEST_CASE("exchange conserves Σu within n max(k dt)^2 without rebalance") {
  SimConfig cfg = exchange_config(1.0, 1000);
  cfg.seed = 3;
  const auto r = run_experiment(cfg, 2000000, 500000);
  const auto& d = r.diagnostics;
  CHECK(d.bound_violations == 0);
  CHECK(d.iterations == 2000000);
  const double n = static_cast<double>(cfg.n_walkers);
  for (const auto& s : r.snapshots) CHECK(std::abs(s.sum_u(1.0) - n) <= d.conservation_bound() + 1e-9);
  CHECK(std::abs(r.snapshots.back().sum_u(1.0) - d.sum_u) < 1e-6);
  CHECK(d.max_abs_sum_u_drift <= d.conservation_bound());
  CHECK(d.sum_u < d.sum_u_initial);  // the second-order drift is downward
}

TEST_CASE("walker count is unchanged by exchange") {
  const auto r = run_experiment(exchange_config(0.5, 321), 50000, 10000);
  for (const auto& s : r.snapshots) CHECK(s.positions.size() == 321);
}

TEST_CASE("rebalance restores Σu exactly") {
  WalkerEnsemble e = WalkerEnsemble::at(100, std::exp(1.0));
  const auto before = e.positions;
  optional_rebalance(e, 1.0, 1.0);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(e.positions[i] == doctest::Approx(before[i]).epsilon(1e-15));

  for (std::size_t i = 0; i < e.positions.size(); ++i) e.positions[i] *= std::exp(0.01 * (i % 7));
  optional_rebalance(e, 1.0, 1.0);
  CHECK(std::abs(e.sum_u(1.0) - 100.0) < 1e-12);
}

TEST_CASE("rebalanced exchange holds <u> to machine precision") {
  SimConfig cfg = exchange_config(1.0, 10000, 1000);
  cfg.seed = 8;
  const auto r = run_experiment(cfg, 1000000, 1000000);
  const auto u = to_u(r.snapshots.back().positions, 1.0);
  CHECK(std::abs(oracle::mean(u) - 1.0) < 1e-12);
  CHECK(r.diagnostics.rebalances == 1000);
}

TEST_CASE("independent k draws are available") {
  SimConfig cfg = exchange_config(1.0, 500);
  cfg.exchange->shared_k = false;
  const auto r = run_experiment(cfg, 100000, 100000);
  CHECK(r.diagnostics.iterations == 100000);
  CHECK(r.snapshots.back().positions != run_experiment(exchange_config(1.0, 500), 100000, 100000).snapshots.back().positions);

  // Distinct legs leave a first-order change in Σu.
  WalkerEnsemble e = WalkerEnsemble::at(2, std::exp(1.0));
  Diagnostics d;
  d.sum_u = d.sum_u_initial = e.sum_u(1.0);
  apply_exchange(e, 0, 1, 20.0, -10.0, 1e-4, 1.0, d);
  CHECK(e.sum_u(1.0) - 2.0 == doctest::Approx(std::log1p(2e-3) + std::log1p(1e-3)).epsilon(1e-10));
}

TEST_CASE("exchange relaxes toward the power law with <u> = 1/lambda") {
  // Reduced ensemble and coarser step; the paper-scale runs are exercised
  // by the acceptance suite.
  for (double mean_u : {0.5, 1.0}) {
    SimConfig cfg = exchange_config(mean_u, 2000, 2000);
    cfg.dt = 1e-4;
    cfg.seed = 21;
    const auto r = run_experiment(cfg, 20000000, 20000000);
    const auto& x = r.snapshots.back().positions;
    CHECK(ks_distance(x, EquilibriumModel::power_law(1.0 / mean_u)) < 0.04);
  }
}

TEST_CASE("convergence detection") {
  std::vector<WalkerEnsemble> snaps(3);
  snaps[0] = WalkerEnsemble::at(100, 1.0);
  snaps[1] = WalkerEnsemble::at(100, 5.0);
  snaps[1].step_count = 10;
  snaps[2] = snaps[1];
  snaps[2].step_count = 20;
  CHECK(convergence_step(snaps, 1.0) == 20u);
  snaps.pop_back();
  CHECK_FALSE(convergence_step(snaps, 1.0).has_value());
}
