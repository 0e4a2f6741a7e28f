#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/taus88.hpp>

namespace sfmaxent {

/// How K maps onto the spread of the per-step draw k.
///
/// variance: k ~ Normal(0, K), so k*dt has variance K dt^2.
/// wiener:   k is the discretized derivative of a Wiener process with
///           intensity K, k ~ Normal(0, K/dt), so k*dt has variance K dt.
enum class NoiseConvention { wiener, variance };

enum class SimMode { free, bounded, exchange };

/// Hard walls at x0 and x_max; moves that cross them are rejected.
struct Bounds {
  double x0 = 1.0;
  double x_max = 1e4;
};

struct ExchangeSettings {
  double mean_u_target = 1.0;
  double x0 = 1.0;                    // floor of the u >= 0 volume
  std::uint64_t rebalance_every = 0;  // iterations between rebalances, 0 = off
  bool shared_k = true;               // same k for the grow and reinsert legs
};

struct SimConfig {
  std::size_t n_walkers = 10000;
  double x_init = 100.0;
  double K = 10.0;
  double dt = 1e-5;
  double drift = 0.0;  // added to k on every free/bounded step
  NoiseConvention noise = NoiseConvention::wiener;
  std::uint64_t seed = 1;
  std::optional<Bounds> bounds;
  std::optional<ExchangeSettings> exchange;
  unsigned threads = 1;  // free/bounded only; results do not depend on it

  SimMode mode() const;
  void validate() const;
  /// x0 of the u coordinate used for reporting (1 in free mode).
  double reference_x0() const;

  double k_stddev() const;
  double step_stddev() const { return k_stddev() * dt; }
  /// Var(k) dt / 2: cancels the -Var(k dt)/2 mean of log(1 + k dt), so u
  /// performs an unbiased walk to leading order.
  double log_neutral_drift() const;
};

struct WalkerEnsemble {
  std::vector<double> positions;
  double time = 0.0;
  std::uint64_t step_count = 0;

  static WalkerEnsemble at(std::size_t n, double x);
  double sum_u(double x0) const;
};

struct Diagnostics {
  std::uint64_t proposals = 0;
  std::uint64_t redraws = 0;     // k draws discarded because 1 + k dt <= 0
  std::uint64_t rejections = 0;  // moves that left the allowed volume
  std::uint64_t rebalances = 0;
  // Exchange mode conservation bookkeeping.
  double sum_u_initial = 0.0;
  double sum_u = 0.0;
  double max_abs_sum_u_drift = 0.0;
  double max_k_dt_sq = 0.0;
  std::uint64_t iterations = 0;
  // Iterations after which |Σu - Σu(0)| exceeded conservation_bound().
  std::uint64_t bound_violations = 0;

  /// n_iterations * |log(1 - max(k dt)^2)|, i.e. n max(k dt)^2 to leading
  /// order: the worst-case second-order drift with a shared k.
  double conservation_bound() const {
    if (max_k_dt_sq >= 1.0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(iterations) * -std::log1p(-max_k_dt_sq);
  }
  void merge(const Diagnostics& other);
};

/// Random streams: one per walker for the independent modes, so results are
/// identical regardless of how walkers are partitioned across threads, and
/// one global stream for the sequential exchange dynamics.
class RngState {
 public:
  RngState(std::uint64_t seed, std::size_t n_walkers);

  boost::random::taus88& walker(std::size_t i) { return walkers_[i]; }
  boost::random::mt19937& global() { return global_; }
  std::size_t size() const noexcept { return walkers_.size(); }

 private:
  std::vector<boost::random::taus88> walkers_;
  boost::random::mt19937 global_;
};

/// x (1 + (k + drift) dt).
inline double grown(double x, double k, double drift, double dt) { return x * (1.0 + (k + drift) * dt); }

/// One free step for every walker: x <- x (1 + (k + drift) dt).
void gbm_step(WalkerEnsemble& ensemble, const SimConfig& cfg, RngState& rng, Diagnostics& diag);

/// One step with rejection of moves that leave [x0, x_max].
void bounded_step(WalkerEnsemble& ensemble, const SimConfig& cfg, RngState& rng, Diagnostics& diag);

/// One iteration of the three-leg exchange: grow walker i by (1 + k dt),
/// remove walker j != i and reinsert it at x_j (1 - k dt). Iterations that
/// would put either walker below the floor x0 are rejected.
void zipf_exchange_step(WalkerEnsemble& ensemble, const SimConfig& cfg, RngState& rng, Diagnostics& diag);

/// Deterministic core of an exchange iteration. Returns false (ensemble
/// untouched) if either leg would leave u >= 0.
bool apply_exchange(WalkerEnsemble& ensemble, std::size_t i, std::size_t j, double k_grow, double k_shrink,
                    double dt, double x0, Diagnostics& diag);

/// Multiplies all positions by exp((N m - Σu) / N) so that Σu = N m.
void optional_rebalance(WalkerEnsemble& ensemble, double mean_u_target, double x0);

struct ExperimentResult {
  std::vector<WalkerEnsemble> snapshots;  // initial, every snapshot_every steps, final
  Diagnostics diagnostics;
  std::optional<std::uint64_t> converged_step;
};

/// Runs n_steps of the stepper selected by cfg. For exchange mode a step is
/// one exchange iteration.
ExperimentResult run_experiment(const SimConfig& cfg, std::uint64_t n_steps, std::uint64_t snapshot_every);

/// First snapshot step at which the u-distribution differs from the previous
/// snapshot by a two-sample KS distance below threshold. Reporting only.
std::optional<std::uint64_t> convergence_step(std::span<const WalkerEnsemble> snapshots, double x0,
                                              double threshold = 0.01);

/// u = log(x / x0) for every walker.
std::vector<double> to_u(std::span<const double> positions, double x0);

}  // namespace sfmaxent
