#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sfmaxent/maxent_models.hpp"

namespace sfmaxent {

class SnapshotSeries;

/// Sizes sorted nonincreasing with 1-based ranks; ties keep input order.
struct RankSize {
  std::vector<std::size_t> ranks;
  std::vector<double> sizes;
};

struct GrowthRecord {
  std::string place_id;
  double u_early = 0.0;
  double u_dot = 0.0;  // per year
};

struct LogNormalFit {
  double mean_u = 0.0;
  double sd_u = 0.0;  // population convention (divisor n)
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
  std::size_t n = 0;
};

struct Turnover {
  std::size_t count_exited = 0;
  double fraction = 0.0;
};

struct Histogram {
  std::vector<double> edges;  // n_bins + 1
  std::vector<std::size_t> counts;
  std::vector<double> density;  // count / (n * width)

  std::size_t n_bins() const noexcept { return counts.size(); }
  double width() const { return edges.size() > 1 ? edges[1] - edges[0] : 0.0; }
  double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

enum class FitSpace { log_size, linear_size };

/// What to do with a model whose density is only a shape.
enum class TailNormalization { require, renormalize };

// --- growth ---------------------------------------------------------------

/// Two-point u-dot between years t1 < t2 over places present in both.
std::vector<GrowthRecord> growth_records(const SnapshotSeries& series, int t1, int t2);

/// Records for every consecutive year pair, pooled.
std::vector<GrowthRecord> pooled_growth_records(const SnapshotSeries& series);

/// Pearson correlation of (u_early, u_dot). Throws std::domain_error if
/// either coordinate has zero variance.
double correlation_u_udot(std::span<const GrowthRecord> records);

double pearson(std::span<const double> xs, std::span<const double> ys);

// --- distribution fits ------------------------------------------------------

LogNormalFit lognormal_fit(std::span<const double> values, double x0 = 1.0);

RankSize rank_size(std::span<const double> values);

/// Least squares log(size) = intercept + slope log(rank) over the first
/// top_n entries.
LineFit rank_loglog_slope(const RankSize& rs, std::optional<std::size_t> top_n = std::nullopt);

/// Weighted fit of log p_X against log x from a histogram in u; bins with
/// fewer than min_count entries are dropped. The slope estimates -(lambda+1).
LineFit density_loglog_slope(std::span<const double> values, double x0, std::size_t n_bins,
                             std::size_t min_count = 30);

/// sup |F_empirical - F_model| over the sample.
double ks_distance(std::span<const double> values, const EquilibriumModel& model,
                   TailNormalization tail = TailNormalization::require);

/// Two-sample KS distance.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Critical KS distance at 99% for n draws, 1.63 / sqrt(n).
double ks_critical_99(std::size_t n);

/// Correlation between observed sizes and the model's size_at_rank at the
/// same ranks (Hazen position rank - 1/2).
double fit_correlation(const RankSize& rs, const EquilibriumModel& model, double n_total,
                       FitSpace space = FitSpace::log_size);

/// Σ_{i=1..ref} log(x_i / x_ref) for values sorted nonincreasing.
double conservation_sum(std::span<const double> sorted_values, std::size_t reference_index);

Turnover regime_turnover(const std::set<std::string>& top_early, const std::set<std::string>& top_late);

// --- histograms and normality -----------------------------------------------

Histogram u_histogram(std::span<const double> u_values, std::size_t n_bins, double lo, double hi);
Histogram u_histogram(std::span<const double> u_values, std::size_t n_bins);

/// Freedman-Diaconis bin count for the sample (at least 1).
std::size_t freedman_diaconis_bins(std::span<const double> values);

/// Jarque-Bera normality test; p from the chi-square(2) tail.
TestResult jarque_bera(std::span<const double> values);

/// Chi-square test of equal expected counts across bins.
TestResult chi_square_uniform(const Histogram& h);

/// Population mean and variance.
double mean(std::span<const double> v);
double variance(std::span<const double> v);

}  // namespace sfmaxent
