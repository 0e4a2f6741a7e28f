#include "sfmaxent/stats_validation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "sfmaxent/data_ingest.hpp"
#include "sfmaxent/errors.hpp"

namespace sfmaxent {

double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least 2 pairs");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  // Constant inputs leave roundoff in sxx and syy, so test the data itself.
  const auto [xlo, xhi] = std::minmax_element(xs.begin(), xs.end());
  const auto [ylo, yhi] = std::minmax_element(ys.begin(), ys.end());
  if (*xlo == *xhi || *ylo == *yhi || sxx == 0.0 || syy == 0.0) {
    throw std::domain_error("correlation undefined: zero variance");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<GrowthRecord> growth_records(const SnapshotSeries& series, int t1, int t2) {
  if (!(t1 < t2)) throw std::invalid_argument("growth records need t1 < t2");
  if (!series.has_year(t1) || !series.has_year(t2)) throw std::out_of_range("year not in series");
  const double span = static_cast<double>(t2 - t1);
  std::vector<GrowthRecord> out;
  for (const auto& place : series.places()) {
    const auto p1 = series.population(place.id, t1);
    const auto p2 = series.population(place.id, t2);
    if (!p1 || !p2) continue;
    const double u1 = std::log(static_cast<double>(*p1));
    const double u2 = std::log(static_cast<double>(*p2));
    out.push_back({place.id, u1, (u2 - u1) / span});
  }
  if (out.size() < 2) {
    throw std::invalid_argument("fewer than 2 places common to " + std::to_string(t1) + " and " +
                                std::to_string(t2));
  }
  return out;
}

std::vector<GrowthRecord> pooled_growth_records(const SnapshotSeries& series) {
  const auto& years = series.years();
  if (years.size() < 2) throw std::invalid_argument("growth records need at least two years");
  std::vector<GrowthRecord> out;
  for (std::size_t i = 1; i < years.size(); ++i) {
    auto part = growth_records(series, years[i - 1], years[i]);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double correlation_u_udot(std::span<const GrowthRecord> records) {
  if (records.size() < 3) throw std::invalid_argument("correlation needs at least 3 records");
  std::vector<double> u, ud;
  for (const auto& r : records) {
    u.push_back(r.u_early);
    ud.push_back(r.u_dot);
  }
  return pearson(u, ud);
}

LogNormalFit lognormal_fit(std::span<const double> values, double x0) {
  if (values.size() < 2) throw std::invalid_argument("log-normal fit needs at least 2 values");
  std::vector<double> u;
  u.reserve(values.size());
  for (double v : values) {
    if (!(v > 0.0)) throw DomainError("log-normal fit needs positive values");
    u.push_back(std::log(v / x0));
  }
  return {mean(u), std::sqrt(variance(u))};
}

RankSize rank_size(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("rank_size of an empty sample");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  RankSize rs;
  rs.ranks.resize(values.size());
  rs.sizes.resize(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    rs.ranks[i] = i + 1;
    rs.sizes[i] = values[order[i]];
  }
  return rs;
}

namespace {

LineFit weighted_line(std::span<const double> xs, std::span<const double> ys, std::span<const double> ws) {
  double sw = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sw += ws[i];
    mx += ws[i] * xs[i];
    my += ws[i] * ys[i];
  }
  mx /= sw;
  my /= sw;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += ws[i] * dx * dx;
    syy += ws[i] * dy * dy;
    sxy += ws[i] * dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("degenerate regression input");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  f.n = xs.size();
  return f;
}

}  // namespace

LineFit rank_loglog_slope(const RankSize& rs, std::optional<std::size_t> top_n) {
  const std::size_t m = std::min(top_n.value_or(rs.sizes.size()), rs.sizes.size());
  std::vector<double> lr, ls;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(rs.sizes[i] > 0.0)) throw DomainError("rank-size fit needs positive sizes");
    lr.push_back(std::log(static_cast<double>(rs.ranks[i])));
    ls.push_back(std::log(rs.sizes[i]));
  }
  std::vector<double> distinct(ls);
  std::sort(distinct.begin(), distinct.end());
  if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 3) {
    throw std::domain_error("rank-size fit needs at least 3 distinct sizes");
  }
  const std::vector<double> w(m, 1.0);
  return weighted_line(lr, ls, w);
}

LineFit density_loglog_slope(std::span<const double> values, double x0, std::size_t n_bins,
                             std::size_t min_count) {
  std::vector<double> u;
  u.reserve(values.size());
  for (double v : values) {
    if (!(v > 0.0)) throw DomainError("density fit needs positive values");
    u.push_back(std::log(v / x0));
  }
  const Histogram h = u_histogram(u, n_bins);
  std::vector<double> lx, ld, w;
  for (std::size_t b = 0; b < h.n_bins(); ++b) {
    if (h.counts[b] < min_count) continue;
    const double uc = h.center(b);
    // p_X(x) = p_U(u) / x at the bin center.
    lx.push_back(uc + std::log(x0));
    ld.push_back(std::log(h.density[b]) - uc - std::log(x0));
    w.push_back(static_cast<double>(h.counts[b]));
  }
  if (lx.size() < 3) throw std::domain_error("density fit needs at least 3 populated bins");
  return weighted_line(lx, ld, w);
}

double ks_distance(std::span<const double> values, const EquilibriumModel& model, TailNormalization tail) {
  if (values.empty()) throw std::invalid_argument("ks_distance of an empty sample");
  if (!model.normalized() && tail == TailNormalization::require) {
    throw DomainError("model is not normalized; request tail renormalization explicitly");
  }
  const bool renorm = tail == TailNormalization::renormalize;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf_x(model, sorted[i], renorm);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample of an empty sample");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical_99(std::size_t n) { return 1.63 / std::sqrt(static_cast<double>(n)); }

double fit_correlation(const RankSize& rs, const EquilibriumModel& model, double n_total, FitSpace space) {
  if (rs.sizes.empty()) throw std::invalid_argument("fit_correlation of an empty rank-size curve");
  std::vector<double> obs, pred;
  for (std::size_t i = 0; i < rs.sizes.size(); ++i) {
    const double predicted = size_at_rank(model, static_cast<double>(rs.ranks[i]) - 0.5, n_total);
    if (space == FitSpace::log_size) {
      obs.push_back(std::log(rs.sizes[i]));
      pred.push_back(std::log(predicted));
    } else {
      obs.push_back(rs.sizes[i]);
      pred.push_back(predicted);
    }
  }
  return pearson(obs, pred);
}

double conservation_sum(std::span<const double> sorted_values, std::size_t reference_index) {
  if (reference_index < 1 || reference_index > sorted_values.size()) {
    throw std::out_of_range("reference index outside 1..n");
  }
  if (!std::is_sorted(sorted_values.begin(), sorted_values.end(), std::greater<>())) {
    throw std::invalid_argument("conservation_sum expects values sorted nonincreasing");
  }
  const double ref = sorted_values[reference_index - 1];
  if (!(ref > 0.0)) throw DomainError("conservation_sum needs positive values");
  double s = 0.0;
  for (std::size_t i = 0; i < reference_index; ++i) s += std::log(sorted_values[i] / ref);
  return s;
}

Turnover regime_turnover(const std::set<std::string>& top_early, const std::set<std::string>& top_late) {
  if (top_early.empty() || top_late.empty()) throw std::invalid_argument("turnover needs nonempty sets");
  if (top_early.size() != top_late.size()) throw std::invalid_argument("turnover sets differ in size");
  Turnover t;
  for (const auto& id : top_early) t.count_exited += top_late.count(id) ? 0 : 1;
  t.fraction = static_cast<double>(t.count_exited) / static_cast<double>(top_early.size());
  return t;
}

Histogram u_histogram(std::span<const double> u_values, std::size_t n_bins, double lo, double hi) {
  if (u_values.empty()) throw std::invalid_argument("histogram of an empty sample");
  if (n_bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i <= n_bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
  h.edges.back() = hi;
  h.counts.assign(n_bins, 0);
  std::size_t total = 0;
  for (double u : u_values) {
    if (u < lo || u > hi) continue;
    auto b = static_cast<std::size_t>((u - lo) / width);
    h.counts[std::min(b, n_bins - 1)] += 1;
    ++total;
  }
  h.density.resize(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    h.density[i] = total ? static_cast<double>(h.counts[i]) / (static_cast<double>(total) * width) : 0.0;
  }
  return h;
}

Histogram u_histogram(std::span<const double> u_values, std::size_t n_bins) {
  if (u_values.empty()) throw std::invalid_argument("histogram of an empty sample");
  const auto [mn, mx] = std::minmax_element(u_values.begin(), u_values.end());
  if (n_bins == 0) n_bins = freedman_diaconis_bins(u_values);
  return u_histogram(u_values, n_bins, *mn, *mx);
}

std::size_t freedman_diaconis_bins(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("binning an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double range = v.back() - v.front();
  if (range == 0.0) return 1;
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double n = static_cast<double>(v.size());
  if (iqr <= 0.0) return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(n))));
  const double width = 2.0 * iqr / std::cbrt(n);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(range / width)), 1, 10000);
}

TestResult jarque_bera(std::span<const double> values) {
  if (values.size() < 3) throw std::invalid_argument("Jarque-Bera needs at least 3 values");
  const double m = mean(values);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : values) {
    const double d = x - m;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double n = static_cast<double>(values.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi || m2 == 0.0) throw std::domain_error("Jarque-Bera undefined for a constant sample");
  const double skew = m3 / std::pow(m2, 1.5);
  const double excess = m4 / (m2 * m2) - 3.0;
  const double jb = n / 6.0 * (skew * skew + 0.25 * excess * excess);
  // chi-square(2) survival function.
  return {jb, std::exp(-0.5 * jb)};
}

TestResult chi_square_uniform(const Histogram& h) {
  if (h.n_bins() < 2) throw std::invalid_argument("chi-square needs at least 2 bins");
  const double total = static_cast<double>(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}));
  const double expected = total / static_cast<double>(h.n_bins());
  double stat = 0.0;
  for (auto c : h.counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  const boost::math::chi_squared_distribution<double> dist(static_cast<double>(h.n_bins() - 1));
  return {stat, boost::math::cdf(boost::math::complement(dist, stat))};
}

}  // namespace sfmaxent
