#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "oracles.hpp"
#include "sfmaxent/data_ingest.hpp"
#include "sfmaxent/errors.hpp"
#include "sfmaxent/maxent_models.hpp"
#include "sfmaxent/stats_validation.hpp"

using namespace sfmaxent;

namespace {

const double kUM = 4.0 * std::log(10.0);

SnapshotSeries two_year(const std::vector<std::pair<double, double>>& pops, int t1 = 2000, int t2 = 2010) {
  SnapshotSeries s({t1, t2});
  for (std::size_t i = 0; i < pops.size(); ++i) {
    const std::string id = "p" + std::to_string(i);
    s.add_place({id, id});
    s.set_population(id, t1, static_cast<std::uint64_t>(pops[i].first));
    s.set_population(id, t2, static_cast<std::uint64_t>(pops[i].second));
  }
  return s;
}

std::vector<GrowthRecord> records(const std::vector<std::pair<double, double>>& pts) {
  std::vector<GrowthRecord> out;
  for (const auto& [u, ud] : pts) out.push_back({"x", u, ud});
  return out;
}

}  // namespace

TEST_CASE("growth records use the two-point derivative") {
  const auto r = growth_records(two_year({{500, 500}, {1000, 2000}, {300, 600}}), 2000, 2010);
  REQUIRE(r.size() == 3);
  CHECK(r[0].u_dot == 0.0);
  CHECK(r[1].u_dot == doctest::Approx(std::log(2.0) / 10.0).epsilon(1e-14));
  CHECK(r[1].u_dot == doctest::Approx(0.0693).epsilon(1e-3));
  CHECK(r[1].u_early == doctest::Approx(std::log(1000.0)).epsilon(1e-15));
  CHECK(r[1].place_id == "p1");
}

TEST_CASE("growth records skip places missing a year and need two of them") {
  SnapshotSeries s({1990, 2000});
  for (const char* id : {"a", "b", "c"}) s.add_place({id, id});
  s.set_population("a", 1990, 10);
  s.set_population("a", 2000, 20);
  s.set_population("b", 1990, 10);
  s.set_population("c", 2000, 10);
  CHECK_THROWS_AS(growth_records(s, 1990, 2000), std::invalid_argument);
  s.set_population("b", 2000, 30);
  CHECK(growth_records(s, 1990, 2000).size() == 2);
  CHECK_THROWS(growth_records(s, 2000, 1990));
  CHECK_THROWS(growth_records(s, 1990, 2010));
}

TEST_CASE("pooled records concatenate consecutive pairs") {
  const auto fixture = synthesize_fixture(EquilibriumModel::zipf(1000.0), 50, {1990, 2000, 2010}, 0.01, 3);
  CHECK(pooled_growth_records(fixture).size() == 100);
  SnapshotSeries single({1990});
  CHECK_THROWS(pooled_growth_records(single));
}

TEST_CASE("GBM-generated growth is centered and Gaussian") {
  const auto fixture = synthesize_fixture(EquilibriumModel::zipf(1e5), 5000, {2000, 2010}, 0.01, 12);
  std::vector<double> ud;
  for (const auto& r : growth_records(fixture, 2000, 2010)) ud.push_back(r.u_dot);
  // sd of u_dot = sqrt(K * 10) / 10
  const double sd = std::sqrt(0.1) / 10.0;
  CHECK(std::abs(oracle::mean(ud)) < 4.0 * sd / std::sqrt(5000.0));
  CHECK(jarque_bera(ud).p_value > 0.01);
}

TEST_CASE("correlation_u_udot") {
  CHECK(correlation_u_udot(records({{1, 0.1}, {2, 0.2}, {3, 0.3}})) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(correlation_u_udot(records({{1, 0.3}, {2, 0.2}, {3, 0.1}})) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_THROWS_AS(correlation_u_udot(records({{1, 0.1}, {2, 0.1}, {3, 0.1}})), std::domain_error);
  CHECK_THROWS_AS(correlation_u_udot(records({{1, 0.1}, {1, 0.2}, {1, 0.3}})), std::domain_error);
  CHECK_THROWS(correlation_u_udot(records({{1, 0.1}, {2, 0.2}})));
}

TEST_CASE("correlation is bounded and invariant under affine rescaling") {
  boost::random::mt19937 eng(5);
  boost::random::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 50; ++i) {
      const double u = n01(eng);
      pts.push_back({u, 0.3 * trial / 20.0 * u + n01(eng)});
    }
    const double r = correlation_u_udot(records(pts));
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
    auto scaled = pts;
    for (auto& [u, ud] : scaled) {
      u = 3.5 * u - 7.0;
      ud = 0.01 * ud + 100.0;
    }
    CHECK(correlation_u_udot(records(scaled)) == doctest::Approx(r).epsilon(1e-10));
  }
}

TEST_CASE("proportional growth gives small u-udot correlation") {
  int within = 0;
  const int seeds = 20;
  for (int seed = 1; seed <= seeds; ++seed) {
    const auto fixture =
        synthesize_fixture(EquilibriumModel::log_normal(8.0, 2.0), 1000, {2000, 2010}, 0.01, seed);
    const double r = correlation_u_udot(growth_records(fixture, 2000, 2010));
    // 4 standard errors of r under independence
    within += std::abs(r) < 4.0 / std::sqrt(1000.0) ? 1 : 0;
  }
  CHECK(within == seeds);
}

TEST_CASE("lognormal_fit") {
  const double e = std::exp(1.0);
  const std::vector<double> three{e, e, e};
  const auto f = lognormal_fit(three);
  CHECK(f.mean_u == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f.sd_u == doctest::Approx(0.0));
  const auto g = lognormal_fit(std::vector<double>{1.0, std::exp(2.0)});
  CHECK(g.sd_u == doctest::Approx(1.0).epsilon(1e-15));  // divisor n
  CHECK_THROWS_AS(lognormal_fit(std::vector<double>{1.0, 0.0}), DomainError);
  CHECK_THROWS(lognormal_fit(std::vector<double>{1.0}));

  const auto xs = sample(EquilibriumModel::log_normal(2.0, 1.7 * 1.7), 100000, 3);
  const auto fit = lognormal_fit(xs);
  CHECK(std::abs(fit.mean_u - 2.0) < 0.02);
  CHECK(std::abs(fit.sd_u - 1.7) < 0.02);
}

TEST_CASE("rank_size sorts with stable ties") {
  const auto rs = rank_size(std::vector<double>{3, 1, 2});
  CHECK(rs.ranks == std::vector<std::size_t>{1, 2, 3});
  CHECK(rs.sizes == std::vector<double>{3, 2, 1});
  const auto eq = rank_size(std::vector<double>{5, 5, 5, 5});
  CHECK(eq.sizes == std::vector<double>{5, 5, 5, 5});
  CHECK_THROWS(rank_size(std::vector<double>{}));
}

TEST_CASE("rank_size is a permutation") {
  const auto xs = sample(EquilibriumModel::zipf(), 1000, 9);
  const auto rs = rank_size(xs);
  std::multiset<double> a(xs.begin(), xs.end()), b(rs.sizes.begin(), rs.sizes.end());
  CHECK(a == b);
  CHECK(std::is_sorted(rs.sizes.begin(), rs.sizes.end(), std::greater<>()));
}

TEST_CASE("rank_loglog_slope recovers exact power laws") {
  std::vector<double> zipf, steep;
  for (int r = 1; r <= 200; ++r) {
    zipf.push_back(1e6 / r);
    steep.push_back(1e6 / std::pow(r, 1.0 / 0.5));
  }
  const auto f = rank_loglog_slope(rank_size(zipf));
  CHECK(std::abs(f.slope + 1.0) < 1e-10);
  CHECK(f.r == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(1e6)).epsilon(1e-10));
  CHECK(std::abs(rank_loglog_slope(rank_size(steep)).slope + 2.0) < 1e-10);
  CHECK(rank_loglog_slope(rank_size(zipf), 50).n == 50);
  CHECK_THROWS(rank_loglog_slope(rank_size(std::vector<double>{4, 4, 4, 4})));
  CHECK_THROWS(rank_loglog_slope(rank_size(std::vector<double>{4, 4, 2, 2})));
}

TEST_CASE("Zipf samples have rank slope near -1") {
  std::vector<double> slopes;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    slopes.push_back(rank_loglog_slope(rank_size(sample(EquilibriumModel::zipf(), 10000, seed))).slope);
  }
  CHECK(std::abs(oracle::median(slopes) + 1.0) < 0.05);
}

TEST_CASE("density_loglog_slope estimates -(lambda+1)") {
  for (double lambda : {0.5, 1.0, 2.0}) {
    const auto xs = sample(EquilibriumModel::power_law(lambda), 100000, 4);
    CHECK(density_loglog_slope(xs, 1.0, 40).slope == doctest::Approx(-(lambda + 1.0)).epsilon(0.03));
  }
  const auto flat = sample(EquilibriumModel::benford(kUM), 100000, 4);
  CHECK(density_loglog_slope(flat, 1.0, 20).slope == doctest::Approx(-1.0).epsilon(0.03));
}

TEST_CASE("ks_distance") {
  const std::size_t n = 10000;
  const std::vector<EquilibriumModel> models{EquilibriumModel::benford(kUM), EquilibriumModel::power_law(0.5),
                                             EquilibriumModel::power_law(2.0), EquilibriumModel::log_normal(1.0, 4.0),
                                             EquilibriumModel::exponential(0.0, 1.0, 3.0, 1.0, false)};
  std::uint64_t seed = 100;
  for (const auto& model : models) {
    const auto xs = sample(model, n, seed++);
    CHECK(ks_distance(xs, model, TailNormalization::renormalize) < ks_critical_99(n));
  }
  const auto z = sample(EquilibriumModel::zipf(), n, 7);
  CHECK_THROWS_AS(ks_distance(z, EquilibriumModel::zipf()), DomainError);
  CHECK(ks_distance(z, EquilibriumModel::zipf(), TailNormalization::renormalize) < ks_critical_99(n));
  // A wrong model is detected.
  CHECK(ks_distance(z, EquilibriumModel::power_law(2.0)) > 0.1);
  CHECK(ks_critical_99(10000) == doctest::Approx(0.0163));
}

TEST_CASE("ks_distance agrees with an independent computation") {
  const auto xs = sample(EquilibriumModel::power_law(0.7, 2.0), 5000, 31);
  const double ref = oracle::ks_statistic(xs, [](double x) { return 1.0 - std::pow(2.0 / x, 0.7); });
  CHECK(ks_distance(xs, EquilibriumModel::power_law(0.7, 2.0)) == doctest::Approx(ref).epsilon(1e-9));
}

TEST_CASE("two-sample KS") {
  const auto a = sample(EquilibriumModel::zipf(), 2000, 1);
  CHECK(ks_two_sample(a, a) == 0.0);
  const std::vector<double> lo{1, 2, 3}, hi{4, 5, 6};
  CHECK(ks_two_sample(lo, hi) == 1.0);
  const auto b = sample(EquilibriumModel::zipf(), 2000, 2);
  CHECK(ks_two_sample(a, b) < 1.63 * std::sqrt(2.0 / 2000.0));
}

TEST_CASE("fit_correlation of exact model data is one") {
  for (const auto& model : {EquilibriumModel::benford(kUM), EquilibriumModel::zipf(3.0),
                            EquilibriumModel::log_normal(2.0, 1.0), EquilibriumModel::power_law(0.5)}) {
    std::vector<double> xs;
    for (int r = 1; r <= 154; ++r) xs.push_back(size_at_rank(model, r - 0.5, 154.0));
    CHECK(fit_correlation(rank_size(xs), model, 154.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit_correlation(rank_size(xs), model, 154.0, FitSpace::linear_size) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS(fit_correlation(RankSize{}, EquilibriumModel::zipf(), 1.0));
}

TEST_CASE("fit_correlation of Benford samples of 154 against the lambda = 0 model") {
  std::vector<double> rs;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto xs = sample(EquilibriumModel::benford(kUM), 154, seed);
    rs.push_back(fit_correlation(rank_size(xs), EquilibriumModel::benford(kUM), 154.0));
  }
  CHECK(oracle::median(rs) > 0.98);
}

TEST_CASE("fit_correlation median rises toward one with n") {
  for (const auto& model : {EquilibriumModel::benford(kUM), EquilibriumModel::log_normal(3.0, 1.0)}) {
    std::vector<double> medians;
    for (std::size_t n : {100, 1000, 10000}) {
      std::vector<double> rs;
      for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        rs.push_back(fit_correlation(rank_size(sample(model, n, seed * 7919 + n)), model, static_cast<double>(n)));
      }
      medians.push_back(oracle::median(rs));
    }
    CHECK(medians[0] < medians[1]);
    CHECK(medians[1] < medians[2]);
    CHECK(medians[2] > 0.999);
  }
}

TEST_CASE("conservation_sum") {
  CHECK(conservation_sum(std::vector<double>(150, 7.0), 150) == 0.0);
  std::vector<double> exact;
  for (int r = 1; r <= 150; ++r) exact.push_back(1e5 / r);
  const double ref = oracle::zipf_rank_log_sum(150);
  CHECK(std::abs(conservation_sum(exact, 150) - ref) < 1e-9);
  CHECK(ref == doctest::Approx(146.5752).epsilon(1e-6));
  std::vector<double> scaled(exact);
  for (double& x : scaled) x *= 37.0;
  CHECK(conservation_sum(scaled, 150) == doctest::Approx(conservation_sum(exact, 150)).epsilon(1e-12));
  CHECK(conservation_sum(exact, 1) == 0.0);
  CHECK_THROWS_AS(conservation_sum(exact, 0), std::out_of_range);
  CHECK_THROWS_AS(conservation_sum(exact, 151), std::out_of_range);
  CHECK_THROWS(conservation_sum(std::vector<double>{1, 2, 3}, 2));
}

TEST_CASE("regime_turnover") {
  std::set<std::string> a, b, c;
  for (int i = 0; i < 150; ++i) {
    a.insert("a" + std::to_string(i));
    c.insert("c" + std::to_string(i));
    b.insert(i < 140 ? "a" + std::to_string(i) : "b" + std::to_string(i));
  }
  auto same = regime_turnover(a, a);
  CHECK(same.count_exited == 0);
  CHECK(same.fraction == 0.0);
  auto disjoint = regime_turnover(a, c);
  CHECK(disjoint.count_exited == 150);
  CHECK(disjoint.fraction == 1.0);
  auto ten = regime_turnover(a, b);
  CHECK(ten.count_exited == 10);
  CHECK(ten.fraction == doctest::Approx(0.0667).epsilon(1e-3));
  std::set<std::string> small{"x"};
  CHECK_THROWS(regime_turnover(a, small));
  CHECK_THROWS(regime_turnover({}, {}));
}

TEST_CASE("u_histogram") {
  const auto one = u_histogram(std::vector<double>{2.5}, 4);
  CHECK(std::count_if(one.counts.begin(), one.counts.end(), [](auto c) { return c > 0; }) == 1);
  const auto xs = sample(EquilibriumModel::log_normal(0.0, 1.0), 5000, 2);
  std::vector<double> u;
  for (double x : xs) u.push_back(std::log(x));
  for (std::size_t bins : {1, 7, 0}) {
    const auto h = u_histogram(u, bins);
    double mass = 0.0;
    for (std::size_t i = 0; i < h.n_bins(); ++i) mass += h.density[i] * (h.edges[i + 1] - h.edges[i]);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == u.size());
  }
  CHECK(u_histogram(u, 0).n_bins() == freedman_diaconis_bins(u));
  CHECK(freedman_diaconis_bins(u) > 10);
  CHECK_THROWS(u_histogram(std::vector<double>{}, 3));
  CHECK_THROWS(u_histogram(u, 0, 0.0, 1.0));
}

TEST_CASE("flat and non-flat histograms under the chi-square test") {
  std::vector<double> flat;
  for (double x : sample(EquilibriumModel::benford(kUM), 20000, 6)) flat.push_back(std::log(x));
  CHECK(chi_square_uniform(u_histogram(flat, 20, 0.0, kUM)).p_value > 0.01);
  std::vector<double> tilted;
  for (double x : sample(EquilibriumModel::exponential(0.0, 0.3, kUM, 1.0, false), 20000, 6)) {
    tilted.push_back(std::log(x));
  }
  CHECK(chi_square_uniform(u_histogram(tilted, 20, 0.0, kUM)).p_value < 1e-6);
}

TEST_CASE("Jarque-Bera separates Gaussian from skewed samples") {
  std::vector<double> gauss, skewed;
  for (double x : sample(EquilibriumModel::log_normal(0.0, 1.0), 10000, 8)) {
    gauss.push_back(std::log(x));
    skewed.push_back(x);
  }
  CHECK(jarque_bera(gauss).p_value > 0.01);
  CHECK(jarque_bera(skewed).p_value < 1e-6);
  CHECK_THROWS(jarque_bera(std::vector<double>{1, 1, 1}));
}

TEST_CASE("mean and variance use the population convention") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(mean(v) == 2.5);
  CHECK(variance(v) == 1.25);
  CHECK(pearson(v, std::vector<double>{2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK_THROWS(mean(std::vector<double>{}));
  CHECK_THROWS(pearson(v, std::vector<double>{1, 2}));
}
