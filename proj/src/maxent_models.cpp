#include "sfmaxent/maxent_models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "sfmaxent/errors.hpp"

namespace sfmaxent {

namespace detail {

double exp_mass(double lambda, double L) {
  if (std::isinf(L)) return lambda > 0.0 ? 1.0 / lambda : kUnbounded;
  const double x = lambda * L;
  if (std::abs(x) < 1e-8) return L * (1.0 - x / 2.0 + x * x / 6.0);
  return -std::expm1(-x) / lambda;
}

double exp_mean(double lambda, double L) {
  if (std::isinf(L)) return lambda > 0.0 ? 1.0 / lambda : kUnbounded;
  const double x = lambda * L;
  if (std::abs(x) < 1e-2) {
    // 1/x - 1/(e^x - 1) = 1/2 - x/12 + x^3/720 - x^5/30240 + ...
    const double x2 = x * x;
    return L * (0.5 - x / 12.0 + x * x2 / 720.0 - x * x2 * x2 / 30240.0);
  }
  return L * (1.0 / x - 1.0 / std::expm1(x));
}

double exp_first_moment(double lambda, double L) { return exp_mass(lambda, L) * exp_mean(lambda, L); }

namespace {

// log ∫_0^L e^{-lambda u} du without overflow for large negative lambda L.
double log_exp_mass(double lambda, double L) {
  if (lambda < 0.0 && std::isfinite(L) && -lambda * L > 1.0) {
    const double a = -lambda;
    return a * L + std::log(-std::expm1(-a * L)) - std::log(a);
  }
  return std::log(exp_mass(lambda, L));
}

}  // namespace
}  // namespace detail

void ConstraintSet::validate() const {
  if (!normalized && !mean_u_target) {
    throw std::invalid_argument("at least one conservation rule (normalization or <u>) must be active");
  }
  if (!(u_max > 0.0)) throw std::invalid_argument("u_max must be positive");
  if (mean_u_target) {
    const double m = *mean_u_target;
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw InfeasibleError("mean", "<u> target must be a positive finite number");
    }
    if (std::isfinite(u_max) && !(m < u_max)) {
      throw InfeasibleError("mean", "<u> target " + std::to_string(m) +
                                        " is not attainable inside the volume [0, " +
                                        std::to_string(u_max) + "]");
    }
  }
}

namespace {

constexpr double kResidualTolerance = 1e-10;

// Bisection for a decreasing f with f(root) = 0, starting from [-50, 50] and
// widening the bracket geometrically if the root lies outside it.
template <typename F>
double bisect_decreasing(F&& f) {
  double lo = -50.0;
  double hi = 50.0;
  for (int i = 0; f(lo) < 0.0; ++i) {
    if (i > 60) throw NumericalError("could not bracket lambda from below", f(lo));
    hi = lo;
    lo *= 2.0;
  }
  for (int i = 0; f(hi) > 0.0; ++i) {
    if (i > 60) throw NumericalError("could not bracket lambda from above", f(hi));
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    (fm > 0.0 ? lo : hi) = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Multipliers solve_multipliers(const ConstraintSet& c) {
  c.validate();
  const double L = c.u_max;
  Multipliers out;

  if (c.normalized && !c.mean_u_target) {
    if (std::isinf(L)) {
      throw InfeasibleError("normalization",
                            "normalization cannot be met by a uniform density on an unbounded volume");
    }
    out.mu = std::log(L);
    out.lambda = 0.0;
  } else if (c.normalized) {
    const double m = *c.mean_u_target;
    if (std::isinf(L)) {
      out.lambda = 1.0 / m;
      out.mu = std::log(m);
    } else {
      out.lambda = bisect_decreasing([&](double lam) { return detail::exp_mean(lam, L) - m; });
      out.mu = detail::log_exp_mass(out.lambda, L);
    }
  } else {
    // mu = 0: only the <u> rule, ∫ u e^{-lambda u} du = m.
    const double m = *c.mean_u_target;
    out.mu = 0.0;
    if (std::isinf(L)) {
      out.lambda = 1.0 / std::sqrt(m);
    } else {
      const double log_m = std::log(m);
      out.lambda = bisect_decreasing([&](double lam) {
        return detail::log_exp_mass(lam, L) + std::log(detail::exp_mean(lam, L)) - log_m;
      });
    }
  }

  const double scaled_mass = std::exp(detail::log_exp_mass(out.lambda, L) - out.mu);
  if (c.normalized) out.normalization_residual = std::abs(scaled_mass - 1.0);
  if (c.mean_u_target) {
    out.mean_residual = std::abs(scaled_mass * detail::exp_mean(out.lambda, L) - *c.mean_u_target);
  }
  const double worst = std::max(out.normalization_residual, out.mean_residual);
  if (!(worst <= kResidualTolerance)) {
    throw NumericalError("multiplier solve did not converge", worst);
  }
  return out;
}

EquilibriumModel::EquilibriumModel(Params p, double x0) : params_(p), x0_(x0) {
  if (!(x0 > 0.0) || !std::isfinite(x0)) throw DomainError("x0 must be positive");
}

EquilibriumModel EquilibriumModel::log_normal(double mean_u, double var_u, double x0) {
  if (!(var_u > 0.0)) throw DomainError("log-normal variance must be positive");
  return {LogNormalParams{mean_u, var_u}, x0};
}

EquilibriumModel EquilibriumModel::exponential(double mu, double lambda, double u_max, double x0,
                                               bool normalized) {
  if (!(u_max > 0.0)) throw DomainError("u_max must be positive");
  if (!std::isfinite(mu) || !std::isfinite(lambda)) throw DomainError("multipliers must be finite");
  return {ExponentialParams{mu, lambda, u_max, normalized}, x0};
}

EquilibriumModel EquilibriumModel::benford(double u_max, double x0) {
  if (!std::isfinite(u_max)) throw DomainError("the lambda = 0 model needs a finite volume");
  return exponential(std::log(u_max), 0.0, u_max, x0, true);
}

EquilibriumModel EquilibriumModel::zipf(double x0) { return exponential(0.0, 1.0, kUnbounded, x0, false); }

EquilibriumModel EquilibriumModel::power_law(double lambda, double x0) {
  if (!(lambda > 0.0)) throw DomainError("power-law lambda must be positive");
  return exponential(-std::log(lambda), lambda, kUnbounded, x0, true);
}

EquilibriumModel EquilibriumModel::from_multipliers(const Multipliers& m, const ConstraintSet& c,
                                                    double x0) {
  return exponential(m.mu, m.lambda, c.u_max, x0, c.normalized);
}

Family EquilibriumModel::family() const noexcept {
  return std::holds_alternative<LogNormalParams>(params_) ? Family::log_normal : Family::exponential_in_u;
}

bool EquilibriumModel::normalized() const noexcept {
  const auto* e = exponential_params();
  return e == nullptr || e->normalized;
}

double EquilibriumModel::u_max() const noexcept {
  const auto* e = exponential_params();
  return e ? e->u_max : kUnbounded;
}

double EquilibriumModel::u_min() const noexcept {
  return exponential_params() ? 0.0 : -kUnbounded;
}

double EquilibriumModel::mass() const {
  if (const auto* e = exponential_params()) {
    return std::exp(detail::log_exp_mass(e->lambda, e->u_max) - e->mu);
  }
  return 1.0;
}

namespace {

const boost::math::normal_distribution<double> kStdNormal{0.0, 1.0};

double std_normal_cdf(double z) { return boost::math::cdf(kStdNormal, z); }

double std_normal_ccdf(double z) { return boost::math::cdf(boost::math::complement(kStdNormal, z)); }

// e^{-mu} ∫_u^L e^{-lambda v} dv for u in [0, L].
double exp_upper_tail(const ExponentialParams& e, double u) {
  u = std::clamp(u, 0.0, e.u_max);
  const double rest = e.u_max - u;
  if (rest == 0.0) return 0.0;
  return std::exp(-e.mu - e.lambda * u) * detail::exp_mass(e.lambda, rest);
}

double renormalizer(const EquilibriumModel& model, bool renormalize) {
  if (!renormalize) return 1.0;
  const double m = model.mass();
  if (!std::isfinite(m)) throw DomainError("model shape cannot be normalized over its support");
  return m;
}

}  // namespace

double density_u(const EquilibriumModel& model, double u) {
  if (const auto* e = model.exponential_params()) {
    if (u < 0.0 || u > e->u_max) return 0.0;
    return std::exp(-e->mu - e->lambda * u);
  }
  const auto* ln = model.log_normal_params();
  const double s = std::sqrt(ln->var_u);
  const double z = (u - ln->mean_u) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
}

double density_x(const EquilibriumModel& model, double x) {
  if (!(x > 0.0)) return 0.0;
  return density_u(model, std::log(x / model.x0())) / x;
}

double cdf_u(const EquilibriumModel& model, double u, bool renormalize) {
  const double norm = renormalizer(model, renormalize);
  if (const auto* e = model.exponential_params()) {
    if (u <= 0.0) return 0.0;
    const double upper = std::min(u, e->u_max);
    return std::exp(-e->mu) * detail::exp_mass(e->lambda, upper) / norm;
  }
  const auto* ln = model.log_normal_params();
  return std_normal_cdf((u - ln->mean_u) / std::sqrt(ln->var_u));
}

double cdf_x(const EquilibriumModel& model, double x, bool renormalize) {
  if (!(x > 0.0)) return 0.0;
  return cdf_u(model, std::log(x / model.x0()), renormalize);
}

double quantile_u(const EquilibriumModel& model, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  if (const auto* e = model.exponential_params()) {
    const double total = detail::exp_mass(e->lambda, e->u_max);
    if (!std::isfinite(total)) throw DomainError("model shape cannot be normalized over its support");
    if (e->lambda == 0.0) return q * e->u_max;
    const double u = -std::log1p(-e->lambda * q * total) / e->lambda;
    return std::clamp(u, 0.0, e->u_max);
  }
  const auto* ln = model.log_normal_params();
  if (q == 0.0) return -kUnbounded;
  if (q == 1.0) return kUnbounded;
  return ln->mean_u + std::sqrt(ln->var_u) * boost::math::quantile(kStdNormal, q);
}

double quantile_x(const EquilibriumModel& model, double q) {
  return model.x0() * std::exp(quantile_u(model, q));
}

double predicted_rank(const EquilibriumModel& model, double x, double n_total) {
  if (!(x > 0.0)) return n_total * model.mass();
  const double u = std::log(x / model.x0());
  if (const auto* e = model.exponential_params()) return n_total * exp_upper_tail(*e, u);
  const auto* ln = model.log_normal_params();
  return n_total * std_normal_ccdf((u - ln->mean_u) / std::sqrt(ln->var_u));
}

double size_at_rank(const EquilibriumModel& model, double rank, double n_total) {
  if (!(n_total > 0.0) || !(rank >= 0.0)) throw DomainError("rank and n_total must be positive");
  const double t = rank / n_total;
  if (const auto* e = model.exponential_params()) {
    // Solve e^{-mu} ∫_u^L e^{-lambda v} dv = t for u.
    double u = 0.0;
    if (e->lambda == 0.0) {
      u = e->u_max - t * std::exp(e->mu);
    } else {
      const double shift = std::expm1(-e->lambda * e->u_max) + e->lambda * t * std::exp(e->mu);
      u = shift > -1.0 ? -std::log1p(shift) / e->lambda : kUnbounded;
    }
    if (std::isnan(u)) u = 0.0;
    return model.x0() * std::exp(std::clamp(u, 0.0, e->u_max));
  }
  const auto* ln = model.log_normal_params();
  const double p = std::clamp(t, 0.0, 1.0);
  double z = 0.0;
  if (p <= 0.0) {
    z = kUnbounded;
  } else if (p >= 1.0) {
    z = -kUnbounded;
  } else {
    z = boost::math::quantile(boost::math::complement(kStdNormal, p));
  }
  return model.x0() * std::exp(ln->mean_u + std::sqrt(ln->var_u) * z);
}

double element_density(const EquilibriumModel& model, double x, double n_total) {
  return n_total * density_x(model, x);
}

double limit_density_constant(const EquilibriumModel& model, double n_total) {
  const auto* e = model.exponential_params();
  if (e == nullptr || e->lambda != 0.0 || !std::isfinite(e->u_max)) {
    throw DomainError("rho_0 = N/u_M is defined for the bounded lambda = 0 model only");
  }
  return n_total / e->u_max;
}

double mean_u(const EquilibriumModel& model) {
  if (const auto* e = model.exponential_params()) return detail::exp_mean(e->lambda, e->u_max);
  return model.log_normal_params()->mean_u;
}

std::vector<double> sample(const EquilibriumModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample size must be at least 1");
  std::mt19937_64 engine(seed);
  const bool open_interval = model.family() == Family::log_normal;
  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    // 53-bit uniform on [0, 1), engine-defined and portable.
    const double q = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    if (open_interval && q == 0.0) continue;
    out.push_back(quantile_x(model, q));
  }
  return out;
}

double shannon_entropy_u(const EquilibriumModel& model) {
  if (!model.normalized()) throw DomainError("entropy undefined without normalization");
  if (const auto* e = model.exponential_params()) {
    const double mass = model.mass();
    if (!std::isfinite(mass)) throw DomainError("entropy undefined without normalization");
    // -∫ p log p with log p = -mu - lambda u.
    return e->mu * mass + e->lambda * mass * detail::exp_mean(e->lambda, e->u_max);
  }
  return 0.5 * std::log(2.0 * M_PI * M_E * model.log_normal_params()->var_u);
}

void to_json(nlohmann::json& j, const EquilibriumModel& model) {
  j = nlohmann::json::object();
  j["x0"] = model.x0();
  j["normalized"] = model.normalized();
  if (const auto* e = model.exponential_params()) {
    j["family"] = "exponential_in_u";
    j["mu"] = e->mu;
    j["lambda"] = e->lambda;
    j["u_max"] = std::isfinite(e->u_max) ? nlohmann::json(e->u_max) : nlohmann::json(nullptr);
  } else {
    const auto* ln = model.log_normal_params();
    j["family"] = "log_normal";
    j["mu"] = nullptr;
    j["lambda"] = nullptr;
    j["u_max"] = nullptr;
    j["mean_u"] = ln->mean_u;
    j["var_u"] = ln->var_u;
  }
}

EquilibriumModel model_from_json(const nlohmann::json& j) {
  const auto family = j.at("family").get<std::string>();
  const double x0 = j.value("x0", 1.0);
  if (family == "log_normal") {
    return EquilibriumModel::log_normal(j.at("mean_u").get<double>(), j.at("var_u").get<double>(), x0);
  }
  if (family != "exponential_in_u") throw std::invalid_argument("unknown model family: " + family);
  const auto& um = j.at("u_max");
  const double u_max = um.is_null() ? kUnbounded : um.get<double>();
  return EquilibriumModel::exponential(j.at("mu").get<double>(), j.at("lambda").get<double>(), u_max, x0,
                                       j.value("normalized", true));
}

}  // namespace sfmaxent
