#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "json.hpp"

namespace sfmaxent {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Active conservation rules for f_i(u) = u^i, i in {0, 1}, over the
/// volume [0, u_max].
struct ConstraintSet {
  bool normalized = true;                // i = 0, multiplier mu
  std::optional<double> mean_u_target;   // i = 1, multiplier lambda
  double u_max = kUnbounded;

  // Throws std::invalid_argument when no rule is active or the target is
  // outside (0, u_max).
  void validate() const;
};

struct Multipliers {
  double mu = 0.0;
  double lambda = 0.0;
  // |integral - target| for each rule; zero for inactive rules.
  double normalization_residual = 0.0;
  double mean_residual = 0.0;
};

/// Solves the active conservation integrals for (mu, lambda).
///
/// Inactive normalization pins mu = 0; inactive mean pins lambda = 0. The
/// finite-volume two-rule case reduces to a scalar equation in lambda
/// (normalization gives mu(lambda) in closed form) that is bracketed and
/// bisected. Throws InfeasibleError naming the violated rule, or
/// NumericalError if the residuals exceed 1e-10.
Multipliers solve_multipliers(const ConstraintSet& constraints);

struct LogNormalParams {
  double mean_u = 0.0;
  double var_u = 1.0;
};

/// p_U(u) = exp(-mu - lambda u) on [0, u_max].
struct ExponentialParams {
  double mu = 0.0;
  double lambda = 0.0;
  double u_max = kUnbounded;
  // False for the mu = 0 (Zipf-regime) family, whose density is a shape
  // rather than a probability density.
  bool normalized = true;
};

enum class Family { log_normal, exponential_in_u };

/// Equilibrium density family in u = log(x / x0).
class EquilibriumModel {
 public:
  static EquilibriumModel log_normal(double mean_u, double var_u, double x0 = 1.0);
  static EquilibriumModel exponential(double mu, double lambda, double u_max, double x0 = 1.0,
                                      bool normalized = true);
  /// lambda = 0, e^mu = u_max: p_X = 1/(u_max x).
  static EquilibriumModel benford(double u_max, double x0 = 1.0);
  /// mu = 0, lambda = 1, unbounded: p_X = x0 / x^2.
  static EquilibriumModel zipf(double x0 = 1.0);
  /// Normalized power law p_X ∝ x^-(lambda+1), i.e. <u> = 1/lambda.
  static EquilibriumModel power_law(double lambda, double x0 = 1.0);
  static EquilibriumModel from_multipliers(const Multipliers& m, const ConstraintSet& c,
                                           double x0 = 1.0);

  Family family() const noexcept;
  double x0() const noexcept { return x0_; }
  bool normalized() const noexcept;
  double u_max() const noexcept;
  double u_min() const noexcept;

  const ExponentialParams* exponential_params() const noexcept {
    return std::get_if<ExponentialParams>(&params_);
  }
  const LogNormalParams* log_normal_params() const noexcept {
    return std::get_if<LogNormalParams>(&params_);
  }

  /// Integral of density_u over the support (1 for normalized models,
  /// +inf if the shape cannot be normalized).
  double mass() const;

 private:
  using Params = std::variant<LogNormalParams, ExponentialParams>;
  EquilibriumModel(Params p, double x0);

  Params params_;
  double x0_;
};

double density_u(const EquilibriumModel& model, double u);
double density_x(const EquilibriumModel& model, double x);

/// Mass of density_u over [u_min, u]. With renormalize the shape is scaled
/// to unit mass first (throws DomainError if that is impossible).
double cdf_u(const EquilibriumModel& model, double u, bool renormalize = false);
double cdf_x(const EquilibriumModel& model, double x, bool renormalize = false);

/// Inverse of the (renormalized) CDF in u.
double quantile_u(const EquilibriumModel& model, double q);
double quantile_x(const EquilibriumModel& model, double q);

/// Expected number of elements at or above x among n_total:
/// n_total * integral_x^{x_max} density_x.
double predicted_rank(const EquilibriumModel& model, double x, double n_total);

/// Inverse of predicted_rank: the size whose expected rank is `rank`.
double size_at_rank(const EquilibriumModel& model, double rank, double n_total);

/// rho(x) = N p_X(x), the thermodynamic-limit density.
double element_density(const EquilibriumModel& model, double x, double n_total);

/// rho_0 = N / u_M for the bounded lambda = 0 model.
double limit_density_constant(const EquilibriumModel& model, double n_total);

/// Mean of u under the (renormalized) model.
double mean_u(const EquilibriumModel& model);

/// n inverse-CDF draws in x, deterministic in seed.
std::vector<double> sample(const EquilibriumModel& model, std::size_t n, std::uint64_t seed);

/// Differential entropy -∫ p_U log p_U. Throws DomainError for models
/// without normalization.
double shannon_entropy_u(const EquilibriumModel& model);

void to_json(nlohmann::json& j, const EquilibriumModel& model);
EquilibriumModel model_from_json(const nlohmann::json& j);

namespace detail {
// ∫_0^L e^{-lambda u} du, stable near lambda = 0 and for L = inf.
double exp_mass(double lambda, double L);
// ∫_0^L u e^{-lambda u} du.
double exp_first_moment(double lambda, double L);
// Mean of the truncated exponential on [0, L].
double exp_mean(double lambda, double L);
}  // namespace detail

}  // namespace sfmaxent
