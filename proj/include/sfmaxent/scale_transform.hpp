#pragma once

namespace sfmaxent {

enum class TransformKind { scale_invariant, translational };

/// Change of variable u = u(x) with du/dx = 1/g(x).
///
/// scale_invariant: g(x) = x, u = log(x / x0)
/// translational:   g(x) = 1, u = x - x0
///
/// Natural logarithms throughout. u(x0) == 0 for both kinds.
class TransformSpec {
 public:
  TransformSpec(TransformKind kind, double x0);

  static TransformSpec scale_invariant(double x0 = 1.0) {
    return {TransformKind::scale_invariant, x0};
  }
  static TransformSpec translational(double x0 = 1.0) {
    return {TransformKind::translational, x0};
  }

  TransformKind kind() const noexcept { return kind_; }
  double x0() const noexcept { return x0_; }

  double g(double x) const;
  double u(double x) const;

 private:
  TransformKind kind_;
  double x0_;
};

/// log(x / x0). Throws DomainError for x <= 0 or a translational spec.
double to_log_space(double x, const TransformSpec& spec);

/// x0 * exp(u); inverse of to_log_space.
double from_log_space(double u, const TransformSpec& spec);

/// du/dx = 1/g(x).
double jacobian(double x, const TransformSpec& spec);

}  // namespace sfmaxent
