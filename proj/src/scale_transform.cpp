#include "sfmaxent/scale_transform.hpp"

#include <cmath>
#include <string>

#include "sfmaxent/errors.hpp"

namespace sfmaxent {

namespace {

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(what) + " must be positive and finite, got " +
                      std::to_string(x));
  }
}

}  // namespace

TransformSpec::TransformSpec(TransformKind kind, double x0) : kind_(kind), x0_(x0) {
  require_positive(x0, "x0");
}

double TransformSpec::g(double x) const {
  return kind_ == TransformKind::scale_invariant ? x : 1.0;
}

double TransformSpec::u(double x) const {
  if (kind_ == TransformKind::translational) return x - x0_;
  require_positive(x, "x");
  return std::log(x / x0_);
}

double to_log_space(double x, const TransformSpec& spec) {
  if (spec.kind() != TransformKind::scale_invariant) {
    throw DomainError("to_log_space requires a scale-invariant transform");
  }
  return spec.u(x);
}

double from_log_space(double u, const TransformSpec& spec) {
  if (spec.kind() != TransformKind::scale_invariant) {
    throw DomainError("from_log_space requires a scale-invariant transform");
  }
  return spec.x0() * std::exp(u);
}

double jacobian(double x, const TransformSpec& spec) {
  if (spec.kind() == TransformKind::translational) return 1.0;
  require_positive(x, "x");
  return 1.0 / x;
}

}  // namespace sfmaxent
