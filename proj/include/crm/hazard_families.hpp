#pragma once

// Baseline lifetime families used on each stress segment. Everything here is
// a pure function of (kind, params, t) and is templated on the scalar type.

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "crm/errors.hpp"

namespace crm {

enum class FamilyKind { Weibull, LinearFailureRate, GeneralizedExponential };

inline std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Weibull: return "weibull";
    case FamilyKind::LinearFailureRate: return "lfr";
    case FamilyKind::GeneralizedExponential: return "ge";
  }
  return "unknown";
}

inline FamilyKind parse_family(std::string_view name) {
  if (name == "weibull") return FamilyKind::Weibull;
  if (name == "lfr") return FamilyKind::LinearFailureRate;
  if (name == "ge") return FamilyKind::GeneralizedExponential;
  throw ContractError("unknown family '" + std::string(name) + "' (expected weibull|lfr|ge)");
}

/// Shape-like `alpha` and rate-like `lambda` of one stress segment. For the
/// linear failure rate family alpha is the intercept rate and lambda the slope.
template <typename Scalar>
struct SegmentParams {
  Scalar alpha{1};
  Scalar lambda{1};
};

/// (alpha1, lambda1) at the first stress level, (alpha2, lambda2) at the second.
template <typename Scalar>
struct FamilyParams {
  SegmentParams<Scalar> seg1;
  SegmentParams<Scalar> seg2;

  /// Packed as (alpha1, alpha2, lambda1, lambda2).
  Eigen::Matrix<Scalar, 4, 1> packed() const {
    Eigen::Matrix<Scalar, 4, 1> v;
    v << seg1.alpha, seg2.alpha, seg1.lambda, seg2.lambda;
    return v;
  }

  template <typename Derived>
  static FamilyParams unpacked(const Eigen::MatrixBase<Derived>& v) {
    return {{v(0), v(2)}, {v(1), v(3)}};
  }
};

using SegmentParamsd = SegmentParams<double>;
using FamilyParamsd = FamilyParams<double>;

template <typename Scalar>
bool is_valid(FamilyKind kind, const SegmentParams<Scalar>& p) {
  using std::isfinite;
  if (!isfinite(p.alpha) || !isfinite(p.lambda) || !(p.alpha > 0)) return false;
  return kind == FamilyKind::LinearFailureRate ? p.lambda >= 0 : p.lambda > 0;
}

template <typename Scalar>
bool is_valid(FamilyKind kind, const FamilyParams<Scalar>& p) {
  return is_valid(kind, p.seg1) && is_valid(kind, p.seg2);
}

namespace detail {

// phi(h) = ln(-ln(1 - e^{-h})) for h > 0. The generalized exponential
// cumulative hazard is phi^{-1}(ln alpha + phi(lambda t)) and its inverse is
// phi^{-1}(phi(H) - ln alpha), so both directions share these two kernels.
template <typename Scalar>
Scalar ge_phi(Scalar h) {
  using std::exp;
  using std::expm1;
  using std::log;
  using std::log1p;
  if (h > Scalar(30)) {
    const Scalar y = exp(-h);
    return -h + log1p(y / 2 + y * y / 3);
  }
  const Scalar w = h > Scalar(0.6931471805599453) ? -log1p(-exp(-h)) : -log(-expm1(-h));
  return log(w);
}

template <typename Scalar>
Scalar ge_phi_inverse(Scalar l) {
  using std::exp;
  using std::expm1;
  using std::log;
  using std::log1p;
  const Scalar x = exp(l);
  if (x < Scalar(1e-5)) return -l - log1p(-x / 2 + x * x / 6);
  if (x <= Scalar(0.6931471805599453)) return -log(-expm1(-x));
  return -log1p(-exp(-x));
}

template <typename Scalar>
Scalar log_hazard(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar t) {
  using std::exp;
  using std::log;
  switch (kind) {
    case FamilyKind::Weibull:
      return log(p.alpha) + log(p.lambda) + (p.alpha - 1) * log(t);
    case FamilyKind::LinearFailureRate:
      return log(p.alpha + p.lambda * t);
    case FamilyKind::GeneralizedExponential: {
      const Scalar lt = p.lambda * t;
      const Scalar phi = ge_phi(lt);
      const Scalar log_u = -exp(phi);
      const Scalar cum = ge_phi_inverse(log(p.alpha) + phi);
      return log(p.alpha) + log(p.lambda) - lt + (p.alpha - 1) * log_u + cum;
    }
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

template <typename Scalar>
Scalar hazard(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar t) {
  using std::exp;
  using std::pow;
  switch (kind) {
    case FamilyKind::Weibull: return p.alpha * p.lambda * pow(t, p.alpha - 1);
    case FamilyKind::LinearFailureRate: return p.alpha + p.lambda * t;
    case FamilyKind::GeneralizedExponential: return exp(log_hazard(kind, p, t));
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

template <typename Scalar>
Scalar cum_hazard(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar t) {
  using std::log;
  using std::pow;
  if (t <= 0) return Scalar(0);
  switch (kind) {
    case FamilyKind::Weibull: return p.lambda * pow(t, p.alpha);
    case FamilyKind::LinearFailureRate: return t * (p.alpha + p.lambda * t / 2);
    case FamilyKind::GeneralizedExponential:
      return ge_phi_inverse(log(p.alpha) + ge_phi(p.lambda * t));
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

template <typename Scalar>
Scalar cum_hazard_inverse(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar cum) {
  using std::log;
  using std::pow;
  using std::sqrt;
  if (cum <= 0) return Scalar(0);
  switch (kind) {
    case FamilyKind::Weibull: return pow(cum / p.lambda, 1 / p.alpha);
    case FamilyKind::LinearFailureRate:
      // nonnegative root of lambda t^2 / 2 + alpha t - H, cancellation-free form
      return 2 * cum / (p.alpha + sqrt(p.alpha * p.alpha + 2 * p.lambda * cum));
    case FamilyKind::GeneralizedExponential:
      return ge_phi_inverse(ge_phi(cum) - log(p.alpha)) / p.lambda;
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

template <typename Scalar>
[[noreturn]] void throw_evaluation(std::string_view what, FamilyKind kind,
                                   const SegmentParams<Scalar>& p, Scalar arg) {
  std::ostringstream os;
  os.precision(17);
  os << what << " not finite for family " << to_string(kind) << " (alpha=" << p.alpha
     << ", lambda=" << p.lambda << ") at " << arg;
  throw EvaluationError(os.str());
}

}  // namespace detail

/// h(t) of the segment family; requires t > 0.
template <typename Scalar>
Scalar base_hazard(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar t) {
  using std::isfinite;
  const Scalar h = detail::hazard(kind, p, t);
  if (!(t > 0) || !isfinite(h)) detail::throw_evaluation("hazard", kind, p, t);
  return h;
}

/// H(t) = integral of h over [0, t]; H(0) = 0.
template <typename Scalar>
Scalar base_cum_hazard(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar t) {
  using std::isfinite;
  const Scalar h = detail::cum_hazard(kind, p, t);
  if (t < 0 || !isfinite(h)) detail::throw_evaluation("cumulative hazard", kind, p, t);
  return h;
}

/// The time t >= 0 with H(t) = cum.
template <typename Scalar>
Scalar base_cum_hazard_inverse(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar cum) {
  using std::isfinite;
  const Scalar t = detail::cum_hazard_inverse(kind, p, cum);
  if (cum < 0 || !isfinite(t)) detail::throw_evaluation("cumulative hazard inverse", kind, p, cum);
  return t;
}

/// Parameters of the same family on a time axis stretched by c: the returned
/// segment satisfies H'(c t) = H(t). Each family is closed under this map.
template <typename Scalar>
SegmentParams<Scalar> time_rescaled(FamilyKind kind, const SegmentParams<Scalar>& p, Scalar c) {
  using std::pow;
  switch (kind) {
    case FamilyKind::Weibull: return {p.alpha, p.lambda * pow(c, -p.alpha)};
    case FamilyKind::LinearFailureRate: return {p.alpha / c, p.lambda / (c * c)};
    case FamilyKind::GeneralizedExponential: return {p.alpha, p.lambda / c};
  }
  return p;
}

template <typename Scalar>
FamilyParams<Scalar> time_rescaled(FamilyKind kind, const FamilyParams<Scalar>& p, Scalar c) {
  return {time_rescaled(kind, p.seg1, c), time_rescaled(kind, p.seg2, c)};
}

}  // namespace crm
