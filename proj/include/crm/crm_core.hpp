#pragma once

// Piecewise cumulative-risk hazard for a simple step-stress schedule, the
// linear bridge joining the two stress levels, and the logistic cure mixture.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crm/errors.hpp"
#include "crm/hazard_families.hpp"

namespace crm {

/// Stress changes at tau1; the new stress is fully effective from tau2 = tau1 + delta.
template <typename Scalar>
struct StressSchedule {
  Scalar tau1{1};
  Scalar tau2{1};
  std::optional<Scalar> study_end;

  Scalar delta() const { return tau2 - tau1; }
  bool khamis_higgins() const { return tau2 == tau1; }

  void validate() const {
    using std::isfinite;
    if (!(tau1 > 0) || !isfinite(tau1)) throw ContractError("tau1 must be positive");
    if (!(tau2 >= tau1) || !isfinite(tau2)) throw ContractError("tau2 must be >= tau1");
    if (study_end && !(*study_end > tau2)) throw ContractError("study_end must exceed tau2");
  }

  /// All times multiplied by c.
  StressSchedule scaled(Scalar c) const {
    StressSchedule s{tau1 * c, tau2 * c, std::nullopt};
    if (study_end) s.study_end = *study_end * c;
    return s;
  }
};

using StressScheduled = StressSchedule<double>;

/// Hazard on (tau1, tau2) is a + b t.
template <typename Scalar>
struct Bridge {
  Scalar a{0};
  Scalar b{0};
};

template <typename Scalar>
Bridge<Scalar> bridge_coefficients(FamilyKind kind, const FamilyParams<Scalar>& theta,
                                   const StressSchedule<Scalar>& schedule) {
  if (!(schedule.delta() > 0))
    throw ContractError("no bridge in Khamis-Higgins mode (delta = 0)");
  const Scalar h1 = detail::hazard(kind, theta.seg1, schedule.tau1);
  const Scalar h3 = detail::hazard(kind, theta.seg2, schedule.tau2);
  const Scalar b = (h3 - h1) / (schedule.tau2 - schedule.tau1);
  return {h1 - b * schedule.tau1, b};
}

enum class Segment { First, Bridge, Second };

/// Immutable cumulative-risk model. Boundary membership: t = tau1 belongs to
/// the first segment, t = tau2 to the last. With delta = 0 the hazard switches
/// directly from the first to the second family after tau1.
template <typename Scalar>
class CrmModel {
 public:
  CrmModel(FamilyKind kind, const FamilyParams<Scalar>& theta, const StressSchedule<Scalar>& schedule)
      : kind_(kind), theta_(theta), schedule_(schedule) {
    schedule_.validate();
    if (!is_valid(kind, theta)) throw ContractError("invalid family parameters");
    refresh();
  }

  /// Unvalidated construction for optimizer inner loops; the caller guarantees validity.
  static CrmModel unchecked(FamilyKind kind, const FamilyParams<Scalar>& theta,
                            const StressSchedule<Scalar>& schedule) {
    return CrmModel(kind, theta, schedule, Unchecked{});
  }

  FamilyKind kind() const { return kind_; }
  const FamilyParams<Scalar>& theta() const { return theta_; }
  const StressSchedule<Scalar>& schedule() const { return schedule_; }
  const std::optional<Bridge<Scalar>>& bridge() const { return bridge_; }

  Segment segment_of(Scalar t) const {
    if (t <= schedule_.tau1) return Segment::First;
    if (t < schedule_.tau2) return Segment::Bridge;
    return Segment::Second;
  }

  Scalar hazard(Scalar t) const {
    switch (segment_of(t)) {
      case Segment::First: return detail::hazard(kind_, theta_.seg1, t);
      case Segment::Bridge: return bridge_->a + bridge_->b * t;
      case Segment::Second: return detail::hazard(kind_, theta_.seg2, t);
    }
    return std::numeric_limits<Scalar>::quiet_NaN();
  }

  Scalar log_hazard(Scalar t) const {
    using std::log;
    switch (segment_of(t)) {
      case Segment::First: return detail::log_hazard(kind_, theta_.seg1, t);
      case Segment::Bridge: return log(bridge_->a + bridge_->b * t);
      case Segment::Second: return detail::log_hazard(kind_, theta_.seg2, t);
    }
    return std::numeric_limits<Scalar>::quiet_NaN();
  }

  Scalar cum_hazard(Scalar t) const {
    switch (segment_of(t)) {
      case Segment::First: return detail::cum_hazard(kind_, theta_.seg1, t);
      case Segment::Bridge: return cum_tau1_ + bridge_integral(t);
      case Segment::Second:
        return cum_tau2_ + detail::cum_hazard(kind_, theta_.seg2, t) - base2_cum_tau2_;
    }
    return std::numeric_limits<Scalar>::quiet_NaN();
  }

  /// The t >= 0 with cum_hazard(t) = cum.
  Scalar cum_hazard_inverse(Scalar cum) const {
    using std::sqrt;
    if (cum <= cum_tau1_) return detail::cum_hazard_inverse(kind_, theta_.seg1, cum);
    if (cum < cum_tau2_) {
      // a (t - tau1) + b/2 (t^2 - tau1^2) = rest, with x = t - tau1 and slope h(tau1) at x = 0
      const Scalar rest = cum - cum_tau1_;
      const Scalar h1 = bridge_->a + bridge_->b * schedule_.tau1;
      const Scalar x = 2 * rest / (h1 + sqrt(h1 * h1 + 2 * bridge_->b * rest));
      return std::min(std::max(schedule_.tau1 + x, schedule_.tau1), schedule_.tau2);
    }
    const Scalar t = detail::cum_hazard_inverse(kind_, theta_.seg2, cum - cum_tau2_ + base2_cum_tau2_);
    return std::max(t, schedule_.tau2);
  }

 private:
  struct Unchecked {};
  CrmModel(FamilyKind kind, const FamilyParams<Scalar>& theta, const StressSchedule<Scalar>& schedule,
           Unchecked)
      : kind_(kind), theta_(theta), schedule_(schedule) {
    refresh();
  }

  Scalar bridge_integral(Scalar t) const {
    const Scalar tau1 = schedule_.tau1;
    return (t - tau1) * (bridge_->a + bridge_->b * (t + tau1) / 2);
  }

  void refresh() {
    cum_tau1_ = detail::cum_hazard(kind_, theta_.seg1, schedule_.tau1);
    if (schedule_.delta() > 0) {
      bridge_ = bridge_coefficients(kind_, theta_, schedule_);
      cum_tau2_ = cum_tau1_ + bridge_integral(schedule_.tau2);
    } else {
      bridge_.reset();
      cum_tau2_ = cum_tau1_;
    }
    base2_cum_tau2_ = detail::cum_hazard(kind_, theta_.seg2, schedule_.tau2);
  }

  FamilyKind kind_;
  FamilyParams<Scalar> theta_;
  StressSchedule<Scalar> schedule_;
  std::optional<Bridge<Scalar>> bridge_;
  Scalar cum_tau1_{0};
  Scalar cum_tau2_{0};
  Scalar base2_cum_tau2_{0};
};

using CrmModeld = CrmModel<double>;

template <typename Scalar>
Scalar hazard(const CrmModel<Scalar>& model, Scalar t) {
  using std::isfinite;
  const Scalar h = model.hazard(t);
  if (!(t > 0) || !isfinite(h)) throw EvaluationError("hazard not finite at t=" + std::to_string(t));
  return h;
}

template <typename Scalar>
Scalar cum_hazard(const CrmModel<Scalar>& model, Scalar t) {
  using std::isfinite;
  const Scalar h = model.cum_hazard(t);
  if (t < 0 || !isfinite(h))
    throw EvaluationError("cumulative hazard not finite at t=" + std::to_string(t));
  return h;
}

template <typename Scalar>
Scalar survival(const CrmModel<Scalar>& model, Scalar t) {
  using std::exp;
  return exp(-cum_hazard(model, t));
}

template <typename Scalar>
Scalar density(const CrmModel<Scalar>& model, Scalar t) {
  using std::exp;
  return hazard(model, t) * exp(-cum_hazard(model, t));
}

// ---------------------------------------------------------------------------
// Cure fraction

/// Affine map applied to the raw covariates before they enter the logistic
/// link: link_j = (raw_j - offset_j) / scale_j. Empty vectors mean identity.
struct CovariateScaling {
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;

  bool identity() const { return offset.size() == 0; }

  static CovariateScaling unit_range(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return {lo, hi - lo};
  }

  /// z has a leading 1; the intercept is left alone.
  Eigen::VectorXd apply(const Eigen::VectorXd& z) const {
    if (identity()) return z;
    Eigen::VectorXd out = z;
    out.tail(z.size() - 1) = (z.tail(z.size() - 1) - offset).cwiseQuotient(scale);
    return out;
  }
};

/// Logistic cure model, p(beta, z) = P(cured | z). beta(0) is the intercept;
/// with no covariates beta(0) = logit(p), and p = 0 is beta(0) = -inf.
struct CureModel {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(1);
  std::vector<std::string> covariate_names;
  CovariateScaling scaling;

  Eigen::Index num_covariates() const { return beta.size() - 1; }

  static CureModel constant(double p) {
    CureModel c;
    c.beta(0) = p <= 0 ? -std::numeric_limits<double>::infinity()
                       : p >= 1 ? std::numeric_limits<double>::infinity() : std::log(p / (1 - p));
    return c;
  }
};

/// Overflow-safe e^eta / (1 + e^eta); results below the smallest normal double are flushed to 0.
inline double logistic(double eta) {
  if (eta >= 0) return 1 / (1 + std::exp(-eta));
  const double e = std::exp(eta);
  const double p = e / (1 + e);
  return p < std::numeric_limits<double>::min() ? 0.0 : p;
}

/// ln(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double log_logistic(double eta) { return -softplus(-eta); }
inline double log1m_logistic(double eta) { return -softplus(eta); }

inline double linear_predictor(const CureModel& cure, const Eigen::VectorXd& z) {
  if (z.size() != cure.beta.size())
    throw ContractError("covariate vector has length " + std::to_string(z.size()) + ", expected " +
                        std::to_string(cure.beta.size()));
  if (cure.beta.size() == 1) return cure.beta(0);
  return cure.beta.dot(cure.scaling.apply(z));
}

/// P(cured | z); z carries a leading 1.
inline double logistic_p(const CureModel& cure, const Eigen::VectorXd& z) {
  return logistic(linear_predictor(cure, z));
}

/// S(t | z) = p + (1 - p) S0(t).
inline double population_survival(const CrmModeld& model, const CureModel& cure,
                                  const Eigen::VectorXd& z, double t) {
  const double p = logistic_p(cure, z);
  return p + (1 - p) * survival(model, t);
}

}  // namespace crm
