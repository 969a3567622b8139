#pragma once

// Kaplan-Meier estimation and the Kolmogorov-Smirnov distance between the
// product-limit curve and a fitted population survival function.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crm/likelihood.hpp"

namespace crm {

/// Right-continuous step function starting at 1 for t < times[0].
struct StepSurvival {
  std::vector<double> times;  // distinct event times, increasing
  std::vector<double> values; // survival just after each time
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;
  std::string tie_convention = "censored-after-events";

  double operator()(double t) const;
  /// Value just before t.
  double left_limit(double t) const;
};

StepSurvival kaplan_meier(std::span<const SubjectRecord> records);

/// Population survival averaged over covariate profiles, on the input time scale.
struct FittedSurvival {
  CrmModeld model;             // susceptible model on the fitting scale
  CureModel cure;
  std::vector<Eigen::VectorXd> profiles;  // each with leading 1; one entry for constant-cure models
  double time_scale = 1;

  double operator()(double t) const;

  /// Averages over each record's own covariates.
  static FittedSurvival from_fit(const FitResult& fit, std::span<const SubjectRecord> records);
  /// Single covariate profile (raw covariates with leading 1).
  static FittedSurvival at_profile(const FitResult& fit, const Eigen::VectorXd& z);
};

struct KsResult {
  double distance = 0;
  double p_value = 1;
  std::size_t effective_n = 0;
  std::string comparison = "km-vs-population-survival-at-jumps";
};

/// P(K > x) for the limiting Kolmogorov distribution.
double kolmogorov_sf(double x);

/// sup over KM jump points (both one-sided limits) of |S_KM - S_fit|; the
/// asymptotic p-value uses the number of events as the sample size.
KsResult ks_distance(const StepSurvival& km, const std::function<double(double)>& fitted);

/// Two-column CSV (time,survival) starting with the t = 0 row.
void write_step_csv(std::ostream& out, const StepSurvival& s);
/// Reads back what write_step_csv produced (at_risk/events left empty).
StepSurvival read_step_csv(std::istream& in);

}  // namespace crm
