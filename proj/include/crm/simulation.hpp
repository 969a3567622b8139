#pragma once

// Exact sampling from the cure-mixture cumulative-risk model and the
// replication study harness.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crm/likelihood.hpp"

namespace crm {

struct CovariateSpec {
  std::string name;
  double lo = 0;
  double hi = 1;
};

/// Hazard parameters live on the time / tau1 scale. The cure link sees each
/// covariate mapped onto [0, 1] of its configured range.
struct SimConfig {
  FamilyKind kind = FamilyKind::Weibull;
  FamilyParamsd theta{{2.6, 0.22}, {1.8, 1.14}};
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, -2.0);  // p = 0.119 without covariates
  std::vector<CovariateSpec> covariates;
  double tau1 = 240;
  double delta = 100;
  std::size_t n = 200;
  std::size_t reps = 1;
  std::optional<double> censor_fraction = 0.2;
  std::optional<double> study_end;  // overrides censor_fraction when set
  std::uint64_t seed = 20240101;
  bool profile_delta = false;
  double grid_step = 5;
  double grid_span = 200;
  EmConfig em{};
  unsigned threads = 1;

  StressScheduled schedule() const { return {tau1, tau1 + delta, std::nullopt}; }
  CrmModeld susceptible_model() const;  // time / tau1 scale
  CureModel cure_model() const;
  void validate() const;

  /// Reference replication configuration (n = 200).
  static SimConfig replication_study();
};

/// t with S0(t) = 1 - u, by piecewise inversion of the cumulative hazard.
double sample_susceptible_time(const CrmModeld& model, double u);

/// E[p(beta, Z)] with Z uniform over the configured ranges.
double expected_cure_probability(const SimConfig& config);

/// Study end (input time scale) at which the expected censored fraction hits the target.
double calibrate_study_end(const SimConfig& config);

/// Deterministic in (config.seed, rep_index); every subject draws from its own stream.
Dataset simulate_dataset(const SimConfig& config, std::size_t rep_index, double study_end);
Dataset simulate_dataset(const SimConfig& config, std::size_t rep_index);

struct ParameterSummary {
  std::string name;
  double truth = 0;
  double mean = 0;
  double rmse = 0;
};

struct StudySummary {
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t used = 0;            // converged fits entering the averages
  std::size_t nonconverged = 0;
  std::size_t failures = 0;        // fits that threw
  double mean_censor_fraction = 0;
  double study_end = 0;
  std::vector<ParameterSummary> parameters;
  std::vector<double> delta_hat;   // per used replication when profiling
  std::vector<std::string> errors; // first few failure messages
};

StudySummary run_study(const SimConfig& config);

}  // namespace crm
