#pragma once

// Observed-data likelihood of the cumulative-risk cure model, the EM
// algorithm that maximizes it, and the profile search over tau2.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crm/crm_core.hpp"
#include "crm/optimize.hpp"

namespace crm {

struct SubjectRecord {
  double time = 0;
  bool event = false;
  Eigen::VectorXd z = Eigen::VectorXd::Ones(1);  // leading 1
};

struct Dataset {
  std::vector<SubjectRecord> records;
  std::vector<std::string> covariate_names;
};

/// Indices of events before/at tau1, strictly inside the lag, at/after tau2,
/// and of all censored records.
struct Partition {
  std::vector<std::size_t> first;
  std::vector<std::size_t> bridge;
  std::vector<std::size_t> second;
  std::vector<std::size_t> censored;

  std::size_t n1() const { return first.size(); }
  std::size_t n2() const { return bridge.size(); }
  std::size_t n3() const { return second.size(); }
  std::size_t n4() const { return censored.size(); }
  std::size_t events() const { return n1() + n2() + n3(); }
  std::size_t total() const { return events() + n4(); }
};

Partition partition(std::span<const SubjectRecord> records, const StressScheduled& schedule);

/// l1 + l2. Returns -inf when an event has zero density; throws ContractError
/// for invalid parameters or covariate dimension mismatch.
double log_likelihood(FamilyKind kind, const FamilyParamsd& theta, const CureModel& cure,
                      std::span<const SubjectRecord> records, const StressScheduled& schedule);

/// Posterior cure/susceptible membership of a record censored at t.
struct MembershipWeights {
  double cured = 0;        // w1
  double susceptible = 1;  // w2 = 1 - w1
};

MembershipWeights e_step_weights(double p, double s0);
MembershipWeights e_step_weights(const CrmModeld& model, const CureModel& cure, double t,
                                 const Eigen::VectorXd& z);

struct PseudoLoglik {
  double cure_part = 0;    // g1(beta | current)
  double hazard_part = 0;  // g2(theta | current)
  double total() const { return cure_part + hazard_part; }
};

/// EM surrogate at (theta, cure) with weights computed at (theta_k, cure_k).
PseudoLoglik pseudo_loglik(FamilyKind kind, const FamilyParamsd& theta, const CureModel& cure,
                           const FamilyParamsd& theta_k, const CureModel& cure_k,
                           std::span<const SubjectRecord> records, const StressScheduled& schedule);

/// Covariate-free cure update: sum of w1 over censored records divided by n.
double m_step_p_closed_form(std::span<const double> cured_weights, std::size_t n);

struct BetaStepOptions {
  int max_iter = 100;
  double step_tol = 1e-10;
  double grad_tol = 1e-6;  // relative; accepts a stalled line search
  double bound = 30;  // |beta_j| <= bound
};

class BetaStepError : public NumericalError {
 public:
  BetaStepError(const std::string& what, Eigen::VectorXd last, double grad_norm)
      : NumericalError(what), last_iterate(std::move(last)), gradient_norm(grad_norm) {}
  Eigen::VectorXd last_iterate;
  double gradient_norm;
};

/// Maximizes g1(beta) = sum_i [y_i eta_i - ln(1 + e^eta_i)], eta = X beta, with
/// soft cure labels y (0 for events, w1 for censored records). Projected
/// Newton on the box |beta_j| <= bound.
Eigen::VectorXd m_step_beta(const Eigen::MatrixXd& design, const Eigen::VectorXd& cured_labels,
                            const Eigen::VectorXd& beta_init, const BetaStepOptions& opts = {});

enum class InnerOptimizer { NewtonWithNumericDerivatives, NelderMead };

/// Equality constraints on the hazard parameters.
enum class ThetaConstraint { Free, EqualShapes, UnitShapes };

/// How the cure fraction enters the fit.
enum class CureMode { Logistic, Constant, Absent };

struct EmConfig {
  double tol = 1e-8;
  int max_iter = 500;
  double theta_lower = 1e-6;
  double theta_upper = 1e6;
  InnerOptimizer inner_optimizer = InnerOptimizer::NewtonWithNumericDerivatives;
  ThetaConstraint theta_constraint = ThetaConstraint::Free;
  CureMode cure_mode = CureMode::Logistic;
  BetaStepOptions beta_step{};
  CovariateScaling link_scaling{};  // applied to record covariates before the link
  bool normalize = true;            // fit on t / tau1
  bool compute_se = true;
  std::optional<FamilyParamsd> init_theta;  // on the fitting (normalized) scale
  std::optional<Eigen::VectorXd> init_beta;  // on the link scale
};

/// Hazard-part M-step: maximize g2(theta) = sum_events ln f0(t) - sum_censored w2 H0(t).
FamilyParamsd m_step_theta(FamilyKind kind, std::span<const SubjectRecord> records,
                           std::span<const double> susceptible_weights, const StressScheduled& schedule,
                           const FamilyParamsd& theta_init, const EmConfig& config);

struct FitResult {
  FamilyKind kind = FamilyKind::Weibull;
  FamilyParamsd theta;       // on the fitting time scale (time / time_scale)
  CureModel cure;            // beta on the link scale
  std::optional<double> p;   // set for covariate-free fits
  double mll = 0;            // maximized log-likelihood on the input time scale
  std::vector<std::string> se_names;
  Eigen::VectorXd se;        // empty when unavailable
  bool se_available = false;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // observed log-likelihood per iteration, input time scale
  StressScheduled schedule;   // input time scale
  double time_scale = 1;
  std::size_t n = 0;
  std::size_t n1 = 0, n2 = 0, n3 = 0, n4 = 0;

  /// Model on the fitting time scale.
  CrmModeld model() const;
};

FitResult em_fit(std::span<const SubjectRecord> records, const StressScheduled& schedule, FamilyKind kind,
                 const EmConfig& config = {});

struct ProfilePoint {
  double tau2 = 0;
  std::optional<FitResult> fit;
  std::string error;  // set when the fit failed
};

struct ProfileResult {
  double best_tau2 = 0;
  std::vector<ProfilePoint> curve;
  const FitResult& best() const;
};

/// em_fit at every candidate tau2; the highest MLL wins, ties go to the smaller tau2.
ProfileResult profile_fit_delta(std::span<const SubjectRecord> records, FamilyKind kind, double tau1,
                                std::span<const double> grid, const EmConfig& config = {},
                                unsigned threads = 1);

}  // namespace crm
