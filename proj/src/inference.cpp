#include "crm/inference.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/SpecialFunctions>

namespace crm {

TestProblem parse_problem(int number) {
  if (number < 1 || number > 4) throw ContractError("test problem must be 1, 2, 3 or 4");
  return static_cast<TestProblem>(number);
}

std::string_view describe(TestProblem problem) {
  switch (problem) {
    case TestProblem::EqualShapes: return "equal shape parameters (alpha1 = alpha2)";
    case TestProblem::Exponentiality: return "exponential segments (alpha1 = alpha2 = 1)";
    case TestProblem::CovariateSignificance: return "covariate significance (beta1 = ... = beta_s = 0)";
    case TestProblem::CurePresence: return "cure presence (p = 0)";
  }
  return "";
}

double chi_square_sf(double w, int df) {
  if (df < 1) throw ContractError("chi_square_sf: df must be >= 1");
  if (std::isnan(w)) throw ContractError("chi_square_sf: w is NaN");
  if (w <= 0) return 1.0;
  if (std::isinf(w)) return 0.0;
  return Eigen::numext::igammac(0.5 * df, 0.5 * w);
}

TestResult lrt(TestProblem problem, double l0, double l1, int s) {
  TestResult r;
  r.l0 = l0;
  r.l1 = l1;
  const double raw = -2.0 * (l0 - l1);
  r.clipped = l1 < l0;
  r.statistic = std::max(0.0, raw);
  switch (problem) {
    case TestProblem::EqualShapes:
    case TestProblem::Exponentiality: r.reference = {Reference::Kind::ChiSq, 1}; break;
    case TestProblem::CovariateSignificance:
      if (s < 1) throw ContractError("covariate significance test needs at least one covariate");
      r.reference = {Reference::Kind::ChiSq, s};
      break;
    case TestProblem::CurePresence: r.reference = {Reference::Kind::HalfHalfChiSq1, 1}; break;
  }
  if (r.reference.kind == Reference::Kind::HalfHalfChiSq1)
    r.p_value = r.statistic > 0 ? 0.5 * chi_square_sf(r.statistic, 1) : 1.0;
  else
    r.p_value = chi_square_sf(r.statistic, r.reference.df);
  return r;
}

EmConfig restricted_config(TestProblem problem, const EmConfig& base) {
  EmConfig c = base;
  c.init_theta.reset();
  c.init_beta.reset();
  switch (problem) {
    case TestProblem::EqualShapes: c.theta_constraint = ThetaConstraint::EqualShapes; break;
    case TestProblem::Exponentiality: c.theta_constraint = ThetaConstraint::UnitShapes; break;
    case TestProblem::CovariateSignificance: c.cure_mode = CureMode::Constant; break;
    case TestProblem::CurePresence: c.cure_mode = CureMode::Absent; break;
  }
  return c;
}

EmConfig unrestricted_config(TestProblem problem, const EmConfig& base) {
  EmConfig c = base;
  c.init_theta.reset();
  c.init_beta.reset();
  switch (problem) {
    case TestProblem::EqualShapes: c.theta_constraint = ThetaConstraint::Free; break;
    case TestProblem::Exponentiality: c.theta_constraint = ThetaConstraint::EqualShapes; break;
    case TestProblem::CovariateSignificance: c.cure_mode = CureMode::Logistic; break;
    case TestProblem::CurePresence: c.cure_mode = CureMode::Constant; break;
  }
  return c;
}

namespace {

Eigen::Index covariate_count(std::span<const SubjectRecord> records) {
  return records.empty() ? 0 : records.front().z.size() - 1;
}

void check_applicable(TestProblem problem, std::span<const SubjectRecord> records) {
  if (problem == TestProblem::CovariateSignificance && covariate_count(records) < 1)
    throw ContractError("covariate significance test needs at least one covariate column");
}

// Derivative of the constant-cure log-likelihood in p at p = 0, with the
// hazard held at the p = 0 estimate. By the envelope argument this is the
// slope of the profile likelihood at the boundary.
double cure_score_at_zero(const FitResult& null_fit, std::span<const SubjectRecord> records) {
  const auto model = null_fit.model();
  double score = 0;
  for (const auto& r : records) {
    const double t = r.time / null_fit.time_scale;
    if (r.event) score -= 1.0;
    else score += std::expm1(model.cum_hazard(t));  // (1 - S0) / S0
  }
  return score;
}

}  // namespace

FitResult fit_restricted(TestProblem problem, std::span<const SubjectRecord> records,
                         const StressScheduled& schedule, FamilyKind kind, const EmConfig& config) {
  check_applicable(problem, records);
  return em_fit(records, schedule, kind, restricted_config(problem, config));
}

TestOutcome run_test(TestProblem problem, std::span<const SubjectRecord> records, const StressScheduled& schedule,
                     FamilyKind kind, const EmConfig& config) {
  check_applicable(problem, records);
  TestOutcome out;
  out.null_fit = em_fit(records, schedule, kind, restricted_config(problem, config));

  if (problem == TestProblem::CurePresence && cure_score_at_zero(out.null_fit, records) <= 0) {
    // The likelihood decreases into p > 0: the constrained maximum sits on the boundary.
    out.boundary = true;
    out.alternative_fit = out.null_fit;
  } else {
    EmConfig alt = unrestricted_config(problem, config);
    out.alternative_fit = em_fit(records, schedule, kind, alt);
    if (out.alternative_fit.mll < out.null_fit.mll) {
      // The null estimate is feasible for the alternative; restart from it.
      alt.init_theta = out.null_fit.theta;
      if (problem == TestProblem::CovariateSignificance) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(covariate_count(records) + 1);
        b(0) = out.null_fit.cure.beta(0);
        alt.init_beta = b;
      } else if (problem == TestProblem::CurePresence) {
        alt.init_beta = Eigen::VectorXd::Constant(1, -7.0);
      } else if (out.null_fit.cure.beta.size() > 0 && std::isfinite(out.null_fit.cure.beta(0))) {
        alt.init_beta = out.null_fit.cure.beta;
      }
      auto refit = em_fit(records, schedule, kind, alt);
      if (refit.mll > out.alternative_fit.mll) out.alternative_fit = std::move(refit);
    }
  }
  out.result = lrt(problem, out.null_fit.mll, out.alternative_fit.mll, static_cast<int>(covariate_count(records)));
  return out;
}

}  // namespace crm
