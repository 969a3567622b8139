#pragma once

// Likelihood-ratio tests for nested cumulative-risk cure models.

#include <string_view>

#include "crm/likelihood.hpp"

namespace crm {

enum class TestProblem {
  EqualShapes = 1,            // alpha1 = alpha2
  Exponentiality = 2,         // alpha1 = alpha2 = 1 against alpha1 = alpha2
  CovariateSignificance = 3,  // beta1 = ... = beta_s = 0
  CurePresence = 4,           // p = 0 against constant p > 0
};

TestProblem parse_problem(int number);
std::string_view describe(TestProblem problem);

struct Reference {
  enum class Kind { ChiSq, HalfHalfChiSq1 };
  Kind kind = Kind::ChiSq;
  int df = 1;
};

struct TestResult {
  double statistic = 0;  // -2 (l0 - l1), clipped at 0
  Reference reference;
  double p_value = 1;
  double l0 = 0;
  double l1 = 0;
  bool clipped = false;  // l1 < l0 on input
};

/// Upper tail of the chi-square distribution with df degrees of freedom.
double chi_square_sf(double w, int df);

/// Statistic and p-value from the null (l0) and alternative (l1) maximized log-likelihoods.
TestResult lrt(TestProblem problem, double l0, double l1, int s = 1);

/// EM configuration of the null model of a problem.
EmConfig restricted_config(TestProblem problem, const EmConfig& base);
/// EM configuration of the alternative model of a problem.
EmConfig unrestricted_config(TestProblem problem, const EmConfig& base);

FitResult fit_restricted(TestProblem problem, std::span<const SubjectRecord> records,
                         const StressScheduled& schedule, FamilyKind kind, const EmConfig& config = {});

struct TestOutcome {
  TestResult result;
  FitResult null_fit;
  FitResult alternative_fit;
  bool boundary = false;  // cure-presence score at p = 0 was non-positive
};

/// Fits both models and evaluates the test. The alternative is refitted from
/// the null estimate if EM lands below the null likelihood.
TestOutcome run_test(TestProblem problem, std::span<const SubjectRecord> records, const StressScheduled& schedule,
                     FamilyKind kind, const EmConfig& config = {});

}  // namespace crm
