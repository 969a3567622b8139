#include <gtest/gtest.h>

#include "crm/inference.hpp"
#include "crm/simulation.hpp"
#include "oracles.hpp"

using namespace crm;

TEST(ChiSquare, ClosedFormsAndNormalOracle) {
  EXPECT_EQ(chi_square_sf(0.0, 3), 1.0);
  EXPECT_NEAR(chi_square_sf(2 * std::log(2.0), 2), 0.5, 1e-15);
  EXPECT_NEAR(chi_square_sf(3.841459, 1), 0.05, 1e-4);
  for (double w : {0.01, 0.5, 2.0, 7.3, 20.0, 60.0})
    EXPECT_NEAR(chi_square_sf(w, 1), oracle::normal_two_tail(w), 1e-12) << w;
  // df = 2k: Poisson tail e^{-w/2} sum_{j<k} (w/2)^j / j!
  for (int k = 1; k <= 10; ++k)
    for (double w : {0.3, 4.0, 19.0, 80.0}) {
      double term = 1, sum = 0;
      for (int j = 0; j < k; ++j) {
        sum += term;
        term *= (w / 2) / (j + 1);
      }
      EXPECT_NEAR(chi_square_sf(w, 2 * k), std::exp(-w / 2) * sum, 1e-10);
    }
}

TEST(ChiSquare, InvalidArguments) { EXPECT_THROW(chi_square_sf(1.0, 0), ContractError); }

TEST(Lrt, CovariateStatisticAndPValue) {
  const auto r = lrt(TestProblem::CovariateSignificance, -38.7093, -31.3009, 3);
  EXPECT_NEAR(r.statistic, 14.8168, 1e-10);
  EXPECT_EQ(r.reference.df, 3);
  EXPECT_NEAR(r.p_value, 0.0020, 5e-5);
}

TEST(Lrt, ZeroStatisticAndMixture) {
  EXPECT_EQ(lrt(TestProblem::CovariateSignificance, -10, -10, 3).p_value, 1.0);
  EXPECT_EQ(lrt(TestProblem::CurePresence, -10, -10).p_value, 1.0);
  const auto r = lrt(TestProblem::CurePresence, -10, -10 + 3.841 / 2);
  EXPECT_EQ(r.reference.kind, Reference::Kind::HalfHalfChiSq1);
  EXPECT_NEAR(r.p_value, 0.025, 1e-4);
}

TEST(Lrt, NegativeStatisticIsClippedAndFlagged) {
  const auto r = lrt(TestProblem::EqualShapes, -10.0, -10.5);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_TRUE(r.clipped);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Lrt, PValueDecreasesInStatistic) {
  for (auto problem : {TestProblem::EqualShapes, TestProblem::CovariateSignificance, TestProblem::CurePresence}) {
    double last = 1.0;
    for (double w = 0.1; w < 60; w *= 1.3) {
      const double p = lrt(problem, -w / 2, 0.0, 3).p_value;
      EXPECT_LT(p, last);
      last = p;
    }
  }
}

TEST(Restricted, ConstraintShapes) {
  auto cfg = SimConfig::replication_study();
  cfg.n = 150;
  const auto data = simulate_dataset(cfg, 0);
  EmConfig em;
  em.link_scaling = cfg.cure_model().scaling;
  const auto eq = fit_restricted(TestProblem::EqualShapes, data.records, cfg.schedule(), FamilyKind::Weibull, em);
  EXPECT_EQ(eq.theta.seg1.alpha, eq.theta.seg2.alpha);
  const auto ex = fit_restricted(TestProblem::Exponentiality, data.records, cfg.schedule(), FamilyKind::Weibull, em);
  EXPECT_EQ(ex.theta.seg1.alpha, 1.0);
  EXPECT_EQ(ex.theta.seg2.alpha, 1.0);
  EXPECT_EQ(ex.se_names.size(), 2u + 4u);  // lambda1, lambda2 plus the cure coefficients
  const auto nc =
      fit_restricted(TestProblem::CovariateSignificance, data.records, cfg.schedule(), FamilyKind::Weibull, em);
  EXPECT_TRUE(nc.p.has_value());
  const auto nocure = fit_restricted(TestProblem::CurePresence, data.records, cfg.schedule(), FamilyKind::Weibull, em);
  EXPECT_EQ(*nocure.p, 0.0);
}

TEST(Restricted, CovariateTestNeedsCovariates) {
  SimConfig cfg;
  cfg.n = 60;
  const auto data = simulate_dataset(cfg, 0);
  EXPECT_THROW(fit_restricted(TestProblem::CovariateSignificance, data.records, cfg.schedule(), FamilyKind::Weibull),
               ContractError);
}

TEST(RunTest, NestingHoldsForEveryProblem) {
  auto cfg = SimConfig::replication_study();
  cfg.n = 150;
  EmConfig em;
  em.link_scaling = cfg.cure_model().scaling;
  em.compute_se = false;
  for (std::size_t rep = 0; rep < 3; ++rep) {
    const auto data = simulate_dataset(cfg, rep);
    for (int k = 1; k <= 4; ++k) {
      const auto out = run_test(parse_problem(k), data.records, cfg.schedule(), FamilyKind::Weibull, em);
      EXPECT_GE(out.alternative_fit.mll, out.null_fit.mll - 1e-8) << "problem " << k << " rep " << rep;
      EXPECT_GE(out.result.p_value, 0.0);
      EXPECT_LE(out.result.p_value, 1.0);
    }
  }
}

TEST(RunTest, CurePresenceNullHasSmallStatisticsMostly) {
  SimConfig cfg;
  cfg.beta = Eigen::VectorXd::Constant(1, -std::numeric_limits<double>::infinity());
  cfg.n = 200;
  cfg.censor_fraction = 0.2;
  EmConfig em;
  em.compute_se = false;
  int small = 0;
  const int reps = 60;
  for (int r = 0; r < reps; ++r) {
    const auto data = simulate_dataset(cfg, static_cast<std::size_t>(r));
    const auto out = run_test(TestProblem::CurePresence, data.records, cfg.schedule(), FamilyKind::Weibull, em);
    if (out.alternative_fit.mll - out.null_fit.mll < 2) ++small;
  }
  // a half/half chi-square(1) draw has -2 log LR < 4 with probability 0.977
  EXPECT_GE(small, static_cast<int>(0.75 * reps));
}

TEST(RunTest, EqualShapesRestrictedBetweenUnrestricted) {
  SimConfig cfg;
  cfg.theta = {{1.8, 0.22}, {1.8, 1.14}};
  cfg.n = 200;
  cfg.beta = Eigen::VectorXd::Constant(1, std::log(0.18 / 0.82));
  EmConfig em;
  em.compute_se = false;
  int between = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const auto data = simulate_dataset(cfg, static_cast<std::size_t>(r));
    const auto out = run_test(TestProblem::EqualShapes, data.records, cfg.schedule(), FamilyKind::Weibull, em);
    const double a = out.null_fit.theta.seg1.alpha;
    const double lo = std::min(out.alternative_fit.theta.seg1.alpha, out.alternative_fit.theta.seg2.alpha);
    const double hi = std::max(out.alternative_fit.theta.seg1.alpha, out.alternative_fit.theta.seg2.alpha);
    if (a >= lo - 1e-6 && a <= hi + 1e-6) ++between;
  }
  EXPECT_GE(between, static_cast<int>(0.9 * reps));
}
