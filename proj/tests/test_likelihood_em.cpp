#include <gtest/gtest.h>

#include <random>

#include "crm/likelihood.hpp"
#include "crm/simulation.hpp"
#include "oracles.hpp"

using namespace crm;

namespace {

SubjectRecord rec(double t, bool event) { return {t, event, Eigen::VectorXd::Ones(1)}; }

SubjectRecord rec(double t, bool event, double z1) { return {t, event, Eigen::Vector2d(1, z1)}; }

// Direct summation from model primitives.
double naive_loglik(const CrmModeld& m, const CureModel& cure, const std::vector<SubjectRecord>& data) {
  double ll = 0;
  for (const auto& r : data) {
    const double p = logistic_p(cure, r.z);
    if (r.event) ll += std::log(1 - p) + std::log(hazard(m, r.time)) + std::log(survival(m, r.time));
    else ll += std::log(p + (1 - p) * survival(m, r.time));
  }
  return ll;
}

SimConfig no_covariate_config(std::size_t n, double p) {
  SimConfig c;
  c.theta = {{2.6, 0.22}, {1.8, 1.14}};
  c.beta = Eigen::VectorXd::Constant(1, std::log(p / (1 - p)));
  c.n = n;
  c.censor_fraction = 0.3;
  return c;
}

}  // namespace

TEST(Partition, BoundaryRule) {
  const std::vector<SubjectRecord> d{rec(100, true), rec(240, true), rec(300, true),
                                     rec(350, true), rec(400, true), rec(420, false)};
  const auto p = partition(d, {240, 350, std::nullopt});
  EXPECT_EQ(p.first, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(p.bridge, (std::vector<std::size_t>{2}));
  EXPECT_EQ(p.second, (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(p.censored, (std::vector<std::size_t>{5}));
}

TEST(Partition, AllCensoredAndThreeSegments) {
  std::vector<SubjectRecord> d;
  for (int i = 0; i < 5; ++i) d.push_back(rec(10 + i, false));
  auto p = partition(d, {240, 350, std::nullopt});
  EXPECT_EQ(p.events(), 0u);
  EXPECT_EQ(p.n4(), 5u);

  d.clear();
  for (int i = 0; i < 7; ++i) d.push_back(rec(100 + 10 * i, true));
  for (int i = 0; i < 24; ++i) d.push_back(rec(250 + 10 * i, true));
  for (int i = 0; i < 9; ++i) d.push_back(rec(480, false));
  p = partition(d, {240, 350, std::nullopt});
  EXPECT_EQ(p.total(), 40u);
  EXPECT_EQ(p.events(), 31u);
  EXPECT_EQ(p.n1(), 7u);
  EXPECT_EQ(p.n2() + p.n3(), 24u);
  EXPECT_EQ(p.n4(), 9u);
}

TEST(LogLikelihood, NoCensoringLeavesOnlyEventTerms) {
  const FamilyParamsd th{{1.5, 0.6}, {1.2, 1.1}};
  const StressScheduled s{1, 1.4, std::nullopt};
  const CrmModeld m(FamilyKind::Weibull, th, s);
  const std::vector<SubjectRecord> d{rec(0.4, true), rec(1.2, true), rec(2.0, true)};
  const auto cure = CureModel::constant(0.0);
  double expect = 0;
  for (const auto& r : d) expect += std::log(density(m, r.time));
  EXPECT_NEAR(log_likelihood(FamilyKind::Weibull, th, cure, d, s), expect, 1e-12);
}

TEST(LogLikelihood, SingleBridgeEvent) {
  const FamilyParamsd th{{2, 0.5}, {1, 3}};
  const StressScheduled s{1, 2, std::nullopt};
  const CrmModeld m(FamilyKind::Weibull, th, s);
  const double t = 1.5;
  EXPECT_NEAR(log_likelihood(FamilyKind::Weibull, th, CureModel::constant(0), std::vector{rec(t, true)}, s),
              std::log(-1 + 2 * t) - m.cum_hazard(t), 1e-14);
}

TEST(LogLikelihood, MatchesDirectSummation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 3.0), z(-1, 1);
  for (auto kind : {FamilyKind::Weibull, FamilyKind::LinearFailureRate, FamilyKind::GeneralizedExponential}) {
    const FamilyParamsd th{{1.3, 0.7}, {0.8, 1.9}};
    const StressScheduled s{1, 1.5, std::nullopt};
    const CrmModeld m(kind, th, s);
    CureModel cure;
    cure.beta = Eigen::Vector2d(-0.3, 1.1);
    std::vector<SubjectRecord> d;
    for (int i = 0; i < 6; ++i) d.push_back(rec(u(rng), i % 3 != 0, z(rng)));
    EXPECT_NEAR(log_likelihood(kind, th, cure, d, s), naive_loglik(m, cure, d), 1e-12);
  }
}

TEST(EStep, Formulas) {
  EXPECT_DOUBLE_EQ(e_step_weights(0.3, 1.0).cured, 0.3);
  EXPECT_NEAR(e_step_weights(0.3, 0.5).cured, 6.0 / 13.0, 1e-15);
  EXPECT_NEAR(e_step_weights(0.3, 1e-300).cured, 1.0, 1e-12);
  const auto w = e_step_weights(0.3, 0.5);
  EXPECT_NEAR(w.cured + w.susceptible, 1.0, 1e-15);
}

TEST(PseudoLoglik, EqualsObservedWithoutCensoring) {
  const FamilyParamsd th{{1.5, 0.6}, {1.2, 1.1}}, th_k{{1.1, 0.9}, {2.0, 0.5}};
  const StressScheduled s{1, 1.4, std::nullopt};
  const std::vector<SubjectRecord> d{rec(0.4, true, 0.2), rec(1.2, true, -0.5), rec(2.0, true, 0.9)};
  CureModel cure, cure_k;
  cure.beta = Eigen::Vector2d(-1.0, 0.5);
  cure_k.beta = Eigen::Vector2d(0.4, -0.2);
  const auto q = pseudo_loglik(FamilyKind::Weibull, th, cure, th_k, cure_k, d, s);
  EXPECT_NEAR(q.total(), log_likelihood(FamilyKind::Weibull, th, cure, d, s), 1e-12);
}

TEST(PseudoLoglik, ZeroSusceptibleWeightDropsCensoredHazard) {
  // p_k -> 1 makes w2 = 0 for every censored record: g2 only sees events
  const FamilyParamsd th{{1.5, 0.6}, {1.2, 1.1}};
  const StressScheduled s{1, 1.4, std::nullopt};
  const std::vector<SubjectRecord> d{rec(0.4, true), rec(1.2, false), rec(2.0, true), rec(2.5, false)};
  const auto q = pseudo_loglik(FamilyKind::Weibull, th, CureModel::constant(0.4), th, CureModel::constant(1.0), d, s);
  const CrmModeld m(FamilyKind::Weibull, th, s);
  const double g3 = std::log(density(m, 0.4)) + std::log(density(m, 2.0));
  EXPECT_NEAR(q.hazard_part, g3, 1e-12);
}

TEST(MStepP, ClosedForm) {
  EXPECT_DOUBLE_EQ(m_step_p_closed_form(std::vector<double>(9, 1.0), 40), 0.225);
  EXPECT_DOUBLE_EQ(m_step_p_closed_form(std::vector<double>(9, 0.0), 40), 0.0);
}

TEST(MStepP, MatchesGoldenSection) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t n = 30;
  std::vector<double> w(12);
  for (auto& x : w) x = u(rng);
  // g1(p) = sum_censored [w1 ln p + (1 - w1) ln(1 - p)] + m ln(1 - p)
  const double m = static_cast<double>(n - w.size());
  const auto g1 = [&](double p) {
    double v = m * std::log(1 - p);
    for (double x : w) v += x * std::log(p) + (1 - x) * std::log(1 - p);
    return v;
  };
  EXPECT_NEAR(m_step_p_closed_form(w, n), oracle::golden_section_max(g1, 1e-9, 1 - 1e-9), 1e-6);
}

TEST(MStepBeta, MatchesGridSearch) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 60;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1;
    x(i, 1) = 2 * u(rng) - 1;
    y(i) = i % 4 == 0 ? 0.0 : u(rng) * (x(i, 1) > 0 ? 0.9 : 0.4);
  }
  const auto g1 = [&](const Eigen::Vector2d& b) {
    double v = 0;
    for (int i = 0; i < n; ++i) {
      const double eta = b(0) + b(1) * x(i, 1);
      v += y(i) * eta - std::log1p(std::exp(eta));
    }
    return v;
  };
  const Eigen::VectorXd b = m_step_beta(x, y, Eigen::Vector2d::Zero());
  const Eigen::Vector2d ref = oracle::grid_refine_max(g1, Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5));
  EXPECT_NEAR(b(0), ref(0), 1e-4);
  EXPECT_NEAR(b(1), ref(1), 1e-4);
}

TEST(MStepBeta, SymmetricDataGivesZeroSlope) {
  Eigen::MatrixXd x(8, 2);
  Eigen::VectorXd y(8);
  const double zs[] = {0.3, 1.2, 0.7, 2.0};
  const double ws[] = {0.2, 0.6, 0.1, 0.9};
  for (int i = 0; i < 4; ++i) {
    x.row(2 * i) << 1, zs[i];
    x.row(2 * i + 1) << 1, -zs[i];
    y(2 * i) = y(2 * i + 1) = ws[i];
  }
  const Eigen::VectorXd b = m_step_beta(x, y, Eigen::Vector2d(0.1, 0.5));
  EXPECT_NEAR(b(1), 0.0, 1e-8);
}

TEST(MStepBeta, NoCuredMassHitsBound) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 2);
  const Eigen::VectorXd b = m_step_beta(x.leftCols(1), Eigen::VectorXd::Zero(10), Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(b(0), -30.0, 1e-12);
  EXPECT_LT(logistic(b(0)), 1e-12);
}

TEST(MStepTheta, ExponentialMleInFirstSegment) {
  // unit shapes, all events before tau1 and no censoring: lambda1 = n1 / sum t
  const std::vector<SubjectRecord> d{rec(0.2, true), rec(0.5, true), rec(0.9, true), rec(0.35, true)};
  EmConfig cfg;
  cfg.theta_constraint = ThetaConstraint::UnitShapes;
  const auto th = m_step_theta(FamilyKind::Weibull, d, std::vector<double>{}, {1, 1.5, std::nullopt},
                               {{1, 1}, {1, 1}}, cfg);
  EXPECT_NEAR(th.seg1.lambda, 4 / (0.2 + 0.5 + 0.9 + 0.35), 1e-6);
  EXPECT_EQ(th.seg1.alpha, 1.0);
  EXPECT_EQ(th.seg2.alpha, 1.0);
}

TEST(EmFit, TraceIsNondecreasing) {
  for (std::size_t r = 0; r < 10; ++r) {
    auto cfg = SimConfig::replication_study();
    cfg.n = 120;
    const auto data = simulate_dataset(cfg, r);
    EmConfig em;
    em.compute_se = false;
    em.link_scaling = cfg.cure_model().scaling;
    const auto fit = em_fit(data.records, cfg.schedule(), FamilyKind::Weibull, em);
    for (std::size_t k = 1; k < fit.trace.size(); ++k) EXPECT_GE(fit.trace[k], fit.trace[k - 1] - 1e-10);
    EXPECT_NEAR(fit.trace.back(), fit.mll, 1e-12);
  }
}

TEST(EmFit, ReportedMllIsTheObservedLikelihood) {
  const auto cfg = no_covariate_config(150, 0.2);
  const auto data = simulate_dataset(cfg, 0);
  const auto fit = em_fit(data.records, cfg.schedule(), FamilyKind::Weibull);
  ASSERT_TRUE(fit.p.has_value());
  const auto theta_in = time_rescaled(FamilyKind::Weibull, fit.theta, fit.time_scale);
  EXPECT_NEAR(log_likelihood(FamilyKind::Weibull, theta_in, CureModel::constant(*fit.p), data.records, cfg.schedule()),
              fit.mll, 1e-8);
}

TEST(EmFit, NormalizationDoesNotChangeTheOptimum) {
  // on a time axis where the rate box is not binding both paths find the same maximum
  auto cfg = no_covariate_config(150, 0.2);
  cfg.tau1 = 2;
  cfg.delta = 2 * 100.0 / 240;
  const auto data = simulate_dataset(cfg, 4);
  const auto fit = em_fit(data.records, cfg.schedule(), FamilyKind::Weibull);
  EmConfig e;
  e.normalize = false;
  const auto raw = em_fit(data.records, cfg.schedule(), FamilyKind::Weibull, e);
  ASSERT_TRUE(fit.converged && raw.converged);
  EXPECT_NEAR(raw.theta.seg1.alpha, fit.theta.seg1.alpha, 1e-3);
  EXPECT_NEAR(raw.mll, fit.mll, 1e-4);
}

TEST(EmFit, NoCensoringGivesZeroCure) {
  auto cfg = no_covariate_config(100, 0.2);
  cfg.beta(0) = -1e3;
  cfg.censor_fraction.reset();
  cfg.study_end = 1e9;
  const auto data = simulate_dataset(cfg, 1);
  for (const auto& r : data.records) ASSERT_TRUE(r.event);
  const auto fit = em_fit(data.records, cfg.schedule(), FamilyKind::Weibull);
  EmConfig absent;
  absent.cure_mode = CureMode::Absent;
  const auto plain = em_fit(data.records, cfg.schedule(), FamilyKind::Weibull, absent);
  EXPECT_EQ(*fit.p, 0.0);
  EXPECT_NEAR(fit.mll, plain.mll, 1e-8);
  EXPECT_NEAR(fit.theta.seg1.alpha, plain.theta.seg1.alpha, 1e-6);
}

TEST(EmFit, EmptySegmentIsADataError) {
  const std::vector<SubjectRecord> d{rec(300, true), rec(400, true), rec(500, false)};
  EXPECT_THROW(em_fit(d, {240, 340, std::nullopt}, FamilyKind::Weibull), DataError);
}

TEST(EmFit, AverageEstimatesNearTruthWithoutCovariates) {
  // n = 200, 100 replications, p = 0.18
  auto cfg = no_covariate_config(200, 0.18);
  cfg.censor_fraction = 0.2;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
  int used = 0;
  EmConfig em;
  em.compute_se = false;
  for (std::size_t r = 0; r < 100; ++r) {
    const auto data = simulate_dataset(cfg, r);
    const auto fit = em_fit(data.records, cfg.schedule(), FamilyKind::Weibull, em);
    if (!fit.converged) continue;
    sum.head<4>() += fit.theta.packed();
    sum(4) += *fit.p;
    ++used;
  }
  const Eigen::VectorXd mean = sum / used;
  const double truth[] = {2.6, 1.8, 0.22, 1.14, 0.18};
  const char* names[] = {"alpha1", "alpha2", "lambda1", "lambda2", "p"};
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(mean(k), truth[k], 0.15) << names[k];
}

TEST(Profile, SinglePointIsKhamisHiggins) {
  const auto cfg = no_covariate_config(150, 0.2);
  const auto data = simulate_dataset(cfg, 2);
  const std::vector<double> grid{240};
  const auto prof = profile_fit_delta(data.records, FamilyKind::Weibull, 240, grid);
  const auto kh = em_fit(data.records, {240, 240, std::nullopt}, FamilyKind::Weibull);
  EXPECT_EQ(prof.best_tau2, 240);
  EXPECT_DOUBLE_EQ(prof.best().mll, kh.mll);
}

TEST(Profile, ThreadCountDoesNotChangeResult) {
  const auto cfg = no_covariate_config(150, 0.2);
  const auto data = simulate_dataset(cfg, 3);
  std::vector<double> grid;
  for (double g = 240; g <= 400; g += 20) grid.push_back(g);
  const auto a = profile_fit_delta(data.records, FamilyKind::Weibull, 240, grid, {}, 1);
  const auto b = profile_fit_delta(data.records, FamilyKind::Weibull, 240, grid, {}, 3);
  EXPECT_EQ(a.best_tau2, b.best_tau2);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(a.curve[i].fit->mll, b.curve[i].fit->mll);
}

TEST(Profile, RejectsGridBeforeTau1) {
  const std::vector<SubjectRecord> d{rec(100, true), rec(400, true)};
  const std::vector<double> grid{200};
  EXPECT_THROW(profile_fit_delta(d, FamilyKind::Weibull, 240, grid), ContractError);
}
