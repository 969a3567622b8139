#include <gtest/gtest.h>

#include <random>

#include "crm/simulation.hpp"
#include "oracles.hpp"

using namespace crm;

TEST(Sampler, FirstSegmentInversion) {
  const CrmModeld m(FamilyKind::Weibull, {{2.6, 0.22}, {1.8, 1.14}}, {1, 1 + 100.0 / 240, std::nullopt});
  const double h1 = m.cum_hazard(1.0);
  const double u = -std::expm1(-0.5 * h1);  // E = h1 / 2
  const double t = sample_susceptible_time(m, u);
  EXPECT_LT(t, 1.0);
  EXPECT_NEAR(base_cum_hazard(FamilyKind::Weibull, SegmentParamsd{2.6, 0.22}, t), 0.5 * h1, 1e-10);
}

TEST(Sampler, RoundTripOnAllSegments) {
  for (auto kind : {FamilyKind::Weibull, FamilyKind::LinearFailureRate, FamilyKind::GeneralizedExponential}) {
    const CrmModeld m(kind, {{1.4, 0.5}, {0.7, 1.8}}, {1, 1.5, std::nullopt});
    for (double u : {1e-9, 0.01, 0.3, 0.5, 0.8, 0.99, 1 - 1e-9}) {
      const double e = -std::log1p(-u);
      EXPECT_NEAR(m.cum_hazard(sample_susceptible_time(m, u)), e, 1e-9 * std::max(1.0, e)) << to_string(kind);
    }
  }
  const CrmModeld m(FamilyKind::Weibull, {{1, 1}, {1, 1}}, {1, 2, std::nullopt});
  EXPECT_THROW(sample_susceptible_time(m, 0.0), ContractError);
  EXPECT_THROW(sample_susceptible_time(m, 1.0), ContractError);
}

TEST(Sampler, MatchesCumulativeExposureSamplerAsLagVanishes) {
  const double l1 = 0.8, l2 = 2.5, tau = 1.0;
  const CrmModeld m(FamilyKind::Weibull, {{1, l1}, {1, l2}}, {tau, tau + 1e-9, std::nullopt});
  std::mt19937_64 a(101), b(202);
  std::uniform_real_distribution<double> unif(0, 1);
  std::vector<double> ours, cem;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = 0;
    while (u <= 0) u = unif(a);
    ours.push_back(sample_susceptible_time(m, u));
    cem.push_back(oracle::cem_exponential_sample(l1, l2, tau, b));
  }
  const auto [d, p] = oracle::two_sample_ks(ours, cem);
  EXPECT_GT(p, 0.01) << "D = " << d;
}

TEST(Simulate, DeterministicPerSeedAndSubject) {
  auto cfg = SimConfig::replication_study();
  cfg.n = 30;
  const auto a = simulate_dataset(cfg, 5);
  const auto b = simulate_dataset(cfg, 5);
  const auto c = simulate_dataset(cfg, 6);
  ASSERT_EQ(a.records.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(a.records[i].time, b.records[i].time);
    EXPECT_EQ(a.records[i].z, b.records[i].z);
  }
  EXPECT_NE(a.records[0].time, c.records[0].time);
  // growing n keeps the existing subjects
  cfg.n = 40;
  const auto d = simulate_dataset(cfg, 5);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(a.records[i].time, d.records[i].time);
}

TEST(Simulate, CovariatesWithinRanges) {
  const auto cfg = SimConfig::replication_study();
  const auto data = simulate_dataset(cfg, 0);
  for (const auto& r : data.records)
    for (std::size_t j = 0; j < cfg.covariates.size(); ++j) {
      EXPECT_GE(r.z(static_cast<Eigen::Index>(j) + 1), cfg.covariates[j].lo);
      EXPECT_LE(r.z(static_cast<Eigen::Index>(j) + 1), cfg.covariates[j].hi);
    }
}

TEST(Simulate, DegenerateCureExtremes) {
  SimConfig cfg;
  cfg.n = 50;
  cfg.censor_fraction.reset();
  cfg.study_end = 900;
  cfg.beta = Eigen::VectorXd::Constant(1, 1e3);
  for (const auto& r : simulate_dataset(cfg, 0).records) EXPECT_FALSE(r.event);
  cfg.beta(0) = -std::numeric_limits<double>::infinity();
  cfg.study_end = 1e12;
  for (const auto& r : simulate_dataset(cfg, 0).records) EXPECT_TRUE(r.event);
}

TEST(Calibration, ExpectedCureProbabilityByQuadrature) {
  const auto cfg = SimConfig::replication_study();
  // Monte Carlo reference
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  double acc = 0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) acc += logistic(cfg.beta(0) + cfg.beta(1) * u(rng) + cfg.beta(2) * u(rng) + cfg.beta(3) * u(rng));
  EXPECT_NEAR(expected_cure_probability(cfg), acc / n, 2e-3);
}

TEST(Calibration, RealizedCensoringNearTarget) {
  const auto cfg = SimConfig::replication_study();
  const double end = calibrate_study_end(cfg);
  double total = 0;
  for (std::size_t r = 0; r < 100; ++r) {
    std::size_t c = 0;
    for (const auto& rec : simulate_dataset(cfg, r, end).records) c += rec.event ? 0 : 1;
    total += static_cast<double>(c) / static_cast<double>(cfg.n);
  }
  EXPECT_NEAR(total / 100, 0.20, 0.03);
}

TEST(Calibration, UnreachableTargetIsADataError) {
  auto cfg = SimConfig::replication_study();
  cfg.censor_fraction = 0.05;  // below the expected cured share
  EXPECT_THROW(calibrate_study_end(cfg), DataError);
}

TEST(Study, SingleReplicationEqualsTheFit) {
  auto cfg = SimConfig::replication_study();
  cfg.n = 40;
  cfg.reps = 1;
  const auto summary = run_study(cfg);
  const auto data = simulate_dataset(cfg, 0);
  EmConfig em;
  em.compute_se = false;
  em.link_scaling = cfg.cure_model().scaling;
  try {
    const auto fit = em_fit(data.records, cfg.schedule(), cfg.kind, em);
    ASSERT_EQ(summary.used, fit.converged ? 1u : 0u);
    if (!fit.converged) return;
    const Eigen::Vector4d th = fit.theta.packed();
    for (int k = 0; k < 4; ++k) {
      EXPECT_DOUBLE_EQ(summary.parameters[static_cast<std::size_t>(k)].mean, th(k));
      EXPECT_NEAR(summary.parameters[static_cast<std::size_t>(k)].rmse,
                  std::abs(th(k) - summary.parameters[static_cast<std::size_t>(k)].truth), 1e-12);
    }
  } catch (const DataError&) {
    EXPECT_EQ(summary.failures, 1u);
  }
}

TEST(Study, ThreadCountDoesNotChangeSummary) {
  auto cfg = SimConfig::replication_study();
  cfg.n = 60;
  cfg.reps = 6;
  const auto a = run_study(cfg);
  cfg.threads = 3;
  const auto b = run_study(cfg);
  ASSERT_EQ(a.parameters.size(), b.parameters.size());
  for (std::size_t k = 0; k < a.parameters.size(); ++k) {
    EXPECT_EQ(a.parameters[k].mean, b.parameters[k].mean);
    EXPECT_EQ(a.parameters[k].rmse, b.parameters[k].rmse);
  }
}

TEST(Config, Validation) {
  auto cfg = SimConfig::replication_study();
  cfg.beta = Eigen::Vector2d(1, 2);
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = SimConfig::replication_study();
  cfg.covariates[0].hi = cfg.covariates[0].lo;
  EXPECT_THROW(cfg.validate(), ContractError);
}
