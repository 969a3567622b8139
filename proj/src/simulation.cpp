#include "crm/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include <Eigen/Eigenvalues>

namespace crm {

namespace {

// Independent stream per (seed, replication, subject).
std::mt19937_64 subject_stream(std::uint64_t seed, std::size_t rep, std::size_t subject) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(subject), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

double open_uniform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = 0;
  do u = unif(rng);
  while (u <= 0.0);
  return u;
}

// Gauss-Legendre nodes/weights on [0, 1] by Golub-Welsch.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre_unit(int m) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(m, m);
  for (int k = 1; k < m; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  Eigen::VectorXd nodes = (eig.eigenvalues().array() + 1.0) / 2.0;
  Eigen::VectorXd weights = eig.eigenvectors().row(0).transpose().array().square();  // sums to 1
  return {nodes, weights};
}

}  // namespace

CrmModeld SimConfig::susceptible_model() const {
  return CrmModeld(kind, theta, StressScheduled{1.0, (tau1 + delta) / tau1, std::nullopt});
}

CureModel SimConfig::cure_model() const {
  CureModel c;
  c.beta = beta;
  const auto s = static_cast<Eigen::Index>(covariates.size());
  if (s > 0) {
    Eigen::VectorXd lo(s), hi(s);
    for (Eigen::Index j = 0; j < s; ++j) {
      lo(j) = covariates[static_cast<std::size_t>(j)].lo;
      hi(j) = covariates[static_cast<std::size_t>(j)].hi;
      c.covariate_names.push_back(covariates[static_cast<std::size_t>(j)].name);
    }
    c.scaling = CovariateScaling::unit_range(lo, hi);
  }
  return c;
}

void SimConfig::validate() const {
  if (n < 1 || reps < 1) throw ContractError("simulation: n and reps must be >= 1");
  if (beta.size() != static_cast<Eigen::Index>(covariates.size()) + 1)
    throw ContractError("simulation: beta must have one entry per covariate plus the intercept");
  for (const auto& c : covariates)
    if (!(c.hi > c.lo)) throw ContractError("simulation: empty range for covariate " + c.name);
  if (!(tau1 > 0) || !(delta >= 0)) throw ContractError("simulation: tau1 > 0 and delta >= 0 required");
  if (!is_valid(kind, theta)) throw ContractError("simulation: invalid hazard parameters");
  if (!study_end && !censor_fraction) throw ContractError("simulation: need censor_fraction or study_end");
  if (profile_delta && !(grid_step > 0)) throw ContractError("simulation: grid step must be positive");
}

SimConfig SimConfig::replication_study() {
  SimConfig c;
  c.kind = FamilyKind::Weibull;
  c.theta = {{2.6, 0.22}, {1.8, 1.14}};
  c.beta = Eigen::Vector4d(-1.80, -4.0, 3.7, -0.20);
  c.covariates = {{"BF", 5.9, 29.9}, {"VO2", 1.9, 6.0}, {"Age", 20, 43}};
  c.tau1 = 240;
  c.delta = 100;
  c.n = 200;
  c.censor_fraction = 0.2;
  return c;
}

double sample_susceptible_time(const CrmModeld& model, double u) {
  if (!(u > 0 && u < 1)) throw ContractError("sample_susceptible_time: u must lie in (0, 1)");
  return model.cum_hazard_inverse(-std::log1p(-u));
}

double expected_cure_probability(const SimConfig& config) {
  const auto s = static_cast<int>(config.covariates.size());
  if (s == 0) return logistic(config.beta(0));
  // Tensor Gauss-Legendre over the unit cube of link covariates.
  const int m = std::clamp(static_cast<int>(std::floor(std::pow(2e5, 1.0 / s))), 4, 32);
  const auto [nodes, weights] = gauss_legendre_unit(m);
  std::vector<int> idx(static_cast<std::size_t>(s), 0);
  double total = 0;
  while (true) {
    double eta = config.beta(0);
    double w = 1;
    for (int j = 0; j < s; ++j) {
      eta += config.beta(j + 1) * nodes(idx[static_cast<std::size_t>(j)]);
      w *= weights(idx[static_cast<std::size_t>(j)]);
    }
    total += w * logistic(eta);
    int j = 0;
    while (j < s && ++idx[static_cast<std::size_t>(j)] == m) idx[static_cast<std::size_t>(j++)] = 0;
    if (j == s) break;
  }
  return total;
}

double calibrate_study_end(const SimConfig& config) {
  config.validate();
  if (config.study_end) return *config.study_end;
  const double target = *config.censor_fraction;
  const double cured = expected_cure_probability(config);
  const auto model = config.susceptible_model();
  const double tau2 = model.schedule().tau2;
  const double max_fraction = cured + (1 - cured) * std::exp(-model.cum_hazard(tau2));
  if (!(target > cured) || !(target < max_fraction)) {
    throw DataError("calibration failure: censor fraction " + std::to_string(target) +
                    " unreachable with study end after tau2; achievable range (" + std::to_string(cured) + ", " +
                    std::to_string(max_fraction) + ")");
  }
  // cured + (1 - cured) S0(T) = target
  const double s0 = (target - cured) / (1 - cured);
  return model.cum_hazard_inverse(-std::log(s0)) * config.tau1;
}

Dataset simulate_dataset(const SimConfig& config, std::size_t rep_index, double study_end) {
  config.validate();
  const auto model = config.susceptible_model();
  const auto cure = config.cure_model();
  const auto s = static_cast<Eigen::Index>(config.covariates.size());

  Dataset data;
  data.covariate_names = cure.covariate_names;
  data.records.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    auto rng = subject_stream(config.seed, rep_index, i);
    SubjectRecord rec;
    rec.z = Eigen::VectorXd::Ones(s + 1);
    for (Eigen::Index j = 0; j < s; ++j) {
      const auto& spec = config.covariates[static_cast<std::size_t>(j)];
      rec.z(j + 1) = spec.lo + (spec.hi - spec.lo) * open_uniform(rng);
    }
    const bool cured = open_uniform(rng) < logistic_p(cure, rec.z);
    const double t = sample_susceptible_time(model, open_uniform(rng)) * config.tau1;
    if (cured || t > study_end) {
      rec.time = study_end;
      rec.event = false;
    } else {
      rec.time = t;
      rec.event = true;
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

Dataset simulate_dataset(const SimConfig& config, std::size_t rep_index) {
  return simulate_dataset(config, rep_index, calibrate_study_end(config));
}

namespace {

struct Replicate {
  bool ok = false;
  bool converged = false;
  Eigen::VectorXd estimate;
  double censor_fraction = 0;
  double delta_hat = 0;
  std::string error;
};

}  // namespace

StudySummary run_study(const SimConfig& config) {
  config.validate();
  const double study_end = calibrate_study_end(config);
  const auto cure = config.cure_model();
  const auto s = static_cast<Eigen::Index>(config.covariates.size());

  std::vector<std::string> names{"alpha1", "alpha2", "lambda1", "lambda2"};
  Eigen::VectorXd truth(4 + (s > 0 ? s + 1 : 1));
  truth.head<4>() = config.theta.packed();
  if (s > 0) {
    truth.tail(s + 1) = config.beta;
    for (Eigen::Index j = 0; j <= s; ++j) names.push_back("beta" + std::to_string(j));
  } else {
    truth(4) = logistic(config.beta(0));
    names.push_back("p");
  }

  EmConfig em = config.em;
  em.link_scaling = cure.scaling;
  em.normalize = true;
  em.compute_se = false;

  std::vector<Replicate> reps(config.reps);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t r = next++; r < config.reps; r = next++) {
      auto& out = reps[r];
      try {
        const Dataset data = simulate_dataset(config, r, study_end);
        std::size_t censored = 0;
        for (const auto& rec : data.records) censored += rec.event ? 0 : 1;
        out.censor_fraction = static_cast<double>(censored) / static_cast<double>(data.records.size());
        FitResult fit;
        if (config.profile_delta) {
          std::vector<double> grid;
          for (double g = config.tau1; g <= config.tau1 + config.grid_span + 1e-9; g += config.grid_step)
            grid.push_back(g);
          const auto prof = profile_fit_delta(data.records, config.kind, config.tau1, grid, em, 1);
          fit = prof.best();
          out.delta_hat = prof.best_tau2 - config.tau1;
        } else {
          fit = em_fit(data.records, config.schedule(), config.kind, em);
          out.delta_hat = config.delta;
        }
        out.estimate.resize(truth.size());
        out.estimate.head<4>() = fit.theta.packed();
        if (s > 0) out.estimate.tail(s + 1) = fit.cure.beta;
        else out.estimate(4) = fit.p.value_or(0.0);
        out.converged = fit.converged;
        out.ok = true;
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(config.reps)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  // Reduce in replication order so the summary does not depend on scheduling.
  StudySummary summary;
  summary.n = config.n;
  summary.reps = config.reps;
  summary.study_end = study_end;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(truth.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(truth.size());
  double censor_sum = 0;
  std::size_t simulated = 0;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++summary.failures;
      if (summary.errors.size() < 5) summary.errors.push_back(r.error);
      continue;
    }
    censor_sum += r.censor_fraction;
    ++simulated;
    if (!r.converged) {
      ++summary.nonconverged;
      continue;
    }
    ++summary.used;
    sum += r.estimate;
    sq += (r.estimate - truth).cwiseAbs2();
    if (config.profile_delta) summary.delta_hat.push_back(r.delta_hat);
  }
  summary.mean_censor_fraction = simulated ? censor_sum / static_cast<double>(simulated) : 0.0;
  for (Eigen::Index k = 0; k < truth.size(); ++k) {
    ParameterSummary p{names[static_cast<std::size_t>(k)], truth(k), 0, 0};
    if (summary.used > 0) {
      p.mean = sum(k) / static_cast<double>(summary.used);
      p.rmse = std::sqrt(sq(k) / static_cast<double>(summary.used));
    }
    summary.parameters.push_back(p);
  }
  return summary;
}

}  // namespace crm
