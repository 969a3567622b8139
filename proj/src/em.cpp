#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <limits>
#include <thread>

#include <Eigen/Cholesky>

#include "crm/likelihood.hpp"
#include "likelihood_terms.hpp"

namespace crm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Hazard parameters <-> unconstrained log-space coordinates under an equality constraint.
struct ThetaMap {
  ThetaConstraint constraint;

  Eigen::Index dim() const {
    switch (constraint) {
      case ThetaConstraint::Free: return 4;
      case ThetaConstraint::EqualShapes: return 3;
      case ThetaConstraint::UnitShapes: return 2;
    }
    return 4;
  }

  Eigen::VectorXd to_free(const FamilyParamsd& t) const {
    const Eigen::Vector4d v = t.packed().array().log();
    switch (constraint) {
      case ThetaConstraint::Free: return v;
      case ThetaConstraint::EqualShapes: return Eigen::Vector3d(0.5 * (v(0) + v(1)), v(2), v(3));
      case ThetaConstraint::UnitShapes: return Eigen::Vector2d(v(2), v(3));
    }
    return v;
  }

  FamilyParamsd from_free(const Eigen::VectorXd& u) const {
    const Eigen::VectorXd e = u.array().exp();
    switch (constraint) {
      case ThetaConstraint::Free: return {{e(0), e(2)}, {e(1), e(3)}};
      case ThetaConstraint::EqualShapes: return {{e(0), e(1)}, {e(0), e(2)}};
      case ThetaConstraint::UnitShapes: return {{1.0, e(0)}, {1.0, e(1)}};
    }
    return {};
  }

  /// Natural-scale free parameters, used for standard errors.
  Eigen::VectorXd to_natural(const FamilyParamsd& t) const { return to_free(t).array().exp(); }
  FamilyParamsd from_natural(const Eigen::VectorXd& x) const { return from_free(x.array().log()); }

  std::vector<std::string> names() const {
    switch (constraint) {
      case ThetaConstraint::Free: return {"alpha1", "alpha2", "lambda1", "lambda2"};
      case ThetaConstraint::EqualShapes: return {"alpha", "lambda1", "lambda2"};
      case ThetaConstraint::UnitShapes: return {"lambda1", "lambda2"};
    }
    return {};
  }
};

struct HazardData {
  std::vector<double> event_times;
  std::vector<double> censored_times;
  std::vector<double> censored_weights;  // w2
};

double hazard_part(FamilyKind kind, const FamilyParamsd& theta, const StressScheduled& schedule,
                   const HazardData& data) {
  if (!is_valid(kind, theta)) return kNegInf;
  const auto model = CrmModeld::unchecked(kind, theta, schedule);
  double g = 0;
  for (double t : data.event_times) g += model.log_hazard(t) - model.cum_hazard(t);
  for (std::size_t i = 0; i < data.censored_times.size(); ++i)
    if (data.censored_weights[i] > 0) g -= data.censored_weights[i] * model.cum_hazard(data.censored_times[i]);
  return std::isnan(g) ? kNegInf : g;
}

optim::Result run_optimizer(InnerOptimizer which, const optim::Objective& f, const Eigen::VectorXd& x0,
                            const optim::Box& box) {
  optim::Options opts;
  opts.max_iter = 60;
  if (which == InnerOptimizer::NelderMead) return optim::maximize_nelder_mead(f, x0, box, opts);
  return optim::maximize_newton(f, x0, box, opts);
}

FamilyParamsd maximize_hazard_part(FamilyKind kind, const HazardData& data, const StressScheduled& schedule,
                                   const FamilyParamsd& init, const EmConfig& config) {
  const ThetaMap map{config.theta_constraint};
  const auto box = optim::Box::uniform(map.dim(), std::log(config.theta_lower), std::log(config.theta_upper));
  const optim::Objective f = [&](const Eigen::VectorXd& u) {
    return hazard_part(kind, map.from_free(u), schedule, data);
  };
  const auto res = run_optimizer(config.inner_optimizer, f, map.to_free(init), box);
  return map.from_free(res.x);
}

// Crude two-parameter fit of one segment family, ignoring the bridge.
SegmentParamsd fit_segment(FamilyKind kind, const std::function<double(const SegmentParamsd&)>& loglik,
                           double rate, const EmConfig& config) {
  SegmentParamsd start = kind == FamilyKind::LinearFailureRate ? SegmentParamsd{rate, 0.1 * rate}
                                                               : SegmentParamsd{1.0, rate};
  const auto box = optim::Box::uniform(2, std::log(config.theta_lower), std::log(config.theta_upper));
  const optim::Objective f = [&](const Eigen::VectorXd& u) {
    const SegmentParamsd p{std::exp(u(0)), std::exp(u(1))};
    const double v = loglik(p);
    return std::isnan(v) ? kNegInf : v;
  };
  const Eigen::Vector2d x0(std::log(start.alpha), std::log(start.lambda));
  const auto res = optim::maximize_newton(f, x0, box);
  if (!std::isfinite(res.value)) return start;
  return {std::exp(res.x(0)), std::exp(res.x(1))};
}

FamilyParamsd initial_theta(FamilyKind kind, std::span<const SubjectRecord> recs, const Partition& part,
                            const StressScheduled& schedule, const EmConfig& config) {
  const double tau1 = schedule.tau1;
  const double tau2 = schedule.tau2;

  double exposure1 = 0;
  for (const auto& r : recs) exposure1 += std::min(r.time, tau1);
  const auto seg1_loglik = [&](const SegmentParamsd& p) {
    double v = 0;
    for (auto i : part.first) v += detail::log_hazard(kind, p, recs[i].time) - detail::cum_hazard(kind, p, recs[i].time);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].event && recs[i].time <= tau1) continue;
      v -= detail::cum_hazard(kind, p, std::min(recs[i].time, tau1));
    }
    return v;
  };

  // Censored records after tau2 are mostly cured, which would bias a plain
  // fit toward a decreasing hazard; use the late events alone, truncated to
  // the observed window [tau2, t_max].
  double exposure2 = 0;
  double t_max = tau2;
  for (const auto& r : recs) t_max = std::max(t_max, r.time);
  for (auto i : part.second) exposure2 += recs[i].time - tau2;
  const auto seg2_loglik = [&](const SegmentParamsd& p) {
    const double base = detail::cum_hazard(kind, p, tau2);
    const double window = detail::cum_hazard(kind, p, t_max) - base;
    double v = 0;
    for (auto i : part.second)
      v += detail::log_hazard(kind, p, recs[i].time) - (detail::cum_hazard(kind, p, recs[i].time) - base);
    if (t_max > tau2) v -= static_cast<double>(part.n3()) * std::log(-std::expm1(-window));
    return v;
  };

  const double rate1 = static_cast<double>(part.n1()) / std::max(exposure1, 1e-12);
  const double rate2 = static_cast<double>(part.n3()) / std::max(exposure2, 1e-12);
  FamilyParamsd theta{fit_segment(kind, seg1_loglik, rate1, config), fit_segment(kind, seg2_loglik, rate2, config)};
  const ThetaMap map{config.theta_constraint};
  const double lo = std::log(config.theta_lower), hi = std::log(config.theta_upper);
  return map.from_free(map.to_free(theta).cwiseMax(lo).cwiseMin(hi));
}

double quantile7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Median/IQR conditioning of the link covariates for the Newton step.
struct Conditioning {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  static Conditioning from(const Eigen::MatrixXd& link) {
    const Eigen::Index s = link.cols() - 1;
    Conditioning c{Eigen::VectorXd::Zero(s), Eigen::VectorXd::Ones(s)};
    for (Eigen::Index j = 0; j < s; ++j) {
      std::vector<double> col(link.rows());
      for (Eigen::Index i = 0; i < link.rows(); ++i) col[i] = link(i, j + 1);
      c.center(j) = quantile7(col, 0.5);
      double iqr = quantile7(col, 0.75) - quantile7(col, 0.25);
      if (!(iqr > 0)) iqr = *std::max_element(col.begin(), col.end()) - *std::min_element(col.begin(), col.end());
      c.scale(j) = iqr > 0 ? iqr : 1.0;
    }
    return c;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& link) const {
    Eigen::MatrixXd out = link;
    for (Eigen::Index j = 0; j < center.size(); ++j)
      out.col(j + 1) = (link.col(j + 1).array() - center(j)) / scale(j);
    return out;
  }

  Eigen::VectorXd to_link(const Eigen::VectorXd& beta_cond) const {
    Eigen::VectorXd b = beta_cond;
    for (Eigen::Index j = 0; j < center.size(); ++j) {
      b(j + 1) = beta_cond(j + 1) / scale(j);
      b(0) -= b(j + 1) * center(j);
    }
    return b;
  }

  Eigen::VectorXd from_link(const Eigen::VectorXd& beta_link) const {
    Eigen::VectorXd b = beta_link;
    for (Eigen::Index j = 0; j < center.size(); ++j) {
      b(j + 1) = beta_link(j + 1) * scale(j);
      b(0) += beta_link(j + 1) * center(j);
    }
    return b;
  }
};

double observed_loglik(FamilyKind kind, const FamilyParamsd& theta, const StressScheduled& schedule,
                       std::span<const SubjectRecord> recs, const Eigen::VectorXd& eta) {
  if (!is_valid(kind, theta)) return kNegInf;
  const auto model = CrmModeld::unchecked(kind, theta, schedule);
  double sum = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto e = eta(static_cast<Eigen::Index>(i));
    sum += recs[i].event ? detail::event_term(model, recs[i].time, e) : detail::censored_term(model, recs[i].time, e);
  }
  return std::isnan(sum) ? kNegInf : sum;
}

double logit(double p) {
  if (p <= 0) return kNegInf;
  if (p >= 1) return std::numeric_limits<double>::infinity();
  return std::log(p / (1 - p));
}

}  // namespace

FamilyParamsd m_step_theta(FamilyKind kind, std::span<const SubjectRecord> records,
                           std::span<const double> susceptible_weights, const StressScheduled& schedule,
                           const FamilyParamsd& theta_init, const EmConfig& config) {
  HazardData data;
  std::size_t c = 0;
  for (const auto& r : records) {
    if (r.event) {
      data.event_times.push_back(r.time);
    } else {
      if (c >= susceptible_weights.size()) throw ContractError("m_step_theta: missing censored weights");
      data.censored_times.push_back(r.time);
      data.censored_weights.push_back(susceptible_weights[c++]);
    }
  }
  if (c != susceptible_weights.size()) throw ContractError("m_step_theta: one weight per censored record expected");
  return maximize_hazard_part(kind, data, schedule, theta_init, config);
}

CrmModeld FitResult::model() const { return CrmModeld(kind, theta, schedule.scaled(1 / time_scale)); }

FitResult em_fit(std::span<const SubjectRecord> records, const StressScheduled& schedule, FamilyKind kind,
                 const EmConfig& config) {
  schedule.validate();
  if (records.empty()) throw DataError("em_fit: empty dataset");
  if (!(config.tol > 0) || config.max_iter < 1) throw ContractError("em_fit: tol > 0 and max_iter >= 1 required");

  const double scale = config.normalize ? schedule.tau1 : 1.0;
  const StressScheduled fit_schedule = schedule.scaled(1 / scale);
  const Eigen::Index dim_z = records.front().z.size();

  std::vector<SubjectRecord> recs;
  recs.reserve(records.size());
  Eigen::MatrixXd link(static_cast<Eigen::Index>(records.size()), dim_z);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!(r.time > 0) || !std::isfinite(r.time)) throw DataError("em_fit: record times must be positive");
    if (r.z.size() != dim_z) throw DataError("em_fit: inconsistent covariate dimensions");
    const Eigen::VectorXd zl = config.link_scaling.apply(r.z);
    if (!zl.allFinite()) throw DataError("em_fit: non-finite covariate");
    link.row(static_cast<Eigen::Index>(i)) = zl.transpose();
    recs.push_back({r.time / scale, r.event, zl});
  }

  const Partition part = partition(recs, fit_schedule);
  if (part.first.empty())
    throw DataError("insufficient data per segment: no events in segment 1 (t <= tau1)");
  if (part.second.empty())
    throw DataError("insufficient data per segment: no events in segment 3 (t >= tau2)");

  const auto n = static_cast<Eigen::Index>(recs.size());
  const Eigen::Index s = dim_z - 1;
  CureMode mode = config.cure_mode;
  if (mode == CureMode::Logistic && s == 0) mode = CureMode::Constant;

  const Conditioning cond = Conditioning::from(link);
  const Eigen::MatrixXd design = mode == CureMode::Logistic ? cond.apply(link) : Eigen::MatrixXd();

  const ThetaMap map{config.theta_constraint};
  FamilyParamsd theta = config.init_theta
                            ? map.from_free(map.to_free(*config.init_theta))
                            : initial_theta(kind, recs, part, fit_schedule, config);

  const double p0 = static_cast<double>(part.n4()) / (2.0 * static_cast<double>(n));
  double p = mode == CureMode::Absent ? 0.0 : p0;
  Eigen::VectorXd beta_cond;
  Eigen::VectorXd eta(n);
  if (mode == CureMode::Logistic) {
    if (config.init_beta) {
      if (config.init_beta->size() != dim_z) throw ContractError("em_fit: init_beta has wrong length");
      beta_cond = cond.from_link(*config.init_beta);
    } else {
      beta_cond = Eigen::VectorXd::Zero(dim_z);
      beta_cond(0) = std::max(logit(p0), -config.beta_step.bound);
    }
    beta_cond = beta_cond.cwiseMax(-config.beta_step.bound).cwiseMin(config.beta_step.bound);
    eta = design * beta_cond;
  } else {
    if (mode == CureMode::Constant && config.init_beta) p = logistic((*config.init_beta)(0));
    eta.setConstant(logit(p));
  }

  FitResult result;
  result.kind = kind;
  result.schedule = schedule;
  result.time_scale = scale;
  result.n = recs.size();
  result.n1 = part.n1();
  result.n2 = part.n2();
  result.n3 = part.n3();
  result.n4 = part.n4();
  const double jacobian = static_cast<double>(part.events()) * std::log(scale);

  double ll = observed_loglik(kind, theta, fit_schedule, recs, eta);
  if (!std::isfinite(ll)) throw NumericalError("em_fit: log-likelihood not finite at the starting values");
  result.trace.push_back(ll - jacobian);

  HazardData hdata;
  for (const auto& r : recs) {
    if (r.event) hdata.event_times.push_back(r.time);
    else hdata.censored_times.push_back(r.time);
  }
  hdata.censored_weights.assign(hdata.censored_times.size(), 1.0);
  Eigen::VectorXd labels = Eigen::VectorXd::Zero(n);

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    // E-step
    const auto model = CrmModeld::unchecked(kind, theta, fit_schedule);
    double w1_sum = 0;
    std::size_t c = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = recs[static_cast<std::size_t>(i)];
      if (r.event) continue;
      const double w1 = logistic(eta(i) + model.cum_hazard(r.time));
      labels(i) = w1;
      hdata.censored_weights[c++] = 1 - w1;
      w1_sum += w1;
    }

    // M-step, cure part
    if (mode == CureMode::Constant) {
      p = w1_sum / static_cast<double>(n);
      eta.setConstant(logit(p));
    } else if (mode == CureMode::Logistic) {
      beta_cond = m_step_beta(design, labels, beta_cond, config.beta_step);
      eta = design * beta_cond;
    }

    // M-step, hazard part
    theta = maximize_hazard_part(kind, hdata, fit_schedule, theta, config);

    const double ll_new = observed_loglik(kind, theta, fit_schedule, recs, eta);
    result.trace.push_back(ll_new - jacobian);
    result.iterations = iter;
    const double gain = ll_new - ll;
    ll = ll_new;
    if (gain < config.tol) {
      result.converged = true;
      break;
    }
  }

  result.theta = theta;
  result.mll = ll - jacobian;
  if (mode == CureMode::Logistic) {
    result.cure.beta = cond.to_link(beta_cond);
    result.cure.scaling = config.link_scaling;
  } else {
    result.cure = CureModel::constant(p);
    result.p = p;
  }

  if (!config.compute_se) return result;

  // Observed information on the natural scale of the free parameters.
  Eigen::VectorXd x0 = map.to_natural(theta);
  std::vector<std::string> names = map.names();
  const Eigen::Index k_theta = x0.size();
  Eigen::Index k_cure = 0;
  if (mode == CureMode::Logistic) {
    k_cure = dim_z;
  } else if (mode == CureMode::Constant && p > 1e-8 && p < 1 - 1e-8) {
    k_cure = 1;
  }
  x0.conservativeResize(k_theta + k_cure);
  if (mode == CureMode::Logistic) {
    x0.tail(k_cure) = result.cure.beta;
    for (Eigen::Index j = 0; j < k_cure; ++j) names.push_back("beta" + std::to_string(j));
  } else if (k_cure == 1) {
    x0(k_theta) = p;
    names.push_back("p");
  }
  const Eigen::VectorXd fixed_eta = eta;
  const optim::Objective loglik = [&](const Eigen::VectorXd& x) {
    const FamilyParamsd th = map.from_natural(x.head(k_theta));
    Eigen::VectorXd e;
    if (mode == CureMode::Logistic) {
      e = link * x.tail(k_cure);
    } else if (k_cure == 1) {
      e = Eigen::VectorXd::Constant(n, logit(x(k_theta)));
    } else {
      e = fixed_eta;
    }
    return observed_loglik(kind, th, fit_schedule, recs, e);
  };
  const Eigen::VectorXd steps = (1e-4 * x0.cwiseAbs().cwiseMax(0.1)).eval();
  const Eigen::MatrixXd hess = optim::numeric_hessian(loglik, x0, steps);
  result.se_names = names;
  if (hess.allFinite()) {
    const Eigen::MatrixXd info = -hess;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() == Eigen::Success) {
      const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
      if ((cov.diagonal().array() > 0).all()) {
        result.se = cov.diagonal().cwiseSqrt();
        result.se_available = true;
      }
    }
  }
  return result;
}

const FitResult& ProfileResult::best() const {
  for (const auto& pt : curve)
    if (pt.fit && pt.tau2 == best_tau2) return *pt.fit;
  throw NumericalError("profile: no successful fit");
}

ProfileResult profile_fit_delta(std::span<const SubjectRecord> records, FamilyKind kind, double tau1,
                                std::span<const double> grid, const EmConfig& config, unsigned threads) {
  if (grid.empty()) throw ContractError("profile: empty tau2 grid");
  for (double g : grid)
    if (!(g >= tau1)) throw ContractError("profile: every grid value must be >= tau1");

  ProfileResult out;
  out.curve.resize(grid.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      auto& pt = out.curve[i];
      pt.tau2 = grid[i];
      try {
        pt.fit = em_fit(records, StressScheduled{tau1, grid[i], std::nullopt}, kind, config);
      } catch (const std::exception& e) {
        pt.error = e.what();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(grid.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  const ProfilePoint* best = nullptr;
  for (const auto& pt : out.curve) {
    if (!pt.fit) continue;
    if (!best || pt.fit->mll > best->fit->mll || (pt.fit->mll == best->fit->mll && pt.tau2 < best->tau2))
      best = &pt;
  }
  if (!best) {
    std::string why = out.curve.front().error;
    throw NumericalError("profile: all candidate fits failed (first error: " + why + ")");
  }
  out.best_tau2 = best->tau2;
  return out;
}

}  // namespace crm
