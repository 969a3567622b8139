#include "crm/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "likelihood_terms.hpp"

namespace crm {

Partition partition(std::span<const SubjectRecord> records, const StressScheduled& schedule) {
  schedule.validate();
  Partition part;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.event) {
      part.censored.push_back(i);
    } else if (r.time <= schedule.tau1) {
      part.first.push_back(i);
    } else if (r.time < schedule.tau2) {
      part.bridge.push_back(i);
    } else {
      part.second.push_back(i);
    }
  }
  return part;
}

double log_likelihood(FamilyKind kind, const FamilyParamsd& theta, const CureModel& cure,
                      std::span<const SubjectRecord> records, const StressScheduled& schedule) {
  const CrmModeld model(kind, theta, schedule);
  double sum = 0;
  for (const auto& r : records) {
    if (!(r.time > 0)) throw ContractError("record times must be positive");
    const double eta = linear_predictor(cure, r.z);
    sum += r.event ? detail::event_term(model, r.time, eta) : detail::censored_term(model, r.time, eta);
  }
  return std::isnan(sum) ? -std::numeric_limits<double>::infinity() : sum;
}

MembershipWeights e_step_weights(double p, double s0) {
  const double denom = p + (1 - p) * s0;
  const double w1 = denom > 0 ? p / denom : 1.0;
  return {w1, 1 - w1};
}

MembershipWeights e_step_weights(const CrmModeld& model, const CureModel& cure, double t,
                                 const Eigen::VectorXd& z) {
  // p / (p + (1 - p) e^{-H}) = logistic(eta + H)
  const double w1 = logistic(linear_predictor(cure, z) + cum_hazard(model, t));
  return {w1, 1 - w1};
}

PseudoLoglik pseudo_loglik(FamilyKind kind, const FamilyParamsd& theta, const CureModel& cure,
                           const FamilyParamsd& theta_k, const CureModel& cure_k,
                           std::span<const SubjectRecord> records, const StressScheduled& schedule) {
  const CrmModeld model(kind, theta, schedule);
  const CrmModeld model_k(kind, theta_k, schedule);
  PseudoLoglik out;
  for (const auto& r : records) {
    const double eta = linear_predictor(cure, r.z);
    if (r.event) {
      out.cure_part += log1m_logistic(eta);
      out.hazard_part += model.log_hazard(r.time) - model.cum_hazard(r.time);
      continue;
    }
    const auto w = e_step_weights(model_k, cure_k, r.time, r.z);
    if (w.cured > 0) out.cure_part += w.cured * log_logistic(eta);
    if (w.susceptible > 0) {
      out.cure_part += w.susceptible * log1m_logistic(eta);
      out.hazard_part -= w.susceptible * model.cum_hazard(r.time);
    }
  }
  return out;
}

double m_step_p_closed_form(std::span<const double> cured_weights, std::size_t n) {
  if (n == 0) throw ContractError("m_step_p_closed_form: n must be positive");
  double sum = 0;
  for (double w : cured_weights) sum += w;
  return sum / static_cast<double>(n);
}

namespace {

double cure_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  double g = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) g += y(i) * eta(i) - softplus(eta(i));
  return g;
}

}  // namespace

Eigen::VectorXd m_step_beta(const Eigen::MatrixXd& design, const Eigen::VectorXd& cured_labels,
                            const Eigen::VectorXd& beta_init, const BetaStepOptions& opts) {
  const Eigen::Index d = design.cols();
  if (beta_init.size() != d || cured_labels.size() != design.rows())
    throw ContractError("m_step_beta: dimension mismatch");
  const double b = opts.bound;
  Eigen::VectorXd beta = beta_init.cwiseMax(-b).cwiseMin(b);
  double value = cure_objective(design, cured_labels, beta);
  double grad_norm = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd eta = design * beta;
    const Eigen::VectorXd p = eta.unaryExpr([](double e) { return logistic(e); });
    const Eigen::VectorXd grad = design.transpose() * (cured_labels - p);
    const Eigen::VectorXd wts = p.cwiseProduct(Eigen::VectorXd::Ones(p.size()) - p);

    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < d; ++j) {
      const bool pinned = (beta(j) <= -b && grad(j) < 0) || (beta(j) >= b && grad(j) > 0);
      if (!pinned) free.push_back(j);
    }
    grad_norm = 0;
    for (auto j : free) grad_norm = std::max(grad_norm, std::abs(grad(j)));
    if (free.empty() || grad_norm == 0) return beta;

    const auto k = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd xf(design.rows(), k);
    Eigen::VectorXd gf(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      xf.col(a) = design.col(free[a]);
      gf(a) = grad(free[a]);
    }
    const Eigen::MatrixXd info = xf.transpose() * wts.asDiagonal() * xf;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(std::max(1e-10 * eig.eigenvalues().maxCoeff(), 1e-12));
    const Eigen::VectorXd step_free = eig.eigenvectors() * (eig.eigenvectors().transpose() * gf).cwiseQuotient(lam);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(d);
    for (Eigen::Index a = 0; a < k; ++a) step(free[a]) = step_free(a);
    // Newton step size rather than the gradient decides convergence, so a
    // vanishing cured mass still walks beta to the bound.
    if (((beta + step).cwiseMax(-b).cwiseMin(b) - beta).lpNorm<Eigen::Infinity>() < opts.step_tol) return beta;

    bool improved = false;
    for (double s = 1.0; s > 1e-12; s *= 0.5) {
      const Eigen::VectorXd cand = (beta + s * step).cwiseMax(-b).cwiseMin(b);
      const double v = cure_objective(design, cured_labels, cand);
      if (v > value) {
        const bool stalled = (cand - beta).lpNorm<Eigen::Infinity>() < 1e-14;
        beta = cand;
        value = v;
        improved = !stalled;
        break;
      }
    }
    if (!improved) {
      // No ascent possible at machine precision: accept when the gradient is
      // small relative to the objective's scale.
      if (grad_norm < opts.grad_tol * (1 + std::abs(value))) return beta;
      break;
    }
  }
  throw BetaStepError("m_step_beta: Newton iterations did not converge (gradient norm " +
                          std::to_string(grad_norm) + ")",
                      beta, grad_norm);
}

}  // namespace crm
