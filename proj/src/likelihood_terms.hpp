#pragma once

#include <cmath>
#include <limits>

#include "crm/crm_core.hpp"

namespace crm::detail {

inline double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// ln(1 - p) + ln f0(t) for an observed failure.
inline double event_term(const CrmModeld& model, double t, double eta) {
  return log1m_logistic(eta) + model.log_hazard(t) - model.cum_hazard(t);
}

/// ln(p + (1 - p) S0(t)) for a censored record.
inline double censored_term(const CrmModeld& model, double t, double eta) {
  if (eta == std::numeric_limits<double>::infinity()) return 0.0;
  return log_add_exp(eta, -model.cum_hazard(t)) - softplus(eta);
}

}  // namespace crm::detail
