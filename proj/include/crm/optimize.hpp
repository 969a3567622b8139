#pragma once

// Small box-constrained maximizers used by the M-steps and the initial fits.

#include <functional>

#include <Eigen/Core>

namespace crm::optim {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
  static Box uniform(Eigen::Index dim, double lo, double hi) {
    return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
  }
};

struct Options {
  int max_iter = 100;
  double x_tol = 1e-10;
  double f_tol = 1e-13;   // relative improvement below which we stop
  double grad_tol = 1e-8;
  double fd_step = 1e-4;  // absolute finite-difference step
};

struct Result {
  Eigen::VectorXd x;
  double value = 0;
  int iterations = 0;
  bool converged = false;
};

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double step);
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& steps);

/// Damped Newton ascent with central-difference derivatives and projection
/// onto the box. The returned value never falls below f(x0).
Result maximize_newton(const Objective& f, const Eigen::VectorXd& x0, const Box& box,
                       const Options& opts = {});

/// Nelder-Mead on the projected objective. Never returns a point worse than x0.
Result maximize_nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Box& box,
                            const Options& opts = {});

}  // namespace crm::optim
