#include "crm/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

namespace crm::optim {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  const double v = f(x);
  return std::isnan(v) ? kNegInf : v;
}

struct LocalModel {
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Gradient and Hessian from one stencil, reusing the axis evaluations.
LocalModel central_differences(const Objective& f, const Eigen::VectorXd& x, double fx, double h) {
  const Eigen::Index d = x.size();
  LocalModel m{Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
  Eigen::VectorXd plus(d), minus(d);
  Eigen::VectorXd xe = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    xe(i) = x(i) + h;
    plus(i) = f(xe);
    xe(i) = x(i) - h;
    minus(i) = f(xe);
    xe(i) = x(i);
    m.gradient(i) = (plus(i) - minus(i)) / (2 * h);
    m.hessian(i, i) = (plus(i) - 2 * fx + minus(i)) / (h * h);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      xe(i) = x(i) + h; xe(j) = x(j) + h;
      const double pp = f(xe);
      xe(j) = x(j) - h;
      const double pm = f(xe);
      xe(i) = x(i) - h;
      const double mm = f(xe);
      xe(j) = x(j) + h;
      const double mp = f(xe);
      xe(i) = x(i); xe(j) = x(j);
      m.hessian(i, j) = m.hessian(j, i) = (pp - pm - mp + mm) / (4 * h * h);
    }
  }
  return m;
}

// Coordinates sitting on a bound whose gradient pushes outward are frozen.
std::vector<Eigen::Index> free_coordinates(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Box& box) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool at_lo = x(i) <= box.lower(i) && g(i) < 0;
    const bool at_hi = x(i) >= box.upper(i) && g(i) > 0;
    if (!at_lo && !at_hi) idx.push_back(i);
  }
  return idx;
}

}  // namespace

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xe(i) = x(i) + step;
    const double fp = f(xe);
    xe(i) = x(i) - step;
    const double fm = f(xe);
    xe(i) = x(i);
    g(i) = (fp - fm) / (2 * step);
  }
  return g;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& steps) {
  const Eigen::Index d = x.size();
  Eigen::MatrixXd hess(d, d);
  const double fx = f(x);
  Eigen::VectorXd xe = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double hi = steps(i);
    xe(i) = x(i) + hi;
    const double fp = f(xe);
    xe(i) = x(i) - hi;
    const double fm = f(xe);
    xe(i) = x(i);
    hess(i, i) = (fp - 2 * fx + fm) / (hi * hi);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double hj = steps(j);
      xe(i) = x(i) + hi; xe(j) = x(j) + hj;
      const double pp = f(xe);
      xe(j) = x(j) - hj;
      const double pm = f(xe);
      xe(i) = x(i) - hi;
      const double mm = f(xe);
      xe(j) = x(j) + hj;
      const double mp = f(xe);
      xe(i) = x(i); xe(j) = x(j);
      hess(i, j) = hess(j, i) = (pp - pm - mp + mm) / (4 * hi * hj);
    }
  }
  return hess;
}

Result maximize_newton(const Objective& f, const Eigen::VectorXd& x0, const Box& box, const Options& opts) {
  Result r{box.project(x0), 0.0, 0, false};
  r.value = safe_eval(f, r.x);
  if (!std::isfinite(r.value)) return r;

  for (r.iterations = 0; r.iterations < opts.max_iter; ++r.iterations) {
    const LocalModel local = central_differences(f, r.x, r.value, opts.fd_step);
    if (!local.gradient.allFinite() || !local.hessian.allFinite()) break;

    const auto idx = free_coordinates(r.x, local.gradient, box);
    if (idx.empty()) {
      r.converged = true;
      break;
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd g(k);
    Eigen::MatrixXd neg_h(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      g(a) = local.gradient(idx[a]);
      for (Eigen::Index b = 0; b < k; ++b) neg_h(a, b) = -local.hessian(idx[a], idx[b]);
    }
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      r.converged = true;
      break;
    }

    // Newton direction on the free block, with eigenvalues of -H floored so the
    // step is always an ascent direction.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(neg_h);
    Eigen::VectorXd lam = eig.eigenvalues().cwiseAbs();
    const double floor = std::max(1e-8 * lam.maxCoeff(), 1e-12);
    lam = lam.cwiseMax(floor);
    const Eigen::VectorXd step_free =
        eig.eigenvectors() * (eig.eigenvectors().transpose() * g).cwiseQuotient(lam);
    Eigen::VectorXd direction = Eigen::VectorXd::Zero(r.x.size());
    for (Eigen::Index a = 0; a < k; ++a) direction(idx[a]) = step_free(a);

    bool improved = false;
    Eigen::VectorXd candidate;
    double value = r.value;
    for (double s = 1.0; s > 1e-10; s *= 0.5) {
      candidate = box.project(r.x + s * direction);
      value = safe_eval(f, candidate);
      if (value > r.value) {
        improved = true;
        break;
      }
    }
    if (!improved) {
      r.converged = g.lpNorm<Eigen::Infinity>() < 1e3 * opts.grad_tol;
      break;
    }
    const double gain = value - r.value;
    const double moved = (candidate - r.x).lpNorm<Eigen::Infinity>();
    r.x = candidate;
    r.value = value;
    if (moved < opts.x_tol || gain < opts.f_tol * (1 + std::abs(r.value))) {
      r.converged = true;
      ++r.iterations;
      break;
    }
  }
  return r;
}

Result maximize_nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Box& box, const Options& opts) {
  const Eigen::Index d = x0.size();
  const auto eval = [&](const Eigen::VectorXd& x) { return safe_eval(f, box.project(x)); };

  std::vector<Eigen::VectorXd> simplex(d + 1, box.project(x0));
  std::vector<double> values(d + 1);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double h = std::max(0.1, 0.1 * std::abs(x0(i)));
    simplex[i + 1](i) += (simplex[i + 1](i) + h <= box.upper(i)) ? h : -h;
  }
  for (Eigen::Index i = 0; i <= d; ++i) values[i] = eval(simplex[i]);
  const double start_value = values[0];

  std::vector<Eigen::Index> order(d + 1);
  const int max_iter = std::max(opts.max_iter, 400 * static_cast<int>(d));
  Result r;
  for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] > values[b]; });
    const double best = values[order.front()];
    const double worst = values[order.back()];
    double size = 0;
    for (Eigen::Index i = 1; i <= d; ++i)
      size = std::max(size, (simplex[order[i]] - simplex[order[0]]).lpNorm<Eigen::Infinity>());
    if (std::isfinite(worst) && best - worst <= opts.f_tol * (1 + std::abs(best)) && size < 1e-8) {
      r.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) centroid += simplex[order[i]];
    centroid /= static_cast<double>(d);
    const Eigen::Index w = order.back();
    const Eigen::Index second_worst = order[d - 1];

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[w]);
    const double fr = eval(reflected);
    if (fr > best) {
      const Eigen::VectorXd expanded = centroid + 2 * (centroid - simplex[w]);
      const double fe = eval(expanded);
      if (fe > fr) {
        simplex[w] = expanded;
        values[w] = fe;
      } else {
        simplex[w] = reflected;
        values[w] = fr;
      }
    } else if (fr > values[second_worst]) {
      simplex[w] = reflected;
      values[w] = fr;
    } else {
      const bool outside = fr > worst;
      const Eigen::VectorXd contracted =
          outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (simplex[w] - centroid));
      const double fc = eval(contracted);
      if (fc > std::max(outside ? fr : worst, worst)) {
        simplex[w] = contracted;
        values[w] = fc;
      } else {
        const Eigen::VectorXd anchor = simplex[order[0]];
        for (Eigen::Index i = 1; i <= d; ++i) {
          simplex[order[i]] = anchor + 0.5 * (simplex[order[i]] - anchor);
          values[order[i]] = eval(simplex[order[i]]);
        }
      }
    }
  }
  const auto best_it = std::max_element(values.begin(), values.end());
  const auto best_idx = static_cast<std::size_t>(best_it - values.begin());
  if (*best_it >= start_value) {
    r.x = box.project(simplex[best_idx]);
    r.value = *best_it;
  } else {
    r.x = box.project(x0);
    r.value = start_value;
  }
  return r;
}

}  // namespace crm::optim
