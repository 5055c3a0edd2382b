#pragma once

// Dense BFGS with a Wolfe-condition line search (bracket + zoom), for the
// low-dimensional unconstrained problems the fitter and allocator produce.
// Gradients come from central finite differences unless the caller supplies
// an analytic one.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

namespace scalekit {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct MinimizeOptions {
  int max_iters = 500;
  double grad_tol = 1e-8;   // max-norm stopping rule
  double fd_step = 6e-7;    // relative central-difference step
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
};

inline Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x,
                                   double step, int* evals = nullptr) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double h = step * std::max(1.0, std::abs(x[i]));
    double xi = x[i];
    xp[i] = xi + h;
    double fp = f(xp);
    xp[i] = xi - h;
    double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
    if (evals) *evals += 2;
  }
  return g;
}

namespace detail {

// Directional derivative along p by central difference; two evaluations
// instead of a full gradient, used only inside the line search.
inline double dir_derivative(const ObjectiveFn& f, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p, double alpha, double step,
                             int& evals) {
  double h = step * std::max(1.0, std::abs(alpha));
  evals += 2;
  return (f(x + (alpha + h) * p) - f(x + (alpha - h) * p)) / (2.0 * h);
}

struct LineSearchResult {
  double alpha = 0.0;
  double f = 0.0;
  bool ok = false;
};

inline LineSearchResult wolfe_line_search(const ObjectiveFn& f, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& p, double f0,
                                          double dphi0, const MinimizeOptions& opts,
                                          int& evals) {
  const double c1 = opts.wolfe_c1, c2 = opts.wolfe_c2;
  auto phi = [&](double a) {
    ++evals;
    return f(x + a * p);
  };

  auto zoom = [&](double lo, double f_lo, double hi) -> LineSearchResult {
    for (int i = 0; i < 30; ++i) {
      double a = 0.5 * (lo + hi);
      double fa = phi(a);
      if (!(fa <= f0 + c1 * a * dphi0) || fa >= f_lo) {
        hi = a;
      } else {
        double d = dir_derivative(f, x, p, a, 1e-8, evals);
        if (std::abs(d) <= -c2 * dphi0) return {a, fa, true};
        if (d * (hi - lo) >= 0.0) hi = lo;
        lo = a;
        f_lo = fa;
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo)))
        return {lo, f_lo, f_lo < f0};
    }
    return {lo, f_lo, f_lo < f0};
  };

  double a_prev = 0.0, f_prev = f0;
  double a = 1.0;
  for (int i = 0; i < 20; ++i) {
    double fa = phi(a);
    if (!(fa <= f0 + c1 * a * dphi0) || (i > 0 && fa >= f_prev))
      return zoom(a_prev, f_prev, a);
    double d = dir_derivative(f, x, p, a, 1e-8, evals);
    if (std::abs(d) <= -c2 * dphi0) return {a, fa, true};
    if (d >= 0.0) return zoom(a, fa, a_prev);
    a_prev = a;
    f_prev = fa;
    a *= 2.0;
  }
  // Expansion never satisfied the curvature condition; keep the best point.
  return {a_prev, f_prev, f_prev < f0};
}

}  // namespace detail

inline MinimizeResult minimize(const ObjectiveFn& f, Eigen::VectorXd x0,
                               const MinimizeOptions& opts = {},
                               const GradientFn& grad = nullptr) {
  const auto n = x0.size();
  MinimizeResult res;
  res.x = std::move(x0);
  res.f = f(res.x);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) return res;

  auto gradient = [&](const Eigen::VectorXd& x) {
    return grad ? grad(x) : fd_gradient(f, x, opts.fd_step, &res.evaluations);
  };

  Eigen::VectorXd g = gradient(res.x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);

  for (res.iterations = 0; res.iterations < opts.max_iters; ++res.iterations) {
    if (!g.allFinite()) break;
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd p = -(H * g);
    double dphi0 = g.dot(p);
    if (!(dphi0 < 0.0)) {
      H.setIdentity();
      p = -g;
      dphi0 = g.dot(p);
    }
    auto ls = detail::wolfe_line_search(f, res.x, p, res.f, dphi0, opts, res.evaluations);
    if (!ls.ok || ls.alpha <= 0.0) {
      // No acceptable step along p; re-check optimality and stop.
      res.converged = g.lpNorm<Eigen::Infinity>() < opts.grad_tol;
      break;
    }
    Eigen::VectorXd x_new = res.x + ls.alpha * p;
    Eigen::VectorXd g_new = gradient(x_new);
    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      double rho = 1.0 / sy;
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }
    res.x = std::move(x_new);
    res.f = ls.f;
    g = std::move(g_new);
  }
  if (!res.converged && g.allFinite() &&
      g.lpNorm<Eigen::Infinity>() < opts.grad_tol)
    res.converged = true;
  res.gradient = std::move(g);
  return res;
}

}  // namespace scalekit
