#pragma once

// Cost-aware allocation under the saturating three-term law: feasibility of a
// target loss, the two dual convex programs (min loss at a budget, min cost at
// a target), closed-form optimal model sizes, and Pareto frontier sweeps.
// All solves work in (ln n, ln d, ln t), where the difficulty is a sum of
// exponentials of affine functions and therefore convex.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scalekit/bfgs.hpp"
#include "scalekit/errors.hpp"
#include "scalekit/forms.hpp"

namespace scalekit {

struct PriceModel {
  double rho_d = 0.0;  // dollars per unique example (0 = free data)
  double rho_c = 0.0;  // dollars per FLOP
  double k = 6.0;      // FLOPs ~ k * N * T

  void validate() const {
    if (!(rho_c > 0.0) || !(k > 0.0) || !(rho_d >= 0.0) ||
        !std::isfinite(rho_c) || !std::isfinite(k) || !std::isfinite(rho_d))
      throw ConfigError("price model requires rho_c > 0, k > 0, rho_d >= 0");
  }
};

struct AllocationResult {
  double n_star = 0.0;
  double d_star = 0.0;
  double t_star = 0.0;
  double loss = 0.0;
  double cost = 0.0;
  double epochs = 0.0;      // t_star / d_star
  double data_share = 0.0;  // rho_d * d_star / cost
  double foc_residual = 0.0;
  double multiplier = 0.0;  // lambda (P2) or mu (P1), in loss-per-dollar units
  bool d_degenerate = false;
  bool trivial_target_warning = false;
};

enum class TargetFeasibility { Feasible, BelowFloor, Trivial };

struct TargetDifficulty {
  TargetFeasibility kind = TargetFeasibility::Feasible;
  double h = 0.0;  // valid only when feasible
};

// h* = (L - e)/(l0 - L), positive and finite iff e < L < l0. Targets at or
// below the irreducible floor and at or above the baseline come back as
// typed infeasibility rather than an exception.
inline TargetDifficulty target_difficulty(double l_target, double e, double l0) {
  if (!(e >= 0.0) || !(e < l0)) throw ConfigError("target_difficulty requires 0 <= e < l0");
  if (l_target <= e) return {TargetFeasibility::BelowFloor, 0.0};
  if (l_target >= l0) return {TargetFeasibility::Trivial, 0.0};
  return {TargetFeasibility::Feasible, (l_target - e) / (l0 - l_target)};
}

struct InfeasibleTargetError : std::runtime_error {
  InfeasibleTargetError(TargetFeasibility kind, double l_target)
      : std::runtime_error(kind == TargetFeasibility::BelowFloor
                               ? "target loss is at or below the irreducible floor"
                               : "target loss is at or above the uninformed baseline"),
        kind(kind),
        l_target(l_target) {}
  TargetFeasibility kind;
  double l_target;
};

// ---------------------------------------------------------------------------
// Closed-form and 1-D optimal model sizes

// N* at fixed unique data in the infinite-training limit:
// n* = (alpha*a*d^delta / (gamma*c))^(1/(alpha+gamma)).
inline double nopt_asymptotic(const OursParams& p, double d) {
  if (!(p.a > 0.0) || !(p.c > 0.0) || !(p.alpha > 0.0) || !(p.gamma > 0.0))
    throw ConfigError("no interior minimum: nopt_asymptotic needs a, c, alpha, gamma > 0");
  double ln_n = (std::log(p.alpha * p.a) + p.delta * std::log(d) -
                 std::log(p.gamma * p.c)) /
                (p.alpha + p.gamma);
  return std::exp(ln_n);
}

// Data-rich compute-optimal N*: n* = (alpha*a*C^beta / (beta*b*k^beta))^(1/(alpha+beta)).
inline double nopt_chinchilla(const OursParams& p, double c_flops, double k) {
  if (!(p.a > 0.0) || !(p.b > 0.0) || !(p.alpha > 0.0) || !(p.beta > 0.0))
    throw ConfigError("nopt_chinchilla needs a, b, alpha, beta > 0");
  double ln_n = (std::log(p.alpha * p.a) + p.beta * std::log(c_flops) -
                 std::log(p.beta * p.b) - p.beta * std::log(k)) /
                (p.alpha + p.beta);
  return std::exp(ln_n);
}

// Finite-compute optimum: the unique root of
//   alpha*a = beta*b*k^beta*n^(alpha+beta)/C^beta + gamma*c*n^(alpha+gamma)/d^delta.
// The right side is monotone increasing in n, so a bracketed bisection in
// ln n cannot miss. Evaluated in log space to survive extreme C and d.
inline double nopt_finite(const OursParams& p, double c_flops, double d, double k) {
  if (!(p.b > 0.0) || !(p.beta > 0.0)) throw ConfigError("nopt_finite needs b, beta > 0");
  if (!(p.a > 0.0) || !(p.alpha > 0.0)) throw ConfigError("nopt_finite needs a, alpha > 0");
  double lhs = std::log(p.alpha * p.a);
  double l1_const = std::log(p.beta * p.b) + p.beta * std::log(k) - p.beta * std::log(c_flops);
  bool has_overfit = p.c > 0.0 && p.gamma > 0.0;
  double l2_const = has_overfit
                        ? std::log(p.gamma * p.c) - p.delta * std::log(d)
                        : 0.0;
  auto g = [&](double x) {
    double t1 = l1_const + (p.alpha + p.beta) * x;
    if (!has_overfit) return t1 - lhs;
    double t2 = l2_const + (p.alpha + p.gamma) * x;
    double m = std::max(t1, t2);
    return m + std::log(std::exp(t1 - m) + std::exp(t2 - m)) - lhs;
  };
  double lo = 0.0, hi = 0.0;
  int guard = 0;
  while (g(lo) > 0.0) {
    lo -= 50.0;
    if (++guard > 60) throw SolveError("nopt_finite bracketing failed (low)", g(lo));
  }
  guard = 0;
  while (g(hi) < 0.0) {
    hi += 50.0;
    if (++guard > 60) throw SolveError("nopt_finite bracketing failed (high)", g(hi));
  }
  for (int i = 0; i < 200 && hi - lo > 4e-16 * std::max(1.0, std::abs(lo)); ++i) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Log-coordinate machinery shared by the two programs

namespace detail::alloc {

struct LogCoords {
  double u, v, w;  // ln n, ln d, ln t
};

struct HEval {
  double h;
  Eigen::Vector3d grad;
  Eigen::Matrix3d hess;
};

inline HEval eval_h(const OursParams& p, const LogCoords& z) {
  double t1 = p.a > 0.0 ? std::exp(std::log(p.a) - p.alpha * z.u) : 0.0;
  double t2 = p.b > 0.0 ? std::exp(std::log(p.b) - p.beta * z.w) : 0.0;
  double t3 = p.c > 0.0
                  ? std::exp(std::log(p.c) + p.gamma * z.u - p.delta * z.v)
                  : 0.0;
  HEval out;
  out.h = t1 + t2 + t3;
  out.grad << -p.alpha * t1 + p.gamma * t3, -p.delta * t3, -p.beta * t2;
  out.hess.setZero();
  out.hess(0, 0) = p.alpha * p.alpha * t1 + p.gamma * p.gamma * t3;
  out.hess(0, 1) = out.hess(1, 0) = -p.gamma * p.delta * t3;
  out.hess(1, 1) = p.delta * p.delta * t3;
  out.hess(2, 2) = p.beta * p.beta * t2;
  return out;
}

struct BEval {
  double b;
  Eigen::Vector3d grad;
  Eigen::Matrix3d hess;
};

inline BEval eval_budget(const PriceModel& prices, const LogCoords& z) {
  double data = prices.rho_d * std::exp(z.v);
  double compute = prices.rho_c * prices.k * std::exp(z.u + z.w);
  BEval out;
  out.b = data + compute;
  out.grad << compute, data, compute;
  out.hess.setZero();
  out.hess(0, 0) = out.hess(0, 2) = out.hess(2, 0) = out.hess(2, 2) = compute;
  out.hess(1, 1) = data;
  return out;
}

// Relative spread of the marginal-loss-per-dollar ratios across the active
// axes. The wrapper's derivative cancels in the spread, so the residual is
// identical in h-units and L-units.
inline double foc_residual(const OursParams& p, const PriceModel& prices,
                           const LogCoords& z, bool include_d) {
  HEval h = eval_h(p, z);
  BEval budget = eval_budget(prices, z);
  double ratios[3];
  int count = 0;
  ratios[count++] = h.grad[0] / budget.grad[0];
  if (include_d && budget.grad[1] > 0.0) ratios[count++] = h.grad[1] / budget.grad[1];
  ratios[count++] = h.grad[2] / budget.grad[2];
  double lo = ratios[0], hi = ratios[0], mean = 0.0;
  for (int i = 0; i < count; ++i) {
    lo = std::min(lo, ratios[i]);
    hi = std::max(hi, ratios[i]);
    mean += ratios[i];
  }
  mean /= count;
  if (mean == 0.0) return 0.0;
  return (hi - lo) / std::abs(mean);
}

// Damped Newton on the 4x4 KKT system of either program.
//   P2: F = [grad_h + lambda*grad_B; B - b_max]
//   P1: F = [grad_B + mu*grad_h;     h - h_target]
struct KktProblem {
  const OursParams& p;
  const PriceModel& prices;
  bool budget_program;  // true: P2, false: P1
  double rhs;           // b_max or h_target

  Eigen::Vector4d residual(const Eigen::Vector4d& z) const {
    LogCoords c{z[0], z[1], z[2]};
    HEval h = eval_h(p, c);
    BEval b = eval_budget(prices, c);
    Eigen::Vector4d f;
    if (budget_program) {
      f.head<3>() = h.grad + z[3] * b.grad;
      f[3] = b.b - rhs;
    } else {
      f.head<3>() = b.grad + z[3] * h.grad;
      f[3] = h.h - rhs;
    }
    return f;
  }

  Eigen::Matrix4d jacobian(const Eigen::Vector4d& z) const {
    LogCoords c{z[0], z[1], z[2]};
    HEval h = eval_h(p, c);
    BEval b = eval_budget(prices, c);
    Eigen::Matrix4d j = Eigen::Matrix4d::Zero();
    if (budget_program) {
      j.topLeftCorner<3, 3>() = h.hess + z[3] * b.hess;
      j.topRightCorner<3, 1>() = b.grad;
      j.bottomLeftCorner<1, 3>() = b.grad.transpose();
    } else {
      j.topLeftCorner<3, 3>() = b.hess + z[3] * h.hess;
      j.topRightCorner<3, 1>() = h.grad;
      j.bottomLeftCorner<1, 3>() = h.grad.transpose();
    }
    return j;
  }
};

inline Eigen::Vector4d newton_polish(const KktProblem& prob, Eigen::Vector4d z,
                                     int iters = 100) {
  double fnorm = prob.residual(z).norm();
  for (int it = 0; it < iters; ++it) {
    Eigen::Vector4d f = prob.residual(z);
    Eigen::Vector4d step = prob.jacobian(z).partialPivLu().solve(-f);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      Eigen::Vector4d trial = z + scale * step;
      double trial_norm = prob.residual(trial).norm();
      if (std::isfinite(trial_norm) && trial_norm < fnorm) {
        z = trial;
        fnorm = trial_norm;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted || fnorm < 1e-300) break;
  }
  return z;
}

inline AllocationResult assemble(const OursParams& p, double l0,
                                 const PriceModel& prices, const LogCoords& z,
                                 bool include_d_axis) {
  HEval h = eval_h(p, z);
  BEval b = eval_budget(prices, z);
  AllocationResult out;
  out.n_star = std::exp(z.u);
  out.d_star = std::exp(z.v);
  out.t_star = std::exp(z.w);
  out.loss = wrap(h.h, p.e, l0, WrapperKind::Rational);
  out.cost = b.b;
  out.epochs = out.t_star / out.d_star;
  out.data_share = prices.rho_d * out.d_star / out.cost;
  out.foc_residual = foc_residual(p, prices, z, include_d_axis);
  double swing = l0 - p.e;
  double wrapper_slope = swing / ((1.0 + h.h) * (1.0 + h.h));
  out.multiplier = -(h.grad[2] / b.grad[2]) * wrapper_slope;  // loss per dollar
  return out;
}

// Smallest d already driving the overfitting term below 1e-12 of the rest of
// the difficulty.
inline double kill_overfit_d(const OursParams& p, double n, double h_rest) {
  if (!(p.delta > 0.0))
    throw SolveError("overfitting term cannot be made negligible (delta = 0)", 0.0);
  double ln_d =
      (std::log(p.c) + p.gamma * std::log(n) - std::log(1e-12 * h_rest)) / p.delta;
  return std::exp(ln_d);
}

inline void validate_alloc_inputs(const OursParams& p, double l0,
                                  const PriceModel& prices) {
  prices.validate();
  if (!p.valid()) throw ConfigError("invalid parameters for allocation");
  if (!(p.a > 0.0) || !(p.b > 0.0) || !(p.alpha > 0.0) || !(p.beta > 0.0))
    throw ConfigError("allocation needs a, b, alpha, beta > 0");
  if (!(p.e < l0)) throw ConfigError("allocation needs e < l0");
}

}  // namespace detail::alloc

struct AllocSolveOptions {
  // Optional explicit start for P2's reduced descent: data share s in (0,1)
  // and log-balance xi = ln(n/t).
  std::optional<std::pair<double, double>> init;
  int descent_iters = 400;
  int newton_iters = 100;
};

// P2: minimize loss subject to rho_d*d + rho_c*k*n*t <= b_max.
// Reduced convex descent over (data share, n/t balance) followed by a Newton
// polish of the first-order system. When c = 0 or rho_d = 0 the d axis is
// degenerate: the compute pair comes from the closed form and d is reported
// at the smallest value already killing the overfitting term (or a single
// example when the term is absent), flagged as degenerate.
inline AllocationResult solve_budget(const OursParams& params, double l0,
                                     const PriceModel& prices, double b_max,
                                     const AllocSolveOptions& opts = {}) {
  using namespace detail::alloc;
  validate_alloc_inputs(params, l0, prices);
  if (!(b_max > 0.0)) throw ConfigError("solve_budget requires b_max > 0");

  if (params.c == 0.0 || prices.rho_d == 0.0) {
    double d_cost = 0.0, d_star = 1.0;
    if (params.c == 0.0 && prices.rho_d > 0.0) {
      d_cost = prices.rho_d;  // one example, the cheapest valid corpus
      if (d_cost >= b_max)
        throw SolveError("budget cannot cover a single unique example", d_cost);
    }
    double c_flops = (b_max - d_cost) / prices.rho_c;
    double n = nopt_chinchilla(params, c_flops, prices.k);
    double t = c_flops / (prices.k * n);
    if (params.c == 0.0) {
      if (prices.rho_d == 0.0) d_star = t;  // free data: single-epoch convention
    } else {
      double h_rest = params.a * std::exp(-params.alpha * std::log(n)) +
                      params.b * std::exp(-params.beta * std::log(t));
      d_star = kill_overfit_d(params, n, h_rest);
    }
    LogCoords z{std::log(n), std::log(d_star), std::log(t)};
    AllocationResult out = assemble(params, l0, prices, z, false);
    out.d_degenerate = true;
    return out;
  }

  // General case: strictly convex in (u, v, w) with both exposures priced.
  double lb = std::log(b_max);
  auto unpack = [&](const Eigen::VectorXd& x) {
    double s = 1.0 / (1.0 + std::exp(-x[0]));
    double v = std::log(s) + lb - std::log(prices.rho_d);
    double lp = std::log1p(-s) + lb - std::log(prices.rho_c * prices.k);
    return LogCoords{0.5 * (lp + x[1]), v, 0.5 * (lp - x[1])};
  };
  ObjectiveFn f = [&](const Eigen::VectorXd& x) {
    return eval_h(params, unpack(x)).h;
  };
  Eigen::VectorXd x0(2);
  x0 << 0.0, 0.0;
  if (opts.init) {
    double s = std::clamp(opts.init->first, 1e-12, 1.0 - 1e-12);
    x0 << std::log(s) - std::log1p(-s), opts.init->second;
  }
  MinimizeOptions mopts;
  mopts.max_iters = opts.descent_iters;
  mopts.grad_tol = 1e-11;
  MinimizeResult descent = minimize(f, x0, mopts);
  LogCoords z = unpack(descent.x);

  HEval h = eval_h(params, z);
  BEval budget = eval_budget(prices, z);
  double lambda0 = -h.grad[2] / budget.grad[2];
  Eigen::Vector4d zk(z.u, z.v, z.w, lambda0);
  KktProblem prob{params, prices, true, b_max};
  zk = newton_polish(prob, zk, opts.newton_iters);
  LogCoords zf{zk[0], zk[1], zk[2]};

  AllocationResult out = assemble(params, l0, prices, zf, true);
  if (!(out.foc_residual < 1e-6) ||
      std::abs(out.cost - b_max) > 1e-8 * b_max)
    throw SolveError("budget allocation did not reach tolerance "
                     "(foc residual " + std::to_string(out.foc_residual) + ")",
                     out.foc_residual);
  return out;
}

// P1: minimize cost on the isoloss manifold L = l_target. Infeasible targets
// surface as typed errors; targets within a hair of l0 are achievable at
// near-zero cost and come back flagged. Solved directly (descent on the
// manifold plus a Newton polish of its own first-order system), independently
// of P2, so the two programs cross-check each other through duality.
inline AllocationResult solve_target(const OursParams& params, double l0,
                                     const PriceModel& prices, double l_target,
                                     const AllocSolveOptions& opts = {}) {
  using namespace detail::alloc;
  validate_alloc_inputs(params, l0, prices);
  TargetDifficulty td = target_difficulty(l_target, params.e, l0);
  if (td.kind != TargetFeasibility::Feasible)
    throw InfeasibleTargetError(td.kind, l_target);
  double h_star = td.h;
  bool warn = h_star > 1e9;

  if (params.c == 0.0 || prices.rho_d == 0.0) {
    // Split h* between the capacity and training terms; the optimal share is
    // theta = beta/(alpha+beta) by minimizing u + w on the constraint.
    double theta = params.beta / (params.alpha + params.beta);
    double u = (std::log(params.a) - std::log(theta * h_star)) / params.alpha;
    double w = (std::log(params.b) - std::log((1.0 - theta) * h_star)) / params.beta;
    double n = std::exp(u), t = std::exp(w);
    double d_star = 1.0;
    if (params.c > 0.0) {
      d_star = kill_overfit_d(params, n, h_star);
    } else if (prices.rho_d == 0.0) {
      d_star = t;
    }
    LogCoords z{u, std::log(d_star), w};
    AllocationResult out = assemble(params, l0, prices, z, false);
    out.multiplier = 1.0 / out.multiplier;  // P1 reports mu = 1/lambda
    out.d_degenerate = true;
    out.trivial_target_warning = warn;
    out.loss = l_target;
    return out;
  }

  // General case in (u, v): eliminate w through the constraint; the remaining
  // difficulty must leave room for the training term.
  auto lift = [&](const Eigen::VectorXd& x) -> LogCoords {
    double u = x[0], v = x[1];
    double cap = params.a * std::exp(-params.alpha * u);
    double over = params.c * std::exp(params.gamma * u - params.delta * v);
    double rem = h_star - cap - over;
    if (!(rem > 0.0)) return {u, v, std::numeric_limits<double>::quiet_NaN()};
    double w = (std::log(params.b) - std::log(rem)) / params.beta;
    return {u, v, w};
  };
  ObjectiveFn f = [&](const Eigen::VectorXd& x) {
    LogCoords z = lift(x);
    if (!std::isfinite(z.w)) return std::numeric_limits<double>::infinity();
    return std::log(eval_budget(prices, z).b);
  };
  double third = h_star / 3.0;
  Eigen::VectorXd x0(2);
  x0[0] = (std::log(params.a) - std::log(third)) / params.alpha;
  x0[1] = (std::log(params.c) + params.gamma * x0[0] - std::log(third)) / params.delta;
  if (opts.init) {
    // Reuse the (share, balance) convention loosely: perturb the default.
    x0[0] += opts.init->second;
    x0[1] += opts.init->first;
  }
  MinimizeOptions mopts;
  mopts.max_iters = opts.descent_iters;
  mopts.grad_tol = 1e-11;
  MinimizeResult descent = minimize(f, x0, mopts);
  LogCoords z = lift(descent.x);

  HEval h = eval_h(params, z);
  BEval budget = eval_budget(prices, z);
  double mu0 = -budget.grad[2] / h.grad[2];
  Eigen::Vector4d zk(z.u, z.v, z.w, mu0);
  KktProblem prob{params, prices, false, h_star};
  zk = newton_polish(prob, zk, opts.newton_iters);
  LogCoords zf{zk[0], zk[1], zk[2]};

  AllocationResult out = assemble(params, l0, prices, zf, true);
  double h_final = eval_h(params, zf).h;
  if (!(out.foc_residual < 1e-6) ||
      std::abs(h_final - h_star) > 1e-8 * h_star)
    throw SolveError("target allocation did not reach tolerance "
                     "(foc residual " + std::to_string(out.foc_residual) + ")",
                     out.foc_residual);
  double swing = l0 - params.e;
  double wrapper_slope = swing / ((1.0 + h_final) * (1.0 + h_final));
  out.multiplier = -(budget.grad[2] / h.grad[2]) / wrapper_slope;  // dollars per loss
  out.trivial_target_warning = warn;
  return out;
}

struct FrontierPoint {
  double budget = 0.0;
  bool ok = false;
  std::string error;
  AllocationResult alloc;
};

// Per-budget P2 sweep; the loss column is non-increasing along ascending
// budgets. Solver errors attach to their point instead of aborting the sweep.
inline std::vector<FrontierPoint> pareto_frontier(const OursParams& params, double l0,
                                                  const PriceModel& prices,
                                                  const std::vector<double>& budgets) {
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (!(budgets[i] > 0.0)) throw ConfigError("budgets must be positive");
    if (i > 0 && budgets[i] <= budgets[i - 1])
      throw ConfigError("budgets must be strictly ascending");
  }
  std::vector<FrontierPoint> out;
  out.reserve(budgets.size());
  for (double b : budgets) {
    FrontierPoint pt;
    pt.budget = b;
    try {
      pt.alloc = solve_budget(params, l0, prices, b);
      pt.ok = true;
    } catch (const std::exception& ex) {
      pt.ok = false;
      pt.error = ex.what();
    }
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace scalekit
