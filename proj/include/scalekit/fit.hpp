#pragma once

// Robust fitting of any registered form to a Grid: Huber objective on
// log-residuals, BFGS in unconstrained parameter space, seeded multistart,
// and the optional one-sided hinge prior on the fitted loss floor.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scalekit/bfgs.hpp"
#include "scalekit/errors.hpp"
#include "scalekit/forms.hpp"
#include "scalekit/grid.hpp"
#include "scalekit/parallel.hpp"
#include "scalekit/rng.hpp"

namespace scalekit {

// Huber penalty on a log-residual: quadratic inside the knee, linear outside,
// continuous and C1 at |r| = tau.
inline double huber(double r, double tau) {
  if (!(tau > 0.0)) throw ConfigError("huber requires tau > 0");
  double ar = std::abs(r);
  return ar <= tau ? 0.5 * r * r : tau * (ar - 0.5 * tau);
}

// One-sided L2 hinge on log E: silent whenever e >= m/kappa, quadratic in
// log-space shortfall below that floor.
inline double e_hinge_penalty(double e, double m, double kappa, double lambda) {
  if (!(e > 0.0) || !(m > 0.0) || !(kappa > 1.0) || !(lambda >= 0.0))
    throw ConfigError("e_hinge_penalty requires e > 0, m > 0, kappa > 1, lambda >= 0");
  double gap = std::log(m / kappa) - std::log(e);
  if (gap <= 0.0) return 0.0;
  return lambda * gap * gap;
}

struct HingeConfig {
  double kappa = 1.5;
  double lambda_per_row = 0.25;  // lambda = lambda_per_row * |grid|
};

// Restart-sampling ranges, one class per parameter kind.
struct InitRanges {
  double e_lo = 0.5, e_hi = 3.0;
  double exp_lo = 0.1, exp_hi = 0.7;
  double coef_lo = 0.01, coef_hi = 1000.0;
  double scale_lo = 10.0, scale_hi = 1e6;
  double slope_halfwidth = 0.05;
  double farseer_jitter = 0.3;  // relative jitter around the anchor vector
};

struct FitConfig {
  int restarts = 0;  // 0 = per-form default: 30, raised to 200 for farseer
  double huber_tau = 0.05;
  int max_iters = 500;
  // 0 = per-form default. The standard rule is gradient max-norm < 1e-8.
  // Farseer's doubly-exponential parametrization carries third derivatives
  // large enough that the central-difference truncation term alone sits near
  // 1e-5 at a perfect optimum, so its default is the FD-compatible 1e-4.
  double grad_tol = 0.0;
  std::uint64_t seed = 0;
  InitRanges init;
  std::optional<HingeConfig> e_hinge;
  std::optional<std::vector<double>> farseer_anchor;
  EvalOptions eval;
  int workers = 1;  // 0 = auto

  int resolved_restarts(FormId form) const {
    if (restarts > 0) return restarts;
    return form == FormId::Farseer ? 200 : 30;
  }

  double resolved_grad_tol(FormId form) const {
    if (grad_tol > 0.0) return grad_tol;
    return form == FormId::Farseer ? 1e-4 : 1e-8;
  }
};

inline std::string config_to_string(const FitConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "restarts=" << c.restarts << ";tau=" << c.huber_tau
     << ";max_iters=" << c.max_iters << ";grad_tol=" << c.grad_tol
     << ";seed=" << c.seed << ";init=" << c.init.e_lo << "," << c.init.e_hi << ","
     << c.init.exp_lo << "," << c.init.exp_hi << "," << c.init.coef_lo << ","
     << c.init.coef_hi << "," << c.init.scale_lo << "," << c.init.scale_hi << ","
     << c.init.slope_halfwidth << "," << c.init.farseer_jitter;
  if (c.e_hinge)
    os << ";hinge=" << c.e_hinge->kappa << "," << c.e_hinge->lambda_per_row;
  if (c.farseer_anchor) {
    os << ";anchor=";
    for (double v : *c.farseer_anchor) os << v << ",";
  }
  os << ";m4_axis=" << static_cast<int>(c.eval.m4_axis)
     << ";bnsl=" << static_cast<int>(c.eval.bnsl_scalar) << ";k=" << c.eval.k_flops;
  return os.str();
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const FitConfig& c) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(config_to_string(c))));
  return buf;
}

inline void validate_fit_request(FormId form, const FitConfig& config) {
  const FormInfo& info = form_info(form);
  if (config.e_hinge && !info.hinge_allowed)
    throw ConfigError(std::string("the E-hinge prior applies only to saturating "
                                  "wrapper forms, not ") +
                      info.name);
  if (form == FormId::Farseer && !config.farseer_anchor)
    throw ConfigError("farseer fits need an anchor parameter vector (restarts are "
                      "jittered around published values)");
  if (config.farseer_anchor &&
      config.farseer_anchor->size() != info.params.size() && form == FormId::Farseer)
    throw ConfigError("farseer anchor must have 9 entries");
}

// Sum of Huber losses on log-residuals, plus the hinge when configured.
// Returns +inf where the form produces a non-positive or non-finite
// prediction so the line search backs away from invalid regions.
inline double objective(FormId form, std::span<const double> values, const Grid& grid,
                        const FitConfig& config) {
  validate_fit_request(form, config);
  double total = 0.0;
  for (const GridRecord& rec : grid.records()) {
    double pred;
    try {
      pred = predict(form, values, rec.point(), grid.l0(), config.eval);
    } catch (const ConfigError&) {
      // e wandered past l0 or similar: an invalid region, not an error.
      return std::numeric_limits<double>::infinity();
    }
    if (!(pred > 0.0) || !std::isfinite(pred))
      return std::numeric_limits<double>::infinity();
    total += huber(std::log(pred) - std::log(rec.loss), config.huber_tau);
  }
  if (config.e_hinge) {
    double lambda = config.e_hinge->lambda_per_row * static_cast<double>(grid.size());
    double pen = e_hinge_penalty(std::max(values[0], kSoftplusFloor), grid.min_loss(),
                                 config.e_hinge->kappa, lambda);
    if (pen > 0.0) total += pen;  // exact no-op when silent
  }
  return total;
}

inline double objective(const FormParams& params, const Grid& grid,
                        const FitConfig& config) {
  return objective(params.form, params.values, grid, config);
}

// Draws one multistart initialization in constrained space.
inline std::vector<double> sample_init(FormId form, Rng& rng,
                                       const FitConfig& config = {}) {
  const FormInfo& info = form_info(form);
  const InitRanges& r = config.init;
  if (form == FormId::Farseer) {
    if (!config.farseer_anchor)
      throw ConfigError("farseer initialization needs an anchor vector");
    const auto& anchor = *config.farseer_anchor;
    if (anchor.size() != info.params.size())
      throw ConfigError("farseer anchor must have 9 entries");
    std::vector<double> out(anchor.size());
    for (std::size_t i = 0; i < anchor.size(); ++i)
      out[i] = anchor[i] * (1.0 + r.farseer_jitter * rng.uniform(-1.0, 1.0));
    return out;
  }
  std::vector<double> out(info.params.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (info.params[i].kind) {
      case ParamKind::Floor: out[i] = rng.uniform(r.e_lo, r.e_hi); break;
      case ParamKind::Exponent: out[i] = rng.uniform(r.exp_lo, r.exp_hi); break;
      case ParamKind::Coef: out[i] = rng.log_uniform(r.coef_lo, r.coef_hi); break;
      case ParamKind::Scale: out[i] = rng.log_uniform(r.scale_lo, r.scale_hi); break;
      case ParamKind::SlopeBase: out[i] = rng.uniform(r.exp_lo, r.exp_hi); break;
      case ParamKind::Slope:
        out[i] = rng.uniform(-r.slope_halfwidth, r.slope_halfwidth);
        break;
      case ParamKind::Free: out[i] = rng.uniform(-1.0, 1.0); break;
    }
  }
  return out;
}

struct RestartStat {
  bool converged = false;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

struct FitResult {
  FormId form = FormId::Ours;
  FormParams params;
  double objective = std::numeric_limits<double>::infinity();
  std::vector<RestartStat> restart_stats;
  std::size_t clipped_rows = 0;
  std::uint64_t seed = 0;
  std::string grid_name;
  std::string config_hash;
};

namespace detail {

inline MinimizeResult minimize_form(FormId form, const Grid& grid,
                                    const FitConfig& config,
                                    const std::vector<double>& start) {
  Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(
      to_unconstrained(form, start).data(), static_cast<Eigen::Index>(start.size()));
  ObjectiveFn f = [&, form](const Eigen::VectorXd& x) {
    std::vector<double> p = from_unconstrained(
        form, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    return objective(form, p, grid, config);
  };
  MinimizeOptions mopts;
  mopts.max_iters = config.max_iters;
  mopts.grad_tol = config.resolved_grad_tol(form);
  return minimize(f, std::move(x0), mopts);
}

inline FitResult result_from(FormId form, const Grid& grid, const FitConfig& config,
                             const MinimizeResult& best,
                             std::vector<RestartStat> stats) {
  FitResult out;
  out.form = form;
  out.params = FormParams(
      form, from_unconstrained(form, std::span<const double>(
                                         best.x.data(),
                                         static_cast<std::size_t>(best.x.size()))));
  out.objective = objective(out.params, grid, config);
  out.restart_stats = std::move(stats);
  out.clipped_rows = grid.clipped_count();
  out.seed = config.seed;
  out.grid_name = grid.name();
  out.config_hash = config_hash(config);
  return out;
}

}  // namespace detail

// Best-of-restarts fit. Restarts run independently (possibly in parallel)
// from seeded per-restart initializations; non-converged restarts are
// discarded; ties break on restart index so the result is identical for any
// worker count.
inline FitResult fit(FormId form, const Grid& grid, const FitConfig& config = {}) {
  validate_fit_request(form, config);
  int restarts = config.resolved_restarts(form);
  if (restarts < 1) throw ConfigError("fit requires restarts >= 1");

  std::vector<MinimizeResult> runs(static_cast<std::size_t>(restarts));
  std::vector<RestartStat> stats(static_cast<std::size_t>(restarts));
  parallel_for(static_cast<std::size_t>(restarts), config.workers, [&](std::size_t r) {
    Rng rng = Rng::stream(config.seed, r);
    std::vector<double> start = sample_init(form, rng, config);
    runs[r] = detail::minimize_form(form, grid, config, start);
    stats[r] = {runs[r].converged, runs[r].f, runs[r].iterations};
  });

  int best = -1;
  for (int r = 0; r < restarts; ++r) {
    const auto& run = runs[static_cast<std::size_t>(r)];
    if (!run.converged) continue;
    if (best < 0 || run.f < runs[static_cast<std::size_t>(best)].f) best = r;
  }
  if (best < 0) {
    std::vector<FitError::RestartDiagnostic> diags;
    for (const auto& s : stats) diags.push_back({s.converged, s.objective, s.iterations});
    throw FitError("no restart converged (" + std::to_string(restarts) + " attempted)",
                   std::move(diags));
  }
  return detail::result_from(form, grid, config, runs[static_cast<std::size_t>(best)],
                             std::move(stats));
}

// Single minimization from a caller-supplied starting point; the bootstrap
// uses this to refit resamples cheaply from the point estimate.
inline FitResult warm_refit(FormId form, const Grid& grid,
                            const std::vector<double>& start_params,
                            const FitConfig& config = {}) {
  validate_fit_request(form, config);
  if (start_params.size() != form_info(form).params.size())
    throw ConfigError("warm_refit start has the wrong parameter count");
  for (double v : start_params)
    if (!std::isfinite(v)) throw ConfigError("warm_refit start must be finite");
  MinimizeResult run = detail::minimize_form(form, grid, config, start_params);
  if (!run.converged) {
    std::vector<FitError::RestartDiagnostic> diags{{false, run.f, run.iterations}};
    throw FitError("warm refit did not converge", std::move(diags));
  }
  return detail::result_from(form, grid, config, run, {{true, run.f, run.iterations}});
}

inline FitResult warm_refit(const FormParams& start, const Grid& grid,
                            const FitConfig& config = {}) {
  return warm_refit(start.form, grid, start.values, config);
}

}  // namespace scalekit
