#pragma once

// Parametric scaling-law forms: difficulty evaluation, saturating wrappers,
// per-form prediction, and the transforms between constrained parameters and
// the unconstrained space the optimizer works in.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalekit/errors.hpp"

namespace scalekit {

inline constexpr double kLogHuge = 690.0;     // ln(1e300), saturation threshold
inline constexpr double kHugeDifficulty = 1e300;
inline constexpr double kSoftplusFloor = 1e-12;

// One observed coordinate: model size, unique examples, total examples seen.
// c (measured FLOPs) rides along when a record supplies it; composite-scalar
// forms fall back to k*n*t when absent.
struct Point {
  double n = 0.0;
  double d = 0.0;
  double t = 0.0;
  std::optional<double> c;

  bool valid() const {
    return std::isfinite(n) && n > 0.0 && std::isfinite(d) && d > 0.0 &&
           std::isfinite(t) && t > 0.0 && (!c || (std::isfinite(*c) && *c > 0.0));
  }
};

enum class WrapperKind { Rational, Exponential };

// The saturating three-term law's parameter vector.
struct OursParams {
  double e = 0.0;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 0.0;

  bool valid() const {
    for (double v : {e, a, b, c, alpha, beta, gamma, delta})
      if (!std::isfinite(v) || v < 0.0) return false;
    return true;
  }
};

struct Difficulty {
  double value = 0.0;
  bool saturated = false;  // a term overflowed; value pinned at kHugeDifficulty
};

namespace detail {

// Sums exp(log_terms) without ever producing NaN: if any term's log exceeds
// the 1e300 threshold the sum saturates instead.
inline Difficulty sum_log_terms(const double* logs, int count) {
  double max_log = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) max_log = std::max(max_log, logs[i]);
  if (max_log > kLogHuge) return {kHugeDifficulty, true};
  double sum = 0.0;
  for (int i = 0; i < count; ++i) sum += std::exp(logs[i]);
  return {sum, false};
}

}  // namespace detail

// h = a/n^alpha + b/t^beta + c*n^gamma/d^delta, evaluated per-term in log
// space so extreme exponent/coordinate combinations saturate instead of
// producing Inf*0 = NaN.
inline Difficulty difficulty(const OursParams& p, const Point& pt) {
  double logs[3];
  int count = 0;
  if (p.a > 0.0) logs[count++] = std::log(p.a) - p.alpha * std::log(pt.n);
  if (p.b > 0.0) logs[count++] = std::log(p.b) - p.beta * std::log(pt.t);
  if (p.c > 0.0)
    logs[count++] = std::log(p.c) + p.gamma * std::log(pt.n) - p.delta * std::log(pt.d);
  if (count == 0) return {0.0, false};
  return detail::sum_log_terms(logs, count);
}

// L = e + (l0 - e) * w(h) with w the saturating wrapper. For the rational
// wrapper the two algebraic arrangements are exact at the respective ends:
// e + (l0-e)*h/(1+h) near the floor and l0 - (l0-e)/(1+h) near saturation.
inline double wrap(double h, double e, double l0, WrapperKind kind) {
  if (!(e >= 0.0) || !(e < l0)) throw ConfigError("wrap requires 0 <= e < l0");
  if (!(h >= 0.0)) throw ConfigError("wrap requires h >= 0");
  double swing = l0 - e;
  double out;
  if (kind == WrapperKind::Rational) {
    out = h < 1.0 ? e + swing * (h / (1.0 + h)) : l0 - swing / (1.0 + h);
  } else {
    out = e + swing * (-std::expm1(-h));
  }
  if (out >= l0) out = std::nextafter(l0, e);  // keep the codomain open at l0
  return out;
}

inline double invert_wrapper(double loss, double e, double l0, WrapperKind kind) {
  if (!(e >= 0.0) || !(e < l0)) throw ConfigError("invert_wrapper requires 0 <= e < l0");
  if (loss <= e) throw WrapperRangeError(WrapperRangeError::Bound::Floor, loss);
  if (loss >= l0) throw WrapperRangeError(WrapperRangeError::Bound::Ceiling, loss);
  if (kind == WrapperKind::Rational) return (loss - e) / (l0 - loss);
  return -std::log((l0 - loss) / (l0 - e));
}

// ---------------------------------------------------------------------------
// Form registry

enum class FormId {
  Ours,
  OursNoWrapper,
  OursNoOverfit,
  OursExpWrapper,
  OursSingleExp,
  OursExtended,
  Chinchilla,
  Kaplan,
  Muennighoff,
  M4,
  BnslK1,
  BnslK2,
  Farseer,
};

inline constexpr FormId kAllForms[] = {
    FormId::Ours,        FormId::OursNoWrapper, FormId::OursNoOverfit,
    FormId::OursExpWrapper, FormId::OursSingleExp, FormId::OursExtended,
    FormId::Chinchilla,  FormId::Kaplan,        FormId::Muennighoff,
    FormId::M4,          FormId::BnslK1,        FormId::BnslK2,
    FormId::Farseer,
};

// Drives both the unconstrained transform and the restart-sampling ranges.
enum class ParamKind {
  Floor,     // irreducible-loss-like: softplus transform, U(0.5, 3) init
  Coef,      // multiplicative coefficient: log transform, log-U[0.01, 1000]
  Exponent,  // power-law exponent: log transform, U(0.1, 0.7)
  Scale,     // break/characteristic scale: log transform, log-U[10, 1e6]
  Free,      // sign-free: identity transform
  SlopeBase, // extended-form beta0: identity transform, U(0.1, 0.7)
  Slope,     // extended-form beta_n/beta_d: identity, U(-0.05, 0.05)
};

struct ParamSpec {
  const char* name;
  ParamKind kind;
};

struct FormInfo {
  FormId id;
  const char* name;
  bool wrapped;        // prediction bounded in [e, l0)
  bool uses_l0;        // evaluation reads the grid baseline
  bool hinge_allowed;  // the E-hinge prior applies (saturating ours family)
  std::vector<ParamSpec> params;

  int index_of(std::string_view pname) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (pname == params[i].name) return static_cast<int>(i);
    return -1;
  }
};

inline const FormInfo& form_info(FormId id) {
  using PK = ParamKind;
  static const std::vector<FormInfo> registry = [] {
    std::vector<FormInfo> r;
    std::vector<ParamSpec> ours8 = {
        {"e", PK::Floor},    {"a", PK::Coef},     {"alpha", PK::Exponent},
        {"b", PK::Coef},     {"beta", PK::Exponent}, {"c", PK::Coef},
        {"gamma", PK::Exponent}, {"delta", PK::Exponent}};
    r.push_back({FormId::Ours, "ours", true, true, true, ours8});
    r.push_back({FormId::OursNoWrapper, "ours-no-wrapper", false, true, false, ours8});
    r.push_back({FormId::OursNoOverfit, "ours-no-overfit", true, true, true,
                 {{"e", PK::Floor},
                  {"a", PK::Coef},
                  {"alpha", PK::Exponent},
                  {"b", PK::Coef},
                  {"beta", PK::Exponent}}});
    r.push_back({FormId::OursExpWrapper, "ours-exp-wrapper", true, true, true, ours8});
    r.push_back({FormId::OursSingleExp, "ours-single-exp", true, true, true,
                 {{"e", PK::Floor},
                  {"a", PK::Coef},
                  {"alpha", PK::Exponent},
                  {"b", PK::Coef},
                  {"beta", PK::Exponent},
                  {"c", PK::Coef},
                  {"gamma", PK::Exponent}}});
    r.push_back({FormId::OursExtended, "ours-extended", true, true, true,
                 {{"e", PK::Floor},
                  {"a", PK::Coef},
                  {"alpha", PK::Exponent},
                  {"b", PK::Coef},
                  {"beta0", PK::SlopeBase},
                  {"beta_n", PK::Slope},
                  {"beta_d", PK::Slope},
                  {"c", PK::Coef},
                  {"gamma", PK::Exponent},
                  {"delta", PK::Exponent},
                  {"e2", PK::Coef},
                  {"phi", PK::Exponent}}});
    r.push_back({FormId::Chinchilla, "chinchilla", false, false, false,
                 {{"e", PK::Floor},
                  {"A", PK::Coef},
                  {"alpha", PK::Exponent},
                  {"B", PK::Coef},
                  {"beta", PK::Exponent}}});
    r.push_back({FormId::Kaplan, "kaplan", false, false, false,
                 {{"n_c", PK::Scale},
                  {"alpha_n", PK::Exponent},
                  {"d_c", PK::Scale},
                  {"alpha_d", PK::Exponent}}});
    r.push_back({FormId::Muennighoff, "muennighoff", false, false, false,
                 {{"e", PK::Floor},
                  {"A", PK::Coef},
                  {"alpha", PK::Exponent},
                  {"B", PK::Coef},
                  {"beta", PK::Exponent},
                  {"r_d_star", PK::Coef},
                  {"r_n_star", PK::Coef}}});
    r.push_back({FormId::M4, "m4", true, true, false,
                 {{"e", PK::Floor},
                  {"a_m4", PK::Exponent},
                  {"b_m4", PK::Coef},
                  {"c_m4", PK::Exponent}}});
    std::vector<ParamSpec> bnsl = {{"a", PK::Floor}, {"b", PK::Coef},
                                   {"c0", PK::Exponent}, {"d1", PK::Scale},
                                   {"c1", PK::Exponent}, {"f1", PK::Exponent}};
    r.push_back({FormId::BnslK1, "bnsl-k1", false, false, false, bnsl});
    bnsl.push_back({"d2", PK::Scale});
    bnsl.push_back({"c2", PK::Exponent});
    bnsl.push_back({"f2", PK::Exponent});
    r.push_back({FormId::BnslK2, "bnsl-k2", false, false, false, bnsl});
    r.push_back({FormId::Farseer, "farseer", false, false, false,
                 {{"a1", PK::Free},
                  {"a2", PK::Free},
                  {"a3", PK::Free},
                  {"b1", PK::Free},
                  {"b2", PK::Free},
                  {"b3", PK::Free},
                  {"c1", PK::Free},
                  {"c2", PK::Free},
                  {"c3", PK::Free}}});
    return r;
  }();
  return registry[static_cast<std::size_t>(id)];
}

inline std::optional<FormId> parse_form_id(std::string_view name) {
  for (FormId id : kAllForms)
    if (name == form_info(id).name) return id;
  return std::nullopt;
}

inline std::string known_form_names() {
  std::string out;
  for (FormId id : kAllForms) {
    if (!out.empty()) out += ", ";
    out += form_info(id).name;
  }
  return out;
}

// A named parameter vector for one form, laid out per the registry.
struct FormParams {
  FormId form = FormId::Ours;
  std::vector<double> values;

  FormParams() = default;
  explicit FormParams(FormId f) : form(f), values(form_info(f).params.size(), 0.0) {}
  FormParams(FormId f, std::vector<double> v) : form(f), values(std::move(v)) {}

  double& at(std::string_view name) {
    int i = form_info(form).index_of(name);
    if (i < 0) throw ConfigError("form " + std::string(form_info(form).name) +
                                 " has no parameter " + std::string(name));
    return values[static_cast<std::size_t>(i)];
  }
  double get(std::string_view name) const {
    return const_cast<FormParams*>(this)->at(name);
  }
};

// Composite-scalar choice for single-axis forms when a record carries no
// measured compute.
enum class CompositeScalar { ComputeElseKNT, N, D, T };
enum class M4Axis { N, D, C };

struct EvalOptions {
  M4Axis m4_axis = M4Axis::D;
  CompositeScalar bnsl_scalar = CompositeScalar::ComputeElseKNT;
  double k_flops = 6.0;  // the C ~ k*N*T convention
};

namespace detail {

inline double composite_scalar(const Point& pt, CompositeScalar mode, double k) {
  switch (mode) {
    case CompositeScalar::N: return pt.n;
    case CompositeScalar::D: return pt.d;
    case CompositeScalar::T: return pt.t;
    case CompositeScalar::ComputeElseKNT: default:
      return pt.c ? *pt.c : k * pt.n * pt.t;
  }
}

inline OursParams ours_from(std::span<const double> p) {
  // layout: e a alpha b beta c gamma delta
  return {p[0], p[1], p[3], p[5], p[2], p[4], p[6], p[7]};
}

}  // namespace detail

// Solves the M4 implicit relation (L-e)/(l0-L)^a = rhs for the unique
// L in (e, l0). The left side is strictly increasing in L, so bisection
// cannot miss; a few Newton steps polish the root to machine precision so
// finite-difference gradients through the solve stay clean.
inline double solve_m4(double e, double a_m4, double rhs, double l0) {
  if (!(e >= 0.0) || !(e < l0)) throw ConfigError("solve_m4 requires 0 <= e < l0");
  if (rhs <= 0.0) return e;
  // g(L) = ln(L-e) - a*ln(l0-L) - ln(rhs), increasing on (e, l0)
  double log_rhs = std::log(rhs);
  auto g = [&](double L) { return std::log(L - e) - a_m4 * std::log(l0 - L) - log_rhs; };
  double lo = e, hi = l0;
  for (int i = 0; i < 200 && hi - lo > 1e-16 * (l0 - e); ++i) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  double L = 0.5 * (lo + hi);
  if (!(L > e)) return e;  // root collapsed onto the floor
  for (int i = 0; i < 3; ++i) {
    double gl = g(L);
    double gp = 1.0 / (L - e) + a_m4 / (l0 - L);
    if (!std::isfinite(gl) || !std::isfinite(gp)) break;
    double next = L - gl / gp;
    if (!std::isfinite(next) || next <= e || next >= l0) break;
    L = next;
  }
  return L;
}

namespace detail {

inline double softplus(double x) { return x > 40.0 ? x : std::log1p(std::exp(x)); }

inline Difficulty extended_difficulty(std::span<const double> p, const Point& pt) {
  // layout: e a alpha b beta0 beta_n beta_d c gamma delta e2 phi
  double beta_eff = p[4] + p[5] * std::log(pt.n) + p[6] * std::log(pt.d);
  beta_eff = std::clamp(beta_eff, 0.01, 5.0);
  double logs[4];
  int count = 0;
  if (p[1] > 0.0) logs[count++] = std::log(p[1]) - p[2] * std::log(pt.n);
  if (p[3] > 0.0) logs[count++] = std::log(p[3]) - beta_eff * std::log(pt.t);
  if (p[7] > 0.0)
    logs[count++] = std::log(p[7]) + p[8] * std::log(pt.n) - p[9] * std::log(pt.d);
  if (p[10] > 0.0)
    logs[count++] = std::log(p[10]) + p[11] * (std::log(pt.n) - std::log(pt.d));
  if (count == 0) return {0.0, false};
  return sum_log_terms(logs, count);
}

inline Difficulty single_exp_difficulty(std::span<const double> p, const Point& pt) {
  // layout: e a alpha b beta c gamma; overfit term c*(n/d)^gamma
  double logs[3];
  int count = 0;
  if (p[1] > 0.0) logs[count++] = std::log(p[1]) - p[2] * std::log(pt.n);
  if (p[3] > 0.0) logs[count++] = std::log(p[3]) - p[4] * std::log(pt.t);
  if (p[5] > 0.0)
    logs[count++] = std::log(p[5]) + p[6] * (std::log(pt.n) - std::log(pt.d));
  if (count == 0) return {0.0, false};
  return sum_log_terms(logs, count);
}

inline double chinchilla_eval(std::span<const double> p, const Point& pt) {
  // layout: e A alpha B beta; single-epoch form reads the d axis
  return p[0] + p[1] * std::pow(pt.n, -p[2]) + p[3] * std::pow(pt.d, -p[4]);
}

inline double kaplan_eval(std::span<const double> p, const Point& pt) {
  // layout: n_c alpha_n d_c alpha_d
  double inner = std::pow(p[0] / pt.n, p[1] / p[3]) + p[2] / pt.d;
  return std::pow(inner, p[3]);
}

inline double muennighoff_eval(std::span<const double> p, const Point& pt) {
  // layout: e A alpha B beta r_d_star r_n_star
  double e = p[0], A = p[1], alpha = p[2], B = p[3], beta = p[4];
  double rd = p[5], rn = p[6];
  double repetitions = std::max(pt.t / pt.d - 1.0, 0.0);
  double d_eff = pt.d;
  if (rd > 0.0) d_eff = pt.d * (1.0 + rd * (-std::expm1(-repetitions / rd)));
  double n_eff = pt.n;
  if (A > 0.0 && B > 0.0 && rn > 0.0) {
    // Base capacity the unique data supports, from the same form's
    // compute-optimal map; excess capacity saturates like repeated data.
    double g = std::pow(alpha * A / (beta * B), 1.0 / (alpha + beta));
    double n_base = g * std::pow(g * pt.d, beta / alpha);
    double u_n = std::min(pt.n, n_base);
    double excess = pt.n / u_n - 1.0;
    n_eff = u_n * (1.0 + rn * (-std::expm1(-excess / rn)));
  }
  return e + A * std::pow(n_eff, -alpha) + B * std::pow(d_eff, -beta);
}

inline double m4_eval(std::span<const double> p, const Point& pt, double l0,
                      const EvalOptions& opts) {
  // layout: e a_m4 b_m4 c_m4
  double x;
  switch (opts.m4_axis) {
    case M4Axis::N: x = pt.n; break;
    case M4Axis::C: x = pt.c ? *pt.c : opts.k_flops * pt.n * pt.t; break;
    case M4Axis::D: default: x = pt.d; break;
  }
  double rhs = p[2] * std::exp(-p[3] * std::log(x));
  return solve_m4(p[0], p[1], rhs, l0);
}

inline double bnsl_eval(std::span<const double> p, const Point& pt, int breaks,
                        const EvalOptions& opts) {
  // layout: a b c0 (d_i c_i f_i)*
  double x = composite_scalar(pt, opts.bnsl_scalar, opts.k_flops);
  double lx = std::log(x);
  if (p[1] <= 0.0) return p[0];
  double log_term = std::log(p[1]) - p[2] * lx;
  for (int i = 0; i < breaks; ++i) {
    double di = p[3 + 3 * i], ci = p[4 + 3 * i], fi = p[5 + 3 * i];
    double y = (lx - std::log(di)) / fi;
    log_term -= ci * fi * softplus(y);
  }
  return p[0] + std::exp(log_term);
}

inline double farseer_eval(std::span<const double> p, const Point& pt) {
  // layout: a1 a2 a3 b1 b2 b3 c1 c2 c3; the data axis is total examples t
  double ln_n = std::log(pt.n), ln_t = std::log(pt.t);
  double floor_term = std::exp(p[0] * std::exp(p[1] * ln_n) + p[2]);
  double data_exp = std::exp(p[6] * std::exp(p[7] * ln_n) + p[8]);
  double data_term = std::exp(p[3] * std::exp(p[4] * ln_n) + p[5] - data_exp * ln_t);
  double out = floor_term + data_term;
  return std::isnan(out) ? std::numeric_limits<double>::infinity() : out;
}

}  // namespace detail

// Evaluates any registered form at a point. Wrapper-bounded forms read l0;
// additive forms ignore it. Throws ConfigError when the parameter count does
// not match the registry layout or a wrapped form has e >= l0.
inline double predict(FormId form, std::span<const double> p, const Point& pt,
                      double l0, const EvalOptions& opts = {}) {
  const FormInfo& info = form_info(form);
  if (p.size() != info.params.size())
    throw ConfigError(std::string("parameter count mismatch for form ") + info.name);
  switch (form) {
    case FormId::Ours:
      return wrap(difficulty(detail::ours_from(p), pt).value, p[0], l0,
                  WrapperKind::Rational);
    case FormId::OursExpWrapper:
      return wrap(difficulty(detail::ours_from(p), pt).value, p[0], l0,
                  WrapperKind::Exponential);
    case FormId::OursNoWrapper: {
      if (!(p[0] < l0)) throw ConfigError("ours-no-wrapper requires e < l0");
      Difficulty h = difficulty(detail::ours_from(p), pt);
      return p[0] + (l0 - p[0]) * h.value;
    }
    case FormId::OursNoOverfit: {
      OursParams q{p[0], p[1], p[3], 0.0, p[2], p[4], 0.0, 0.0};
      return wrap(difficulty(q, pt).value, p[0], l0, WrapperKind::Rational);
    }
    case FormId::OursSingleExp:
      return wrap(detail::single_exp_difficulty(p, pt).value, p[0], l0,
                  WrapperKind::Rational);
    case FormId::OursExtended:
      return wrap(detail::extended_difficulty(p, pt).value, p[0], l0,
                  WrapperKind::Exponential);
    case FormId::Chinchilla: return detail::chinchilla_eval(p, pt);
    case FormId::Kaplan: return detail::kaplan_eval(p, pt);
    case FormId::Muennighoff: return detail::muennighoff_eval(p, pt);
    case FormId::M4: return detail::m4_eval(p, pt, l0, opts);
    case FormId::BnslK1: return detail::bnsl_eval(p, pt, 1, opts);
    case FormId::BnslK2: return detail::bnsl_eval(p, pt, 2, opts);
    case FormId::Farseer: return detail::farseer_eval(p, pt);
  }
  throw ConfigError("unknown form id");
}

inline double predict(const FormParams& fp, const Point& pt, double l0,
                      const EvalOptions& opts = {}) {
  return predict(fp.form, fp.values, pt, l0, opts);
}

// ---------------------------------------------------------------------------
// Unconstrained reparameterization: positive parameters in log, floors
// through softplus, sign-free parameters untouched.

namespace detail {

inline double inv_softplus(double y) {
  if (y > 40.0) return y;
  return std::log(std::expm1(y));
}

}  // namespace detail

inline std::vector<double> to_unconstrained(FormId form, std::span<const double> p) {
  const FormInfo& info = form_info(form);
  if (p.size() != info.params.size())
    throw ConfigError(std::string("parameter count mismatch for form ") + info.name);
  std::vector<double> x(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double v = p[i];
    if (!std::isfinite(v)) throw ConfigError("non-finite parameter in transform");
    switch (info.params[i].kind) {
      case ParamKind::Floor:
        x[i] = detail::inv_softplus(std::max(v, kSoftplusFloor));
        break;
      case ParamKind::Coef:
      case ParamKind::Exponent:
      case ParamKind::Scale:
        x[i] = std::log(std::max(v, 1e-300));
        break;
      default:
        x[i] = v;
    }
  }
  return x;
}

inline std::vector<double> from_unconstrained(FormId form, std::span<const double> x) {
  const FormInfo& info = form_info(form);
  if (x.size() != info.params.size())
    throw ConfigError(std::string("parameter count mismatch for form ") + info.name);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i];
    if (!std::isfinite(v)) throw ConfigError("non-finite coordinate in transform");
    switch (info.params[i].kind) {
      case ParamKind::Floor: p[i] = detail::softplus(v); break;
      case ParamKind::Coef:
      case ParamKind::Exponent:
      case ParamKind::Scale:
        p[i] = std::exp(v);
        break;
      default:
        p[i] = v;
    }
  }
  return p;
}

}  // namespace scalekit
