#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "scalekit/fit.hpp"
#include "scalekit/verify.hpp"

using namespace scalekit;

namespace {

constexpr double kLn32000 = 10.373491181781863599;

OursParams audit_params(Rng& rng) {
  // Ranges chosen so every term clears the (l0-e)*1e-6 tolerance when its
  // coordinate is driven to 1e-12 or 1e+12.
  OursParams p;
  p.a = rng.log_uniform(0.1, 5.0);
  p.b = rng.log_uniform(0.1, 5.0);
  p.c = rng.log_uniform(0.1, 5.0);
  p.alpha = rng.uniform(0.7, 1.3);
  p.beta = rng.uniform(0.7, 1.3);
  p.gamma = rng.uniform(0.7, 1.3);
  p.delta = rng.uniform(0.7, 1.3);
  return p;
}

std::vector<double> as_values(const OursParams& p) {
  return {p.e, p.a, p.alpha, p.b, p.beta, p.c, p.gamma, p.delta};
}

}  // namespace

TEST_CASE("check_limits passes all six rows for the saturating form", "[verify]") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    OursParams p = audit_params(rng);
    p.e = rng.uniform(0.0, 0.4) * kLn32000;
    LimitReport report = check_limits(FormId::Ours, as_values(p), kLn32000);
    REQUIRE(report.rows.size() == 6);
    for (const auto& row : report.rows) {
      INFO("row " << row.row << " deviation " << row.deviation);
      CHECK(row.pass);
    }
    CHECK(report.all_pass());
  }
}

TEST_CASE("check_limits reproduces the additive form's failure pattern", "[verify]") {
  // Audit-conditioned constants: exponents near 1 so the surviving row-6
  // limit converges within the 1e+12 driving range. The failure pattern on
  // rows 1-5 is structural and does not depend on the constants.
  std::vector<double> chin{1.69, 2.0, 1.0, 2.0, 0.9};
  LimitReport report = check_limits(FormId::Chinchilla, chin, kLn32000);
  REQUIRE(report.rows.size() == 6);
  for (int i = 0; i < 5; ++i) CHECK_FALSE(report.rows[i].pass);
  CHECK(report.rows[5].pass);
}

TEST_CASE("check_limits maps missing terms to failed rows", "[verify]") {
  Rng rng(5);
  OursParams p = audit_params(rng);
  p.e = 0.5;
  p.c = 0.0;  // overfitting term absent
  LimitReport report = check_limits(FormId::Ours, as_values(p), kLn32000);
  std::map<int, bool> pass;
  for (const auto& row : report.rows) pass[row.row] = row.pass;
  CHECK(pass[1]);
  CHECK_FALSE(pass[2]);
  CHECK(pass[3]);
  CHECK_FALSE(pass[4]);
  CHECK_FALSE(pass[5]);
  CHECK(pass[6]);
}

TEST_CASE("chinchilla_map divides by the loss swing", "[verify]") {
  double l0 = kLn32000, e = l0 - 9.13;
  auto [a, b] = chinchilla_map(406.0, 411.0, e, l0);
  CHECK(a == Catch::Approx(44.468784227820372).epsilon(1e-12));
  CHECK(b == Catch::Approx(45.016429353778751).epsilon(1e-12));

  auto [za, zb] = chinchilla_map(0.0, 0.0, 1.0, 2.0);
  CHECK(za == 0.0);
  CHECK(zb == 0.0);

  // round trip through the forward map
  CHECK(a * (l0 - e) == Catch::Approx(406.0).epsilon(1e-12));
  CHECK_THROWS_AS(chinchilla_map(1.0, 1.0, 2.0, 2.0), ConfigError);
}

TEST_CASE("recovery_gap stays within the second-order bound", "[verify]") {
  double l0 = kLn32000, e = l0 - 9.13;
  auto [a, b] = chinchilla_map(406.0, 411.0, e, l0);
  OursParams p{e, a, b, 1e-9, 0.34, 0.28, 0.5, 1.0};

  // a single-epoch point sitting at h ~ 0.05: the bound is ~0.0228 nats
  Point pt{6e9, 2.51e11, 2.51e11};
  RecoveryGap gap = recovery_gap(p, l0, pt);
  CHECK(gap.applicable);
  CHECK(gap.h == Catch::Approx(0.05).margin(0.005));
  CHECK(gap.bound == Catch::Approx(0.0228).margin(0.005));
  CHECK(gap.bound == Catch::Approx(9.13 * gap.h * gap.h).epsilon(1e-12));
  CHECK(gap.gap <= gap.bound * (1.0 + 1e-6));
  CHECK(gap.pass);

  // h -> 0: the gap vanishes
  RecoveryGap tiny = recovery_gap(p, l0, Point{1e16, 1e20, 1e20});
  CHECK(tiny.gap < 1e-6);
  CHECK(tiny.pass);

  // dominant overfitting term: the bound is not claimed
  OursParams heavy = p;
  heavy.c = 1e3;
  RecoveryGap na = recovery_gap(heavy, l0, Point{3e9, 6e10, 6e10});
  CHECK_FALSE(na.applicable);
  CHECK(na.pass);  // vacuous

  CHECK_THROWS_AS(recovery_gap(p, l0, Point{1e9, 1e10, 2e10}), ConfigError);
}

TEST_CASE("synth_grid is exact at sigma zero and deterministic", "[verify]") {
  OursParams gen{0.5, 40.0, 25.0, 8.0, 0.45, 0.40, 0.35, 0.8};
  double l0 = 4.605170185988091;
  SynthDesign design;
  design.n_values = {1e4, 1e6};
  design.d_values = {1e5, 1e7};
  design.epoch_multipliers = {1.0, 32.0};
  Grid grid = synth_grid(gen, l0, design);
  REQUIRE(grid.size() == 8);
  for (const auto& rec : grid.records()) {
    double expected = wrap(difficulty(gen, rec.point()).value, gen.e, l0,
                           WrapperKind::Rational);
    CHECK(rec.loss == expected);
  }

  design.sigma = 0.02;
  design.seed = 77;
  Grid noisy1 = synth_grid(gen, l0, design);
  Grid noisy2 = synth_grid(gen, l0, design);
  for (std::size_t i = 0; i < noisy1.size(); ++i)
    CHECK(noisy1.records()[i].loss == noisy2.records()[i].loss);

  design.seed = 78;
  Grid other = synth_grid(gen, l0, design);
  bool any_differ = false;
  for (std::size_t i = 0; i < noisy1.size(); ++i)
    any_differ |= noisy1.records()[i].loss != other.records()[i].loss;
  CHECK(any_differ);
}

TEST_CASE("refit on noisy synthetic data sits at the noise floor", "[verify]") {
  OursParams gen{0.5, 40.0, 25.0, 8.0, 0.45, 0.40, 0.35, 0.8};
  double l0 = 4.605170185988091;
  SynthDesign design;
  design.n_values = {1e3, 1e5, 1e7, 1e9};
  design.d_values = {1e4, 1e6, 1e8};
  design.epoch_multipliers = {1.0, 16.0, 256.0};
  design.sigma = 0.01;
  design.seed = 5;
  Grid grid = synth_grid(gen, l0, design);
  FitConfig config;
  config.restarts = 8;
  config.seed = 19;
  FitResult res = fit(FormId::Ours, grid, config);
  double ss = 0.0;
  for (const auto& rec : grid.records()) {
    double r = std::log(predict(res.params, rec.point(), l0)) - std::log(rec.loss);
    ss += r * r;
  }
  double rmse = std::sqrt(ss / static_cast<double>(grid.size()));
  CHECK(rmse < 2.0 * design.sigma);
  CHECK(rmse > 0.25 * design.sigma);
}

TEST_CASE("single-epoch designs recover predictions, not the overfitting trio",
          "[verify]") {
  // On a grid that never exercises repetition or data scarcity, the
  // overfitting coefficients shift along a coupled manifold with the same
  // total contribution, so only prediction-level recovery is asserted.
  OursParams gen{0.5, 40.0, 25.0, 8.0, 0.45, 0.40, 0.35, 0.8};
  double l0 = 4.605170185988091;
  SynthDesign design;
  design.n_values = {1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9};
  design.d_values = {1e5, 1e6, 1e7, 1e8, 1e9};
  design.epoch_multipliers = {1.0};  // strictly single-epoch
  Grid grid = synth_grid(gen, l0, design);
  FitConfig config;
  config.restarts = 12;
  config.seed = 41;
  FitResult res = fit(FormId::Ours, grid, config);
  double ss = 0.0;
  for (const auto& rec : grid.records()) {
    double r = std::log(predict(res.params, rec.point(), l0)) - std::log(rec.loss);
    ss += r * r;
  }
  CHECK(std::sqrt(ss / static_cast<double>(grid.size())) < 1e-6);
}

TEST_CASE("isoflop curves are U-shaped with consistent envelopes", "[verify]") {
  OursParams p{0.5, 40.0, 25.0, 8.0, 0.45, 0.40, 0.35, 0.8};
  double l0 = 4.605170185988091;
  double d = 1e6, k = 6.0;
  std::vector<double> c_values{1e12, 1e14, 1e16};
  auto rows = isoflop_curves(p, l0, c_values, d, k, 101);

  std::map<double, std::vector<IsoflopRow>> by_c;
  std::vector<IsoflopRow> co, inf_env;
  for (const auto& row : rows) {
    if (row.kind == IsoflopRow::Kind::Iso) by_c[row.c].push_back(row);
    else if (row.kind == IsoflopRow::Kind::ComputeOptimal) co.push_back(row);
    else inf_env.push_back(row);
  }
  REQUIRE(by_c.size() == 3);
  REQUIRE(co.size() == 3);
  REQUIRE(inf_env.size() == 101);

  // each fixed-C curve has an interior minimum
  for (auto& [c_flops, curve] : by_c) {
    auto min_it = std::min_element(
        curve.begin(), curve.end(),
        [](const IsoflopRow& x, const IsoflopRow& y) { return x.loss < y.loss; });
    CHECK(min_it != curve.begin());
    CHECK(min_it != curve.end() - 1);
  }

  // per-C minimum loss never increases with compute
  for (std::size_t i = 1; i < co.size(); ++i)
    CHECK(co[i].loss <= co[i - 1].loss + 1e-12);

  // infinite-compute envelope bottoms out at the asymptotic optimal size
  auto env_min = std::min_element(
      inf_env.begin(), inf_env.end(),
      [](const IsoflopRow& x, const IsoflopRow& y) { return x.loss < y.loss; });
  double expected = nopt_asymptotic(p, d);
  double grid_step = std::log(inf_env[1].n) - std::log(inf_env[0].n);
  CHECK(std::abs(std::log(env_min->n) - std::log(expected)) <= grid_step);
}
