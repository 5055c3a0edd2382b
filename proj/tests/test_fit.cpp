#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "scalekit/fit.hpp"
#include "scalekit/verify.hpp"

using namespace scalekit;

namespace {

OursParams truth() { return {0.5, 40.0, 25.0, 8.0, 0.45, 0.40, 0.35, 0.8}; }
constexpr double kLn100 = 4.605170185988091;

Grid small_synth(double sigma = 0.0, std::uint64_t seed = 0) {
  SynthDesign design;
  design.n_values = {1e3, 1e5, 1e7, 1e9};
  design.d_values = {1e4, 1e6, 1e8};
  design.epoch_multipliers = {1.0, 16.0, 256.0};
  design.sigma = sigma;
  design.seed = seed;
  return synth_grid(truth(), kLn100, design);
}

double prediction_rmse(const FormParams& fitted, const OursParams& gen,
                       const Grid& grid) {
  double ss = 0.0;
  for (const auto& rec : grid.records()) {
    double p = predict(fitted, rec.point(), grid.l0());
    double q = wrap(difficulty(gen, rec.point()).value, gen.e, grid.l0(),
                    WrapperKind::Rational);
    double r = std::log(p) - std::log(q);
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(grid.size()));
}

}  // namespace

TEST_CASE("huber penalty branches and knee", "[fit]") {
  CHECK(huber(0.03, 0.05) == Catch::Approx(4.5e-4).epsilon(1e-15));
  CHECK(huber(-0.1, 0.05) == Catch::Approx(3.75e-3).epsilon(1e-15));
  // continuity at the knee is exact: both branches evaluate to tau^2/2
  double tau = 0.05;
  double quad = 0.5 * tau * tau;
  double lin = tau * (tau - 0.5 * tau);
  CHECK(quad == lin);
  CHECK(huber(tau, tau) == quad);
  CHECK(huber(std::nextafter(tau, 1.0), tau) >= quad);
  CHECK_THROWS_AS(huber(0.1, 0.0), ConfigError);
}

TEST_CASE("e_hinge_penalty matches its closed form and goes silent", "[fit]") {
  // silent whenever e >= m/kappa
  CHECK(e_hinge_penalty(1.0, 1.2, 1.5, 10.0) == 0.0);
  CHECK(e_hinge_penalty(0.8, 1.2, 1.5, 10.0) == 0.0);  // e = m/kappa exactly
  // e = m/(2 kappa): penalty = lambda * (ln 2)^2
  double m = 1.2, kappa = 1.5;
  CHECK(e_hinge_penalty(m / (2.0 * kappa), m, kappa, 10.0) ==
        Catch::Approx(4.804530139182014).epsilon(1e-14));
  CHECK_THROWS_AS(e_hinge_penalty(0.0, 1.0, 1.5, 1.0), ConfigError);
  CHECK_THROWS_AS(e_hinge_penalty(1.0, 1.0, 1.0, 1.0), ConfigError);
}

TEST_CASE("objective composes huber terms and the hinge", "[fit]") {
  std::vector<GridRecord> recs{{100.0, 50.0, 50.0, 2.0}};
  Grid grid("one", 10.0, LossKind::OtherBounded, recs);
  FitConfig config;

  // chinchilla params reproducing the observation exactly
  std::vector<double> exact{2.0 - 2.0 / std::pow(100.0, 0.3) - 3.0 / std::pow(50.0, 0.4),
                            2.0, 0.3, 3.0, 0.4};
  CHECK(objective(FormId::Chinchilla, exact, grid, config) ==
        Catch::Approx(0.0).margin(1e-18));

  // single record with a known residual of 0.03 in log space
  std::vector<GridRecord> recs2{{100.0, 50.0, 50.0, 2.0 * std::exp(-0.03)}};
  Grid grid2("one2", 10.0, LossKind::OtherBounded, recs2);
  double pred = predict(FormId::Chinchilla, exact, recs2[0].point(), 10.0);
  double resid = std::log(pred) - std::log(recs2[0].loss);
  CHECK(resid == Catch::Approx(0.03).epsilon(1e-9));
  CHECK(objective(FormId::Chinchilla, exact, grid2, config) ==
        Catch::Approx(4.5e-4).epsilon(1e-8));

  // the hinge adds its closed-form value on top of the data term
  FitConfig hinged = config;
  hinged.e_hinge = HingeConfig{1.5, 0.25};
  std::vector<double> ours_p{grid.min_loss() / 3.0, 1.0, 0.4, 1.0, 0.4,
                             0.1, 0.2, 0.5};
  double base = objective(FormId::Ours, ours_p, grid, config);
  double with = objective(FormId::Ours, ours_p, grid, hinged);
  double lambda = 0.25 * static_cast<double>(grid.size());
  double expected_pen = e_hinge_penalty(ours_p[0], grid.min_loss(), 1.5, lambda);
  CHECK(expected_pen > 0.0);
  CHECK(with - base == Catch::Approx(expected_pen).epsilon(1e-12));

  // hinge on an additive baseline is a configuration error
  CHECK_THROWS_AS(objective(FormId::Chinchilla, exact, grid, hinged), ConfigError);
}

TEST_CASE("sample_init respects the per-class ranges", "[fit]") {
  FitConfig config;
  Rng rng(123);
  for (int i = 0; i < 1000; ++i) {
    auto p = sample_init(FormId::Ours, rng, config);
    CHECK((p[0] >= 0.5 && p[0] <= 3.0));    // e
    for (std::size_t j : {1u, 3u, 5u})      // a, b, c
      CHECK((p[j] >= 0.01 && p[j] <= 1000.0));
    for (std::size_t j : {2u, 4u, 6u, 7u})  // exponents
      CHECK((p[j] >= 0.1 && p[j] <= 0.7));
  }

  // identical streams give identical draw sequences
  for (int i = 0; i < 50; ++i) {
    Rng a = Rng::stream(9, static_cast<std::uint64_t>(i));
    Rng b = Rng::stream(9, static_cast<std::uint64_t>(i));
    CHECK(sample_init(FormId::BnslK2, a, config) ==
          sample_init(FormId::BnslK2, b, config));
  }

  // BNSL break scales draw from the scale range
  Rng rng_c(7);
  for (int i = 0; i < 200; ++i) {
    auto p = sample_init(FormId::BnslK1, rng_c, config);
    CHECK((p[3] >= 10.0 && p[3] <= 1e6));
  }

  CHECK_THROWS_AS(sample_init(FormId::Farseer, rng, config), ConfigError);
  FitConfig with_anchor = config;
  with_anchor.farseer_anchor =
      std::vector<double>{-0.03, 0.45, 0.4, 11.0, -0.08, 0.5, 1.0, 0.17, -2.0};
  Rng rng_d(5);
  for (int i = 0; i < 200; ++i) {
    auto p = sample_init(FormId::Farseer, rng_d, with_anchor);
    for (std::size_t j = 0; j < p.size(); ++j) {
      double rel = std::abs(p[j] - (*with_anchor.farseer_anchor)[j]) /
                   std::abs((*with_anchor.farseer_anchor)[j]);
      CHECK(rel <= 0.3 + 1e-12);
    }
  }
}

TEST_CASE("implementation gradient matches independent central differences",
          "[fit]") {
  Grid grid = small_synth();
  FitConfig config;
  config.farseer_anchor =
      std::vector<double>{-0.03, 0.45, 0.4, 11.0, -0.08, 0.5, 1.0, 0.17, -2.0};
  for (FormId form : {FormId::Ours, FormId::Chinchilla, FormId::M4, FormId::BnslK1}) {
    Rng rng(31 + static_cast<int>(form));
    for (int trial = 0; trial < 5; ++trial) {
      auto p = sample_init(form, rng, config);
      auto x = to_unconstrained(form, p);
      Eigen::VectorXd xv =
          Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<long>(x.size()));
      ObjectiveFn f = [&](const Eigen::VectorXd& v) {
        auto q = from_unconstrained(
            form, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
        return objective(form, q, grid, config);
      };
      double f0 = f(xv);
      if (!std::isfinite(f0)) continue;
      Eigen::VectorXd g_impl = fd_gradient(f, xv, MinimizeOptions{}.fd_step);
      Eigen::VectorXd g_check = fd_gradient(f, xv, 1e-6);
      double denom = g_check.lpNorm<Eigen::Infinity>();
      if (denom < 1e-4 * std::max(1.0, std::abs(f0))) continue;  // flat plateau
      CHECK((g_impl - g_check).lpNorm<Eigen::Infinity>() / denom < 1e-4);
    }
  }
}

TEST_CASE("fit recovers a noiseless synthetic surface", "[fit]") {
  Grid grid = small_synth();
  FitConfig config;
  config.restarts = 10;
  config.seed = 3;
  config.workers = 0;
  FitResult res = fit(FormId::Ours, grid, config);
  CHECK(res.objective < 1e-10);
  CHECK(prediction_rmse(res.params, truth(), grid) < 1e-6);
  // the stored objective is the recomputed objective at the stored params
  CHECK(res.objective ==
        Catch::Approx(objective(res.params, grid, config)).epsilon(1e-10));
  CHECK(res.restart_stats.size() == 10);
}

TEST_CASE("every baseline form refits its own synthetic surface", "[fit]") {
  // Generate data from known parameters of each form and refit it: the
  // objective must collapse to ~0 and in-sample predictions must match.
  struct Case {
    FormId form;
    std::vector<double> truth;
  };
  std::vector<Case> cases{
      {FormId::Chinchilla, {1.0, 400.0, 0.34, 410.0, 0.28}},
      {FormId::Kaplan, {1e5, 0.5, 1e4, 0.4}},
      {FormId::Muennighoff, {1.0, 100.0, 0.3, 200.0, 0.3, 4.0, 4.0}},
      {FormId::M4, {0.5, 1.2, 50.0, 0.35}},
      {FormId::BnslK1, {0.2, 5.0, 0.3, 1e4, 0.2, 1.0}},
      {FormId::Farseer,
       {-0.002, 0.5, 0.7, 2.0, 0.05, 0.0, 0.1, 0.1, -2.0}},
  };
  double l0 = 10.0;
  FitConfig config;
  config.restarts = 8;
  config.seed = 37;
  for (const auto& c : cases) {
    std::vector<GridRecord> recs;
    for (double n : {1e4, 1e5, 1e6, 1e7, 1e8})
      for (double d : {1e6, 1e7, 1e8})
        for (double mult : {1.0, 8.0}) {
          Point pt{n, d, mult * d};
          double loss = predict(c.form, c.truth, pt, l0);
          recs.push_back({pt.n, pt.d, pt.t, loss});
        }
    Grid grid("self", l0, LossKind::OtherBounded, recs);
    FitConfig cfg = config;
    if (c.form == FormId::Farseer) cfg.farseer_anchor = c.truth;
    FitResult res = fit(c.form, grid, cfg);
    INFO(form_info(c.form).name);
    CHECK(res.objective < 1e-8);
    for (const auto& rec : grid.records()) {
      double pred = predict(res.params, rec.point(), l0, cfg.eval);
      CHECK(std::abs(std::log(pred) - std::log(rec.loss)) < 1e-3);
    }
    // a warm refit from the generator itself converges on the spot
    FitResult warm = warm_refit(c.form, grid, c.truth, cfg);
    CHECK(warm.objective < 1e-12);
  }
}

TEST_CASE("degenerate one-record fit interpolates", "[fit]") {
  std::vector<GridRecord> recs{{100.0, 50.0, 50.0, 2.0}};
  Grid grid("one", 10.0, LossKind::OtherBounded, recs);
  FitConfig config;
  config.restarts = 5;
  FitResult res = fit(FormId::Chinchilla, grid, config);
  CHECK(res.objective < 1e-12);
}

TEST_CASE("warm_refit honors its contracts", "[fit]") {
  Grid grid = small_synth();
  FitConfig config;
  config.restarts = 10;
  config.seed = 3;
  FitResult base = fit(FormId::Ours, grid, config);

  // refit from the optimum returns it (objective cannot increase)
  FitResult again = warm_refit(base.params, grid, config);
  CHECK(again.objective <= base.objective + 1e-12);

  // perturbed start on noiseless data walks back to the optimum
  FormParams nudged = base.params;
  for (double& v : nudged.values) v *= 1.05;
  FitResult back = warm_refit(nudged, grid, config);
  CHECK(back.objective < 1e-8);

  FormParams bad = base.params;
  bad.values[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(warm_refit(bad, grid, config), ConfigError);
}

TEST_CASE("huber optimum equals least-squares optimum inside the knee", "[fit]") {
  Grid grid = small_synth(0.002, 17);  // residuals well under tau = 0.05
  FitConfig a;
  a.restarts = 8;
  a.seed = 5;
  FitConfig b = a;
  b.huber_tau = 1e6;  // quadratic everywhere: plain least squares
  FitResult fa = fit(FormId::Ours, grid, a);
  FitResult fb = fit(FormId::Ours, grid, b);
  for (const auto& rec : grid.records()) {
    double pa = predict(fa.params, rec.point(), grid.l0());
    double pb = predict(fb.params, rec.point(), grid.l0());
    CHECK(std::abs(std::log(pa) - std::log(pb)) < 1e-5);
  }
}

TEST_CASE("fit is deterministic across worker counts", "[fit]") {
  Grid grid = small_synth(0.01, 9);
  FitConfig serial;
  serial.restarts = 6;
  serial.seed = 11;
  serial.workers = 1;
  FitConfig parallel = serial;
  parallel.workers = 3;
  FitResult r1 = fit(FormId::OursNoOverfit, grid, serial);
  FitResult r2 = fit(FormId::OursNoOverfit, grid, parallel);
  CHECK(r1.objective == r2.objective);
  REQUIRE(r1.params.values.size() == r2.params.values.size());
  for (std::size_t i = 0; i < r1.params.values.size(); ++i)
    CHECK(r1.params.values[i] == r2.params.values[i]);
  for (std::size_t i = 0; i < r1.restart_stats.size(); ++i) {
    CHECK(r1.restart_stats[i].converged == r2.restart_stats[i].converged);
    CHECK(r1.restart_stats[i].objective == r2.restart_stats[i].objective);
  }
}

TEST_CASE("hinge is a strict no-op when the floor is already honored", "[fit]") {
  // Truth has e = 0.5 and the lattice never observes losses anywhere near
  // min/kappa, so the hinge stays silent and the fits match bitwise.
  Grid grid = small_synth();
  FitConfig plain;
  plain.restarts = 6;
  plain.seed = 21;
  FitConfig hinged = plain;
  hinged.e_hinge = HingeConfig{};
  FitResult f1 = fit(FormId::Ours, grid, plain);
  FitResult f2 = fit(FormId::Ours, grid, hinged);
  REQUIRE(f1.params.values.size() == f2.params.values.size());
  CHECK(f1.params.values[0] >= grid.min_loss() / 1.5);
  // At a silent-hinge point the two objectives are bitwise identical...
  CHECK(objective(f1.params, grid, plain) == objective(f1.params, grid, hinged));
  // ...and the fitted predictions agree to optimizer tolerance.
  for (const auto& rec : grid.records()) {
    double p1 = predict(f1.params, rec.point(), grid.l0());
    double p2 = predict(f2.params, rec.point(), grid.l0());
    CHECK(std::abs(std::log(p1) - std::log(p2)) < 1e-6);
  }
}

TEST_CASE("fit failure carries per-restart diagnostics", "[fit]") {
  Grid grid = small_synth(0.05, 23);
  FitConfig config;
  config.restarts = 4;
  config.max_iters = 1;  // nothing converges in one iteration
  config.grad_tol = 1e-16;
  try {
    fit(FormId::Ours, grid, config);
    FAIL("expected FitError");
  } catch (const FitError& err) {
    CHECK(err.restarts.size() == 4);
    for (const auto& d : err.restarts) CHECK_FALSE(d.converged);
  }
}

TEST_CASE("config hash separates distinct configurations", "[fit]") {
  FitConfig a, b;
  b.huber_tau = 0.06;
  CHECK(config_hash(a) == config_hash(FitConfig{}));
  CHECK(config_hash(a) != config_hash(b));
}
