#pragma once

// Holdout construction, extrapolation metrics, and bootstrap confidence
// intervals over refitted parameters and derived metrics.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scalekit/errors.hpp"
#include "scalekit/fit.hpp"
#include "scalekit/grid.hpp"
#include "scalekit/parallel.hpp"
#include "scalekit/rng.hpp"

namespace scalekit {

enum class SplitKind { HighAxis, KFold, InSample };
enum class Axis { C, D, N, T };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::C: return "c";
    case Axis::D: return "d";
    case Axis::N: return "n";
    case Axis::T: return "t";
  }
  return "?";
}

struct SplitSpec {
  SplitKind kind = SplitKind::HighAxis;
  Axis axis = Axis::C;
  double fraction = 0.10;
  int k = 5;
  std::uint64_t seed = 0;

  std::string name() const {
    switch (kind) {
      case SplitKind::HighAxis: return std::string("high-") + axis_name(axis);
      case SplitKind::KFold: return "kfold";
      case SplitKind::InSample: return "in-sample";
    }
    return "?";
  }
};

inline std::optional<SplitSpec> parse_split(const std::string& s) {
  SplitSpec spec;
  if (s == "in-sample") {
    spec.kind = SplitKind::InSample;
    return spec;
  }
  if (s == "kfold") {
    spec.kind = SplitKind::KFold;
    return spec;
  }
  if (s.rfind("high-", 0) == 0 && s.size() == 6) {
    spec.kind = SplitKind::HighAxis;
    switch (s[5]) {
      case 'c': spec.axis = Axis::C; return spec;
      case 'd': spec.axis = Axis::D; return spec;
      case 'n': spec.axis = Axis::N; return spec;
      case 't': spec.axis = Axis::T; return spec;
    }
  }
  return std::nullopt;
}

inline double axis_value(const GridRecord& rec, Axis axis, double k_flops) {
  switch (axis) {
    case Axis::C: return rec.c ? *rec.c : k_flops * rec.n * rec.t;
    case Axis::D: return rec.d;
    case Axis::N: return rec.n;
    case Axis::T: return rec.t;
  }
  return 0.0;
}

// Groupwise extrapolation split: records grouped by exact axis value, groups
// taken from the top until the holdout first reaches fraction * |grid| rows.
// The group that crosses the threshold is included whole, so the realized
// holdout can exceed the target share. No group is ever split.
inline std::pair<Grid, Grid> split_high_axis(const Grid& grid, Axis axis,
                                             double fraction = 0.10,
                                             double k_flops = 6.0) {
  if (!(fraction > 0.0)) throw ConfigError("holdout fraction must be > 0");
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < grid.size(); ++i)
    groups[axis_value(grid.records()[i], axis, k_flops)].push_back(i);
  if (groups.size() < 2)
    throw ConfigError("high-axis split needs at least 2 distinct axis groups");

  double target = fraction * static_cast<double>(grid.size());
  std::vector<std::size_t> holdout, train;
  auto it = groups.rbegin();
  for (; it != groups.rend(); ++it) {
    if (static_cast<double>(holdout.size()) >= target) break;
    holdout.insert(holdout.end(), it->second.begin(), it->second.end());
  }
  for (; it != groups.rend(); ++it)
    train.insert(train.end(), it->second.begin(), it->second.end());
  if (train.empty())
    throw ConfigError("high-axis split leaves an empty training set");
  std::sort(train.begin(), train.end());
  std::sort(holdout.begin(), holdout.end());
  return {grid.subset(train), grid.subset(holdout)};
}

// Uniform-random partition into k near-equal folds, deterministic by seed.
inline std::vector<std::pair<Grid, Grid>> split_kfold(const Grid& grid, int k,
                                                      std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold requires k >= 2");
  if (grid.size() < static_cast<std::size_t>(k))
    throw ConfigError("kfold requires |grid| >= k");
  std::vector<std::size_t> idx(grid.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);

  std::size_t n = idx.size(), base = n / static_cast<std::size_t>(k),
              extra = n % static_cast<std::size_t>(k);
  std::vector<std::pair<Grid, Grid>> out;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    std::vector<std::size_t> hold(idx.begin() + static_cast<long>(pos),
                                  idx.begin() + static_cast<long>(pos + len));
    std::vector<std::size_t> train;
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<long>(pos));
    train.insert(train.end(), idx.begin() + static_cast<long>(pos + len), idx.end());
    pos += len;
    std::sort(hold.begin(), hold.end());
    std::sort(train.begin(), train.end());
    out.emplace_back(grid.subset(train), grid.subset(hold));
  }
  return out;
}

inline void check_metric_inputs(const std::vector<double>& preds,
                                const std::vector<double>& obs) {
  if (preds.size() != obs.size())
    throw ConfigError("metric inputs have mismatched lengths");
  if (preds.empty()) throw ConfigError("metric inputs are empty");
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (!(preds[i] > 0.0) || !(obs[i] > 0.0))
      throw ConfigError("metric inputs must be positive");
}

inline double rmse_log(const std::vector<double>& preds, const std::vector<double>& obs) {
  check_metric_inputs(preds, obs);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double r = std::log(preds[i]) - std::log(obs[i]);
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(preds.size()));
}

inline double mbe_log(const std::vector<double>& preds, const std::vector<double>& obs) {
  check_metric_inputs(preds, obs);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    sum += std::log(preds[i]) - std::log(obs[i]);
  return sum / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapStat {
  std::string name;
  double std_dev = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

struct BootstrapSummary {
  std::vector<BootstrapStat> params;
  std::vector<BootstrapStat> metrics;
  int resamples = 0;
  int converged = 0;
  int failed = 0;
};

namespace detail {

inline BootstrapStat summarize(const std::string& name, std::vector<double> values) {
  BootstrapStat stat;
  stat.name = name;
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  auto quantile = [&](double p) {
    if (n == 1) return values[0];
    double pos = p * static_cast<double>(n - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= n) return values[n - 1];
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
  };
  stat.q025 = quantile(0.025);
  stat.q975 = quantile(0.975);
  if (n > 1) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    stat.std_dev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return stat;
}

inline std::vector<double> predictions(const FormParams& params, const Grid& grid,
                                       const EvalOptions& opts) {
  std::vector<double> preds;
  preds.reserve(grid.size());
  for (const auto& rec : grid.records())
    preds.push_back(predict(params, rec.point(), grid.l0(), opts));
  return preds;
}

inline std::vector<double> observations(const Grid& grid) {
  std::vector<double> obs;
  obs.reserve(grid.size());
  for (const auto& rec : grid.records()) obs.push_back(rec.loss);
  return obs;
}

}  // namespace detail

// Resamples training rows with replacement, warm-refits each resample from
// the point estimate, and reports std plus 2.5%/97.5% quantiles for every
// parameter and for derived holdout metrics when a holdout grid is given.
inline BootstrapSummary bootstrap(const FitResult& point_estimate, const Grid& grid,
                                  const FitConfig& config, int b = 200,
                                  const Grid* holdout = nullptr) {
  if (b < 1) throw ConfigError("bootstrap requires b >= 1");
  const FormInfo& info = form_info(point_estimate.form);
  std::size_t np = info.params.size();

  std::vector<std::vector<double>> param_draws(np);
  std::vector<double> rmse_draws, mbe_draws;
  std::vector<char> ok(static_cast<std::size_t>(b), 0);
  std::vector<std::vector<double>> results(static_cast<std::size_t>(b));

  parallel_for(static_cast<std::size_t>(b), config.workers, [&](std::size_t r) {
    Rng rng = Rng::stream(config.seed ^ 0xb007u, r);
    std::vector<std::size_t> picks(grid.size());
    for (auto& p : picks) p = rng.below(grid.size());
    std::sort(picks.begin(), picks.end());
    Grid resample = grid.subset(picks);
    try {
      FitResult refit = warm_refit(point_estimate.form, resample,
                                   point_estimate.params.values, config);
      std::vector<double> row = refit.params.values;
      if (holdout) {
        auto preds = detail::predictions(refit.params, *holdout, config.eval);
        auto obs = detail::observations(*holdout);
        row.push_back(rmse_log(preds, obs));
        row.push_back(mbe_log(preds, obs));
      }
      results[r] = std::move(row);
      ok[r] = 1;
    } catch (const FitError&) {
      ok[r] = 0;
    }
  });

  BootstrapSummary summary;
  summary.resamples = b;
  for (int r = 0; r < b; ++r) {
    if (!ok[static_cast<std::size_t>(r)]) {
      ++summary.failed;
      continue;
    }
    ++summary.converged;
    const auto& row = results[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < np; ++i) param_draws[i].push_back(row[i]);
    if (holdout) {
      rmse_draws.push_back(row[np]);
      mbe_draws.push_back(row[np + 1]);
    }
  }
  if (summary.failed * 2 > b)
    throw FitError("bootstrap: more than half of the resample fits failed", {});
  for (std::size_t i = 0; i < np; ++i)
    summary.params.push_back(detail::summarize(info.params[i].name, param_draws[i]));
  if (holdout) {
    summary.metrics.push_back(detail::summarize("rmse_log", rmse_draws));
    summary.metrics.push_back(detail::summarize("mbe_log", mbe_draws));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Protocol evaluation

struct ResidualRow {
  double n, d, t;
  double observed, predicted;
  bool held_out;
};

struct EvalCell {
  FormId form = FormId::Ours;
  SplitSpec protocol;
  bool ok = false;
  std::string error;
  double rmse = 0.0;
  double mbe = 0.0;
  std::size_t holdout_size = 0;
  std::optional<double> rmse_std;  // cross-fold std (kfold) or bootstrap std
  std::vector<ResidualRow> residuals;
};

struct EvalReport {
  std::vector<EvalCell> cells;
};

namespace detail {

inline void score_into(EvalCell& cell, const FormParams& params, const Grid& train,
                       const Grid& holdout, const EvalOptions& opts) {
  auto preds = predictions(params, holdout, opts);
  auto obs = observations(holdout);
  cell.rmse = rmse_log(preds, obs);
  cell.mbe = mbe_log(preds, obs);
  cell.holdout_size = holdout.size();
  auto train_preds = predictions(params, train, opts);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& rec = train.records()[i];
    cell.residuals.push_back({rec.n, rec.d, rec.t, rec.loss, train_preds[i], false});
  }
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    const auto& rec = holdout.records()[i];
    cell.residuals.push_back({rec.n, rec.d, rec.t, rec.loss, preds[i], true});
  }
}

}  // namespace detail

// Fits and scores every (form, protocol) pair. Failed cells are flagged in
// the report instead of aborting the run.
inline EvalReport evaluate(const std::vector<FormId>& forms, const Grid& grid,
                           const std::vector<SplitSpec>& protocols,
                           const FitConfig& config, int bootstrap_b = 0) {
  EvalReport report;
  for (FormId form : forms)
    for (const SplitSpec& spec : protocols) {
      EvalCell cell;
      cell.form = form;
      cell.protocol = spec;
      try {
        switch (spec.kind) {
          case SplitKind::InSample: {
            FitResult res = fit(form, grid, config);
            detail::score_into(cell, res.params, grid, grid, config.eval);
            // In-sample rows double as train and holdout; keep one copy,
            // flagged as training points.
            cell.residuals.resize(grid.size());
            if (bootstrap_b > 0) {
              BootstrapSummary bs = bootstrap(res, grid, config, bootstrap_b, &grid);
              cell.rmse_std = bs.metrics[0].std_dev;
            }
            break;
          }
          case SplitKind::HighAxis: {
            auto [train, holdout] =
                split_high_axis(grid, spec.axis, spec.fraction, config.eval.k_flops);
            FitResult res = fit(form, train, config);
            detail::score_into(cell, res.params, train, holdout, config.eval);
            if (bootstrap_b > 0) {
              BootstrapSummary bs =
                  bootstrap(res, train, config, bootstrap_b, &holdout);
              cell.rmse_std = bs.metrics[0].std_dev;
            }
            break;
          }
          case SplitKind::KFold: {
            auto folds = split_kfold(grid, spec.k, spec.seed);
            std::vector<double> fold_rmse, fold_mbe;
            std::size_t total = 0;
            for (auto& [train, holdout] : folds) {
              FitResult res = fit(form, train, config);
              auto preds = detail::predictions(res.params, holdout, config.eval);
              auto obs = detail::observations(holdout);
              fold_rmse.push_back(rmse_log(preds, obs));
              fold_mbe.push_back(mbe_log(preds, obs));
              total += holdout.size();
              for (std::size_t i = 0; i < holdout.size(); ++i) {
                const auto& rec = holdout.records()[i];
                cell.residuals.push_back(
                    {rec.n, rec.d, rec.t, rec.loss, preds[i], true});
              }
            }
            double mean_rmse = 0.0, mean_mbe = 0.0;
            for (double v : fold_rmse) mean_rmse += v;
            for (double v : fold_mbe) mean_mbe += v;
            mean_rmse /= static_cast<double>(fold_rmse.size());
            mean_mbe /= static_cast<double>(fold_mbe.size());
            double ss = 0.0;
            for (double v : fold_rmse) ss += (v - mean_rmse) * (v - mean_rmse);
            cell.rmse = mean_rmse;
            cell.mbe = mean_mbe;
            cell.rmse_std =
                fold_rmse.size() > 1
                    ? std::sqrt(ss / static_cast<double>(fold_rmse.size() - 1))
                    : 0.0;
            cell.holdout_size = total;
            break;
          }
        }
        cell.ok = true;
      } catch (const std::exception& ex) {
        cell.ok = false;
        cell.error = ex.what();
      }
      report.cells.push_back(std::move(cell));
    }
  return report;
}

}  // namespace scalekit
