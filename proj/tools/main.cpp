// Command-line surface for the scaling-law toolkit: ingest grids, fit forms,
// evaluate extrapolation protocols, solve cost-aware allocations, generate
// synthetic surfaces, and audit limit behavior.
//
// Exit codes: 0 ok, 2 configuration error, 3 fit failure, 4 infeasible or
// failed allocation, 5 I/O error. Errors also emit a machine-readable JSON
// object on stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scalekit/alloc.hpp"
#include "scalekit/csv.hpp"
#include "scalekit/eval.hpp"
#include "scalekit/fit.hpp"
#include "scalekit/forms.hpp"
#include "scalekit/grid.hpp"
#include "scalekit/jsonio.hpp"
#include "scalekit/serialize.hpp"
#include "scalekit/verify.hpp"

namespace sk = scalekit;

namespace {

struct GridFlags {
  std::string path;
  std::string schema_file;
  std::string name = "grid";
  std::string loss_kind = "cross-entropy";
  std::optional<int> k_outcomes;
  std::optional<double> l0_override;
  std::vector<std::string> columns;     // name=csv_header pairs
  std::vector<std::string> filters;     // tag=value pairs
  std::string aggregate = "mean";
  double clip_margin = 0.01;

  void attach(CLI::App* cmd, bool required = true) {
    auto* opt = cmd->add_option("--grid", path, "grid CSV or canonical grid JSON");
    if (required) opt->required();
    cmd->add_option("--schema-file", schema_file,
                    "JSON with {\"columns\": {...}, \"filters\": {...}}");
    cmd->add_option("--name", name, "grid provenance label");
    cmd->add_option("--loss-kind", loss_kind,
                    "cross-entropy | relative-l2 | other-bounded");
    cmd->add_option("--k-outcomes", k_outcomes,
                    "outcome count for the cross-entropy baseline");
    cmd->add_option("--l0", l0_override, "explicit baseline loss");
    cmd->add_option("--col", columns,
                    "column mapping, e.g. --col n=params --col loss=val_loss");
    cmd->add_option("--filter", filters, "tag filter, e.g. --filter recipe=base");
    cmd->add_option("--aggregate", aggregate, "replicate aggregation: mean | min");
    cmd->add_option("--clip-margin", clip_margin, "clip losses to l0 - margin");
  }

  static void apply_column(sk::CsvSchema& schema, const std::string& key,
                           const std::string& value) {
    if (key == "n") schema.n = value;
    else if (key == "d") schema.d = value;
    else if (key == "d_budget") schema.d_budget = value;
    else if (key == "t") schema.t = value;
    else if (key == "epochs") schema.epochs = value;
    else if (key == "loss") schema.loss = value;
    else if (key == "c") schema.c = value;
    else if (key == "seed") schema.seed = value;
    else throw sk::ConfigError("unknown column key: " + key);
  }

  sk::Grid load() const {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
      return sk::load_grid_json(path);
    sk::GridMeta meta;
    meta.name = name;
    auto kind = sk::parse_loss_kind(loss_kind);
    if (!kind) throw sk::ConfigError("unknown loss kind: " + loss_kind);
    meta.loss_kind = *kind;
    meta.k_outcomes = k_outcomes;
    meta.l0_override = l0_override;
    sk::CsvSchema schema;
    sk::PreprocessOptions opts;
    if (!schema_file.empty()) {
      std::ifstream in(schema_file);
      if (!in) throw sk::IoError("cannot open " + schema_file);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& ex) {
        throw sk::IoError(schema_file + std::string(": ") + ex.what());
      }
      if (j.contains("columns"))
        for (const auto& [key, value] : j.at("columns").items())
          apply_column(schema, key, value.get<std::string>());
      if (j.contains("filters"))
        for (const auto& [key, value] : j.at("filters").items())
          opts.tag_filters[key] = value.get<std::string>();
    }
    for (const auto& pair : columns) {  // inline flags override the file
      auto eq = pair.find('=');
      if (eq == std::string::npos)
        throw sk::ConfigError("--col expects name=header, got " + pair);
      apply_column(schema, pair.substr(0, eq), pair.substr(eq + 1));
    }
    if (aggregate == "mean") opts.aggregate = sk::AggregateMode::Mean;
    else if (aggregate == "min") opts.aggregate = sk::AggregateMode::Min;
    else throw sk::ConfigError("unknown aggregate mode: " + aggregate);
    opts.clip_margin = clip_margin;
    for (const auto& pair : filters) {
      auto eq = pair.find('=');
      if (eq == std::string::npos)
        throw sk::ConfigError("--filter expects tag=value, got " + pair);
      opts.tag_filters[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    return sk::load_grid(path, meta, schema, opts);
  }
};

struct FitFlags {
  std::string form = "ours";
  int restarts = 0;
  double tau = 0.05;
  int max_iters = 500;
  double grad_tol = 0.0;
  std::uint64_t seed = 0;
  int workers = 0;
  bool e_hinge = false;
  double hinge_kappa = 1.5;
  double hinge_lambda_per_row = 0.25;
  std::vector<double> farseer_anchor;
  std::string m4_axis = "d";
  std::string bnsl_scalar = "auto";
  double k_flops = 6.0;

  void attach(CLI::App* cmd, bool with_form = true) {
    if (with_form) cmd->add_option("--form", form, "form id");
    cmd->add_option("--restarts", restarts,
                    "multistart count (0 = default: 30, 200 for farseer)");
    cmd->add_option("--tau", tau, "huber transition in log-loss units");
    cmd->add_option("--max-iters", max_iters, "optimizer iteration cap");
    cmd->add_option("--grad-tol", grad_tol, "gradient max-norm stopping rule (0 = per-form default)");
    cmd->add_option("--seed", seed, "master RNG seed");
    cmd->add_option("--workers", workers, "worker threads (0 = auto)");
    cmd->add_flag("--e-hinge", e_hinge, "one-sided log-space prior on e");
    cmd->add_option("--hinge-kappa", hinge_kappa, "hinge floor offset");
    cmd->add_option("--hinge-lambda-per-row", hinge_lambda_per_row,
                    "hinge weight per training row");
    cmd->add_option("--farseer-anchor", farseer_anchor,
                    "9 anchor values for farseer restarts")
        ->delimiter(',');
    cmd->add_option("--m4-axis", m4_axis, "m4 input axis: n | d | c");
    cmd->add_option("--bnsl-scalar", bnsl_scalar,
                    "bnsl composite scalar: auto | n | d | t");
    cmd->add_option("--k", k_flops, "FLOPs-per-parameter-example constant");
  }

  sk::FormId form_id() const {
    auto id = sk::parse_form_id(form);
    if (!id)
      throw sk::ConfigError("unknown form '" + form +
                            "'; valid ids: " + sk::known_form_names());
    return *id;
  }

  sk::FitConfig config() const {
    sk::FitConfig c;
    c.restarts = restarts;
    c.huber_tau = tau;
    c.max_iters = max_iters;
    c.grad_tol = grad_tol;
    c.seed = seed;
    c.workers = workers;
    if (e_hinge) c.e_hinge = sk::HingeConfig{hinge_kappa, hinge_lambda_per_row};
    if (!farseer_anchor.empty()) c.farseer_anchor = farseer_anchor;
    if (m4_axis == "n") c.eval.m4_axis = sk::M4Axis::N;
    else if (m4_axis == "d") c.eval.m4_axis = sk::M4Axis::D;
    else if (m4_axis == "c") c.eval.m4_axis = sk::M4Axis::C;
    else throw sk::ConfigError("unknown m4 axis: " + m4_axis);
    if (bnsl_scalar == "auto")
      c.eval.bnsl_scalar = sk::CompositeScalar::ComputeElseKNT;
    else if (bnsl_scalar == "n") c.eval.bnsl_scalar = sk::CompositeScalar::N;
    else if (bnsl_scalar == "d") c.eval.bnsl_scalar = sk::CompositeScalar::D;
    else if (bnsl_scalar == "t") c.eval.bnsl_scalar = sk::CompositeScalar::T;
    else throw sk::ConfigError("unknown bnsl scalar: " + bnsl_scalar);
    c.eval.k_flops = k_flops;
    return c;
  }
};

sk::OursParams ours_from_params(const sk::FormParams& p) {
  if (p.form != sk::FormId::Ours)
    throw sk::ConfigError("this command requires parameters of the 'ours' form");
  return sk::detail::ours_from(p.values);
}

void write_manifest_comment(std::ostream& out, const sk::Manifest& m) {
  out << "# tool: scalekit " << sk::kVersion << "\n";
  out << "# command: " << m.command << "\n";
  out << "# seed: " << m.seed << "\n";
  out << "# config_hash: " << m.config_hash << "\n";
}

int fail_with(int code, const std::string& kind, const std::string& message) {
  sk::json::Object inner;
  inner["exit"] = code;
  inner["kind"] = kind;
  inner["message"] = message;
  sk::json::Object err;
  err["error"] = inner;
  std::cerr << sk::json::dump(err, 0) << "\n";
  return code;
}

double resolve_l0(const std::optional<double>& flag, const sk::LoadedParams& loaded) {
  if (flag) return *flag;
  if (loaded.l0) return *loaded.l0;
  throw sk::ConfigError("no l0 in params file; pass --l0");
}

// ---------------------------------------------------------------------------

int cmd_fit(const GridFlags& grid_flags, const FitFlags& fit_flags, int bootstrap_b,
            const std::string& out_path) {
  sk::Grid grid = grid_flags.load();
  sk::FitConfig config = fit_flags.config();
  sk::FormId form = fit_flags.form_id();
  sk::FitResult result = sk::fit(form, grid, config);

  std::optional<sk::BootstrapSummary> boot;
  if (bootstrap_b > 0) boot = sk::bootstrap(result, grid, config, bootstrap_b);

  sk::Manifest manifest{"fit", config.seed, sk::config_hash(config)};
  std::string text =
      sk::json::dump(sk::fit_result_to_json(result, boot, &manifest, grid.l0()));
  if (out_path.empty() || out_path == "-") std::cout << text;
  else sk::write_text_file(out_path, text);

  std::ostringstream note;
  note.precision(17);
  note << "fit " << sk::form_info(form).name << " on " << grid.name() << " ("
       << grid.size() << " rows): objective " << result.objective << "\n";
  if (grid.clipped_count())
    note << "note: " << grid.clipped_count() << " losses clipped to l0 - margin\n";
  if (grid.monotonicity_violations())
    note << "note: " << grid.monotonicity_violations()
         << " rows rise in loss along t within an (n, d) cell; the running-min "
            "convention may not hold for this grid\n";
  std::cerr << note.str();
  return 0;
}

int cmd_eval(const GridFlags& grid_flags, const FitFlags& fit_flags,
             const std::vector<std::string>& form_names,
             const std::vector<std::string>& protocol_names, double fraction,
             int kfold_k, std::uint64_t split_seed, int bootstrap_b,
             const std::string& out_path, const std::string& csv_path,
             const std::string& residuals_path) {
  sk::Grid grid = grid_flags.load();
  sk::FitConfig config = fit_flags.config();

  std::vector<sk::FormId> forms;
  for (const auto& name : form_names) {
    auto id = sk::parse_form_id(name);
    if (!id)
      throw sk::ConfigError("unknown form '" + name +
                            "'; valid ids: " + sk::known_form_names());
    forms.push_back(*id);
  }
  std::vector<sk::SplitSpec> protocols;
  for (const auto& name : protocol_names) {
    auto spec = sk::parse_split(name);
    if (!spec)
      throw sk::ConfigError("unknown protocol '" + name +
                            "'; expected high-c|high-d|high-n|high-t|kfold|in-sample");
    spec->fraction = fraction;
    spec->k = kfold_k;
    spec->seed = split_seed;
    protocols.push_back(*spec);
  }

  sk::EvalReport report = sk::evaluate(forms, grid, protocols, config, bootstrap_b);
  sk::Manifest manifest{"eval", config.seed, sk::config_hash(config)};

  sk::json::Object o;
  o["manifest"] = sk::manifest_block(manifest);
  o["grid"] = grid.name();
  sk::json::Array cells;
  for (const auto& cell : report.cells) {
    sk::json::Object c;
    c["form"] = sk::form_info(cell.form).name;
    c["protocol"] = cell.protocol.name();
    c["ok"] = cell.ok;
    if (!cell.ok) {
      c["error"] = cell.error;
    } else {
      c["rmse_log"] = cell.rmse;
      c["mbe_log"] = cell.mbe;
      c["n_holdout"] = cell.holdout_size;
      if (cell.rmse_std) c["boot_std"] = *cell.rmse_std;
    }
    cells.push_back(c);
  }
  o["cells"] = std::move(cells);
  std::string text = sk::json::dump(o);
  if (out_path.empty() || out_path == "-") std::cout << text;
  else sk::write_text_file(out_path, text);

  char buf[64];
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw sk::IoError("cannot write " + csv_path);
    write_manifest_comment(out, manifest);
    out << "form,protocol,metric,value,std,n_holdout\n";
    for (const auto& cell : report.cells) {
      if (!cell.ok) {
        sk::csv::write_row(out, {sk::form_info(cell.form).name, cell.protocol.name(),
                                 "error", cell.error, "", ""});
        continue;
      }
      auto emit = [&](const char* metric, double value) {
        std::snprintf(buf, sizeof buf, "%.17g", value);
        std::string std_txt;
        if (cell.rmse_std && std::string(metric) == "rmse_log") {
          char sbuf[64];
          std::snprintf(sbuf, sizeof sbuf, "%.17g", *cell.rmse_std);
          std_txt = sbuf;
        }
        sk::csv::write_row(out, {sk::form_info(cell.form).name, cell.protocol.name(),
                                 metric, buf, std_txt,
                                 std::to_string(cell.holdout_size)});
      };
      emit("rmse_log", cell.rmse);
      emit("mbe_log", cell.mbe);
    }
  }

  if (!residuals_path.empty()) {
    std::ofstream out(residuals_path);
    if (!out) throw sk::IoError("cannot write " + residuals_path);
    write_manifest_comment(out, manifest);
    out << "form,protocol,n,d,t,observed,predicted,held_out\n";
    char nums[5][64];
    for (const auto& cell : report.cells) {
      if (!cell.ok) continue;
      for (const auto& r : cell.residuals) {
        std::snprintf(nums[0], 64, "%.17g", r.n);
        std::snprintf(nums[1], 64, "%.17g", r.d);
        std::snprintf(nums[2], 64, "%.17g", r.t);
        std::snprintf(nums[3], 64, "%.17g", r.observed);
        std::snprintf(nums[4], 64, "%.17g", r.predicted);
        sk::csv::write_row(out, {sk::form_info(cell.form).name, cell.protocol.name(),
                                 nums[0], nums[1], nums[2], nums[3], nums[4],
                                 r.held_out ? "1" : "0"});
      }
    }
  }
  return 0;
}

int cmd_predict(const std::string& params_path, std::optional<double> n,
                std::optional<double> d, std::optional<double> t,
                std::optional<double> l0_flag, const std::string& points_path,
                const FitFlags& fit_flags, const std::string& out_path) {
  sk::LoadedParams loaded = sk::load_params_json(params_path);
  double l0 = resolve_l0(l0_flag, loaded);
  sk::EvalOptions opts = fit_flags.config().eval;

  std::vector<sk::Point> points;
  if (!points_path.empty()) {
    sk::csv::Table table = sk::csv::read_file(points_path);
    int cn = table.column("n"), cd = table.column("d"), ct = table.column("t");
    if (cn < 0) throw sk::SchemaError("n");
    if (cd < 0) throw sk::SchemaError("d");
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      double pn = sk::detail::parse_positive(table.rows[i][cn], table.lines[i], "n");
      double pd = sk::detail::parse_positive(table.rows[i][cd], table.lines[i], "d");
      double pt = ct >= 0 && !table.rows[i][ct].empty()
                      ? sk::detail::parse_positive(table.rows[i][ct], table.lines[i],
                                                   "t")
                      : pd;
      points.push_back(sk::Point{pn, pd, pt});
    }
  }
  if (n || d || t) {
    if (!n || !d) throw sk::ConfigError("predict needs at least --n and --d");
    points.push_back(sk::Point{*n, *d, t ? *t : *d});
  }
  if (points.empty())
    throw sk::ConfigError("nothing to predict: pass --n/--d/--t or --points");

  sk::Manifest manifest{"predict", 0, ""};
  sk::json::Object o;
  o["manifest"] = sk::manifest_block(manifest);
  o["form"] = sk::form_info(loaded.params.form).name;
  o["l0"] = l0;
  sk::json::Array preds;
  for (const auto& pt : points) {
    sk::json::Object row;
    row["n"] = pt.n;
    row["d"] = pt.d;
    row["t"] = pt.t;
    row["loss"] = sk::predict(loaded.params, pt, l0, opts);
    preds.push_back(row);
  }
  o["predictions"] = std::move(preds);
  std::string text = sk::json::dump(o);
  if (out_path.empty() || out_path == "-") std::cout << text;
  else sk::write_text_file(out_path, text);
  return 0;
}

sk::json::Object allocation_to_json(const sk::AllocationResult& r) {
  sk::json::Object o;
  o["n_star"] = r.n_star;
  o["d_star"] = r.d_star;
  o["t_star"] = r.t_star;
  o["loss"] = r.loss;
  o["cost"] = r.cost;
  o["epochs"] = r.epochs;
  o["data_share"] = r.data_share;
  o["foc_residual"] = r.foc_residual;
  o["multiplier"] = r.multiplier;
  o["d_degenerate"] = r.d_degenerate;
  if (r.trivial_target_warning) o["trivial_target_warning"] = true;
  return o;
}

int cmd_allocate(const std::string& params_path, std::optional<double> l0_flag,
                 double rho_d, double rho_c, double k, std::optional<double> budget,
                 std::optional<double> target_loss, const std::string& out_path) {
  sk::LoadedParams loaded = sk::load_params_json(params_path);
  double l0 = resolve_l0(l0_flag, loaded);
  sk::OursParams params = ours_from_params(loaded.params);
  sk::PriceModel prices{rho_d, rho_c, k};
  if (budget.has_value() == target_loss.has_value())
    throw sk::ConfigError("pass exactly one of --budget or --target-loss");

  sk::AllocationResult result =
      budget ? sk::solve_budget(params, l0, prices, *budget)
             : sk::solve_target(params, l0, prices, *target_loss);

  sk::Manifest manifest{"allocate", 0, ""};
  sk::json::Object o;
  o["manifest"] = sk::manifest_block(manifest);
  o["program"] = budget ? "min-loss-at-budget" : "min-cost-at-target";
  o["allocation"] = allocation_to_json(result);
  std::string text = sk::json::dump(o);
  if (out_path.empty() || out_path == "-") std::cout << text;
  else sk::write_text_file(out_path, text);
  return 0;
}

int cmd_frontier(const std::string& params_path, std::optional<double> l0_flag,
                 double rho_d, double rho_c, double k,
                 const std::vector<double>& budgets, const std::string& out_path) {
  sk::LoadedParams loaded = sk::load_params_json(params_path);
  double l0 = resolve_l0(l0_flag, loaded);
  sk::OursParams params = ours_from_params(loaded.params);
  sk::PriceModel prices{rho_d, rho_c, k};
  auto frontier = sk::pareto_frontier(params, l0, prices, budgets);

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty() && out_path != "-") {
    file.open(out_path);
    if (!file) throw sk::IoError("cannot write " + out_path);
    out = &file;
  }
  sk::Manifest manifest{"frontier", 0, ""};
  write_manifest_comment(*out, manifest);
  *out << "budget,loss,n,d,t,epochs,data_share\n";
  char buf[7][64];
  for (const auto& pt : frontier) {
    std::snprintf(buf[0], 64, "%.17g", pt.budget);
    if (!pt.ok) {
      sk::csv::write_row(*out, {buf[0], "error: " + pt.error, "", "", "", "", ""});
      continue;
    }
    std::snprintf(buf[1], 64, "%.17g", pt.alloc.loss);
    std::snprintf(buf[2], 64, "%.17g", pt.alloc.n_star);
    std::snprintf(buf[3], 64, "%.17g", pt.alloc.d_star);
    std::snprintf(buf[4], 64, "%.17g", pt.alloc.t_star);
    std::snprintf(buf[5], 64, "%.17g", pt.alloc.epochs);
    std::snprintf(buf[6], 64, "%.17g", pt.alloc.data_share);
    sk::csv::write_row(*out, {buf[0], buf[1], buf[2], buf[3], buf[4], buf[5], buf[6]});
  }
  return 0;
}

int cmd_synth(const std::string& params_path, std::optional<double> l0_flag,
              const std::vector<double>& n_values, const std::vector<double>& d_values,
              const std::vector<double>& multipliers, double sigma, std::uint64_t seed,
              const std::string& out_path, const std::string& json_path) {
  sk::LoadedParams loaded = sk::load_params_json(params_path);
  double l0 = resolve_l0(l0_flag, loaded);
  sk::OursParams params = ours_from_params(loaded.params);
  sk::SynthDesign design;
  design.n_values = n_values;
  design.d_values = d_values;
  design.epoch_multipliers = multipliers;
  design.sigma = sigma;
  design.seed = seed;
  sk::Grid grid = sk::synth_grid(params, l0, design);

  sk::Manifest manifest{"synth", seed, ""};
  if (!json_path.empty())
    sk::write_text_file(json_path, sk::json::dump(sk::grid_to_json(grid, &manifest)));

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty() && out_path != "-") {
    file.open(out_path);
    if (!file) throw sk::IoError("cannot write " + out_path);
    out = &file;
  }
  write_manifest_comment(*out, manifest);
  *out << "n,d,t,loss\n";
  char buf[4][64];
  for (const auto& rec : grid.records()) {
    std::snprintf(buf[0], 64, "%.17g", rec.n);
    std::snprintf(buf[1], 64, "%.17g", rec.d);
    std::snprintf(buf[2], 64, "%.17g", rec.t);
    std::snprintf(buf[3], 64, "%.17g", rec.loss);
    sk::csv::write_row(*out, {buf[0], buf[1], buf[2], buf[3]});
  }
  return 0;
}

int cmd_verify(const std::string& params_path, std::optional<double> l0_flag,
               double tol_scale, bool isoflop, const std::vector<double>& c_values,
               double iso_d, double k, int n_samples, const std::string& out_path,
               const std::string& curves_path) {
  sk::LoadedParams loaded = sk::load_params_json(params_path);
  double l0 = resolve_l0(l0_flag, loaded);
  sk::LimitReport report = sk::check_limits(loaded.params, l0, {}, tol_scale);

  sk::Manifest manifest{"verify", 0, ""};
  sk::json::Object o;
  o["manifest"] = sk::manifest_block(manifest);
  o["form"] = sk::form_info(loaded.params.form).name;
  o["l0"] = l0;
  sk::json::Array rows;
  for (const auto& row : report.rows) {
    sk::json::Object r;
    r["row"] = row.row;
    r["description"] = row.description;
    r["expected"] = row.expected;
    r["deviation"] = row.deviation;
    r["pass"] = row.pass;
    rows.push_back(r);
  }
  o["limits"] = std::move(rows);
  o["all_pass"] = report.all_pass();
  std::string text = sk::json::dump(o);
  if (out_path.empty() || out_path == "-") std::cout << text;
  else sk::write_text_file(out_path, text);

  for (const auto& row : report.rows)
    std::cerr << "row " << row.row << (row.pass ? "  pass  " : "  FAIL  ")
              << row.description << " (deviation " << row.deviation << ")\n";

  if (isoflop) {
    sk::OursParams params = ours_from_params(loaded.params);
    auto curves = sk::isoflop_curves(params, l0, c_values, iso_d, k, n_samples);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!curves_path.empty() && curves_path != "-") {
      file.open(curves_path);
      if (!file) throw sk::IoError("cannot write " + curves_path);
      out = &file;
    }
    write_manifest_comment(*out, manifest);
    *out << "c,n,t,loss,kind\n";
    char buf[4][64];
    for (const auto& row : curves) {
      std::snprintf(buf[0], 64, "%.17g", row.c);
      std::snprintf(buf[1], 64, "%.17g", row.n);
      std::snprintf(buf[2], 64, "%.17g", row.t);
      std::snprintf(buf[3], 64, "%.17g", row.loss);
      sk::csv::write_row(*out, {buf[0], buf[1], buf[2], buf[3],
                                sk::isoflop_kind_name(row.kind)});
    }
  }
  return 0;
}

int cmd_report(const std::string& eval_path, const std::string& out_path) {
  std::ifstream in(eval_path);
  if (!in) throw sk::IoError("cannot open " + eval_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw sk::IoError(eval_path + std::string(": ") + ex.what());
  }

  std::vector<std::string> forms, protocols;
  std::map<std::string, std::map<std::string, std::string>> table;
  for (const auto& cell : j.at("cells")) {
    std::string form = cell.at("form").get<std::string>();
    std::string protocol = cell.at("protocol").get<std::string>();
    if (std::find(forms.begin(), forms.end(), form) == forms.end())
      forms.push_back(form);
    if (std::find(protocols.begin(), protocols.end(), protocol) == protocols.end())
      protocols.push_back(protocol);
    std::ostringstream os;
    if (!cell.value("ok", false)) {
      os << "failed";
    } else {
      os.precision(4);
      os << cell.at("rmse_log").get<double>();
      if (cell.contains("boot_std")) os << " ± " << cell.at("boot_std").get<double>();
      os << " / " << cell.at("mbe_log").get<double>();
    }
    table[form][protocol] = os.str();
  }

  std::ostringstream md;
  md << "<!-- tool: scalekit " << sk::kVersion << "; command: report -->\n";
  md << "# Evaluation report: " << j.value("grid", std::string("grid")) << "\n\n";
  md << "RMSE / MBE of log-space residuals per form and protocol.\n\n";
  md << "| form |";
  for (const auto& p : protocols) md << " " << p << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < protocols.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& form : forms) {
    md << "| " << form << " |";
    for (const auto& p : protocols) {
      auto it = table[form].find(p);
      md << " " << (it == table[form].end() ? "-" : it->second) << " |";
    }
    md << "\n";
  }
  if (out_path.empty() || out_path == "-") std::cout << md.str();
  else sk::write_text_file(out_path, md.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scalekit: calibration and decision toolkit for saturating "
               "neural scaling laws"};
  app.require_subcommand(1);

  auto* fit_cmd = app.add_subcommand("fit", "fit a form to a grid");
  GridFlags fit_grid;
  FitFlags fit_flags;
  int fit_bootstrap = 0;
  std::string fit_out;
  fit_grid.attach(fit_cmd);
  fit_flags.attach(fit_cmd);
  fit_cmd->add_option("--bootstrap", fit_bootstrap, "bootstrap resample count");
  fit_cmd->add_option("--out,-o", fit_out, "output fit JSON (default stdout)");

  auto* eval_cmd = app.add_subcommand("eval", "fit and score forms per protocol");
  GridFlags eval_grid;
  FitFlags eval_flags;
  std::vector<std::string> eval_forms{"ours", "chinchilla"};
  std::vector<std::string> eval_protocols{"high-c", "high-d", "kfold", "in-sample"};
  double eval_fraction = 0.10;
  int eval_k = 5;
  std::uint64_t eval_split_seed = 0;
  int eval_bootstrap = 0;
  std::string eval_out, eval_csv, eval_residuals;
  eval_grid.attach(eval_cmd);
  eval_flags.attach(eval_cmd, false);
  eval_cmd->add_option("--forms", eval_forms, "form ids to compare")->delimiter(',');
  eval_cmd->add_option("--protocols", eval_protocols,
                       "high-c|high-d|high-n|high-t|kfold|in-sample")
      ->delimiter(',');
  eval_cmd->add_option("--fraction", eval_fraction, "high-axis holdout share");
  eval_cmd->add_option("--kfold-k", eval_k, "fold count");
  eval_cmd->add_option("--split-seed", eval_split_seed, "kfold shuffle seed");
  eval_cmd->add_option("--bootstrap", eval_bootstrap,
                       "bootstrap resamples for rmse std");
  eval_cmd->add_option("--out,-o", eval_out, "report JSON (default stdout)");
  eval_cmd->add_option("--csv-out", eval_csv, "report CSV path");
  eval_cmd->add_option("--residuals", eval_residuals,
                       "per-point observed-vs-predicted CSV");

  auto* predict_cmd = app.add_subcommand("predict", "evaluate a fitted form");
  std::string predict_params, predict_points, predict_out;
  std::optional<double> predict_n, predict_d, predict_t, predict_l0;
  FitFlags predict_flags;
  predict_cmd->add_option("--params", predict_params, "fit.json or params.json")
      ->required();
  predict_cmd->add_option("--n", predict_n, "model size");
  predict_cmd->add_option("--d", predict_d, "unique examples");
  predict_cmd->add_option("--t", predict_t, "total examples (default d)");
  predict_cmd->add_option("--l0", predict_l0, "baseline loss override");
  predict_cmd->add_option("--points", predict_points, "CSV of n,d[,t] points");
  predict_cmd->add_option("--m4-axis", predict_flags.m4_axis, "m4 input axis");
  predict_cmd->add_option("--k", predict_flags.k_flops, "FLOPs constant");
  predict_cmd->add_option("--out,-o", predict_out, "output JSON");

  auto* alloc_cmd = app.add_subcommand("allocate", "solve a cost-aware allocation");
  std::string alloc_params, alloc_out;
  std::optional<double> alloc_l0, alloc_budget, alloc_target;
  double alloc_rho_d = 0.0, alloc_rho_c = 0.0, alloc_k = 6.0;
  alloc_cmd->add_option("--params", alloc_params, "fit.json or params.json")
      ->required();
  alloc_cmd->add_option("--l0", alloc_l0, "baseline loss override");
  alloc_cmd->add_option("--rho-d", alloc_rho_d, "dollars per unique example")
      ->required();
  alloc_cmd->add_option("--rho-c", alloc_rho_c, "dollars per FLOP")->required();
  alloc_cmd->add_option("--k", alloc_k, "FLOPs-per-parameter-example constant");
  alloc_cmd->add_option("--budget", alloc_budget, "min-loss-at-budget program");
  alloc_cmd->add_option("--target-loss", alloc_target, "min-cost-at-target program");
  alloc_cmd->add_option("--out,-o", alloc_out, "allocation JSON");

  auto* frontier_cmd =
      app.add_subcommand("frontier", "sweep budgets into a Pareto frontier");
  std::string frontier_params, frontier_out;
  std::optional<double> frontier_l0;
  double frontier_rho_d = 0.0, frontier_rho_c = 0.0, frontier_k = 6.0;
  std::vector<double> frontier_budgets;
  frontier_cmd->add_option("--params", frontier_params, "fit.json or params.json")
      ->required();
  frontier_cmd->add_option("--l0", frontier_l0, "baseline loss override");
  frontier_cmd->add_option("--rho-d", frontier_rho_d, "dollars per unique example")
      ->required();
  frontier_cmd->add_option("--rho-c", frontier_rho_c, "dollars per FLOP")->required();
  frontier_cmd->add_option("--k", frontier_k, "FLOPs constant");
  frontier_cmd->add_option("--budgets", frontier_budgets, "ascending budget list")
      ->required()
      ->delimiter(',');
  frontier_cmd->add_option("--out,-o", frontier_out, "frontier CSV");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic grid");
  std::string synth_params, synth_out, synth_json;
  std::optional<double> synth_l0;
  std::vector<double> synth_n, synth_d, synth_mult{1.0};
  double synth_sigma = 0.0;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--params", synth_params, "params.json with the ours form")
      ->required();
  synth_cmd->add_option("--l0", synth_l0, "baseline loss override");
  synth_cmd->add_option("--n-values", synth_n, "model sizes")
      ->required()
      ->delimiter(',');
  synth_cmd->add_option("--d-values", synth_d, "unique-data sizes")
      ->required()
      ->delimiter(',');
  synth_cmd->add_option("--multipliers", synth_mult, "epoch multipliers (t = m*d)")
      ->delimiter(',');
  synth_cmd->add_option("--sigma", synth_sigma, "log-space noise");
  synth_cmd->add_option("--seed", synth_seed, "noise seed");
  synth_cmd->add_option("--out,-o", synth_out, "grid CSV (default stdout)");
  synth_cmd->add_option("--json", synth_json, "also write canonical grid JSON");

  auto* verify_cmd = app.add_subcommand("verify", "audit limit behavior");
  std::string verify_params, verify_out, verify_curves;
  std::optional<double> verify_l0;
  double verify_tol_scale = 1e-6;
  bool verify_isoflop = false;
  std::vector<double> verify_c;
  double verify_d = 1e8, verify_k = 6.0;
  int verify_samples = 64;
  verify_cmd->add_option("--params", verify_params, "fit.json or params.json")
      ->required();
  verify_cmd->add_option("--l0", verify_l0, "baseline loss override");
  verify_cmd->add_option("--tol-scale", verify_tol_scale,
                         "limit tolerance as a fraction of (l0 - e)");
  verify_cmd->add_flag("--isoflop", verify_isoflop, "emit isoFLOP curve CSV");
  verify_cmd->add_option("--c-values", verify_c, "compute budgets for curves")
      ->delimiter(',');
  verify_cmd->add_option("--d", verify_d, "unique data for curves");
  verify_cmd->add_option("--k", verify_k, "FLOPs constant");
  verify_cmd->add_option("--n-samples", verify_samples, "points per curve");
  verify_cmd->add_option("--out,-o", verify_out, "limit report JSON");
  verify_cmd->add_option("--curves", verify_curves, "isoFLOP curve CSV path");

  auto* report_cmd = app.add_subcommand("report", "render an eval report as Markdown");
  std::string report_eval, report_out;
  report_cmd->add_option("--eval", report_eval, "eval report JSON")->required();
  report_cmd->add_option("--out,-o", report_out, "Markdown path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    return fail_with(2, "cli", e.what());
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_grid, fit_flags, fit_bootstrap, fit_out);
    if (*eval_cmd)
      return cmd_eval(eval_grid, eval_flags, eval_forms, eval_protocols,
                      eval_fraction, eval_k, eval_split_seed, eval_bootstrap,
                      eval_out, eval_csv, eval_residuals);
    if (*predict_cmd)
      return cmd_predict(predict_params, predict_n, predict_d, predict_t, predict_l0,
                         predict_points, predict_flags, predict_out);
    if (*alloc_cmd)
      return cmd_allocate(alloc_params, alloc_l0, alloc_rho_d, alloc_rho_c, alloc_k,
                          alloc_budget, alloc_target, alloc_out);
    if (*frontier_cmd)
      return cmd_frontier(frontier_params, frontier_l0, frontier_rho_d,
                          frontier_rho_c, frontier_k, frontier_budgets, frontier_out);
    if (*synth_cmd)
      return cmd_synth(synth_params, synth_l0, synth_n, synth_d, synth_mult,
                       synth_sigma, synth_seed, synth_out, synth_json);
    if (*verify_cmd)
      return cmd_verify(verify_params, verify_l0, verify_tol_scale, verify_isoflop,
                        verify_c, verify_d, verify_k, verify_samples, verify_out,
                        verify_curves);
    if (*report_cmd) return cmd_report(report_eval, report_out);
  } catch (const sk::InfeasibleTargetError& ex) {
    return fail_with(4,
                     ex.kind == sk::TargetFeasibility::BelowFloor ? "below-floor"
                                                                  : "trivial-target",
                     ex.what());
  } catch (const sk::SolveError& ex) {
    return fail_with(4, "allocation", ex.what());
  } catch (const sk::FitError& ex) {
    return fail_with(3, "fit-failure", ex.what());
  } catch (const sk::SchemaError& ex) {
    return fail_with(2, "schema", ex.what());
  } catch (const sk::RowError& ex) {
    return fail_with(5, "input-data", ex.what());
  } catch (const sk::ConfigError& ex) {
    return fail_with(2, "config", ex.what());
  } catch (const sk::IoError& ex) {
    return fail_with(5, "io", ex.what());
  } catch (const std::exception& ex) {
    return fail_with(2, "error", ex.what());
  }
  return 0;
}
