#pragma once

// JSON round-trips for the file formats the CLI speaks: canonical grid JSON,
// fit results, bare parameter vectors, allocation results. Writing goes
// through the deterministic 17-digit emitter; reading uses nlohmann/json.

#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"
#include "scalekit/eval.hpp"
#include "scalekit/fit.hpp"
#include "scalekit/grid.hpp"
#include "scalekit/jsonio.hpp"

namespace scalekit {

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline constexpr const char* kVersion = "0.1.0";

inline json::Object manifest_block(const Manifest& m) {
  json::Object o;
  o["tool"] = "scalekit";
  o["version"] = kVersion;
  o["command"] = m.command;
  o["seed"] = m.seed;
  o["config_hash"] = m.config_hash;
  return o;
}

// --- canonical grid JSON: {name, l0, loss_kind, records:[{n,d,t,loss,c?}]}

inline json::Value grid_to_json(const Grid& grid, const Manifest* manifest = nullptr) {
  json::Object o;
  if (manifest) o["manifest"] = manifest_block(*manifest);
  o["name"] = grid.name();
  o["l0"] = grid.l0();
  o["loss_kind"] = loss_kind_name(grid.kind());
  json::Array records;
  for (const auto& r : grid.records()) {
    json::Object rec;
    rec["n"] = r.n;
    rec["d"] = r.d;
    rec["t"] = r.t;
    rec["loss"] = r.loss;
    if (r.c) rec["c"] = *r.c;
    records.push_back(rec);
  }
  o["records"] = std::move(records);
  return o;
}

inline Grid grid_from_json(const nlohmann::json& j) {
  auto kind = parse_loss_kind(j.at("loss_kind").get<std::string>());
  if (!kind) throw ConfigError("unknown loss_kind in grid JSON");
  std::vector<GridRecord> records;
  for (const auto& rec : j.at("records")) {
    GridRecord r;
    r.n = rec.at("n").get<double>();
    r.d = rec.at("d").get<double>();
    r.t = rec.at("t").get<double>();
    r.loss = rec.at("loss").get<double>();
    if (rec.contains("c")) r.c = rec.at("c").get<double>();
    records.push_back(r);
  }
  return Grid(j.value("name", std::string("grid")), j.at("l0").get<double>(), *kind,
              std::move(records));
}

inline Grid load_grid_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(path + ": " + ex.what());
  }
  return grid_from_json(j);
}

// --- params / fit result JSON

inline json::Object params_to_json(const FormParams& params) {
  const FormInfo& info = form_info(params.form);
  json::Object o;
  for (std::size_t i = 0; i < info.params.size(); ++i)
    o[info.params[i].name] = params.values[i];
  return o;
}

inline FormParams params_from_json(FormId form, const nlohmann::json& j) {
  const FormInfo& info = form_info(form);
  FormParams out(form);
  for (std::size_t i = 0; i < info.params.size(); ++i) {
    const char* name = info.params[i].name;
    if (!j.contains(name))
      throw ConfigError(std::string("params JSON is missing '") + name + "' for form " +
                        info.name);
    out.values[i] = j.at(name).get<double>();
  }
  return out;
}

inline json::Value fit_result_to_json(const FitResult& result,
                                      const std::optional<BootstrapSummary>& boot = {},
                                      const Manifest* manifest = nullptr,
                                      std::optional<double> l0 = {}) {
  json::Object o;
  if (manifest) o["manifest"] = manifest_block(*manifest);
  o["form"] = form_info(result.form).name;
  if (l0) o["l0"] = *l0;
  o["params"] = params_to_json(result.params);
  o["objective"] = result.objective;
  json::Array restarts;
  for (const auto& s : result.restart_stats) {
    json::Object r;
    r["converged"] = s.converged;
    r["objective"] = s.objective;
    restarts.push_back(r);
  }
  o["restarts"] = std::move(restarts);
  o["clipped_rows"] = result.clipped_rows;
  o["seed"] = result.seed;
  o["grid"] = result.grid_name;
  o["config_hash"] = result.config_hash;
  if (boot) {
    json::Object b;
    b["resamples"] = boot->resamples;
    b["converged"] = boot->converged;
    json::Object params;
    for (const auto& s : boot->params) {
      json::Object stat;
      stat["std"] = s.std_dev;
      stat["q2.5"] = s.q025;
      stat["q97.5"] = s.q975;
      params[s.name] = std::move(stat);
    }
    b["params"] = std::move(params);
    if (!boot->metrics.empty()) {
      json::Object metrics;
      for (const auto& s : boot->metrics) {
        json::Object stat;
        stat["std"] = s.std_dev;
        stat["q2.5"] = s.q025;
        stat["q97.5"] = s.q975;
        metrics[s.name] = std::move(stat);
      }
      b["metrics"] = std::move(metrics);
    }
    o["bootstrap"] = std::move(b);
  }
  return o;
}

// Accepts either a fit.json (form + params + ...) or a bare params file
// {form, l0?, params:{...}}.
struct LoadedParams {
  FormParams params;
  std::optional<double> l0;
};

inline LoadedParams load_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(path + ": " + ex.what());
  }
  if (!j.contains("form")) throw ConfigError(path + ": missing 'form'");
  auto form = parse_form_id(j.at("form").get<std::string>());
  if (!form)
    throw ConfigError(path + ": unknown form; valid ids: " + known_form_names());
  LoadedParams out{params_from_json(*form, j.at("params")), std::nullopt};
  if (j.contains("l0")) out.l0 = j.at("l0").get<double>();
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("cannot write " + path);
}

}  // namespace scalekit
