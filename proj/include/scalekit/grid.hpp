#pragma once

// Data model, CSV ingestion, and the preprocessing conventions every grid
// goes through before fitting: replicate aggregation, the D = min(D_budget, T)
// cap, and clipping observed loss to l0 - margin.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scalekit/csv.hpp"
#include "scalekit/errors.hpp"
#include "scalekit/forms.hpp"

namespace scalekit {

enum class LossKind { CrossEntropy, RelativeL2, OtherBounded };

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::CrossEntropy: return "cross-entropy";
    case LossKind::RelativeL2: return "relative-l2";
    case LossKind::OtherBounded: return "other-bounded";
  }
  return "?";
}

inline std::optional<LossKind> parse_loss_kind(const std::string& s) {
  if (s == "cross-entropy") return LossKind::CrossEntropy;
  if (s == "relative-l2") return LossKind::RelativeL2;
  if (s == "other-bounded") return LossKind::OtherBounded;
  return std::nullopt;
}

// Loss of a model that extracts no information: ln K for K-way cross-entropy,
// exactly 1 for relative-L2 on normalized targets, caller-supplied otherwise.
inline double baseline_l0(LossKind kind, std::optional<int> k_outcomes = {},
                          std::optional<double> supplied = {}) {
  switch (kind) {
    case LossKind::CrossEntropy:
      if (!k_outcomes || *k_outcomes < 2)
        throw ConfigError("cross-entropy baseline needs k_outcomes >= 2");
      return std::log(static_cast<double>(*k_outcomes));
    case LossKind::RelativeL2:
      return 1.0;
    case LossKind::OtherBounded:
      if (!supplied) throw ConfigError("other-bounded baseline needs an explicit l0");
      return *supplied;
  }
  throw ConfigError("unknown loss kind");
}

// One observed training measurement before preprocessing.
struct RunRecord {
  double n = 0.0;
  double d_budget = 0.0;
  double t = 0.0;
  double loss = 0.0;
  std::optional<double> c;
  std::optional<long> seed;
  std::map<std::string, std::string> tags;

  bool valid() const {
    return std::isfinite(n) && n > 0 && std::isfinite(d_budget) && d_budget > 0 &&
           std::isfinite(t) && t > 0 && std::isfinite(loss) && loss > 0;
  }
};

// Caps unique data at the examples actually seen. Idempotent.
inline RunRecord cap_unique_data(RunRecord rec) {
  rec.d_budget = std::min(rec.d_budget, rec.t);
  return rec;
}

// Clips observed loss to l0 - margin; returns whether the clip fired.
inline bool clip_loss(RunRecord& rec, double l0, double margin = 0.01) {
  if (!std::isfinite(l0)) throw ConfigError("clip_loss needs a finite l0");
  double ceiling = l0 - margin;
  if (rec.loss > ceiling) {
    rec.loss = ceiling;
    return true;
  }
  return false;
}

enum class AggregateMode { Mean, Min };

// Collapses replicates sharing an exact (n, d_budget, t) cell into one record.
inline std::vector<RunRecord> aggregate_replicates(std::vector<RunRecord> records,
                                                   AggregateMode mode) {
  std::stable_sort(records.begin(), records.end(), [](const RunRecord& x, const RunRecord& y) {
    if (x.n != y.n) return x.n < y.n;
    if (x.d_budget != y.d_budget) return x.d_budget < y.d_budget;
    return x.t < y.t;
  });
  std::vector<RunRecord> out;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    while (j < records.size() && records[j].n == records[i].n &&
           records[j].d_budget == records[i].d_budget && records[j].t == records[i].t)
      ++j;
    RunRecord merged = records[i];
    double loss_sum = 0.0, loss_min = records[i].loss, loss_max = records[i].loss;
    double c_sum = 0.0;
    std::size_t c_count = 0;
    for (std::size_t r = i; r < j; ++r) {
      auto it = records[r].tags.find("loss_kind");
      auto it0 = records[i].tags.find("loss_kind");
      bool have_r = it != records[r].tags.end(), have_0 = it0 != records[i].tags.end();
      if (have_r != have_0 || (have_r && it->second != it0->second))
        throw ConfigError("mixed loss_kind within a replicate group");
      loss_sum += records[r].loss;
      loss_min = std::min(loss_min, records[r].loss);
      loss_max = std::max(loss_max, records[r].loss);
      if (records[r].c) {
        c_sum += *records[r].c;
        ++c_count;
      }
    }
    // Identical replicates pass through unchanged; the mean would only add
    // accumulation noise.
    if (mode == AggregateMode::Min || loss_min == loss_max)
      merged.loss = loss_min;
    else
      merged.loss = loss_sum / static_cast<double>(j - i);
    if (c_count) merged.c = c_sum / static_cast<double>(c_count);
    merged.seed.reset();
    out.push_back(std::move(merged));
    i = j;
  }
  return out;
}

// A record after preprocessing; d is the effective min(d_budget, t).
struct GridRecord {
  double n = 0.0;
  double d = 0.0;
  double t = 0.0;
  double loss = 0.0;
  std::optional<double> c;

  Point point() const { return Point{n, d, t, c}; }
};

// An immutable, preprocessed collection of records plus dataset metadata.
class Grid {
 public:
  Grid(std::string name, double l0, LossKind kind, std::vector<GridRecord> records,
       std::size_t clipped = 0, std::size_t capped = 0,
       std::size_t monotonicity_violations = 0)
      : name_(std::move(name)),
        l0_(l0),
        kind_(kind),
        records_(std::move(records)),
        clipped_(clipped),
        capped_(capped),
        monotonicity_violations_(monotonicity_violations) {
    if (records_.empty()) throw ConfigError("empty grid");
    min_loss_ = records_[0].loss;
    for (const auto& r : records_) min_loss_ = std::min(min_loss_, r.loss);
  }

  const std::string& name() const { return name_; }
  double l0() const { return l0_; }
  LossKind kind() const { return kind_; }
  const std::vector<GridRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  double min_loss() const { return min_loss_; }
  std::size_t clipped_count() const { return clipped_; }
  std::size_t capped_count() const { return capped_; }
  std::size_t monotonicity_violations() const { return monotonicity_violations_; }

  Grid subset(const std::vector<std::size_t>& indices) const {
    std::vector<GridRecord> recs;
    recs.reserve(indices.size());
    for (std::size_t i : indices) recs.push_back(records_.at(i));
    return Grid(name_, l0_, kind_, std::move(recs));
  }

 private:
  std::string name_;
  double l0_;
  LossKind kind_;
  std::vector<GridRecord> records_;
  double min_loss_;
  std::size_t clipped_;
  std::size_t capped_;
  std::size_t monotonicity_violations_;
};

// Column-name mapping so heterogeneous published grids load without code
// changes. A CSV may name total examples directly (t) or via an epochs
// column, in which case t = epochs * d_budget; a file with neither follows
// the single-epoch convention t = d.
struct CsvSchema {
  std::string n = "n";
  std::string d = "d";
  std::string d_budget = "d_budget";
  std::string t = "t";
  std::string epochs = "epochs";
  std::string loss = "loss";
  std::string c = "c";
  std::string seed = "seed";
};

struct GridMeta {
  std::string name = "grid";
  LossKind loss_kind = LossKind::CrossEntropy;
  std::optional<int> k_outcomes;
  std::optional<double> l0_override;

  double resolve_l0() const {
    if (l0_override) return *l0_override;
    return baseline_l0(loss_kind, k_outcomes, l0_override);
  }
};

struct PreprocessOptions {
  AggregateMode aggregate = AggregateMode::Mean;
  double clip_margin = 0.01;
  std::map<std::string, std::string> tag_filters;  // keep rows matching all
};

namespace detail {

inline double parse_positive(const std::string& field, std::size_t line,
                             const std::string& what) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw RowError(line, "cannot parse " + what + " from '" + field + "'");
  }
  if (used != field.size() || !std::isfinite(v))
    throw RowError(line, "cannot parse " + what + " from '" + field + "'");
  if (v <= 0.0) throw RowError(line, what + " must be > 0, got " + field);
  return v;
}

// Builds a Grid out of already-parsed records: aggregation, D-cap, clip,
// deterministic sort. Shared by CSV ingestion and synthetic generation.
inline Grid preprocess_records(std::vector<RunRecord> records, const GridMeta& meta,
                               const PreprocessOptions& opts) {
  double l0 = meta.resolve_l0();
  records = aggregate_replicates(std::move(records), opts.aggregate);

  std::size_t capped = 0;
  for (auto& r : records) {
    double before = r.d_budget;
    r = cap_unique_data(std::move(r));
    if (r.d_budget != before) ++capped;
  }
  std::size_t clipped = 0;
  for (auto& r : records)
    if (clip_loss(r, l0, opts.clip_margin)) ++clipped;

  std::vector<GridRecord> recs;
  recs.reserve(records.size());
  for (const auto& r : records) recs.push_back({r.n, r.d_budget, r.t, r.loss, r.c});
  std::sort(recs.begin(), recs.end(), [](const GridRecord& x, const GridRecord& y) {
    if (x.n != y.n) return x.n < y.n;
    if (x.d != y.d) return x.d < y.d;
    return x.t < y.t;
  });

  // Running-min convention check: within an (n, d) cell, loss should be
  // non-increasing in t. Violations are counted, not rejected, since
  // cooldown-fork grids are not strict trajectories.
  std::size_t violations = 0;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (recs[i].n == recs[i - 1].n && recs[i].d == recs[i - 1].d &&
        recs[i].loss > recs[i - 1].loss)
      ++violations;
  }
  return Grid(meta.name, l0, meta.loss_kind, std::move(recs), clipped, capped, violations);
}

}  // namespace detail

inline Grid load_grid(const std::string& path, const GridMeta& meta,
                      const CsvSchema& schema = {}, const PreprocessOptions& opts = {}) {
  csv::Table table = csv::read_file(path);
  if (table.header.empty()) throw ConfigError("empty grid: " + path);

  int col_n = table.column(schema.n);
  if (col_n < 0) throw SchemaError(schema.n);
  int col_d = table.column(schema.d);
  if (col_d < 0) col_d = table.column(schema.d_budget);
  if (col_d < 0) throw SchemaError(schema.d + " (or " + schema.d_budget + ")");
  int col_t = table.column(schema.t);
  int col_epochs = col_t < 0 ? table.column(schema.epochs) : -1;
  int col_loss = table.column(schema.loss);
  if (col_loss < 0) throw SchemaError(schema.loss);
  int col_c = table.column(schema.c);
  int col_seed = table.column(schema.seed);

  std::vector<RunRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    std::size_t line = table.lines[i];
    auto field = [&](int col) -> const std::string& {
      static const std::string empty;
      if (col < 0 || static_cast<std::size_t>(col) >= row.size()) return empty;
      return row[static_cast<std::size_t>(col)];
    };
    RunRecord rec;
    rec.n = detail::parse_positive(field(col_n), line, "n");
    rec.d_budget = detail::parse_positive(field(col_d), line, "d");
    if (col_t >= 0 && !field(col_t).empty()) {
      rec.t = detail::parse_positive(field(col_t), line, "t");
    } else if (col_epochs >= 0 && !field(col_epochs).empty()) {
      rec.t = detail::parse_positive(field(col_epochs), line, "epochs") * rec.d_budget;
    } else {
      rec.t = rec.d_budget;  // single-epoch convention T = D
    }
    rec.loss = detail::parse_positive(field(col_loss), line, "loss");
    if (col_c >= 0 && !field(col_c).empty())
      rec.c = detail::parse_positive(field(col_c), line, "c");
    if (col_seed >= 0 && !field(col_seed).empty())
      rec.seed = std::stol(field(col_seed));
    for (std::size_t k = 0; k < table.header.size(); ++k) {
      int ki = static_cast<int>(k);
      if (ki == col_n || ki == col_d || ki == col_t || ki == col_epochs ||
          ki == col_loss || ki == col_c || ki == col_seed)
        continue;
      if (k < row.size() && !row[k].empty()) rec.tags[table.header[k]] = row[k];
    }
    records.push_back(std::move(rec));
  }

  if (!opts.tag_filters.empty()) {
    std::vector<RunRecord> kept;
    for (auto& r : records) {
      bool ok = true;
      for (const auto& [k, v] : opts.tag_filters) {
        auto it = r.tags.find(k);
        if (it == r.tags.end() || it->second != v) {
          ok = false;
          break;
        }
      }
      if (ok) kept.push_back(std::move(r));
    }
    records = std::move(kept);
  }
  if (records.empty()) throw ConfigError("empty grid: " + path);
  return detail::preprocess_records(std::move(records), meta, opts);
}

}  // namespace scalekit
