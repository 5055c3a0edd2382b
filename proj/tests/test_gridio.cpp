#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "scalekit/grid.hpp"
#include "scalekit/serialize.hpp"

using namespace scalekit;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path dir = fs::temp_directory_path() / "scalekit_gridio_tests";
  fs::create_directories(dir);
  fs::path path = dir / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("baseline_l0 follows the loss-type rule", "[gridio]") {
  CHECK(baseline_l0(LossKind::CrossEntropy, 10) ==
        Catch::Approx(2.302585092994046).epsilon(1e-15));
  CHECK(baseline_l0(LossKind::CrossEntropy, 32000) ==
        Catch::Approx(10.373491181781864).epsilon(1e-15));
  CHECK(baseline_l0(LossKind::RelativeL2) == 1.0);
  CHECK(baseline_l0(LossKind::OtherBounded, std::nullopt, 7.25) == 7.25);
  CHECK_THROWS_AS(baseline_l0(LossKind::CrossEntropy), ConfigError);
  CHECK_THROWS_AS(baseline_l0(LossKind::CrossEntropy, 1), ConfigError);
  CHECK_THROWS_AS(baseline_l0(LossKind::OtherBounded), ConfigError);
}

TEST_CASE("cap_unique_data caps at examples seen and is idempotent", "[gridio]") {
  RunRecord r;
  r.n = 1e6;
  r.loss = 1.0;

  r.d_budget = 1e8;
  r.t = 5e7;
  r = cap_unique_data(r);
  CHECK(r.d_budget == 5e7);

  r.d_budget = 1e4;
  r.t = 5e7;
  r = cap_unique_data(r);
  CHECK(r.d_budget == 1e4);

  RunRecord same = cap_unique_data(r);
  CHECK(same.d_budget == r.d_budget);

  r.d_budget = r.t = 1e5;
  CHECK(cap_unique_data(r).d_budget == 1e5);
}

TEST_CASE("clip_loss fires only above l0 - margin", "[gridio]") {
  double l0 = 2.302585092994046;
  RunRecord r;
  r.n = r.d_budget = r.t = 1.0;

  r.loss = 2.310;
  CHECK(clip_loss(r, l0));
  CHECK(r.loss == Catch::Approx(l0 - 0.01).epsilon(1e-15));

  r.loss = 1.5;
  CHECK_FALSE(clip_loss(r, l0));
  CHECK(r.loss == 1.5);

  r.loss = l0 - 0.01;
  CHECK_FALSE(clip_loss(r, l0));
  CHECK(r.loss == l0 - 0.01);
}

TEST_CASE("aggregate_replicates collapses cells by mode", "[gridio]") {
  auto make = [](double loss, std::optional<double> c = {}) {
    RunRecord r;
    r.n = 100.0;
    r.d_budget = 10.0;
    r.t = 50.0;
    r.loss = loss;
    r.c = c;
    return r;
  };
  std::vector<RunRecord> two{make(1.0, 6.0), make(1.2, 8.0)};
  auto mean = aggregate_replicates(two, AggregateMode::Mean);
  REQUIRE(mean.size() == 1);
  CHECK(mean[0].loss == Catch::Approx(1.1));
  CHECK(mean[0].c.value() == Catch::Approx(7.0));

  auto lo = aggregate_replicates(two, AggregateMode::Min);
  REQUIRE(lo.size() == 1);
  CHECK(lo[0].loss == 1.0);

  std::vector<RunRecord> ten(10, make(0.7));
  auto collapsed = aggregate_replicates(ten, AggregateMode::Mean);
  REQUIRE(collapsed.size() == 1);
  CHECK(collapsed[0].loss == 0.7);
  // idempotent
  auto again = aggregate_replicates(collapsed, AggregateMode::Mean);
  CHECK(again[0].loss == 0.7);

  RunRecord odd = make(1.0);
  odd.tags["loss_kind"] = "relative-l2";
  RunRecord even = make(1.2);
  even.tags["loss_kind"] = "cross-entropy";
  CHECK_THROWS_AS(aggregate_replicates({odd, even}, AggregateMode::Mean), ConfigError);
}

TEST_CASE("load_grid parses, preprocesses, and sorts", "[gridio]") {
  auto path = write_temp("basic.csv",
                         "n,d,t,loss\n"
                         "200,10,40,1.9\n"
                         "100,10,40,2.1\n"
                         "100,10,20,2.9\n");
  GridMeta meta;
  meta.name = "toy";
  meta.loss_kind = LossKind::CrossEntropy;
  meta.k_outcomes = 10;
  Grid grid = load_grid(path.string(), meta);
  REQUIRE(grid.size() == 3);
  CHECK(grid.l0() == Catch::Approx(std::log(10.0)));
  // sorted by (n, d, t)
  CHECK(grid.records()[0].n == 100);
  CHECK(grid.records()[0].t == 20);
  CHECK(grid.records()[1].t == 40);
  CHECK(grid.records()[2].n == 200);
  // 2.9 clips to ln(10) - 0.01
  CHECK(grid.records()[0].loss == Catch::Approx(std::log(10.0) - 0.01));
  CHECK(grid.clipped_count() == 1);
  for (const auto& r : grid.records()) {
    CHECK(r.d <= r.t);
    CHECK(r.loss <= grid.l0() - 0.01 + 1e-15);
  }
}

TEST_CASE("load_grid defaults t to d when no t column exists", "[gridio]") {
  auto path = write_temp("single_epoch.csv",
                         "n,d,loss\n"
                         "100,50,2.0\n");
  GridMeta meta;
  meta.loss_kind = LossKind::CrossEntropy;
  meta.k_outcomes = 10;
  Grid grid = load_grid(path.string(), meta);
  CHECK(grid.records()[0].t == 50.0);
  CHECK(grid.records()[0].d == 50.0);
}

TEST_CASE("load_grid accepts an epochs column", "[gridio]") {
  auto path = write_temp("epochs.csv",
                         "n,d_budget,epochs,loss\n"
                         "100,50,4,2.0\n");
  GridMeta meta;
  meta.loss_kind = LossKind::CrossEntropy;
  meta.k_outcomes = 10;
  Grid grid = load_grid(path.string(), meta);
  CHECK(grid.records()[0].t == 200.0);
  CHECK(grid.records()[0].d == 50.0);
}

TEST_CASE("load_grid reports schema and row errors precisely", "[gridio]") {
  GridMeta meta;
  meta.loss_kind = LossKind::RelativeL2;

  auto missing = write_temp("missing.csv", "n,d,t\n1,2,3\n");
  try {
    load_grid(missing.string(), meta);
    FAIL("expected SchemaError");
  } catch (const SchemaError& err) {
    CHECK(err.column == "loss");
  }

  auto zero_loss = write_temp("zero.csv", "n,d,t,loss\n1,2,3,0\n");
  try {
    load_grid(zero_loss.string(), meta);
    FAIL("expected RowError");
  } catch (const RowError& err) {
    CHECK(err.line == 2);
  }

  auto garbage = write_temp("garbage.csv", "n,d,t,loss\n1,2,3,0.5\nx,2,3,0.5\n");
  try {
    load_grid(garbage.string(), meta);
    FAIL("expected RowError");
  } catch (const RowError& err) {
    CHECK(err.line == 3);
  }

  auto empty = write_temp("empty.csv", "n,d,t,loss\n");
  CHECK_THROWS_AS(load_grid(empty.string(), meta), ConfigError);
}

TEST_CASE("load_grid applies replicate aggregation before the cap", "[gridio]") {
  // Two seeds of the same cell, on a sub-epoch row that engages the cap.
  auto path = write_temp("agg.csv",
                         "n,d,t,loss,seed\n"
                         "100,1000,500,0.50,1\n"
                         "100,1000,500,0.70,2\n");
  GridMeta meta;
  meta.loss_kind = LossKind::RelativeL2;
  Grid grid = load_grid(path.string(), meta);
  REQUIRE(grid.size() == 1);
  CHECK(grid.records()[0].loss == Catch::Approx(0.6));
  CHECK(grid.records()[0].d == 500.0);  // capped at t
  CHECK(grid.capped_count() == 1);
}

TEST_CASE("tag filters keep matching rows only", "[gridio]") {
  auto path = write_temp("tags.csv",
                         "n,d,t,loss,recipe\n"
                         "100,10,10,0.5,base\n"
                         "200,10,10,0.5,warm\n");
  GridMeta meta;
  meta.loss_kind = LossKind::RelativeL2;
  PreprocessOptions opts;
  opts.tag_filters["recipe"] = "base";
  Grid grid = load_grid(path.string(), meta, CsvSchema{}, opts);
  REQUIRE(grid.size() == 1);
  CHECK(grid.records()[0].n == 100);
}

TEST_CASE("quoted CSV fields parse per RFC 4180", "[gridio]") {
  auto path = write_temp("quoted.csv",
                         "n,d,t,loss,note\r\n"
                         "100,10,10,0.5,\"hello, \"\"world\"\"\"\r\n");
  GridMeta meta;
  meta.loss_kind = LossKind::RelativeL2;
  Grid grid = load_grid(path.string(), meta);
  REQUIRE(grid.size() == 1);
  csv::Table t = csv::read_file(path.string());
  CHECK(t.rows[0][4] == "hello, \"world\"");
}

TEST_CASE("preprocessing pipeline is idempotent and deterministic", "[gridio]") {
  auto path = write_temp("idem.csv",
                         "n,d,t,loss,seed\n"
                         "100,1000,500,0.95,1\n"
                         "100,1000,500,1.15,2\n"
                         "300,20,80,0.40,1\n"
                         "200,50,50,0.70,1\n");
  GridMeta meta;
  meta.name = "idem";
  meta.loss_kind = LossKind::RelativeL2;
  Grid once = load_grid(path.string(), meta);

  // Re-ingest the preprocessed records: nothing changes.
  std::vector<RunRecord> rows;
  for (const auto& r : once.records()) {
    RunRecord rec;
    rec.n = r.n;
    rec.d_budget = r.d;
    rec.t = r.t;
    rec.loss = r.loss;
    rows.push_back(rec);
  }
  Grid twice = detail::preprocess_records(rows, meta, PreprocessOptions{});
  REQUIRE(twice.size() == once.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(twice.records()[i].n == once.records()[i].n);
    CHECK(twice.records()[i].d == once.records()[i].d);
    CHECK(twice.records()[i].t == once.records()[i].t);
    CHECK(twice.records()[i].loss == once.records()[i].loss);
  }

  // Loading the same file twice serializes byte-identically.
  Grid again = load_grid(path.string(), meta);
  CHECK(json::dump(grid_to_json(once)) == json::dump(grid_to_json(again)));
}

TEST_CASE("grid JSON round-trips through the canonical schema", "[gridio]") {
  std::vector<GridRecord> recs{{100.0, 10.0, 40.0, 1.25, 600.0},
                               {200.0, 20.0, 80.0, 0.75, std::nullopt}};
  Grid grid("round", 4.0, LossKind::OtherBounded, recs);
  std::string text = json::dump(grid_to_json(grid));
  Grid back = grid_from_json(nlohmann::json::parse(text));
  CHECK(back.name() == "round");
  CHECK(back.l0() == 4.0);
  CHECK(back.kind() == LossKind::OtherBounded);
  REQUIRE(back.size() == 2);
  CHECK(back.records()[0].c.value() == 600.0);
  CHECK_FALSE(back.records()[1].c.has_value());
  CHECK(json::dump(grid_to_json(back)) == text);
}
