#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mktcop/io.hpp"
#include "mktcop/kcopula.hpp"
#include "mktcop/pipeline.hpp"
#include "mktcop/simulator.hpp"

using namespace mktcop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mktcop_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PriceMatrix small_market(std::uint64_t seed, Index stocks = 6) {
  RegimeSchedule s;
  s.stocks = stocks;
  s.seed = seed;
  s.segments = {{504, 0.1, 20.0}, {504, 0.7, 4.0}};
  return simulate_market(s).prices;
}

PipelineConfig fast_config(const fs::path& out) {
  PipelineConfig c;
  c.bins = 10;
  c.gap_references = 10;
  c.gap_k_max = 4;
  c.output_dir = out.string();
  return c;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  return files;
}

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(PriceCsv, Parses) {
  std::istringstream in("date,AAA,BBB\n2020-01-02,10,20\n2020-01-03,11,19.5\n");
  const PriceMatrix p = parse_price_csv(in);
  EXPECT_EQ(p.tickers, (std::vector<std::string>{"AAA", "BBB"}));
  EXPECT_EQ(p.dates.back(), "2020-01-03");
  EXPECT_EQ(p.values(1, 1), 19.5);
}

TEST(PriceCsv, MalformedRowsNameTheLine) {
  std::istringstream short_row("date,AAA,BBB\n2020-01-02,10,20\n2020-01-03,11\n");
  EXPECT_NE(error_message([&] { parse_price_csv(short_row); }).find("line 3"), std::string::npos);
  std::istringstream text_cell("date,AAA\n2020-01-02,ten\n");
  EXPECT_NE(error_message([&] { parse_price_csv(text_cell); }).find("line 2"), std::string::npos);
  std::istringstream empty("");
  EXPECT_THROW(parse_price_csv(empty), std::runtime_error);
}

TEST(PriceCsv, NonPositivePriceNamesTickerAndDate) {
  std::istringstream in("date,AAA,BBB\n2020-01-02,10,20\n2020-01-03,11,-1\n");
  const std::string msg = error_message([&] { parse_price_csv(in); });
  EXPECT_NE(msg.find("BBB"), std::string::npos);
  EXPECT_NE(msg.find("2020-01-03"), std::string::npos);
}

TEST(PriceCsv, MissingCellDropsTickerOrFailsWhenStrict) {
  const std::string text = "date,AAA,BBB,CCC\n2020-01-02,10,20,30\n2020-01-03,11,,31\n";
  std::istringstream in(text);
  IngestDiagnostics diag;
  const PriceMatrix p = parse_price_csv(in, {}, &diag);
  EXPECT_EQ(p.tickers, (std::vector<std::string>{"AAA", "CCC"}));
  EXPECT_EQ(diag.dropped_tickers, (std::vector<std::string>{"BBB"}));
  EXPECT_EQ(diag.missing_cells, 1);
  ASSERT_EQ(diag.warnings.size(), 1u);
  std::istringstream strict(text);
  EXPECT_ANY_THROW(parse_price_csv(strict, IngestOptions{true}));
}

TEST(PriceCsv, SimulatorRoundTripIsExact) {
  const fs::path dir = scratch("roundtrip");
  const PriceMatrix p = small_market(1, 4);
  write_price_csv(dir / "p.csv", p);
  const PriceMatrix q = read_price_csv(dir / "p.csv");
  EXPECT_EQ(q.tickers, p.tickers);
  EXPECT_EQ(q.dates, p.dates);
  EXPECT_TRUE(q.values == p.values);
  EXPECT_TRUE(compute_returns(q).values == compute_returns(p).values);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 100.0}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(GridCsv, RoundTripAndValidation) {
  const fs::path dir = scratch("grid");
  const CopulaGrid g = k_copula_density_grid({0.3, 5.0}, 10);
  write_grid_csv(dir / "g.csv", g);
  const CopulaGrid h = read_grid_csv(dir / "g.csv", GridKind::analytic);
  EXPECT_TRUE(h.density == g.density);

  CopulaGrid heavy = g;
  heavy.density *= 1.01;
  write_grid_csv(dir / "heavy.csv", heavy);
  EXPECT_ANY_THROW(read_grid_csv(dir / "heavy.csv"));

  CopulaGrid diff = grid_difference(heavy, g);
  write_grid_csv(dir / "diff.csv", diff);
  EXPECT_ANY_THROW(read_grid_csv(dir / "diff.csv"));

  write_text(dir / "ragged.csv", "u_bin_center,v_bin_center,density\n0.25,0.25,1\n0.25,0.75,1\n0.75,0.25,1\n");
  EXPECT_ANY_THROW(read_grid_csv(dir / "ragged.csv"));
}

TEST(WindowTable, RoundTrip) {
  const fs::path dir = scratch("windows");
  const std::vector<int> labels{1, 2, 2, 1, 3};
  write_window_table(dir / "w.csv", "regime_id", labels);
  EXPECT_EQ(read_window_table(dir / "w.csv"), labels);
  EXPECT_EQ(read_text(dir / "w.csv").substr(0, 22), "window_index,regime_id");
}

TEST(StateModelJson, RoundTrip) {
  StateModel m;
  m.k = 2;
  m.medoids = {3, 7};
  m.labels = {1, 1, 2, 1, 2, 2, 2, 2};
  m.seed = 99;
  m.cost = 1.25;
  const StateModel back = state_model_from_json(to_json(m));
  EXPECT_EQ(back.k, 2);
  EXPECT_EQ(back.medoids, m.medoids);
  EXPECT_EQ(back.labels, m.labels);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.cost, 1.25);
  nlohmann::ordered_json j = to_json(m);
  j["labels"][0] = 5;
  EXPECT_ANY_THROW(state_model_from_json(j));
}

TEST(Config, TextRoundTrip) {
  PipelineConfig c;
  c.input = {"a.csv", "b.csv"};
  c.bins = 10;
  c.gap_reference = GapReference::bounding_box;
  c.seed = 7;
  c.use_locally_normalized = false;
  PipelineConfig d;
  d.merge_text(c.to_text());
  EXPECT_EQ(d.to_text(), c.to_text());
  EXPECT_EQ(d.input, c.input);
  EXPECT_EQ(d.gap_reference, GapReference::bounding_box);
  for (const auto& key : PipelineConfig::keys()) EXPECT_NE(c.to_text().find(key + " ="), std::string::npos) << key;
}

TEST(Config, RejectsBadInput) {
  PipelineConfig c;
  EXPECT_ANY_THROW(c.set("nonsense", "1"));
  EXPECT_ANY_THROW(c.set("bins", "twenty"));
  EXPECT_ANY_THROW(c.set("seed", "-3"));
  EXPECT_NE(error_message([&] { c.merge_text("# comment\nbins = 10\nwhat\n"); }).find("line 3"), std::string::npos);
  c = PipelineConfig{};
  c.bins = 12;
  EXPECT_ANY_THROW(c.validate());
  c.bins = 20;
  c.fit_n_min = 600.0;
  EXPECT_ANY_THROW(c.validate());
}

TEST(Config, EnvironmentOverridesFile) {
  PipelineConfig c;
  c.merge_text("bins = 10\nwindow_length = 30\n");
  ::setenv("MKTCOP_BINS", "15", 1);
  c.merge_environment();
  ::unsetenv("MKTCOP_BINS");
  EXPECT_EQ(c.bins, 15);
  EXPECT_EQ(c.window_length, 30);
}

TEST(Pipeline, SingleWindowGivesOneState) {
  const fs::path out = scratch("single") / "out";
  RegimeSchedule s;
  s.stocks = 5;
  s.seed = 3;
  s.segments = {{60, 0.3, 5.0}};
  const PriceMatrix p = simulate_market(s).prices;
  const StateReport r = run_pipeline(p, fast_config(out));
  EXPECT_EQ(r.window_count, 1);
  EXPECT_EQ(r.k, 1);
  EXPECT_TRUE(r.gap.empty());
  EXPECT_TRUE(fs::exists(out / "report.json"));
}

TEST(Pipeline, ArtifactsAndCounts) {
  const fs::path out = scratch("artifacts") / "out";
  const PriceMatrix p = small_market(4);
  PipelineConfig config = fast_config(out);
  const StateReport r = run_pipeline(p, config);
  EXPECT_EQ(r.window_count, (1007 - 12) / 42);
  ASSERT_EQ(r.branches.size(), 2u);
  for (const auto& branch : r.branches) {
    Index windows = 0;
    for (const auto& s : branch.states) {
      windows += s.windows;
      EXPECT_EQ(s.length, s.windows * 42);
      EXPECT_GE(s.N, 1.0);
      EXPECT_LE(s.N, 500.0);
    }
    EXPECT_EQ(windows, r.window_count);
  }
  for (const char* f : {"report.json", "state_model.json", "gap_curve.csv", "windows.csv", "config.txt",
                        "grids/original_state1_empirical.csv", "grids/locally_normalized_state1_difference.csv",
                        "tails/original_state1.csv", "tails/original_state1_histogram.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_FALSE(fs::exists(out.string() + ".staging"));
  const auto j = nlohmann::json::parse(read_text(out / "report.json"));
  EXPECT_EQ(j["k"], r.k);
  EXPECT_EQ(j["branches"].size(), 2u);

  PipelineConfig reread;
  reread.merge_text(read_text(out / "config.txt"));
  EXPECT_EQ(reread.to_text(), config.to_text());
}

TEST(Pipeline, OriginalBranchOnly) {
  const fs::path out = scratch("original_only") / "out";
  PipelineConfig config = fast_config(out);
  config.use_locally_normalized = false;
  config.fixed_k = 2;
  const StateReport r = run_pipeline(small_market(5), config);
  EXPECT_EQ(r.k, 2);
  ASSERT_EQ(r.branches.size(), 1u);
  EXPECT_EQ(r.branches[0].kind, ReturnKind::original);
  EXPECT_FALSE(fs::exists(out / "grids/locally_normalized_state1_empirical.csv"));
}

TEST(Pipeline, ByteIdenticalAcrossRunsAndThreads) {
  const fs::path out = scratch("identical") / "out";
  const PriceMatrix p = small_market(6);
  PipelineConfig config = fast_config(out);
  config.threads = 1;
  run_pipeline(p, config);
  auto first = snapshot(out);
  config.threads = 3;
  run_pipeline(p, config);
  auto second = snapshot(out);
  // config.txt records the thread cap itself.
  first.erase("config.txt");
  second.erase("config.txt");
  EXPECT_EQ(first.size(), second.size());
  EXPECT_TRUE(first == second);
}

TEST(Pipeline, FailedRunLeavesNoStaging) {
  const fs::path root = scratch("failure");
  const fs::path out = root / "out";
  write_text(out, "not a directory");
  try {
    run_pipeline(small_market(7), fast_config(out));
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "write");
  }
  EXPECT_FALSE(fs::exists(out.string() + ".staging"));
  EXPECT_EQ(read_text(out), "not a directory");
}

TEST(Pipeline, StageTaggedErrors) {
  PipelineConfig config = fast_config(scratch("stages") / "out");
  config.input = {"/nonexistent/prices.csv"};
  try {
    run_pipeline(config);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "ingest");
  }
  RegimeSchedule s;
  s.stocks = 4;
  s.seed = 1;
  s.segments = {{20, 0.3, 5.0}};
  try {
    run_pipeline(simulate_market(s).prices, config);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "windows");
  }
}

TEST(Pipeline, MergesInputFiles) {
  const fs::path dir = scratch("merge");
  const PriceMatrix p = small_market(8, 4);
  PriceMatrix a = p, b = p;
  a.tickers = {p.tickers[0], p.tickers[1]};
  a.values = p.values.topRows(2);
  b.tickers = {p.tickers[2], p.tickers[3]};
  b.values = p.values.bottomRows(2);
  write_price_csv(dir / "a.csv", a);
  write_price_csv(dir / "b.csv", b);
  PipelineConfig config;
  config.input = {(dir / "a.csv").string(), (dir / "b.csv").string()};
  const PriceMatrix merged = ingest(config);
  EXPECT_EQ(merged.tickers, p.tickers);
  EXPECT_TRUE(merged.values == p.values);
  config.input = {(dir / "a.csv").string(), (dir / "a.csv").string()};
  EXPECT_ANY_THROW(ingest(config));
}

TEST(FigureGrids, FileNames) {
  const fs::path dir = scratch("figures");
  const auto grids = emit_figure_grids({{-0.5, 5.0}, {0.2, 30.0}}, 10, dir);
  ASSERT_EQ(grids.size(), 2u);
  EXPECT_EQ(grids[0].path.filename(), "kcopula_cm0.5_N5.csv");
  EXPECT_EQ(grids[1].path.filename(), "kcopula_c0.2_N30.csv");
  EXPECT_EQ(default_figure_params().size(), 4u);
}

namespace {

struct Cli {
  int status;
  std::string out;
  std::string err;
};

Cli cli(const std::string& args, const std::string& env = {}) {
  static int counter = 0;
  const fs::path dir = scratch("cli_io_" + std::to_string(counter++));
  const std::string cmd = env + " '" MKTCOP_CLI_PATH "' " + args + " > '" + (dir / "out").string() + "' 2> '" +
                          (dir / "err").string() + "'";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_text(dir / "out"), read_text(dir / "err")};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_NE(cli("").status, 0);
  EXPECT_NE(cli("bogus").status, 0);
  const fs::path dir = scratch("cli");
  const std::string csv = (dir / "p.csv").string();
  EXPECT_NE(cli("simulate --stocks 4 --segment 200,0.3,5 --out " + csv).status, 0);
  const Cli sim = cli("simulate --seed 5 --stocks 4 --segment 200,0.3,5 --segment 100,0.6,3 --out " + csv + " --labels " +
                      (dir / "labels.csv").string());
  EXPECT_EQ(sim.status, 0) << sim.err;
  EXPECT_EQ(line_count(csv), 302u);
  EXPECT_EQ(read_window_table(dir / "labels.csv"), (std::vector<int>{1, 1, 1, 1, 2, 2}));

  const Cli check = cli("ingest-check --input " + csv);
  EXPECT_EQ(check.status, 0) << check.err;
  EXPECT_NE(check.out.find("tickers 4"), std::string::npos) << check.out;

  const Cli missing = cli("ingest-check --input " + (dir / "absent.csv").string());
  EXPECT_EQ(missing.status, 1);
  EXPECT_NE(missing.err.find("[ingest]"), std::string::npos) << missing.err;

  const Cli bad_bins = cli("ingest-check --input " + csv + " --bins 7");
  EXPECT_EQ(bad_bins.status, 1);
  EXPECT_NE(bad_bins.err.find("[config]"), std::string::npos) << bad_bins.err;
}

TEST(Cli, ConfigPrecedence) {
  const fs::path dir = scratch("cli_precedence");
  write_text(dir / "c.txt", "bins = 10\noutput_dir = " + (dir / "grids").string() + "\n");
  const std::string base = "figure-grids --no-defaults --param 0.2,5 --config " + (dir / "c.txt").string();
  const fs::path grid = dir / "grids" / "kcopula_c0.2_N5.csv";
  ASSERT_EQ(cli(base).status, 0);
  EXPECT_EQ(line_count(grid), 1u + 100u);
  ASSERT_EQ(cli(base, "MKTCOP_BINS=5").status, 0);
  EXPECT_EQ(line_count(grid), 1u + 25u);
  ASSERT_EQ(cli(base + " --bins 15", "MKTCOP_BINS=5").status, 0);
  EXPECT_EQ(line_count(grid), 1u + 225u);
}

TEST(Cli, FitAndAsymmetry) {
  const fs::path dir = scratch("cli_fit");
  CopulaGrid g = k_copula_density_grid({0.3, 10.0}, 10);
  write_grid_csv(dir / "g.csv", g);
  const Cli fit = cli("fit --grid " + (dir / "g.csv").string() + " --c 0.3");
  EXPECT_EQ(fit.status, 0) << fit.err;
  EXPECT_NE(fit.out.find("N "), std::string::npos) << fit.out;

  write_price_csv(dir / "p.csv", small_market(9, 4));
  const Cli asym = cli("asymmetry --input " + (dir / "p.csv").string() + " --out " + (dir / "t.csv").string());
  EXPECT_EQ(asym.status, 0) << asym.err;
  EXPECT_NE(asym.out.find("pairs 6"), std::string::npos) << asym.out;
  EXPECT_EQ(line_count(dir / "t.csv"), 7u);
}
