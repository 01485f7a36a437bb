// Command-line front end: ingest-check, simulate, run, figure-grids, fit, asymmetry.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "mktcop/io.hpp"
#include "mktcop/kcopula.hpp"
#include "mktcop/parallel.hpp"
#include "mktcop/pipeline.hpp"
#include "mktcop/simulator.hpp"

namespace fs = std::filesystem;
using namespace mktcop;

namespace {

// Flags named after config keys, applied after the config file and environment.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app, const std::vector<std::string>& keys) {
    app.add_option("--config", config_file, "flat key = value config file")->check(CLI::ExistingFile);
    for (const auto& key : keys) {
      options[key] = app.add_option("--" + key, values[key], "overrides config key " + key);
    }
  }

  PipelineConfig resolve() const {
    PipelineConfig config;
    if (!config_file.empty()) config.merge_text(read_text(config_file));
    config.merge_environment();
    for (const auto& [key, option] : options)
      if (option->count() > 0) config.set(key, values.at(key));
    config.validate();
    return config;
  }
};

std::vector<double> split_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    const double value = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
    out.push_back(value);
  }
  return out;
}

void print_dispersion(const char* name, const Dispersion& d) {
  std::printf("%s mean=%s sd=%s\n", name, format_double(d.mean).c_str(), format_double(d.sd_population).c_str());
}

int fail(const std::string& stage, const std::string& message) {
  std::fprintf(stderr, "mktcop: error [%s] %s\n", stage.c_str(), message.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Market-state copula analysis"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  const auto& all_keys = PipelineConfig::keys();

  // ingest-check
  auto* ingest_cmd = app.add_subcommand("ingest-check", "validate price CSVs and report diagnostics");
  ConfigFlags ingest_flags;
  ingest_flags.attach(*ingest_cmd, all_keys);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "write a synthetic price panel with known regimes");
  std::uint64_t sim_seed = 0;
  Index sim_stocks = 20;
  std::vector<std::string> sim_segments;
  std::string sim_out;
  std::string sim_labels;
  Index sim_window = 42;
  int sim_local_n = 13;
  unsigned sim_threads = 0;
  sim_cmd->add_option("--seed", sim_seed, "master seed")->required();
  sim_cmd->add_option("--stocks", sim_stocks, "number of stocks")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--segment", sim_segments, "days,c,N[,volatility]; repeat for each regime")->required();
  sim_cmd->add_option("--out", sim_out, "price CSV path")->required();
  sim_cmd->add_option("--labels", sim_labels, "window label sidecar CSV (window_index,regime_id)");
  sim_cmd->add_option("--window_length", sim_window, "window length for the label sidecar");
  sim_cmd->add_option("--local_n", sim_local_n, "normalization window for the label sidecar offset");
  sim_cmd->add_option("--threads", sim_threads, "worker cap (0 = all)");

  // run
  auto* run_cmd = app.add_subcommand("run", "full pipeline: states, copulas, fits, tail asymmetry");
  ConfigFlags run_flags;
  run_flags.attach(*run_cmd, all_keys);

  // figure-grids
  auto* fig_cmd = app.add_subcommand("figure-grids", "analytic K-copula density grids");
  ConfigFlags fig_flags;
  fig_flags.attach(*fig_cmd, all_keys);
  std::vector<std::string> fig_params;
  bool fig_no_defaults = false;
  fig_cmd->add_option("--param", fig_params, "extra c,N pair; repeatable");
  fig_cmd->add_flag("--no-defaults", fig_no_defaults, "emit only the --param pairs");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit N to one empirical grid CSV");
  ConfigFlags fit_flags;
  fit_flags.attach(*fit_cmd, all_keys);
  std::string fit_grid;
  double fit_c = 0.0;
  fit_cmd->add_option("--grid", fit_grid, "empirical grid CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--c", fit_c, "average correlation")->required();

  // asymmetry
  auto* asym_cmd = app.add_subcommand("asymmetry", "pairwise tail statistics over a whole panel");
  ConfigFlags asym_flags;
  asym_flags.attach(*asym_cmd, all_keys);
  std::string asym_out;
  asym_cmd->add_option("--out", asym_out, "tail statistics CSV");

  CLI11_PARSE(app, argc, argv);

  const Logger log = [&](const std::string& message) {
    if (!quiet) std::fprintf(stderr, "mktcop: %s\n", message.c_str());
  };

  std::string stage = "config";
  try {
    if (*ingest_cmd) {
      const PipelineConfig config = ingest_flags.resolve();
      stage = "ingest";
      IngestDiagnostics diag;
      const PriceMatrix prices = ingest(config, &diag);
      std::printf("tickers %lld\n", static_cast<long long>(prices.stocks()));
      std::printf("days %lld\n", static_cast<long long>(prices.days()));
      std::printf("first_date %s\nlast_date %s\n", prices.dates.front().c_str(), prices.dates.back().c_str());
      std::printf("missing_cells %lld\n", static_cast<long long>(diag.missing_cells));
      for (const auto& t : diag.dropped_tickers) std::printf("dropped %s\n", t.c_str());
      for (const auto& w : diag.warnings) std::printf("warning %s\n", w.c_str());
      return 0;
    }

    if (*sim_cmd) {
      set_thread_limit(sim_threads);
      RegimeSchedule schedule;
      schedule.seed = sim_seed;
      schedule.stocks = sim_stocks;
      for (const auto& text : sim_segments) {
        const std::vector<double> v = split_numbers(text);
        if (v.size() != 3 && v.size() != 4) throw std::invalid_argument("--segment expects days,c,N[,volatility]");
        RegimeSegment segment;
        segment.days = static_cast<Index>(v[0]);
        if (static_cast<double>(segment.days) != v[0]) throw std::invalid_argument("--segment days must be an integer");
        segment.c = v[1];
        segment.N = v[2];
        if (v.size() == 4) segment.volatility = v[3];
        schedule.segments.push_back(segment);
      }
      stage = "simulate";
      const SimulatedMarket market = simulate_market(schedule);
      stage = "write";
      write_price_csv(sim_out, market.prices);
      if (!sim_labels.empty()) {
        write_window_table(sim_labels, "regime_id", window_regimes(market.day_regime, sim_window, sim_local_n - 1));
      }
      log("simulate: " + std::to_string(market.prices.stocks()) + " stocks, " + std::to_string(market.prices.days()) +
          " days, " + std::to_string(market.resampled) + " redrawn days");
      return 0;
    }

    if (*run_cmd) {
      const PipelineConfig config = run_flags.resolve();
      const StateReport report = run_pipeline(config, log);
      std::printf("k %d\n", report.k);
      auto header = [&](const char* title) {
        std::printf("\n%s\n%-28s", title, "returns");
        for (int state = 1; state <= report.k; ++state) std::printf(" %9s", ("state " + std::to_string(state)).c_str());
        std::printf("\n");
      };
      auto row = [](const std::string& label, const std::vector<double>& values, const char* format) {
        std::printf("%-28s", label.c_str());
        for (double v : values) std::printf(format, v);
        std::printf("\n");
      };
      header("K-copula parameters");
      for (const auto& branch : report.branches) {
        std::vector<double> c, n;
        for (const auto& s : branch.states) {
          c.push_back(s.c_bar);
          n.push_back(s.N);
        }
        row(std::string(to_string(branch.kind)) + " c_bar", c, " %9.3f");
        row(std::string(to_string(branch.kind)) + " N", n, " %9.1f");
      }
      header("mean squared differences");
      for (const auto& branch : report.branches) {
        std::vector<double> msd;
        for (const auto& s : branch.states) msd.push_back(s.msd);
        row(to_string(branch.kind), msd, " %9.3f");
      }
      return 0;
    }

    if (*fig_cmd) {
      const PipelineConfig config = fig_flags.resolve();
      set_thread_limit(config.threads);
      std::vector<KCopulaParams> params;
      if (!fig_no_defaults) params = default_figure_params();
      for (const auto& text : fig_params) {
        const std::vector<double> v = split_numbers(text);
        if (v.size() != 2) throw std::invalid_argument("--param expects c,N");
        KCopulaParams p{v[0], v[1]};
        p.validate();
        params.push_back(p);
      }
      stage = "figure-grids";
      for (const auto& g : emit_figure_grids(params, config.bins, config.output_dir))
        std::printf("%s mass %.12f\n", g.path.string().c_str(), g.grid.mass());
      return 0;
    }

    if (*fit_cmd) {
      const PipelineConfig config = fit_flags.resolve();
      set_thread_limit(config.threads);
      stage = "ingest";
      const CopulaGrid grid = read_grid_csv(fit_grid);
      stage = "fit";
      FitOptions options;
      options.n_min = config.fit_n_min;
      options.n_max = config.fit_n_max;
      const FitResult fit = fit_N(grid, fit_c, options);
      std::printf("N %s\nmsd %s\nat_boundary %s\nevaluations %d\n", format_double(fit.N).c_str(),
                  format_double(fit.msd).c_str(), fit.at_boundary ? "true" : "false", fit.evaluations);
      if (fit.at_boundary) log("warning: fitted N lies on the search boundary");
      return 0;
    }

    if (*asym_cmd) {
      const PipelineConfig config = asym_flags.resolve();
      config.validate();
      set_thread_limit(config.threads);
      stage = "ingest";
      const PriceMatrix prices = ingest(config);
      stage = "returns";
      ReturnMatrix returns = compute_returns(prices);
      if (config.use_locally_normalized) {
        stage = "normalize";
        returns = local_normalize(returns, config.local_n);
      }
      stage = "copula";
      const StateCopulaAnalysis analysis = analyze_state_pairs(returns, config.bins);
      if (!asym_out.empty()) {
        stage = "write";
        write_tails_csv(asym_out, returns.tickers, analysis.asymmetry);
      }
      std::printf("pairs %zu\n", analysis.asymmetry.pairs.size());
      print_dispersion("alpha", analysis.asymmetry.alpha);
      print_dispersion("beta", analysis.asymmetry.beta);
      return 0;
    }
  } catch (const StageError& e) {
    return fail(e.stage(), std::string(e.what()).substr(e.stage().size() + 3));
  } catch (const std::exception& e) {
    return fail(stage, e.what());
  }
  return 0;
}
