#include "mktcop/pipeline.hpp"

#include <charconv>
#include <cstdlib>
#include <set>
#include <system_error>

#include "mktcop/parallel.hpp"

namespace mktcop {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_integer(std::string_view key, std::string_view text) {
  T value{};
  const std::string s = trim(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::invalid_argument("config: " + std::string(key) + " expects an integer, got '" + s + "'");
  return value;
}

double parse_real(std::string_view key, std::string_view text) {
  double value = 0.0;
  const std::string s = trim(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::invalid_argument("config: " + std::string(key) + " expects a number, got '" + s + "'");
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("config: " + std::string(key) + " expects true/false, got '" + s + "'");
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

template <class F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

nlohmann::ordered_json dispersion_json(const Dispersion& d) {
  return {{"mean", d.mean}, {"sd_population", d.sd_population}, {"sd_sample", d.sd_sample}};
}

std::string number_tag(double x) {
  std::string s = format_double(x);
  for (char& ch : s)
    if (ch == '-') ch = 'm';
  return s;
}

}  // namespace

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> k = {
      "input",     "window_length", "local_n",   "bins", "use_locally_normalized", "gap_k_max",  "gap_references",
      "gap_reference", "fixed_k",   "fit_n_min", "fit_n_max", "seed", "output_dir", "strict_missing", "threads"};
  return k;
}

void PipelineConfig::validate() const {
  if (window_length < 2) throw std::invalid_argument("config: window_length must be at least 2");
  if (local_n < 2) throw std::invalid_argument("config: local_n must be at least 2");
  if (bins < 5 || bins % 5 != 0) throw std::invalid_argument("config: bins must be a positive multiple of 5");
  if (gap_k_max < 1) throw std::invalid_argument("config: gap_k_max must be at least 1");
  if (gap_references < 1) throw std::invalid_argument("config: gap_references must be at least 1");
  if (fixed_k < 0) throw std::invalid_argument("config: fixed_k must be non-negative");
  if (!(fit_n_min > 0.0) || !(fit_n_max > fit_n_min)) throw std::invalid_argument("config: need 0 < fit_n_min < fit_n_max");
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir must be set");
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  if (key == "input") {
    input.clear();
    std::string rest(value);
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto comma = rest.find(',', start);
      const std::string item = trim(std::string_view(rest).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!item.empty()) input.push_back(item);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else if (key == "window_length") {
    window_length = parse_integer<Index>(key, value);
  } else if (key == "local_n") {
    local_n = parse_integer<int>(key, value);
  } else if (key == "bins") {
    bins = parse_integer<int>(key, value);
  } else if (key == "use_locally_normalized") {
    use_locally_normalized = parse_bool(key, value);
  } else if (key == "gap_k_max") {
    gap_k_max = parse_integer<int>(key, value);
  } else if (key == "gap_references") {
    gap_references = parse_integer<int>(key, value);
  } else if (key == "gap_reference") {
    gap_reference = gap_reference_from_string(trim(value));
  } else if (key == "fixed_k") {
    fixed_k = parse_integer<int>(key, value);
  } else if (key == "fit_n_min") {
    fit_n_min = parse_real(key, value);
  } else if (key == "fit_n_max") {
    fit_n_max = parse_real(key, value);
  } else if (key == "seed") {
    seed = parse_integer<std::uint64_t>(key, value);
  } else if (key == "output_dir") {
    output_dir = trim(value);
  } else if (key == "strict_missing") {
    strict_missing = parse_bool(key, value);
  } else if (key == "threads") {
    threads = parse_integer<unsigned>(key, value);
  } else {
    throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
  }
}

std::string PipelineConfig::to_text() const {
  std::string out;
  out += "input = " + join(input, ",") + "\n";
  out += "window_length = " + std::to_string(window_length) + "\n";
  out += "local_n = " + std::to_string(local_n) + "\n";
  out += "bins = " + std::to_string(bins) + "\n";
  out += std::string("use_locally_normalized = ") + (use_locally_normalized ? "true" : "false") + "\n";
  out += "gap_k_max = " + std::to_string(gap_k_max) + "\n";
  out += "gap_references = " + std::to_string(gap_references) + "\n";
  out += std::string("gap_reference = ") + mktcop::to_string(gap_reference) + "\n";
  out += "fixed_k = " + std::to_string(fixed_k) + "\n";
  out += "fit_n_min = " + format_double(fit_n_min) + "\n";
  out += "fit_n_max = " + format_double(fit_n_max) + "\n";
  out += "seed = " + std::to_string(seed) + "\n";
  out += "output_dir = " + output_dir + "\n";
  out += std::string("strict_missing = ") + (strict_missing ? "true" : "false") + "\n";
  out += "threads = " + std::to_string(threads) + "\n";
  return out;
}

void PipelineConfig::merge_text(std::string_view text) {
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_number;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line " + std::to_string(line_number) + ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void PipelineConfig::merge_environment() {
  for (const auto& key : keys()) {
    std::string name = "MKTCOP_";
    for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* value = std::getenv(name.c_str())) set(key, value);
  }
}

nlohmann::ordered_json StateReport::to_json() const {
  nlohmann::ordered_json j;
  j["k"] = k;
  j["window_count"] = window_count;
  j["stocks"] = stocks;
  j["days"] = days;
  j["state_model"] = mktcop::to_json(model);
  nlohmann::ordered_json gap_rows = nlohmann::ordered_json::array();
  for (const auto& g : gap) gap_rows.push_back({{"k", g.k}, {"gap", g.gap}, {"s_k", g.s_k}, {"W_k", g.w_k}});
  j["gap_reference"] = mktcop::to_string(gap_reference);
  j["gap_curve"] = gap_rows;

  nlohmann::ordered_json branches_json = nlohmann::ordered_json::object();
  nlohmann::ordered_json table1 = nlohmann::ordered_json::object();
  nlohmann::ordered_json table2 = nlohmann::ordered_json::object();
  for (const auto& branch : branches) {
    nlohmann::ordered_json states = nlohmann::ordered_json::array();
    nlohmann::ordered_json c_row = nlohmann::ordered_json::array();
    nlohmann::ordered_json n_row = nlohmann::ordered_json::array();
    nlohmann::ordered_json msd_row = nlohmann::ordered_json::array();
    for (const auto& s : branch.states) {
      states.push_back({{"state", s.state},
                        {"windows", s.windows},
                        {"length", s.length},
                        {"c_bar", s.c_bar},
                        {"N", s.N},
                        {"msd", s.msd},
                        {"fit_at_boundary", s.at_boundary},
                        {"alpha", dispersion_json(s.alpha)},
                        {"beta", dispersion_json(s.beta)}});
      c_row.push_back(s.c_bar);
      n_row.push_back(s.N);
      msd_row.push_back(s.msd);
    }
    const char* name = mktcop::to_string(branch.kind);
    branches_json[name] = states;
    table1[name] = {{"c_bar", c_row}, {"N", n_row}};
    table2[name] = msd_row;
  }
  j["branches"] = branches_json;
  j["k_copula_parameters"] = table1;
  j["mean_squared_differences"] = table2;

  nlohmann::ordered_json diagnostics;
  diagnostics["dropped_tickers"] = dropped_tickers;
  nlohmann::ordered_json exclusions = nlohmann::ordered_json::object();
  for (const auto& [ticker, count] : normalization_exclusions) exclusions[ticker] = count;
  diagnostics["normalization_exclusions"] = exclusions;
  diagnostics["warnings"] = warnings;
  j["diagnostics"] = diagnostics;
  return j;
}

PriceMatrix ingest(const PipelineConfig& config, IngestDiagnostics* diagnostics) {
  if (config.input.empty()) throw std::invalid_argument("no input price file given");
  IngestOptions options;
  options.strict_missing = config.strict_missing;
  PriceMatrix merged;
  std::set<std::string> seen;
  for (const auto& path : config.input) {
    PriceMatrix part = read_price_csv(path, options, diagnostics);
    if (merged.tickers.empty()) {
      merged = std::move(part);
    } else {
      if (part.dates != merged.dates) throw std::runtime_error(path + ": dates differ from the first input file");
      Eigen::MatrixXd values(merged.stocks() + part.stocks(), merged.days());
      values << merged.values, part.values;
      merged.values = std::move(values);
      merged.tickers.insert(merged.tickers.end(), part.tickers.begin(), part.tickers.end());
    }
  }
  for (const auto& t : merged.tickers)
    if (!seen.insert(t).second) throw std::runtime_error("duplicate ticker " + t + " across inputs");
  merged.validate();
  return merged;
}

StateReport run_pipeline(const PipelineConfig& config, const Logger& log) {
  stage("config", [&] { config.validate(); });
  IngestDiagnostics diagnostics;
  const PriceMatrix prices = stage("ingest", [&] { return ingest(config, &diagnostics); });
  if (log) {
    log("ingest: " + std::to_string(prices.stocks()) + " tickers, " + std::to_string(prices.days()) + " days");
    for (const auto& w : diagnostics.warnings) log("warning: " + w);
  }
  return run_pipeline(prices, config, log, diagnostics);
}

namespace {

struct Staging {
  fs::path final_dir;
  fs::path dir;
  std::vector<fs::path> files;  // relative
  bool committed = false;

  explicit Staging(const fs::path& out) : final_dir(out), dir(out.string() + ".staging") {
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::create_directories(dir);
  }
  ~Staging() {
    if (!committed) {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  }
  fs::path path(const fs::path& relative) {
    files.push_back(relative);
    const fs::path full = dir / relative;
    fs::create_directories(full.parent_path());
    return full;
  }
  void commit() {
    for (const auto& rel : files) {
      const fs::path target = final_dir / rel;
      fs::create_directories(target.parent_path());
      fs::rename(dir / rel, target);
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    committed = true;
  }
};

}  // namespace

StateReport run_pipeline(const PriceMatrix& prices, const PipelineConfig& config, const Logger& log,
                         const IngestDiagnostics& ingest_diagnostics) {
  stage("config", [&] { config.validate(); });
  set_thread_limit(config.threads);
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };

  StateReport report;
  report.dropped_tickers = ingest_diagnostics.dropped_tickers;
  report.stocks = prices.stocks();

  const ReturnMatrix original_full = stage("returns", [&] { return compute_returns(prices); });
  const ReturnMatrix normalized = stage("normalize", [&] { return local_normalize(original_full, config.local_n); });
  for (Index k = 0; k < normalized.stocks(); ++k)
    if (normalized.excluded[k] > 0) report.normalization_exclusions.emplace_back(normalized.tickers[k], normalized.excluded[k]);
  // Both branches cover the same days.
  const ReturnMatrix original = original_full.columns(config.local_n - 1, original_full.days());
  report.days = normalized.days();

  const std::vector<Window> windows =
      stage("windows", [&] { return partition_windows(normalized.days(), WindowSpec{config.window_length}); });
  report.window_count = static_cast<Index>(windows.size());
  say("windows: " + std::to_string(windows.size()) + " of " + std::to_string(config.window_length) + " days");

  stage("cluster", [&] {
    std::vector<CorrelationMatrix> correlations(windows.size());
    parallel_for(windows.size(), [&](std::size_t w) {
      correlations[w] = correlation_matrix(normalized, windows[w].range, windows[w].index);
    });
    const Eigen::MatrixXd features = upper_triangle_features(correlations);
    const Eigen::MatrixXd distances = pairwise_distances(features);
    const Index M = distances.rows();
    int k = 1;
    if (config.fixed_k > 0) {
      k = config.fixed_k;
      if (k > M) throw std::invalid_argument("fixed_k exceeds the number of windows");
    } else if (M >= 2) {
      const GapSelection selection = gap_select_k(features, distances, config.gap_k_max, config.gap_references, config.seed,
                                                       config.gap_reference);
      k = selection.k;
      report.gap = selection.curve;
      report.gap_reference = config.gap_reference;
    }
    report.model = pam_cluster(distances, k, config.seed);
    report.k = k;
  });
  say("states: k = " + std::to_string(report.k));

  Staging staging(config.output_dir);
  stage("write", [&] {
    write_text(staging.path("state_model.json"), mktcop::to_json(report.model).dump(2) + "\n");
    write_gap_csv(staging.path("gap_curve.csv"), report.gap);
    std::string table = "window_index,start_date,end_date,state\n";
    for (std::size_t w = 0; w < windows.size(); ++w) {
      table += std::to_string(w) + "," + normalized.dates[windows[w].range.begin] + "," +
               normalized.dates[windows[w].range.end - 1] + "," + std::to_string(report.model.labels[w]) + "\n";
    }
    write_text(staging.path("windows.csv"), table);
    PipelineConfig effective = config;
    write_text(staging.path("config.txt"), effective.to_text());
  });

  const std::vector<Index> sizes = report.model.state_sizes();
  std::vector<const ReturnMatrix*> branches{&original};
  if (config.use_locally_normalized) branches.push_back(&normalized);

  for (const ReturnMatrix* branch : branches) {
    BranchReport branch_report;
    branch_report.kind = branch->kind;
    const std::string name = mktcop::to_string(branch->kind);
    for (int state = 1; state <= report.k; ++state) {
      BranchStateRecord record;
      record.state = state;
      record.windows = sizes[state - 1];
      const ReturnMatrix series =
          stage("assemble", [&] { return assemble_state_series(*branch, windows, report.model.labels, state); });
      record.length = series.days();
      record.c_bar = stage("copula", [&] { return average_correlation(series); });
      StateCopulaAnalysis analysis = stage("copula", [&] { return analyze_state_pairs(series, config.bins); });
      analysis.average.state = state;
      record.alpha = analysis.asymmetry.alpha;
      record.beta = analysis.asymmetry.beta;

      FitOptions options;
      options.n_min = config.fit_n_min;
      options.n_max = config.fit_n_max;
      const FitResult fit = stage("fit", [&] { return fit_N(analysis.average, record.c_bar, options); });
      record.N = fit.N;
      record.msd = fit.msd;
      record.at_boundary = fit.at_boundary;
      if (fit.at_boundary) {
        report.warnings.push_back(name + " state " + std::to_string(state) + ": fitted N=" + format_double(fit.N) +
                                  " lies on the search boundary");
      }
      CopulaGrid analytic = stage("fit", [&] { return k_copula_density_grid({record.c_bar, fit.N}, config.bins); });
      analytic.state = state;

      stage("write", [&] {
        const std::string prefix = name + "_state" + std::to_string(state);
        write_grid_csv(staging.path(fs::path("grids") / (prefix + "_empirical.csv")), analysis.average);
        write_grid_csv(staging.path(fs::path("grids") / (prefix + "_analytic.csv")), analytic);
        write_grid_csv(staging.path(fs::path("grids") / (prefix + "_difference.csv")), grid_difference(analysis.average, analytic));
        write_tails_csv(staging.path(fs::path("tails") / (prefix + ".csv")), series.tickers, analysis.asymmetry);

        std::vector<double> alphas, betas;
        for (const auto& p : analysis.asymmetry.pairs) {
          alphas.push_back(p.stats.alpha);
          betas.push_back(p.stats.beta);
        }
        constexpr int kHistBins = 40;
        const auto ha = value_histogram(alphas, -0.1, 0.1, kHistBins);
        const auto hb = value_histogram(betas, -0.1, 0.1, kHistBins);
        std::string hist = "bin_lo,bin_hi,alpha_count,beta_count\n";
        for (int b = 0; b < kHistBins; ++b) {
          hist += format_double(-0.1 + 0.2 * b / kHistBins) + "," + format_double(-0.1 + 0.2 * (b + 1) / kHistBins) + "," +
                  std::to_string(ha[b]) + "," + std::to_string(hb[b]) + "\n";
        }
        write_text(staging.path(fs::path("tails") / (prefix + "_histogram.csv")), hist);
      });
      say(name + " state " + std::to_string(state) + ": c=" + format_double(record.c_bar) + " N=" + format_double(record.N) +
          " msd=" + format_double(record.msd));
      branch_report.states.push_back(record);
    }
    report.branches.push_back(std::move(branch_report));
  }

  stage("write", [&] {
    write_text(staging.path("report.json"), report.to_json().dump(2) + "\n");
    staging.commit();
  });
  return report;
}

std::vector<KCopulaParams> default_figure_params() { return {{0.0, 5.0}, {0.5, 5.0}, {0.2, 3.0}, {0.2, 30.0}}; }

std::vector<FigureGrid> emit_figure_grids(const std::vector<KCopulaParams>& params, int bins, const fs::path& output_dir) {
  fs::create_directories(output_dir);
  std::vector<FigureGrid> out;
  for (const auto& p : params) {
    FigureGrid fg;
    fg.params = p;
    fg.grid = k_copula_density_grid(p, bins);
    fg.path = output_dir / ("kcopula_c" + number_tag(p.c) + "_N" + number_tag(p.N) + ".csv");
    write_grid_csv(fg.path, fg.grid);
    out.push_back(std::move(fg));
  }
  return out;
}

}  // namespace mktcop
