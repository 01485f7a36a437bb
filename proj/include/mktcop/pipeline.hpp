#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mktcop/empirical_copula.hpp"
#include "mktcop/io.hpp"
#include "mktcop/kcopula.hpp"
#include "mktcop/states.hpp"
#include "mktcop/timeseries.hpp"

namespace mktcop {

/// Failure inside one pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Every field has a key of the same name in the config file, the CLI flag
/// --<key>, and the environment variable MKTCOP_<KEY>.
struct PipelineConfig {
  std::vector<std::string> input;  // one or more price CSVs sharing a date axis
  Index window_length = 42;
  int local_n = 13;
  int bins = 20;
  bool use_locally_normalized = true;  // also analyze the normalized branch
  int gap_k_max = 10;
  int gap_references = 50;
  GapReference gap_reference = GapReference::principal_axes;
  int fixed_k = 0;  // > 0 skips the gap statistic
  double fit_n_min = 1.0;
  double fit_n_max = 500.0;
  std::uint64_t seed = 42;
  std::string output_dir = "mktcop-out";
  bool strict_missing = false;
  unsigned threads = 0;  // 0 = all hardware threads

  void validate() const;

  /// Sets one field from its textual value; throws on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);

  /// Flat `key = value` document with every field.
  std::string to_text() const;
  /// Overlays a `key = value` document ('#' starts a comment) onto *this.
  void merge_text(std::string_view text);
  /// Overlays MKTCOP_<KEY> environment variables.
  void merge_environment();

  static const std::vector<std::string>& keys();
};

struct BranchStateRecord {
  int state = 0;
  Index windows = 0;
  Index length = 0;  // days in the concatenated series
  double c_bar = 0.0;
  double N = 0.0;
  double msd = 0.0;
  bool at_boundary = false;
  Dispersion alpha;
  Dispersion beta;
};

struct BranchReport {
  ReturnKind kind = ReturnKind::original;
  std::vector<BranchStateRecord> states;
};

struct StateReport {
  int k = 0;
  Index window_count = 0;
  Index stocks = 0;
  Index days = 0;
  std::vector<std::string> dropped_tickers;
  std::vector<std::pair<std::string, Index>> normalization_exclusions;
  std::vector<std::string> warnings;
  StateModel model;
  GapCurve gap;
  GapReference gap_reference = GapReference::principal_axes;
  std::vector<BranchReport> branches;

  nlohmann::ordered_json to_json() const;
};

using Logger = std::function<void(const std::string&)>;

/// Loads and merges the configured price files.
PriceMatrix ingest(const PipelineConfig& config, IngestDiagnostics* diagnostics = nullptr);

/// ingest -> returns -> local normalization -> windows -> clustering ->
/// per-state copulas, K-copula fits, tail asymmetry -> files in
/// config.output_dir. Output is written to a staging directory first and
/// removed if any stage fails.
StateReport run_pipeline(const PipelineConfig& config, const Logger& log = {});

/// Same, starting from an in-memory panel (no file ingestion stage).
StateReport run_pipeline(const PriceMatrix& prices, const PipelineConfig& config, const Logger& log = {},
                         const IngestDiagnostics& ingest_diagnostics = {});

struct FigureGrid {
  KCopulaParams params;
  std::filesystem::path path;
  CopulaGrid grid;
};

/// Parameter pairs shown in the K-copula density figure.
std::vector<KCopulaParams> default_figure_params();

/// Analytic grid CSVs for each parameter pair, named kcopula_c<c>_N<N>.csv.
std::vector<FigureGrid> emit_figure_grids(const std::vector<KCopulaParams>& params, int bins,
                                          const std::filesystem::path& output_dir);

}  // namespace mktcop
