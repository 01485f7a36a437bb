#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mktcop/empirical_copula.hpp"
#include "mktcop/states.hpp"
#include "mktcop/timeseries.hpp"

namespace mktcop {

struct IngestOptions {
  bool strict_missing = false;  // missing cell is an error instead of dropping the ticker
};

struct IngestDiagnostics {
  std::vector<std::string> dropped_tickers;
  std::vector<std::string> warnings;
  Index missing_cells = 0;
};

/// CSV with header `date,<ticker>...`, one row per day, ISO-8601 dates.
/// Malformed rows raise std::runtime_error with the line number; a ticker
/// with any empty cell is dropped (or rejected when strict_missing).
PriceMatrix parse_price_csv(std::istream& in, const IngestOptions& options = {}, IngestDiagnostics* diagnostics = nullptr);
PriceMatrix read_price_csv(const std::filesystem::path& path, const IngestOptions& options = {},
                           IngestDiagnostics* diagnostics = nullptr);
void write_price_csv(const std::filesystem::path& path, const PriceMatrix& prices);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

/// (u_bin_center, v_bin_center, density), B*B rows, u-major.
void write_grid_csv(const std::filesystem::path& path, const CopulaGrid& grid);
/// Reads a grid CSV and re-validates its mass (1e-6 tolerance, negative
/// entries allowed only for difference grids).
CopulaGrid read_grid_csv(const std::filesystem::path& path, GridKind kind = GridKind::empirical);

/// (pair_k, pair_l, LL, UL, UU, LU, alpha, beta) with ticker symbols.
void write_tails_csv(const std::filesystem::path& path, const std::vector<std::string>& tickers, const AsymmetryStats& stats);

/// (k, gap, s_k, W_k).
void write_gap_csv(const std::filesystem::path& path, const GapCurve& curve);

/// (window_index, regime_id) or (window_index, state) tables.
void write_window_table(const std::filesystem::path& path, const std::string& label_column, const std::vector<int>& labels);
std::vector<int> read_window_table(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const StateModel& model);
StateModel state_model_from_json(const nlohmann::ordered_json& j);

/// Writes text atomically enough for our purposes: whole string, binary mode.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mktcop
