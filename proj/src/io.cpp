#include "mktcop/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mktcop {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_number(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* begin = text.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), value);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (s[i] < '0' || s[i] > '9') return false;
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(line) + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buffer, ptr);
}

PriceMatrix parse_price_csv(std::istream& in, const IngestOptions& options, IngestDiagnostics* diagnostics) {
  IngestDiagnostics local;
  IngestDiagnostics& diag = diagnostics ? *diagnostics : local;

  std::string line;
  std::size_t line_number = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_number;
    if (!trim(line).empty()) {
      header = split_csv(line);
      break;
    }
  }
  if (header.empty()) throw std::runtime_error("price CSV is empty");
  if (header.front() != "date") malformed(line_number, "header must start with 'date'");
  if (header.size() < 2) malformed(line_number, "header names no tickers");
  const std::size_t K = header.size() - 1;
  std::vector<std::string> tickers(header.begin() + 1, header.end());
  for (const auto& t : tickers)
    if (t.empty()) malformed(line_number, "empty ticker name in header");

  std::vector<std::string> dates;
  std::vector<std::vector<double>> columns;  // per day
  std::vector<bool> missing(K, false);
  std::vector<Index> missing_count(K, 0);
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != K + 1)
      malformed(line_number, "expected " + std::to_string(K + 1) + " fields, found " + std::to_string(cells.size()));
    if (!is_iso_date(cells[0])) malformed(line_number, "bad date '" + cells[0] + "' (expected YYYY-MM-DD)");
    if (!dates.empty() && !(dates.back() < cells[0]))
      malformed(line_number, "date " + cells[0] + " is not after " + dates.back());
    std::vector<double> row(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const std::string& cell = cells[k + 1];
      if (cell.empty()) {
        if (options.strict_missing)
          malformed(line_number, "missing price for " + tickers[k] + " on " + cells[0]);
        missing[k] = true;
        ++missing_count[k];
        ++diag.missing_cells;
        continue;
      }
      if (!parse_number(cell, row[k])) malformed(line_number, "cannot parse price '" + cell + "' for " + tickers[k]);
      if (!(row[k] > 0.0) || !std::isfinite(row[k]))
        throw std::invalid_argument("nonpositive price for ticker " + tickers[k] + " on " + cells[0] + ": " + cell);
    }
    dates.push_back(cells[0]);
    columns.push_back(std::move(row));
  }
  if (dates.empty()) throw std::runtime_error("price CSV has no data rows");

  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < K; ++k) {
    if (missing[k]) {
      diag.dropped_tickers.push_back(tickers[k]);
      diag.warnings.push_back("dropped ticker " + tickers[k] + ": " + std::to_string(missing_count[k]) +
                              (missing_count[k] == static_cast<Index>(dates.size()) ? " missing cells (all)" : " missing cells"));
    } else {
      keep.push_back(k);
    }
  }
  if (keep.empty()) throw std::runtime_error("every ticker was dropped for missing data");

  PriceMatrix prices;
  prices.dates = std::move(dates);
  prices.values.resize(static_cast<Index>(keep.size()), static_cast<Index>(prices.dates.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    prices.tickers.push_back(tickers[keep[i]]);
    for (std::size_t t = 0; t < columns.size(); ++t) prices.values(i, t) = columns[t][keep[i]];
  }
  prices.validate();
  return prices;
}

PriceMatrix read_price_csv(const std::filesystem::path& path, const IngestOptions& options, IngestDiagnostics* diagnostics) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_price_csv(in, options, diagnostics);
}

void write_price_csv(const std::filesystem::path& path, const PriceMatrix& prices) {
  std::string text = "date";
  for (const auto& t : prices.tickers) text += "," + t;
  text += "\n";
  for (Index d = 0; d < prices.days(); ++d) {
    text += prices.dates[d];
    for (Index k = 0; k < prices.stocks(); ++k) text += "," + format_double(prices.values(k, d));
    text += "\n";
  }
  write_text(path, text);
}

void write_grid_csv(const std::filesystem::path& path, const CopulaGrid& grid) {
  const int B = grid.bins();
  std::string text = "u_bin_center,v_bin_center,density\n";
  for (int a = 0; a < B; ++a) {
    for (int b = 0; b < B; ++b) {
      text += format_double((a + 0.5) / B) + "," + format_double((b + 0.5) / B) + "," + format_double(grid.density(a, b)) + "\n";
    }
  }
  write_text(path, text);
}

CopulaGrid read_grid_csv(const std::filesystem::path& path, GridKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t line_number = 1;
  if (!std::getline(in, line) || trim(line) != "u_bin_center,v_bin_center,density")
    malformed(1, "grid CSV header must be u_bin_center,v_bin_center,density");
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 3) malformed(line_number, "expected 3 fields");
    std::array<double, 3> row{};
    for (int i = 0; i < 3; ++i)
      if (!parse_number(cells[i], row[i])) malformed(line_number, "cannot parse '" + cells[i] + "'");
    rows.push_back(row);
  }
  const int B = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rows.size()))));
  if (B < 1 || static_cast<std::size_t>(B) * B != rows.size()) throw std::runtime_error("grid CSV row count is not a square");
  CopulaGrid grid;
  grid.kind = kind;
  grid.density = Eigen::MatrixXd::Constant(B, B, std::numeric_limits<double>::quiet_NaN());
  for (const auto& row : rows) {
    const int a = static_cast<int>(std::floor(row[0] * B));
    const int b = static_cast<int>(std::floor(row[1] * B));
    if (a < 0 || a >= B || b < 0 || b >= B) throw std::runtime_error("grid CSV bin center outside the unit square");
    grid.density(a, b) = row[2];
  }
  if (!grid.density.allFinite()) throw std::runtime_error("grid CSV is missing bins");
  if (kind != GridKind::difference) grid.validate(1e-6, 1e-9);
  return grid;
}

void write_tails_csv(const std::filesystem::path& path, const std::vector<std::string>& tickers, const AsymmetryStats& stats) {
  std::string text = "pair_k,pair_l,LL,UL,UU,LU,alpha,beta\n";
  for (const auto& p : stats.pairs) {
    const auto& s = p.stats;
    text += tickers.at(p.k) + "," + tickers.at(p.l) + "," + format_double(s.ll) + "," + format_double(s.ul) + "," +
            format_double(s.uu) + "," + format_double(s.lu) + "," + format_double(s.alpha) + "," + format_double(s.beta) + "\n";
  }
  write_text(path, text);
}

void write_gap_csv(const std::filesystem::path& path, const GapCurve& curve) {
  std::string text = "k,gap,s_k,W_k\n";
  for (const auto& r : curve)
    text += std::to_string(r.k) + "," + format_double(r.gap) + "," + format_double(r.s_k) + "," + format_double(r.w_k) + "\n";
  write_text(path, text);
}

void write_window_table(const std::filesystem::path& path, const std::string& label_column, const std::vector<int>& labels) {
  std::string text = "window_index," + label_column + "\n";
  for (std::size_t w = 0; w < labels.size(); ++w) text += std::to_string(w) + "," + std::to_string(labels[w]) + "\n";
  write_text(path, text);
}

std::vector<int> read_window_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<int> labels;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    double index = 0, label = 0;
    if (cells.size() < 2 || !parse_number(cells[0], index) || !parse_number(cells[1], label))
      malformed(line_number, "expected window_index,label");
    if (static_cast<std::size_t>(index) != labels.size()) malformed(line_number, "window indices must be consecutive from 0");
    labels.push_back(static_cast<int>(label));
  }
  return labels;
}

nlohmann::ordered_json to_json(const StateModel& model) {
  nlohmann::ordered_json j;
  j["k"] = model.k;
  j["medoids"] = model.medoids;
  j["labels"] = model.labels;
  j["distance"] = model.distance_name;
  j["seed"] = model.seed;
  j["cost"] = model.cost;
  return j;
}

StateModel state_model_from_json(const nlohmann::ordered_json& j) {
  StateModel model;
  model.k = j.at("k").get<int>();
  model.medoids = j.at("medoids").get<std::vector<Index>>();
  model.labels = j.at("labels").get<std::vector<int>>();
  model.distance_name = j.at("distance").get<std::string>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.cost = j.value("cost", 0.0);
  if (static_cast<int>(model.medoids.size()) != model.k) throw std::runtime_error("state model: medoid count differs from k");
  for (int label : model.labels)
    if (label < 1 || label > model.k) throw std::runtime_error("state model: label outside 1..k");
  return model;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace mktcop
