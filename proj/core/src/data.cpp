#include "tailflow/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

#include "tailflow/errors.hpp"
#include "tailflow/flow_layers.hpp"

namespace tailflow {

namespace {

constexpr int kSnapshotVersion = 1;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    cells.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cells;
}

char detect_delimiter(const std::string& header) {
  if (header.find('\t') != std::string::npos) return '\t';
  if (header.find(',') == std::string::npos && header.find(';') != std::string::npos) return ';';
  return ',';
}

bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower(cell);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "na" || lower == "nan" || lower == "null" || lower == "n/a" || lower == ".";
}

std::chrono::year_month_day parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return {};
  const char* s = text.data();
  if (std::from_chars(s, s + 4, y).ec != std::errc() ||
      std::from_chars(s + 5, s + 7, m).ec != std::errc() ||
      std::from_chars(s + 8, s + 10, d).ec != std::errc()) {
    return {};
  }
  return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                     std::chrono::day{d}};
}

std::string format_date(std::chrono::year_month_day ymd) {
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
     << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2)
     << static_cast<unsigned>(ymd.day());
  return os.str();
}

Rng split_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x5911u, 0x7u};
  return Rng(seq);
}

void validate_fractions(const SplitFractions& f) {
  if (!(f.train > 0.0 && f.validation > 0.0 && f.test > 0.0)) {
    throw std::invalid_argument("split fractions must all be positive");
  }
  if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
}

// Uniform partition of rows [0, count) into train and validation.
void partition_pre_cutoff(std::size_t count, const SplitFractions& f, std::uint64_t seed,
                          std::vector<std::size_t>& train, std::vector<std::size_t>& validation) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = split_rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(count) * f.train / (f.train + f.validation)));
  n_train = std::clamp<std::size_t>(n_train, 1, count - 1);
  train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
}

}  // namespace

bool is_iso_date(const std::string& text) { return parse_date(text).ok(); }

PriceTable read_prices(std::istream& in, const std::vector<std::string>& tickers) {
  std::string line;
  std::size_t line_no = 0;
  std::string header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = line;
      break;
    }
  }
  if (header.empty()) throw DataError("price file is empty");
  const char delim = detect_delimiter(header);
  const auto columns = split_line(header, delim);
  if (columns.size() < 2) throw DataError("header needs a date column and a ticker", line_no);

  std::vector<std::size_t> selected;
  std::vector<std::string> names;
  if (tickers.empty()) {
    for (std::size_t c = 1; c < columns.size(); ++c) {
      if (columns[c].empty()) throw DataError("empty ticker name in header", line_no);
      selected.push_back(c);
      names.push_back(columns[c]);
    }
  } else {
    for (const auto& t : tickers) {
      const auto it = std::find(columns.begin() + 1, columns.end(), t);
      if (it == columns.end()) throw DataError("ticker '" + t + "' not in header", line_no);
      selected.push_back(static_cast<std::size_t>(it - columns.begin()));
      names.push_back(t);
    }
  }
  {
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw DataError("duplicate ticker in header", 1);
    }
  }

  struct Row {
    std::string date;
    std::vector<double> values;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::size_t dropped = 0;
  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line, delim);
    if (cells.size() != columns.size()) {
      throw DataError("expected " + std::to_string(columns.size()) + " fields, found " +
                          std::to_string(cells.size()),
                      line_no);
    }
    if (!is_iso_date(cells[0])) {
      throw DataError("invalid date '" + cells[0] + "' (expected YYYY-MM-DD)", line_no);
    }
    if (auto [it, inserted] = seen.emplace(cells[0], line_no); !inserted) {
      throw DataError("duplicate date " + cells[0] + " (first seen on line " +
                          std::to_string(it->second) + ")",
                      line_no);
    }
    Row row{cells[0], {}, line_no};
    bool missing = false;
    for (std::size_t c : selected) {
      const std::string& cell = cells[c];
      if (is_missing(cell)) {
        missing = true;
        break;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw DataError("cannot parse price '" + cell + "' for " + columns[c], line_no);
      }
      if (!std::isfinite(v)) {
        missing = true;
        break;
      }
      if (!(v > 0.0)) {
        throw DataError("non-positive price " + cell + " for " + columns[c] + " on " + cells[0],
                        line_no);
      }
      row.values.push_back(v);
    }
    if (missing) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw DataError(dropped == 0 ? "no data rows after the header"
                                 : "no complete data rows (" + std::to_string(dropped) +
                                       " dropped for missing values)");
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.date < b.date; });

  PriceTable table;
  table.tickers = names;
  table.dropped_rows = dropped;
  table.prices = Matrix(rows.size(), names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    table.dates.push_back(rows[r].date);
    std::copy(rows[r].values.begin(), rows[r].values.end(), table.prices.row(r).begin());
  }
  return table;
}

PriceTable load_prices(const std::filesystem::path& path,
                       const std::vector<std::string>& tickers) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_prices(in, tickers);
}

void write_prices(std::ostream& out, const PriceTable& table) {
  out << "date";
  for (const auto& t : table.tickers) out << ',' << t;
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < table.dates.size(); ++r) {
    out << table.dates[r];
    for (double v : table.prices.row(r)) out << ',' << v;
    out << '\n';
  }
}

void write_prices(const std::filesystem::path& path, const PriceTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_prices(out, table);
  if (!out) throw DataError("write failed for " + path.string());
}

Matrix log_returns(const PriceTable& table) {
  const std::size_t n = table.prices.rows();
  const std::size_t d = table.prices.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      if (!(table.prices(r, c) > 0.0)) {
        throw DataError("non-positive price for " + table.tickers.at(c) + " on " +
                        table.dates.at(r));
      }
    }
  }
  if (n < 2) return Matrix(0, d);
  Matrix x(n - 1, d);
  for (std::size_t r = 0; r + 1 < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      // The ratio is formed first: a per-column rescaling by a power of two
      // then leaves the return bit-identical.
      x(r, c) = std::log(table.prices(r + 1, c) / table.prices(r, c));
    }
  }
  return x;
}

std::vector<std::string> return_dates(const PriceTable& table) {
  if (table.dates.size() < 2) return {};
  return {table.dates.begin() + 1, table.dates.end()};
}

PriceTable prices_from_returns(const Matrix& returns, const std::vector<std::string>& dates,
                               const std::vector<std::string>& tickers, double start) {
  if (dates.size() != returns.rows() + 1) {
    throw std::invalid_argument("prices_from_returns: need one more date than return rows");
  }
  if (tickers.size() != returns.cols()) {
    throw std::invalid_argument("prices_from_returns: ticker count mismatch");
  }
  PriceTable table;
  table.dates = dates;
  table.tickers = tickers;
  table.prices = Matrix(dates.size(), tickers.size());
  for (std::size_t c = 0; c < tickers.size(); ++c) {
    double cumulative = 0.0;
    table.prices(0, c) = start;
    for (std::size_t r = 0; r < returns.rows(); ++r) {
      cumulative += returns(r, c);
      table.prices(r + 1, c) = start * std::exp(cumulative);
    }
  }
  return table;
}

DataSplit ReturnsDataset::materialize() const {
  return {x.select_rows(train), x.select_rows(validation), x.select_rows(test)};
}

ReturnsDataset temporal_split(const Matrix& x, const std::vector<std::string>& dates,
                              const SplitFractions& fractions, std::uint64_t split_seed,
                              const std::optional<std::string>& cutoff) {
  validate_fractions(fractions);
  const std::size_t n = x.rows();
  if (dates.size() != n) throw std::invalid_argument("temporal_split: dates/rows mismatch");
  if (n < 10) {
    throw DataError("need at least 10 return rows for a split, got " + std::to_string(n));
  }
  if (!std::is_sorted(dates.begin(), dates.end()) ||
      std::adjacent_find(dates.begin(), dates.end()) != dates.end()) {
    throw DataError("dates must be strictly increasing");
  }

  std::size_t pre = 0;  // rows up to and including the cutoff
  if (cutoff) {
    if (!is_iso_date(*cutoff)) throw DataError("invalid cutoff date '" + *cutoff + "'");
    pre = static_cast<std::size_t>(std::upper_bound(dates.begin(), dates.end(), *cutoff) -
                                   dates.begin());
  } else {
    const auto n_test =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions.test));
    pre = n - std::clamp<std::size_t>(n_test, 1, n - 2);
  }
  if (pre < 2 || pre >= n) {
    throw DataError("cutoff leaves " + std::to_string(pre) + " rows before and " +
                    std::to_string(n - pre) +
                    " after; need at least 2 before and 1 after");
  }

  ReturnsDataset ds;
  ds.x = x;
  ds.dates = dates;
  ds.cutoff = dates[pre - 1];
  ds.split_seed = split_seed;
  partition_pre_cutoff(pre, fractions, split_seed, ds.train, ds.validation);
  ds.test.resize(n - pre);
  std::iota(ds.test.begin(), ds.test.end(), pre);
  return ds;
}

ReturnsDataset make_dataset(const PriceTable& table, const SplitFractions& fractions,
                            std::uint64_t split_seed, const std::optional<std::string>& cutoff) {
  ReturnsDataset ds =
      temporal_split(log_returns(table), return_dates(table), fractions, split_seed, cutoff);
  ds.tickers = table.tickers;
  return ds;
}

ReturnsDataset resample_split(const ReturnsDataset& dataset, const SplitFractions& fractions,
                              std::uint64_t split_seed) {
  validate_fractions(fractions);
  ReturnsDataset ds = dataset;
  ds.split_seed = split_seed;
  partition_pre_cutoff(dataset.train.size() + dataset.validation.size(), fractions, split_seed,
                       ds.train, ds.validation);
  return ds;
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() < 2) throw std::invalid_argument("Standardizer::fit: need at least 2 rows");
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= n;
    double ss = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    s.mean.push_back(mean);
    s.scale.push_back(sd > 0.0 ? sd : 1.0);
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean[c]) / scale[c];
  }
  return out;
}

Matrix Standardizer::invert(const Matrix& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) * scale[c] + mean[c];
  }
  return out;
}

double Standardizer::log_jacobian() const {
  double total = 0.0;
  for (double s : scale) total -= std::log(s);
  return total;
}

DataSplit standardize(const DataSplit& split, const Standardizer& standardizer) {
  return {standardizer.apply(split.train), standardizer.apply(split.validation),
          standardizer.apply(split.test)};
}

void save_dataset(const std::filesystem::path& path, const ReturnsDataset& dataset) {
  nlohmann::json j;
  j["format"] = "tailflow-dataset";
  j["version"] = kSnapshotVersion;
  j["tickers"] = dataset.tickers;
  j["dates"] = dataset.dates;
  j["rows"] = dataset.x.rows();
  j["cols"] = dataset.x.cols();
  j["x"] = std::vector<double>(dataset.x.data().begin(), dataset.x.data().end());
  j["train"] = dataset.train;
  j["validation"] = dataset.validation;
  j["test"] = dataset.test;
  j["cutoff"] = dataset.cutoff;
  j["split_seed"] = dataset.split_seed;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump();
}

ReturnsDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != "tailflow-dataset") throw DataError("not a dataset snapshot");
    if (j.at("version").get<int>() != kSnapshotVersion) {
      throw DataError("unsupported dataset snapshot version " + j.at("version").dump());
    }
    ReturnsDataset ds;
    ds.tickers = j.at("tickers").get<std::vector<std::string>>();
    ds.dates = j.at("dates").get<std::vector<std::string>>();
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto values = j.at("x").get<std::vector<double>>();
    if (values.size() != rows * cols || ds.dates.size() != rows) {
      throw DataError("dataset snapshot has inconsistent sizes");
    }
    ds.x = Matrix(rows, cols);
    std::copy(values.begin(), values.end(), ds.x.data().begin());
    ds.train = j.at("train").get<std::vector<std::size_t>>();
    ds.validation = j.at("validation").get<std::vector<std::size_t>>();
    ds.test = j.at("test").get<std::vector<std::size_t>>();
    ds.cutoff = j.at("cutoff").get<std::string>();
    ds.split_seed = j.at("split_seed").get<std::uint64_t>();
    for (const auto* idx : {&ds.train, &ds.validation, &ds.test}) {
      for (std::size_t i : *idx) {
        if (i >= rows) throw DataError("dataset snapshot index out of range");
      }
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset snapshot: ") + e.what());
  }
}

Matrix synthetic_student_t(const SyntheticConfig& cfg) {
  if (cfg.dim == 0 || !(cfg.nu > 0.0) || !(std::abs(cfg.rho) < 1.0) || !(cfg.scale > 0.0)) {
    throw std::invalid_argument("synthetic_student_t: invalid configuration");
  }
  const std::size_t d = cfg.dim;
  // Cholesky factor of the AR(1) correlation matrix, computed directly.
  Matrix chol(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = std::pow(cfg.rho, static_cast<double>(i - j));
      for (std::size_t k = 0; k < j; ++k) s -= chol(i, k) * chol(j, k);
      chol(i, j) = i == j ? std::sqrt(s) : s / chol(j, j);
    }
  }
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32), 0x57u};
  Rng rng(seq);
  std::normal_distribution<double> normal;
  std::chi_squared_distribution<double> chi2(cfg.nu);
  Matrix x(cfg.rows, d);
  std::vector<double> g(d);
  for (std::size_t r = 0; r < cfg.rows; ++r) {
    for (double& v : g) v = normal(rng);
    const double w = std::sqrt(chi2(rng) / cfg.nu);
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k <= i; ++k) s += chol(i, k) * g[k];
      x(r, i) = cfg.scale * s / w;
    }
  }
  return x;
}

std::vector<std::string> business_days(const std::string& first, std::size_t count) {
  using namespace std::chrono;
  const auto ymd = parse_date(first);
  if (!ymd.ok()) throw std::invalid_argument("business_days: invalid date '" + first + "'");
  sys_days day{ymd};
  std::vector<std::string> out;
  out.reserve(count);
  while (out.size() < count) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) out.push_back(format_date(year_month_day{day}));
    day += days{1};
  }
  return out;
}

PriceTable synthetic_prices(const SyntheticConfig& cfg) {
  const Matrix returns = synthetic_student_t(cfg);
  std::vector<std::string> tickers;
  for (std::size_t i = 0; i < cfg.dim; ++i) tickers.push_back("SYN" + std::to_string(i + 1));
  return prices_from_returns(returns, business_days(cfg.first_date, cfg.rows + 1), tickers);
}

}  // namespace tailflow
