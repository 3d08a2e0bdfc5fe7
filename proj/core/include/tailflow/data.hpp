#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tailflow/matrix.hpp"
#include "tailflow/trainer.hpp"

namespace tailflow {

// Closing prices, one row per trading day. Dates are ISO-8601 (YYYY-MM-DD)
// and strictly increasing; every price is positive.
struct PriceTable {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Matrix prices;
  // Rows discarded during loading because a cell was missing.
  std::size_t dropped_rows = 0;
};

// Reads a delimiter-separated table: header `date,<ticker>...`, then one row
// per day. The delimiter (',', ';' or tab) is taken from the header. Rows with
// an empty or NA/NaN cell are dropped; rows are sorted by date. If `tickers`
// is nonempty only those columns are kept, in the requested order.
PriceTable read_prices(std::istream& in, const std::vector<std::string>& tickers = {});
PriceTable load_prices(const std::filesystem::path& path,
                       const std::vector<std::string>& tickers = {});
void write_prices(std::ostream& out, const PriceTable& table);
void write_prices(const std::filesystem::path& path, const PriceTable& table);

// Row j = log(S_{j+1} / S_j), one fewer row than `table`. Throws DataError
// naming the ticker and date of a non-positive price.
Matrix log_returns(const PriceTable& table);
// Date of each return row: the later of the two prices it spans.
std::vector<std::string> return_dates(const PriceTable& table);

// Inverse of log_returns up to the first row: start * exp(cumsum(returns)).
PriceTable prices_from_returns(const Matrix& returns, const std::vector<std::string>& dates,
                               const std::vector<std::string>& tickers, double start = 100.0);

struct SplitFractions {
  double train = 0.4;
  double validation = 0.2;
  double test = 0.4;
};

// Log returns with a temporal train/validation/test partition: test is every
// row strictly after the cutoff date; train and validation are a uniform
// random partition of the rows up to and including it.
struct ReturnsDataset {
  Matrix x;
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::string cutoff;
  std::uint64_t split_seed = 0;

  DataSplit materialize() const;
};

// The cutoff is the latest date leaving round(test * N) rows after it,
// unless `cutoff` overrides it. Throws DataError for fewer than 10 rows and
// std::invalid_argument for fractions that are not positive or do not sum
// to one.
ReturnsDataset temporal_split(const Matrix& x, const std::vector<std::string>& dates,
                              const SplitFractions& fractions, std::uint64_t split_seed,
                              const std::optional<std::string>& cutoff = std::nullopt);

ReturnsDataset make_dataset(const PriceTable& table, const SplitFractions& fractions,
                            std::uint64_t split_seed,
                            const std::optional<std::string>& cutoff = std::nullopt);

// Re-draws the train/validation partition of the pre-cutoff rows.
ReturnsDataset resample_split(const ReturnsDataset& dataset, const SplitFractions& fractions,
                              std::uint64_t split_seed);

// Per-column affine map x -> (x - mean) / scale fitted on training rows.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  static Standardizer identity(std::size_t dim);
  Matrix apply(const Matrix& x) const;
  Matrix invert(const Matrix& x) const;
  // log|det| of apply(); add to a standardized-space log density to get the
  // density of the original data.
  double log_jacobian() const;
};

DataSplit standardize(const DataSplit& split, const Standardizer& standardizer);

// Single-file snapshot of a dataset including the split indices.
void save_dataset(const std::filesystem::path& path, const ReturnsDataset& dataset);
ReturnsDataset load_dataset(const std::filesystem::path& path);

// Correlated multivariate Student-T log returns: x = scale * L g / sqrt(W / nu)
// with L the Cholesky factor of corr_ij = rho^|i-j| and W ~ chi2(nu).
struct SyntheticConfig {
  std::size_t dim = 5;
  std::size_t rows = 4000;
  double nu = 2.0;
  double rho = 0.6;
  double scale = 0.01;
  std::uint64_t seed = 7;
  std::string first_date = "2000-01-03";
};

Matrix synthetic_student_t(const SyntheticConfig& cfg);
// Business-day dates (Mon-Fri) starting at `first` (ISO-8601).
std::vector<std::string> business_days(const std::string& first, std::size_t count);
// Price table whose log returns are synthetic_student_t(cfg).
PriceTable synthetic_prices(const SyntheticConfig& cfg);

bool is_iso_date(const std::string& text);

}  // namespace tailflow
