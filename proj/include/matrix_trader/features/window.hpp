#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "matrix_trader/common.hpp"
#include "matrix_trader/data/market_dataset.hpp"

namespace mtrader::features {

inline constexpr std::size_t kDefaultWindow = 90;
inline constexpr std::size_t kDefaultTickers = 30;
inline constexpr std::size_t kDefaultFeatureWidth = 511;  // 1 + 30 + 30 + 15 * 30

// Column layout of the daily feature vector for D tickers:
//   [0] balance | [1, 1+D) prices | [1+D, 1+2D) holdings | then 15 ratios per ticker.
struct FeatureLayout {
  std::size_t tickers = kDefaultTickers;

  std::size_t width() const { return 1 + tickers * (2 + data::kRatioCount); }
  static constexpr std::size_t balance_index() { return 0; }
  std::size_t price_index(std::size_t d) const { return 1 + d; }
  std::size_t holding_index(std::size_t d) const { return 1 + tickers + d; }
  std::size_t ratio_index(std::size_t d, std::size_t j) const {
    return 1 + 2 * tickers + data::kRatioCount * d + j;
  }
};

using DailyFeatureVector = std::vector<double>;

inline DailyFeatureVector build_daily_vector(double balance, std::span<const double> prices,
                                             std::span<const std::int64_t> holdings,
                                             std::span<const double> ratios) {
  const std::size_t d_count = prices.size();
  if (d_count == 0 || holdings.size() != d_count || ratios.size() != d_count * data::kRatioCount) {
    throw Error("daily vector inputs disagree on ticker count (prices " + std::to_string(prices.size()) +
                ", holdings " + std::to_string(holdings.size()) + ", ratios " +
                std::to_string(ratios.size()) + ")");
  }
  if (!std::isfinite(balance) || balance < 0.0) throw Error("balance must be finite and >= 0");
  const FeatureLayout layout{d_count};
  DailyFeatureVector v(layout.width());
  v[FeatureLayout::balance_index()] = balance;
  for (std::size_t d = 0; d < d_count; ++d) {
    if (!std::isfinite(prices[d])) throw Error("non-finite price in daily vector");
    if (holdings[d] < 0) throw Error("negative holdings in daily vector");
    v[layout.price_index(d)] = prices[d];
    v[layout.holding_index(d)] = static_cast<double>(holdings[d]);
  }
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!std::isfinite(ratios[i])) throw Error("non-finite ratio in daily vector");
  }
  std::copy(ratios.begin(), ratios.end(), v.begin() + static_cast<std::ptrdiff_t>(layout.ratio_index(0, 0)));
  return v;
}

// Rows are days, oldest first; the last row is the most recent day.
class StateMatrix {
 public:
  StateMatrix() = default;
  StateMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> newest() const { return row(rows_ - 1); }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const StateMatrix&, const StateMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Seed window: days [start, start + window) with a constant portfolio.
inline StateMatrix init_window(const data::MarketDataset& ds, std::size_t start_index, double balance,
                               std::span<const std::int64_t> holdings,
                               std::size_t window = kDefaultWindow) {
  if (start_index + window > ds.days()) {
    throw Error("not enough days for a " + std::to_string(window) + "-day window starting at " +
                std::to_string(start_index) + " (dataset has " + std::to_string(ds.days()) + ")");
  }
  const FeatureLayout layout{ds.num_tickers()};
  StateMatrix m(window, layout.width());
  for (std::size_t i = 0; i < window; ++i) {
    const auto v = build_daily_vector(balance, ds.prices_on(start_index + i), holdings,
                                      ds.ratios_on(start_index + i));
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

inline StateMatrix shift_window(const StateMatrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw Error("daily vector width does not match window");
  StateMatrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r + 1 < m.rows(); ++r) {
    const auto src = m.row(r + 1);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::copy(v.begin(), v.end(), out.row(m.rows() - 1).begin());
  return out;
}

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kNormEpsilon = 1e-8;

inline StateMatrix normalize_window(const StateMatrix& m, const NormalizationStats& stats) {
  if (stats.mean.size() != m.cols() || stats.std.size() != m.cols()) {
    throw Error("normalization stats have " + std::to_string(stats.mean.size()) + " columns, window has " +
                std::to_string(m.cols()));
  }
  StateMatrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      out(r, c) = (m(r, c) - stats.mean[c]) / std::max(stats.std[c], kNormEpsilon);
    }
  }
  return out;
}

inline StateMatrix denormalize_window(const StateMatrix& m, const NormalizationStats& stats) {
  StateMatrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      out(r, c) = m(r, c) * std::max(stats.std[c], kNormEpsilon) + stats.mean[c];
    }
  }
  return out;
}

// Price and ratio columns take their mean / population std from the training
// split. Balance and holdings are not market data, so they get fixed scales:
// balance / initial_balance and holdings / max_trade.
inline NormalizationStats compute_normalization_stats(const data::MarketDataset& train, double initial_balance,
                                                      double max_trade) {
  const FeatureLayout layout{train.num_tickers()};
  NormalizationStats s{std::vector<double>(layout.width(), 0.0), std::vector<double>(layout.width(), 1.0)};
  s.std[FeatureLayout::balance_index()] = initial_balance;
  const double n = static_cast<double>(train.days());
  auto column_stats = [&](auto value_at, std::size_t col) {
    double sum = 0.0;
    for (std::size_t t = 0; t < train.days(); ++t) sum += value_at(t);
    const double mean = sum / n;
    double sq = 0.0;
    for (std::size_t t = 0; t < train.days(); ++t) sq += (value_at(t) - mean) * (value_at(t) - mean);
    s.mean[col] = mean;
    s.std[col] = std::sqrt(sq / n);
  };
  for (std::size_t d = 0; d < train.num_tickers(); ++d) {
    column_stats([&](std::size_t t) { return train.price(t, d); }, layout.price_index(d));
    s.std[layout.holding_index(d)] = max_trade;
    for (std::size_t j = 0; j < data::kRatioCount; ++j) {
      column_stats([&](std::size_t t) { return train.ratio(t, d, j); }, layout.ratio_index(d, j));
    }
  }
  return s;
}

// Headerless CSV dump, one line per row.
inline void write_window_csv(const StateMatrix& m, const std::string& path) {
  auto out = mtrader::detail::open_output(path);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << mtrader::detail::format_double(m(r, c));
    }
    out << '\n';
  }
}

}  // namespace mtrader::features
