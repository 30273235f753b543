#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "matrix_trader/common.hpp"
#include "matrix_trader/data/market_dataset.hpp"
#include "matrix_trader/data/ratios.hpp"

namespace mtrader::data {

struct PricePoint {
  Date date;
  double close = 0.0;
  friend bool operator==(const PricePoint&, const PricePoint&) = default;
};

struct DatedRatios {
  Date date;
  RatioVector ratios;
};

using PriceSeriesMap = std::map<std::string, std::vector<PricePoint>>;
using FundamentalsMap = std::map<std::string, std::vector<FundamentalsRecord>>;
using RatioSeriesMap = std::map<std::string, std::vector<DatedRatios>>;

struct PriceLoadResult {
  PriceSeriesMap series;
  // Tickers present in the file but not requested; they are skipped.
  std::vector<std::string> unrequested;
};

inline constexpr std::array<std::string_view, 17> kFundamentalsColumns = {
    "report_date",      "ticker",     "current_assets",      "cash",
    "inventory",        "current_liabilities",               "total_liabilities",
    "total_assets",     "equity",     "cogs",                "receivables",
    "payables",         "revenue",    "operating_income",    "net_income",
    "shares_outstanding",             "dividends_paid"};

namespace detail {

inline std::map<std::string, std::size_t> header_index(const std::string& header_line) {
  std::map<std::string, std::size_t> idx;
  const auto cols = mtrader::detail::split_csv_line(header_line);
  for (std::size_t i = 0; i < cols.size(); ++i) idx[cols[i]] = i;
  return idx;
}

inline std::size_t require_column(const std::map<std::string, std::size_t>& idx,
                                  std::string_view name, const std::string& path) {
  auto it = idx.find(std::string(name));
  if (it == idx.end()) throw DataError(path + ": missing column '" + std::string(name) + "'");
  return it->second;
}

}  // namespace detail

// Reads a `date,ticker,close` CSV. Extra columns (open, high, ...) are ignored.
// An empty `tickers` list loads every ticker in the file.
inline PriceLoadResult load_prices(const std::string& path, const std::vector<std::string>& tickers = {}) {
  auto in = mtrader::detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto idx = detail::header_index(line);
  const std::size_t c_date = detail::require_column(idx, "date", path);
  const std::size_t c_ticker = detail::require_column(idx, "ticker", path);
  const std::size_t c_close = detail::require_column(idx, "close", path);
  const std::size_t needed = std::max({c_date, c_ticker, c_close}) + 1;

  const std::set<std::string> wanted(tickers.begin(), tickers.end());
  std::set<std::string> skipped;
  PriceLoadResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto cells = mtrader::detail::split_csv_line(line);
    if (cells.size() < needed) throw DataError(where + ": malformed row");
    const std::string& ticker = cells[c_ticker];
    if (ticker.empty()) throw DataError(where + ": malformed row (empty ticker)");
    Date date;
    try {
      date = Date::parse(cells[c_date]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    const double close = mtrader::detail::parse_double(cells[c_close], where);
    if (!(close > 0.0) || !std::isfinite(close)) throw DataError(where + ": non-positive price");
    if (!wanted.empty() && !wanted.contains(ticker)) {
      skipped.insert(ticker);
      continue;
    }
    result.series[ticker].push_back({date, close});
  }
  for (const auto& t : tickers) {
    if (!result.series.contains(t)) throw DataError(path + ": missing ticker '" + t + "'");
  }
  for (auto& [ticker, series] : result.series) {
    std::sort(series.begin(), series.end(),
              [](const PricePoint& a, const PricePoint& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < series.size(); ++i) {
      if (series[i].date == series[i - 1].date) {
        throw DataError(path + ": duplicate date " + series[i].date.iso() + " for '" + ticker + "'");
      }
    }
  }
  result.unrequested.assign(skipped.begin(), skipped.end());
  return result;
}

inline FundamentalsMap load_fundamentals(const std::string& path) {
  auto in = mtrader::detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto idx = detail::header_index(line);
  std::array<std::size_t, kFundamentalsColumns.size()> col{};
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = detail::require_column(idx, kFundamentalsColumns[i], path);
  const std::size_t needed = *std::max_element(col.begin(), col.end()) + 1;

  FundamentalsMap out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto cells = mtrader::detail::split_csv_line(line);
    if (cells.size() < needed) throw DataError(where + ": malformed row");
    FundamentalsRecord r;
    try {
      r.report_date = Date::parse(cells[col[0]]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    r.ticker = cells[col[1]];
    if (r.ticker.empty()) throw DataError(where + ": malformed row (empty ticker)");
    double* fields[] = {&r.current_assets,   &r.cash,        &r.inventory,        &r.current_liabilities,
                        &r.total_liabilities, &r.total_assets, &r.equity,          &r.cogs,
                        &r.receivables,      &r.payables,    &r.revenue,          &r.operating_income,
                        &r.net_income,       &r.shares_outstanding,               &r.dividends_paid};
    for (std::size_t i = 0; i < std::size(fields); ++i) {
      *fields[i] = mtrader::detail::parse_double(cells[col[i + 2]], where);
      if (!std::isfinite(*fields[i])) throw DataError(where + ": non-finite value");
    }
    if (!(r.total_assets > 0.0)) throw DataError(where + ": invariant violation (total_assets must be > 0)");
    if (!(r.shares_outstanding > 0.0)) {
      throw DataError(where + ": invariant violation (shares_outstanding must be > 0)");
    }
    out[r.ticker].push_back(r);
  }
  for (auto& [ticker, reports] : out) {
    std::sort(reports.begin(), reports.end(),
              [](const auto& a, const auto& b) { return a.report_date < b.report_date; });
    for (std::size_t i = 1; i < reports.size(); ++i) {
      if (reports[i].report_date == reports[i - 1].report_date) {
        throw DataError(path + ": duplicate report date " + reports[i].report_date.iso() + " for '" +
                        ticker + "'");
      }
    }
  }
  return out;
}

inline RatioSeriesMap to_ratio_series(const FundamentalsMap& fundamentals) {
  RatioSeriesMap out;
  for (const auto& [ticker, reports] : fundamentals) {
    auto& series = out[ticker];
    for (const auto& r : reports) series.push_back({r.report_date, compute_financial_ratios(r)});
  }
  return out;
}

// Intersects trading calendars, forward-fills each ticker's latest report onto
// every day, and drops leading days on which any ticker has no report yet.
inline MarketDataset align_and_fill(const PriceSeriesMap& prices, const RatioSeriesMap& ratios) {
  if (prices.empty()) throw DataError("no price series to align");
  std::vector<Date> calendar;
  bool first = true;
  for (const auto& [ticker, series] : prices) {
    if (!ratios.contains(ticker) || ratios.at(ticker).empty()) {
      throw DataError("no fundamentals for ticker '" + ticker + "'");
    }
    std::vector<Date> days;
    days.reserve(series.size());
    for (const auto& p : series) days.push_back(p.date);
    std::sort(days.begin(), days.end());
    if (first) {
      calendar = std::move(days);
      first = false;
    } else {
      std::vector<Date> merged;
      std::set_intersection(calendar.begin(), calendar.end(), days.begin(), days.end(),
                            std::back_inserter(merged));
      calendar = std::move(merged);
    }
  }

  // First day on which every ticker has at least one report.
  Date earliest = calendar.empty() ? Date{} : calendar.front();
  for (const auto& [ticker, series] : prices) {
    Date first_report = ratios.at(ticker).front().date;
    for (const auto& r : ratios.at(ticker)) first_report = std::min(first_report, r.date);
    earliest = std::max(earliest, first_report);
  }
  std::erase_if(calendar, [&](const Date& d) { return d < earliest; });
  if (calendar.empty()) throw DataError("empty calendar after alignment");

  const std::size_t t_count = calendar.size(), d_count = prices.size();
  std::vector<std::string> tickers;
  std::vector<double> price_panel(t_count * d_count), ratio_panel(t_count * d_count * kRatioCount);
  std::size_t d = 0;
  for (const auto& [ticker, series] : prices) {
    tickers.push_back(ticker);
    std::vector<PricePoint> sorted_prices = series;
    std::sort(sorted_prices.begin(), sorted_prices.end(),
              [](const auto& a, const auto& b) { return a.date < b.date; });
    std::vector<DatedRatios> reports = ratios.at(ticker);
    std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.date < b.date; });

    std::size_t pi = 0, ri = 0;
    for (std::size_t t = 0; t < t_count; ++t) {
      while (sorted_prices[pi].date < calendar[t]) ++pi;
      price_panel[t * d_count + d] = sorted_prices[pi].close;
      while (ri + 1 < reports.size() && reports[ri + 1].date <= calendar[t]) ++ri;
      const auto& rv = reports[ri].ratios.values;
      std::copy(rv.begin(), rv.end(), ratio_panel.begin() + (t * d_count + d) * kRatioCount);
    }
    ++d;
  }
  return MarketDataset(std::move(tickers), std::move(calendar), std::move(price_panel),
                       std::move(ratio_panel));
}

inline MarketDataset align_and_fill(const PriceSeriesMap& prices, const FundamentalsMap& fundamentals) {
  return align_and_fill(prices, to_ratio_series(fundamentals));
}

// Decomposes a dataset back into per-ticker series (one ratio report per day).
inline std::pair<PriceSeriesMap, RatioSeriesMap> to_series(const MarketDataset& ds) {
  PriceSeriesMap prices;
  RatioSeriesMap ratios;
  for (std::size_t d = 0; d < ds.num_tickers(); ++d) {
    auto& ps = prices[ds.tickers()[d]];
    auto& rs = ratios[ds.tickers()[d]];
    for (std::size_t t = 0; t < ds.days(); ++t) {
      ps.push_back({ds.calendar()[t], ds.price(t, d)});
      DatedRatios dr{ds.calendar()[t], {}};
      for (std::size_t j = 0; j < kRatioCount; ++j) dr.ratios.values[j] = ds.ratio(t, d, j);
      rs.push_back(dr);
    }
  }
  return {std::move(prices), std::move(ratios)};
}

}  // namespace mtrader::data
