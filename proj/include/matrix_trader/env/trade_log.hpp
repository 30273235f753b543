#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matrix_trader/common.hpp"

namespace mtrader::env {

// One executed trade. delta_shares > 0 is a buy, < 0 a sell.
struct TradeLogRow {
  std::size_t step = 0;
  std::string date;
  std::string ticker;
  std::int64_t delta_shares = 0;
  double price = 0.0;
  double cost = 0.0;
  double balance_after = 0.0;
  double value_after = 0.0;
  friend bool operator==(const TradeLogRow&, const TradeLogRow&) = default;
};

inline constexpr const char* kTradeLogHeader = "step,date,ticker,delta_shares,price,cost,balance_after,value_after";

inline void write_trade_log(const std::vector<TradeLogRow>& rows, const std::string& path) {
  using mtrader::detail::format_double;
  auto out = mtrader::detail::open_output(path);
  out << kTradeLogHeader << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << r.date << ',' << r.ticker << ',' << r.delta_shares << ',' << format_double(r.price)
        << ',' << format_double(r.cost) << ',' << format_double(r.balance_after) << ','
        << format_double(r.value_after) << '\n';
  }
}

inline std::vector<TradeLogRow> read_trade_log(const std::string& path) {
  auto in = mtrader::detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty trade log");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTradeLogHeader) throw DataError(path + ": unexpected trade log header");
  std::vector<TradeLogRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(n);
    const auto c = mtrader::detail::split_csv_line(line);
    if (c.size() != 8) throw DataError(where + ": malformed trade log row");
    TradeLogRow r;
    try {
      r.step = std::stoull(c[0]);
      r.delta_shares = std::stoll(c[3]);
    } catch (const std::exception&) {
      throw DataError(where + ": malformed trade log row");
    }
    r.date = c[1];
    r.ticker = c[2];
    r.price = mtrader::detail::parse_double(c[4], where);
    r.cost = mtrader::detail::parse_double(c[5], where);
    r.balance_after = mtrader::detail::parse_double(c[6], where);
    r.value_after = mtrader::detail::parse_double(c[7], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mtrader::env
