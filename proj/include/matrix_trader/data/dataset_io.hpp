#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "matrix_trader/data/ingest.hpp"

namespace mtrader::data {

namespace fs = std::filesystem;

// Directory layout: meta.json, prices.csv (date,ticker,close) and ratios.csv
// (date,ticker,ratio_name,value). Numbers are written to round-trip exactly.
inline void save_dataset(const MarketDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["tickers"] = ds.tickers();
  meta["ticker_order"] = "lexicographic";
  std::vector<std::string> cal;
  for (const auto& d : ds.calendar()) cal.push_back(d.iso());
  meta["calendar"] = cal;
  meta["num_days"] = ds.days();
  meta["num_tickers"] = ds.num_tickers();
  meta["ratio_names"] = std::vector<std::string>(kRatioNames.begin(), kRatioNames.end());
  {
    auto out = mtrader::detail::open_output((dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  {
    auto out = mtrader::detail::open_output((dir / "prices.csv").string());
    out << "date,ticker,close\n";
    for (std::size_t t = 0; t < ds.days(); ++t) {
      const std::string date = ds.calendar()[t].iso();
      for (std::size_t d = 0; d < ds.num_tickers(); ++d) {
        out << date << ',' << ds.tickers()[d] << ',' << mtrader::detail::format_double(ds.price(t, d)) << '\n';
      }
    }
  }
  {
    auto out = mtrader::detail::open_output((dir / "ratios.csv").string());
    out << "date,ticker,ratio_name,value\n";
    for (std::size_t t = 0; t < ds.days(); ++t) {
      const std::string date = ds.calendar()[t].iso();
      for (std::size_t d = 0; d < ds.num_tickers(); ++d) {
        for (std::size_t j = 0; j < kRatioCount; ++j) {
          out << date << ',' << ds.tickers()[d] << ',' << kRatioNames[j] << ','
              << mtrader::detail::format_double(ds.ratio(t, d, j)) << '\n';
        }
      }
    }
  }
}

inline MarketDataset load_dataset(const fs::path& dir) {
  nlohmann::json meta;
  {
    auto in = mtrader::detail::open_input((dir / "meta.json").string());
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / "meta.json").string() + ": " + e.what());
    }
  }
  const auto tickers = meta.at("tickers").get<std::vector<std::string>>();
  std::vector<Date> calendar;
  for (const auto& s : meta.at("calendar")) calendar.push_back(Date::parse(s.get<std::string>()));
  const std::size_t t_count = calendar.size(), d_count = tickers.size();

  std::map<std::string, std::size_t> ticker_pos;
  for (std::size_t d = 0; d < d_count; ++d) ticker_pos[tickers[d]] = d;
  std::map<Date, std::size_t> day_pos;
  for (std::size_t t = 0; t < t_count; ++t) day_pos[calendar[t]] = t;

  auto locate = [&](const std::string& date, const std::string& ticker, const std::string& where) {
    auto dt = day_pos.find(Date::parse(date));
    auto tk = ticker_pos.find(ticker);
    if (dt == day_pos.end() || tk == ticker_pos.end()) throw DataError(where + ": row outside dataset");
    return std::pair{dt->second, tk->second};
  };

  std::vector<double> prices(t_count * d_count, 0.0);
  std::vector<double> ratios(t_count * d_count * kRatioCount, 0.0);
  std::vector<char> seen_price(prices.size(), 0), seen_ratio(ratios.size(), 0);
  {
    const std::string path = (dir / "prices.csv").string();
    auto in = mtrader::detail::open_input(path);
    std::string line;
    std::getline(in, line);
    std::size_t n = 1;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      const std::string where = path + ":" + std::to_string(n);
      const auto c = mtrader::detail::split_csv_line(line);
      if (c.size() != 3) throw DataError(where + ": malformed row");
      const auto [t, d] = locate(c[0], c[1], where);
      prices[t * d_count + d] = mtrader::detail::parse_double(c[2], where);
      seen_price[t * d_count + d] = 1;
    }
  }
  {
    const std::string path = (dir / "ratios.csv").string();
    auto in = mtrader::detail::open_input(path);
    std::string line;
    std::getline(in, line);
    std::size_t n = 1;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      const std::string where = path + ":" + std::to_string(n);
      const auto c = mtrader::detail::split_csv_line(line);
      if (c.size() != 4) throw DataError(where + ": malformed row");
      const auto [t, d] = locate(c[0], c[1], where);
      const std::size_t k = (t * d_count + d) * kRatioCount + ratio_index(c[2]);
      ratios[k] = mtrader::detail::parse_double(c[3], where);
      seen_ratio[k] = 1;
    }
  }
  if (std::find(seen_price.begin(), seen_price.end(), 0) != seen_price.end() ||
      std::find(seen_ratio.begin(), seen_ratio.end(), 0) != seen_ratio.end()) {
    throw DataError(dir.string() + ": dataset has missing cells");
  }
  return MarketDataset(tickers, std::move(calendar), std::move(prices), std::move(ratios));
}

inline void write_prices_csv(const PriceSeriesMap& prices, const fs::path& path) {
  auto out = mtrader::detail::open_output(path.string());
  out << "date,ticker,close\n";
  for (const auto& [ticker, series] : prices) {
    for (const auto& p : series) out << p.date.iso() << ',' << ticker << ',' << mtrader::detail::format_double(p.close) << '\n';
  }
}

inline void write_fundamentals_csv(const FundamentalsMap& fundamentals, const fs::path& path) {
  auto out = mtrader::detail::open_output(path.string());
  for (std::size_t i = 0; i < kFundamentalsColumns.size(); ++i) out << (i ? "," : "") << kFundamentalsColumns[i];
  out << '\n';
  using mtrader::detail::format_double;
  for (const auto& [ticker, reports] : fundamentals) {
    for (const auto& r : reports) {
      out << r.report_date.iso() << ',' << ticker;
      for (double v : {r.current_assets, r.cash, r.inventory, r.current_liabilities, r.total_liabilities,
                       r.total_assets, r.equity, r.cogs, r.receivables, r.payables, r.revenue,
                       r.operating_income, r.net_income, r.shares_outstanding, r.dividends_paid}) {
        out << ',' << format_double(v);
      }
      out << '\n';
    }
  }
}

}  // namespace mtrader::data
