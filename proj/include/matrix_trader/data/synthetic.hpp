#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "matrix_trader/data/ingest.hpp"

namespace mtrader::data {

enum class Regime { kUptrend, kDowntrend, kMixed, kRandomWalk };

inline Regime parse_regime(std::string_view s) {
  if (s == "uptrend") return Regime::kUptrend;
  if (s == "downtrend") return Regime::kDowntrend;
  if (s == "mixed") return Regime::kMixed;
  if (s == "random-walk") return Regime::kRandomWalk;
  throw ConfigError("unknown regime '" + std::string(s) + "' (uptrend|downtrend|mixed|random-walk)");
}

inline std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::kUptrend: return "uptrend";
    case Regime::kDowntrend: return "downtrend";
    case Regime::kMixed: return "mixed";
    case Regime::kRandomWalk: return "random-walk";
  }
  return "?";
}

struct SyntheticParams {
  double trend_drift = 0.0008;  // daily log drift for trending tickers
  double min_vol = 0.01;
  double max_vol = 0.02;
  std::size_t quarter_days = 63;
  Date first_day{2015, 1, 2};
};

struct SyntheticSources {
  PriceSeriesMap prices;
  FundamentalsMap fundamentals;
};

inline constexpr std::size_t kMinSyntheticDays = 91;

inline std::string synthetic_ticker(std::size_t i, std::size_t count) {
  const int width = count > 100 ? 3 : 2;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "SYN%0*zu", width, i);
  return buf;
}

// Raw price and fundamentals records for a synthetic market. Trending regimes
// pin the noise as a Brownian bridge, so last/first price = exp(drift * (days-1)).
inline SyntheticSources generate_synthetic_sources(std::uint64_t seed, std::size_t days,
                                                   std::size_t tickers, Regime regime,
                                                   const SyntheticParams& params = {}) {
  if (days < kMinSyntheticDays) {
    throw DataError("synthetic market needs at least 91 days (got " + std::to_string(days) + ")");
  }
  if (tickers < 1) throw DataError("synthetic market needs at least one ticker");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  std::vector<Date> calendar;
  for (Date d = params.first_day; calendar.size() < days; d = d.next_day()) {
    if (!d.is_weekend()) calendar.push_back(d);
  }

  SyntheticSources out;
  for (std::size_t k = 0; k < tickers; ++k) {
    const std::string name = synthetic_ticker(k, tickers);
    double drift = 0.0;
    switch (regime) {
      case Regime::kUptrend: drift = params.trend_drift; break;
      case Regime::kDowntrend: drift = -params.trend_drift; break;
      case Regime::kMixed: drift = (k % 2 == 0) ? params.trend_drift : -params.trend_drift; break;
      case Regime::kRandomWalk: drift = 0.0; break;
    }
    const double vol = uniform(params.min_vol, params.max_vol);
    const double start = uniform(50.0, 150.0);

    std::vector<double> walk(days, 0.0);
    for (std::size_t t = 1; t < days; ++t) walk[t] = walk[t - 1] + vol * normal(rng);
    const bool bridge = regime != Regime::kRandomWalk;
    const double end_noise = walk[days - 1];
    auto& series = out.prices[name];
    series.reserve(days);
    for (std::size_t t = 0; t < days; ++t) {
      double noise = walk[t];
      if (bridge) noise -= end_noise * static_cast<double>(t) / static_cast<double>(days - 1);
      series.push_back({calendar[t], start * std::exp(drift * static_cast<double>(t) + noise)});
    }
    if (bridge) series.back().close = start * std::exp(drift * static_cast<double>(days - 1));

    auto& reports = out.fundamentals[name];
    for (std::size_t t = 0; t < days; t += params.quarter_days) {
      FundamentalsRecord r;
      r.ticker = name;
      r.report_date = calendar[t];
      r.total_assets = std::exp(std::log(1e10) + 0.5 * normal(rng));
      r.shares_outstanding = uniform(1e8, 5e9);
      r.current_assets = r.total_assets * uniform(0.2, 0.5);
      r.cash = r.current_assets * uniform(0.1, 0.5);
      r.inventory = r.current_assets * uniform(0.1, 0.4);
      r.current_liabilities = r.total_assets * uniform(0.1, 0.3);
      r.total_liabilities = r.total_assets * uniform(0.3, 0.8);
      r.equity = r.total_assets - r.total_liabilities;
      r.revenue = r.total_assets * uniform(0.05, 0.3);
      r.cogs = r.revenue * uniform(0.4, 0.8);
      r.receivables = r.revenue * uniform(0.2, 0.6);
      r.payables = r.cogs * uniform(0.2, 0.6);
      r.operating_income = r.revenue * uniform(-0.05, 0.3);
      r.net_income = r.operating_income * uniform(0.5, 0.9);
      r.dividends_paid = std::max(0.0, r.net_income) * uniform(0.0, 0.5);
      reports.push_back(r);
    }
  }
  return out;
}

// Deterministic for a fixed seed; ratios change once per synthetic quarter.
inline MarketDataset generate_synthetic_market(std::uint64_t seed, std::size_t days, std::size_t tickers,
                                               Regime regime, const SyntheticParams& params = {}) {
  const auto src = generate_synthetic_sources(seed, days, tickers, regime, params);
  return align_and_fill(src.prices, src.fundamentals);
}

}  // namespace mtrader::data
