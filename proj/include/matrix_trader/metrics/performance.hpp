#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matrix_trader/common.hpp"
#include "matrix_trader/env/trade_log.hpp"

namespace mtrader::metrics {

inline constexpr double kTradingDaysPerYear = 252.0;

class UndefinedSharpe : public Error {
 public:
  using Error::Error;
};

inline std::vector<double> daily_returns(std::span<const double> curve) {
  if (curve.size() < 2) throw Error("daily_returns needs at least 2 points");
  std::vector<double> r(curve.size() - 1);
  for (std::size_t t = 0; t + 1 < curve.size(); ++t) r[t] = curve[t + 1] / curve[t] - 1.0;
  return r;
}

// (mean(ret) - rf) / sample std(ret), optionally times sqrt(252).
inline double sharpe(std::span<const double> curve, double risk_free_daily = 0.0, bool annualize = false) {
  if (curve.size() < 3) throw UndefinedSharpe("undefined Sharpe: need at least 3 equity points");
  const auto r = daily_returns(curve);
  const double n = static_cast<double>(r.size());
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : r) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw UndefinedSharpe("undefined Sharpe: zero return variance");
  const double s = (mean - risk_free_daily) / sd;
  return annualize ? s * std::sqrt(kTradingDaysPerYear) : s;
}

// NaN instead of an exception, for reporting.
inline double sharpe_or_nan(std::span<const double> curve, bool annualize = false) {
  try {
    return sharpe(curve, 0.0, annualize);
  } catch (const UndefinedSharpe&) {
    return std::nan("");
  }
}

struct CostSummary {
  double total_cost = 0.0;
  std::size_t n_trades = 0;
  double traded_notional = 0.0;
};

inline CostSummary cumulative_cost(const std::vector<env::TradeLogRow>& log) {
  CostSummary s;
  for (const auto& row : log) {
    s.total_cost += row.cost;
    s.traded_notional += std::abs(static_cast<double>(row.delta_shares)) * row.price;
    ++s.n_trades;
  }
  return s;
}

inline CostSummary cumulative_cost(const std::string& trade_log_path) {
  return cumulative_cost(env::read_trade_log(trade_log_path));
}

inline double max_drawdown(std::span<const double> curve) {
  if (curve.empty()) throw Error("max_drawdown needs a non-empty curve");
  double peak = curve.front(), worst = 0.0;
  for (double v : curve) {
    peak = std::max(peak, v);
    worst = std::max(worst, 1.0 - v / peak);
  }
  return worst;
}

struct EvaluationReport {
  double final_value = 0.0;
  double total_reward = 0.0;
  double sharpe_daily = 0.0;  // NaN when undefined
  double sharpe_annual = 0.0;
  double total_cost = 0.0;
  std::size_t n_trades = 0;
  double max_drawdown = 0.0;
};

inline nlohmann::json to_json(const EvaluationReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["final_value"] = num(r.final_value);
  j["total_reward"] = num(r.total_reward);
  j["sharpe_daily"] = num(r.sharpe_daily);
  j["sharpe_annual"] = num(r.sharpe_annual);
  j["total_cost"] = num(r.total_cost);
  j["n_trades"] = r.n_trades;
  j["max_drawdown"] = num(r.max_drawdown);
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  auto num = [&](const char* k) { return j.at(k).is_null() ? std::nan("") : j.at(k).get<double>(); };
  return {num("final_value"), num("total_reward"), num("sharpe_daily"), num("sharpe_annual"),
          num("total_cost"),  j.at("n_trades").get<std::size_t>(), num("max_drawdown")};
}

// Equity curve CSV: step,date,portfolio_value (step 0 is the starting value).
inline void write_equity_csv(const std::vector<std::string>& dates, std::span<const double> values,
                             const std::string& path) {
  auto out = mtrader::detail::open_output(path);
  out << "step,date,portfolio_value\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << i << ',' << dates[i] << ',' << mtrader::detail::format_double(values[i]) << '\n';
  }
}

inline std::vector<double> read_equity_csv(const std::string& path) {
  auto in = mtrader::detail::open_input(path);
  std::string line;
  std::getline(in, line);
  std::vector<double> values;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = mtrader::detail::split_csv_line(line);
    if (c.size() != 3) throw DataError(path + ":" + std::to_string(n) + ": malformed equity row");
    values.push_back(mtrader::detail::parse_double(c[2], path + ":" + std::to_string(n)));
  }
  return values;
}

}  // namespace mtrader::metrics
