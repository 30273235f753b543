#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "matrix_trader/common.hpp"

namespace mtrader::data {

// Raw statement figures for one quarterly report.
struct FundamentalsRecord {
  std::string ticker;
  Date report_date;
  double current_assets = 0.0;
  double cash = 0.0;
  double inventory = 0.0;
  double current_liabilities = 0.0;
  double total_liabilities = 0.0;
  double total_assets = 0.0;
  double equity = 0.0;
  double cogs = 0.0;
  double receivables = 0.0;
  double payables = 0.0;
  double revenue = 0.0;
  double operating_income = 0.0;
  double net_income = 0.0;
  double shares_outstanding = 0.0;
  double dividends_paid = 0.0;
};

inline constexpr std::size_t kRatioCount = 15;

// Liquidity, leverage, efficiency, profitability, market value; this order is
// the per-ticker layout inside the daily feature vector.
inline constexpr std::array<std::string_view, kRatioCount> kRatioNames = {
    "current_ratio",     "cash_ratio",          "quick_ratio",      "debt_ratio",
    "debt_to_equity",    "inventory_turnover",  "receivables_turnover",
    "payables_turnover", "operating_margin",    "net_profit_margin",
    "return_on_assets",  "return_on_equity",    "eps",
    "book_per_share",    "dividend_per_share"};

enum class Ratio : std::size_t {
  kCurrentRatio,
  kCashRatio,
  kQuickRatio,
  kDebtRatio,
  kDebtToEquity,
  kInventoryTurnover,
  kReceivablesTurnover,
  kPayablesTurnover,
  kOperatingMargin,
  kNetProfitMargin,
  kReturnOnAssets,
  kReturnOnEquity,
  kEps,
  kBookPerShare,
  kDividendPerShare,
};

struct RatioVector {
  std::array<double, kRatioCount> values{};

  double operator[](Ratio r) const { return values[static_cast<std::size_t>(r)]; }
  double& operator[](Ratio r) { return values[static_cast<std::size_t>(r)]; }
  friend bool operator==(const RatioVector&, const RatioVector&) = default;
};

inline std::size_t ratio_index(std::string_view name) {
  for (std::size_t i = 0; i < kRatioCount; ++i) {
    if (kRatioNames[i] == name) return i;
  }
  throw DataError("unknown ratio name '" + std::string(name) + "'");
}

// Any ratio with a non-positive denominator is reported as 0.
inline double safe_ratio(double numerator, double denominator) {
  if (!(denominator > 0.0)) return 0.0;
  const double r = numerator / denominator;
  return std::isfinite(r) ? r : 0.0;
}

inline RatioVector compute_financial_ratios(const FundamentalsRecord& rec) {
  RatioVector r;
  r[Ratio::kCurrentRatio] = safe_ratio(rec.current_assets, rec.current_liabilities);
  r[Ratio::kCashRatio] = safe_ratio(rec.cash, rec.current_liabilities);
  r[Ratio::kQuickRatio] = safe_ratio(rec.current_assets - rec.inventory, rec.current_liabilities);
  r[Ratio::kDebtRatio] = safe_ratio(rec.total_liabilities, rec.total_assets);
  r[Ratio::kDebtToEquity] = safe_ratio(rec.total_liabilities, rec.equity);
  r[Ratio::kInventoryTurnover] = safe_ratio(rec.cogs, rec.inventory);
  r[Ratio::kReceivablesTurnover] = safe_ratio(rec.revenue, rec.receivables);
  r[Ratio::kPayablesTurnover] = safe_ratio(rec.cogs, rec.payables);
  r[Ratio::kOperatingMargin] = safe_ratio(rec.operating_income, rec.revenue);
  r[Ratio::kNetProfitMargin] = safe_ratio(rec.net_income, rec.revenue);
  r[Ratio::kReturnOnAssets] = safe_ratio(rec.net_income, rec.total_assets);
  r[Ratio::kReturnOnEquity] = safe_ratio(rec.net_income, rec.equity);
  r[Ratio::kEps] = safe_ratio(rec.net_income, rec.shares_outstanding);
  r[Ratio::kBookPerShare] = safe_ratio(rec.equity, rec.shares_outstanding);
  r[Ratio::kDividendPerShare] = safe_ratio(rec.dividends_paid, rec.shares_outstanding);
  return r;
}

}  // namespace mtrader::data
