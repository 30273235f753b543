#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "matrix_trader/common.hpp"
#include "matrix_trader/data/ratios.hpp"

namespace mtrader::data {

// Aligned daily panel: T calendar days x D tickers, prices plus forward-filled
// ratios. Tickers are kept in lexicographic order. Immutable once built.
class MarketDataset {
 public:
  MarketDataset() = default;

  MarketDataset(std::vector<std::string> tickers, std::vector<Date> calendar,
                std::vector<double> prices, std::vector<double> ratios)
      : tickers_(std::move(tickers)),
        calendar_(std::move(calendar)),
        prices_(std::move(prices)),
        ratios_(std::move(ratios)) {
    const std::size_t t = calendar_.size(), d = tickers_.size();
    if (prices_.size() != t * d || ratios_.size() != t * d * kRatioCount) {
      throw DataError("dataset arrays do not match calendar x tickers");
    }
    for (std::size_t i = 1; i < d; ++i) {
      if (!(tickers_[i - 1] < tickers_[i])) throw DataError("tickers must be sorted and unique");
    }
    for (std::size_t i = 1; i < t; ++i) {
      if (!(calendar_[i - 1] < calendar_[i])) throw DataError("calendar must be increasing");
    }
    for (double p : prices_) {
      if (!(p > 0.0) || !std::isfinite(p)) throw DataError("non-positive price in dataset");
    }
  }

  std::size_t days() const { return calendar_.size(); }
  std::size_t num_tickers() const { return tickers_.size(); }
  const std::vector<std::string>& tickers() const { return tickers_; }
  const std::vector<Date>& calendar() const { return calendar_; }

  double price(std::size_t t, std::size_t d) const { return prices_[t * num_tickers() + d]; }
  std::span<const double> prices_on(std::size_t t) const {
    return {prices_.data() + t * num_tickers(), num_tickers()};
  }
  double ratio(std::size_t t, std::size_t d, std::size_t j) const {
    return ratios_[(t * num_tickers() + d) * kRatioCount + j];
  }
  // D x 15 block for day t, tickers in order.
  std::span<const double> ratios_on(std::size_t t) const {
    return {ratios_.data() + t * num_tickers() * kRatioCount, num_tickers() * kRatioCount};
  }

  // Days [begin, end) as a new dataset.
  MarketDataset slice(std::size_t begin, std::size_t end) const {
    const std::size_t d = num_tickers();
    std::vector<Date> cal(calendar_.begin() + begin, calendar_.begin() + end);
    std::vector<double> p(prices_.begin() + begin * d, prices_.begin() + end * d);
    std::vector<double> r(ratios_.begin() + begin * d * kRatioCount,
                          ratios_.begin() + end * d * kRatioCount);
    return MarketDataset(tickers_, std::move(cal), std::move(p), std::move(r));
  }

  friend bool operator==(const MarketDataset&, const MarketDataset&) = default;

 private:
  std::vector<std::string> tickers_;
  std::vector<Date> calendar_;
  std::vector<double> prices_;
  std::vector<double> ratios_;
};

// Splits at a calendar boundary: train holds days < boundary, test days >= boundary.
inline std::pair<MarketDataset, MarketDataset> split(const MarketDataset& ds, Date boundary) {
  const auto& cal = ds.calendar();
  if (cal.empty() || !(boundary > cal.front()) || boundary > cal.back()) {
    throw DataError("split boundary " + boundary.iso() + " is outside the calendar");
  }
  std::size_t cut = 0;
  while (cut < cal.size() && cal[cut] < boundary) ++cut;
  return {ds.slice(0, cut), ds.slice(cut, ds.days())};
}

}  // namespace mtrader::data
