#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "matrix_trader/data/dataset_io.hpp"
#include "matrix_trader/data/ingest.hpp"
#include "matrix_trader/data/synthetic.hpp"
#include "test_util.hpp"

namespace mtrader::data {
namespace {

using mtrader::testing::scratch_dir;
using mtrader::testing::write_file;

FundamentalsRecord round_record(const std::string& ticker, Date date) {
  FundamentalsRecord r;
  r.ticker = ticker;
  r.report_date = date;
  r.current_assets = 200;
  r.cash = 50;
  r.inventory = 40;
  r.current_liabilities = 100;
  r.total_liabilities = 600;
  r.total_assets = 1000;
  r.equity = 400;
  r.cogs = 300;
  r.receivables = 80;
  r.payables = 60;
  r.revenue = 500;
  r.operating_income = 100;
  r.net_income = 50;
  r.shares_outstanding = 25;
  r.dividends_paid = 10;
  return r;
}

std::string expect_data_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected DataError";
  return {};
}

TEST(LoadPrices, EchoesThreeRows) {
  const auto dir = scratch_dir("p");
  write_file(dir / "p.csv", "date,ticker,close\n2020-01-02,AAA,10\n2020-01-03,AAA,11\n2020-01-06,AAA,12\n");
  const auto r = load_prices((dir / "p.csv").string(), {"AAA"});
  ASSERT_EQ(r.series.at("AAA").size(), 3u);
  EXPECT_EQ(r.series.at("AAA")[0].close, 10.0);
  EXPECT_EQ(r.series.at("AAA")[1].close, 11.0);
  EXPECT_EQ(r.series.at("AAA")[2].close, 12.0);
}

TEST(LoadPrices, RejectsNonPositivePrice) {
  const auto dir = scratch_dir("p");
  write_file(dir / "p.csv", "date,ticker,close\n2020-01-02,AAA,10\n2020-01-03,AAA,-5\n");
  const auto msg = expect_data_error([&] { load_prices((dir / "p.csv").string(), {"AAA"}); });
  EXPECT_NE(msg.find("non-positive price"), std::string::npos);
  EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
}

TEST(LoadPrices, SortsShuffledDates) {
  const auto dir = scratch_dir("p");
  write_file(dir / "p.csv", "date,ticker,close\n2020-01-06,AAA,12\n2020-01-02,AAA,10\n2020-01-03,AAA,11\n");
  const auto s = load_prices((dir / "p.csv").string(), {"AAA"}).series.at("AAA");
  EXPECT_EQ(s[0].date, Date(2020, 1, 2));
  EXPECT_EQ(s[1].date, Date(2020, 1, 3));
  EXPECT_EQ(s[2].date, Date(2020, 1, 6));
  EXPECT_EQ(s[2].close, 12.0);
}

TEST(LoadPrices, ErrorsAndIgnoredColumns) {
  const auto dir = scratch_dir("p");
  write_file(dir / "ohlcv.csv",
             "date,ticker,open,high,low,close,volume\n2020-01-02,AAA,1,2,0.5,10,100\n2020-01-02,BBB,1,2,0.5,20,100\n");
  const auto r = load_prices((dir / "ohlcv.csv").string(), {"AAA"});
  EXPECT_EQ(r.series.at("AAA")[0].close, 10.0);
  EXPECT_EQ(r.unrequested, std::vector<std::string>{"BBB"});

  EXPECT_NE(expect_data_error([&] { load_prices((dir / "ohlcv.csv").string(), {"ZZZ"}); }).find("missing ticker"),
            std::string::npos);

  write_file(dir / "bad.csv", "date,ticker,close\n2020-01-02,AAA,10\n2020-01-03,AAA\n");
  EXPECT_NE(expect_data_error([&] { load_prices((dir / "bad.csv").string()); }).find("bad.csv:3: malformed row"),
            std::string::npos);

  write_file(dir / "dup.csv", "date,ticker,close\n2020-01-02,AAA,10\n2020-01-02,AAA,11\n");
  EXPECT_NE(expect_data_error([&] { load_prices((dir / "dup.csv").string()); }).find("duplicate date"),
            std::string::npos);
  expect_data_error([&] { load_prices((dir / "nope.csv").string()); });
}

std::string fundamentals_csv(const std::vector<FundamentalsRecord>& rs) {
  std::string s;
  for (std::size_t i = 0; i < kFundamentalsColumns.size(); ++i) s += (i ? "," : "") + std::string(kFundamentalsColumns[i]);
  s += "\n";
  for (const auto& r : rs) {
    s += r.report_date.iso() + "," + r.ticker;
    for (double v : {r.current_assets, r.cash, r.inventory, r.current_liabilities, r.total_liabilities, r.total_assets,
                     r.equity, r.cogs, r.receivables, r.payables, r.revenue, r.operating_income, r.net_income,
                     r.shares_outstanding, r.dividends_paid}) {
      s += "," + mtrader::detail::format_double(v);
    }
    s += "\n";
  }
  return s;
}

TEST(LoadFundamentals, SortsAndValidates) {
  const auto dir = scratch_dir("f");
  write_file(dir / "f.csv", fundamentals_csv({round_record("AAA", Date(2020, 4, 1)), round_record("AAA", Date(2020, 1, 2))}));
  const auto f = load_fundamentals((dir / "f.csv").string());
  ASSERT_EQ(f.at("AAA").size(), 2u);
  EXPECT_EQ(f.at("AAA")[0].report_date, Date(2020, 1, 2));
  EXPECT_EQ(f.at("AAA")[1].report_date, Date(2020, 4, 1));

  write_file(dir / "dup.csv", fundamentals_csv({round_record("AAA", Date(2020, 1, 2)), round_record("AAA", Date(2020, 1, 2))}));
  EXPECT_NE(expect_data_error([&] { load_fundamentals((dir / "dup.csv").string()); }).find("duplicate report date"),
            std::string::npos);

  auto zero_shares = round_record("AAA", Date(2020, 1, 2));
  zero_shares.shares_outstanding = 0;
  write_file(dir / "zero.csv", fundamentals_csv({zero_shares}));
  EXPECT_NE(expect_data_error([&] { load_fundamentals((dir / "zero.csv").string()); }).find("invariant violation"),
            std::string::npos);
}

TEST(FinancialRatios, CurrentRatioAndSanitizedInventory) {
  auto r = round_record("AAA", Date(2020, 1, 2));
  EXPECT_EQ(compute_financial_ratios(r)[Ratio::kCurrentRatio], 2.0);
  r.inventory = 0;
  EXPECT_EQ(compute_financial_ratios(r)[Ratio::kInventoryTurnover], 0.0);
  r.equity = -5;
  EXPECT_EQ(compute_financial_ratios(r)[Ratio::kDebtToEquity], 0.0);
  EXPECT_EQ(compute_financial_ratios(r)[Ratio::kReturnOnEquity], 0.0);
}

// Spreadsheet-style oracle: each cell written out by hand from the statement.
TEST(FinancialRatios, MatchesHandComputedSheet) {
  const auto r = round_record("AAA", Date(2020, 1, 2));
  const std::map<std::string, double> sheet = {
      {"current_ratio", 200.0 / 100.0},     {"cash_ratio", 50.0 / 100.0},
      {"quick_ratio", (200.0 - 40.0) / 100.0}, {"debt_ratio", 600.0 / 1000.0},
      {"debt_to_equity", 600.0 / 400.0},    {"inventory_turnover", 300.0 / 40.0},
      {"receivables_turnover", 500.0 / 80.0}, {"payables_turnover", 300.0 / 60.0},
      {"operating_margin", 100.0 / 500.0},  {"net_profit_margin", 50.0 / 500.0},
      {"return_on_assets", 50.0 / 1000.0},  {"return_on_equity", 50.0 / 400.0},
      {"eps", 50.0 / 25.0},                 {"book_per_share", 400.0 / 25.0},
      {"dividend_per_share", 10.0 / 25.0}};
  const auto v = compute_financial_ratios(r);
  for (std::size_t j = 0; j < kRatioCount; ++j) {
    EXPECT_DOUBLE_EQ(v.values[j], sheet.at(std::string(kRatioNames[j]))) << kRatioNames[j];
  }
}

TEST(FinancialRatios, ScaleConsistency) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(1.0, 1000.0), uk(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    FundamentalsRecord r;
    for (double* f : {&r.current_assets, &r.cash, &r.inventory, &r.current_liabilities, &r.total_liabilities,
                      &r.total_assets, &r.equity, &r.cogs, &r.receivables, &r.payables, &r.revenue,
                      &r.operating_income, &r.net_income, &r.dividends_paid}) {
      *f = u(rng);
    }
    r.shares_outstanding = u(rng);
    const double k = uk(rng);
    FundamentalsRecord scaled = r;
    for (double* f : {&scaled.current_assets, &scaled.cash, &scaled.inventory, &scaled.current_liabilities,
                      &scaled.total_liabilities, &scaled.total_assets, &scaled.equity, &scaled.cogs,
                      &scaled.receivables, &scaled.payables, &scaled.revenue, &scaled.operating_income,
                      &scaled.net_income, &scaled.dividends_paid}) {
      *f *= k;
    }
    const auto a = compute_financial_ratios(r), b = compute_financial_ratios(scaled);
    for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(a.values[j], b.values[j], 1e-12 * std::abs(a.values[j]) + 1e-15);
    for (std::size_t j = 12; j < 15; ++j) EXPECT_NEAR(k * a.values[j], b.values[j], 1e-12 * std::abs(b.values[j]));
  }
}

std::vector<Date> business_days(Date from, std::size_t n) {
  std::vector<Date> out;
  for (Date d = from; out.size() < n; d = d.next_day()) {
    if (!d.is_weekend()) out.push_back(d);
  }
  return out;
}

TEST(AlignAndFill, ForwardFillsReports) {
  const auto cal = business_days(Date(2021, 3, 1), 7);
  PriceSeriesMap prices;
  for (std::size_t t = 0; t < cal.size(); ++t) prices["AAA"].push_back({cal[t], 10.0 + t});
  auto r1 = round_record("AAA", cal[0]);
  auto r5 = round_record("AAA", cal[4]);
  r5.current_assets = 300;
  const auto ds = align_and_fill(prices, FundamentalsMap{{"AAA", {r1, r5}}});
  ASSERT_EQ(ds.days(), 7u);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(ds.ratio(t, 0, 0), 2.0);
  for (std::size_t t = 4; t < 7; ++t) EXPECT_EQ(ds.ratio(t, 0, 0), 3.0);
  EXPECT_EQ(ds.price(6, 0), 16.0);
}

TEST(AlignAndFill, TrimsDaysBeforeFirstReport) {
  const auto cal = business_days(Date(2021, 3, 1), 5);
  PriceSeriesMap prices;
  for (const auto& d : cal) prices["AAA"].push_back({d, 10.0});
  const auto ds = align_and_fill(prices, FundamentalsMap{{"AAA", {round_record("AAA", cal[2])}}});
  ASSERT_EQ(ds.days(), 3u);
  EXPECT_EQ(ds.calendar().front(), cal[2]);
  EXPECT_EQ(ds.calendar().back(), cal[4]);
}

TEST(AlignAndFill, StaggeredCalendarsMatchSetIntersection) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution keep(0.9);
  const auto all_days = business_days(Date(2019, 1, 1), 300);
  PriceSeriesMap prices;
  FundamentalsMap fund;
  std::map<Date, int> count;  // brute-force oracle: days present for all 30 tickers
  for (int k = 0; k < 30; ++k) {
    const std::string name = "T" + std::to_string(100 + k);
    for (const auto& d : all_days) {
      if (keep(rng)) {
        prices[name].push_back({d, 50.0});
        ++count[d];
      }
    }
    fund[name].push_back(round_record(name, Date(2018, 12, 1)));
  }
  std::set<Date> expected;
  for (const auto& [d, c] : count) {
    if (c == 30) expected.insert(d);
  }
  const auto ds = align_and_fill(prices, fund);
  EXPECT_EQ(ds.days(), expected.size());
  EXPECT_EQ(std::set<Date>(ds.calendar().begin(), ds.calendar().end()), expected);
  EXPECT_EQ(ds.num_tickers(), 30u);
}

TEST(AlignAndFill, EveryCellIsLatestReportBruteForce) {
  const auto src = generate_synthetic_sources(3, 200, 4, Regime::kMixed);
  const auto ds = align_and_fill(src.prices, src.fundamentals);
  for (std::size_t t = 0; t < ds.days(); ++t) {
    for (std::size_t d = 0; d < ds.num_tickers(); ++d) {
      const FundamentalsRecord* latest = nullptr;
      for (const auto& r : src.fundamentals.at(ds.tickers()[d])) {
        if (r.report_date <= ds.calendar()[t] && (!latest || latest->report_date < r.report_date)) latest = &r;
      }
      ASSERT_NE(latest, nullptr);
      const auto expect = compute_financial_ratios(*latest);
      for (std::size_t j = 0; j < kRatioCount; ++j) ASSERT_EQ(ds.ratio(t, d, j), expect.values[j]);
    }
  }
}

TEST(AlignAndFill, IdempotentOnAlignedDataset) {
  const auto ds = generate_synthetic_market(5, 150, 3, Regime::kRandomWalk);
  const auto [prices, ratios] = to_series(ds);
  EXPECT_EQ(align_and_fill(prices, ratios), ds);
}

TEST(AlignAndFill, EmptyCalendarIsAnError) {
  PriceSeriesMap prices{{"AAA", {{Date(2020, 1, 2), 1.0}}}, {"BBB", {{Date(2020, 1, 3), 1.0}}}};
  FundamentalsMap f{{"AAA", {round_record("AAA", Date(2020, 1, 1))}}, {"BBB", {round_record("BBB", Date(2020, 1, 1))}}};
  EXPECT_THROW(align_and_fill(prices, f), DataError);
}

TEST(Split, LengthsAndBounds) {
  const auto ds = generate_synthetic_market(1, 100, 2, Regime::kUptrend).slice(0, 10);
  const auto [train, test] = split(ds, ds.calendar()[6]);
  EXPECT_EQ(train.days(), 6u);
  EXPECT_EQ(test.days(), 4u);
  EXPECT_EQ(train.tickers(), ds.tickers());
  EXPECT_THROW(split(ds, ds.calendar().front()), DataError);
  const auto [a, b] = split(ds, ds.calendar().back());
  EXPECT_EQ(a.days(), 9u);
  EXPECT_EQ(b.days(), 1u);
  EXPECT_THROW(split(ds, ds.calendar().back().next_day()), DataError);
}

TEST(Synthetic, DeterministicPerSeed) {
  EXPECT_EQ(generate_synthetic_market(42, 300, 5, Regime::kMixed), generate_synthetic_market(42, 300, 5, Regime::kMixed));
  EXPECT_NE(generate_synthetic_market(42, 300, 5, Regime::kMixed), generate_synthetic_market(43, 300, 5, Regime::kMixed));
}

TEST(Synthetic, UptrendEndsHigherDowntrendLower) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto up = generate_synthetic_market(seed, 120, 6, Regime::kUptrend);
    const auto down = generate_synthetic_market(seed, 120, 6, Regime::kDowntrend);
    for (std::size_t d = 0; d < 6; ++d) {
      EXPECT_GT(up.price(up.days() - 1, d), up.price(0, d));
      EXPECT_LT(down.price(down.days() - 1, d), down.price(0, d));
    }
  }
}

TEST(Synthetic, RandomWalkHasZeroMeanLogReturn) {
  const auto ds = generate_synthetic_market(99, 10000, 3, Regime::kRandomWalk);
  for (std::size_t d = 0; d < ds.num_tickers(); ++d) {
    std::vector<double> r;
    for (std::size_t t = 1; t < ds.days(); ++t) r.push_back(std::log(ds.price(t, d) / ds.price(t - 1, d)));
    double m = 0.0;
    for (double x : r) m += x;
    m /= static_cast<double>(r.size());
    double ss = 0.0;
    for (double x : r) ss += (x - m) * (x - m);
    const double se = std::sqrt(ss / static_cast<double>(r.size() - 1)) / std::sqrt(static_cast<double>(r.size()));
    EXPECT_LT(std::abs(m), 3.0 * se);
  }
}

TEST(Synthetic, RatiosChangeOncePerQuarter) {
  const auto ds = generate_synthetic_market(8, 200, 2, Regime::kUptrend);
  for (std::size_t t = 1; t < ds.days(); ++t) {
    const bool boundary = t % 63 == 0;
    EXPECT_EQ(ds.ratio(t, 0, 0) != ds.ratio(t - 1, 0, 0), boundary) << t;
  }
  EXPECT_THROW(generate_synthetic_market(1, 90, 2, Regime::kUptrend), DataError);
}

TEST(DatasetIo, RoundTripsExactly) {
  const auto dir = scratch_dir("ds");
  const auto ds = generate_synthetic_market(4, 120, 3, Regime::kMixed);
  save_dataset(ds, dir);
  EXPECT_EQ(load_dataset(dir), ds);
}

}  // namespace
}  // namespace mtrader::data
