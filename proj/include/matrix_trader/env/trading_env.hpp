#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "matrix_trader/data/market_dataset.hpp"
#include "matrix_trader/env/trade_log.hpp"
#include "matrix_trader/features/window.hpp"

namespace mtrader::env {

struct EnvConfig {
  double initial_balance = 1'000'000.0;
  std::int64_t hmax = 1000;
  double cost_rate = 0.001;
  double reward_scale = 1e-6;
  std::size_t turbulence_lookback = 252;
  std::size_t window = features::kDefaultWindow;

  void validate() const {
    if (hmax < 1) throw ConfigError("env.hmax must be >= 1");
    if (!(cost_rate >= 0.0 && cost_rate < 1.0)) throw ConfigError("env.cost_rate must be in [0, 1)");
    if (!(reward_scale > 0.0)) throw ConfigError("env.reward_scale must be > 0");
    if (!(initial_balance >= 0.0)) throw ConfigError("env.initial_balance must be >= 0");
    if (window < 1) throw ConfigError("env.window must be >= 1");
  }
};

struct PortfolioState {
  double balance = 0.0;
  std::vector<std::int64_t> holdings;
  std::size_t day_index = 0;
  friend bool operator==(const PortfolioState&, const PortfolioState&) = default;
};

struct StepInfo {
  double portfolio_value = 0.0;
  double cost_paid = 0.0;
  double turbulence = 0.0;
  std::vector<std::int64_t> trades_executed;
};

struct StepResult {
  features::StateMatrix next_state;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

inline double portfolio_value(const PortfolioState& p, std::span<const double> prices) {
  double v = p.balance;
  for (std::size_t d = 0; d < prices.size(); ++d) v += prices[d] * static_cast<double>(p.holdings[d]);
  return v;
}

// Share deltas: each action component is clamped to [-1, 1], scaled by hmax and
// truncated toward zero.
inline std::vector<std::int64_t> scale_action(std::span<const double> action, std::int64_t hmax) {
  std::vector<std::int64_t> deltas(action.size());
  for (std::size_t d = 0; d < action.size(); ++d) {
    const double a = std::isnan(action[d]) ? 0.0 : std::clamp(action[d], -1.0, 1.0);
    deltas[d] = static_cast<std::int64_t>(std::trunc(a * static_cast<double>(hmax)));
  }
  return deltas;
}

struct Execution {
  std::size_t ticker = 0;
  std::int64_t delta = 0;
  double price = 0.0;
  double cost = 0.0;
  double balance_after = 0.0;
};

struct TradeOutcome {
  PortfolioState state;
  double cost_paid = 0.0;
  std::vector<std::int64_t> executed;  // per ticker, after clipping
  std::vector<Execution> executions;   // in execution order
};

// Sells first (clipped to holdings), then buys in ticker order, each clipped
// to the largest share count the remaining balance can pay for including cost.
inline TradeOutcome apply_trades(const PortfolioState& p, std::span<const double> prices,
                                 std::span<const std::int64_t> deltas, double cost_rate) {
  TradeOutcome out{p, 0.0, std::vector<std::int64_t>(deltas.size(), 0), {}};
  auto& s = out.state;
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    if (deltas[d] >= 0) continue;
    const std::int64_t shares = std::min(-deltas[d], s.holdings[d]);
    if (shares == 0) continue;
    const double notional = static_cast<double>(shares) * prices[d];
    const double cost = notional * cost_rate;
    s.balance += notional * (1.0 - cost_rate);
    s.holdings[d] -= shares;
    out.cost_paid += cost;
    out.executed[d] = -shares;
    out.executions.push_back({d, -shares, prices[d], cost, s.balance});
  }
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    if (deltas[d] <= 0) continue;
    const double unit = prices[d] * (1.0 + cost_rate);
    auto debit = [&](std::int64_t n) { return static_cast<double>(n) * prices[d] * (1.0 + cost_rate); };
    const double affordable_estimate = std::floor(s.balance / unit);
    std::int64_t shares = deltas[d];
    if (affordable_estimate < static_cast<double>(shares)) shares = static_cast<std::int64_t>(std::max(0.0, affordable_estimate));
    while (shares > 0 && debit(shares) > s.balance) --shares;
    while (shares < deltas[d] && debit(shares + 1) <= s.balance) ++shares;
    if (shares == 0) continue;
    const double notional = static_cast<double>(shares) * prices[d];
    const double cost = notional * cost_rate;
    s.balance -= debit(shares);
    s.holdings[d] += shares;
    out.cost_paid += cost;
    out.executed[d] = shares;
    out.executions.push_back({d, shares, prices[d], cost, s.balance});
  }
  return out;
}

// (y - mu)^T pinv(Sigma) (y - mu), with mu and the sample covariance Sigma taken
// over the rows of `window` (n x D).
inline double mahalanobis_turbulence(const Eigen::MatrixXd& window, const Eigen::VectorXd& today) {
  const Eigen::Index n = window.rows();
  if (n < 2) return 0.0;
  const Eigen::RowVectorXd mu = window.colwise().mean();
  const Eigen::MatrixXd centered = window.rowwise() - mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double tol = std::max(lambda.cwiseAbs().maxCoeff(), 0.0) * 1e-12 * static_cast<double>(cov.rows());
  const Eigen::VectorXd dev = today - mu.transpose();
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * dev;
  double t = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] > tol) t += proj[i] * proj[i] / lambda[i];
  }
  return std::max(t, 0.0);
}

// Turbulence of day t's simple-return vector against the `lookback` returns
// before it. Returns 0 when fewer than lookback + 1 prior days exist.
inline double compute_turbulence(const data::MarketDataset& ds, std::size_t t, std::size_t lookback) {
  if (lookback < 2 || t < lookback + 1 || t >= ds.days()) return 0.0;
  const std::size_t d_count = ds.num_tickers();
  auto ret = [&](std::size_t day, std::size_t d) { return ds.price(day, d) / ds.price(day - 1, d) - 1.0; };
  Eigen::MatrixXd window(static_cast<Eigen::Index>(lookback), static_cast<Eigen::Index>(d_count));
  for (std::size_t i = 0; i < lookback; ++i) {
    for (std::size_t d = 0; d < d_count; ++d) window(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = ret(t - lookback + i, d);
  }
  Eigen::VectorXd today(static_cast<Eigen::Index>(d_count));
  for (std::size_t d = 0; d < d_count; ++d) today[static_cast<Eigen::Index>(d)] = ret(t, d);
  return mahalanobis_turbulence(window, today);
}

// Single-threaded trading episode over a shared, read-only dataset.
class TradingEnv {
 public:
  TradingEnv(std::shared_ptr<const data::MarketDataset> ds, EnvConfig cfg) : ds_(std::move(ds)), cfg_(cfg) {
    cfg_.validate();
    if (!ds_) throw Error("environment needs a dataset");
    turbulence_.resize(ds_->days());
    for (std::size_t t = 0; t < ds_->days(); ++t) turbulence_[t] = compute_turbulence(*ds_, t, cfg_.turbulence_lookback);
  }

  const features::StateMatrix& reset(std::size_t start_index = 0) {
    if (start_index + cfg_.window >= ds_->days()) {
      throw Error("dataset of " + std::to_string(ds_->days()) + " days is too short for a " +
                  std::to_string(cfg_.window) + "-day window plus one step from day " +
                  std::to_string(start_index));
    }
    const std::vector<std::int64_t> zero(ds_->num_tickers(), 0);
    portfolio_ = {cfg_.initial_balance, zero, start_index + cfg_.window - 1};
    state_ = features::init_window(*ds_, start_index, cfg_.initial_balance, zero, cfg_.window);
    initial_value_ = value();
    steps_ = 0;
    done_ = false;
    ready_ = true;
    log_.clear();
    return state_;
  }

  StepResult step(std::span<const double> action) {
    if (!ready_) throw Error("step() before reset()");
    if (done_) throw Error("step() after episode end; call reset()");
    if (action.size() != ds_->num_tickers()) {
      throw Error("action has " + std::to_string(action.size()) + " components, expected " +
                  std::to_string(ds_->num_tickers()));
    }
    const std::size_t today = portfolio_.day_index;
    const auto prices = ds_->prices_on(today);
    const double before = portfolio_value(portfolio_, prices);
    const auto deltas = scale_action(action, cfg_.hmax);
    auto outcome = apply_trades(portfolio_, prices, deltas, cfg_.cost_rate);

    ++steps_;
    const std::string date = ds_->calendar()[today].iso();
    for (const auto& e : outcome.executions) {
      log_.push_back({steps_, date, ds_->tickers()[e.ticker], e.delta, e.price, e.cost, e.balance_after, 0.0});
    }
    fill_values_after(outcome, prices);

    portfolio_ = std::move(outcome.state);
    portfolio_.day_index = today + 1;
    const auto next_prices = ds_->prices_on(portfolio_.day_index);
    const double after = portfolio_value(portfolio_, next_prices);
    const auto v = features::build_daily_vector(portfolio_.balance, next_prices, portfolio_.holdings,
                                                ds_->ratios_on(portfolio_.day_index));
    state_ = features::shift_window(state_, v);
    done_ = portfolio_.day_index + 1 >= ds_->days();

    StepResult r;
    r.next_state = state_;
    r.reward = (after - before) * cfg_.reward_scale;
    r.done = done_;
    r.info.portfolio_value = after;
    r.info.cost_paid = outcome.cost_paid;
    r.info.turbulence = turbulence_[portfolio_.day_index];
    r.info.trades_executed = std::move(outcome.executed);
    return r;
  }

  const features::StateMatrix& state() const { return state_; }
  const PortfolioState& portfolio() const { return portfolio_; }
  double value() const { return portfolio_value(portfolio_, ds_->prices_on(portfolio_.day_index)); }
  double initial_value() const { return initial_value_; }
  bool done() const { return done_; }
  std::size_t steps() const { return steps_; }
  Date current_date() const { return ds_->calendar()[portfolio_.day_index]; }
  const std::vector<TradeLogRow>& trade_log() const { return log_; }
  const EnvConfig& config() const { return cfg_; }
  const data::MarketDataset& dataset() const { return *ds_; }
  std::shared_ptr<const data::MarketDataset> dataset_ptr() const { return ds_; }

 private:
  // Replays this step's executions to stamp each log row with the portfolio
  // value right after that trade, at execution prices.
  void fill_values_after(const TradeOutcome& outcome, std::span<const double> prices) {
    PortfolioState running = portfolio_;
    std::size_t row = log_.size() - outcome.executions.size();
    for (const auto& e : outcome.executions) {
      running.holdings[e.ticker] += e.delta;
      running.balance = e.balance_after;
      log_[row++].value_after = portfolio_value(running, prices);
    }
  }

  std::shared_ptr<const data::MarketDataset> ds_;
  EnvConfig cfg_;
  std::vector<double> turbulence_;
  PortfolioState portfolio_;
  features::StateMatrix state_;
  double initial_value_ = 0.0;
  std::size_t steps_ = 0;
  bool done_ = false;
  bool ready_ = false;
  std::vector<TradeLogRow> log_;
};

}  // namespace mtrader::env
