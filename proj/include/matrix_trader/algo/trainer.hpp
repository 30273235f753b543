#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "matrix_trader/algo/config.hpp"
#include "matrix_trader/algo/losses.hpp"
#include "matrix_trader/algo/optim.hpp"
#include "matrix_trader/algo/rollout.hpp"
#include "matrix_trader/metrics/performance.hpp"

namespace mtrader::algo {

struct UpdateStats {
  double actor_loss = 0.0;    // mean over gradient steps
  double critic_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;     // mean pre-clip norm
  double approx_kl = 0.0;     // PPO, last epoch
  double clip_fraction = 0.0; // PPO, last epoch
  double initial_ratio_error = 0.0;  // PPO: max |rho - 1| over the buffer before any step
  std::size_t gradient_steps = 0;
  std::size_t skipped_steps = 0;  // non-finite loss
};

namespace detail {

// BatchNorm mode for gradient steps: normalize with the running statistics
// (as during collection) and track batch statistics into them. Batches of one
// cannot supply statistics and fall back to read-only.
inline nets::BatchNormOptions update_bn(std::size_t n) {
  return {n >= 2 ? nets::BatchNormMode::kTrackRunning : nets::BatchNormMode::kEval};
}

template <class T>
bool finite(const nets::Var<T>& v) {
  return std::isfinite(static_cast<double>(v.item()));
}

template <class T, class Optimizer>
bool gradient_step(nets::Policy<T>& policy, const LossTerms<T>& terms, nets::BoundParameters<T>& bound,
                   const AlgoConfig& cfg, Optimizer& opt, UpdateStats& stats) {
  if (!finite(terms.total)) {
    ++stats.skipped_steps;
    spdlog::warn("non-finite loss; gradient step skipped");
    return false;
  }
  auto grads = nets::gradients(terms.total, std::span<const nets::Var<T>>(bound.learnable()));
  stats.grad_norm += clip_grad_norm(grads, cfg.max_grad_norm);
  opt.step(policy.params(), grads);
  stats.actor_loss += static_cast<double>(terms.actor.item());
  stats.critic_loss += static_cast<double>(terms.critic.item());
  stats.entropy += static_cast<double>(terms.entropy.item());
  ++stats.gradient_steps;
  return true;
}

inline void average(UpdateStats& s) {
  if (s.gradient_steps == 0) return;
  const double k = static_cast<double>(s.gradient_steps);
  s.actor_loss /= k;
  s.critic_loss /= k;
  s.entropy /= k;
  s.grad_norm /= k;
}

}  // namespace detail

// max |exp(log p_now - log p_collected) - 1| over the buffer, eval mode.
template <class T>
double initial_ratio_error(const nets::Policy<T>& policy, const RolloutBuffer<T>& buf, std::size_t chunk) {
  nets::BoundParameters<T> bound(policy.params());
  double worst = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < buf.size(); start += chunk) {
    rows.resize(std::min(chunk, buf.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto b = gather(buf, rows);
    const auto out = nets::policy_forward(policy.spec(), bound, b.observations, b.n, {nets::BatchNormMode::kEval});
    const auto lp = nets::gaussian_log_prob(out.mean, out.log_std, b.actions);
    for (std::size_t i = 0; i < b.n; ++i) {
      const double ratio = std::exp(static_cast<double>(lp.value().data[i]) - b.old_log_probs[i]);
      worst = std::max(worst, std::abs(ratio - 1.0));
    }
  }
  return worst;
}

template <class T>
UpdateStats ppo_update(nets::Policy<T>& policy, RolloutBuffer<T>& buf, const AlgoConfig& cfg, Adam<T>& opt,
                       std::mt19937_64& rng) {
  UpdateStats stats;
  stats.initial_ratio_error = initial_ratio_error(policy, buf, cfg.minibatch);
  std::vector<std::size_t> order(buf.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double kl_sum = 0.0, clipped = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t len = std::min(cfg.minibatch, order.size() - start);
      auto b = gather(buf, std::span<const std::size_t>(order.data() + start, len));
      if (cfg.normalize_advantages) normalize_advantages(b.advantages);
      nets::BoundParameters<T> bound(policy.params(), true);
      const auto terms = ppo_loss(policy.spec(), bound, b, cfg, detail::update_bn(b.n));
      for (std::size_t i = 0; i < b.n; ++i) {
        const double log_ratio = static_cast<double>(terms.log_prob.value().data[i]) - b.old_log_probs[i];
        kl_sum += (std::exp(log_ratio) - 1.0) - log_ratio;
        if (std::abs(static_cast<double>(terms.ratio.value().data[i]) - 1.0) > cfg.clip) clipped += 1.0;
      }
      detail::gradient_step(policy, terms, bound, cfg, opt, stats);
    }
    stats.approx_kl = kl_sum / static_cast<double>(buf.size());
    stats.clip_fraction = clipped / static_cast<double>(buf.size());
  }
  detail::average(stats);
  return stats;
}

// One full-batch step.
template <class T>
UpdateStats a2c_update(nets::Policy<T>& policy, RolloutBuffer<T>& buf, const AlgoConfig& cfg, RmsProp<T>& opt) {
  UpdateStats stats;
  std::vector<std::size_t> rows(buf.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  auto b = gather(buf, rows);
  if (cfg.normalize_advantages) normalize_advantages(b.advantages);
  nets::BoundParameters<T> bound(policy.params(), true);
  const auto terms = a2c_loss(policy.spec(), bound, b, cfg, detail::update_bn(b.n));
  detail::gradient_step(policy, terms, bound, cfg, opt, stats);
  detail::average(stats);
  return stats;
}

// Per-update training record; the episode columns describe the episode in
// progress (or just finished) at the end of the rollout.
struct HistoryRow {
  std::size_t update_idx = 0;
  std::size_t env_steps = 0;
  double episode_reward = 0.0;
  double portfolio_value = 0.0;
  double sharpe = 0.0;  // annualized; NaN while undefined
  double total_cost = 0.0;
  double mean_turbulence = 0.0;
  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

inline constexpr const char* kHistoryHeader =
    "update_idx,env_steps,episode_reward,portfolio_value,sharpe,total_cost,mean_turbulence";

inline void write_history_csv(const std::vector<HistoryRow>& rows, const std::string& path) {
  using mtrader::detail::format_double;
  auto out = mtrader::detail::open_output(path);
  out << kHistoryHeader << '\n';
  for (const auto& r : rows) {
    out << r.update_idx << ',' << r.env_steps << ',' << format_double(r.episode_reward) << ','
        << format_double(r.portfolio_value) << ',' << format_double(r.sharpe) << ',' << format_double(r.total_cost)
        << ',' << format_double(r.mean_turbulence) << '\n';
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

inline std::vector<HistoryRow> read_history_csv(const std::string& path) {
  using mtrader::detail::parse_double;
  auto in = mtrader::detail::open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != kHistoryHeader) throw DataError(path + ": not a training history file");
  std::vector<HistoryRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = mtrader::detail::split_csv_line(line);
    const std::string where = path + ":" + std::to_string(n);
    if (c.size() != 7) throw DataError(where + ": malformed history row");
    rows.push_back({static_cast<std::size_t>(parse_double(c[0], where)),
                    static_cast<std::size_t>(parse_double(c[1], where)), parse_double(c[2], where),
                    parse_double(c[3], where), parse_double(c[4], where), parse_double(c[5], where),
                    parse_double(c[6], where)});
  }
  return rows;
}

// Sets the data-dependent dimensions of a policy spec.
inline nets::PolicySpec fit_spec(nets::PolicySpec spec, const data::MarketDataset& ds, const env::EnvConfig& env_cfg) {
  spec.window = env_cfg.window;
  spec.features = features::FeatureLayout{ds.num_tickers()}.width();
  spec.actions = ds.num_tickers();
  spec.validate();
  return spec;
}

template <class T>
struct TrainResult {
  nets::Policy<T> policy;
  std::vector<HistoryRow> history;
  std::vector<UpdateStats> stats;
  EpisodeTracker last_episode;
  std::size_t env_steps = 0;
};

using UpdateCallback = std::function<void(const HistoryRow&, const UpdateStats&)>;

// Alternates collection and updates for cfg.updates() rounds. Deterministic for
// a given seed: parameter init, action sampling and minibatch shuffling each
// draw from their own generator seeded from `seed`.
template <class T>
TrainResult<T> train(std::shared_ptr<const data::MarketDataset> ds, const env::EnvConfig& env_cfg,
                     const nets::PolicySpec& policy_spec, const AlgoConfig& cfg, std::uint64_t seed,
                     const UpdateCallback& on_update = {}) {
  cfg.validate();
  std::mt19937_64 master(seed);
  const std::uint64_t init_seed = master(), sample_seed = master(), shuffle_seed = master();
  const auto spec = fit_spec(policy_spec, *ds, env_cfg);

  TrainResult<T> result{nets::Policy<T>(spec, init_seed), {}, {}, {}, 0};
  auto& policy = result.policy;
  policy.set_normalization(features::compute_normalization_stats(*ds, env_cfg.initial_balance,
                                                                 static_cast<double>(env_cfg.hmax)));
  env::TradingEnv e(ds, env_cfg);
  e.reset();
  result.last_episode.begin(e);

  std::mt19937_64 sample_rng(sample_seed), shuffle_rng(shuffle_seed);
  Adam<T> adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  RmsProp<T> rms(cfg.learning_rate, cfg.rms_alpha, cfg.rms_eps);

  for (std::size_t u = 1; u <= cfg.updates(); ++u) {
    auto buf = collect_rollout(e, policy, cfg.horizon, sample_rng, &result.last_episode);
    buf.finish(cfg.gamma, cfg.gae_lambda);
    result.env_steps += buf.size();
    const auto stats = cfg.algorithm == Algorithm::kPpo ? ppo_update(policy, buf, cfg, adam, shuffle_rng)
                                                        : a2c_update(policy, buf, cfg, rms);
    const auto& ep = result.last_episode;
    HistoryRow row{u,
                   result.env_steps,
                   ep.episode_reward(),
                   ep.portfolio_value(),
                   metrics::sharpe_or_nan(ep.equity(), true),
                   metrics::cumulative_cost(ep.trade_log()).total_cost,
                   ep.mean_turbulence()};
    spdlog::debug("update {} steps {} actor {:.6g} critic {:.6g} kl {:.3g} clip {:.3f} ratio0 {:.3g}", u,
                  result.env_steps, stats.actor_loss, stats.critic_loss, stats.approx_kl, stats.clip_fraction,
                  stats.initial_ratio_error);
    if (on_update) on_update(row, stats);
    result.history.push_back(row);
    result.stats.push_back(stats);
  }
  return result;
}

struct EvaluationResult {
  metrics::EvaluationReport report;
  std::vector<double> equity;
  std::vector<std::string> dates;
  std::vector<env::TradeLogRow> trades;
};

// Greedy episode (action = policy mean) over the whole dataset.
template <class T>
EvaluationResult evaluate(const nets::Policy<T>& policy, std::shared_ptr<const data::MarketDataset> ds,
                          const env::EnvConfig& env_cfg) {
  const auto& spec = policy.spec();
  const std::size_t width = features::FeatureLayout{ds->num_tickers()}.width();
  if (spec.actions != ds->num_tickers() || spec.features != width || spec.window != env_cfg.window) {
    throw Error("policy expects " + std::to_string(spec.actions) + " tickers and a " + std::to_string(spec.window) +
                "-day window; dataset has " + std::to_string(ds->num_tickers()) + " tickers and env window is " +
                std::to_string(env_cfg.window));
  }
  env::TradingEnv e(ds, env_cfg);
  e.reset();
  nets::BoundParameters<T> bound(policy.params());
  EvaluationResult r;
  r.equity.push_back(e.value());
  r.dates.push_back(e.current_date().iso());
  double total_reward = 0.0;
  while (!e.done()) {
    const auto out =
        nets::to_outputs(nets::policy_forward(spec, bound, policy.observe(e.state()), 1, {nets::BatchNormMode::kEval}))
            .front();
    const auto step = e.step(out.mean);
    total_reward += step.reward;
    r.equity.push_back(step.info.portfolio_value);
    r.dates.push_back(e.current_date().iso());
  }
  r.trades = e.trade_log();
  const auto cost = metrics::cumulative_cost(r.trades);
  r.report.final_value = r.equity.back();
  r.report.total_reward = total_reward;
  r.report.sharpe_daily = metrics::sharpe_or_nan(r.equity, false);
  r.report.sharpe_annual = metrics::sharpe_or_nan(r.equity, true);
  r.report.total_cost = cost.total_cost;
  r.report.n_trades = cost.n_trades;
  r.report.max_drawdown = metrics::max_drawdown(r.equity);
  return r;
}

}  // namespace mtrader::algo
