#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "matrix_trader/algo/gae.hpp"
#include "matrix_trader/env/trading_env.hpp"
#include "matrix_trader/metrics/performance.hpp"
#include "matrix_trader/nets/policy.hpp"

namespace mtrader::algo {

// One rollout of `size()` steps. Observations are the normalized network
// inputs; actions are the raw samples before the environment clamps them.
template <class T>
struct RolloutBuffer {
  std::size_t obs_size = 0;
  std::size_t action_size = 0;
  std::vector<T> observations;
  std::vector<double> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  double bootstrap_value = 0.0;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return rewards.size(); }

  void finish(double gamma, double lambda) {
    auto g = compute_gae(rewards, values, dones, bootstrap_value, gamma, lambda);
    advantages = std::move(g.advantages);
    returns = std::move(g.returns);
  }
};

// Running record of the current episode. A finished episode stays readable
// until the first step of the next one.
class EpisodeTracker {
 public:
  void begin(const env::TradingEnv& e) {
    reward_ = 0.0;
    turbulence_sum_ = 0.0;
    steps_ = 0;
    log_.clear();
    dates_ = {e.current_date().iso()};
    equity_ = {e.value()};
    pending_ = false;
  }

  void record(const env::TradingEnv& e, const env::StepResult& r) {
    if (pending_) begin_pending();
    reward_ += r.reward;
    turbulence_sum_ += r.info.turbulence;
    ++steps_;
    dates_.push_back(e.current_date().iso());
    equity_.push_back(r.info.portfolio_value);
    const auto& full = e.trade_log();
    log_.insert(log_.end(), full.begin() + static_cast<std::ptrdiff_t>(log_.size()), full.end());
  }

  // The environment was reset after a finished episode; keep the old record
  // until the next recorded step.
  void episode_done(const env::TradingEnv& e) {
    pending_ = true;
    next_start_value_ = e.value();
    next_start_date_ = e.current_date().iso();
  }

  double episode_reward() const { return reward_; }
  double portfolio_value() const { return equity_.empty() ? 0.0 : equity_.back(); }
  double mean_turbulence() const { return steps_ ? turbulence_sum_ / static_cast<double>(steps_) : 0.0; }
  const std::vector<double>& equity() const { return equity_; }
  const std::vector<std::string>& dates() const { return dates_; }
  const std::vector<env::TradeLogRow>& trade_log() const { return log_; }
  std::size_t steps() const { return steps_; }

 private:
  void begin_pending() {
    reward_ = 0.0;
    turbulence_sum_ = 0.0;
    steps_ = 0;
    log_.clear();
    dates_ = {next_start_date_};
    equity_ = {next_start_value_};
    pending_ = false;
  }

  double reward_ = 0.0;
  double turbulence_sum_ = 0.0;
  std::size_t steps_ = 0;
  std::vector<double> equity_;
  std::vector<std::string> dates_;
  std::vector<env::TradeLogRow> log_;
  bool pending_ = false;
  double next_start_value_ = 0.0;
  std::string next_start_date_;
};

// Runs n steps with actions sampled from the eval-mode policy. Parameters are
// bound once, read-only. Finished episodes reset the environment in place.
template <class T>
RolloutBuffer<T> collect_rollout(env::TradingEnv& e, const nets::Policy<T>& policy, std::size_t n,
                                 std::mt19937_64& rng, EpisodeTracker* tracker = nullptr) {
  if (n < 1) throw Error("collect_rollout: horizon must be >= 1");
  const auto& spec = policy.spec();
  nets::BoundParameters<T> bound(policy.params());
  const nets::BatchNormOptions eval{nets::BatchNormMode::kEval};
  auto forward = [&](const std::vector<T>& obs) {
    return nets::to_outputs(nets::policy_forward(spec, bound, obs, 1, eval)).front();
  };

  RolloutBuffer<T> buf;
  buf.obs_size = spec.observation_size();
  buf.action_size = spec.actions;
  buf.observations.reserve(n * buf.obs_size);
  for (std::size_t i = 0; i < n; ++i) {
    const auto obs = policy.observe(e.state());
    const auto out = forward(obs);
    const auto sample = nets::sample_action(out, rng);
    const auto r = e.step(sample.action);
    if (tracker) tracker->record(e, r);

    buf.observations.insert(buf.observations.end(), obs.begin(), obs.end());
    buf.actions.insert(buf.actions.end(), sample.action.begin(), sample.action.end());
    buf.log_probs.push_back(sample.log_prob);
    buf.values.push_back(out.value);
    buf.rewards.push_back(r.reward);
    buf.dones.push_back(r.done ? 1 : 0);
    if (r.done) {
      e.reset();
      if (tracker) tracker->episode_done(e);
    }
  }
  buf.bootstrap_value = forward(policy.observe(e.state())).value;
  return buf;
}

}  // namespace mtrader::algo
