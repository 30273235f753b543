#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "matrix_trader/algo/config.hpp"
#include "matrix_trader/algo/rollout.hpp"
#include "matrix_trader/nets/ops.hpp"

namespace mtrader::algo {

// Rows of a rollout selected for one gradient step.
template <class T>
struct LossBatch {
  std::size_t n = 0;
  std::vector<T> observations;
  nets::Tensor<T> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
};

template <class T>
LossBatch<T> gather(const RolloutBuffer<T>& buf, std::span<const std::size_t> rows) {
  if (buf.advantages.size() != buf.size()) throw Error("rollout buffer has no advantages; call finish()");
  LossBatch<T> b;
  b.n = rows.size();
  b.observations.reserve(b.n * buf.obs_size);
  b.actions = nets::Tensor<T>({b.n, buf.action_size});
  for (std::size_t k = 0; k < b.n; ++k) {
    const std::size_t r = rows[k];
    const auto first = buf.observations.begin() + static_cast<std::ptrdiff_t>(r * buf.obs_size);
    b.observations.insert(b.observations.end(), first, first + static_cast<std::ptrdiff_t>(buf.obs_size));
    for (std::size_t d = 0; d < buf.action_size; ++d) {
      b.actions.data[k * buf.action_size + d] = static_cast<T>(buf.actions[r * buf.action_size + d]);
    }
    b.old_log_probs.push_back(buf.log_probs[r]);
    b.advantages.push_back(buf.advantages[r]);
    b.returns.push_back(buf.returns[r]);
  }
  return b;
}

// (a - mean) / (sample std + 1e-8); left unchanged for fewer than 2 entries.
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.size() < 2) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double ss = 0.0;
  for (double a : adv) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(adv.size() - 1));
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

template <class T>
struct LossTerms {
  nets::Var<T> total;
  nets::Var<T> actor;
  nets::Var<T> critic;
  nets::Var<T> entropy;
  nets::Var<T> ratio;  // PPO only
  nets::Var<T> log_prob;
};

namespace detail {

template <class T>
nets::Var<T> column(const std::vector<double>& v) {
  nets::Tensor<T> t({v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<T>(v[i]);
  return nets::Var<T>::constant(std::move(t));
}

template <class T>
LossTerms<T> combine(LossTerms<T> t, const nets::PolicyOutputVars<T>& out, const LossBatch<T>& b,
                     const AlgoConfig& cfg) {
  using namespace nets;
  t.critic = mean(square(sub(out.value, column<T>(b.returns))));
  t.entropy = gaussian_entropy(out.log_std);
  t.total = add(t.actor, scale(t.critic, static_cast<T>(cfg.vf_coef)));
  if (cfg.ent_coef != 0.0) t.total = sub(t.total, scale(t.entropy, static_cast<T>(cfg.ent_coef)));
  return t;
}

}  // namespace detail

// Clipped surrogate: -mean(min(rho * A, clamp(rho, 1 - eps, 1 + eps) * A)),
// rho = exp(log p_new - log p_old). Advantages are used as given.
template <class T>
LossTerms<T> ppo_loss(const nets::PolicySpec& spec, nets::BoundParameters<T>& p, const LossBatch<T>& b,
                      const AlgoConfig& cfg, const nets::BatchNormOptions& bn) {
  using namespace nets;
  const auto out = policy_forward(spec, p, b.observations, b.n, bn);
  LossTerms<T> t;
  t.log_prob = gaussian_log_prob(out.mean, out.log_std, b.actions);
  t.ratio = exp(sub(t.log_prob, detail::column<T>(b.old_log_probs)));
  const auto adv = detail::column<T>(b.advantages);
  const T eps = static_cast<T>(cfg.clip);
  const auto unclipped = mul(t.ratio, adv);
  const auto clipped = mul(clamp(t.ratio, T(1) - eps, T(1) + eps), adv);
  t.actor = neg(mean(minimum(unclipped, clipped)));
  return detail::combine(std::move(t), out, b, cfg);
}

// -mean(log p * A) with A held constant.
template <class T>
LossTerms<T> a2c_loss(const nets::PolicySpec& spec, nets::BoundParameters<T>& p, const LossBatch<T>& b,
                      const AlgoConfig& cfg, const nets::BatchNormOptions& bn) {
  using namespace nets;
  const auto out = policy_forward(spec, p, b.observations, b.n, bn);
  LossTerms<T> t;
  t.log_prob = gaussian_log_prob(out.mean, out.log_std, b.actions);
  t.actor = neg(mean(mul(t.log_prob, detail::column<T>(b.advantages))));
  return detail::combine(std::move(t), out, b, cfg);
}

}  // namespace mtrader::algo
