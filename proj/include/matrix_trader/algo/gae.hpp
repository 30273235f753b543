#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "matrix_trader/common.hpp"

namespace mtrader::algo {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t, with v_T = bootstrap;
// A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}; returns = A + v.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
                             double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw Error("compute_gae: rewards/values/dones lengths differ (" + std::to_string(n) + "/" +
                std::to_string(values.size()) + "/" + std::to_string(dones.size()) + ")");
  }
  GaeResult r{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double next_value = i + 1 < n ? values[i + 1] : bootstrap_value;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    r.advantages[i] = next_adv;
    r.returns[i] = next_adv + values[i];
  }
  return r;
}

}  // namespace mtrader::algo
