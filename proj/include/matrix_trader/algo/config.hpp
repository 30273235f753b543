#pragma once

#include <cstdint>
#include <string>

#include "matrix_trader/common.hpp"

namespace mtrader::algo {

enum class Algorithm { kPpo, kA2c };

inline std::string algorithm_name(Algorithm a) { return a == Algorithm::kPpo ? "ppo" : "a2c"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "ppo") return Algorithm::kPpo;
  if (s == "a2c") return Algorithm::kA2c;
  throw ConfigError("unknown algorithm '" + s + "' (ppo|a2c)");
}

// Hyperparameters of both trainers. PPO uses epochs/minibatch/clip and Adam;
// A2C makes one full-batch RMSprop step per rollout and ignores them.
struct AlgoConfig {
  Algorithm algorithm = Algorithm::kPpo;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  std::size_t epochs = 10;
  std::size_t minibatch = 64;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  double learning_rate = 3e-4;
  std::size_t horizon = 2048;
  double max_grad_norm = 0.5;
  std::size_t total_steps = 100'000;
  bool normalize_advantages = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double rms_alpha = 0.99;
  double rms_eps = 1e-5;

  static AlgoConfig defaults(Algorithm a) {
    AlgoConfig c;
    c.algorithm = a;
    if (a == Algorithm::kA2c) {
      c.gae_lambda = 1.0;
      c.learning_rate = 7e-4;
      c.horizon = 5;
      c.normalize_advantages = false;
      c.epochs = 1;
    }
    return c;
  }

  std::size_t updates() const { return total_steps / horizon; }

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("algo.gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("algo.gae_lambda must be in [0, 1]");
    if (!(clip > 0.0)) throw ConfigError("algo.clip must be > 0");
    if (epochs < 1) throw ConfigError("algo.epochs must be >= 1");
    if (minibatch < 1) throw ConfigError("algo.minibatch must be >= 1");
    if (horizon < 1) throw ConfigError("algo.horizon must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("algo.learning_rate must be > 0");
    if (!(max_grad_norm > 0.0)) throw ConfigError("algo.max_grad_norm must be > 0");
    if (!(vf_coef >= 0.0) || !(ent_coef >= 0.0)) throw ConfigError("algo loss coefficients must be >= 0");
    if (updates() < 1) {
      throw ConfigError("algo.total_steps (" + std::to_string(total_steps) + ") is smaller than algo.horizon (" +
                        std::to_string(horizon) + ")");
    }
  }

  friend bool operator==(const AlgoConfig&, const AlgoConfig&) = default;
};

}  // namespace mtrader::algo
