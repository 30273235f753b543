#pragma once

#include <cmath>
#include <vector>

#include "matrix_trader/nets/parameters.hpp"

namespace mtrader::algo {

// Global L2 norm over all gradients, then scale by max_norm / (norm + 1e-6)
// when that factor is below 1. Returns the pre-clip norm.
template <class T>
double clip_grad_norm(std::vector<nets::Tensor<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (T v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  const double coef = max_norm / (norm + 1e-6);
  if (coef < 1.0) {
    for (auto& g : grads) {
      for (T& v : g.data) v = static_cast<T>(v * coef);
    }
  }
  return norm;
}

// Both optimizers step the learnable entries of a Parameters in order; the
// gradient list must follow BoundParameters::learnable() order.
template <class T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(nets::Parameters<T>& params, const std::vector<nets::Tensor<T>>& grads) {
    init(params);
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& e : params.entries()) {
      if (!e.learnable) continue;
      const auto& g = grads.at(k);
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double gi = g.data[i];
        m[i] = b1_ * m[i] + (1 - b1_) * gi;
        v[i] = b2_ * v[i] + (1 - b2_) * gi * gi;
        const double step = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        e.value.data[i] = static_cast<T>(e.value.data[i] - step);
      }
      ++k;
    }
  }

  std::size_t steps() const { return t_; }

 private:
  void init(const nets::Parameters<T>& params) {
    if (!m_.empty()) return;
    for (const auto& e : params.entries()) {
      if (!e.learnable) continue;
      m_.emplace_back(e.value.size(), 0.0);
      v_.emplace_back(e.value.size(), 0.0);
    }
  }

  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// v = alpha * v + (1 - alpha) * g^2; p -= lr * g / (sqrt(v) + eps).
template <class T>
class RmsProp {
 public:
  RmsProp(double lr, double alpha, double eps) : lr_(lr), alpha_(alpha), eps_(eps) {}

  void step(nets::Parameters<T>& params, const std::vector<nets::Tensor<T>>& grads) {
    if (sq_.empty()) {
      for (const auto& e : params.entries()) {
        if (e.learnable) sq_.emplace_back(e.value.size(), 0.0);
      }
    }
    std::size_t k = 0;
    for (auto& e : params.entries()) {
      if (!e.learnable) continue;
      const auto& g = grads.at(k);
      auto& s = sq_[k];
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double gi = g.data[i];
        s[i] = alpha_ * s[i] + (1 - alpha_) * gi * gi;
        e.value.data[i] = static_cast<T>(e.value.data[i] - lr_ * gi / (std::sqrt(s[i]) + eps_));
      }
      ++k;
    }
  }

 private:
  double lr_, alpha_, eps_;
  std::vector<std::vector<double>> sq_;
};

}  // namespace mtrader::algo
