#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "matrix_trader/features/window.hpp"
#include "matrix_trader/nets/ops.hpp"
#include "matrix_trader/nets/parameters.hpp"

namespace mtrader::nets {

enum class PolicyKind { kCnn, kMlp };

inline std::string policy_kind_name(PolicyKind k) { return k == PolicyKind::kCnn ? "cnn" : "mlp"; }
inline PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "cnn") return PolicyKind::kCnn;
  if (s == "mlp") return PolicyKind::kMlp;
  throw ConfigError("unknown policy kind '" + s + "' (cnn|mlp)");
}

// Architecture of either network. The CNN consumes the window x features
// matrix as one channel: two conv -> batch-norm -> ReLU -> max-pool stages,
// a dense ReLU layer, then actor (tanh mean) and critic heads on the shared
// trunk. The MLP consumes only the newest row through tanh hidden layers.
struct PolicySpec {
  PolicyKind kind = PolicyKind::kCnn;
  std::size_t window = features::kDefaultWindow;
  std::size_t features = features::kDefaultFeatureWidth;
  std::size_t actions = features::kDefaultTickers;
  std::size_t conv1_filters = 32;
  std::size_t conv2_filters = 64;
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::size_t dense = 512;
  std::size_t mlp_hidden = 64;
  std::size_t mlp_layers = 2;

  std::size_t pooled_height() const { return window / pool / pool; }
  std::size_t pooled_width() const { return features / pool / pool; }
  std::size_t flat_size() const { return conv2_filters * pooled_height() * pooled_width(); }
  std::size_t trunk_width() const { return kind == PolicyKind::kCnn ? dense : mlp_hidden; }
  std::size_t observation_size() const { return kind == PolicyKind::kCnn ? window * features : features; }

  void validate() const {
    if (actions == 0 || features == 0 || window == 0) throw ConfigError("policy dimensions must be positive");
    if (kind == PolicyKind::kCnn) {
      if (kernel % 2 == 0) throw ConfigError("policy.kernel must be odd");
      if (pool == 0 || pooled_height() == 0 || pooled_width() == 0) {
        throw ConfigError("policy.pool too large for a " + std::to_string(window) + "x" + std::to_string(features) +
                          " input");
      }
      if (conv1_filters == 0 || conv2_filters == 0 || dense == 0) throw ConfigError("CNN widths must be positive");
    } else if (mlp_hidden == 0 || mlp_layers == 0) {
      throw ConfigError("MLP widths must be positive");
    }
  }

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

inline nlohmann::json to_json(const PolicySpec& s) {
  return {{"kind", policy_kind_name(s.kind)}, {"window", s.window},       {"features", s.features},
          {"actions", s.actions},             {"conv1_filters", s.conv1_filters},
          {"conv2_filters", s.conv2_filters}, {"kernel", s.kernel},       {"pool", s.pool},
          {"dense", s.dense},                 {"mlp_hidden", s.mlp_hidden}, {"mlp_layers", s.mlp_layers}};
}

inline PolicySpec policy_spec_from_json(const nlohmann::json& j) {
  PolicySpec s;
  s.kind = parse_policy_kind(j.at("kind").get<std::string>());
  s.window = j.at("window");
  s.features = j.at("features");
  s.actions = j.at("actions");
  s.conv1_filters = j.at("conv1_filters");
  s.conv2_filters = j.at("conv2_filters");
  s.kernel = j.at("kernel");
  s.pool = j.at("pool");
  s.dense = j.at("dense");
  s.mlp_hidden = j.at("mlp_hidden");
  s.mlp_layers = j.at("mlp_layers");
  return s;
}

enum class InitRule { kOrthogonal, kZeros, kOnes };

struct ParamLayout {
  std::string name;
  Shape shape;
  bool learnable = true;
  InitRule init = InitRule::kZeros;
  double gain = 1.0;
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

// Every array of the network in checkpoint order.
inline std::vector<ParamLayout> parameter_layout(const PolicySpec& s) {
  s.validate();
  const double relu_gain = std::sqrt(2.0);
  std::vector<ParamLayout> out;
  auto batchnorm = [&](const std::string& p, std::size_t c) {
    out.push_back({p + ".weight", {c}, true, InitRule::kOnes});
    out.push_back({p + ".bias", {c}, true, InitRule::kZeros});
    out.push_back({p + ".running_mean", {c}, false, InitRule::kZeros});
    out.push_back({p + ".running_var", {c}, false, InitRule::kOnes});
  };
  if (s.kind == PolicyKind::kCnn) {
    out.push_back({"conv1.weight", {s.conv1_filters, 1, s.kernel, s.kernel}, true, InitRule::kOrthogonal, relu_gain});
    out.push_back({"conv1.bias", {s.conv1_filters}});
    batchnorm("bn1", s.conv1_filters);
    out.push_back({"conv2.weight", {s.conv2_filters, s.conv1_filters, s.kernel, s.kernel}, true,
                   InitRule::kOrthogonal, relu_gain});
    out.push_back({"conv2.bias", {s.conv2_filters}});
    batchnorm("bn2", s.conv2_filters);
    out.push_back({"fc.weight", {s.dense, s.flat_size()}, true, InitRule::kOrthogonal, relu_gain});
    out.push_back({"fc.bias", {s.dense}});
  } else {
    std::size_t in = s.features;
    for (std::size_t l = 0; l < s.mlp_layers; ++l) {
      const std::string p = "mlp." + std::to_string(l);
      out.push_back({p + ".weight", {s.mlp_hidden, in}, true, InitRule::kOrthogonal, relu_gain});
      out.push_back({p + ".bias", {s.mlp_hidden}});
      in = s.mlp_hidden;
    }
  }
  out.push_back({"actor.weight", {s.actions, s.trunk_width()}, true, InitRule::kOrthogonal, 0.01});
  out.push_back({"actor.bias", {s.actions}});
  out.push_back({"critic.weight", {1, s.trunk_width()}, true, InitRule::kOrthogonal, 1.0});
  out.push_back({"critic.bias", {1}});
  out.push_back({"log_std", {s.actions}});
  out.push_back({"input.mean", {s.features}, false, InitRule::kZeros});
  out.push_back({"input.std", {s.features}, false, InitRule::kOnes});
  return out;
}

inline std::size_t learnable_parameter_count(const PolicySpec& s) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(s)) {
    if (p.learnable) n += shape_numel(p.shape);
  }
  return n;
}

// rows x cols matrix with orthonormal columns (rows >= cols) or rows, times gain.
inline std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng) {
  const bool tall = rows >= cols;
  const auto r = static_cast<Eigen::Index>(tall ? rows : cols), c = static_cast<Eigen::Index>(tall ? cols : rows);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const auto& rr = qr.matrixQR();
  for (Eigen::Index j = 0; j < c; ++j) {
    if (rr(j, j) < 0) q.col(j) *= -1.0;
  }
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = tall ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                            : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      out[i * cols + j] = gain * v;
    }
  }
  return out;
}

template <class T>
Parameters<T> init_params(const PolicySpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters<T> params;
  for (const auto& p : parameter_layout(spec)) {
    Tensor<T> t(p.shape);
    switch (p.init) {
      case InitRule::kZeros: break;
      case InitRule::kOnes: std::fill(t.data.begin(), t.data.end(), T(1)); break;
      case InitRule::kOrthogonal: {
        const std::size_t rows = p.shape[0], cols = t.size() / rows;
        const auto m = orthogonal_matrix(rows, cols, p.gain, rng);
        for (std::size_t i = 0; i < m.size(); ++i) t.data[i] = static_cast<T>(m[i]);
        break;
      }
    }
    params.add(p.name, std::move(t), p.learnable);
  }
  return params;
}

// Graph outputs of one forward pass: mean [N, A], log_std [A], value [N].
template <class T>
struct PolicyOutputVars {
  Var<T> mean;
  Var<T> log_std;
  Var<T> value;
};

// Plain per-sample policy output.
struct GaussianPolicyOutput {
  std::vector<double> mean;
  std::vector<double> log_std;
  double value = 0.0;
};

template <class T>
PolicyOutputVars<T> heads(const PolicySpec& spec, BoundParameters<T>& p, const Var<T>& trunk) {
  const std::size_t n = trunk.shape()[0];
  PolicyOutputVars<T> out;
  out.mean = tanh(linear(trunk, p["actor.weight"], p["actor.bias"]));
  out.value = reshape(linear(trunk, p["critic.weight"], p["critic.bias"]), {n});
  out.log_std = clamp(p["log_std"], static_cast<T>(kLogStdMin), static_cast<T>(kLogStdMax));
  (void)spec;
  return out;
}

// batch: N x 1 x window x features (already normalized).
template <class T>
PolicyOutputVars<T> cnn_forward(const PolicySpec& spec, BoundParameters<T>& p, const Var<T>& batch,
                                const BatchNormOptions& bn) {
  const auto& s = batch.shape();
  if (spec.kind != PolicyKind::kCnn || s.size() != 4 || s[1] != 1 || s[2] != spec.window || s[3] != spec.features) {
    throw ShapeError("cnn_forward: expected [N,1," + std::to_string(spec.window) + "," +
                     std::to_string(spec.features) + "], got " + shape_str(s));
  }
  const std::size_t n = s[0], pad = spec.kernel / 2;
  auto h = conv2d(batch, p["conv1.weight"], p["conv1.bias"], pad);
  h = batchnorm2d(h, p["bn1.weight"], p["bn1.bias"], p.running("bn1.running_mean"), p.running("bn1.running_var"), bn);
  h = maxpool2d(relu(h), spec.pool);
  h = conv2d(h, p["conv2.weight"], p["conv2.bias"], pad);
  h = batchnorm2d(h, p["bn2.weight"], p["bn2.bias"], p.running("bn2.running_mean"), p.running("bn2.running_var"), bn);
  h = maxpool2d(relu(h), spec.pool);
  h = reshape(h, {n, spec.flat_size()});
  h = relu(linear(h, p["fc.weight"], p["fc.bias"]));
  return heads(spec, p, h);
}

// batch: N x features (newest daily vector, already normalized).
template <class T>
PolicyOutputVars<T> mlp_forward(const PolicySpec& spec, BoundParameters<T>& p, const Var<T>& batch) {
  const auto& s = batch.shape();
  if (spec.kind != PolicyKind::kMlp || s.size() != 2 || s[1] != spec.features) {
    throw ShapeError("mlp_forward: expected [N," + std::to_string(spec.features) + "], got " + shape_str(s));
  }
  Var<T> h = batch;
  for (std::size_t l = 0; l < spec.mlp_layers; ++l) {
    const std::string prefix = "mlp." + std::to_string(l);
    h = tanh(linear(h, p[prefix + ".weight"], p[prefix + ".bias"]));
  }
  return heads(spec, p, h);
}

// Dispatches on spec.kind; `obs` holds N flattened observations.
template <class T>
PolicyOutputVars<T> policy_forward(const PolicySpec& spec, BoundParameters<T>& p, std::vector<T> obs, std::size_t n,
                                   const BatchNormOptions& bn) {
  if (obs.size() != n * spec.observation_size()) throw ShapeError("policy_forward: observation batch size mismatch");
  if (spec.kind == PolicyKind::kCnn) {
    return cnn_forward(spec, p, Var<T>::constant(Tensor<T>({n, 1, spec.window, spec.features}, std::move(obs))), bn);
  }
  return mlp_forward(spec, p, Var<T>::constant(Tensor<T>({n, spec.features}, std::move(obs))));
}

template <class T>
std::vector<GaussianPolicyOutput> to_outputs(const PolicyOutputVars<T>& v) {
  const std::size_t n = v.value.size(), a = v.log_std.size();
  std::vector<GaussianPolicyOutput> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    out[r].mean.resize(a);
    out[r].log_std.resize(a);
    for (std::size_t d = 0; d < a; ++d) {
      out[r].mean[d] = static_cast<double>(v.mean.value().data[r * a + d]);
      out[r].log_std[d] = static_cast<double>(v.log_std.value().data[d]);
    }
    out[r].value = static_cast<double>(v.value.value().data[r]);
  }
  return out;
}

inline double gaussian_log_density(std::span<const double> action, const GaussianPolicyOutput& out) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t d = 0; d < action.size(); ++d) {
    const double z = (action[d] - out.mean[d]) / std::exp(out.log_std[d]);
    lp += -0.5 * z * z - out.log_std[d] - half_log_2pi;
  }
  return lp;
}

struct SampledAction {
  std::vector<double> action;  // unclamped; the environment clamps on entry
  double log_prob = 0.0;
};

inline SampledAction sample_action(const GaussianPolicyOutput& out, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SampledAction s;
  s.action.resize(out.mean.size());
  for (std::size_t d = 0; d < out.mean.size(); ++d) s.action[d] = out.mean[d] + std::exp(out.log_std[d]) * normal(rng);
  s.log_prob = gaussian_log_density(s.action, out);
  return s;
}

// A network plus the input normalization it was trained with.
template <class T>
class Policy {
 public:
  Policy(PolicySpec spec, Parameters<T> params) : spec_(spec), params_(std::move(params)) { spec_.validate(); }
  Policy(PolicySpec spec, std::uint64_t seed) : Policy(spec, init_params<T>(spec, seed)) {}

  const PolicySpec& spec() const { return spec_; }
  const Parameters<T>& params() const { return params_; }
  Parameters<T>& params() { return params_; }

  void set_normalization(const features::NormalizationStats& stats) {
    if (stats.mean.size() != spec_.features || stats.std.size() != spec_.features) {
      throw Error("normalization stats width does not match policy features");
    }
    auto& m = params_.at("input.mean");
    auto& s = params_.at("input.std");
    for (std::size_t i = 0; i < spec_.features; ++i) {
      m.data[i] = static_cast<T>(stats.mean[i]);
      s.data[i] = static_cast<T>(stats.std[i]);
    }
  }

  features::NormalizationStats normalization() const {
    features::NormalizationStats st;
    for (T v : params_.at("input.mean").data) st.mean.push_back(static_cast<double>(v));
    for (T v : params_.at("input.std").data) st.std.push_back(static_cast<double>(v));
    return st;
  }

  // Normalized network input for one window: the full matrix for the CNN, the
  // newest row for the MLP.
  std::vector<T> observe(const features::StateMatrix& m) const {
    if (m.cols() != spec_.features || (spec_.kind == PolicyKind::kCnn && m.rows() != spec_.window)) {
      throw ShapeError("window " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       " does not match policy input " + std::to_string(spec_.window) + "x" +
                       std::to_string(spec_.features));
    }
    const auto& mean = params_.at("input.mean").data;
    const auto& sd = params_.at("input.std").data;
    const std::size_t first = spec_.kind == PolicyKind::kCnn ? 0 : m.rows() - 1;
    std::vector<T> out;
    out.reserve(spec_.observation_size());
    for (std::size_t r = first; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        const double denom = std::max(static_cast<double>(sd[c]), features::kNormEpsilon);
        out.push_back(static_cast<T>((m(r, c) - static_cast<double>(mean[c])) / denom));
      }
    }
    return out;
  }

  // Eval-mode output for one observation; does not touch running statistics.
  GaussianPolicyOutput act(const std::vector<T>& obs) const {
    BoundParameters<T> bound(params_);
    return to_outputs(policy_forward(spec_, bound, obs, 1, {BatchNormMode::kEval})).front();
  }

 private:
  PolicySpec spec_;
  Parameters<T> params_;
};

}  // namespace mtrader::nets
