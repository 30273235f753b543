#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "matrix_trader/algo/config.hpp"
#include "matrix_trader/data/synthetic.hpp"
#include "matrix_trader/env/trading_env.hpp"
#include "matrix_trader/nets/policy.hpp"

namespace mtrader::cli {

// Synthetic market unless `path` names a dataset directory.
struct DataConfig {
  std::string path;
  data::Regime regime = data::Regime::kMixed;
  std::size_t tickers = 30;
  std::size_t days = 2016;
  std::uint64_t seed = 0;
  double drift = data::SyntheticParams{}.trend_drift;
  double min_vol = data::SyntheticParams{}.min_vol;
  double max_vol = data::SyntheticParams{}.max_vol;
  std::string split_date;  // empty: use train_fraction
  double train_fraction = 0.8;

  bool synthetic() const { return path.empty(); }
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ExperimentConfig {
  DataConfig data;
  env::EnvConfig env;
  nets::PolicySpec policy;
  algo::AlgoConfig algo;
  RunConfig run;
  // [algo] keys given explicitly; compare applies only these on top of each
  // algorithm's own defaults. Not part of equality.
  std::set<std::string> algo_explicit;

  // Defaults of `a` with the explicit [algo] overrides applied.
  algo::AlgoConfig algo_for(algo::Algorithm a) const;

  friend bool operator==(const ExperimentConfig& x, const ExperimentConfig& y) {
    return x.data == y.data && x.env.initial_balance == y.env.initial_balance && x.env.hmax == y.env.hmax &&
           x.env.cost_rate == y.env.cost_rate && x.env.reward_scale == y.env.reward_scale &&
           x.env.turbulence_lookback == y.env.turbulence_lookback && x.env.window == y.env.window &&
           x.policy == y.policy && x.algo == y.algo && x.run == y.run;
  }
};

namespace detail {

using boost::property_tree::ptree;

inline bool parse_value(const std::string& s, std::string& out) {
  out = s;
  return true;
}

inline bool parse_value(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

template <class Int>
  requires std::is_integral_v<Int>
bool parse_value(const std::string& s, Int& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_value(const std::string& s, bool& out) {
  if (s == "true" || s == "1") return (out = true), true;
  if (s == "false" || s == "0") return (out = false), true;
  return false;
}

template <class Enum, class Parse>
bool parse_enum(const std::string& s, Enum& out, Parse parse) {
  try {
    out = parse(s);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// Reads one section, remembering which keys were consumed and every problem.
class SectionReader {
 public:
  SectionReader(const ptree* section, std::string name, std::vector<std::string>& problems)
      : section_(section), name_(std::move(name)), problems_(problems) {}

  template <class T>
  bool get(const std::string& key, T& out) {
    const auto* raw = lookup(key);
    if (!raw) return false;
    if (!parse_value(*raw, out)) problems_.push_back(name_ + "." + key + ": cannot parse '" + *raw + "'");
    return true;
  }

  template <class Enum, class Parse>
  bool get_enum(const std::string& key, Enum& out, Parse parse) {
    const auto* raw = lookup(key);
    if (!raw) return false;
    if (!parse_enum(*raw, out, parse)) problems_.push_back(name_ + "." + key + ": invalid value '" + *raw + "'");
    return true;
  }

  void reject_unused() const {
    if (!section_) return;
    for (const auto& [key, child] : *section_) {
      if (!used_.contains(key)) problems_.push_back("unknown key '" + key + "' in [" + name_ + "]");
    }
  }

 private:
  const std::string* lookup(const std::string& key) {
    if (!section_) return nullptr;
    const auto it = section_->find(key);
    if (it == section_->not_found()) return nullptr;
    used_.insert(key);
    return &it->second.data();
  }

  const ptree* section_;
  std::string name_;
  std::vector<std::string>& problems_;
  std::set<std::string> used_;
};

inline void read_algo_overrides(SectionReader& s, algo::AlgoConfig& a, std::set<std::string>* explicit_keys) {
  auto note = [&](const char* key, bool present) {
    if (present && explicit_keys) explicit_keys->insert(key);
  };
  note("gamma", s.get("gamma", a.gamma));
  note("gae_lambda", s.get("gae_lambda", a.gae_lambda));
  note("clip", s.get("clip", a.clip));
  note("epochs", s.get("epochs", a.epochs));
  note("minibatch", s.get("minibatch", a.minibatch));
  note("vf_coef", s.get("vf_coef", a.vf_coef));
  note("ent_coef", s.get("ent_coef", a.ent_coef));
  note("learning_rate", s.get("learning_rate", a.learning_rate));
  note("horizon", s.get("horizon", a.horizon));
  note("max_grad_norm", s.get("max_grad_norm", a.max_grad_norm));
  note("total_steps", s.get("total_steps", a.total_steps));
  note("normalize_advantages", s.get("normalize_advantages", a.normalize_advantages));
  note("adam_beta1", s.get("adam_beta1", a.adam_beta1));
  note("adam_beta2", s.get("adam_beta2", a.adam_beta2));
  note("adam_eps", s.get("adam_eps", a.adam_eps));
  note("rms_alpha", s.get("rms_alpha", a.rms_alpha));
  note("rms_eps", s.get("rms_eps", a.rms_eps));
}

inline void apply_override(algo::AlgoConfig& a, const algo::AlgoConfig& from, const std::string& key) {
  if (key == "gamma") a.gamma = from.gamma;
  else if (key == "gae_lambda") a.gae_lambda = from.gae_lambda;
  else if (key == "clip") a.clip = from.clip;
  else if (key == "epochs") a.epochs = from.epochs;
  else if (key == "minibatch") a.minibatch = from.minibatch;
  else if (key == "vf_coef") a.vf_coef = from.vf_coef;
  else if (key == "ent_coef") a.ent_coef = from.ent_coef;
  else if (key == "learning_rate") a.learning_rate = from.learning_rate;
  else if (key == "horizon") a.horizon = from.horizon;
  else if (key == "max_grad_norm") a.max_grad_norm = from.max_grad_norm;
  else if (key == "total_steps") a.total_steps = from.total_steps;
  else if (key == "normalize_advantages") a.normalize_advantages = from.normalize_advantages;
  else if (key == "adam_beta1") a.adam_beta1 = from.adam_beta1;
  else if (key == "adam_beta2") a.adam_beta2 = from.adam_beta2;
  else if (key == "adam_eps") a.adam_eps = from.adam_eps;
  else if (key == "rms_alpha") a.rms_alpha = from.rms_alpha;
  else if (key == "rms_eps") a.rms_eps = from.rms_eps;
}

inline std::string fmt(double v) { return mtrader::detail::format_double(v); }

}  // namespace detail

inline algo::AlgoConfig ExperimentConfig::algo_for(algo::Algorithm a) const {
  auto out = algo::AlgoConfig::defaults(a);
  for (const auto& key : algo_explicit) detail::apply_override(out, algo, key);
  return out;
}

// Parses INI text. Every unknown section or key and every unparsable or
// out-of-range value is collected into a single ConfigError.
inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  using detail::ptree;
  ptree root;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  std::vector<std::string> problems;
  const std::set<std::string> sections{"data", "env", "policy", "algo", "run"};
  for (const auto& [name, child] : root) {
    if (!sections.contains(name)) {
      problems.push_back(child.empty() ? "unknown key '" + name + "' outside any section"
                                       : "unknown section [" + name + "]");
    }
  }
  auto section = [&](const char* name) -> const ptree* {
    const auto it = root.find(name);
    return it == root.not_found() ? nullptr : &it->second;
  };

  ExperimentConfig c;
  detail::SectionReader d(section("data"), "data", problems);
  d.get("path", c.data.path);
  d.get_enum("regime", c.data.regime, data::parse_regime);
  d.get("tickers", c.data.tickers);
  d.get("days", c.data.days);
  d.get("seed", c.data.seed);
  d.get("drift", c.data.drift);
  d.get("min_vol", c.data.min_vol);
  d.get("max_vol", c.data.max_vol);
  d.get("split_date", c.data.split_date);
  d.get("train_fraction", c.data.train_fraction);
  d.reject_unused();

  detail::SectionReader e(section("env"), "env", problems);
  e.get("initial_balance", c.env.initial_balance);
  e.get("hmax", c.env.hmax);
  e.get("cost_rate", c.env.cost_rate);
  e.get("reward_scale", c.env.reward_scale);
  e.get("turbulence_lookback", c.env.turbulence_lookback);
  e.get("window", c.env.window);
  e.reject_unused();

  detail::SectionReader p(section("policy"), "policy", problems);
  p.get_enum("kind", c.policy.kind, nets::parse_policy_kind);
  p.get("conv1_filters", c.policy.conv1_filters);
  p.get("conv2_filters", c.policy.conv2_filters);
  p.get("kernel", c.policy.kernel);
  p.get("pool", c.policy.pool);
  p.get("dense", c.policy.dense);
  p.get("mlp_hidden", c.policy.mlp_hidden);
  p.get("mlp_layers", c.policy.mlp_layers);
  p.reject_unused();

  detail::SectionReader a(section("algo"), "algo", problems);
  algo::Algorithm which = algo::Algorithm::kPpo;
  a.get_enum("algorithm", which, algo::parse_algorithm);
  c.algo = algo::AlgoConfig::defaults(which);
  detail::read_algo_overrides(a, c.algo, &c.algo_explicit);
  a.reject_unused();

  detail::SectionReader r(section("run"), "run", problems);
  r.get("seed", c.run.seed);
  r.get("out", c.run.out);
  r.reject_unused();

  auto check = [&](auto&& validate) {
    try {
      validate();
    } catch (const Error& err) {
      problems.push_back(err.what());
    }
  };
  if (problems.empty()) {
    check([&] { c.env.validate(); });
    check([&] { c.algo.validate(); });
    check([&] {
      if (!c.data.split_date.empty()) Date::parse(c.data.split_date);
      if (!(c.data.train_fraction > 0.0 && c.data.train_fraction < 1.0)) {
        throw ConfigError("data.train_fraction must be in (0, 1)");
      }
      if (c.data.synthetic() && c.data.tickers < 1) throw ConfigError("data.tickers must be >= 1");
    });
  }
  if (!problems.empty()) {
    std::string msg = origin + ": invalid configuration";
    for (const auto& s : problems) msg += "\n  " + s;
    throw ConfigError(msg);
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  auto in = mtrader::detail::open_input(path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

// Every field written out, so loading the result reproduces `c` exactly.
inline std::string resolved_config_text(const ExperimentConfig& c) {
  using detail::fmt;
  std::ostringstream o;
  o << "[data]\n";
  o << "path = " << c.data.path << '\n';
  o << "regime = " << data::regime_name(c.data.regime) << '\n';
  o << "tickers = " << c.data.tickers << '\n';
  o << "days = " << c.data.days << '\n';
  o << "seed = " << c.data.seed << '\n';
  o << "drift = " << fmt(c.data.drift) << '\n';
  o << "min_vol = " << fmt(c.data.min_vol) << '\n';
  o << "max_vol = " << fmt(c.data.max_vol) << '\n';
  o << "split_date = " << c.data.split_date << '\n';
  o << "train_fraction = " << fmt(c.data.train_fraction) << '\n';
  o << "\n[env]\n";
  o << "initial_balance = " << fmt(c.env.initial_balance) << '\n';
  o << "hmax = " << c.env.hmax << '\n';
  o << "cost_rate = " << fmt(c.env.cost_rate) << '\n';
  o << "reward_scale = " << fmt(c.env.reward_scale) << '\n';
  o << "turbulence_lookback = " << c.env.turbulence_lookback << '\n';
  o << "window = " << c.env.window << '\n';
  const auto& p = c.policy;
  o << "\n[policy]\n";
  o << "kind = " << nets::policy_kind_name(p.kind) << '\n';
  o << "conv1_filters = " << p.conv1_filters << '\n';
  o << "conv2_filters = " << p.conv2_filters << '\n';
  o << "kernel = " << p.kernel << '\n';
  o << "pool = " << p.pool << '\n';
  o << "dense = " << p.dense << '\n';
  o << "mlp_hidden = " << p.mlp_hidden << '\n';
  o << "mlp_layers = " << p.mlp_layers << '\n';
  const auto& a = c.algo;
  o << "\n[algo]\n";
  o << "algorithm = " << algo::algorithm_name(a.algorithm) << '\n';
  o << "gamma = " << fmt(a.gamma) << '\n';
  o << "gae_lambda = " << fmt(a.gae_lambda) << '\n';
  o << "clip = " << fmt(a.clip) << '\n';
  o << "epochs = " << a.epochs << '\n';
  o << "minibatch = " << a.minibatch << '\n';
  o << "vf_coef = " << fmt(a.vf_coef) << '\n';
  o << "ent_coef = " << fmt(a.ent_coef) << '\n';
  o << "learning_rate = " << fmt(a.learning_rate) << '\n';
  o << "horizon = " << a.horizon << '\n';
  o << "max_grad_norm = " << fmt(a.max_grad_norm) << '\n';
  o << "total_steps = " << a.total_steps << '\n';
  o << "normalize_advantages = " << (a.normalize_advantages ? "true" : "false") << '\n';
  o << "adam_beta1 = " << fmt(a.adam_beta1) << '\n';
  o << "adam_beta2 = " << fmt(a.adam_beta2) << '\n';
  o << "adam_eps = " << fmt(a.adam_eps) << '\n';
  o << "rms_alpha = " << fmt(a.rms_alpha) << '\n';
  o << "rms_eps = " << fmt(a.rms_eps) << '\n';
  o << "\n[run]\n";
  o << "seed = " << c.run.seed << '\n';
  o << "out = " << c.run.out << '\n';
  return o.str();
}

inline nlohmann::json to_json(const env::EnvConfig& e) {
  return {{"initial_balance", e.initial_balance}, {"hmax", e.hmax},
          {"cost_rate", e.cost_rate},             {"reward_scale", e.reward_scale},
          {"turbulence_lookback", e.turbulence_lookback}, {"window", e.window}};
}

inline env::EnvConfig env_config_from_json(const nlohmann::json& j) {
  env::EnvConfig e;
  e.initial_balance = j.at("initial_balance");
  e.hmax = j.at("hmax");
  e.cost_rate = j.at("cost_rate");
  e.reward_scale = j.at("reward_scale");
  e.turbulence_lookback = j.at("turbulence_lookback");
  e.window = j.at("window");
  e.validate();
  return e;
}

}  // namespace mtrader::cli
