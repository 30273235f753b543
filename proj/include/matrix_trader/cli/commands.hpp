#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "matrix_trader/algo/trainer.hpp"
#include "matrix_trader/cli/config.hpp"
#include "matrix_trader/data/dataset_io.hpp"
#include "matrix_trader/nets/checkpoint.hpp"

namespace mtrader::cli {

namespace fs = std::filesystem;

// A dataset and the index of its first test day.
struct PreparedData {
  std::shared_ptr<const data::MarketDataset> full;
  std::size_t cut = 0;

  std::shared_ptr<const data::MarketDataset> train() const {
    return std::make_shared<const data::MarketDataset>(full->slice(0, cut));
  }

  // Test days plus the window-1 days before them, so the first trade happens
  // on the first test day.
  std::shared_ptr<const data::MarketDataset> test(std::size_t window) const {
    if (cut + 1 < window) {
      throw DataError("test split starts on day " + std::to_string(cut) + ", before a full " +
                      std::to_string(window) + "-day window is available");
    }
    return std::make_shared<const data::MarketDataset>(full->slice(cut + 1 - window, full->days()));
  }

  std::shared_ptr<const data::MarketDataset> split(const std::string& which, std::size_t window) const {
    if (which == "train") return train();
    if (which == "test") return test(window);
    if (which == "all") return full;
    throw ConfigError("unknown split '" + which + "' (train|test|all)");
  }
};

inline data::MarketDataset build_dataset(const DataConfig& d) {
  if (!d.synthetic()) return data::load_dataset(d.path);
  data::SyntheticParams p;
  p.trend_drift = d.drift;
  p.min_vol = d.min_vol;
  p.max_vol = d.max_vol;
  return data::generate_synthetic_market(d.seed, d.days, d.tickers, d.regime, p);
}

inline PreparedData prepare_data(const DataConfig& d) {
  PreparedData out;
  out.full = std::make_shared<const data::MarketDataset>(build_dataset(d));
  const auto& cal = out.full->calendar();
  if (!d.split_date.empty()) {
    const Date boundary = Date::parse(d.split_date);
    while (out.cut < cal.size() && cal[out.cut] < boundary) ++out.cut;
  } else {
    out.cut = static_cast<std::size_t>(d.train_fraction * static_cast<double>(cal.size()));
  }
  if (out.cut == 0 || out.cut >= cal.size()) {
    throw DataError("train/test split leaves an empty side (" + std::to_string(out.cut) + " of " +
                    std::to_string(cal.size()) + " days in train)");
  }
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto out = mtrader::detail::open_output(path.string());
  out << text;
}

// ingest: raw CSVs -> dataset directory.
inline data::MarketDataset cmd_ingest(const std::string& prices_path, const std::string& fundamentals_path,
                                      const fs::path& out, const std::vector<std::string>& tickers = {}) {
  const auto prices = data::load_prices(prices_path, tickers);
  for (const auto& t : prices.unrequested) spdlog::info("skipping unrequested ticker {}", t);
  const auto fundamentals = data::load_fundamentals(fundamentals_path);
  auto ds = data::align_and_fill(prices.series, fundamentals);
  data::save_dataset(ds, out);
  spdlog::info("wrote {} tickers x {} days to {}", ds.num_tickers(), ds.days(), out.string());
  return ds;
}

// synth: synthetic market as a dataset directory, plus the raw CSVs that
// `ingest` turns back into the same dataset under raw/.
inline data::MarketDataset cmd_synth(const DataConfig& d, const fs::path& out) {
  if (!d.synthetic()) throw ConfigError("synth needs a synthetic [data] section (data.path must be empty)");
  data::SyntheticParams p;
  p.trend_drift = d.drift;
  p.min_vol = d.min_vol;
  p.max_vol = d.max_vol;
  const auto src = data::generate_synthetic_sources(d.seed, d.days, d.tickers, d.regime, p);
  auto ds = data::align_and_fill(src.prices, src.fundamentals);
  data::save_dataset(ds, out);
  fs::create_directories(out / "raw");
  data::write_prices_csv(src.prices, out / "raw" / "prices.csv");
  data::write_fundamentals_csv(src.fundamentals, out / "raw" / "fundamentals.csv");
  spdlog::info("wrote synthetic {} market: {} tickers x {} days to {}", data::regime_name(d.regime),
               ds.num_tickers(), ds.days(), out.string());
  return ds;
}

struct TrainOutcome {
  algo::TrainResult<float> result;
  fs::path checkpoint;
  fs::path history;
};

inline nlohmann::json checkpoint_spec(const ExperimentConfig& c, const nets::PolicySpec& fitted,
                                      const data::MarketDataset& ds) {
  return {{"policy", nets::to_json(fitted)},
          {"env", to_json(c.env)},
          {"algorithm", algo::algorithm_name(c.algo.algorithm)},
          {"tickers", ds.tickers()},
          {"config", resolved_config_text(c)}};
}

inline algo::UpdateCallback progress_logger(const std::string& label, std::size_t updates) {
  const std::size_t every = std::max<std::size_t>(1, updates / 20);
  return [label, updates, every](const algo::HistoryRow& row, const algo::UpdateStats& s) {
    const auto level = row.update_idx % every == 0 || row.update_idx == updates ? spdlog::level::info
                                                                                 : spdlog::level::debug;
    spdlog::log(level, "{} update {}/{} steps {} reward {:.4f} value {:.2f} cost {:.2f} actor {:.4g} critic {:.4g}",
                label, row.update_idx, updates, row.env_steps, row.episode_reward, row.portfolio_value,
                row.total_cost, s.actor_loss, s.critic_loss);
  };
}

// train: writes checkpoint.tar, history.csv and config.resolved.ini into `out`.
inline TrainOutcome cmd_train(const ExperimentConfig& c, const fs::path& out, const PreparedData* data = nullptr) {
  const PreparedData owned = data ? PreparedData{} : prepare_data(c.data);
  const PreparedData& pd = data ? *data : owned;
  const auto train_ds = pd.train();
  fs::create_directories(out);
  write_text(out / "config.resolved.ini", resolved_config_text(c));

  const std::string label = nets::policy_kind_name(c.policy.kind) + "/" + algo::algorithm_name(c.algo.algorithm);
  spdlog::info("{}: training on {} days x {} tickers, {} updates of {} steps", label, train_ds->days(),
               train_ds->num_tickers(), c.algo.updates(), c.algo.horizon);
  auto result =
      algo::train<float>(train_ds, c.env, c.policy, c.algo, c.run.seed, progress_logger(label, c.algo.updates()));

  TrainOutcome o{std::move(result), out / "checkpoint.tar", out / "history.csv"};
  const nlohmann::json meta{{"seed", c.run.seed},
                            {"env_steps", o.result.env_steps},
                            {"updates", o.result.history.size()}};
  nets::save_checkpoint(o.checkpoint.string(), checkpoint_spec(c, o.result.policy.spec(), *train_ds),
                        o.result.policy.params(), meta);
  algo::write_history_csv(o.result.history, o.history.string());
  return o;
}

struct LoadedCheckpoint {
  nets::Policy<float> policy;
  env::EnvConfig env;
  std::vector<std::string> tickers;
  ExperimentConfig config;
};

inline LoadedCheckpoint load_trained(const fs::path& path) {
  auto ck = nets::load_checkpoint(path.string());
  try {
    auto spec = nets::policy_spec_from_json(ck.spec.at("policy"));
    return {nets::Policy<float>(spec, std::move(ck.params)), env_config_from_json(ck.spec.at("env")),
            ck.spec.at("tickers").get<std::vector<std::string>>(),
            parse_config(ck.spec.at("config").get<std::string>(), path.string() + ":spec.json")};
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed spec.json: " + e.what());
  }
}

inline void write_evaluation(const algo::EvaluationResult& r, const fs::path& out, const std::string& prefix = "") {
  fs::create_directories(out);
  write_text(out / (prefix + "report.json"), metrics::to_json(r.report).dump(2) + "\n");
  metrics::write_equity_csv(r.dates, r.equity, (out / (prefix + "equity.csv")).string());
  env::write_trade_log(r.trades, (out / (prefix + "trades.csv")).string());
}

// evaluate: greedy episode over one split of the checkpoint's own dataset, or
// of `data_dir` when given. Writes report.json, equity.csv and trades.csv.
inline algo::EvaluationResult cmd_evaluate(const fs::path& checkpoint, const std::optional<fs::path>& data_dir,
                                           const std::string& which, const fs::path& out) {
  const auto ck = load_trained(checkpoint);
  DataConfig d = ck.config.data;
  if (data_dir) d.path = data_dir->string();
  const auto pd = prepare_data(d);
  if (pd.full->tickers() != ck.tickers) {
    throw Error("dataset has " + std::to_string(pd.full->num_tickers()) + " tickers; checkpoint was trained on " +
                std::to_string(ck.tickers.size()) + (pd.full->num_tickers() == ck.tickers.size()
                                                         ? " with different names"
                                                         : ""));
  }
  const auto ds = pd.split(which, ck.env.window);
  auto r = algo::evaluate(ck.policy, ds, ck.env);
  write_evaluation(r, out);
  return r;
}

inline constexpr const char* kComparisonFields[] = {"reward", "value", "sharpe", "cost"};

struct CompareCell {
  nets::PolicyKind kind;
  algo::Algorithm algorithm;
  std::string name() const { return nets::policy_kind_name(kind) + "_" + algo::algorithm_name(algorithm); }
};

inline std::vector<CompareCell> compare_cells() {
  return {{nets::PolicyKind::kCnn, algo::Algorithm::kPpo},
          {nets::PolicyKind::kCnn, algo::Algorithm::kA2c},
          {nets::PolicyKind::kMlp, algo::Algorithm::kPpo},
          {nets::PolicyKind::kMlp, algo::Algorithm::kA2c}};
}

// Cell configuration: the cell's algorithm defaults plus explicit [algo]
// overrides, with horizon and total steps shared so every cell reports the
// same number of updates.
inline ExperimentConfig cell_config(const ExperimentConfig& c, const CompareCell& cell) {
  ExperimentConfig out = c;
  out.policy.kind = cell.kind;
  out.algo = c.algo_for(cell.algorithm);
  out.algo.horizon = c.algo.horizon;
  out.algo.total_steps = c.algo.total_steps;
  out.algo_explicit.clear();
  return out;
}

inline std::string comparison_header(const std::vector<std::string>& cells) {
  std::string h = "update_idx,env_steps";
  for (const auto& c : cells) {
    for (const char* f : kComparisonFields) h += "," + c + "_" + f;
  }
  return h;
}

inline void write_comparison_csv(const std::vector<std::string>& cells,
                                 const std::vector<std::vector<algo::HistoryRow>>& histories, const fs::path& path) {
  using mtrader::detail::format_double;
  auto out = mtrader::detail::open_output(path.string());
  out << comparison_header(cells) << '\n';
  const std::size_t rows = histories.empty() ? 0 : histories.front().size();
  for (std::size_t i = 0; i < rows; ++i) {
    out << histories.front()[i].update_idx << ',' << histories.front()[i].env_steps;
    for (const auto& h : histories) {
      const auto& r = h.at(i);
      out << ',' << format_double(r.episode_reward) << ',' << format_double(r.portfolio_value) << ','
          << format_double(r.sharpe) << ',' << format_double(r.total_cost);
    }
    out << '\n';
  }
}

struct CompareOutcome {
  std::vector<std::string> cells;
  std::vector<std::vector<algo::HistoryRow>> histories;
};

// compare: trains the four policy x algorithm cells on one dataset and seed.
// Each cell directory holds history.csv, checkpoint.tar, config.resolved.ini,
// equity.csv and trades.csv of its last tracked training episode, and
// test_report.json / test_equity.csv / test_trades.csv of a greedy test run.
// manifest.json and comparison.csv are rewritten after every cell, so a
// failure leaves the completed cells in place.
inline CompareOutcome cmd_compare(const ExperimentConfig& c, const fs::path& out) {
  const auto pd = prepare_data(c.data);
  fs::create_directories(out);
  write_text(out / "config.resolved.ini", resolved_config_text(c));
  CompareOutcome result;
  nlohmann::json manifest{{"cells", nlohmann::json::array()}, {"completed", nlohmann::json::array()}};
  for (const auto& cell : compare_cells()) manifest["cells"].push_back(cell.name());
  auto flush = [&] {
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    write_comparison_csv(result.cells, result.histories, out / "comparison.csv");
  };

  for (const auto& cell : compare_cells()) {
    const fs::path dir = out / cell.name();
    try {
      const auto cfg = cell_config(c, cell);
      auto trained = cmd_train(cfg, dir, &pd);
      const auto& ep = trained.result.last_episode;
      metrics::write_equity_csv(ep.dates(), ep.equity(), (dir / "equity.csv").string());
      env::write_trade_log(ep.trade_log(), (dir / "trades.csv").string());
      const auto eval = algo::evaluate(trained.result.policy, pd.test(cfg.env.window), cfg.env);
      write_evaluation(eval, dir, "test_");
      result.cells.push_back(cell.name());
      result.histories.push_back(std::move(trained.result.history));
      manifest["completed"].push_back(cell.name());
    } catch (const std::exception& e) {
      manifest["failed"] = {{"cell", cell.name()}, {"error", e.what()}};
      flush();
      throw;
    }
    flush();
  }
  return result;
}

}  // namespace mtrader::cli
