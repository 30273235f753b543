#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "matrix_trader/cli/commands.hpp"

namespace {

using namespace mtrader;

void setup_logging(bool quiet) {
  auto logger = spdlog::stderr_color_mt("matrix_trader");
  logger->set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
  if (const char* env = std::getenv("MATRIX_TRADER_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

cli::ExperimentConfig load_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                          const std::optional<std::string>& out) {
  auto cfg = cli::load_config(path);
  if (seed) cfg.run.seed = *seed;
  if (out) cfg.run.out = *out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep reinforcement learning stock trading laboratory"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Only log warnings and errors");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  auto* ingest = app.add_subcommand("ingest", "Build a dataset directory from price and fundamentals CSVs");
  std::string prices_path, fundamentals_path;
  std::vector<std::string> tickers;
  ingest->add_option("--prices", prices_path, "date,ticker,close CSV")->required();
  ingest->add_option("--fundamentals", fundamentals_path, "Quarterly fundamentals CSV")->required();
  ingest->add_option("--tickers", tickers, "Restrict to these tickers")->delimiter(',');
  ingest->add_option("--out", out, "Dataset directory")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic market as a dataset directory");
  synth->add_option("--config", config_path, "Config whose [data] section describes the market");
  std::optional<std::size_t> n_tickers, n_days;
  std::optional<std::string> regime;
  synth->add_option("--tickers", n_tickers, "Number of tickers");
  synth->add_option("--days", n_days, "Number of trading days");
  synth->add_option("--regime", regime, "uptrend|downtrend|mixed|random-walk");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--out", out, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train one policy");
  train->add_option("--config", config_path, "Experiment config (INI)")->required();
  train->add_option("--seed", seed, "Override run.seed");
  train->add_option("--out", out, "Override run.out");

  auto* evaluate = app.add_subcommand("evaluate", "Greedy evaluation of a checkpoint");
  std::string checkpoint, split = "test";
  std::optional<std::string> data_dir;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.tar from train")->required();
  evaluate->add_option("--data", data_dir, "Dataset directory (default: the checkpoint's own data)");
  evaluate->add_option("--split", split, "train|test|all")->check(CLI::IsMember({"train", "test", "all"}));
  evaluate->add_option("--out", out, "Output directory (default: next to the checkpoint)");

  auto* compare = app.add_subcommand("compare", "Train cnn/mlp x ppo/a2c and join their curves");
  compare->add_option("--config", config_path, "Experiment config (INI)")->required();
  compare->add_option("--seed", seed, "Override run.seed");
  compare->add_option("--out", out, "Override run.out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  setup_logging(quiet);

  try {
    if (*ingest) {
      cli::cmd_ingest(prices_path, fundamentals_path, *out, tickers);
    } else if (*synth) {
      cli::DataConfig d = config_path.empty() ? cli::DataConfig{} : cli::load_config(config_path).data;
      if (n_tickers) d.tickers = *n_tickers;
      if (n_days) d.days = *n_days;
      if (regime) d.regime = data::parse_regime(*regime);
      if (seed) d.seed = *seed;
      cli::cmd_synth(d, *out);
    } else if (*train) {
      const auto cfg = load_with_overrides(config_path, seed, out);
      const auto o = cli::cmd_train(cfg, cfg.run.out);
      spdlog::info("wrote {} and {}", o.checkpoint.string(), o.history.string());
    } else if (*evaluate) {
      const std::filesystem::path dir =
          out ? std::filesystem::path(*out) : std::filesystem::path(checkpoint).parent_path() / ("eval_" + split);
      const auto r = cli::cmd_evaluate(checkpoint, data_dir ? std::optional<std::filesystem::path>(*data_dir)
                                                            : std::nullopt,
                                       split, dir);
      std::cout << metrics::to_json(r.report).dump(2) << '\n';
    } else if (*compare) {
      const auto cfg = load_with_overrides(config_path, seed, out);
      cli::cmd_compare(cfg, cfg.run.out);
      spdlog::info("wrote {}/comparison.csv", cfg.run.out);
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
