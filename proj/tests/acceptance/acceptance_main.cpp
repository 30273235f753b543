// One PASS/FAIL line per acceptance criterion. Arguments select criteria by
// number; none runs all eleven. Exit status is nonzero if any selected
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

#include <spdlog/spdlog.h>

#include "../unit/grad_check.hpp"
#include "matrix_trader/cli/commands.hpp"

namespace {

using namespace mtrader;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

fs::path scratch(const std::string& tag) {
  const fs::path dir = fs::path(MATRIX_TRADER_TEST_TMP) / ("acceptance." + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

cli::ExperimentConfig source_config(const char* name) {
  return cli::load_config(fs::path(MATRIX_TRADER_SOURCE_DIR) / "configs" / name);
}

// Shared by criteria 1 and 2: 1000 random 200-step episodes on a 5-ticker market.
struct EpisodeAudit {
  double state_err = 0.0;     // balance and value vs trade-log replay
  bool holdings_exact = true;
  double telescope_err = 0.0;
  double seconds = 0.0;
};

const EpisodeAudit& episode_audit() {
  static const EpisodeAudit audit = [] {
    EpisodeAudit a;
    const auto t0 = std::chrono::steady_clock::now();
    const auto ds = std::make_shared<const data::MarketDataset>(
        data::generate_synthetic_market(1001, 400, 5, data::Regime::kMixed));
    env::EnvConfig cfg;
    env::TradingEnv e(ds, cfg);
    std::mt19937_64 rng(2002);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::vector<double> action(5);
    for (int episode = 0; episode < 1000; ++episode) {
      const std::size_t start = rng() % (ds->days() - cfg.window - 200);
      e.reset(start);
      const double v0 = e.value();
      double reward_sum = 0.0;
      for (int t = 0; t < 200; ++t) {
        for (auto& x : action) x = u(rng);
        reward_sum += e.step(action).reward;
      }
      // Replay: cash moves by notional and a proportional fee per logged trade.
      double balance = cfg.initial_balance;
      std::vector<std::int64_t> holdings(5, 0);
      for (const auto& row : e.trade_log()) {
        const auto d = static_cast<std::size_t>(
            std::find(ds->tickers().begin(), ds->tickers().end(), row.ticker) - ds->tickers().begin());
        const double notional = static_cast<double>(std::llabs(row.delta_shares)) * row.price;
        balance += row.delta_shares > 0 ? -notional * (1.0 + cfg.cost_rate) : notional * (1.0 - cfg.cost_rate);
        holdings[d] += row.delta_shares;
      }
      const auto last = ds->prices_on(e.portfolio().day_index);
      double value = balance;
      for (std::size_t d = 0; d < 5; ++d) value += static_cast<double>(holdings[d]) * last[d];
      a.state_err = std::max({a.state_err, rel(balance, e.portfolio().balance), rel(value, e.value())});
      a.holdings_exact = a.holdings_exact && holdings == e.portfolio().holdings;
      a.telescope_err = std::max(a.telescope_err, rel(reward_sum, cfg.reward_scale * (e.value() - v0)));
    }
    a.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return a;
  }();
  return audit;
}

Outcome accounting_oracle() {
  const auto& a = episode_audit();
  return {a.state_err <= 1e-9 && a.holdings_exact && a.seconds < 30.0,
          "max rel err " + fmt("%.3g", a.state_err) + ", holdings " + (a.holdings_exact ? "exact" : "MISMATCH") +
              ", " + fmt("%.1f", a.seconds) + " s"};
}

Outcome reward_telescoping() {
  const auto& a = episode_audit();
  return {a.telescope_err <= 1e-9, "max rel err " + fmt("%.3g", a.telescope_err)};
}

Outcome window_invariant() {
  const auto ds = std::make_shared<const data::MarketDataset>(
      data::generate_synthetic_market(303, 400, 4, data::Regime::kRandomWalk));
  env::EnvConfig cfg;
  env::TradingEnv e(ds, cfg);
  e.reset(50);
  std::mt19937_64 rng(304);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Portfolio after each step, keyed by the day it is observed on.
  std::map<std::size_t, env::PortfolioState> seen;
  seen[e.portfolio().day_index] = e.portfolio();
  for (int t = 0; t < 200; ++t) {
    e.step(std::vector<double>{u(rng), u(rng), u(rng), u(rng)});
    seen[e.portfolio().day_index] = e.portfolio();
  }
  const auto& m = e.state();
  const std::size_t today = e.portfolio().day_index;
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < 90; ++i) {
    const std::size_t day = today - 89 + i;
    double balance = cfg.initial_balance;
    std::vector<std::int64_t> holdings(4, 0);
    if (auto it = seen.find(day); it != seen.end()) {
      balance = it->second.balance;
      holdings = it->second.holdings;
    }
    std::vector<double> want{balance};
    for (std::size_t d = 0; d < 4; ++d) want.push_back(ds->price(day, d));
    for (std::size_t d = 0; d < 4; ++d) want.push_back(static_cast<double>(holdings[d]));
    for (std::size_t d = 0; d < 4; ++d) {
      for (std::size_t j = 0; j < data::kRatioCount; ++j) want.push_back(ds->ratio(day, d, j));
    }
    bool same = want.size() == m.cols();
    for (std::size_t c = 0; same && c < m.cols(); ++c) same = m(i, c) == want[c];
    mismatched += !same;
  }
  return {mismatched == 0 && m.rows() == 90, std::to_string(90 - mismatched) + "/90 rows exact"};
}

Outcome feature_layout() {
  const features::FeatureLayout layout{30};
  std::vector<int> hits(layout.width(), 0);
  ++hits.at(features::FeatureLayout::balance_index());
  for (std::size_t d = 0; d < 30; ++d) {
    ++hits.at(layout.price_index(d));
    ++hits.at(layout.holding_index(d));
    for (std::size_t j = 0; j < data::kRatioCount; ++j) ++hits.at(layout.ratio_index(d, j));
  }
  bool bijective = std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
  // Round trip through a built vector: every slot reads back what was placed.
  std::vector<double> prices(30), ratios(30 * data::kRatioCount);
  std::vector<std::int64_t> holdings(30);
  for (std::size_t d = 0; d < 30; ++d) {
    prices[d] = 1000.0 + static_cast<double>(d);
    holdings[d] = static_cast<std::int64_t>(2000 + d);
    for (std::size_t j = 0; j < data::kRatioCount; ++j) ratios[d * data::kRatioCount + j] = 3000.0 + 100.0 * d + j;
  }
  const auto v = features::build_daily_vector(999.0, prices, holdings, ratios);
  bijective = bijective && v[0] == 999.0;
  for (std::size_t d = 0; d < 30; ++d) {
    bijective = bijective && v[layout.price_index(d)] == prices[d] &&
                v[layout.holding_index(d)] == static_cast<double>(holdings[d]);
    for (std::size_t j = 0; j < data::kRatioCount; ++j) {
      bijective = bijective && v[layout.ratio_index(d, j)] == ratios[d * data::kRatioCount + j];
    }
  }
  const std::size_t w = layout.width();
  return {bijective && w == 1 + 30 + 30 + 450 && w == 511 && v.size() == 511,
          "width " + std::to_string(w) + ", every index hit once"};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  nets::PolicySpec spec;
  spec.window = 12;
  spec.features = 17;
  spec.actions = 2;
  spec.conv1_filters = 3;
  spec.conv2_filters = 4;
  spec.dense = 8;
  auto params = nets::init_params<double>(spec, 55);
  std::mt19937_64 rng(56);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& e : params.entries()) {
    if (e.learnable) {
      for (auto& v : e.value.data) v += 0.1 * n(rng);
    }
  }
  algo::LossBatch<double> b;
  b.n = 8;
  b.observations = testing::random_tensor({8 * 12 * 17}, rng).data;
  b.actions = testing::random_tensor({8, 2}, rng, 0.5);
  for (std::size_t i = 0; i < b.n; ++i) {
    b.old_log_probs.push_back(-2.5 + 0.2 * n(rng));
    b.advantages.push_back(n(rng));
    b.returns.push_back(n(rng));
  }
  algo::AlgoConfig cfg;
  cfg.ent_coef = 0.01;
  cfg.clip = 1e6;  // keep the min on one smooth branch
  auto loss = [&](nets::BoundParameters<double>& p) {
    return algo::ppo_loss(spec, p, b, cfg, {nets::BatchNormMode::kTrain}).total;
  };
  const auto r = testing::check_param_gradients(loss, params, 100, 57);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.checked == 100 && r.max_rel_err < 1e-4 && secs < 60.0,
          std::to_string(r.checked) + " coordinates, max rel err " + fmt("%.3g", r.max_rel_err) + ", " +
              fmt("%.2f", secs) + " s"};
}

Outcome gae_oracle() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng() % 64;
    std::vector<double> r(len), v(len);
    std::vector<std::uint8_t> d(len);
    for (std::size_t t = 0; t < len; ++t) {
      r[t] = n(rng);
      v[t] = n(rng);
      d[t] = u(rng) < 0.08;
    }
    const double g = 0.9 + 0.1 * u(rng), l = u(rng), boot = n(rng);
    const auto got = algo::compute_gae(r, v, d, boot, g, l);
    for (std::size_t t = 0; t < len; ++t) {
      // Direct sum of discounted TD errors up to the first episode end.
      double want = 0.0, w = 1.0;
      for (std::size_t k = t; k < len; ++k) {
        const double next = d[k] ? 0.0 : (k + 1 < len ? v[k + 1] : boot);
        want += w * (r[k] + g * next - v[k]);
        if (d[k]) break;
        w *= g * l;
      }
      worst = std::max(worst, std::abs(got.advantages[t] - want));
    }
  }
  return {worst < 1e-10, "200 instances, max abs err " + fmt("%.3g", worst)};
}

Outcome sharpe_checks() {
  std::vector<double> curve{100.0};
  for (int t = 1; t < 252; ++t) curve.push_back(curve.back() * (1.0 + 0.0004 + 0.01 * std::sin(0.7 * t)));
  long double mean = 0.0L, ss = 0.0L;
  std::vector<long double> r;
  for (std::size_t t = 1; t < curve.size(); ++t) r.push_back((long double)curve[t] / curve[t - 1] - 1.0L);
  for (auto x : r) mean += x;
  mean /= r.size();
  for (auto x : r) ss += (x - mean) * (x - mean);
  const double direct = static_cast<double>(mean / std::sqrt(ss / (r.size() - 1)));
  const double got = metrics::sharpe(curve);
  bool raised = false;
  try {
    metrics::sharpe(std::vector<double>(252, 5.0));
  } catch (const metrics::UndefinedSharpe&) {
    raised = true;
  }
  std::vector<double> doubled(curve);
  for (auto& v : doubled) v *= 2.0;
  const double scale_err = rel(metrics::sharpe(doubled), got);
  const double err = rel(got, direct);
  return {err < 1e-12 && raised && scale_err < 1e-12,
          "direct rel err " + fmt("%.3g", err) + ", zero variance " + (raised ? "raises" : "DOES NOT RAISE") +
              ", 2v rel err " + fmt("%.3g", scale_err)};
}

Outcome action_scaling() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> a(30);
  std::size_t bad = 0;
  for (int i = 0; i < 100000; ++i) {
    for (auto& x : a) x = u(rng);
    const auto deltas = env::scale_action(a, 1000);
    for (std::size_t d = 0; d < a.size(); ++d) {
      const auto s = deltas[d];
      const bool sign_ok = s == 0 ? std::abs(a[d]) < 1e-3 : (s > 0) == (a[d] > 0);
      bad += std::llabs(s) > 1000 || !sign_ok;
    }
  }
  return {bad == 0, "1e5 vectors x 30 components, " + std::to_string(bad) + " violations"};
}

Outcome determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = source_config("smoke.ini");
  const auto dir = scratch("determinism");
  cli::cmd_train(cfg, dir / "a");
  cli::cmd_train(cfg, dir / "b");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ck = slurp(dir / "a/checkpoint.tar") == slurp(dir / "b/checkpoint.tar");
  const bool hist = slurp(dir / "a/history.csv") == slurp(dir / "b/history.csv");
  const auto rows = algo::read_history_csv((dir / "a/history.csv").string()).size();
  return {ck && hist && rows == 3 && cfg.data.tickers == 2 && cfg.data.days == 300 && secs < 300.0,
          std::string("checkpoint ") + (ck ? "identical" : "DIFFERS") + ", history " +
              (hist ? "identical" : "DIFFERS") + ", " + std::to_string(rows) + " updates, " + fmt("%.1f", secs) +
              " s for both runs"};
}

Outcome behavioral_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = source_config("uptrend.ini");
  const auto dir = scratch("behavior");
  const auto pd = cli::prepare_data(cfg.data);
  const auto trained = cli::cmd_train(cfg, dir, &pd);
  const auto& policy = trained.result.policy;

  // Greedy pass over the test split, recording the mean action per ticker.
  const auto test = pd.test(cfg.env.window);
  env::TradingEnv e(test, cfg.env);
  e.reset();
  nets::BoundParameters<float> bound(policy.params());
  const std::size_t d_count = test->num_tickers();
  std::vector<double> mean_action(d_count, 0.0);
  std::size_t steps = 0;
  while (!e.done()) {
    const auto out = nets::to_outputs(nets::policy_forward(policy.spec(), bound, policy.observe(e.state()), 1,
                                                           {nets::BatchNormMode::kEval}))
                         .front();
    for (std::size_t d = 0; d < d_count; ++d) mean_action[d] += out.mean[d];
    e.step(out.mean);
    ++steps;
  }
  std::size_t positive = 0;
  for (double& m : mean_action) positive += (m /= static_cast<double>(steps)) > 0.0;
  const double final_value = e.value();
  const double hold_only = cfg.env.initial_balance;  // never trading keeps the cash
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double frac = static_cast<double>(positive) / static_cast<double>(d_count);
  std::string means;
  for (double m : mean_action) means += (means.empty() ? "" : " ") + fmt("%+.3f", m);
  return {frac >= 0.8 && final_value > hold_only && secs < 600.0,
          std::to_string(positive) + "/" + std::to_string(d_count) + " tickers positive [" + means +
              "], final value " + fmt("%.2f", final_value) + " vs hold-only " + fmt("%.2f", hold_only) + ", " +
              fmt("%.1f", secs) + " s"};
}

Outcome comparison_harness() {
  const auto cfg = source_config("smoke.ini");
  const auto dir = scratch("compare");
  const auto out = cli::cmd_compare(cfg, dir);
  std::ifstream in(dir / "comparison.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) rows.push_back(mtrader::detail::split_csv_line(line));
  std::size_t exact = 0;
  for (std::size_t k = 0; k < out.cells.size(); ++k) {
    const fs::path cell = dir / out.cells[k];
    const double sharpe = metrics::sharpe_or_nan(metrics::read_equity_csv((cell / "equity.csv").string()), true);
    const double cost = metrics::cumulative_cost((cell / "trades.csv").string()).total_cost;
    const double got_sharpe = std::stod(rows.back().at(2 + 4 * k + 2));
    const double got_cost = std::stod(rows.back().at(2 + 4 * k + 3));
    exact += (got_sharpe == sharpe || (std::isnan(got_sharpe) && std::isnan(sharpe))) && got_cost == cost &&
             fs::exists(cell / "history.csv");
  }
  return {out.cells.size() == 4 && exact == 4 && rows.size() == cfg.algo.updates(),
          std::to_string(out.cells.size()) + " cells, " + std::to_string(rows.size()) + " rows, " +
              std::to_string(exact) + "/4 cells recompute exactly"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<Criterion> all{
      {1, "accounting oracle", accounting_oracle},   {2, "reward telescoping", reward_telescoping},
      {3, "window invariant", window_invariant},     {4, "feature layout", feature_layout},
      {5, "gradient check", gradient_check},         {6, "GAE oracle", gae_oracle},
      {7, "Sharpe", sharpe_checks},                  {8, "action scaling", action_scaling},
      {9, "determinism", determinism},               {10, "behavioral sanity", behavioral_sanity},
      {11, "comparison harness", comparison_harness}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
