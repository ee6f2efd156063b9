// goco: run, sweep and compare GOCO simulations, evaluate convergence
// constants, and check assignment balance.
//
// Exit codes: 0 success, 2 config error, 3 numerical divergence, 4 I/O error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "goco/config.hpp"
#include "goco/experiment.hpp"
#include "goco/text_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct Options {
  std::vector<std::string> configs;
  std::string out;
  std::string seeds;
  bool quiet = false;
  unsigned threads = 0;
  std::size_t grid_points = 101;
  std::string assignment;
};

// --out beats GOCO_OUT_DIR beats the config file.
std::filesystem::path output_dir(const Options& o, const std::filesystem::path& from_config) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("GOCO_OUT_DIR"); env && *env) return env;
  return from_config;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (auto tok : goco::text::split_ws(s, " ,")) {
    auto v = goco::text::parse_int<std::uint64_t>(tok);
    if (!v) throw goco::ConfigError("--seeds: invalid seed '" + std::string(tok) + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw goco::ConfigError("--seeds: empty list");
  return out;
}

goco::config::ExperimentConfig load_experiment(const std::string& path, const Options& o) {
  auto cfg = goco::config::read_experiment(path);
  if (!o.seeds.empty()) cfg.seeds = parse_seeds(o.seeds);
  return cfg;
}

void report_run(const goco::config::ExperimentConfig& cfg, const goco::experiment::RunSummary& s,
                const std::filesystem::path& dir, bool quiet) {
  for (const auto& r : s.results) {
    for (const auto& w : r.telemetry.warnings) std::cerr << "warning: " << w << "\n";
    if (r.telemetry.diverged) std::cerr << "error: seed " << r.seed << ": " << r.error << "\n";
    if (quiet || r.telemetry.rows.empty()) continue;
    const auto& last = r.telemetry.rows.back();
    std::cout << cfg.name << " seed " << r.seed << ": t=" << last.t
              << " loss=" << goco::text::format_double(last.loss)
              << " consensus_err=" << goco::text::format_double(last.consensus_err)
              << " bits=" << last.cum_bits << "\n";
  }
  if (!quiet) std::cout << "wrote " << s.results.size() << " run(s) to " << dir.string() << "\n";
}

int cmd_run(const Options& o, bool sweep) {
  if (o.configs.size() != 1) throw goco::ConfigError("exactly one --config is required");
  auto cfg = load_experiment(o.configs.front(), o);
  const auto dir = output_dir(o, cfg.output_dir);
  const unsigned threads = o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency());
  auto summary = sweep ? goco::experiment::cmd_sweep(cfg, dir, threads) : goco::experiment::cmd_run(cfg, dir);
  report_run(cfg, summary, dir, o.quiet);
  return summary.any_diverged() ? kExitDivergence : kExitOk;
}

int cmd_compare(const Options& o) {
  if (o.configs.size() < 2) throw goco::ConfigError("compare needs at least two --config files");
  std::vector<goco::config::ExperimentConfig> cfgs;
  for (const auto& c : o.configs) cfgs.push_back(load_experiment(c, o));
  const auto dir = output_dir(o, cfgs.front().output_dir);
  const unsigned threads = o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency());
  auto res = goco::experiment::cmd_compare(cfgs, dir, o.grid_points, threads);
  if (!o.quiet) {
    std::cout << "common budget: " << goco::text::format_double(res.grid.back()) << " bits\n";
    for (std::size_t i = 0; i < res.names.size(); ++i)
      std::cout << res.names[i] << " median loss at budget: "
                << goco::text::format_double(res.median_loss[i].back()) << "\n";
    std::cout << "wrote " << (dir / "compare_bits.csv").string() << "\n";
  }
  return kExitOk;
}

int cmd_bound(const Options& o) {
  if (o.configs.size() != 1) throw goco::ConfigError("exactly one --config is required");
  auto cfg = goco::config::read_bound(o.configs.front());
  const auto dir = output_dir(o, cfg.output_dir);
  auto res = goco::experiment::cmd_bound(cfg, dir);
  std::size_t below = 0;
  for (const auto& r : res.rows) below += r.below_T_min;
  if (below)
    std::cerr << "warning: " << below << " T value(s) at or below T_min = "
              << goco::text::format_double(res.constants.T_min) << "; bound not valid there\n";
  if (!o.quiet) {
    std::cout << "w1=" << goco::text::format_double(res.constants.w1)
              << " w2=" << goco::text::format_double(res.constants.w2)
              << " kappa0=" << goco::text::format_double(res.constants.kappa0)
              << " T_min=" << goco::text::format_double(res.constants.T_min) << "\n";
    std::cout << "mu condition margin " << goco::text::format_double(res.mu.margin)
              << (res.mu.satisfied ? " (satisfied)" : " (not satisfied)") << "\n";
    std::cout << "wrote " << (dir / "constants.csv").string() << " and " << (dir / "bound.csv").string() << "\n";
  }
  return kExitOk;
}

int cmd_verify(const Options& o) {
  std::string file = o.assignment;
  if (file.empty() && o.configs.size() == 1) file = o.configs.front();
  if (file.empty()) throw goco::ConfigError("verify needs an assignment file");
  const auto dir = output_dir(o, "out");
  auto res = goco::experiment::cmd_verify(file, dir);
  if (!o.quiet) {
    std::cout << "exact=" << (res.report.exact ? "true" : "false")
              << " max_abs_deviation=" << goco::text::format_double(res.report.max_abs_deviation) << "\n";
    std::cout << "w2 closed form=" << goco::text::format_double(res.w2_closed)
              << " brute force=" << goco::text::format_double(res.w2_brute)
              << " gap=" << goco::text::format_double(res.w2_brute - res.w2_closed) << "\n";
    std::cout << "wrote " << (dir / "balance.csv").string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gossip-based decentralized learning with gradient coding"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool multi_config) {
    if (multi_config)
      sub->add_option("--config", o.configs, "experiment config (repeat per method)")->required();
    else
      sub->add_option("--config", o.configs, "config file")->expected(1);
    sub->add_option("--out", o.out, "output directory (overrides GOCO_OUT_DIR and the config)");
    sub->add_flag("--quiet", o.quiet, "suppress progress output");
  };

  auto* run = app.add_subcommand("run", "run every seed of a config sequentially");
  add_common(run, false);
  run->add_option("--seeds", o.seeds, "comma separated seeds (overrides the config)");

  auto* sweep = app.add_subcommand("sweep", "run seeds concurrently and write a summary table");
  add_common(sweep, false);
  sweep->add_option("--seeds", o.seeds, "comma separated seeds (overrides the config)");
  sweep->add_option("--threads", o.threads, "worker threads (default: hardware concurrency)");

  auto* compare = app.add_subcommand("compare", "compare methods at equal transmitted bits");
  add_common(compare, true);
  compare->add_option("--seeds", o.seeds, "comma separated seeds (overrides every config)");
  compare->add_option("--grid-points", o.grid_points, "points on the common bits grid")->check(CLI::Range(2, 1000000));
  compare->add_option("--threads", o.threads, "worker threads per method");

  auto* bound = app.add_subcommand("bound", "evaluate convergence constants and the bound curve");
  add_common(bound, false);

  auto* verify = app.add_subcommand("verify", "report pair-wise balance of an assignment file");
  add_common(verify, false);
  verify->add_option("assignment", o.assignment, "0/1 assignment matrix file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(o, false);
    if (*sweep) return cmd_run(o, true);
    if (*compare) return cmd_compare(o);
    if (*bound) return cmd_bound(o);
    if (*verify) return cmd_verify(o);
  } catch (const goco::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const goco::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const goco::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
