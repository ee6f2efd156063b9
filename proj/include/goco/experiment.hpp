#pragma once

// Orchestration behind the command-line tool: builds per-seed inputs from an
// ExperimentConfig, runs them, and writes the CSV / sidecar artifacts.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "goco/assignment.hpp"
#include "goco/config.hpp"
#include "goco/engine.hpp"
#include "goco/error.hpp"
#include "goco/problem.hpp"
#include "goco/rng.hpp"
#include "goco/text_io.hpp"
#include "goco/theory.hpp"
#include "goco/topology.hpp"

namespace goco::experiment {

// SHA-1 over git's blob framing ("blob <len>\0<content>"), hex encoded.
inline std::string git_blob_hash(const std::string& content) {
  const std::string framed = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(framed.data(), framed.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline MixingMatrix build_topology(const config::ExperimentConfig& cfg) {
  switch (cfg.topology) {
    case config::TopologyKind::kRing:
      return build_ring(cfg.n);
    case config::TopologyKind::kComplete:
      return build_complete(cfg.n);
    case config::TopologyKind::kFile:
      return read_mixing_matrix(cfg.topology_file);
  }
  throw ConfigError("unknown topology kind");
}

inline std::uint64_t problem_seed_for(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  return derive_seed(cfg.problem_seed.value_or(seed), Purpose::kProblem);
}

inline Problem build_problem(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.problem_file.empty()) return read_problem(cfg.problem_file);
  return generate_problem(cfg.problem, problem_seed_for(cfg, seed));
}

inline AssignmentMatrix build_assignment(const config::ExperimentConfig& cfg, std::size_t n,
                                         std::size_t m, std::uint64_t seed) {
  const auto aseed = derive_seed(seed, Purpose::kAssignment);
  switch (cfg.assignment) {
    case config::AssignmentKind::kUniformRandom:
      return assign_uniform_random(n, m, cfg.d, aseed, cfg.allow_idle);
    case config::AssignmentKind::kNoRedundancy:
      return assign_no_redundancy(n, m, aseed, cfg.allow_idle);
    case config::AssignmentKind::kFullReplication:
      return assign_full_replication(n, m);
    case config::AssignmentKind::kFile: {
      auto s = read_assignment(cfg.assignment_file, cfg.allow_idle);
      if (s.devices() != n || s.subsets() != m)
        throw ConfigError("assignment file '" + cfg.assignment_file.string() + "' is " +
                          std::to_string(s.devices()) + "x" + std::to_string(s.subsets()) +
                          ", expected " + std::to_string(n) + "x" + std::to_string(m));
      return s;
    }
  }
  throw ConfigError("unknown assignment kind");
}

struct SeedResult {
  std::uint64_t seed = 0;
  Telemetry telemetry;
  std::string error;  // divergence diagnostic, empty on success
  theory::StructuralInputs structure;
  std::string input_hash;
  std::string problem_text;
  std::string assignment_text;
};

inline SeedResult execute_seed(const config::ExperimentConfig& cfg, const MixingMatrix& mixing,
                               std::uint64_t seed) {
  SeedResult res;
  res.seed = seed;
  const Problem problem = build_problem(cfg, seed);
  const AssignmentMatrix assignment = build_assignment(cfg, mixing.size(), problem.subsets(), seed);
  const auto spectrum = spectral_summary(mixing);
  RunConfig rc = cfg.run;
  rc.seed = seed;

  res.structure = theory::structural_inputs(assignment, rc.p, rc.gamma, spectrum.rho, spectrum.beta);
  res.problem_text = format_problem(problem);
  res.assignment_text = format_assignment(assignment);
  res.input_hash = git_blob_hash(cfg.echo + "seed = " + std::to_string(seed) + "\n" + res.problem_text +
                                 res.assignment_text + format_mixing_matrix(mixing));
  try {
    res.telemetry = run(problem, assignment, mixing, rc);
  } catch (const RunDivergedError& e) {
    res.telemetry = e.partial();
    res.error = e.what();
  }
  return res;
}

inline std::string format_sidecar(const config::ExperimentConfig& cfg, const SeedResult& r) {
  const auto& tel = r.telemetry;
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("name", cfg.name);
  kv("seed", std::to_string(r.seed));
  kv("status", tel.diverged ? "diverged" : "ok");
  if (tel.diverged) {
    kv("diverged_at", std::to_string(tel.diverged_at));
    kv("error", r.error);
  }
  kv("input_hash", r.input_hash);
  kv("seed.problem", std::to_string(problem_seed_for(cfg, r.seed)));
  kv("seed.assignment", std::to_string(derive_seed(r.seed, Purpose::kAssignment)));
  kv("seed.stragglers", std::to_string(derive_seed(r.seed, Purpose::kStragglers)));
  kv("initial_loss", text::format_double(tel.initial.loss));
  kv("initial_consensus_err", text::format_double(tel.initial.consensus_err));
  if (!tel.rows.empty()) {
    kv("final_t", std::to_string(tel.rows.back().t));
    kv("final_loss", text::format_double(tel.rows.back().loss));
    kv("final_cum_bits", std::to_string(tel.rows.back().cum_bits));
  }
  for (const auto& [k, v] : tel.metadata) kv("run." + k, v);
  const auto& st = r.structure;
  kv("structure.n", std::to_string(st.n));
  kv("structure.m", std::to_string(st.m));
  kv("structure.p", text::format_double(st.p));
  std::string d;
  for (std::size_t k = 0; k < st.d.size(); ++k) d += (k ? "," : "") + std::to_string(st.d[k]);
  kv("structure.d", d);
  kv("structure.a_min", text::format_double(st.a_min));
  kv("structure.a_max", text::format_double(st.a_max));
  kv("structure.gamma", text::format_double(st.gamma));
  kv("structure.rho", text::format_double(st.rho));
  kv("structure.beta", text::format_double(st.beta));
  for (std::size_t i = 0; i < tel.warnings.size(); ++i) kv("warning." + std::to_string(i), tel.warnings[i]);
  for (auto line : text::split(cfg.echo, '\n'))
    if (!line.empty()) out += "config." + std::string(line) + "\n";
  return out;
}

inline std::filesystem::path seed_stem(const std::filesystem::path& dir, const std::string& name,
                                       std::uint64_t seed) {
  return dir / (name + "_seed" + std::to_string(seed));
}

inline void write_seed_artifacts(const config::ExperimentConfig& cfg, const SeedResult& r,
                                 const std::filesystem::path& dir) {
  const auto stem = seed_stem(dir, cfg.name, r.seed).string();
  text::write_file(stem + ".csv", format_telemetry_csv(r.telemetry));
  text::write_file(stem + ".meta", format_sidecar(cfg, r));
  text::write_file(stem + ".problem", r.problem_text);
  text::write_file(stem + ".assignment", r.assignment_text);
}

struct RunSummary {
  std::vector<SeedResult> results;  // in seed-list order
  bool any_diverged() const {
    return std::any_of(results.begin(), results.end(), [](const auto& r) { return r.telemetry.diverged; });
  }
};

/// Executes every seed of `cfg` on `threads` workers (1 = sequential) and
/// writes each seed's artifacts into `out_dir`. Inputs are rebuilt per task,
/// so workers share nothing mutable.
inline RunSummary execute(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                          unsigned threads = 1) {
  const MixingMatrix mixing = build_topology(cfg);
  for (auto dk : cfg.d)
    if (dk > mixing.size())
      throw InfeasibleError("replication degree " + std::to_string(dk) + " exceeds device count " +
                            std::to_string(mixing.size()));
  RunSummary summary;
  summary.results.resize(cfg.seeds.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cfg.seeds.size())));

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const auto idx = next.fetch_add(1);
      if (idx >= cfg.seeds.size()) return;
      try {
        summary.results[idx] = execute_seed(cfg, mixing, cfg.seeds[idx]);
        write_seed_artifacts(cfg, summary.results[idx], out_dir);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next = cfg.seeds.size();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return summary;
}

inline RunSummary cmd_run(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  return execute(cfg, out_dir, 1);
}

inline std::string format_sweep_csv(const RunSummary& s) {
  std::string out = "seed,status,final_t,final_loss,final_consensus_err,final_cum_bits\n";
  for (const auto& r : s.results) {
    const auto& tel = r.telemetry;
    const TelemetryRow last = tel.rows.empty() ? tel.initial : tel.rows.back();
    out += std::to_string(r.seed) + ',' + (tel.diverged ? "diverged" : "ok") + ',' +
           std::to_string(last.t) + ',' + text::format_double(last.loss) + ',' +
           text::format_double(last.consensus_err) + ',' + std::to_string(last.cum_bits) + '\n';
  }
  return out;
}

inline RunSummary cmd_sweep(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                            unsigned threads) {
  auto s = execute(cfg, out_dir, threads);
  text::write_file(out_dir / (cfg.name + "_sweep.csv"), format_sweep_csv(s));
  return s;
}

// ---------------------------------------------------------------------------
// Comparison on a common transmitted-bits axis.

inline double median(std::vector<double> v) {
  if (v.empty()) throw NumericError("median of empty set");
  std::sort(v.begin(), v.end());
  const auto h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Loss of the latest row with cum_bits <= b; the initial state before any.
inline std::vector<double> resample_locf(const Telemetry& tel, const std::vector<double>& grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  std::size_t idx = 0;
  double current = tel.initial.loss;
  for (double b : grid) {
    while (idx < tel.rows.size() && static_cast<double>(tel.rows[idx].cum_bits) <= b) {
      current = tel.rows[idx].loss;
      ++idx;
    }
    out.push_back(current);
  }
  return out;
}

inline std::vector<double> resample_locf_iterations(const Telemetry& tel, const std::vector<double>& ts) {
  std::vector<double> out;
  std::size_t idx = 0;
  double current = tel.initial.loss;
  for (double t : ts) {
    while (idx < tel.rows.size() && static_cast<double>(tel.rows[idx].t) <= t) {
      current = tel.rows[idx].loss;
      ++idx;
    }
    out.push_back(current);
  }
  return out;
}

inline std::uint64_t max_bits(const Telemetry& tel) {
  return tel.rows.empty() ? tel.initial.cum_bits : tel.rows.back().cum_bits;
}

struct CompareResult {
  std::vector<std::string> names;
  std::vector<std::uint64_t> seeds;
  std::vector<double> grid;  // bits
  std::vector<std::vector<std::vector<double>>> loss;  // method x seed x grid
  std::vector<std::vector<double>> median_loss;         // method x grid
  std::vector<double> t_grid;
  std::vector<std::vector<double>> median_loss_t;       // method x t_grid
  std::vector<RunSummary> runs;
};

inline void check_comparable(const std::vector<config::ExperimentConfig>& cfgs) {
  if (cfgs.size() < 2) throw ConfigError("compare needs at least two configs");
  const auto& a = cfgs.front();
  for (std::size_t i = 1; i < cfgs.size(); ++i) {
    const auto& b = cfgs[i];
    if (!(a.problem == b.problem) || a.problem_seed != b.problem_seed || a.problem_file != b.problem_file)
      throw ConfigError("configs '" + a.name + "' and '" + b.name + "' describe different problems");
    if (a.seeds != b.seeds)
      throw ConfigError("configs '" + a.name + "' and '" + b.name + "' use different seed lists");
    for (std::size_t j = 0; j < i; ++j)
      if (cfgs[j].name == b.name) throw ConfigError("duplicate experiment name '" + b.name + "'");
  }
}

inline CompareResult compare_runs(const std::vector<config::ExperimentConfig>& cfgs,
                                  std::vector<RunSummary> runs, std::size_t grid_points) {
  if (grid_points < 2) throw ConfigError("grid needs at least two points");
  CompareResult res;
  res.seeds = cfgs.front().seeds;
  for (const auto& c : cfgs) res.names.push_back(c.name);

  std::uint64_t budget = UINT64_MAX;
  std::uint64_t t_max = UINT64_MAX;
  for (const auto& r : runs) {
    for (const auto& s : r.results) {
      budget = std::min(budget, max_bits(s.telemetry));
      t_max = std::min<std::uint64_t>(t_max, s.telemetry.rows.empty() ? 0 : s.telemetry.rows.back().t);
    }
  }
  for (std::size_t j = 0; j < grid_points; ++j)
    res.grid.push_back(static_cast<double>(budget) * static_cast<double>(j) /
                       static_cast<double>(grid_points - 1));
  res.grid.back() = static_cast<double>(budget);

  // Iteration axis follows the first run's telemetry cadence.
  for (const auto& row : runs.front().results.front().telemetry.rows)
    if (row.t <= t_max) res.t_grid.push_back(static_cast<double>(row.t));

  for (const auto& r : runs) {
    std::vector<std::vector<double>> per_seed;
    std::vector<std::vector<double>> per_seed_t;
    for (const auto& s : r.results) {
      per_seed.push_back(resample_locf(s.telemetry, res.grid));
      per_seed_t.push_back(resample_locf_iterations(s.telemetry, res.t_grid));
    }
    std::vector<double> med(res.grid.size());
    for (std::size_t j = 0; j < res.grid.size(); ++j) {
      std::vector<double> col;
      for (const auto& ps : per_seed) col.push_back(ps[j]);
      med[j] = median(std::move(col));
    }
    std::vector<double> med_t(res.t_grid.size());
    for (std::size_t j = 0; j < res.t_grid.size(); ++j) {
      std::vector<double> col;
      for (const auto& ps : per_seed_t) col.push_back(ps[j]);
      med_t[j] = median(std::move(col));
    }
    res.loss.push_back(std::move(per_seed));
    res.median_loss.push_back(std::move(med));
    res.median_loss_t.push_back(std::move(med_t));
  }
  res.runs = std::move(runs);
  return res;
}

inline std::string format_compare_bits_csv(const CompareResult& r) {
  std::string out = "bits";
  for (const auto& name : r.names) {
    for (auto s : r.seeds) out += "," + name + "_s" + std::to_string(s);
    out += "," + name + "_median";
  }
  out += '\n';
  for (std::size_t j = 0; j < r.grid.size(); ++j) {
    out += text::format_double(r.grid[j]);
    for (std::size_t mth = 0; mth < r.names.size(); ++mth) {
      for (const auto& ps : r.loss[mth]) out += ',' + text::format_double(ps[j]);
      out += ',' + text::format_double(r.median_loss[mth][j]);
    }
    out += '\n';
  }
  return out;
}

inline std::string format_compare_iterations_csv(const CompareResult& r) {
  std::string out = "t";
  for (const auto& name : r.names) out += "," + name + "_median";
  out += '\n';
  for (std::size_t j = 0; j < r.t_grid.size(); ++j) {
    out += text::format_double(r.t_grid[j]);
    for (std::size_t mth = 0; mth < r.names.size(); ++mth)
      out += ',' + text::format_double(r.median_loss_t[mth][j]);
    out += '\n';
  }
  return out;
}

/// Runs every config (each into out_dir/<name>/) and tabulates loss against
/// transmitted bits up to the largest budget all runs reached.
inline CompareResult cmd_compare(const std::vector<config::ExperimentConfig>& cfgs,
                                 const std::filesystem::path& out_dir, std::size_t grid_points = 101,
                                 unsigned threads = 1) {
  check_comparable(cfgs);
  std::vector<RunSummary> runs;
  for (const auto& c : cfgs) runs.push_back(execute(c, out_dir / c.name, threads));
  for (const auto& r : runs)
    if (r.any_diverged()) throw DivergenceError(0, "a compared run diverged; see its sidecar");
  auto res = compare_runs(cfgs, std::move(runs), grid_points);
  text::write_file(out_dir / "compare_bits.csv", format_compare_bits_csv(res));
  text::write_file(out_dir / "compare_iterations.csv", format_compare_iterations_csv(res));
  return res;
}

// ---------------------------------------------------------------------------

struct BoundResult {
  theory::TheoryConstants constants;
  theory::MuCondition mu;
  std::vector<theory::BoundRow> rows;
};

inline BoundResult cmd_bound(const config::BoundConfig& cfg, const std::filesystem::path& out_dir) {
  BoundResult r;
  r.constants = theory::compute_constants(cfg.reg, cfg.structure);
  r.mu = theory::check_mu_condition(cfg.reg, r.constants, cfg.structure, cfg.margin_factor);
  r.rows = theory::bound_curve(r.constants, cfg.T_values);
  text::write_file(out_dir / "constants.csv", theory::format_constants_csv(r.constants, r.mu));
  text::write_file(out_dir / "bound.csv", theory::format_bound_csv(r.rows));
  return r;
}

struct VerifyResult {
  BalanceReport report;
  double w2_closed = 0.0;
  double w2_brute = 0.0;
};

inline VerifyResult cmd_verify(const std::filesystem::path& assignment_file,
                               const std::filesystem::path& out_dir) {
  VerifyResult r;
  const auto s = read_assignment(assignment_file, true);
  r.report = verify_pairwise_balance(s);
  r.w2_closed = theory::w2_closed_form(s.devices(), s.degrees());
  r.w2_brute = theory::brute_force_w2(s);
  text::write_file(out_dir / "balance.csv", format_balance_csv(r.report));
  return r;
}

}  // namespace goco::experiment
