#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "goco/assignment.hpp"
#include "goco/error.hpp"
#include "goco/problem.hpp"
#include "goco/rng.hpp"
#include "goco/text_io.hpp"
#include "goco/topology.hpp"

namespace goco {

struct RunConfig {
  double eta = 1e-4;
  double gamma = 0.05;
  double p = 0.2;
  std::uint64_t iterations = 10000;
  std::uint64_t seed = 1;
  std::uint64_t loss_every = 1;
  std::uint64_t bits_per_element = 64;
  bool allow_idle = false;
  // Assert buffer_i[j] == x_j after every iteration.
  bool check_buffers = true;
};

/// Throws ConfigError on out-of-range fields; returns soft warnings.
/// eta = 0 is accepted so pure-gossip runs are expressible.
inline std::vector<std::string> validate_run_config(const RunConfig& cfg, double beta) {
  if (!(cfg.eta >= 0.0) || !std::isfinite(cfg.eta)) throw ConfigError("eta must be finite and >= 0");
  if (!(cfg.gamma > 0.0) || !std::isfinite(cfg.gamma)) throw ConfigError("gamma must be positive");
  if (!(cfg.p >= 0.0 && cfg.p <= 1.0)) throw ConfigError("straggler probability p must be in [0,1]");
  if (cfg.loss_every == 0) throw ConfigError("loss_every must be positive");
  if (cfg.bits_per_element == 0) throw ConfigError("bits_per_element must be positive");
  std::vector<std::string> warnings;
  if (beta > 0.0 && cfg.gamma > 1.0 / beta) {
    warnings.push_back("gamma = " + text::format_double(cfg.gamma) + " exceeds 1/beta = " +
                       text::format_double(1.0 / beta) + "; gossip may not contract");
  }
  return warnings;
}

// I_i = 1 (active) with probability 1 - p, independently per device.
template <class Urbg>
std::vector<std::uint8_t> sample_stragglers(double p, std::size_t n, Urbg& rng) {
  std::vector<std::uint8_t> active(n);
  for (auto& a : active) a = uniform01(rng) >= p ? 1 : 0;
  return active;
}

/// g_i = sum_k s(i,k)/d_k * grad F_k(x_i, xi_{i,k}). The noise for each held
/// subset comes from its own stream keyed by (run seed, device, iteration,
/// subset). Idle devices get the zero vector.
inline Eigen::VectorXd encode_gradient(const Problem& problem, const AssignmentMatrix& s,
                                       std::size_t device, const Eigen::VectorXd& x,
                                       std::uint64_t run_seed, std::uint64_t iteration) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (std::size_t k = 0; k < s.subsets(); ++k) {
    if (!s.holds(device, k)) continue;
    auto rng = make_stream(run_seed, Purpose::kGradientNoise, device, iteration, k);
    problem.add_stochastic_gradient(k, x, rng, 1.0 / static_cast<double>(s.degree(k)), g);
  }
  return g;
}

inline Eigen::VectorXd local_step(const Eigen::VectorXd& x, const Eigen::VectorXd& g, double eta) {
  return x - eta * g;
}

/// Last vector received from each neighbor of one device.
class NeighborBuffer {
 public:
  NeighborBuffer() = default;
  explicit NeighborBuffer(std::vector<std::size_t> neighbors)
      : neighbors_(std::move(neighbors)), values_(neighbors_.size()), filled_(neighbors_.size(), false) {}

  void store(std::size_t from, const Eigen::VectorXd& value) {
    const auto slot = find(from);
    if (!slot) throw ProtocolError("message from non-neighbor " + std::to_string(from));
    values_[*slot] = value;
    filled_[*slot] = true;
  }

  bool has(std::size_t from) const {
    const auto slot = find(from);
    return slot && filled_[*slot];
  }

  const Eigen::VectorXd& get(std::size_t from) const {
    const auto slot = find(from);
    if (!slot || !filled_[*slot])
      throw ProtocolError("no buffered message from neighbor " + std::to_string(from));
    return values_[*slot];
  }

  const std::vector<std::size_t>& neighbors() const noexcept { return neighbors_; }

 private:
  std::optional<std::size_t> find(std::size_t from) const {
    auto it = std::lower_bound(neighbors_.begin(), neighbors_.end(), from);
    if (it == neighbors_.end() || *it != from) return std::nullopt;
    return static_cast<std::size_t>(it - neighbors_.begin());
  }

  std::vector<std::size_t> neighbors_;
  std::vector<Eigen::VectorXd> values_;
  std::vector<bool> filled_;
};

/// x_i^{t+1} = x_i^{t+1/2} + gamma * sum_j w_ij (buffer[j] - x_i^t).
/// The correction is taken against the pre-half-step x_i^t.
inline Eigen::VectorXd gossip_step(const Eigen::VectorXd& x_half, const NeighborBuffer& buffer,
                                   const Eigen::VectorXd& x_old, const MixingMatrix& w,
                                   std::size_t device, double gamma) {
  Eigen::VectorXd correction = Eigen::VectorXd::Zero(x_old.size());
  for (auto j : w.neighbors(device)) correction.noalias() += w.weight(device, j) * (buffer.get(j) - x_old);
  return x_half + gamma * correction;
}

// Sender-side bits: every active device broadcasts one vector per neighbor.
inline std::uint64_t account_bits(const std::vector<std::uint8_t>& active, const MixingMatrix& w,
                                  std::size_t dim, std::uint64_t bits_per_element) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) bits += static_cast<std::uint64_t>(w.degree(i)) * dim * bits_per_element;
  return bits;
}

struct TelemetryRow {
  std::uint64_t t = 0;
  double loss = 0.0;
  double consensus_err = 0.0;
  std::uint64_t cum_bits = 0;
  std::uint64_t stragglers = 0;

  bool operator==(const TelemetryRow&) const = default;
};

struct Telemetry {
  TelemetryRow initial;  // state before the first iteration
  std::vector<TelemetryRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> warnings;
  bool diverged = false;
  std::uint64_t diverged_at = 0;
};

struct StepRecord {
  std::vector<std::uint8_t> active;
  Eigen::MatrixXd gradients;  // dim x n, zero columns for stragglers
  std::uint64_t bits = 0;
};

inline double consensus_error(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd mean = x.rowwise().mean();
  return (x.colwise() - mean).squaredNorm();
}

/// Synchronous-round GOCO state machine. Parameters are stored as a dim x n
/// matrix, one column per device. Holds references to its inputs, which must
/// outlive it.
class Simulation {
 public:
  Simulation(const Problem& problem, const AssignmentMatrix& assignment, const MixingMatrix& mixing,
             RunConfig cfg, std::optional<Eigen::MatrixXd> initial = std::nullopt)
      : problem_(problem), assignment_(assignment), mixing_(mixing), cfg_(cfg),
        stragglers_rng_(make_stream(cfg.seed, Purpose::kStragglers)) {
    const auto n = mixing_.size();
    if (assignment_.devices() != n) {
      throw ConfigError("assignment has " + std::to_string(assignment_.devices()) +
                        " devices but topology has " + std::to_string(n));
    }
    if (assignment_.subsets() != problem_.subsets()) {
      throw ConfigError("assignment has " + std::to_string(assignment_.subsets()) +
                        " subsets but problem has " + std::to_string(problem_.subsets()));
    }
    if (!cfg_.allow_idle && assignment_.has_idle_device())
      throw ConfigError("assignment leaves a device idle; enable allow_idle to run it");
    const auto dim = static_cast<Eigen::Index>(problem_.dim());
    const auto N = static_cast<Eigen::Index>(n);
    if (initial) {
      if (initial->rows() != dim || initial->cols() != N)
        throw ConfigError("initial parameter matrix must be dim x n");
      x_ = std::move(*initial);
    } else {
      x_ = Eigen::MatrixXd::Zero(dim, N);
    }
    buffers_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      buffers_.emplace_back(mixing_.neighbors(i));
      for (auto j : mixing_.neighbors(i)) buffers_[i].store(j, x_.col(static_cast<Eigen::Index>(j)));
    }
  }

  const Eigen::MatrixXd& params() const noexcept { return x_; }
  Eigen::VectorXd mean() const { return x_.rowwise().mean(); }
  double consensus() const { return consensus_error(x_); }
  double loss() const { return problem_.global_loss(mean()); }
  std::uint64_t iteration() const noexcept { return t_; }
  std::uint64_t cumulative_bits() const noexcept { return cum_bits_; }
  const NeighborBuffer& buffer(std::size_t i) const { return buffers_.at(i); }
  const RunConfig& config() const noexcept { return cfg_; }

  bool buffers_consistent() const {
    for (std::size_t i = 0; i < buffers_.size(); ++i)
      for (auto j : mixing_.neighbors(i))
        if (buffers_[i].get(j) != x_.col(static_cast<Eigen::Index>(j))) return false;
    return true;
  }

  /// One round: sample stragglers, active devices run encode / local step /
  /// gossip, then broadcast to neighbors. Stragglers only receive.
  StepRecord step() {
    const auto n = mixing_.size();
    const auto dim = static_cast<Eigen::Index>(problem_.dim());
    StepRecord rec;
    rec.active = sample_stragglers(cfg_.p, n, stragglers_rng_);
    rec.gradients = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(n));

    Eigen::MatrixXd next = x_;
    for (std::size_t i = 0; i < n; ++i) {
      if (!rec.active[i]) continue;
      const auto col = static_cast<Eigen::Index>(i);
      const Eigen::VectorXd xi = x_.col(col);
      Eigen::VectorXd g = encode_gradient(problem_, assignment_, i, xi, cfg_.seed, t_);
      const Eigen::VectorXd half = local_step(xi, g, cfg_.eta);
      next.col(col) = gossip_step(half, buffers_[i], xi, mixing_, i, cfg_.gamma);
      rec.gradients.col(col) = std::move(g);
    }
    x_ = std::move(next);

    for (std::size_t i = 0; i < n; ++i) {
      if (!rec.active[i]) continue;
      for (auto j : mixing_.neighbors(i)) buffers_[j].store(i, x_.col(static_cast<Eigen::Index>(i)));
    }

    rec.bits = account_bits(rec.active, mixing_, problem_.dim(), cfg_.bits_per_element);
    cum_bits_ += rec.bits;
    ++t_;

    if (!x_.allFinite()) {
      throw DivergenceError(t_, "non-finite parameter after iteration " + std::to_string(t_) +
                                    " (eta = " + text::format_double(cfg_.eta) + " may be too large)");
    }
    if (cfg_.check_buffers && !buffers_consistent())
      throw ProtocolError("buffer inconsistency after iteration " + std::to_string(t_));
    return rec;
  }

  TelemetryRow snapshot(std::uint64_t stragglers) const {
    return TelemetryRow{t_, loss(), consensus(), cum_bits_, stragglers};
  }

 private:
  const Problem& problem_;
  const AssignmentMatrix& assignment_;
  const MixingMatrix& mixing_;
  RunConfig cfg_;
  SplitMix64 stragglers_rng_;
  Eigen::MatrixXd x_;
  std::vector<NeighborBuffer> buffers_;
  std::uint64_t t_ = 0;
  std::uint64_t cum_bits_ = 0;
};

// Raised by run(); carries everything recorded before the blow-up.
class RunDivergedError : public DivergenceError {
 public:
  RunDivergedError(std::uint64_t iteration, const std::string& what, Telemetry partial)
      : DivergenceError(iteration, what), partial_(std::move(partial)) {}
  const Telemetry& partial() const noexcept { return partial_; }

 private:
  Telemetry partial_;
};

/// Runs cfg.iterations rounds and records a telemetry row every
/// cfg.loss_every iterations (and at the last one).
inline Telemetry run(const Problem& problem, const AssignmentMatrix& assignment,
                     const MixingMatrix& mixing, const RunConfig& cfg,
                     std::optional<Eigen::MatrixXd> initial = std::nullopt) {
  const auto spectrum = spectral_summary(mixing);
  Telemetry tel;
  tel.warnings = validate_run_config(cfg, spectrum.beta);
  tel.metadata = {
      {"n", std::to_string(mixing.size())},
      {"m", std::to_string(problem.subsets())},
      {"dim", std::to_string(problem.dim())},
      {"eta", text::format_double(cfg.eta)},
      {"gamma", text::format_double(cfg.gamma)},
      {"p", text::format_double(cfg.p)},
      {"T", std::to_string(cfg.iterations)},
      {"seed", std::to_string(cfg.seed)},
      {"loss_every", std::to_string(cfg.loss_every)},
      {"bits_per_element", std::to_string(cfg.bits_per_element)},
      {"rho", text::format_double(spectrum.rho)},
      {"beta", text::format_double(spectrum.beta)},
  };

  Simulation sim(problem, assignment, mixing, cfg, std::move(initial));
  tel.initial = sim.snapshot(0);
  tel.rows.reserve(static_cast<std::size_t>(cfg.iterations / cfg.loss_every + 1));
  for (std::uint64_t t = 1; t <= cfg.iterations; ++t) {
    StepRecord rec;
    try {
      rec = sim.step();
    } catch (const DivergenceError& e) {
      tel.diverged = true;
      tel.diverged_at = e.iteration();
      throw RunDivergedError(e.iteration(), e.what(), std::move(tel));
    }
    if (t % cfg.loss_every == 0 || t == cfg.iterations) {
      const auto stragglers = static_cast<std::uint64_t>(
          std::count(rec.active.begin(), rec.active.end(), std::uint8_t{0}));
      tel.rows.push_back(sim.snapshot(stragglers));
    }
  }
  return tel;
}

// ---------------------------------------------------------------------------
// CSV: t,loss,consensus_err,cum_bits,stragglers

inline std::string format_telemetry_csv(const Telemetry& tel) {
  std::string out = "t,loss,consensus_err,cum_bits,stragglers\n";
  for (const auto& r : tel.rows) {
    out += std::to_string(r.t) + ',' + text::format_double(r.loss) + ',' +
           text::format_double(r.consensus_err) + ',' + std::to_string(r.cum_bits) + ',' +
           std::to_string(r.stragglers) + '\n';
  }
  return out;
}

inline std::vector<TelemetryRow> parse_telemetry_csv(std::string_view contents, const std::string& source) {
  auto lines = text::split(contents, '\n');
  if (lines.empty() || text::trim(lines[0]) != "t,loss,consensus_err,cum_bits,stragglers")
    throw ConfigError(source + ": missing telemetry header");
  std::vector<TelemetryRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = text::trim(lines[i]);
    if (line.empty()) continue;
    auto f = text::split(line, ',');
    if (f.size() != 5) throw ConfigError(source + ":" + std::to_string(i + 1) + ": expected 5 fields");
    auto t = text::parse_int<std::uint64_t>(f[0]);
    auto loss = text::parse_double(f[1]);
    auto cons = text::parse_double(f[2]);
    auto bits = text::parse_int<std::uint64_t>(f[3]);
    auto strag = text::parse_int<std::uint64_t>(f[4]);
    if (!t || !loss || !cons || !bits || !strag)
      throw ConfigError(source + ":" + std::to_string(i + 1) + ": malformed telemetry row");
    rows.push_back({*t, *loss, *cons, *bits, *strag});
  }
  return rows;
}

}  // namespace goco
