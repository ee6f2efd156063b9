#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "goco/error.hpp"
#include "goco/rng.hpp"
#include "goco/text_io.hpp"

namespace goco {

struct ProblemSpec {
  std::size_t m = 16;
  std::size_t dim = 100;
  double feature_std = 10.0;  // N(0, 100) read as variance 100
  double label_noise_std = 1.0;
  int planted_lo = 1;
  int planted_hi = 10;
  double noise_sigma = 1.0;  // sigma_0 of the stochastic gradient

  bool operator==(const ProblemSpec&) const = default;
};

/// Linear-regression objective f(x) = (1/m) sum_k 0.5 (<x, z_k> - y_k)^2 with
/// Gaussian gradient noise N(0, noise_sigma^2 I).
class Problem {
 public:
  Problem(Eigen::MatrixXd features, Eigen::VectorXd labels, double noise_sigma,
          std::optional<Eigen::VectorXd> planted = std::nullopt, std::uint64_t seed = 0)
      : z_(std::move(features)), y_(std::move(labels)), noise_sigma_(noise_sigma),
        planted_(std::move(planted)), seed_(seed) {
    if (z_.rows() == 0 || z_.cols() == 0) throw ConfigError("problem dimensions must be positive");
    if (y_.size() != z_.rows()) throw ConfigError("label count does not match subset count");
    if (!(noise_sigma_ >= 0.0) || !std::isfinite(noise_sigma_))
      throw ConfigError("noise sigma must be finite and >= 0");
    if (planted_ && planted_->size() != z_.cols())
      throw ConfigError("planted vector dimension mismatch");
  }

  std::size_t subsets() const noexcept { return static_cast<std::size_t>(z_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(z_.cols()); }
  const Eigen::MatrixXd& features() const noexcept { return z_; }
  const Eigen::VectorXd& labels() const noexcept { return y_; }
  double noise_sigma() const noexcept { return noise_sigma_; }
  const std::optional<Eigen::VectorXd>& planted() const noexcept { return planted_; }
  std::uint64_t seed() const noexcept { return seed_; }

  double component_loss(std::size_t k, const Eigen::VectorXd& x) const {
    check_index(k);
    const double r = z_.row(static_cast<Eigen::Index>(k)).dot(x) - y_(static_cast<Eigen::Index>(k));
    return 0.5 * r * r;
  }

  // (<x, z_k> - y_k) z_k
  Eigen::VectorXd exact_gradient(std::size_t k, const Eigen::VectorXd& x) const {
    check_index(k);
    const auto row = z_.row(static_cast<Eigen::Index>(k));
    const double r = row.dot(x) - y_(static_cast<Eigen::Index>(k));
    return r * row.transpose();
  }

  // Accumulates weight * (exact gradient + noise) into `out` without a
  // temporary. Noise is drawn from `rng`, one normal per coordinate.
  template <class Urbg>
  void add_stochastic_gradient(std::size_t k, const Eigen::VectorXd& x, Urbg& rng, double weight,
                               Eigen::VectorXd& out) const {
    check_index(k);
    const auto row = z_.row(static_cast<Eigen::Index>(k));
    const double r = row.dot(x) - y_(static_cast<Eigen::Index>(k));
    out.noalias() += (weight * r) * row.transpose();
    if (noise_sigma_ > 0.0) {
      std::normal_distribution<double> noise(0.0, noise_sigma_);
      for (Eigen::Index j = 0; j < out.size(); ++j) out(j) += weight * noise(rng);
    }
  }

  template <class Urbg>
  Eigen::VectorXd stochastic_gradient(std::size_t k, const Eigen::VectorXd& x, Urbg& rng) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(z_.cols());
    add_stochastic_gradient(k, x, rng, 1.0, g);
    return g;
  }

  double global_loss(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd r = z_ * x - y_;
    return 0.5 * r.squaredNorm() / static_cast<double>(subsets());
  }

  Eigen::VectorXd global_gradient(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd r = z_ * x - y_;
    return z_.transpose() * r / static_cast<double>(subsets());
  }

 private:
  void check_index(std::size_t k) const {
    if (k >= subsets()) {
      throw ConfigError("subset index " + std::to_string(k) + " out of range [0, " +
                        std::to_string(subsets()) + ")");
    }
  }

  Eigen::MatrixXd z_;  // m x dim, row k is z_k
  Eigen::VectorXd y_;
  double noise_sigma_;
  std::optional<Eigen::VectorXd> planted_;
  std::uint64_t seed_;
};

struct OptimumSummary {
  Eigen::VectorXd x_star;
  double f_star = 0.0;
  Eigen::Index rank = 0;
  bool ill_conditioned = false;
};

/// z_k ~ N(0, feature_std^2 I); planted x entries uniform integers in
/// [planted_lo, planted_hi]; y_k = <z_k, planted> + N(0, label_noise_std^2).
inline Problem generate_problem(const ProblemSpec& spec, std::uint64_t seed) {
  if (spec.m < 1 || spec.dim < 1) throw ConfigError("problem needs m >= 1 and dim >= 1");
  if (!(spec.feature_std > 0.0) || !std::isfinite(spec.feature_std))
    throw ConfigError("feature_std must be positive");
  if (!(spec.label_noise_std >= 0.0) || !std::isfinite(spec.label_noise_std))
    throw ConfigError("label_noise_std must be >= 0");
  if (spec.planted_lo > spec.planted_hi) throw ConfigError("planted range is empty");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("sigma0 must be >= 0");

  SplitMix64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto m = static_cast<Eigen::Index>(spec.m);
  const auto d = static_cast<Eigen::Index>(spec.dim);

  Eigen::MatrixXd z(m, d);
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index j = 0; j < d; ++j) z(k, j) = spec.feature_std * gauss(rng);

  const auto span = static_cast<double>(spec.planted_hi - spec.planted_lo + 1);
  Eigen::VectorXd planted(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    auto off = static_cast<int>(uniform01(rng) * span);
    off = std::min(off, spec.planted_hi - spec.planted_lo);
    planted(j) = static_cast<double>(spec.planted_lo + off);
  }

  Eigen::VectorXd y = z * planted;
  if (spec.label_noise_std > 0.0)
    for (Eigen::Index k = 0; k < m; ++k) y(k) += spec.label_noise_std * gauss(rng);

  return Problem(std::move(z), std::move(y), spec.noise_sigma, std::move(planted), seed);
}

/// Minimum-norm least-squares solution of Z x = y.
inline OptimumSummary solve_optimum(const Problem& p) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(p.features());
  OptimumSummary out;
  out.x_star = cod.solve(p.labels());
  out.f_star = p.global_loss(out.x_star);
  out.rank = cod.rank();
  const auto full = std::min(p.features().rows(), p.features().cols());
  out.ill_conditioned = out.rank < full;
  return out;
}

// ---------------------------------------------------------------------------
// Replayable text bundle.

inline std::string format_problem(const Problem& p) {
  std::string out = "goco-problem 1\n";
  out += "m " + std::to_string(p.subsets()) + "\n";
  out += "dim " + std::to_string(p.dim()) + "\n";
  out += "seed " + std::to_string(p.seed()) + "\n";
  out += "sigma0 " + text::format_double(p.noise_sigma()) + "\n";
  if (p.planted()) {
    out += "planted";
    for (Eigen::Index j = 0; j < p.planted()->size(); ++j)
      out += ' ' + text::format_double((*p.planted())(j));
    out += '\n';
  }
  out += "labels";
  for (Eigen::Index k = 0; k < p.labels().size(); ++k) out += ' ' + text::format_double(p.labels()(k));
  out += "\nfeatures\n";
  out += text::format_matrix(p.features());
  return out;
}

inline Problem parse_problem(std::string_view contents, const std::string& source) {
  auto lines = text::split(contents, '\n');
  std::size_t idx = 0;
  auto fail = [&](const std::string& why) {
    throw ConfigError(source + ":" + std::to_string(idx) + ": " + why);
  };
  auto next = [&]() -> std::string_view {
    if (idx >= lines.size()) fail("unexpected end of bundle");
    return text::trim(lines[idx++]);
  };
  if (next() != "goco-problem 1") fail("missing 'goco-problem 1' header");
  std::size_t m = 0, dim = 0;
  std::uint64_t seed = 0;
  double sigma0 = 0.0;
  std::optional<Eigen::VectorXd> planted;
  Eigen::VectorXd labels;
  auto read_vector = [&](std::vector<std::string_view> toks, std::size_t expected) {
    if (toks.size() - 1 != expected) fail("wrong element count");
    Eigen::VectorXd v(static_cast<Eigen::Index>(expected));
    for (std::size_t j = 0; j < expected; ++j) {
      auto x = text::parse_double(toks[j + 1]);
      if (!x) fail("not a number");
      v(static_cast<Eigen::Index>(j)) = *x;
    }
    return v;
  };
  for (;;) {
    auto line = next();
    auto toks = text::split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "features") break;
    if (toks[0] == "m" && toks.size() == 2) {
      m = text::parse_int<std::size_t>(toks[1]).value_or(0);
    } else if (toks[0] == "dim" && toks.size() == 2) {
      dim = text::parse_int<std::size_t>(toks[1]).value_or(0);
    } else if (toks[0] == "seed" && toks.size() == 2) {
      seed = text::parse_int<std::uint64_t>(toks[1]).value_or(0);
    } else if (toks[0] == "sigma0" && toks.size() == 2) {
      auto v = text::parse_double(toks[1]);
      if (!v) fail("bad sigma0");
      sigma0 = *v;
    } else if (toks[0] == "planted") {
      planted = read_vector(toks, dim);
    } else if (toks[0] == "labels") {
      labels = read_vector(toks, m);
    } else {
      fail("unknown field '" + std::string(toks[0]) + "'");
    }
  }
  if (m == 0 || dim == 0) fail("missing dimensions");
  std::string rest;
  for (std::size_t i = idx; i < lines.size(); ++i) {
    rest += lines[i];
    rest += '\n';
  }
  Eigen::MatrixXd z = text::parse_matrix(rest, source);
  if (static_cast<std::size_t>(z.rows()) != m || static_cast<std::size_t>(z.cols()) != dim)
    fail("feature matrix shape mismatch");
  return Problem(std::move(z), std::move(labels), sigma0, std::move(planted), seed);
}

inline void write_problem(const std::filesystem::path& path, const Problem& p) {
  text::write_file(path, format_problem(p));
}

inline Problem read_problem(const std::filesystem::path& path) {
  return parse_problem(text::read_file(path), path.string());
}

}  // namespace goco
