#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "goco/error.hpp"
#include "goco/rng.hpp"
#include "goco/text_io.hpp"

namespace goco {

/// Binary n x m placement matrix: s(i,k) = 1 iff device i holds subset k.
/// Replication degrees d_k are the column sums and are kept alongside.
class AssignmentMatrix {
 public:
  AssignmentMatrix() = default;

  /// Validating constructor. Row-major `entries` of size n*m, each 0 or 1;
  /// every column must be held by at least one device. Idle devices (empty
  /// rows) are rejected unless `allow_idle`.
  AssignmentMatrix(std::size_t n, std::size_t m, std::vector<std::uint8_t> entries,
                   bool allow_idle = false)
      : n_(n), m_(m), s_(std::move(entries)), d_(m, 0) {
    if (n_ == 0 || m_ == 0) throw ConfigError("assignment dimensions must be positive");
    if (s_.size() != n_ * m_) throw ConfigError("assignment entry count does not match n*m");
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < m_; ++k) {
        const auto v = s_[i * m_ + k];
        if (v > 1) throw ConfigError("assignment entries must be 0 or 1");
        d_[k] += v;
      }
    }
    for (std::size_t k = 0; k < m_; ++k) {
      if (d_[k] == 0) throw InfeasibleError("subset " + std::to_string(k) + " is held by no device");
    }
    if (!allow_idle) {
      for (std::size_t i = 0; i < n_; ++i) {
        if (subsets_held(i) == 0) {
          throw InfeasibleError("device " + std::to_string(i) +
                                " holds no subset; set allow_idle to permit idle devices");
        }
      }
    }
  }

  std::size_t devices() const noexcept { return n_; }
  std::size_t subsets() const noexcept { return m_; }
  bool holds(std::size_t i, std::size_t k) const { return s_[i * m_ + k] != 0; }
  std::uint8_t at(std::size_t i, std::size_t k) const { return s_[i * m_ + k]; }
  const std::vector<std::size_t>& degrees() const noexcept { return d_; }
  std::size_t degree(std::size_t k) const { return d_.at(k); }

  std::size_t subsets_held(std::size_t i) const {
    std::size_t c = 0;
    for (std::size_t k = 0; k < m_; ++k) c += s_[i * m_ + k];
    return c;
  }

  std::size_t total_placements() const {
    return static_cast<std::size_t>(std::count(s_.begin(), s_.end(), std::uint8_t{1}));
  }

  bool has_idle_device() const {
    for (std::size_t i = 0; i < n_; ++i)
      if (subsets_held(i) == 0) return true;
    return false;
  }

  bool operator==(const AssignmentMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<std::uint8_t> s_;
  std::vector<std::size_t> d_;
};

struct BalanceReport {
  std::size_t m = 0;
  std::vector<std::size_t> pair_counts;  // m x m row-major, c(k1,k2)
  std::vector<double> targets;           // m x m row-major, d_k1 d_k2 / n
  double max_abs_deviation = 0.0;        // over k1 != k2
  bool exact = false;

  std::size_t count(std::size_t k1, std::size_t k2) const { return pair_counts[k1 * m + k2]; }
  double target(std::size_t k1, std::size_t k2) const { return targets[k1 * m + k2]; }
  double deviation(std::size_t k1, std::size_t k2) const {
    return static_cast<double>(count(k1, k2)) - target(k1, k2);
  }
};

struct EncodingCoefficients {
  std::vector<double> a;  // a_i = sum_k s(i,k) / d_k
  double a_max = 0.0;
  double a_min = 0.0;
};

/// For each subset k, draws d[k] distinct devices uniformly at random via a
/// partial Fisher-Yates shuffle on the seeded stream.
inline AssignmentMatrix assign_uniform_random(std::size_t n, std::size_t m,
                                              const std::vector<std::size_t>& d,
                                              std::uint64_t seed, bool allow_idle = false) {
  if (n == 0 || m == 0) throw ConfigError("assignment dimensions must be positive");
  if (d.size() != m) {
    throw ConfigError("replication vector has " + std::to_string(d.size()) + " entries, expected " +
                      std::to_string(m));
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (d[k] < 1 || d[k] > n) {
      throw InfeasibleError("replication degree d_" + std::to_string(k) + " = " +
                            std::to_string(d[k]) + " not in [1, " + std::to_string(n) + "]");
    }
  }
  SplitMix64 rng(seed);
  std::vector<std::uint8_t> s(n * m, 0);
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < m; ++k) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t j = 0; j < d[k]; ++j) {
      const std::size_t span = n - j;
      const auto r = j + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(span));
      std::swap(perm[j], perm[std::min(r, n - 1)]);
      s[perm[j] * m + k] = 1;
    }
  }
  return AssignmentMatrix(n, m, std::move(s), allow_idle);
}

inline AssignmentMatrix assign_uniform_random(std::size_t n, std::size_t m, std::size_t d,
                                              std::uint64_t seed, bool allow_idle = false) {
  return assign_uniform_random(n, m, std::vector<std::size_t>(m, d), seed, allow_idle);
}

/// Each subset on exactly one device: subset k goes to perm[k mod n] for a
/// seeded random device permutation. m < n leaves devices idle, which then
/// needs `allow_idle`.
inline AssignmentMatrix assign_no_redundancy(std::size_t n, std::size_t m, std::uint64_t seed,
                                             bool allow_idle = false) {
  if (n == 0 || m == 0) throw ConfigError("assignment dimensions must be positive");
  SplitMix64 rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t j = n; j > 1; --j) {
    const auto r = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(j)), j - 1);
    std::swap(perm[j - 1], perm[r]);
  }
  std::vector<std::uint8_t> s(n * m, 0);
  for (std::size_t k = 0; k < m; ++k) s[perm[k % n] * m + k] = 1;
  return AssignmentMatrix(n, m, std::move(s), allow_idle);
}

inline AssignmentMatrix assign_full_replication(std::size_t n, std::size_t m) {
  return AssignmentMatrix(n, m, std::vector<std::uint8_t>(n * m, 1));
}

/// Co-location counts by exact integer arithmetic. A pair is on target iff
/// n * c(k1,k2) == d_k1 * d_k2, so `exact` never depends on rounding.
inline BalanceReport verify_pairwise_balance(const AssignmentMatrix& s) {
  const auto n = s.devices();
  const auto m = s.subsets();
  BalanceReport r;
  r.m = m;
  r.pair_counts.assign(m * m, 0);
  r.targets.assign(m * m, 0.0);
  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < n; ++i) {
    held.clear();
    for (std::size_t k = 0; k < m; ++k)
      if (s.holds(i, k)) held.push_back(k);
    for (auto k1 : held)
      for (auto k2 : held) ++r.pair_counts[k1 * m + k2];
  }
  bool exact = true;
  double max_dev = 0.0;
  for (std::size_t k1 = 0; k1 < m; ++k1) {
    for (std::size_t k2 = 0; k2 < m; ++k2) {
      const auto prod = s.degree(k1) * s.degree(k2);
      r.targets[k1 * m + k2] = static_cast<double>(prod) / static_cast<double>(n);
      if (k1 == k2) continue;
      const auto scaled = n * r.pair_counts[k1 * m + k2];
      if (scaled != prod) {
        exact = false;
        const auto diff = scaled > prod ? scaled - prod : prod - scaled;
        max_dev = std::max(max_dev, static_cast<double>(diff) / static_cast<double>(n));
      }
    }
  }
  r.exact = exact;
  r.max_abs_deviation = max_dev;
  return r;
}

inline EncodingCoefficients encoding_coefficients(const AssignmentMatrix& s) {
  EncodingCoefficients out;
  out.a.assign(s.devices(), 0.0);
  for (std::size_t i = 0; i < s.devices(); ++i)
    for (std::size_t k = 0; k < s.subsets(); ++k)
      if (s.holds(i, k)) out.a[i] += 1.0 / static_cast<double>(s.degree(k));
  out.a_max = *std::max_element(out.a.begin(), out.a.end());
  out.a_min = *std::min_element(out.a.begin(), out.a.end());
  return out;
}

// ---------------------------------------------------------------------------
// Text formats

inline std::string format_assignment(const AssignmentMatrix& s) {
  std::string out;
  for (std::size_t i = 0; i < s.devices(); ++i) {
    for (std::size_t k = 0; k < s.subsets(); ++k) {
      if (k) out += ' ';
      out += s.holds(i, k) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline AssignmentMatrix parse_assignment(std::string_view contents, const std::string& source,
                                         bool allow_idle = true) {
  std::vector<std::uint8_t> entries;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t line_no = 0;
  for (auto line : text::split(contents, '\n')) {
    ++line_no;
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto toks = text::split_ws(line, " \t,");
    if (rows == 0) cols = toks.size();
    if (toks.size() != cols) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(cols) + " columns, got " + std::to_string(toks.size()));
    }
    for (auto t : toks) {
      if (t != "0" && t != "1") {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": non-binary entry '" +
                          std::string(t) + "'");
      }
      entries.push_back(t == "1" ? 1 : 0);
    }
    ++rows;
  }
  if (rows == 0) throw ConfigError(source + ": empty assignment matrix");
  return AssignmentMatrix(rows, cols, std::move(entries), allow_idle);
}

inline AssignmentMatrix read_assignment(const std::filesystem::path& path, bool allow_idle = true) {
  return parse_assignment(text::read_file(path), path.string(), allow_idle);
}

// CSV rows k1,k2,count,target,deviation for every unordered pair k1 < k2.
inline std::string format_balance_csv(const BalanceReport& r) {
  std::string out = "k1,k2,count,target,deviation\n";
  for (std::size_t k1 = 0; k1 < r.m; ++k1) {
    for (std::size_t k2 = k1 + 1; k2 < r.m; ++k2) {
      out += std::to_string(k1) + ',' + std::to_string(k2) + ',' + std::to_string(r.count(k1, k2)) +
             ',' + text::format_double(r.target(k1, k2)) + ',' +
             text::format_double(r.deviation(k1, k2)) + '\n';
    }
  }
  return out;
}

}  // namespace goco
