#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "goco/error.hpp"
#include "goco/text_io.hpp"

namespace goco {

inline constexpr double kStochasticTolerance = 1e-12;

/// Symmetric doubly stochastic mixing matrix together with the undirected
/// communication graph it induces ({i,j} is an edge iff w_ij > 0, i != j).
///
/// Instances only come out of the factory functions below, all of which
/// validate the invariants, so holders may rely on them.
class MixingMatrix {
 public:
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  double weight(std::size_t i, std::size_t j) const {
    return weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  // Sorted neighbor list of device i (self excluded).
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  std::size_t degree(std::size_t i) const { return neighbors_.at(i).size(); }

  // Unordered edges {i,j}, i < j.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (auto j : neighbors_[i])
        if (i < j) out.emplace_back(i, j);
    return out;
  }

  bool is_connected() const {
    const std::size_t n = size();
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      for (auto u : neighbors_[v]) {
        if (!seen[u]) {
          seen[u] = true;
          ++count;
          stack.push_back(u);
        }
      }
    }
    return count == n;
  }

  /// Validating entry point for user-supplied matrices. Checks squareness,
  /// entries in [0,1], symmetry and unit row/column sums within `tol`, and a
  /// positive diagonal.
  static MixingMatrix from_weights(Eigen::MatrixXd w, double tol = kStochasticTolerance) {
    if (w.rows() == 0 || w.rows() != w.cols()) {
      throw InvalidTopologyError("mixing matrix must be square and non-empty, got " +
                                 std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    }
    const Eigen::Index n = w.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double v = w(i, j);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
          throw InvalidTopologyError("weight w(" + std::to_string(i) + "," + std::to_string(j) +
                                     ") = " + text::format_double(v) + " outside [0,1]");
        }
        if (std::abs(v - w(j, i)) > tol) {
          throw InvalidTopologyError("mixing matrix not symmetric at (" + std::to_string(i) + "," +
                                     std::to_string(j) + ")");
        }
      }
      if (!(w(i, i) > 0.0)) {
        throw InvalidTopologyError("diagonal weight w(" + std::to_string(i) + "," +
                                   std::to_string(i) + ") must be positive");
      }
      if (std::abs(w.row(i).sum() - 1.0) > tol) {
        throw InvalidTopologyError("row " + std::to_string(i) + " sums to " +
                                   text::format_double(w.row(i).sum()));
      }
      if (std::abs(w.col(i).sum() - 1.0) > tol) {
        throw InvalidTopologyError("column " + std::to_string(i) + " sums to " +
                                   text::format_double(w.col(i).sum()));
      }
    }
    // Symmetrize exactly so downstream code can rely on W == W^T bitwise.
    Eigen::MatrixXd sym = w;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) sym(j, i) = sym(i, j);
    return MixingMatrix(std::move(sym));
  }

 private:
  explicit MixingMatrix(Eigen::MatrixXd w) : weights_(std::move(w)) {
    const auto n = size();
    neighbors_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && weight(i, j) > 0.0) neighbors_[i].push_back(j);
  }

  Eigen::MatrixXd weights_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

struct SpectralSummary {
  double lambda2_abs = 0.0;  // |lambda_2(W)|
  double rho = 0.0;          // 1 - |lambda_2(W)|
  double beta = 0.0;         // ||I - W||_2
  Eigen::VectorXd eigenvalues;  // ascending
};

// Cycle 0-1-...-(n-1)-0 with uniform 1/3 weight on self and both neighbors.
inline MixingMatrix build_ring(std::size_t n) {
  if (n < 3) throw InvalidTopologyError("ring needs n >= 3, got " + std::to_string(n));
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(N, N);
  const double third = 1.0 / 3.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    w(i, i) = third;
    w(i, (i + 1) % N) = third;
    w(i, (i + N - 1) % N) = third;
  }
  return MixingMatrix::from_weights(std::move(w));
}

inline MixingMatrix build_complete(std::size_t n) {
  if (n < 2) throw InvalidTopologyError("complete graph needs n >= 2, got " + std::to_string(n));
  const auto N = static_cast<Eigen::Index>(n);
  return MixingMatrix::from_weights(Eigen::MatrixXd::Constant(N, N, 1.0 / static_cast<double>(n)));
}

/// Eigen-decomposes the symmetric W. The eigenvalue nearest 1 is taken as
/// lambda_1 (the consensus direction, W1 = 1); lambda2_abs is the largest
/// absolute value among the rest. beta is max |1 - lambda| since I - W is
/// symmetric.
inline SpectralSummary spectral_summary(const MixingMatrix& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w.weights(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    std::ostringstream dump;
    dump << "eigensolver failed to converge on mixing matrix:\n" << text::format_matrix(w.weights());
    throw NumericError(dump.str());
  }
  SpectralSummary out;
  out.eigenvalues = solver.eigenvalues();
  const Eigen::Index n = out.eigenvalues.size();
  if (n == 1) {
    out.lambda2_abs = 0.0;
    out.rho = 1.0;
    out.beta = std::abs(1.0 - out.eigenvalues(0));
    return out;
  }
  Eigen::Index top = 0;
  for (Eigen::Index k = 1; k < n; ++k)
    if (std::abs(out.eigenvalues(k) - 1.0) < std::abs(out.eigenvalues(top) - 1.0)) top = k;
  double second = 0.0;
  double beta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    beta = std::max(beta, std::abs(1.0 - out.eigenvalues(k)));
    if (k != top) second = std::max(second, std::abs(out.eigenvalues(k)));
  }
  out.lambda2_abs = std::min(second, 1.0);
  out.rho = 1.0 - out.lambda2_abs;
  out.beta = beta;
  return out;
}

inline MixingMatrix read_mixing_matrix(const std::filesystem::path& path) {
  auto contents = text::read_file(path);
  return MixingMatrix::from_weights(text::parse_matrix(contents, path.string()));
}

inline std::string format_mixing_matrix(const MixingMatrix& w) {
  return text::format_matrix(w.weights());
}

}  // namespace goco
