#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "goco/topology.hpp"

namespace goco {
namespace {

// Eigenvalues of a symmetric circulant matrix: DFT of its first row.
std::vector<double> circulant_eigenvalues(const Eigen::MatrixXd& w) {
  const auto n = w.rows();
  std::vector<double> out;
  for (Eigen::Index j = 0; j < n; ++j) {
    double re = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
      re += w(0, k) * std::cos(2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n));
    out.push_back(re);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Metropolis-Hastings weights on a random connected graph (ring plus chords).
Eigen::MatrixXd random_metropolis(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) adj[i][(i + 1) % n] = adj[(i + 1) % n][i] = true;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t c = 0; c < n; ++c) {
    auto a = pick(rng), b = pick(rng);
    if (a != b) adj[a][b] = adj[b][a] = true;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += adj[i][j];
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (adj[i][j]) w(i, j) = 1.0 / (1.0 + std::max(deg[i], deg[j]));
    w(i, i) = 1.0 - w.row(i).sum();
  }
  return w;
}

TEST(Ring, ThreeDevicesIsUniform) {
  auto w = build_ring(3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(w.weight(i, j), 1.0 / 3.0);
}

TEST(Ring, FourDevicesRowZero) {
  auto w = build_ring(4);
  EXPECT_DOUBLE_EQ(w.weight(0, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(w.weight(0, 1), 1.0 / 3.0);
  EXPECT_EQ(w.weight(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(w.weight(0, 3), 1.0 / 3.0);
}

TEST(Ring, SixteenDevicesStructure) {
  auto w = build_ring(16);
  std::size_t self_loops = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_LT(std::abs(w.weights().row(static_cast<Eigen::Index>(i)).sum() - 1.0), 1e-12);
    self_loops += w.weight(i, i) > 0.0;
    EXPECT_EQ(w.degree(i), 2u);
  }
  EXPECT_EQ(self_loops, 16u);
  EXPECT_EQ(w.edges().size(), 16u);
  EXPECT_TRUE(w.is_connected());
}

TEST(Ring, TooSmallThrows) {
  EXPECT_THROW(build_ring(2), InvalidTopologyError);
  EXPECT_THROW(build_ring(0), InvalidTopologyError);
}

TEST(Complete, Entries) {
  auto w2 = build_complete(2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(w2.weight(i, j), 0.5);
  auto w16 = build_complete(16);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(w16.weight(i, j), 0.0625);
  EXPECT_THROW(build_complete(1), InvalidTopologyError);
}

TEST(Spectral, CompleteGraphRhoAndBetaAreOne) {
  for (std::size_t n : {2u, 5u, 16u, 40u}) {
    auto s = spectral_summary(build_complete(n));
    EXPECT_NEAR(s.rho, 1.0, 1e-12) << n;
    EXPECT_NEAR(s.beta, 1.0, 1e-12) << n;
  }
}

TEST(Spectral, RingMatchesCirculantOracle) {
  for (std::size_t n : {3u, 4u, 7u, 16u, 33u}) {
    auto w = build_ring(n);
    auto s = spectral_summary(w);
    auto oracle = circulant_eigenvalues(w.weights());
    ASSERT_EQ(static_cast<std::size_t>(s.eigenvalues.size()), oracle.size());
    for (std::size_t k = 0; k < oracle.size(); ++k)
      EXPECT_NEAR(s.eigenvalues(static_cast<Eigen::Index>(k)), oracle[k], 1e-10);
  }
}

TEST(Spectral, Ring16Values) {
  auto s = spectral_summary(build_ring(16));
  const double lambda2 = (1.0 + 2.0 * std::cos(2.0 * std::numbers::pi / 16.0)) / 3.0;
  EXPECT_NEAR(s.rho, 1.0 - lambda2, 1e-10);
  EXPECT_NEAR(s.rho, 0.0507470, 1e-7);
  EXPECT_NEAR(s.beta, 4.0 / 3.0, 1e-10);
  EXPECT_EQ(s.rho, 1.0 - s.lambda2_abs);
}

TEST(Spectral, RandomConnectedGraphsProperties) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 3 + trial % 20;
    auto w = MixingMatrix::from_weights(random_metropolis(n, rng));
    EXPECT_EQ(w.weights(), w.weights().transpose());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    EXPECT_LT((w.weights() * ones - ones).cwiseAbs().maxCoeff(), 1e-12);
    auto s = spectral_summary(w);
    EXPECT_GT(s.rho, 0.0);
    EXPECT_LE(s.rho, 1.0);
    EXPECT_GE(s.beta, 0.0);
  }
}

TEST(FromWeights, RejectsBadMatrices) {
  Eigen::MatrixXd asym(2, 2);
  asym << 0.6, 0.4, 0.3, 0.7;
  EXPECT_THROW(MixingMatrix::from_weights(asym), InvalidTopologyError);

  Eigen::MatrixXd not_stochastic(2, 2);
  not_stochastic << 0.5, 0.4, 0.4, 0.5;
  EXPECT_THROW(MixingMatrix::from_weights(not_stochastic), InvalidTopologyError);

  Eigen::MatrixXd zero_diag(2, 2);
  zero_diag << 0.0, 1.0, 1.0, 0.0;
  EXPECT_THROW(MixingMatrix::from_weights(zero_diag), InvalidTopologyError);

  Eigen::MatrixXd negative(2, 2);
  negative << 1.2, -0.2, -0.2, 1.2;
  EXPECT_THROW(MixingMatrix::from_weights(negative), InvalidTopologyError);

  EXPECT_THROW(MixingMatrix::from_weights(Eigen::MatrixXd(2, 3)), InvalidTopologyError);
}

TEST(FromWeights, GraphConsistency) {
  Eigen::MatrixXd w(3, 3);
  w << 0.5, 0.5, 0.0, 0.5, 0.25, 0.25, 0.0, 0.25, 0.75;
  auto m = MixingMatrix::from_weights(w);
  EXPECT_EQ(m.neighbors(0), (std::vector<std::size_t>{1}));
  EXPECT_EQ(m.neighbors(1), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(m.edges().size(), 2u);
}

TEST(MatrixFile, RoundTripIsExact) {
  auto w = build_ring(9);
  auto text = format_mixing_matrix(w);
  auto back = MixingMatrix::from_weights(text::parse_matrix(text, "mem"));
  EXPECT_EQ(back.weights(), w.weights());
}

TEST(MatrixFile, MalformedRowsReported) {
  EXPECT_THROW(text::parse_matrix("0.5 0.5\n0.5\n", "bad.txt"), ConfigError);
  EXPECT_THROW(text::parse_matrix("0.5 x\n", "bad.txt"), ConfigError);
}

}  // namespace
}  // namespace goco
