#include <cmath>

#include <gtest/gtest.h>

#include "goco/engine.hpp"

namespace goco {
namespace {

Problem make_problem(std::size_t m, std::size_t dim, double sigma0, std::uint64_t seed = 3) {
  ProblemSpec spec;
  spec.m = m;
  spec.dim = dim;
  spec.noise_sigma = sigma0;
  return generate_problem(spec, seed);
}

Eigen::MatrixXd random_init(std::size_t dim, std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 5.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  for (auto& v : x.reshaped()) v = gauss(rng);
  return x;
}

TEST(Stragglers, Extremes) {
  SplitMix64 rng(1);
  for (int r = 0; r < 100; ++r) {
    for (auto a : sample_stragglers(0.0, 16, rng)) EXPECT_EQ(a, 1);
    for (auto a : sample_stragglers(1.0, 16, rng)) EXPECT_EQ(a, 0);
  }
}

TEST(Stragglers, RateWithinBinomialBand) {
  SplitMix64 rng(derive_seed(17, Purpose::kStragglers));
  std::size_t stragglers = 0;
  const std::size_t rounds = 10000, n = 16;
  for (std::size_t r = 0; r < rounds; ++r)
    for (auto a : sample_stragglers(0.2, n, rng)) stragglers += a == 0;
  const double total = static_cast<double>(rounds * n);
  EXPECT_NEAR(static_cast<double>(stragglers) / total, 0.2, 3.0 * std::sqrt(0.2 * 0.8 / total));
}

TEST(Encode, SingleSubsetIsItsGradient) {
  auto p = make_problem(1, 5, 0.0);
  AssignmentMatrix s(1, 1, {1});
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, 1, 2);
  EXPECT_EQ(encode_gradient(p, s, 0, x, 1, 0), p.exact_gradient(0, x));
}

TEST(Encode, HandEvaluatedHalfWeights) {
  Eigen::MatrixXd z(2, 2);
  z << 1, 0, 0, 2;
  Problem p(z, Eigen::Vector2d(1, 0), 0.0);
  auto s = assign_full_replication(2, 2);
  auto g = encode_gradient(p, s, 0, Eigen::Vector2d(3, 1), 1, 0);
  EXPECT_EQ(g, Eigen::Vector2d(1, 2));
}

TEST(Encode, AverageOverDevicesTelescopes) {
  auto p = make_problem(16, 20, 0.0);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    auto s = assign_uniform_random(16, 16, 3, seed, true);
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(20, -2, 2);
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(20);
    for (std::size_t i = 0; i < 16; ++i) avg += encode_gradient(p, s, i, x, seed, 0);
    avg /= 16.0;
    const Eigen::VectorXd expected = (16.0 / 16.0) * p.global_gradient(x);
    EXPECT_LT((avg - expected).norm(), 1e-11 * expected.norm());
  }
}

TEST(Encode, IdleDeviceGetsZero) {
  auto p = make_problem(2, 4, 1.0);
  AssignmentMatrix s(3, 2, {1, 0, 0, 1, 0, 0}, true);
  EXPECT_EQ(encode_gradient(p, s, 2, Eigen::VectorXd::Ones(4), 1, 0), Eigen::VectorXd::Zero(4));
}

TEST(LocalStep, Examples) {
  EXPECT_EQ(local_step(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 0), 0.5), Eigen::Vector2d(0, 1));
  EXPECT_EQ(local_step(Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 0), 0.5), Eigen::Vector2d(1, 1));
  EXPECT_EQ(local_step(Eigen::Vector2d(1, 1), Eigen::Vector2d(7, 3), 0.0), Eigen::Vector2d(1, 1));
}

NeighborBuffer filled_buffer(const MixingMatrix& w, std::size_t i, const std::vector<double>& scalars) {
  NeighborBuffer b(w.neighbors(i));
  for (auto j : w.neighbors(i)) b.store(j, Eigen::VectorXd::Constant(1, scalars[j]));
  return b;
}

TEST(Gossip, ZeroStepReturnsHalf) {
  auto w = build_ring(5);
  auto b = filled_buffer(w, 0, {0, 1, 2, 3, 4});
  Eigen::VectorXd half = Eigen::VectorXd::Constant(1, 7.0);
  EXPECT_EQ(gossip_step(half, b, Eigen::VectorXd::Constant(1, 0.0), w, 0, 0.0), half);
}

TEST(Gossip, CompleteThreeLandsOnMean) {
  auto w = build_complete(3);
  const std::vector<double> x = {0, 3, 6};
  for (std::size_t i = 0; i < 3; ++i) {
    auto b = filled_buffer(w, i, x);
    Eigen::VectorXd xi = Eigen::VectorXd::Constant(1, x[i]);
    auto out = gossip_step(xi, b, xi, w, i, 1.0);
    EXPECT_NEAR(out(0), 3.0, 1e-15);
  }
}

TEST(Gossip, ConsensusIsFixedPoint) {
  auto w = build_ring(6);
  auto b = filled_buffer(w, 2, std::vector<double>(6, 4.0));
  Eigen::VectorXd half = Eigen::VectorXd::Constant(1, 3.5);
  EXPECT_EQ(gossip_step(half, b, Eigen::VectorXd::Constant(1, 4.0), w, 2, 0.7), half);
}

TEST(Gossip, CorrectionUsesPreHalfStepParameter) {
  Eigen::MatrixXd wm(2, 2);
  wm << 0.5, 0.5, 0.5, 0.5;
  auto w = MixingMatrix::from_weights(wm);
  NeighborBuffer b(w.neighbors(0));
  b.store(1, Eigen::VectorXd::Constant(1, 3.0));
  auto out = gossip_step(Eigen::VectorXd::Constant(1, 0.5), b, Eigen::VectorXd::Constant(1, 1.0), w, 0, 1.0);
  EXPECT_DOUBLE_EQ(out(0), 1.5);  // 0.75 away from the x_half mis-read
}

TEST(Gossip, MissingBufferEntryIsProtocolError) {
  auto w = build_ring(4);
  NeighborBuffer b(w.neighbors(0));
  b.store(1, Eigen::VectorXd::Zero(1));
  EXPECT_THROW(gossip_step(Eigen::VectorXd::Zero(1), b, Eigen::VectorXd::Zero(1), w, 0, 0.1), ProtocolError);
  EXPECT_THROW(b.store(2, Eigen::VectorXd::Zero(1)), ProtocolError);
}

TEST(Bits, Examples) {
  auto ring = build_ring(16);
  std::vector<std::uint8_t> active(16, 0);
  for (int i = 0; i < 13; ++i) active[i] = 1;
  EXPECT_EQ(account_bits(active, ring, 100, 64), 166400u);
  EXPECT_EQ(account_bits(std::vector<std::uint8_t>(16, 0), ring, 100, 64), 0u);
  EXPECT_EQ(account_bits(std::vector<std::uint8_t>(16, 1), build_complete(16), 100, 64), 1536000u);
}

TEST(Run, AllStragglersFreezeEverything) {
  auto p = make_problem(8, 10, 1.0);
  auto s = assign_uniform_random(8, 8, 3, 1, true);
  auto w = build_ring(8);
  RunConfig cfg;
  cfg.p = 1.0;
  cfg.iterations = 50;
  cfg.allow_idle = true;
  auto x0 = random_init(10, 8, 4);
  Simulation sim(p, s, w, cfg, x0);
  for (int t = 0; t < 50; ++t) sim.step();
  EXPECT_EQ(sim.params(), x0);
  EXPECT_EQ(sim.cumulative_bits(), 0u);

  auto tel = run(p, s, w, cfg, x0);
  for (const auto& row : tel.rows) {
    EXPECT_EQ(row.loss, tel.initial.loss);
    EXPECT_EQ(row.cum_bits, 0u);
    EXPECT_EQ(row.stragglers, 8u);
  }
}

TEST(Run, MatchesGradientDescentUnderFullReplication) {
  auto p = make_problem(16, 30, 0.0);
  auto s = assign_full_replication(16, 16);
  auto w = build_complete(16);
  RunConfig cfg;
  cfg.p = 0.0;
  cfg.eta = 1e-4;
  Simulation sim(p, s, w, cfg);
  Eigen::VectorXd gd = Eigen::VectorXd::Zero(30);
  for (int t = 0; t < 300; ++t) {
    sim.step();
    gd -= cfg.eta * (16.0 / 16.0) * p.global_gradient(gd);
    const double dev = (sim.params().colwise() - gd).cwiseAbs().maxCoeff();
    ASSERT_LE(dev, 1e-10) << "iteration " << t;
  }
}

TEST(Run, MeanEvolutionIdentityWithoutStragglers) {
  auto p = make_problem(16, 25, 1.0);
  auto s = assign_uniform_random(16, 16, 3, 8, true);
  auto w = build_ring(16);
  RunConfig cfg;
  cfg.p = 0.0;
  cfg.allow_idle = true;
  Simulation sim(p, s, w, cfg, random_init(25, 16, 9));
  for (int t = 0; t < 200; ++t) {
    const Eigen::VectorXd before = sim.mean();
    auto rec = sim.step();
    const Eigen::VectorXd predicted = before - cfg.eta / 16.0 * rec.gradients.rowwise().sum();
    ASSERT_LT((sim.mean() - predicted).cwiseAbs().maxCoeff(), 1e-10) << t;
  }
}

class PureGossip : public ::testing::TestWithParam<std::tuple<int, double>> {};

TEST_P(PureGossip, ContractsAtRhoGammaAndPreservesMean) {
  const auto [kind, gamma] = GetParam();
  auto w = kind == 0 ? build_ring(16) : build_complete(16);
  const double rho = spectral_summary(w).rho;
  auto p = make_problem(16, 12, 1.0);
  auto s = assign_full_replication(16, 16);
  RunConfig cfg;
  cfg.eta = 0.0;
  cfg.p = 0.0;
  cfg.gamma = gamma;
  Simulation sim(p, s, w, cfg, random_init(12, 16, 21));
  const double factor = (1.0 - rho * gamma) * (1.0 - rho * gamma);
  // Once the error is contracted to rounding level it can no longer shrink.
  const double floor = 1e-24 * sim.params().squaredNorm();
  for (int t = 0; t < 200; ++t) {
    const double before = sim.consensus();
    const Eigen::VectorXd mean_before = sim.mean();
    sim.step();
    ASSERT_LE(sim.consensus(), factor * before * (1.0 + 1e-9) + floor) << t;
    ASSERT_LT((sim.mean() - mean_before).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + mean_before.cwiseAbs().maxCoeff()));
  }
}

INSTANTIATE_TEST_SUITE_P(RingAndComplete, PureGossip,
                         ::testing::Combine(::testing::Values(0, 1), ::testing::Values(0.05, 0.5, 1.0)));

TEST(Run, StragglersFreezeAndBuffersStayCurrent) {
  auto p = make_problem(16, 15, 1.0);
  auto s = assign_uniform_random(16, 16, 3, 2, true);
  auto w = build_ring(16);
  RunConfig cfg;
  cfg.p = 0.4;
  cfg.allow_idle = true;
  Simulation sim(p, s, w, cfg, random_init(15, 16, 5));
  std::size_t frozen = 0;
  for (int t = 0; t < 300; ++t) {
    const Eigen::MatrixXd before = sim.params();
    auto rec = sim.step();
    for (std::size_t i = 0; i < 16; ++i) {
      if (rec.active[i]) continue;
      ++frozen;
      ASSERT_EQ(sim.params().col(static_cast<Eigen::Index>(i)), before.col(static_cast<Eigen::Index>(i)));
    }
    ASSERT_TRUE(sim.buffers_consistent());
  }
  EXPECT_GT(frozen, 0u);
}

TEST(Run, TelemetryCadenceAndDeterminism) {
  auto p = make_problem(16, 20, 1.0);
  auto s = assign_uniform_random(16, 16, 3, 6, true);
  auto w = build_ring(16);
  RunConfig cfg;
  cfg.iterations = 95;
  cfg.loss_every = 10;
  cfg.allow_idle = true;
  auto a = run(p, s, w, cfg);
  auto b = run(p, s, w, cfg);
  ASSERT_EQ(a.rows.size(), 10u);
  EXPECT_EQ(a.rows.front().t, 10u);
  EXPECT_EQ(a.rows.back().t, 95u);
  EXPECT_EQ(format_telemetry_csv(a), format_telemetry_csv(b));
  for (std::size_t r = 1; r < a.rows.size(); ++r) EXPECT_GE(a.rows[r].cum_bits, a.rows[r - 1].cum_bits);
  for (const auto& row : a.rows) EXPECT_GE(row.consensus_err, 0.0);

  cfg.seed = 2;
  EXPECT_NE(format_telemetry_csv(run(p, s, w, cfg)), format_telemetry_csv(a));
}

TEST(Run, CsvRoundTripIsExact) {
  auto p = make_problem(16, 20, 1.0);
  auto s = assign_uniform_random(16, 16, 3, 6, true);
  RunConfig cfg;
  cfg.iterations = 40;
  cfg.allow_idle = true;
  auto tel = run(p, s, build_ring(16), cfg);
  EXPECT_EQ(parse_telemetry_csv(format_telemetry_csv(tel), "mem"), tel.rows);
}

TEST(Run, DivergenceNamesIteration) {
  auto p = make_problem(16, 100, 1.0);
  auto s = assign_uniform_random(16, 16, 3, 6, true);
  RunConfig cfg;
  cfg.eta = 5.0;
  cfg.iterations = 5000;
  cfg.allow_idle = true;
  try {
    run(p, s, build_ring(16), cfg);
    FAIL() << "expected divergence";
  } catch (const RunDivergedError& e) {
    EXPECT_GT(e.iteration(), 0u);
    EXPECT_TRUE(e.partial().diverged);
    EXPECT_EQ(e.partial().diverged_at, e.iteration());
    EXPECT_EQ(e.partial().rows.size(), e.iteration() - 1);
    EXPECT_NE(std::string(e.what()).find(std::to_string(e.iteration())), std::string::npos);
  }
}

TEST(Run, DimensionMismatchIsConfigError) {
  auto p = make_problem(8, 5, 0.0);
  auto s = assign_full_replication(8, 8);
  EXPECT_THROW(run(p, s, build_ring(9), RunConfig{}), ConfigError);
  auto p2 = make_problem(7, 5, 0.0);
  EXPECT_THROW(run(p2, s, build_ring(8), RunConfig{}), ConfigError);
}

TEST(Run, IdleDeviceNeedsFlag) {
  auto p = make_problem(2, 3, 0.0);
  AssignmentMatrix s(3, 2, {1, 0, 0, 1, 0, 0}, true);
  RunConfig cfg;
  cfg.iterations = 3;
  EXPECT_THROW(run(p, s, build_ring(3), cfg), ConfigError);
  cfg.allow_idle = true;
  EXPECT_NO_THROW(run(p, s, build_ring(3), cfg));
}

TEST(Run, ConfigValidation) {
  RunConfig cfg;
  cfg.p = 1.5;
  EXPECT_THROW(validate_run_config(cfg, 1.0), ConfigError);
  cfg = RunConfig{};
  cfg.gamma = 0.0;
  EXPECT_THROW(validate_run_config(cfg, 1.0), ConfigError);
  cfg = RunConfig{};
  cfg.gamma = 2.0;
  EXPECT_EQ(validate_run_config(cfg, 4.0 / 3.0).size(), 1u);
  cfg.gamma = 0.05;
  EXPECT_TRUE(validate_run_config(cfg, 4.0 / 3.0).empty());
}

}  // namespace
}  // namespace goco
