#pragma once

// Convergence constants of GOCO for strongly convex losses, together with
// the predicted envelope phi1/sqrt(T) + phi2/T + phi3/(T sqrt(T)).
//
// The regularity parameters are inputs. Nothing here estimates them from a
// problem instance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "goco/assignment.hpp"
#include "goco/error.hpp"
#include "goco/text_io.hpp"

namespace goco::theory {

struct RegularityParams {
  double mu = 1.0;       // strong convexity of every f_k
  double L = 1.0;        // smoothness of every f_k
  double C = 0.0;        // ||grad f_k(x*) - grad f(x*)|| <= C
  double G = 1.0;        // E||grad F_k||^2 <= G^2
  std::vector<double> sigma;  // per-subset variance bounds sigma_k
  double lambda0 = 1.0;  // eta = lambda0 / sqrt(T)
  double initial_distance = 0.0;  // ||xbar^0 - x*||
};

struct StructuralInputs {
  std::size_t n = 0;
  std::size_t m = 0;
  double p = 0.0;
  std::vector<std::size_t> d;  // replication degrees, length m
  double a_min = 0.0;
  double a_max = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  double beta = 0.0;
};

struct TheoryConstants {
  double q11 = 0, q12 = 0, q21 = 0, q22 = 0;
  double w1 = 0, w2 = 0, kappa0 = 0;
  double phi1 = 0, phi2 = 0, phi3 = 0;
  double T_min = 0;
  // Smaller root of 1 - q11 eta + q12 eta^2 (or q11/(2 q12) when complex).
  double eta_max = 0;

  double q1(double eta) const { return 1.0 - q11 * eta + q12 * eta * eta; }
  double q2(double eta) const { return q21 * eta * eta + q22 * eta; }
};

struct MuCondition {
  double ratio = 0.0;   // gamma^2 kappa0 beta^2 / (m a_min (1-p)(1-w1))
  double margin = 0.0;  // mu / ratio
  bool satisfied = false;
};

struct BoundRow {
  double T = 0.0;
  double bound = 0.0;
  bool below_T_min = false;
};

using Rational = boost::multiprecision::cpp_rational;

// w2 = sum 1/d_k + (1/n)(sum 1/d_k)(sum d_k) - m/n, in exact arithmetic.
inline Rational w2_closed_form_exact(std::size_t n, const std::vector<std::size_t>& d) {
  Rational inv = 0;
  Rational tot = 0;
  for (auto dk : d) {
    inv += Rational(1, static_cast<long long>(dk));
    tot += static_cast<long long>(dk);
  }
  const Rational nn = static_cast<long long>(n);
  return inv + inv * tot / nn - Rational(static_cast<long long>(d.size())) / nn;
}

inline double w2_closed_form(std::size_t n, const std::vector<std::size_t>& d) {
  return w2_closed_form_exact(n, d).convert_to<double>();
}

/// sum_i sum_k1 sum_k s(i,k1) s(i,k) / d_k^2, the quantity the closed form
/// replaces under exact pair-wise balance. Exact.
inline Rational brute_force_w2_exact(const AssignmentMatrix& s) {
  Rational total = 0;
  for (std::size_t i = 0; i < s.devices(); ++i) {
    const auto held = static_cast<long long>(s.subsets_held(i));
    for (std::size_t k = 0; k < s.subsets(); ++k) {
      if (!s.holds(i, k)) continue;
      const auto dk = static_cast<long long>(s.degree(k));
      total += Rational(held, dk * dk);
    }
  }
  return total;
}

inline double brute_force_w2(const AssignmentMatrix& s) {
  return brute_force_w2_exact(s).convert_to<double>();
}

inline StructuralInputs structural_inputs(const AssignmentMatrix& s, double p, double gamma,
                                          double rho, double beta) {
  const auto coeff = encoding_coefficients(s);
  return StructuralInputs{s.devices(), s.subsets(), p,     s.degrees(), coeff.a_min,
                          coeff.a_max, gamma,      rho,   beta};
}

inline void validate(const RegularityParams& reg, const StructuralInputs& st) {
  auto bad = [](const std::string& why) { throw ConfigError(why); };
  if (!(reg.mu > 0.0)) bad("mu must be positive");
  if (!(reg.L > 0.0)) bad("L must be positive");
  if (reg.mu > reg.L) bad("mu must not exceed L");
  if (!(reg.C >= 0.0) || !(reg.G >= 0.0)) bad("C and G must be nonnegative");
  if (!(reg.lambda0 > 0.0)) bad("lambda0 must be positive");
  if (!(reg.initial_distance >= 0.0)) bad("initial_distance must be nonnegative");
  if (st.n == 0 || st.m == 0) bad("n and m must be positive");
  if (st.d.size() != st.m) bad("replication vector length must equal m");
  for (auto dk : st.d)
    if (dk < 1 || dk > st.n) bad("replication degrees must lie in [1, n]");
  if (reg.sigma.size() != st.m) bad("sigma must have m entries");
  for (auto s : reg.sigma)
    if (!(s >= 0.0)) bad("sigma entries must be nonnegative");
  if (!(st.p >= 0.0 && st.p <= 1.0)) bad("p must be in [0,1]");
  if (!(st.a_min >= 0.0) || st.a_min > st.a_max) bad("need 0 <= a_min <= a_max");
  if (!(st.beta >= 0.0)) bad("beta must be nonnegative");
}

inline TheoryConstants compute_constants(const RegularityParams& reg, const StructuralInputs& st) {
  validate(reg, st);
  if (st.p >= 1.0) throw DegenerateRegimeError("p = 1: every device straggles, constants undefined");
  if (!(st.gamma * st.rho > 0.0))
    throw DegenerateRegimeError("gamma * rho must be positive (kappa0 divides by it)");

  const double n = static_cast<double>(st.n);
  const double m = static_cast<double>(st.m);
  const double p = st.p;
  const double q = 1.0 - p;
  const double L2 = reg.L * reg.L;
  const double gr = st.gamma * st.rho;

  double excess = 0.0;  // sum_k (1/d_k - 1/n)
  double sigma_term = 0.0;  // sum_k sigma_k^2 / d_k
  for (std::size_t k = 0; k < st.m; ++k) {
    const double dk = static_cast<double>(st.d[k]);
    excess += 1.0 / dk - 1.0 / n;
    sigma_term += reg.sigma[k] * reg.sigma[k] / dk;
  }

  TheoryConstants tc;
  tc.q11 = reg.mu * q * st.a_min / 2.0;
  tc.q12 = 2.0 / (n * n * n) * (p - p * p) * m * m * L2 + 2.0 / (n * n) * q * q * m * m * L2 +
           4.0 * L2 * q * p / (n * n) * excess;
  tc.q21 = 2.0 * q * L2 * (p * st.a_max * st.a_max / (n * n) + st.a_max * q * m / (n * n));
  tc.q22 = reg.L / n * q * st.a_max + reg.mu / n * q * st.a_min;

  tc.w1 = q * (1.0 - gr / 2.0) * (1.0 - gr / 2.0) + p;
  tc.w2 = w2_closed_form(st.n, st.d);
  tc.kappa0 = q * (1.0 + 2.0 / gr) * reg.G * reg.G * tc.w2;

  const double lam = reg.lambda0;
  tc.phi1 = n / (2.0 * m * lam * q) * reg.initial_distance * reg.initial_distance +
            2.0 * lam / (m * n) * p * reg.C * reg.C * excess + lam / (2.0 * m) * sigma_term;
  const double drift = tc.kappa0 / (1.0 - tc.w1) * n / (2.0 * m) / q;
  tc.phi2 = tc.q22 * lam * lam * drift;
  tc.phi3 = tc.q21 * lam * lam * lam * drift;

  const double disc = std::max(tc.q11 * tc.q11 - 4.0 * tc.q12, 0.0);
  tc.eta_max = (tc.q11 - std::sqrt(disc)) / (2.0 * tc.q12);
  tc.T_min = tc.eta_max > 0.0 ? std::pow(lam / tc.eta_max, 2.0)
                              : std::numeric_limits<double>::infinity();
  return tc;
}

inline std::vector<BoundRow> bound_curve(const TheoryConstants& tc, const std::vector<double>& T_values) {
  std::vector<BoundRow> out;
  out.reserve(T_values.size());
  for (double T : T_values) {
    if (!(T > 0.0)) throw ConfigError("bound curve needs positive T values");
    const double s = std::sqrt(T);
    out.push_back({T, tc.phi1 / s + tc.phi2 / T + tc.phi3 / (T * s), !(T > tc.T_min)});
  }
  return out;
}

/// "mu >> ratio" made concrete: satisfied iff mu >= factor * ratio.
inline MuCondition check_mu_condition(const RegularityParams& reg, const TheoryConstants& tc,
                                      const StructuralInputs& st, double factor = 10.0) {
  MuCondition c;
  const double denom = static_cast<double>(st.m) * st.a_min * (1.0 - st.p) * (1.0 - tc.w1);
  const double num = st.gamma * st.gamma * tc.kappa0 * st.beta * st.beta;
  if (num == 0.0) {
    c.ratio = 0.0;
    c.margin = std::numeric_limits<double>::infinity();
  } else if (denom <= 0.0) {
    c.ratio = std::numeric_limits<double>::infinity();
    c.margin = 0.0;
  } else {
    c.ratio = num / denom;
    c.margin = reg.mu / c.ratio;
  }
  c.satisfied = c.margin >= factor;
  return c;
}

// Log-spaced grid from 10^lo to 10^hi with `per_decade` points per decade.
inline std::vector<double> log_grid(int lo_exp, int hi_exp, int per_decade) {
  std::vector<double> out;
  const int steps = (hi_exp - lo_exp) * per_decade;
  for (int s = 0; s <= steps; ++s)
    out.push_back(std::pow(10.0, lo_exp + static_cast<double>(s) / per_decade));
  return out;
}

inline std::string format_constants_csv(const TheoryConstants& tc, const MuCondition& mc) {
  std::vector<std::pair<std::string, double>> kv = {
      {"q11", tc.q11},     {"q12", tc.q12},       {"q21", tc.q21},   {"q22", tc.q22},
      {"w1", tc.w1},       {"w2", tc.w2},         {"kappa0", tc.kappa0},
      {"phi1", tc.phi1},   {"phi2", tc.phi2},     {"phi3", tc.phi3},
      {"T_min", tc.T_min}, {"eta_max", tc.eta_max},
      {"mu_ratio", mc.ratio}, {"mu_margin", mc.margin},
      {"mu_condition", mc.satisfied ? 1.0 : 0.0}};
  std::string out = "name,value\n";
  for (const auto& [k, v] : kv) out += k + ',' + text::format_double(v) + '\n';
  return out;
}

inline std::string format_bound_csv(const std::vector<BoundRow>& rows) {
  std::string out = "T,bound,below_T_min\n";
  for (const auto& r : rows)
    out += text::format_double(r.T) + ',' + text::format_double(r.bound) + ',' +
           (r.below_T_min ? "1" : "0") + '\n';
  return out;
}

}  // namespace goco::theory
