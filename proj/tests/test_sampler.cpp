#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gmdiff/mixture.hpp"
#include "gmdiff/prng.hpp"
#include "gmdiff/sampler.hpp"
#include "gmdiff/schedule.hpp"
#include "gmdiff/util.hpp"

using namespace gmdiff;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_against_normal(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  double n = static_cast<double>(xs.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double f = normal_cdf(xs[i]);
    ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
    ks = std::max(ks, std::abs(f - static_cast<double>(i + 1) / n));
  }
  return ks;
}

}  // namespace

TEST_CASE("one reverse step applies the documented affine map", "[sampler]") {
  ScoreFn score = [](const Eigen::VectorXd& y, double t) {
    return Eigen::VectorXd(0.5 * y.array() + t).matrix().eval();
  };
  Eigen::VectorXd y(2);
  y << 1.0, -2.0;
  double terminal_T = 6.0, t_lo = 1.2, t_hi = 1.5;

  Prng rng(601);
  Prng clone = rng;  // same key and counter: replays the identical stream
  Eigen::VectorXd z(2);
  z << clone.normal(), clone.normal();

  Eigen::VectorXd got =
      reverse_step(y, score, terminal_T, t_lo, t_hi, RhoMode::kFull, rng);
  double rho = std::exp(t_hi - t_lo);
  Eigen::VectorXd expect = rho * y + 2.0 * (rho - 1.0) * score(y, terminal_T - t_lo) +
                           std::sqrt(rho * rho - 1.0) * z;
  REQUIRE((got - expect).norm() < 1e-14);

  Prng rng2(601);
  Eigen::VectorXd half =
      reverse_step(y, score, terminal_T, t_lo, t_hi, RhoMode::kHalf, rng2);
  double rho_h = std::exp((t_hi - t_lo) / 2.0);
  Eigen::VectorXd expect_h = rho_h * y +
                             2.0 * (rho_h - 1.0) * score(y, terminal_T - t_lo) +
                             std::sqrt(rho_h * rho_h - 1.0) * z;
  REQUIRE((half - expect_h).norm() < 1e-14);
  REQUIRE((half - got).norm() > 0.1);

  Prng rng3(601);
  REQUIRE_THROWS_AS(
      reverse_step(y, score, terminal_T, 1.5, 1.2, RhoMode::kFull, rng3),
      std::invalid_argument);
}

TEST_CASE("a standard Gaussian is nearly a fixed point of the reverse run", "[sampler]") {
  GaussianMixture mix = GaussianMixture::make(
      {Eigen::VectorXd::Zero(1)}, {Eigen::MatrixXd::Identity(1, 1)}, {1.0});
  OracleScore oracle(mix);

  SamplerConfig cfg;
  cfg.schedule = build_schedule(6.0, 0.005, 64);
  cfg.n_samples = 5000;
  Eigen::MatrixXd out = generate_samples(oracle.fn(), 1, cfg, Prng(602));
  std::vector<double> xs(out.data(), out.data() + out.rows());
  // the per-step variance inflation is O(gamma^2); at N=64 it stays inside
  // the KS noise floor of 5000 samples
  REQUIRE(ks_against_normal(xs) < 0.025);
}

TEST_CASE("reverse moments track the exact affine recursion", "[sampler]") {
  // Single Gaussian N(mu0, q0) in 1-D: the oracle score is affine, so the
  // whole reverse chain stays Gaussian with moments given by
  // m' = A m + b, V' = A^2 V + rho^2 - 1, A = rho - 2(rho-1)/v_t,
  // b = 2(rho-1) a mu0 / v_t, v_t = a^2 q0 + 1 - a^2.
  double mu0 = 2.0, q0 = 1.5;
  GaussianMixture mix = GaussianMixture::make(
      {Eigen::VectorXd::Constant(1, mu0)},
      {Eigen::MatrixXd::Constant(1, 1, q0)}, {1.0});
  OracleScore oracle(mix);

  SamplerConfig cfg;
  cfg.schedule = build_schedule(6.0, 0.01, 32);
  cfg.n_samples = 20000;

  auto recursion = [&](const TimeSchedule& s) {
    double m = 0.0, v = 1.0;
    for (int l = 0; l < s.steps(); ++l) {
      double rho = std::exp(s.gamma(l));
      double t_fwd = s.terminal_T - s.times[static_cast<std::size_t>(l)];
      double a = std::exp(-t_fwd);
      double vt = a * a * q0 + 1.0 - a * a;
      double A = rho - 2.0 * (rho - 1.0) / vt;
      double b = 2.0 * (rho - 1.0) * a * mu0 / vt;
      m = A * m + b;
      v = A * A * v + rho * rho - 1.0;
    }
    return std::pair<double, double>{m, v};
  };
  auto [m, v] = recursion(cfg.schedule);
  // the chain targets the delta-time law N(e^{-delta} mu0, v_delta), not the
  // data law; the mean lands there immediately while the variance carries a
  // discretization bias that shrinks with more steps
  double a_d = std::exp(-0.01);
  double v_delta = a_d * a_d * q0 + 1.0 - a_d * a_d;
  REQUIRE(m == Catch::Approx(a_d * mu0).margin(1e-4));
  REQUIRE(v == Catch::Approx(v_delta).margin(0.3));
  auto [m_fine, v_fine] = recursion(build_schedule(6.0, 0.01, 128));
  REQUIRE(std::abs(v_fine - v_delta) < std::abs(v - v_delta));
  REQUIRE(m_fine == Catch::Approx(a_d * mu0).margin(1e-4));

  Eigen::MatrixXd out = generate_samples(oracle.fn(), 1, cfg, Prng(603));
  double mean = out.col(0).mean();
  double var = (out.col(0).array() - mean).square().mean();
  double se_mean = std::sqrt(v / static_cast<double>(cfg.n_samples));
  double se_var = v * std::sqrt(2.0 / static_cast<double>(cfg.n_samples));
  REQUIRE(mean == Catch::Approx(m).margin(5.0 * se_mean));
  REQUIRE(var == Catch::Approx(v).margin(5.0 * se_var));
}

TEST_CASE("generated samples do not depend on the worker count", "[sampler]") {
  GaussianMixture mix = GaussianMixture::make(
      {Eigen::VectorXd::Zero(2)}, {Eigen::MatrixXd::Identity(2, 2)}, {1.0});
  OracleScore oracle(mix);
  SamplerConfig cfg;
  cfg.schedule = build_schedule(2.0, 0.1, 8);
  cfg.n_samples = 5000;

  set_thread_count(1);
  Eigen::MatrixXd a = generate_samples(oracle.fn(), 2, cfg, Prng(604));
  set_thread_count(4);
  Eigen::MatrixXd b = generate_samples(oracle.fn(), 2, cfg, Prng(604));
  set_thread_count(1);
  REQUIRE(a == b);
}

TEST_CASE("the oracle score handle matches the noised mixture", "[sampler]") {
  Eigen::VectorXd m1(2), m2(2);
  m1 << 3.0, 0.0;
  m2 << -3.0, 0.0;
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(2, 2);
  GaussianMixture mix = GaussianMixture::make({m1, m2}, {q, q}, {0.5, 0.5});
  OracleScore oracle(mix);
  oracle.precompute({0.5, 1.0});
  ScoreFn fn = oracle.fn();
  Prng rng(605);
  for (double t : {0.5, 1.0, 2.7}) {
    GaussianMixture noised = noised_mixture(mix, t);
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd x(2);
      x << 4.0 * rng.normal(), 4.0 * rng.normal();
      REQUIRE((fn(x, t) - exact_score(noised, x)).norm() < 1e-14);
    }
  }
  REQUIRE(&oracle.at(0.5) == &oracle.at(0.5));  // cached, not rebuilt
}

TEST_CASE("sampler configuration is validated", "[sampler]") {
  GaussianMixture mix = GaussianMixture::make(
      {Eigen::VectorXd::Zero(1)}, {Eigen::MatrixXd::Identity(1, 1)}, {1.0});
  OracleScore oracle(mix);
  SamplerConfig cfg;
  cfg.schedule = build_schedule(2.0, 0.1, 8);
  cfg.n_samples = 0;
  REQUIRE_THROWS_AS(generate_samples(oracle.fn(), 1, cfg, Prng(606)),
                    std::invalid_argument);
}
