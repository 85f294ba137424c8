#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>

#include "gmdiff/mixture.hpp"
#include "gmdiff/prng.hpp"
#include "gmdiff/schedule.hpp"
#include "gmdiff/util.hpp"

namespace gmdiff {

// Score handle: s(y, t_forward) approximating the gradient of the log
// density of the forward process at time t_forward.
using ScoreFn =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;

enum class RhoMode {
  kHalf,   // rho = e^{gamma/2}, the literal exponential-integrator constant
  kFull,   // rho = e^{gamma}, the exact one-step reverse OU multiplier
};

struct SamplerConfig {
  TimeSchedule schedule;
  std::size_t n_samples = 1;
  RhoMode rho_mode = RhoMode::kFull;
};

// One reverse step from reverse-time t_lo to t_hi:
// y' = rho y + 2(rho - 1) s(y, T - t_lo) + sqrt(rho^2 - 1) z.
inline Eigen::VectorXd reverse_step(const Eigen::VectorXd& y,
                                    const ScoreFn& score, double terminal_T,
                                    double t_lo, double t_hi, RhoMode mode,
                                    Prng& rng) {
  if (!(t_hi > t_lo))
    throw std::invalid_argument("reverse_step needs t_hi > t_lo");
  double gamma = t_hi - t_lo;
  double rho = std::exp(mode == RhoMode::kHalf ? gamma / 2.0 : gamma);
  Eigen::VectorXd z(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) z(i) = rng.normal();
  return rho * y + 2.0 * (rho - 1.0) * score(y, terminal_T - t_lo) +
         std::sqrt(rho * rho - 1.0) * z;
}

// Full reverse run: y0 ~ N(0, Id), iterate over the schedule, return all
// terminal points. Each sample owns a split PRNG stream, so results do not
// depend on the worker count, and trajectories are exchangeable.
inline Eigen::MatrixXd generate_samples(const ScoreFn& score, int dim,
                                        const SamplerConfig& cfg, Prng rng) {
  if (cfg.n_samples < 1)
    throw std::invalid_argument("generate_samples needs n_samples >= 1");
  const TimeSchedule& sch = cfg.schedule;
  Eigen::MatrixXd y(static_cast<Eigen::Index>(cfg.n_samples), dim);
  std::vector<Prng> streams;
  streams.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i)
    streams.push_back(rng.split(i));
  parallel_chunks(cfg.n_samples,
                  [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::Index row = static_cast<Eigen::Index>(i);
      Prng& r = streams[i];
      Eigen::VectorXd v(dim);
      for (int j = 0; j < dim; ++j) v(j) = r.normal();
      for (int l = 0; l < sch.steps(); ++l)
        v = reverse_step(v, score, sch.terminal_T,
                         sch.times[static_cast<std::size_t>(l)],
                         sch.times[static_cast<std::size_t>(l) + 1],
                         cfg.rho_mode, r);
      y.row(row) = v.transpose();
    }
  });
  return y;
}

// Exact score of the noised mixture as a ScoreFn. Noised mixtures are cached
// per distinct time; the cache value is a pure function of t, so concurrent
// insert races are benign.
class OracleScore {
 public:
  explicit OracleScore(GaussianMixture mix) : mix_(std::move(mix)) {}

  void precompute(const std::vector<double>& forward_times) {
    for (double t : forward_times) (void)at(t);
  }

  const GaussianMixture& at(double t) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(t);
      if (it != cache_.end()) return it->second;
    }
    GaussianMixture noised = noised_mixture(mix_, t);
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(t, std::move(noised)).first->second;
  }

  ScoreFn fn() {
    return [this](const Eigen::VectorXd& x, double t) {
      return exact_score(at(t), x);
    };
  }

  const GaussianMixture& base() const { return mix_; }

 private:
  GaussianMixture mix_;
  std::map<double, GaussianMixture> cache_;
  std::mutex mu_;
};

}  // namespace gmdiff
