#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmdiff/prng.hpp"
#include "gmdiff/util.hpp"

namespace gmdiff {

// Conditioning summary for a mixture: every component covariance has
// eigenvalues in [alpha, beta] with alpha <= 1 <= beta, every component
// satisfies |mean|_2 + |cov - I|_F <= radius with radius >= 1, and every
// weight is at least lambda_min > 0. tau = (beta/alpha) * log(radius).
struct ConditioningParams {
  double alpha = 1.0;
  double beta = 1.0;
  double radius = 1.0;
  double tau = 0.0;
  double lambda_min = 1.0;
};

struct GaussianComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;      // symmetrized at construction
  Eigen::MatrixXd chol;            // lower triangular, chol * chol^T = covariance
  Eigen::MatrixXd inverse;
  double log_det = 0.0;

  static GaussianComponent make(const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cov) {
    if (cov.rows() != cov.cols())
      throw std::invalid_argument("component covariance must be square");
    if (mean.size() != cov.rows())
      throw std::invalid_argument("component mean/covariance dimension mismatch");
    GaussianComponent c;
    c.mean = mean;
    c.covariance = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument(
          "component covariance is not positive definite");
    c.chol = llt.matrixL();
    c.inverse = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    c.log_det = 0.0;
    for (Eigen::Index i = 0; i < c.chol.rows(); ++i)
      c.log_det += 2.0 * std::log(c.chol(i, i));
    return c;
  }

  int dim() const { return static_cast<int>(mean.size()); }

  double log_density(const Eigen::VectorXd& x) const {
    Eigen::VectorXd u =
        chol.triangularView<Eigen::Lower>().solve(x - mean);
    return -0.5 * dim() * std::log(2.0 * std::numbers::pi) - 0.5 * log_det -
           0.5 * u.squaredNorm();
  }

  Eigen::VectorXd sample(Prng& rng) const {
    Eigen::VectorXd z(dim());
    for (int i = 0; i < dim(); ++i) z(i) = rng.normal();
    return mean + chol * z;
  }
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;
  std::vector<double> weights;
  ConditioningParams conditioning;

  int k() const { return static_cast<int>(components.size()); }
  int dim() const { return components.empty() ? 0 : components[0].dim(); }

  // Builds with the tightest conditioning parameters the components admit.
  static GaussianMixture make(const std::vector<Eigen::VectorXd>& means,
                              const std::vector<Eigen::MatrixXd>& covs,
                              const std::vector<double>& weights) {
    GaussianMixture m = assemble(means, covs, weights);
    double lo = 1.0, hi = 1.0, rad = 1.0;
    for (const auto& c : m.components) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          c.covariance, Eigen::EigenvaluesOnly);
      lo = std::min(lo, es.eigenvalues().minCoeff());
      hi = std::max(hi, es.eigenvalues().maxCoeff());
      double r = c.mean.norm() +
                 (c.covariance -
                  Eigen::MatrixXd::Identity(c.dim(), c.dim())).norm();
      rad = std::max(rad, r);
    }
    if (lo <= 0.0)
      throw std::invalid_argument(
          "conditioning violated: covariance eigenvalue <= 0");
    m.conditioning.alpha = lo;
    m.conditioning.beta = hi;
    m.conditioning.radius = rad;
    m.conditioning.tau = (hi / lo) * std::log(rad);
    m.conditioning.lambda_min = *std::min_element(weights.begin(), weights.end());
    return m;
  }

  // Builds with caller-supplied bounds, validating every invariant.
  static GaussianMixture make_with(const std::vector<Eigen::VectorXd>& means,
                                   const std::vector<Eigen::MatrixXd>& covs,
                                   const std::vector<double>& weights,
                                   double alpha, double beta, double radius) {
    GaussianMixture m = assemble(means, covs, weights);
    if (!(alpha > 0.0) || !(alpha <= 1.0))
      throw std::invalid_argument("conditioning violated: need 0 < alpha <= 1");
    if (!(beta >= 1.0))
      throw std::invalid_argument("conditioning violated: need beta >= 1");
    if (!(radius >= 1.0))
      throw std::invalid_argument("conditioning violated: need radius >= 1");
    constexpr double tol = 1e-9;
    for (int i = 0; i < m.k(); ++i) {
      const auto& c = m.components[i];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          c.covariance, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < alpha - tol)
        throw std::invalid_argument(
            "conditioning violated: component " + std::to_string(i) +
            " has covariance eigenvalue below alpha");
      if (es.eigenvalues().maxCoeff() > beta + tol)
        throw std::invalid_argument(
            "conditioning violated: component " + std::to_string(i) +
            " has covariance eigenvalue above beta");
      double r = c.mean.norm() +
                 (c.covariance -
                  Eigen::MatrixXd::Identity(c.dim(), c.dim())).norm();
      if (r > radius + tol)
        throw std::invalid_argument(
            "conditioning violated: component " + std::to_string(i) +
            " exceeds radius (|mean| + |cov - I|_F = " + std::to_string(r) +
            ")");
    }
    m.conditioning.alpha = alpha;
    m.conditioning.beta = beta;
    m.conditioning.radius = radius;
    m.conditioning.tau = (beta / alpha) * std::log(radius);
    m.conditioning.lambda_min = *std::min_element(weights.begin(), weights.end());
    return m;
  }

 private:
  static GaussianMixture assemble(const std::vector<Eigen::VectorXd>& means,
                                  const std::vector<Eigen::MatrixXd>& covs,
                                  const std::vector<double>& weights) {
    if (means.empty() || means.size() != covs.size() ||
        means.size() != weights.size())
      throw std::invalid_argument("mixture needs matching nonempty parameter lists");
    GaussianMixture m;
    double wsum = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) {
      if (means[i].size() != means[0].size())
        throw std::invalid_argument("mixture components must share a dimension");
      if (!(weights[i] > 0.0))
        throw std::invalid_argument(
            "conditioning violated: weight " + std::to_string(i) +
            " is not positive");
      wsum += weights[i];
      m.components.push_back(GaussianComponent::make(means[i], covs[i]));
    }
    if (std::abs(wsum - 1.0) > 1e-9)
      throw std::invalid_argument("mixture weights must sum to 1");
    m.weights = weights;
    return m;
  }
};

inline int sample_label(const GaussianMixture& mix, Prng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < mix.k(); ++i) {
    acc += mix.weights[i];
    if (u < acc) return i;
  }
  return mix.k() - 1;
}

struct SampleSet {
  Eigen::MatrixXd points;   // n x d
  std::vector<int> labels;
};

inline SampleSet sample_mixture(const GaussianMixture& mix, std::size_t n,
                                Prng rng) {
  SampleSet out;
  out.points.resize(static_cast<Eigen::Index>(n), mix.dim());
  out.labels.resize(n);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Prng r = rng.split(c);
    for (std::size_t i = lo; i < hi; ++i) {
      int label = sample_label(mix, r);
      out.labels[i] = label;
      out.points.row(static_cast<Eigen::Index>(i)) =
          mix.components[label].sample(r).transpose();
    }
  });
  return out;
}

inline double log_density(const GaussianMixture& mix,
                          const Eigen::VectorXd& x) {
  std::vector<double> lw(mix.k());
  for (int i = 0; i < mix.k(); ++i)
    lw[i] = std::log(mix.weights[i]) + mix.components[i].log_density(x);
  return log_sum_exp(lw);
}

// Gradient of log density at x: -sum_i w_i(x) Q_i^{-1} (x - mu_i), with
// posterior weights w_i(x) computed through log-sum-exp.
inline Eigen::VectorXd exact_score(const GaussianMixture& mix,
                                   const Eigen::VectorXd& x) {
  std::vector<double> lw(mix.k());
  for (int i = 0; i < mix.k(); ++i)
    lw[i] = std::log(mix.weights[i]) + mix.components[i].log_density(x);
  double lz = log_sum_exp(lw);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(x.size());
  for (int i = 0; i < mix.k(); ++i) {
    double w = std::exp(lw[i] - lz);
    s.noalias() -= w * (mix.components[i].inverse * (x - mix.components[i].mean));
  }
  return s;
}

// Distribution of e^{-t} x0 + sqrt(1 - e^{-2t}) z under the forward noising
// process: means shrink by e^{-t}, covariances blend toward the identity.
// Conditioning is recomputed, so the eigenvalue bounds tighten toward 1.
inline GaussianMixture noised_mixture(const GaussianMixture& mix, double t) {
  if (t < 0.0) throw std::invalid_argument("noising time must be >= 0");
  if (t == 0.0) return mix;
  double a = std::exp(-t);
  double a2 = a * a;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  for (const auto& c : mix.components) {
    means.push_back(a * c.mean);
    covs.push_back(a2 * c.covariance +
                   (1.0 - a2) * Eigen::MatrixXd::Identity(c.dim(), c.dim()));
  }
  return GaussianMixture::make(means, covs, mix.weights);
}

struct ForwardBatch {
  Eigen::MatrixXd x0;   // n x d clean samples
  Eigen::MatrixXd xt;   // n x d noised samples
  Eigen::MatrixXd z;    // n x d injected standard normals
  std::vector<int> labels;
  double t = 0.0;
};

// Joint draw of (x0, xt, z) with xt = e^{-t} x0 + sqrt(1 - e^{-2t}) z.
inline ForwardBatch forward_sample(const GaussianMixture& mix, double t,
                                   std::size_t n, Prng rng) {
  if (!(t > 0.0))
    throw std::invalid_argument("forward sampling needs t > 0");
  ForwardBatch out;
  Eigen::Index d = mix.dim();
  out.t = t;
  out.x0.resize(static_cast<Eigen::Index>(n), d);
  out.xt.resize(static_cast<Eigen::Index>(n), d);
  out.z.resize(static_cast<Eigen::Index>(n), d);
  out.labels.resize(n);
  double a = std::exp(-t);
  double s = std::sqrt(1.0 - a * a);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Prng r = rng.split(c);
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::Index row = static_cast<Eigen::Index>(i);
      int label = sample_label(mix, r);
      out.labels[i] = label;
      Eigen::VectorXd x0 = mix.components[label].sample(r);
      Eigen::VectorXd z(d);
      for (Eigen::Index j = 0; j < d; ++j) z(j) = r.normal();
      out.x0.row(row) = x0.transpose();
      out.z.row(row) = z.transpose();
      out.xt.row(row) = (a * x0 + s * z).transpose();
    }
  });
  return out;
}

struct ParameterDistance {
  std::vector<double> mean_dist;   // |mu_a_i - mu_b_i|_2 per component
  std::vector<double> cov_dist;    // |Q_a_i - Q_b_i|_F per component
  double max_mean = 0.0;
  double max_cov = 0.0;
};

inline ParameterDistance parameter_distance(const GaussianMixture& a,
                                            const GaussianMixture& b) {
  if (a.k() != b.k() || a.dim() != b.dim())
    throw std::invalid_argument("parameter_distance needs matching shapes");
  ParameterDistance out;
  for (int i = 0; i < a.k(); ++i) {
    double dm = (a.components[i].mean - b.components[i].mean).norm();
    double dq = (a.components[i].covariance - b.components[i].covariance).norm();
    out.mean_dist.push_back(dm);
    out.cov_dist.push_back(dq);
    out.max_mean = std::max(out.max_mean, dm);
    out.max_cov = std::max(out.max_cov, dq);
  }
  return out;
}

// Pairwise parameter separation |mu_i - mu_j|_2 + |Q_i - Q_j|_F.
inline double pair_separation(const GaussianMixture& mix, int i, int j) {
  return (mix.components[i].mean - mix.components[j].mean).norm() +
         (mix.components[i].covariance - mix.components[j].covariance).norm();
}

// Sub-mixture on component subset U with renormalized weights. Conditioning
// bounds are inherited (they remain valid); lambda_min is recomputed.
inline GaussianMixture restrict_mixture(const GaussianMixture& mix,
                                        const std::vector<int>& subset) {
  if (subset.empty())
    throw std::invalid_argument("restrict_mixture needs a nonempty subset");
  if (static_cast<int>(subset.size()) == mix.k()) {
    bool identity = true;
    for (int i = 0; i < mix.k(); ++i) identity = identity && subset[i] == i;
    if (identity) return mix;
  }
  GaussianMixture out;
  double wsum = 0.0;
  for (int idx : subset) {
    if (idx < 0 || idx >= mix.k())
      throw std::invalid_argument("restrict_mixture: component index out of range");
    wsum += mix.weights[idx];
  }
  for (int idx : subset) {
    out.components.push_back(mix.components[idx]);
    out.weights.push_back(mix.weights[idx] / wsum);
  }
  out.conditioning = mix.conditioning;
  out.conditioning.lambda_min =
      *std::min_element(out.weights.begin(), out.weights.end());
  return out;
}

}  // namespace gmdiff
