#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gmdiff/mixture.hpp"
#include "gmdiff/partition.hpp"
#include "gmdiff/spectral.hpp"
#include "gmdiff/subspace.hpp"

namespace gmdiff {

// Pseudo-inverse with eigenvalues below alpha/2 lifted to alpha/2 before
// inversion, so the result always satisfies |K|_op <= 2/alpha.
inline Eigen::MatrixXd clamp_inverse(const Eigen::MatrixXd& qhat,
                                     double alpha) {
  if (qhat.rows() != qhat.cols())
    throw std::invalid_argument("clamp_inverse needs a square matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (qhat + qhat.transpose()));
  Eigen::VectorXd inv = es.eigenvalues();
  for (Eigen::Index i = 0; i < inv.size(); ++i)
    inv(i) = 1.0 / std::max(inv(i), alpha / 2.0);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

struct ParameterEstimate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd clamped_inverse;   // K = clamp_inverse(covariance, alpha)
  double weight = 1.0;
  double log_det_cov = 0.0;          // log det of the clamped-PSD covariance
};

inline ParameterEstimate make_estimate(const Eigen::VectorXd& mean,
                                       const Eigen::MatrixXd& cov,
                                       double alpha, double weight) {
  ParameterEstimate e;
  e.mean = mean;
  e.covariance = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.covariance);
  Eigen::VectorXd inv = es.eigenvalues();
  e.log_det_cov = 0.0;
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    double lifted = std::max(inv(i), alpha / 2.0);
    e.log_det_cov += std::log(lifted);
    inv(i) = 1.0 / lifted;
  }
  e.clamped_inverse =
      es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  e.weight = weight;
  return e;
}

struct ClusteringFunction {
  PartitionPair pair;
  Refinement refinement;
  std::vector<ParameterEstimate> estimates;
  Eigen::MatrixXd thresholds;     // k x k, entry (i, j) = t_ij
  double eta = 0.0;
  SubspaceBasis mean_subspace;    // span of the mean estimates
  std::vector<int> mean_group;    // component index -> block of S
  std::vector<int> cov_group;     // component index -> block of T

  int k() const { return static_cast<int>(estimates.size()); }
  int piece_count() const { return static_cast<int>(refinement.pieces.size()); }
};

// Margin eta: the smallest cross-group covariance separation over
// 100 beta^2. Pairs inside one covariance group do not contribute.
inline double clustering_eta(const std::vector<ParameterEstimate>& estimates,
                             const Partition& cov_partition, double beta) {
  std::vector<int> group(estimates.size(), -1);
  for (std::size_t b = 0; b < cov_partition.size(); ++b)
    for (int i : cov_partition[b]) group[static_cast<std::size_t>(i)] = static_cast<int>(b);
  double delta_out = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < estimates.size(); ++i)
    for (std::size_t j = i + 1; j < estimates.size(); ++j) {
      if (group[i] == group[j]) continue;
      delta_out = std::min(
          delta_out, (estimates[i].covariance - estimates[j].covariance).norm());
    }
  if (!std::isfinite(delta_out)) return 1.0;  // single group: margin unused
  // Identical covariances across nominally distinct groups would zero the
  // margin; keep it positive so the clustering stays well-defined.
  return std::max(delta_out / (100.0 * beta * beta), 1e-12);
}

inline ClusteringFunction make_clustering(
    const PartitionPair& pair, std::vector<ParameterEstimate> estimates,
    const Eigen::MatrixXd& thresholds, double eta) {
  if (!(eta > 0.0))
    throw std::invalid_argument("clustering margin eta must be > 0");
  ClusteringFunction cf;
  cf.pair = pair;
  cf.refinement = make_refinement(pair, static_cast<int>(estimates.size()));
  cf.estimates = std::move(estimates);
  cf.thresholds = thresholds;
  cf.eta = eta;
  std::vector<Eigen::VectorXd> means;
  for (const auto& e : cf.estimates) means.push_back(e.mean);
  cf.mean_subspace = span_of_means(means);
  cf.mean_group.assign(cf.estimates.size(), -1);
  cf.cov_group.assign(cf.estimates.size(), -1);
  for (std::size_t a = 0; a < pair.mean_partition.size(); ++a)
    for (int i : pair.mean_partition[a])
      cf.mean_group[static_cast<std::size_t>(i)] = static_cast<int>(a);
  for (std::size_t b = 0; b < pair.cov_partition.size(); ++b)
    for (int i : pair.cov_partition[b])
      cf.cov_group[static_cast<std::size_t>(i)] = static_cast<int>(b);
  return cf;
}

struct MeanAssignment {
  int group = 0;          // block index within S
  int nearest = 0;        // component index of the winning mean
  Eigen::VectorXd recentered;  // x - mu_nearest
};

inline MeanAssignment cluster_mean(const Eigen::VectorXd& x,
                                   const ClusteringFunction& cf) {
  Eigen::VectorXd p = cf.mean_subspace.project(x);
  MeanAssignment out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cf.estimates.size(); ++j) {
    double dist = (cf.estimates[j].mean - p).norm();
    if (dist < best) {
      best = dist;
      out.nearest = static_cast<int>(j);
    }
  }
  out.group = cf.mean_group[static_cast<std::size_t>(out.nearest)];
  out.recentered = x - cf.estimates[static_cast<std::size_t>(out.nearest)].mean;
  return out;
}

// Covariance-group test on an already recentered point: smallest 1-based b
// with a witness i in T_b whose quadratic statistics beat every out-of-group
// threshold strictly by eta. Returns 0 when no group qualifies.
inline int cluster_cov_recentered(const Eigen::VectorXd& z,
                                  const ClusteringFunction& cf) {
  int k = cf.k();
  for (std::size_t b = 0; b < cf.pair.cov_partition.size(); ++b) {
    for (int i : cf.pair.cov_partition[b]) {
      bool witness = true;
      for (int j = 0; j < k && witness; ++j) {
        if (cf.cov_group[static_cast<std::size_t>(j)] == static_cast<int>(b))
          continue;
        double d_ij =
            z.dot((cf.estimates[static_cast<std::size_t>(i)].clamped_inverse -
                   cf.estimates[static_cast<std::size_t>(j)].clamped_inverse) *
                  z);
        witness = d_ij < cf.thresholds(i, j) - cf.eta;
      }
      if (witness) return static_cast<int>(b) + 1;
    }
  }
  return 0;
}

inline int cluster_cov(const Eigen::VectorXd& x, const ClusteringFunction& cf) {
  return cluster_cov_recentered(cluster_mean(x, cf).recentered, cf);
}

// Full clustering decision, 1-based piece index. Sentinels (no covariance
// group, or empty intersection) fall back to piece 1.
inline int classify(const Eigen::VectorXd& x, const ClusteringFunction& cf) {
  MeanAssignment a = cluster_mean(x, cf);
  int b = cluster_cov_recentered(a.recentered, cf);
  if (b == 0) return 1;
  auto it = cf.refinement.lookup.find({a.group, b - 1});
  if (it == cf.refinement.lookup.end()) return 1;
  return it->second;
}

// Reference thresholds from true parameters: with exact estimates and
// K = Q^{-1}, D_ij under the correct component N_i concentrates at
// <Q_i, K_i - K_j>, and under any wrong component N_j at
// <Q_i, K_i - K_j> + S_ij with the nonnegative gap
// S_ij = <Q_j - Q_i, Q_i^{-1} - Q_j^{-1}>. `fraction` places t_ij inside
// that gap; 0.5 splits the two one-sided error rates evenly.
inline Eigen::MatrixXd oracle_thresholds(const GaussianMixture& mix,
                                         double fraction = 0.5) {
  int k = mix.k();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const auto& qi = mix.components[static_cast<std::size_t>(i)];
      const auto& qj = mix.components[static_cast<std::size_t>(j)];
      double base =
          (qi.covariance.array() * (qi.inverse - qj.inverse).array()).sum();
      double gap = ((qj.covariance - qi.covariance).array() *
                    (qi.inverse - qj.inverse).array())
                       .sum();
      t(i, j) = base + fraction * gap;
    }
  return t;
}

// Uniform threshold grid on [-c*beta*d/alpha, c*beta*d/alpha] with spacing
// at most eta, truncated to per_pair_cap points, symmetric about 0. The same
// grid serves every ordered pair.
inline std::vector<double> threshold_grid(double beta, double alpha, int d,
                                          double eta,
                                          std::size_t per_pair_cap,
                                          double range_constant = 2.0) {
  if (!(eta > 0.0)) throw std::invalid_argument("threshold grid needs eta > 0");
  if (per_pair_cap == 0)
    throw std::invalid_argument("threshold grid cap must be >= 1");
  double half_range = range_constant * beta * static_cast<double>(d) / alpha;
  std::size_t needed =
      static_cast<std::size_t>(std::ceil(2.0 * half_range / eta)) + 1;
  std::size_t n = std::min(per_pair_cap, needed);
  std::vector<double> out;
  if (n == 1) {
    out.push_back(0.0);
    return out;
  }
  double spacing =
      std::min(eta, 2.0 * half_range / static_cast<double>(n - 1));
  for (std::size_t j = 0; j < n; ++j)
    out.push_back((static_cast<double>(j) -
                   static_cast<double>(n - 1) / 2.0) *
                  spacing);
  return out;
}

}  // namespace gmdiff
