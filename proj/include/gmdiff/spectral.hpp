#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmdiff/subspace.hpp"
#include "gmdiff/util.hpp"

namespace gmdiff {

struct Candidate {
  Eigen::VectorXd mean;         // empty for covariance-only entries
  Eigen::MatrixXd covariance;   // empty for mean-only entries
  std::string provenance;
};

struct CandidateList {
  std::vector<Candidate> entries;
};

struct MomentAccumulators {
  Eigen::MatrixXd m2;                  // d x d second moment
  Eigen::MatrixXd c00, c01, c11;       // d^2 x d^2 flattened fourth moments
  std::size_t sample_count = 0;
};

inline Eigen::MatrixXd second_moment(const Eigen::MatrixXd& points) {
  if (points.rows() == 0)
    throw std::invalid_argument("second_moment needs samples");
  Eigen::Index d = points.cols();
  std::size_t n = static_cast<std::size_t>(points.rows());
  std::vector<Eigen::MatrixXd> partial(chunk_count(n),
                                       Eigen::MatrixXd::Zero(d, d));
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = lo; i < hi; ++i) {
      acc.selfadjointView<Eigen::Lower>().rankUpdate(
          points.row(static_cast<Eigen::Index>(i)).transpose());
    }
    partial[c] = acc;
  });
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (const auto& p : partial) m += p;
  m = m.selfadjointView<Eigen::Lower>();
  return m / static_cast<double>(n);
}

// Axis-aligned lattice over the radius-`cap` ball in `rank` orthonormal
// coordinates, deterministic row-major order, origin always included.
inline std::vector<Eigen::VectorXd> lattice_coords(double cap, double step,
                                                   int rank,
                                                   std::size_t max_points) {
  if (!(step > 0.0)) throw std::invalid_argument("lattice step must be > 0");
  if (rank == 0) return {Eigen::VectorXd(0)};
  long m = static_cast<long>(std::floor(cap / step + 1e-12));
  double per_axis = 2.0 * static_cast<double>(m) + 1.0;
  if (rank * std::log(per_axis) > std::log(1e18))
    throw std::invalid_argument(
        "lattice too large; use a coarser net (per-axis count " +
        std::to_string(static_cast<long long>(per_axis)) + " at rank " +
        std::to_string(rank) + ")");
  std::vector<Eigen::VectorXd> out;
  std::vector<long> idx(static_cast<std::size_t>(rank), -m);
  for (;;) {
    Eigen::VectorXd c(rank);
    for (int j = 0; j < rank; ++j)
      c(j) = static_cast<double>(idx[static_cast<std::size_t>(j)]) * step;
    if (c.norm() <= cap + 1e-12) {
      out.push_back(c);
      if (out.size() > max_points)
        throw std::invalid_argument(
            "lattice exceeds the configured cap of " +
            std::to_string(max_points) + " points; use a coarser net");
    }
    int j = rank - 1;
    while (j >= 0 && idx[static_cast<std::size_t>(j)] == m) {
      idx[static_cast<std::size_t>(j)] = -m;
      --j;
    }
    if (j < 0) break;
    ++idx[static_cast<std::size_t>(j)];
  }
  return out;
}

inline std::size_t lattice_size(double cap, double step, int rank) {
  return lattice_coords(cap, step, rank,
                        std::numeric_limits<std::size_t>::max())
      .size();
}

// Mean candidates: top-k subspace of the second moment, then a lattice net
// of granularity net_step over in-subspace vectors with norm <= 2R.
inline CandidateList crude_estimate_means(const Eigen::MatrixXd& points, int k,
                                          double radius_R, double beta,
                                          double net_step,
                                          std::size_t max_points = 2000000) {
  if (points.rows() < 2)
    throw std::invalid_argument("crude_estimate_means needs >= 2 samples");
  if (!(net_step > 0.0)) net_step = std::sqrt(beta);
  int rank = std::min<int>(k, static_cast<int>(points.cols()));
  SubspaceBasis v = topk_subspace(second_moment(points), rank);
  CandidateList out;
  for (const auto& c : lattice_coords(2.0 * radius_R, net_step, rank, max_points)) {
    Candidate cand;
    cand.mean = v.basis * c;
    cand.provenance = "mean-net";
    out.entries.push_back(std::move(cand));
  }
  return out;
}

// Orthonormal span of a mean tuple; near-zero directions are dropped, so a
// tuple of all-zero means yields rank 0.
inline SubspaceBasis span_of_means(const std::vector<Eigen::VectorXd>& means) {
  if (means.empty())
    throw std::invalid_argument("span_of_means needs at least one vector");
  Eigen::Index d = means[0].size();
  Eigen::MatrixXd m(d, static_cast<Eigen::Index>(means.size()));
  for (std::size_t i = 0; i < means.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = means[i];
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-10);
  Eigen::Index rank = qr.rank();
  SubspaceBasis out;
  out.basis = qr.householderQ() * Eigen::MatrixXd::Identity(d, rank);
  out.values = Eigen::VectorXd::Zero(rank);
  return out;
}

struct NearestCenter {
  int index = 0;
  Eigen::VectorXd recentered;
};

// argmin_j |mu_j - proj(x)| with ties to the lowest index; the recentered
// point is x - mu_j in the ambient space.
inline NearestCenter nearest_center(const Eigen::VectorXd& x,
                                    const std::vector<Eigen::VectorXd>& means,
                                    const SubspaceBasis& subspace) {
  if (means.empty())
    throw std::invalid_argument("nearest_center needs at least one mean");
  Eigen::VectorXd p = subspace.project(x);
  NearestCenter out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < means.size(); ++j) {
    double dist = (means[j] - p).norm();
    if (dist < best) {
      best = dist;
      out.index = static_cast<int>(j);
    }
  }
  out.recentered = x - means[static_cast<std::size_t>(out.index)];
  return out;
}

inline constexpr int kPsiDimCap = 8;

// Flattened fourth moments of recentered samples, split by the projector
// onto `subspace`: with p = proj(z) and q = z - p, the three accumulators
// average vec(pp^T)vec(pp^T)^T, vec(pq^T)vec(pq^T)^T, vec(qq^T)vec(qq^T)^T.
inline MomentAccumulators psi_moments(const Eigen::MatrixXd& points,
                                      const std::vector<Eigen::VectorXd>& means,
                                      const SubspaceBasis& subspace,
                                      int dim_cap = kPsiDimCap) {
  Eigen::Index d = points.cols();
  if (d > dim_cap)
    throw std::invalid_argument(
        "psi_moments: dimension " + std::to_string(d) +
        " exceeds the cap of " + std::to_string(dim_cap) +
        " (memory grows as d^4)");
  if (points.rows() == 0)
    throw std::invalid_argument("psi_moments needs samples");
  Eigen::Index d2 = d * d;
  std::size_t n = static_cast<std::size_t>(points.rows());
  std::size_t chunks = chunk_count(n);
  std::vector<Eigen::MatrixXd> p00(chunks), p01(chunks), p11(chunks),
      pm2(chunks);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Eigen::MatrixXd a00 = Eigen::MatrixXd::Zero(d2, d2);
    Eigen::MatrixXd a01 = Eigen::MatrixXd::Zero(d2, d2);
    Eigen::MatrixXd a11 = Eigen::MatrixXd::Zero(d2, d2);
    Eigen::MatrixXd am2 = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd outer(d, d);
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::VectorXd x = points.row(static_cast<Eigen::Index>(i)).transpose();
      am2.selfadjointView<Eigen::Lower>().rankUpdate(x);
      Eigen::VectorXd z = nearest_center(x, means, subspace).recentered;
      Eigen::VectorXd p = subspace.project(z);
      Eigen::VectorXd q = z - p;
      outer = p * p.transpose();
      a00.selfadjointView<Eigen::Lower>().rankUpdate(
          Eigen::Map<Eigen::VectorXd>(outer.data(), d2));
      outer = p * q.transpose();
      a01.selfadjointView<Eigen::Lower>().rankUpdate(
          Eigen::Map<Eigen::VectorXd>(outer.data(), d2));
      outer = q * q.transpose();
      a11.selfadjointView<Eigen::Lower>().rankUpdate(
          Eigen::Map<Eigen::VectorXd>(outer.data(), d2));
    }
    p00[c] = a00;
    p01[c] = a01;
    p11[c] = a11;
    pm2[c] = am2;
  });
  MomentAccumulators acc;
  acc.sample_count = n;
  Eigen::MatrixXd s00 = Eigen::MatrixXd::Zero(d2, d2);
  Eigen::MatrixXd s01 = Eigen::MatrixXd::Zero(d2, d2);
  Eigen::MatrixXd s11 = Eigen::MatrixXd::Zero(d2, d2);
  Eigen::MatrixXd sm2 = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t c = 0; c < chunks; ++c) {
    s00 += p00[c];
    s01 += p01[c];
    s11 += p11[c];
    sm2 += pm2[c];
  }
  double inv_n = 1.0 / static_cast<double>(n);
  acc.c00 = Eigen::MatrixXd(s00.selfadjointView<Eigen::Lower>()) * inv_n;
  acc.c01 = Eigen::MatrixXd(s01.selfadjointView<Eigen::Lower>()) * inv_n;
  acc.c11 = Eigen::MatrixXd(s11.selfadjointView<Eigen::Lower>()) * inv_n;
  acc.m2 = Eigen::MatrixXd(sm2.selfadjointView<Eigen::Lower>()) * inv_n;
  return acc;
}

// Covariance candidates: top-k subspaces of the three flattened fourth
// moments, a lattice net over each (norm cap beta*sqrt(d)), and the cross
// product B00 + B01 + B01^T + B11, symmetrized.
inline CandidateList crude_estimate_covariances(
    const Eigen::MatrixXd& points, const std::vector<Eigen::VectorXd>& means,
    int k, double beta, double cov_step, std::size_t max_points = 2000000,
    int dim_cap = kPsiDimCap) {
  Eigen::Index d = points.cols();
  if (!(cov_step > 0.0)) cov_step = beta;
  SubspaceBasis span = span_of_means(means);
  MomentAccumulators acc = psi_moments(points, means, span, dim_cap);
  double cap = beta * std::sqrt(static_cast<double>(d));
  int rank = std::min<int>(k, static_cast<int>(d * d));
  auto coords = lattice_coords(cap, cov_step, rank, max_points);

  auto stage_blocks = [&](const Eigen::MatrixXd& c_s) {
    SubspaceBasis v = topk_subspace(c_s, rank);
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(coords.size());
    for (const auto& c : coords) {
      Eigen::VectorXd w = v.basis * c;
      blocks.push_back(
          Eigen::Map<const Eigen::MatrixXd>(w.data(), d, d));
    }
    return blocks;
  };
  auto b00 = stage_blocks(acc.c00);
  auto b01 = stage_blocks(acc.c01);
  auto b11 = stage_blocks(acc.c11);

  std::size_t total = b00.size() * b01.size() * b11.size();
  if (total > max_points)
    throw std::invalid_argument(
        "covariance candidate cross product has " + std::to_string(total) +
        " entries, over the cap of " + std::to_string(max_points) +
        "; use a coarser net");
  CandidateList out;
  out.entries.reserve(total);
  for (const auto& q00 : b00)
    for (const auto& q01 : b01)
      for (const auto& q11 : b11) {
        Eigen::MatrixXd q = q00 + q01 + q01.transpose() + q11;
        Candidate cand;
        cand.covariance = 0.5 * (q + q.transpose());
        cand.provenance = "cov-net";
        out.entries.push_back(std::move(cand));
      }
  return out;
}

struct CrudeConfig {
  double radius_R = 1.0;
  double beta = 1.0;
  double mean_step = -1.0;   // <= 0: sqrt(beta)
  double cov_step = -1.0;    // <= 0: beta
  std::size_t max_candidates = 200000;
  int psi_dim_cap = kPsiDimCap;
};

// Full candidate list: every k-permutation (with repetition) of the mean
// net, covariance candidates recomputed per tuple, every (mean, covariance)
// pairing emitted. |W| = n_means^k * n_lattice^3 * k exactly.
inline CandidateList crude_estimate(const Eigen::MatrixXd& points, int k,
                                    const CrudeConfig& cfg) {
  CandidateList means =
      crude_estimate_means(points, k, cfg.radius_R, cfg.beta, cfg.mean_step,
                           cfg.max_candidates);
  std::size_t n_means = means.entries.size();
  double cov_step = cfg.cov_step > 0.0 ? cfg.cov_step : cfg.beta;
  double cap = cfg.beta * std::sqrt(static_cast<double>(points.cols()));
  int lat_rank = std::min<int>(k, static_cast<int>(points.cols() * points.cols()));
  std::size_t n_lat = lattice_size(cap, cov_step, lat_rank);

  double total = std::pow(static_cast<double>(n_means), k) *
                 std::pow(static_cast<double>(n_lat), 3) *
                 static_cast<double>(k);
  if (total > static_cast<double>(cfg.max_candidates))
    throw std::invalid_argument(
        "crude_estimate would emit " + std::to_string(total) +
        " candidates (cap " + std::to_string(cfg.max_candidates) +
        "); use coarser nets");

  CandidateList out;
  std::vector<std::size_t> tuple(static_cast<std::size_t>(k), 0);
  for (;;) {
    std::vector<Eigen::VectorXd> tuple_means;
    for (int i = 0; i < k; ++i)
      tuple_means.push_back(means.entries[tuple[static_cast<std::size_t>(i)]].mean);
    CandidateList covs = crude_estimate_covariances(
        points, tuple_means, k, cfg.beta, cov_step, cfg.max_candidates,
        cfg.psi_dim_cap);
    for (int i = 0; i < k; ++i)
      for (const auto& qc : covs.entries) {
        Candidate cand;
        cand.mean = tuple_means[static_cast<std::size_t>(i)];
        cand.covariance = qc.covariance;
        cand.provenance = "pair";
        out.entries.push_back(std::move(cand));
      }
    int j = k - 1;
    while (j >= 0 && tuple[static_cast<std::size_t>(j)] == n_means - 1) {
      tuple[static_cast<std::size_t>(j)] = 0;
      --j;
    }
    if (j < 0) break;
    ++tuple[static_cast<std::size_t>(j)];
  }
  return out;
}

}  // namespace gmdiff
