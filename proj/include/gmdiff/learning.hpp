#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmdiff/clustering.hpp"
#include "gmdiff/features.hpp"
#include "gmdiff/mixture.hpp"
#include "gmdiff/partition.hpp"
#include "gmdiff/score_model.hpp"
#include "gmdiff/spectral.hpp"
#include "gmdiff/util.hpp"

namespace gmdiff {

struct ClipConfig {
  double r_x = 0.0;
  double r_z = 0.0;
};

struct DenoisingBatch {
  Eigen::MatrixXd xt;        // n x d noisy inputs
  Eigen::MatrixXd targets;   // n x d, -z / sqrt(1 - e^{-2t})
  Eigen::VectorXd x_norms;   // |xt_i|_2 per row
  Eigen::VectorXd z_norms;   // |z_i|_2 per row
  double t = 0.0;

  std::size_t n() const { return static_cast<std::size_t>(xt.rows()); }
};

inline DenoisingBatch batch_from_forward(const ForwardBatch& fwd) {
  DenoisingBatch b;
  b.t = fwd.t;
  b.xt = fwd.xt;
  double s = std::sqrt(1.0 - std::exp(-2.0 * fwd.t));
  b.targets = -fwd.z / s;
  b.x_norms = fwd.xt.rowwise().norm();
  b.z_norms = fwd.z.rowwise().norm();
  return b;
}

inline DenoisingBatch make_denoising_batch(const GaussianMixture& mix,
                                           double t, std::size_t n, Prng rng) {
  return batch_from_forward(forward_sample(mix, t, n, rng));
}

// Same joint law, but the clean points are given data rows instead of fresh
// mixture draws; only the noise is sampled.
inline DenoisingBatch make_denoising_batch_from_points(
    const Eigen::MatrixXd& points, double t, Prng rng) {
  if (!(t > 0.0))
    throw std::invalid_argument("denoising batch needs t > 0");
  if (points.rows() == 0)
    throw std::invalid_argument("denoising batch needs data rows");
  DenoisingBatch b;
  b.t = t;
  std::size_t n = static_cast<std::size_t>(points.rows());
  Eigen::Index d = points.cols();
  b.xt.resize(points.rows(), d);
  b.targets.resize(points.rows(), d);
  b.x_norms.resize(points.rows());
  b.z_norms.resize(points.rows());
  double a = std::exp(-t);
  double s = std::sqrt(1.0 - a * a);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Prng r = rng.split(c);
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::Index row = static_cast<Eigen::Index>(i);
      Eigen::VectorXd z(d);
      for (Eigen::Index j = 0; j < d; ++j) z(j) = r.normal();
      b.xt.row(row) = a * points.row(row) + s * z.transpose();
      b.targets.row(row) = -z.transpose() / s;
      b.x_norms(row) = b.xt.row(row).norm();
      b.z_norms(row) = z.norm();
    }
  });
  return b;
}

// Clip radii default to twice the largest training norms, so the indicator
// is inactive on the bulk of the data.
inline ClipConfig default_clip(const DenoisingBatch& batch) {
  ClipConfig c;
  c.r_x = 2.0 * batch.x_norms.maxCoeff();
  c.r_z = 2.0 * batch.z_norms.maxCoeff();
  return c;
}

inline bool clip_keep(const DenoisingBatch& batch, std::size_t i,
                      const ClipConfig& clip) {
  Eigen::Index row = static_cast<Eigen::Index>(i);
  return batch.x_norms(row) <= clip.r_x && batch.z_norms(row) <= clip.r_z;
}

// Ridge least squares per piece over the rows that land in the piece with
// indicator 1 and clip flags true. Ridge is trace-scaled; ridge = 0 demands
// at least feature-count rows per active piece.
inline std::vector<PieceModel> fit_pieces(
    const DenoisingBatch& batch, const ClusteringFunction& cf,
    const FeatureMap& fm, const std::vector<BoundaryThresholds>& thresholds,
    double ridge, const ClipConfig& clip) {
  int n_pieces = cf.piece_count();
  if (static_cast<int>(thresholds.size()) != n_pieces)
    throw std::invalid_argument("fit_pieces needs one threshold pair per piece");
  int f_count = fm.count();
  Eigen::Index d = batch.xt.cols();
  std::size_t n = batch.n();

  std::vector<PieceModel> pieces(static_cast<std::size_t>(n_pieces));
  for (int p = 0; p < n_pieces; ++p) {
    PieceModel& pm = pieces[static_cast<std::size_t>(p)];
    pm.piece_index = p + 1;
    pm.members = cf.refinement.pieces[static_cast<std::size_t>(p)];
    pm.anchor = pm.members.front();
    pm.theta1 = thresholds[static_cast<std::size_t>(p)].theta1;
    pm.theta2 = thresholds[static_cast<std::size_t>(p)].theta2;
    const auto& anchor_est = cf.estimates[static_cast<std::size_t>(pm.anchor)];
    pm.fallback_inverse = anchor_est.clamped_inverse;
    pm.fallback_mean = anchor_est.mean;
    pm.coefficients = Eigen::MatrixXd::Zero(f_count, d);
  }

  std::size_t chunks = chunk_count(n);
  std::vector<std::vector<Eigen::MatrixXd>> gram(
      chunks, std::vector<Eigen::MatrixXd>(
                  static_cast<std::size_t>(n_pieces),
                  Eigen::MatrixXd::Zero(f_count, f_count)));
  std::vector<std::vector<Eigen::MatrixXd>> cross(
      chunks, std::vector<Eigen::MatrixXd>(
                  static_cast<std::size_t>(n_pieces),
                  Eigen::MatrixXd::Zero(f_count, d)));
  std::vector<std::vector<std::size_t>> counts(
      chunks, std::vector<std::size_t>(static_cast<std::size_t>(n_pieces), 0));

  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      if (!clip_keep(batch, i, clip)) continue;
      Eigen::VectorXd x = batch.xt.row(static_cast<Eigen::Index>(i)).transpose();
      int p = classify(x, cf) - 1;
      const PieceModel& pm = pieces[static_cast<std::size_t>(p)];
      if (boundary_indicator(x, cf.estimates, pm.members, pm.anchor,
                             pm.theta1, pm.theta2) != 1)
        continue;
      Eigen::VectorXd phi = fm.eval(x);
      gram[c][static_cast<std::size_t>(p)]
          .selfadjointView<Eigen::Lower>()
          .rankUpdate(phi);
      cross[c][static_cast<std::size_t>(p)].noalias() +=
          phi * batch.targets.row(static_cast<Eigen::Index>(i));
      ++counts[c][static_cast<std::size_t>(p)];
    }
  });

  for (int p = 0; p < n_pieces; ++p) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(f_count, f_count);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(f_count, d);
    std::size_t rows = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
      g += gram[c][static_cast<std::size_t>(p)];
      b += cross[c][static_cast<std::size_t>(p)];
      rows += counts[c][static_cast<std::size_t>(p)];
    }
    g = g.selfadjointView<Eigen::Lower>();
    if (ridge == 0.0 && rows < static_cast<std::size_t>(f_count))
      throw std::runtime_error(
          "piece " + std::to_string(p + 1) + " has " + std::to_string(rows) +
          " usable rows for " + std::to_string(f_count) +
          " features and ridge is 0");
    double lambda = 0.0;
    if (ridge > 0.0) {
      double tr = g.trace();
      lambda = tr > 0.0 ? ridge * tr / f_count : ridge;
    }
    g.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    Eigen::MatrixXd coef = ldlt.solve(b);
    if (!coef.allFinite())
      throw std::runtime_error("piece " + std::to_string(p + 1) +
                               " regression is singular");
    pieces[static_cast<std::size_t>(p)].coefficients = coef;
  }
  return pieces;
}

// Mean over all rows of |s(x) - target|^2 with clipped rows contributing
// zero; the divisor is the full row count either way.
inline double clipped_loss(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& score,
    const DenoisingBatch& batch, const ClipConfig& clip) {
  std::size_t n = batch.n();
  std::vector<double> partial(chunk_count(n), 0.0);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      if (!clip_keep(batch, i, clip)) continue;
      Eigen::Index row = static_cast<Eigen::Index>(i);
      Eigen::VectorXd x = batch.xt.row(row).transpose();
      acc += (score(x) - batch.targets.row(row).transpose()).squaredNorm();
    }
    partial[c] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(n);
}

inline double clipped_loss(const PiecewiseScoreModel& model,
                           const DenoisingBatch& batch,
                           const ClipConfig& clip) {
  return clipped_loss(
      [&](const Eigen::VectorXd& x) { return eval_piecewise_score(model, x); },
      batch, clip);
}

enum class TupleMode {
  kAll,        // every k-tuple over the candidate list, mixed-radix order
  kIdentity,   // the single tuple (0, 1, ..., k-1)
};

enum class ThresholdSource {
  kGrid,            // antisymmetric assignments from threshold_grid
  kTupleMidpoint,   // midpoint thresholds computed from the tuple's own
                    // parameters (equals the true-parameter oracle when the
                    // tuple is exact)
};

struct LearnCaps {
  std::size_t tuples = 256;
  std::size_t partition_pairs = 2704;
  std::size_t threshold_assignments = 243;
  std::size_t grid_per_pair = 33;
};

struct LearnConfig {
  int k = 1;
  int degree = 3;
  double ridge = 1e-8;
  bool has_clip = false;
  ClipConfig clip;
  std::size_t n_train = 100000;
  std::size_t n_val = 10000;
  double c1 = 8.0;
  double c2 = 8.0;
  double boundary_delta = 0.01;   // the delta inside log(m/delta)
  double alpha = 0.5;             // conditioning bounds at t = 0
  double beta = 2.0;
  LearnCaps caps;
  TupleMode tuple_mode = TupleMode::kAll;
  ThresholdSource threshold_source = ThresholdSource::kGrid;
  double midpoint_fraction = 0.5;
  double grid_range_constant = 2.0;
  std::vector<PartitionPair> injected_partitions;  // nonempty replaces enumeration
  std::vector<double> lambda_hat;                  // empty: uniform 1/k
};

struct FitReportRow {
  std::size_t candidate_id = 0;
  std::size_t partition_id = 0;
  std::size_t threshold_id = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct LearnResult {
  PiecewiseScoreModel model;
  double validation_loss = 0.0;
  std::vector<FitReportRow> report;
  std::size_t chosen_row = 0;
};

namespace detail {

// Midpoint thresholds from the tuple's own parameters, the same formula the
// true-parameter oracle uses: t_ij = <Q_i, K_i - K_j> + f <Q_j - Q_i, K_i - K_j>.
inline Eigen::MatrixXd tuple_midpoint_thresholds(
    const std::vector<ParameterEstimate>& est, double fraction) {
  int k = static_cast<int>(est.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const auto& ei = est[static_cast<std::size_t>(i)];
      const auto& ej = est[static_cast<std::size_t>(j)];
      Eigen::MatrixXd dk = ei.clamped_inverse - ej.clamped_inverse;
      double base = (ei.covariance.array() * dk.array()).sum();
      double gap = ((ej.covariance - ei.covariance).array() * dk.array()).sum();
      t(i, j) = base + fraction * gap;
    }
  return t;
}

inline std::vector<std::pair<int, int>> cross_group_pairs(
    const PartitionPair& pair, int k) {
  std::vector<int> group(static_cast<std::size_t>(k), -1);
  for (std::size_t b = 0; b < pair.cov_partition.size(); ++b)
    for (int i : pair.cov_partition[b])
      group[static_cast<std::size_t>(i)] = static_cast<int>(b);
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (group[static_cast<std::size_t>(i)] != group[static_cast<std::size_t>(j)])
        out.push_back({i, j});
  return out;
}

}  // namespace detail

// Enumerate candidate tuples, partition pairs, and threshold assignments
// within caps; fit each; return the model with the minimum clipped
// validation loss (ties go to the earliest combination).
// Candidates describe the data law at t = 0 and are transported through the
// forward process to the batch time before clustering and fitting.
inline LearnResult learn_score(const DenoisingBatch& train,
                               const DenoisingBatch& val,
                               const CandidateList& candidates,
                               const LearnConfig& cfg) {
  if (candidates.entries.empty())
    throw std::invalid_argument("learn_score needs a nonempty candidate list");
  if (cfg.n_val < 1 || val.n() < 1)
    throw std::invalid_argument("learn_score needs validation rows");
  int k = cfg.k;
  Eigen::Index d = train.xt.cols();
  double t = train.t;
  double decay = std::exp(-t);
  double decay2 = decay * decay;
  double alpha_t = decay2 * cfg.alpha + (1.0 - decay2);
  double beta_t = decay2 * cfg.beta + (1.0 - decay2);

  ClipConfig clip = cfg.has_clip ? cfg.clip : default_clip(train);
  FeatureMap fm = FeatureMap::make(static_cast<int>(d), cfg.degree);
  fm.standardize_to(train.xt);

  std::size_t n_w = candidates.entries.size();
  std::size_t n_tuples = 1;
  if (cfg.tuple_mode == TupleMode::kAll) {
    double total = std::pow(static_cast<double>(n_w), k);
    if (total > static_cast<double>(cfg.caps.tuples))
      throw std::invalid_argument(
          "candidate tuple space has " + std::to_string(total) +
          " entries, over the cap of " + std::to_string(cfg.caps.tuples));
    n_tuples = static_cast<std::size_t>(total + 0.5);
  } else if (n_w < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("identity tuple needs >= k candidates");
  }

  std::vector<PartitionPair> partitions = cfg.injected_partitions.empty()
                                              ? enumerate_partition_pairs(k)
                                              : cfg.injected_partitions;
  if (partitions.size() > cfg.caps.partition_pairs)
    throw std::invalid_argument(
        "partition pair space has " + std::to_string(partitions.size()) +
        " entries, over the cap of " + std::to_string(cfg.caps.partition_pairs));

  LearnResult result;
  result.validation_loss = std::numeric_limits<double>::infinity();
  bool have_best = false;

  for (std::size_t tuple_id = 0; tuple_id < n_tuples; ++tuple_id) {
    // Decode the tuple and transport its parameters to time t.
    std::vector<ParameterEstimate> est;
    std::size_t rem = tuple_id;
    for (int slot = 0; slot < k; ++slot) {
      std::size_t idx;
      if (cfg.tuple_mode == TupleMode::kIdentity) {
        idx = static_cast<std::size_t>(slot);
      } else {
        std::size_t stride = 1;
        for (int s = slot + 1; s < k; ++s) stride *= n_w;
        idx = rem / stride;
        rem %= stride;
      }
      const Candidate& c = candidates.entries[idx];
      if (c.mean.size() != d || c.covariance.rows() != d)
        throw std::invalid_argument("candidate shape mismatch");
      double w = cfg.lambda_hat.empty()
                     ? 1.0 / static_cast<double>(k)
                     : cfg.lambda_hat[static_cast<std::size_t>(slot)];
      Eigen::VectorXd mean_t = decay * c.mean;
      Eigen::MatrixXd cov_t =
          decay2 * c.covariance +
          (1.0 - decay2) * Eigen::MatrixXd::Identity(d, d);
      est.push_back(make_estimate(mean_t, cov_t, alpha_t, w));
    }

    for (std::size_t part_id = 0; part_id < partitions.size(); ++part_id) {
      const PartitionPair& pair = partitions[part_id];
      double eta = clustering_eta(est, pair.cov_partition, beta_t);
      auto cross = detail::cross_group_pairs(pair, k);

      std::vector<double> grid{0.0};
      std::size_t n_assign = 1;
      if (cfg.threshold_source == ThresholdSource::kGrid && !cross.empty()) {
        grid = threshold_grid(beta_t, alpha_t, static_cast<int>(d), eta,
                              cfg.caps.grid_per_pair,
                              cfg.grid_range_constant);
        double total = std::pow(static_cast<double>(grid.size()),
                                static_cast<double>(cross.size()));
        if (total > static_cast<double>(cfg.caps.threshold_assignments))
          throw std::invalid_argument(
              "threshold assignment space has " + std::to_string(total) +
              " entries, over the cap of " +
              std::to_string(cfg.caps.threshold_assignments));
        n_assign = static_cast<std::size_t>(total + 0.5);
      }

      for (std::size_t th_id = 0; th_id < n_assign; ++th_id) {
        Eigen::MatrixXd thresholds = Eigen::MatrixXd::Zero(k, k);
        if (cfg.threshold_source == ThresholdSource::kTupleMidpoint) {
          thresholds =
              detail::tuple_midpoint_thresholds(est, cfg.midpoint_fraction);
        } else {
          std::size_t rem_th = th_id;
          for (std::size_t p = 0; p < cross.size(); ++p) {
            std::size_t stride = 1;
            for (std::size_t q = p + 1; q < cross.size(); ++q)
              stride *= grid.size();
            double g = grid[rem_th / stride];
            rem_th %= stride;
            thresholds(cross[p].first, cross[p].second) = g;
            thresholds(cross[p].second, cross[p].first) = -g;
          }
        }

        ClusteringFunction cf = make_clustering(pair, est, thresholds, eta);
        std::vector<BoundaryThresholds> piece_th;
        for (const auto& piece : cf.refinement.pieces) {
          double delta_in = 0.0;
          for (std::size_t a = 0; a < piece.size(); ++a)
            for (std::size_t b = a + 1; b < piece.size(); ++b) {
              const auto& ea = est[static_cast<std::size_t>(piece[a])];
              const auto& eb = est[static_cast<std::size_t>(piece[b])];
              delta_in = std::max(
                  delta_in, (ea.mean - eb.mean).norm() +
                                (ea.covariance - eb.covariance).norm());
            }
          piece_th.push_back(boundary_thresholds(alpha_t, beta_t, delta_in,
                                                 piece.size(),
                                                 cfg.boundary_delta, cfg.c1,
                                                 cfg.c2));
        }

        PiecewiseScoreModel model;
        model.clustering = cf;
        model.feature_map = fm;
        model.noise_time = t;
        model.clip_radius = clip.r_x;
        model.pieces =
            fit_pieces(train, cf, fm, piece_th, cfg.ridge, clip);

        FitReportRow row;
        row.candidate_id = tuple_id;
        row.partition_id = part_id;
        row.threshold_id = th_id;
        row.train_loss = clipped_loss(model, train, clip);
        row.val_loss = clipped_loss(model, val, clip);
        result.report.push_back(row);
        if (!have_best || row.val_loss < result.validation_loss) {
          have_best = true;
          result.validation_loss = row.val_loss;
          result.model = std::move(model);
          result.chosen_row = result.report.size() - 1;
        }
      }
    }
  }

  for (const auto& row : result.report)
    if (row.val_loss < result.validation_loss)
      throw std::logic_error("learn_score selection missed a better candidate");
  return result;
}

// Convenience wrapper: draw train/val batches from the mixture itself.
inline LearnResult learn_score_from_mix(const GaussianMixture& mix, double t,
                                        const CandidateList& candidates,
                                        const LearnConfig& cfg, Prng rng) {
  DenoisingBatch train =
      make_denoising_batch(mix, t, cfg.n_train, rng.split("train"));
  DenoisingBatch val =
      make_denoising_batch(mix, t, cfg.n_val, rng.split("val"));
  return learn_score(train, val, candidates, cfg);
}

// Candidate list carrying the true parameters, for oracle-mode runs.
inline CandidateList oracle_candidates(const GaussianMixture& mix) {
  CandidateList out;
  for (const auto& c : mix.components) {
    Candidate cand;
    cand.mean = c.mean;
    cand.covariance = c.covariance;
    cand.provenance = "oracle";
    out.entries.push_back(std::move(cand));
  }
  return out;
}

inline std::function<Eigen::VectorXd(const Eigen::VectorXd&)>
exact_score_oracle(const GaussianMixture& mix, double t) {
  GaussianMixture noised = noised_mixture(mix, t);
  return [noised](const Eigen::VectorXd& x) { return exact_score(noised, x); };
}

}  // namespace gmdiff
