#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "gmdiff/clustering.hpp"
#include "gmdiff/features.hpp"
#include "gmdiff/mixture.hpp"

namespace gmdiff {

struct PieceModel {
  int piece_index = 1;                 // 1-based refinement piece
  std::vector<int> members;            // component indices U_t
  int anchor = 0;                      // lowest index in U_t
  Eigen::MatrixXd coefficients;        // feature_count x d
  double theta1 = 1.0;
  double theta2 = 1.0;
  Eigen::MatrixXd fallback_inverse;    // K of the anchor estimate
  Eigen::VectorXd fallback_mean;       // mean of the anchor estimate
};

struct PiecewiseScoreModel {
  ClusteringFunction clustering;
  std::vector<PieceModel> pieces;      // one per refinement piece, in order
  FeatureMap feature_map;
  double noise_time = 0.0;
  // Training clip radius: the regression was fit (and its loss measured)
  // only on |x| <= clip_radius, so evaluation falls back to the linear
  // anchor score outside that ball. 0 disables the gate.
  double clip_radius = 0.0;

  int dim() const { return feature_map.dim; }
};

struct SoftmaxInputs {
  Eigen::VectorXd r;       // indexed like members
  Eigen::VectorXd theta;
};

// Log posterior-odds split used by the polynomial construction: with exact
// parameters, softmax(r + theta) equals the Bayes posterior over the
// members, and the anchor's entries are exactly zero.
inline SoftmaxInputs softmax_inputs(const Eigen::VectorXd& x,
                                    const std::vector<ParameterEstimate>& all,
                                    const std::vector<int>& members,
                                    int anchor) {
  SoftmaxInputs out;
  std::size_t m = members.size();
  out.r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  out.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  const ParameterEstimate& a = all[static_cast<std::size_t>(anchor)];
  Eigen::VectorXd xa = x - a.mean;
  double quad_a = xa.dot(a.clamped_inverse * xa);
  for (std::size_t idx = 0; idx < m; ++idx) {
    int j = members[idx];
    if (j == anchor) continue;
    const ParameterEstimate& e = all[static_cast<std::size_t>(j)];
    Eigen::VectorXd xj = x - e.mean;
    double quad_j = xj.dot(e.clamped_inverse * xj);
    double trace_term =
        (a.covariance.array() * (e.clamped_inverse - a.clamped_inverse).array())
            .sum();
    out.r(static_cast<Eigen::Index>(idx)) =
        -0.5 * quad_j + 0.5 * quad_a + 0.5 * trace_term;
    out.theta(static_cast<Eigen::Index>(idx)) =
        std::log(e.weight / a.weight) - 0.5 * trace_term +
        0.5 * (a.log_det_cov - e.log_det_cov);
  }
  return out;
}

// B-hat of the bounded region: 1 iff every member's first statistic sits
// within [-theta1, theta1] and second statistic within [0, theta2].
inline int boundary_indicator(const Eigen::VectorXd& x,
                              const std::vector<ParameterEstimate>& all,
                              const std::vector<int>& members, int anchor,
                              double theta1, double theta2) {
  if (!(theta1 > 0.0) || !(theta2 > 0.0))
    throw std::invalid_argument("boundary indicator thresholds must be > 0");
  const ParameterEstimate& a = all[static_cast<std::size_t>(anchor)];
  Eigen::VectorXd xa = x - a.mean;
  double quad_a = xa.dot(a.clamped_inverse * xa);
  for (int j : members) {
    if (j == anchor) continue;
    const ParameterEstimate& e = all[static_cast<std::size_t>(j)];
    Eigen::VectorXd xj = x - e.mean;
    double v1 = xj.dot(e.clamped_inverse * xj) - quad_a -
                (a.covariance.array() *
                 (e.clamped_inverse - a.clamped_inverse).array())
                    .sum();
    if (std::abs(v1) > theta1) return 0;
    double v2 = ((e.clamped_inverse - a.clamped_inverse) * xj).squaredNorm();
    if (v2 > theta2) return 0;
  }
  return 1;
}

// Default thresholds scale with the in-piece parameter spread:
// theta1 = c1 (beta delta_in^2 / alpha^2) log(m/delta),
// theta2 = c2 (sqrt(beta) delta_in^2 / alpha^2) log(m/delta).
// delta_in = 0 (a piece of identical components) gets a tiny positive floor
// so the indicator stays well-defined.
struct BoundaryThresholds {
  double theta1 = 1.0;
  double theta2 = 1.0;
};

inline BoundaryThresholds boundary_thresholds(double alpha, double beta,
                                              double delta_in, std::size_t m,
                                              double delta, double c1,
                                              double c2) {
  double lg = std::log(static_cast<double>(m) / delta);
  BoundaryThresholds th;
  th.theta1 = c1 * beta * delta_in * delta_in / (alpha * alpha) * lg;
  th.theta2 = c2 * std::sqrt(beta) * delta_in * delta_in / (alpha * alpha) * lg;
  th.theta1 = std::max(th.theta1, 1e-9);
  th.theta2 = std::max(th.theta2, 1e-9);
  return th;
}

// Piecewise evaluation: polynomial head inside the bounded region, linear
// fallback -K_anchor (x - mu_anchor) outside it. The model predicts the
// score itself, i.e. the denoising target -z/sqrt(1 - e^{-2t}) in
// expectation.
inline Eigen::VectorXd eval_piecewise_score(const PiecewiseScoreModel& model,
                                            const Eigen::VectorXd& x) {
  int t = classify(x, model.clustering);
  const PieceModel& piece = model.pieces[static_cast<std::size_t>(t - 1)];
  int b = boundary_indicator(x, model.clustering.estimates, piece.members,
                             piece.anchor, piece.theta1, piece.theta2);
  if (model.clip_radius > 0.0 && x.norm() > model.clip_radius) b = 0;
  if (b == 1)
    return piece.coefficients.transpose() * model.feature_map.eval(x);
  return -piece.fallback_inverse * (x - piece.fallback_mean);
}

// Advisory polynomial degree with every hidden constant set to 1:
// beta^2 m^2 nu^5 delta_in^6 / (alpha^6 eps), clamped to [1, max_degree].
inline int suggest_degree(const ConditioningParams& params, std::size_t m,
                          double delta_in, double nu, double eps,
                          int max_degree = 16) {
  if (!(eps > 0.0)) throw std::invalid_argument("suggest_degree needs eps > 0");
  double v = params.beta * params.beta * static_cast<double>(m * m) *
             std::pow(nu, 5) * std::pow(delta_in, 6) /
             (std::pow(params.alpha, 6) * eps);
  double r = std::round(v);
  if (r < 1.0) r = 1.0;
  if (r > static_cast<double>(max_degree)) r = max_degree;
  return static_cast<int>(r);
}

}  // namespace gmdiff
