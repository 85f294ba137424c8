#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmdiff/mixture.hpp"
#include "gmdiff/prng.hpp"
#include "gmdiff/util.hpp"

namespace gmdiff {

struct MCReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double bound = std::numeric_limits<double>::quiet_NaN();  // NaN: no bound
  bool pass = true;
  std::string criterion;
  // Secondary ratio statistic (used by the score error report).
  double relative = std::numeric_limits<double>::quiet_NaN();
  double relative_std_error = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double plain_se(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (static_cast<double>(v.size()) - 1.0) /
                   static_cast<double>(v.size()));
}

// Delete-block jackknife over B = min(n, 100) contiguous blocks; handles
// ratio statistics where the naive per-sample standard error is wrong.
inline double jackknife_ratio_se(const std::vector<double>& num,
                                 const std::vector<double>& den) {
  std::size_t n = num.size();
  std::size_t b_count = std::min<std::size_t>(n, 100);
  if (b_count < 2) return 0.0;
  double num_total = 0.0, den_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num_total += num[i];
    den_total += den[i];
  }
  std::vector<double> leave_out(b_count);
  double mean_est = 0.0;
  for (std::size_t b = 0; b < b_count; ++b) {
    std::size_t lo = b * n / b_count;
    std::size_t hi = (b + 1) * n / b_count;
    double ns = 0.0, ds = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      ns += num[i];
      ds += den[i];
    }
    leave_out[b] = (num_total - ns) / (den_total - ds);
    mean_est += leave_out[b];
  }
  mean_est /= static_cast<double>(b_count);
  double ss = 0.0;
  for (double r : leave_out) ss += (r - mean_est) * (r - mean_est);
  double bc = static_cast<double>(b_count);
  return std::sqrt((bc - 1.0) / bc * ss);
}

inline double adaptive_integrate(const std::function<double(double)>& f,
                                 double lo, double hi) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, lo, hi, 15, 1e-10);
}

// Integration window wide enough that every component's density has
// underflowed at the edges.
inline std::pair<double, double> window_1d(const GaussianMixture& mix,
                                           double pad_sigmas = 45.0) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : mix.components) {
    double sd = std::sqrt(c.covariance(0, 0));
    lo = std::min(lo, c.mean(0) - pad_sigmas * sd);
    hi = std::max(hi, c.mean(0) + pad_sigmas * sd);
  }
  return {lo, hi};
}

}  // namespace detail

// MC estimate of E_{x ~ q_t}[|shat(x) - grad log q_t(x)|^2], plus the same
// error relative to E|grad log q_t|^2 with a delete-block jackknife standard
// error for the ratio.
inline MCReport score_l2_error(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& shat,
    const GaussianMixture& mix, double t, std::size_t n, Prng rng) {
  if (t < 0.0) throw std::invalid_argument("score error needs t >= 0");
  GaussianMixture noised = noised_mixture(mix, t);
  SampleSet xs = sample_mixture(noised, n, rng.split("samples"));
  std::vector<double> err(n), norm(n);
  parallel_chunks(n, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::VectorXd x = xs.points.row(static_cast<Eigen::Index>(i)).transpose();
      Eigen::VectorXd s = exact_score(noised, x);
      err[i] = (shat(x) - s).squaredNorm();
      norm[i] = s.squaredNorm();
    }
  });
  MCReport r;
  r.n = n;
  r.estimate = detail::mean_of(err);
  r.std_error = detail::plain_se(err);
  double denom = detail::mean_of(norm);
  r.relative = denom > 0.0 ? r.estimate / denom : 0.0;
  r.relative_std_error = detail::jackknife_ratio_se(err, norm);
  r.criterion = "E|shat - score|^2 (relative uses E|score|^2)";
  return r;
}

// E_{x ~ M(U)}|s(x; M) - s(x; M(U))|^2: the cost of replacing the full
// mixture score by the sub-mixture score on the sub-mixture's own mass.
// use_quadrature (1-D only) replaces MC by adaptive quadrature, which stays
// meaningful when the value is far below MC resolution.
inline MCReport score_simplification_error(const GaussianMixture& mix,
                                           const std::vector<int>& subset,
                                           std::size_t n, Prng rng,
                                           bool use_quadrature = false) {
  GaussianMixture sub = restrict_mixture(mix, subset);
  if (sub.k() == mix.k())
    throw std::invalid_argument("simplification subset must be proper");
  MCReport r;
  if (use_quadrature) {
    if (mix.dim() != 1)
      throw std::invalid_argument("quadrature mode is 1-D only");
    auto [lo, hi] = detail::window_1d(mix);
    auto f = [&](double x) {
      Eigen::VectorXd v(1);
      v(0) = x;
      double diff = exact_score(mix, v)(0) - exact_score(sub, v)(0);
      return diff * diff * std::exp(log_density(sub, v));
    };
    r.estimate = detail::adaptive_integrate(f, lo, hi);
    r.std_error = 0.0;
    r.n = 0;
    r.criterion = "simplification error (quadrature)";
    return r;
  }
  SampleSet xs = sample_mixture(sub, n, rng.split("samples"));
  std::vector<double> vals(n);
  parallel_chunks(n, [&](std::size_t, std::size_t lo2, std::size_t hi2) {
    for (std::size_t i = lo2; i < hi2; ++i) {
      Eigen::VectorXd x = xs.points.row(static_cast<Eigen::Index>(i)).transpose();
      vals[i] = (exact_score(mix, x) - exact_score(sub, x)).squaredNorm();
    }
  });
  r.estimate = detail::mean_of(vals);
  r.std_error = detail::plain_se(vals);
  r.n = n;
  r.criterion = "simplification error (MC)";
  return r;
}

// E[(x^T A x)^2] under N(mu, Q), exactly. Only the symmetric part of A
// contributes. With M = Q^{1/2} B Q^{1/2}, b = Q^{1/2} B mu, c0 = mu^T B mu:
// tr(M)^2 + 2|M|_F^2 + 4|b|^2 + c0^2 + 2 c0 tr(M).
inline double fourth_moment_closed_form(const Eigen::MatrixXd& a,
                                        const Eigen::VectorXd& mu,
                                        const Eigen::MatrixXd& q) {
  Eigen::MatrixXd b_sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("covariance eigendecomposition failed");
  Eigen::MatrixXd root = es.operatorSqrt();
  Eigen::MatrixXd m = root * b_sym * root;
  Eigen::VectorXd bv = root * (b_sym * mu);
  double c0 = mu.dot(b_sym * mu);
  double trm = m.trace();
  return trm * trm + 2.0 * m.squaredNorm() + 4.0 * bv.squaredNorm() +
         c0 * c0 + 2.0 * c0 * trm;
}

inline MCReport fourth_moment_check(const Eigen::MatrixXd& a,
                                    const Eigen::VectorXd& mu,
                                    const Eigen::MatrixXd& q, std::size_t n,
                                    Prng rng) {
  if (a.squaredNorm() == 0.0)
    throw std::invalid_argument("fourth moment check needs a nonzero matrix");
  GaussianComponent comp = GaussianComponent::make(mu, q);
  std::vector<double> vals(n);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Prng r = rng.split(c);
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::VectorXd x = comp.sample(r);
      double form = x.dot(a * x);
      vals[i] = form * form;
    }
  });
  MCReport r;
  r.n = n;
  r.estimate = detail::mean_of(vals);
  r.std_error = detail::plain_se(vals);
  r.bound = fourth_moment_closed_form(a, mu, q);
  double scale = 1.0 + std::abs(r.bound) + std::abs(r.estimate);
  r.pass = std::abs(r.estimate - r.bound) <= 4.0 * r.std_error + 1e-9 * scale;
  r.criterion = "|MC - closed form| <= 4 SE";
  return r;
}

// Overlap weight of one Gaussian seen from another:
// E_{x ~ N1}[N2(x) / (N1(x) + N2(x))], compared against
// exp(-|mu1-mu2|^2/beta - |Q1-Q2|_F^2/c) with c = 16 (1 + beta/alpha)^2 beta^2
// and (alpha, beta) the tightest shared conditioning bounds of the pair.
inline double correlation_bound(const GaussianComponent& c1,
                                const GaussianComponent& c2) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(c1.covariance);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(c2.covariance);
  double lo = std::min(e1.eigenvalues().minCoeff(), e2.eigenvalues().minCoeff());
  double hi = std::max(e1.eigenvalues().maxCoeff(), e2.eigenvalues().maxCoeff());
  double alpha = std::min(1.0, lo);
  double beta = std::max(1.0, hi);
  double c = 16.0 * sq(1.0 + beta / alpha) * beta * beta;
  double mean_term = (c1.mean - c2.mean).squaredNorm() / beta;
  double cov_term = (c1.covariance - c2.covariance).squaredNorm() / c;
  return std::exp(-mean_term - cov_term);
}

inline double correlation_quadrature_1d(const GaussianComponent& c1,
                                        const GaussianComponent& c2) {
  if (c1.mean.size() != 1)
    throw std::invalid_argument("quadrature mode is 1-D only");
  GaussianMixture pair = GaussianMixture::make(
      {c1.mean, c2.mean}, {c1.covariance, c2.covariance}, {0.5, 0.5});
  auto [lo, hi] = detail::window_1d(pair);
  auto f = [&](double x) {
    Eigen::VectorXd v(1);
    v(0) = x;
    double l1 = c1.log_density(v);
    double l2 = c2.log_density(v);
    // sigma(l2 - l1) * N1(x), computed stably on both sides.
    double w = l2 > l1 ? 1.0 / (1.0 + std::exp(l1 - l2))
                       : std::exp(l2 - l1) / (1.0 + std::exp(l2 - l1));
    return w * std::exp(l1);
  };
  return detail::adaptive_integrate(f, lo, hi);
}

inline MCReport correlation_bound_check(const GaussianComponent& c1,
                                        const GaussianComponent& c2,
                                        std::size_t n, Prng rng,
                                        bool use_quadrature = false) {
  MCReport r;
  r.bound = correlation_bound(c1, c2);
  if (use_quadrature) {
    r.estimate = correlation_quadrature_1d(c1, c2);
    r.std_error = 0.0;
    r.n = 0;
  } else {
    std::vector<double> vals(n);
    parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
      Prng rr = rng.split(c);
      for (std::size_t i = lo; i < hi; ++i) {
        Eigen::VectorXd x = c1.sample(rr);
        double l1 = c1.log_density(x);
        double l2 = c2.log_density(x);
        vals[i] = l2 > l1 ? 1.0 / (1.0 + std::exp(l1 - l2))
                          : std::exp(l2 - l1) / (1.0 + std::exp(l2 - l1));
      }
    });
    r.estimate = detail::mean_of(vals);
    r.std_error = detail::plain_se(vals);
    r.n = n;
  }
  r.pass = r.estimate <= r.bound + 3.0 * r.std_error;
  r.criterion = "overlap <= exp bound + 3 SE";
  return r;
}

// Empirical quadratic-form tails under N(0, Id):
// Pr[x^T A x - tr(A) > s |A|_F] <= exp(-0.1 min(s sqrt(r), s^2)) with
// r = |A|_F^2 / |A|_op^2. The constant certifies shape, not sharpness.
inline std::vector<MCReport> hanson_wright_tail_check(
    const Eigen::MatrixXd& a, const std::vector<double>& s_values,
    std::size_t n, Prng rng) {
  if (a.squaredNorm() == 0.0)
    throw std::invalid_argument("tail check needs a nonzero matrix");
  for (double s : s_values)
    if (!(s > 0.0)) throw std::invalid_argument("tail levels must be positive");
  Eigen::Index d = a.rows();
  double fro = a.norm();
  double op = a.jacobiSvd().singularValues()(0);
  double stable_rank = fro * fro / (op * op);
  double tr = a.trace();

  std::vector<double> forms(n);
  parallel_chunks(n, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    Prng r = rng.split(c);
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::VectorXd x(d);
      for (Eigen::Index j = 0; j < d; ++j) x(j) = r.normal();
      forms[i] = x.dot(a * x);
    }
  });

  std::vector<MCReport> out;
  for (double s : s_values) {
    double cutoff = tr + s * fro;
    std::size_t hits = 0;
    for (double f : forms)
      if (f > cutoff) ++hits;
    MCReport r;
    r.n = n;
    r.estimate = static_cast<double>(hits) / static_cast<double>(n);
    r.std_error =
        std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(n));
    r.bound = std::exp(-0.1 * std::min(s * std::sqrt(stable_rank), s * s));
    r.pass = r.estimate <= r.bound;
    r.criterion = "tail(s=" + std::to_string(s) + ") <= shape bound";
    out.push_back(std::move(r));
  }
  return out;
}

// Exact KL(N1 || N2).
inline double kl_gaussian(const GaussianComponent& c1,
                          const GaussianComponent& c2) {
  Eigen::Index d = c1.mean.size();
  if (c2.mean.size() != d)
    throw std::invalid_argument("KL needs matching dimensions");
  double tr = (c2.inverse * c1.covariance).trace();
  Eigen::VectorXd dm = c2.mean - c1.mean;
  double quad = dm.dot(c2.inverse * dm);
  return 0.5 * (tr - static_cast<double>(d) + quad + c2.log_det - c1.log_det);
}

// Exact Wasserstein-1 between two 1-D empirical distributions via the merged
// CDF: W1 = integral |F_a - F_b|.
inline double w1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("W1 needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double wa = 1.0 / static_cast<double>(a.size());
  double wb = 1.0 / static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double gap = 0.0, prev = 0.0, total = 0.0;
  bool started = false;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
      x = a[i];
    else
      x = b[j];
    if (started) total += std::abs(gap) * (x - prev);
    while (i < a.size() && a[i] == x) {
      gap += wa;
      ++i;
    }
    while (j < b.size() && b[j] == x) {
      gap -= wb;
      ++j;
    }
    prev = x;
    started = true;
  }
  return total;
}

struct DiagnosticsReport {
  MCReport w1;        // sliced-W1: mean 1-D W1 over random unit projections
  double mean_gap = 0.0;
  double cov_gap = 0.0;
};

inline DiagnosticsReport distribution_diagnostics(const Eigen::MatrixXd& a,
                                                  const Eigen::MatrixXd& b,
                                                  std::size_t n_projections,
                                                  Prng rng) {
  if (a.rows() == 0 || b.rows() == 0)
    throw std::invalid_argument("diagnostics need nonempty sample sets");
  if (a.cols() != b.cols())
    throw std::invalid_argument("diagnostics need matching dimensions");
  Eigen::Index d = a.cols();

  std::vector<double> w1s(n_projections);
  parallel_chunks(n_projections,
                  [&](std::size_t c, std::size_t lo, std::size_t hi) {
                    Prng r = rng.split(c);
                    for (std::size_t p = lo; p < hi; ++p) {
                      Eigen::VectorXd dir(d);
                      double nrm = 0.0;
                      while (nrm < 1e-12) {
                        for (Eigen::Index j = 0; j < d; ++j)
                          dir(j) = r.normal();
                        nrm = dir.norm();
                      }
                      dir /= nrm;
                      Eigen::VectorXd pa = a * dir;
                      Eigen::VectorXd pb = b * dir;
                      w1s[p] = w1_1d(
                          std::vector<double>(pa.data(), pa.data() + pa.size()),
                          std::vector<double>(pb.data(), pb.data() + pb.size()));
                    }
                  });

  DiagnosticsReport rep;
  rep.w1.n = n_projections;
  rep.w1.estimate = detail::mean_of(w1s);
  rep.w1.std_error = detail::plain_se(w1s);
  rep.w1.criterion = "sliced-W1 over random projections";

  Eigen::VectorXd ma = a.colwise().mean();
  Eigen::VectorXd mb = b.colwise().mean();
  rep.mean_gap = (ma - mb).norm();
  Eigen::MatrixXd ca = (a.rowwise() - ma.transpose()).transpose() *
                       (a.rowwise() - ma.transpose()) /
                       static_cast<double>(a.rows());
  Eigen::MatrixXd cb = (b.rowwise() - mb.transpose()).transpose() *
                       (b.rowwise() - mb.transpose()) /
                       static_cast<double>(b.rows());
  rep.cov_gap = (ca - cb).norm();
  return rep;
}

}  // namespace gmdiff
