#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gmdiff {

struct SubspaceBasis {
  Eigen::MatrixXd basis;   // ambient_dim x rank, orthonormal columns
  Eigen::VectorXd values;  // the retained eigenvalues, in selection order

  int ambient_dim() const { return static_cast<int>(basis.rows()); }
  int rank() const { return static_cast<int>(basis.cols()); }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return basis * (basis.transpose() * x);
  }

  Eigen::MatrixXd projector() const { return basis * basis.transpose(); }
};

// Span of the k eigenvectors with largest |eigenvalue| of a symmetric matrix.
// Ties break by signed eigenvalue (larger first), then by position in the
// ascending eigen decomposition, so the choice is deterministic.
inline SubspaceBasis topk_subspace(const Eigen::MatrixXd& a, int k) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("topk_subspace needs a square matrix");
  double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (asym > 1e-9 * scale)
    throw std::invalid_argument("topk_subspace needs a symmetric matrix");
  if (k < 1 || k > a.rows())
    throw std::invalid_argument("topk_subspace rank out of range");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("topk_subspace eigendecomposition failed");

  std::vector<int> order(static_cast<std::size_t>(a.rows()));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    double ai = std::abs(ev(i)), aj = std::abs(ev(j));
    if (ai != aj) return ai > aj;
    return ev(i) > ev(j);
  });

  SubspaceBasis out;
  out.basis.resize(a.rows(), k);
  out.values.resize(k);
  for (int i = 0; i < k; ++i) {
    out.basis.col(i) = es.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    out.values(i) = ev(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace gmdiff
