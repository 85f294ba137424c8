#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace gmdiff {

// Monomial basis of total degree <= `degree` on standardized coordinates
// x' = (x - shift) / scale. Exponent order is graded lexicographic: degree 0
// first, then within each degree the first coordinate carries the highest
// priority, e.g. for d=2, l=2: 1, x1, x2, x1^2, x1*x2, x2^2.
struct FeatureMap {
  int degree = 0;
  int dim = 0;
  std::vector<std::vector<int>> exponents;
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  int count() const { return static_cast<int>(exponents.size()); }

  static FeatureMap make(int dim, int degree) {
    if (dim < 1 || degree < 0)
      throw std::invalid_argument("feature map needs dim >= 1, degree >= 0");
    FeatureMap fm;
    fm.dim = dim;
    fm.degree = degree;
    fm.shift = Eigen::VectorXd::Zero(dim);
    fm.scale = Eigen::VectorXd::Ones(dim);
    std::vector<int> expo(static_cast<std::size_t>(dim), 0);
    for (int total = 0; total <= degree; ++total)
      emit_degree(fm, expo, 0, total);
    return fm;
  }

  // shift = per-coordinate mean, scale = per-coordinate std of the rows; a
  // zero-variance coordinate keeps scale 1.
  void standardize_to(const Eigen::MatrixXd& rows) {
    if (rows.rows() < 2) return;
    shift = rows.colwise().mean();
    Eigen::VectorXd var =
        (rows.rowwise() - shift.transpose()).array().square().colwise().mean();
    for (int j = 0; j < dim; ++j)
      scale(j) = var(j) > 1e-24 ? std::sqrt(var(j)) : 1.0;
  }

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const {
    Eigen::VectorXd xs = (x - shift).cwiseQuotient(scale);
    Eigen::VectorXd out(count());
    for (int f = 0; f < count(); ++f) {
      double v = 1.0;
      const auto& e = exponents[static_cast<std::size_t>(f)];
      for (int j = 0; j < dim; ++j)
        for (int p = 0; p < e[static_cast<std::size_t>(j)]; ++p) v *= xs(j);
      out(f) = v;
    }
    return out;
  }

 private:
  static void emit_degree(FeatureMap& fm, std::vector<int>& expo, int pos,
                          int remaining) {
    if (pos == fm.dim - 1) {
      expo[static_cast<std::size_t>(pos)] = remaining;
      fm.exponents.push_back(expo);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      expo[static_cast<std::size_t>(pos)] = e;
      emit_degree(fm, expo, pos + 1, remaining - e);
    }
    expo[static_cast<std::size_t>(pos)] = 0;
  }
};

inline std::size_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::size_t r = 1;
  for (int i = 1; i <= k; ++i)
    r = r * static_cast<std::size_t>(n - k + i) / static_cast<std::size_t>(i);
  return r;
}

}  // namespace gmdiff
