#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "gmdiff/prng.hpp"
#include "gmdiff/subspace.hpp"

using namespace gmdiff;

namespace {

Eigen::MatrixXd random_symmetric(int d, Prng& rng) {
  Eigen::MatrixXd g(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
  return 0.5 * (g + g.transpose());
}

}  // namespace

TEST_CASE("topk selects eigenvectors by absolute eigenvalue", "[subspace]") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  a.diagonal() << 1.0, -5.0, 3.0, 0.1;
  SubspaceBasis top2 = topk_subspace(a, 2);
  REQUIRE(top2.rank() == 2);
  REQUIRE(top2.values(0) == Catch::Approx(-5.0));
  REQUIRE(top2.values(1) == Catch::Approx(3.0));
  REQUIRE(std::abs(top2.basis(1, 0)) == Catch::Approx(1.0));
  REQUIRE(std::abs(top2.basis(2, 1)) == Catch::Approx(1.0));
}

TEST_CASE("topk validates its input", "[subspace]") {
  Eigen::MatrixXd ns(2, 3);
  ns.setZero();
  REQUIRE_THROWS_WITH(topk_subspace(ns, 1),
                      Catch::Matchers::ContainsSubstring("square"));
  Eigen::MatrixXd asym(2, 2);
  asym << 0.0, 1.0, -1.0, 0.0;
  REQUIRE_THROWS_WITH(topk_subspace(asym, 1),
                      Catch::Matchers::ContainsSubstring("symmetric"));
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  REQUIRE_THROWS_WITH(topk_subspace(id, 0),
                      Catch::Matchers::ContainsSubstring("rank out of range"));
  REQUIRE_THROWS_WITH(topk_subspace(id, 4),
                      Catch::Matchers::ContainsSubstring("rank out of range"));
}

TEST_CASE("basis is orthonormal and the projector idempotent", "[subspace]") {
  Prng rng(201);
  Eigen::MatrixXd a = random_symmetric(6, rng);
  SubspaceBasis v = topk_subspace(a, 3);
  REQUIRE((v.basis.transpose() * v.basis -
           Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  Eigen::MatrixXd p = v.projector();
  REQUIRE((p * p - p).norm() < 1e-12);
  Eigen::VectorXd x(6);
  for (int j = 0; j < 6; ++j) x(j) = rng.normal();
  REQUIRE((v.project(x) - p * x).norm() < 1e-12);
  REQUIRE((v.project(v.project(x)) - v.project(x)).norm() < 1e-12);
}

// Recovery property: for A = sum_i v_i v_i^T + E with |E|_op <= eps, the
// projection vhat_i of v_i onto the top-k subspace of A satisfies
// |v_i - vhat_i|^2 <= 2 eps. The vectors need not be orthogonal or unit.
TEST_CASE("projected spike recovery stays within twice the noise level", "[subspace]") {
  Prng rng(202);
  for (int rep = 0; rep < 10; ++rep) {
    int d = 12;
    int k = 1 + static_cast<int>(rng.uniform() * 3.0);
    double eps = rep % 2 == 0 ? 0.01 : 0.1;
    std::vector<Eigen::VectorXd> vs;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd v(d);
      for (int j = 0; j < d; ++j) v(j) = rng.normal();
      v *= (0.5 + 1.5 * rng.uniform()) / v.norm();
      vs.push_back(v);
      a += v * v.transpose();
    }
    Eigen::MatrixXd e = random_symmetric(d, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e);
    e *= eps / es.eigenvalues().cwiseAbs().maxCoeff();
    a += e;

    Eigen::MatrixXd proj = topk_subspace(a, k).projector();
    for (const auto& v : vs)
      REQUIRE((v - proj * v).squaredNorm() <= 2.0 * eps + 1e-9);
  }
}

TEST_CASE("tied absolute eigenvalues break toward the positive one", "[subspace]") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a.diagonal() << 2.0, -2.0, 1.0;
  SubspaceBasis v = topk_subspace(a, 1);
  REQUIRE(v.values(0) == Catch::Approx(2.0));
}
