#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "gmdiff/learning.hpp"
#include "gmdiff/mixture.hpp"
#include "gmdiff/prng.hpp"

using namespace gmdiff;

namespace {

// Trivial one-piece clustering over a single estimate.
ClusteringFunction one_piece(const Eigen::VectorXd& mu,
                             const Eigen::MatrixXd& q) {
  std::vector<ParameterEstimate> est;
  est.push_back(make_estimate(mu, q, 1.0, 1.0));
  PartitionPair pair{{{0}}, {{0}}};
  return make_clustering(pair, est, Eigen::MatrixXd::Zero(1, 1), 1.0);
}

DenoisingBatch linear_batch(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                            std::size_t n, Prng rng) {
  int d = static_cast<int>(w.rows());
  DenoisingBatch batch;
  batch.t = 0.5;
  batch.xt.resize(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      batch.xt(static_cast<Eigen::Index>(i), j) = 2.0 * rng.normal();
  batch.targets = (batch.xt * w.transpose()).rowwise() + b.transpose();
  batch.x_norms = batch.xt.rowwise().norm();
  batch.z_norms = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  return batch;
}

std::vector<BoundaryThresholds> wide_open(int pieces) {
  std::vector<BoundaryThresholds> th(static_cast<std::size_t>(pieces));
  for (auto& t : th) {
    t.theta1 = 1e12;
    t.theta2 = 1e12;
  }
  return th;
}

}  // namespace

TEST_CASE("denoising batches encode the forward identity", "[learning]") {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(2, 1.0);
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(2, 2);
  GaussianMixture mix = GaussianMixture::make({mu}, {q}, {1.0});
  double t = 0.3;
  DenoisingBatch b = make_denoising_batch(mix, t, 500, Prng(701));
  REQUIRE(b.n() == 500);
  REQUIRE(b.t == t);
  double s = std::sqrt(1.0 - std::exp(-2.0 * t));
  // targets are -z/s, so |target| * s = |z| row by row
  for (int i = 0; i < 5; ++i)
    REQUIRE(b.targets.row(i).norm() * s == Catch::Approx(b.z_norms(i)).epsilon(1e-12));
  REQUIRE((b.x_norms - b.xt.rowwise().norm()).norm() < 1e-12);

  ClipConfig clip = default_clip(b);
  REQUIRE(clip.r_x == Catch::Approx(2.0 * b.x_norms.maxCoeff()));
  REQUIRE(clip.r_z == Catch::Approx(2.0 * b.z_norms.maxCoeff()));
  REQUIRE(clip_keep(b, 0, clip));
  ClipConfig none{0.0, 0.0};
  REQUIRE_FALSE(clip_keep(b, 0, none));
}

TEST_CASE("batches from fixed points redraw only the noise", "[learning]") {
  Eigen::MatrixXd pts(3, 1);
  pts << -1.0, 0.0, 2.0;
  double t = 0.7;
  DenoisingBatch b = make_denoising_batch_from_points(pts, t, Prng(702));
  double a = std::exp(-t);
  double s = std::sqrt(1.0 - a * a);
  for (int i = 0; i < 3; ++i) {
    // xt = a x0 + s z and target = -z/s together pin z twice
    double z = (b.xt(i, 0) - a * pts(i, 0)) / s;
    REQUIRE(b.targets(i, 0) == Catch::Approx(-z / s).epsilon(1e-12));
    REQUIRE(b.z_norms(i) == Catch::Approx(std::abs(z)).epsilon(1e-12));
  }
  REQUIRE_THROWS_AS(make_denoising_batch_from_points(pts, 0.0, Prng(1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      make_denoising_batch_from_points(Eigen::MatrixXd(0, 1), 0.5, Prng(1)),
      std::invalid_argument);
}

TEST_CASE("regression recovers an exact linear target map", "[learning]") {
  Eigen::MatrixXd w(2, 2);
  w << -0.8, 0.3, 0.1, -1.2;
  Eigen::VectorXd bias(2);
  bias << 0.5, -0.25;
  DenoisingBatch batch = linear_batch(w, bias, 600, Prng(703));

  ClusteringFunction cf = one_piece(Eigen::VectorXd::Zero(2),
                                    Eigen::MatrixXd::Identity(2, 2));
  FeatureMap fm = FeatureMap::make(2, 1);
  ClipConfig clip{1e9, 1e9};
  std::vector<PieceModel> pieces =
      fit_pieces(batch, cf, fm, wide_open(1), 1e-12, clip);
  REQUIRE(pieces.size() == 1);
  // row 0 is the constant feature, rows 1..2 the coordinates
  REQUIRE((pieces[0].coefficients.row(0).transpose() - bias).norm() < 1e-6);
  REQUIRE((pieces[0].coefficients.block(1, 0, 2, 2) - w.transpose()).norm() < 1e-6);

  // the fitted model reproduces the map pointwise
  PiecewiseScoreModel model;
  model.clustering = cf;
  model.feature_map = fm;
  model.pieces = pieces;
  Eigen::VectorXd x(2);
  x << 0.7, -0.3;
  REQUIRE((eval_piecewise_score(model, x) - (w * x + bias)).norm() < 1e-6);
  REQUIRE(clipped_loss(model, batch, clip) < 1e-10);
}

TEST_CASE("duplicating every row leaves the trace-scaled solve unchanged", "[learning]") {
  Eigen::MatrixXd w(1, 1);
  w << -0.9;
  Eigen::VectorXd bias(1);
  bias << 0.2;
  DenoisingBatch batch = linear_batch(w, bias, 300, Prng(704));
  // add noise so the fit is not exact and the ridge matters
  Prng noise(705);
  for (Eigen::Index i = 0; i < batch.targets.rows(); ++i)
    batch.targets(i, 0) += 0.5 * noise.normal();

  DenoisingBatch doubled;
  doubled.t = batch.t;
  doubled.xt.resize(600, 1);
  doubled.targets.resize(600, 1);
  doubled.xt << batch.xt, batch.xt;
  doubled.targets << batch.targets, batch.targets;
  doubled.x_norms = doubled.xt.rowwise().norm();
  doubled.z_norms = Eigen::VectorXd::Zero(600);

  ClusteringFunction cf = one_piece(Eigen::VectorXd::Zero(1),
                                    Eigen::MatrixXd::Identity(1, 1));
  FeatureMap fm = FeatureMap::make(1, 2);
  ClipConfig clip{1e9, 1e9};
  auto a = fit_pieces(batch, cf, fm, wide_open(1), 1e-3, clip);
  auto b = fit_pieces(doubled, cf, fm, wide_open(1), 1e-3, clip);
  REQUIRE((a[0].coefficients - b[0].coefficients).norm() < 1e-10);
}

TEST_CASE("ridge strength interpolates between fit and shrinkage", "[learning]") {
  Eigen::MatrixXd w(1, 1);
  w << 1.5;
  Eigen::VectorXd bias(1);
  bias << 0.0;
  DenoisingBatch batch = linear_batch(w, bias, 400, Prng(706));
  ClusteringFunction cf = one_piece(Eigen::VectorXd::Zero(1),
                                    Eigen::MatrixXd::Identity(1, 1));
  FeatureMap fm = FeatureMap::make(1, 1);
  ClipConfig clip{1e9, 1e9};
  auto tight = fit_pieces(batch, cf, fm, wide_open(1), 1e-12, clip);
  auto heavy = fit_pieces(batch, cf, fm, wide_open(1), 1e9, clip);
  REQUIRE(std::abs(tight[0].coefficients(1, 0) - 1.5) < 1e-6);
  REQUIRE(heavy[0].coefficients.norm() < 1e-3);
}

TEST_CASE("an empty piece is an error without ridge and zero with it", "[learning]") {
  Eigen::MatrixXd w(1, 1);
  w << 1.0;
  DenoisingBatch batch = linear_batch(w, Eigen::VectorXd::Zero(1), 50, Prng(707));

  // two pieces, all mass lands in the near-zero-mean piece
  std::vector<ParameterEstimate> est;
  est.push_back(make_estimate(Eigen::VectorXd::Zero(1),
                              Eigen::MatrixXd::Identity(1, 1), 1.0, 0.5));
  est.push_back(make_estimate(Eigen::VectorXd::Constant(1, 500.0),
                              Eigen::MatrixXd::Identity(1, 1), 1.0, 0.5));
  PartitionPair pair{{{0}, {1}}, {{0, 1}}};
  ClusteringFunction cf =
      make_clustering(pair, est, Eigen::MatrixXd::Zero(2, 2), 1.0);
  REQUIRE(cf.piece_count() == 2);

  FeatureMap fm = FeatureMap::make(1, 1);
  ClipConfig clip{1e9, 1e9};
  auto pieces = fit_pieces(batch, cf, fm, wide_open(2), 1e-6, clip);
  REQUIRE(pieces[1].coefficients.norm() == 0.0);
  REQUIRE_THROWS_WITH(fit_pieces(batch, cf, fm, wide_open(2), 0.0, clip),
                      Catch::Matchers::ContainsSubstring("ridge is 0"));
}

TEST_CASE("clipped loss averages over all rows but skips clipped ones", "[learning]") {
  DenoisingBatch batch;
  batch.t = 0.5;
  batch.xt.resize(3, 1);
  batch.xt << 1.0, 2.0, 10.0;
  batch.targets.resize(3, 1);
  batch.targets << 1.0, -1.0, 5.0;
  batch.x_norms = batch.xt.rowwise().norm();
  batch.z_norms = Eigen::VectorXd::Zero(3);

  ClipConfig clip{3.0, 1.0};  // the third row is clipped away
  auto zero_fn = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Zero(x.size()).eval();
  };
  // contributions 1 and 1 from the kept rows, divided by all 3 rows
  REQUIRE(clipped_loss(zero_fn, batch, clip) == Catch::Approx(2.0 / 3.0));
  ClipConfig open{1e9, 1e9};
  REQUIRE(clipped_loss(zero_fn, batch, open) == Catch::Approx(27.0 / 3.0));
}

TEST_CASE("higher degree can only lower the training loss", "[learning]") {
  GaussianMixture mix = GaussianMixture::make(
      {Eigen::VectorXd::Zero(1)}, {Eigen::MatrixXd::Constant(1, 1, 1.5)}, {1.0});
  DenoisingBatch batch = make_denoising_batch(mix, 0.4, 3000, Prng(708));
  ClusteringFunction cf = one_piece(Eigen::VectorXd::Zero(1),
                                    Eigen::MatrixXd::Constant(1, 1, 1.5));
  ClipConfig clip = default_clip(batch);
  double prev = std::numeric_limits<double>::infinity();
  for (int degree : {1, 3, 5}) {
    FeatureMap fm = FeatureMap::make(1, degree);
    fm.standardize_to(batch.xt);
    auto pieces = fit_pieces(batch, cf, fm, wide_open(1), 1e-12, clip);
    PiecewiseScoreModel model;
    model.clustering = cf;
    model.feature_map = fm;
    model.pieces = pieces;
    double loss = clipped_loss(model, batch, clip);
    REQUIRE(loss <= prev + 1e-9);
    prev = loss;
  }
}

TEST_CASE("learning a single Gaussian recovers its linear score", "[learning]") {
  Eigen::VectorXd mu(2);
  mu << 1.0, -0.5;
  Eigen::MatrixXd q(2, 2);
  q << 1.2, 0.3, 0.3, 0.8;
  GaussianMixture mix = GaussianMixture::make({mu}, {q}, {1.0});
  double t = 0.5;

  LearnConfig cfg;
  cfg.k = 1;
  cfg.degree = 1;  // the true score of one Gaussian is affine
  cfg.n_train = 20000;
  cfg.n_val = 4000;
  cfg.alpha = 0.5;
  cfg.beta = 2.0;
  LearnResult res =
      learn_score_from_mix(mix, t, oracle_candidates(mix), cfg, Prng(709));
  REQUIRE(res.report.size() == 1);
  REQUIRE(res.model.noise_time == t);
  REQUIRE(res.model.clip_radius > 0.0);

  GaussianMixture noised = noised_mixture(mix, t);
  Prng rng(710);
  double err = 0.0, norm = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd x = noised.components[0].sample(rng);
    Eigen::VectorXd s = exact_score(noised, x);
    err += (eval_piecewise_score(res.model, x) - s).squaredNorm();
    norm += s.squaredNorm();
  }
  REQUIRE(err / norm < 0.01);

  // validation loss sits near the denoising noise floor
  // E|target - score|^2 = d / (1 - e^{-2t}) - E|score|^2 > 0
  REQUIRE(res.validation_loss > 0.0);
  double floor = 2.0 / (1.0 - std::exp(-2.0 * t));
  REQUIRE(res.validation_loss < floor);
}

TEST_CASE("learn_score enumerates and reports every combination", "[learning]") {
  Eigen::VectorXd m1(1), m2(1);
  m1 << -4.0;
  m2 << 4.0;
  Eigen::MatrixXd qa = Eigen::MatrixXd::Constant(1, 1, 1.0);
  GaussianMixture mix = GaussianMixture::make({m1, m2}, {qa, qa}, {0.5, 0.5});
  LearnConfig cfg;
  cfg.k = 2;
  cfg.degree = 2;
  cfg.n_train = 4000;
  cfg.n_val = 1000;
  cfg.tuple_mode = TupleMode::kIdentity;
  cfg.threshold_source = ThresholdSource::kTupleMidpoint;
  cfg.alpha = 1.0;
  cfg.beta = 1.0;
  LearnResult res =
      learn_score_from_mix(mix, 0.2, oracle_candidates(mix), cfg, Prng(711));
  // identity tuple x 4 partition pairs x midpoint thresholds
  REQUIRE(res.report.size() == 4);
  REQUIRE(res.chosen_row < res.report.size());
  double best = res.report[res.chosen_row].val_loss;
  for (const auto& row : res.report) REQUIRE(best <= row.val_loss);
  REQUIRE(res.validation_loss == best);

  // the two-piece mean split must beat the single-piece fit on this spread
  const auto& chosen = res.model.clustering.pair.mean_partition;
  REQUIRE(chosen.size() == 2);
}

TEST_CASE("enumeration caps turn into errors, not truncation", "[learning]") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(1, 1);
  GaussianMixture mix = GaussianMixture::make({mu}, {q}, {1.0});
  CandidateList cands;
  for (int i = 0; i < 30; ++i) {
    Candidate c;
    c.mean = Eigen::VectorXd::Constant(1, 0.1 * i);
    c.covariance = q;
    cands.entries.push_back(c);
  }
  DenoisingBatch train = make_denoising_batch(mix, 0.5, 1000, Prng(712));
  DenoisingBatch val = make_denoising_batch(mix, 0.5, 200, Prng(713));

  LearnConfig cfg;
  cfg.k = 2;
  cfg.caps.tuples = 100;  // 30^2 = 900 over the cap
  REQUIRE_THROWS_WITH(learn_score(train, val, cands, cfg),
                      Catch::Matchers::ContainsSubstring("over the cap"));

  cfg.caps.tuples = 1000;
  cfg.caps.partition_pairs = 2;  // 4 pairs at k=2
  REQUIRE_THROWS_WITH(learn_score(train, val, cands, cfg),
                      Catch::Matchers::ContainsSubstring("partition pair space"));

  cfg.caps.partition_pairs = 100;
  cfg.caps.threshold_assignments = 2;
  REQUIRE_THROWS_WITH(learn_score(train, val, cands, cfg),
                      Catch::Matchers::ContainsSubstring("threshold assignment space"));

  REQUIRE_THROWS_WITH(learn_score(train, val, CandidateList{}, cfg),
                      Catch::Matchers::ContainsSubstring("nonempty candidate"));
}

TEST_CASE("candidate parameters are transported to the batch time", "[learning]") {
  // A candidate with the data-law parameters must, after transport, match
  // the noised component; check through the fitted model's clustering.
  Eigen::VectorXd mu(1);
  mu << 3.0;
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(1, 1, 2.0);
  GaussianMixture mix = GaussianMixture::make({mu}, {q}, {1.0});
  double t = 0.8;
  LearnConfig cfg;
  cfg.k = 1;
  cfg.degree = 1;
  cfg.n_train = 2000;
  cfg.n_val = 400;
  LearnResult res =
      learn_score_from_mix(mix, t, oracle_candidates(mix), cfg, Prng(714));
  double a2 = std::exp(-2.0 * t);
  const auto& est = res.model.clustering.estimates[0];
  REQUIRE(est.mean(0) == Catch::Approx(std::exp(-t) * 3.0).epsilon(1e-12));
  REQUIRE(est.covariance(0, 0) == Catch::Approx(a2 * 2.0 + (1.0 - a2)).epsilon(1e-12));
}
