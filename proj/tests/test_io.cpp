#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <unistd.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>

#include "gmdiff/io.hpp"
#include "gmdiff/learning.hpp"
#include "gmdiff/mixture.hpp"
#include "gmdiff/prng.hpp"

using namespace gmdiff;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() /
           ("gmdiff_io_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p;
}

GaussianMixture small_mixture() {
  Eigen::VectorXd m1(2), m2(2);
  m1 << 1.0 / 3.0, -0.25;
  m2 << -1.5, 0.1;
  Eigen::MatrixXd q1(2, 2), q2(2, 2);
  q1 << 1.1, 0.2, 0.2, 0.9;
  q2 << 0.8, -0.1, -0.1, 1.3;
  return GaussianMixture::make({m1, m2}, {q1, q2}, {0.4, 0.6});
}

}  // namespace

TEST_CASE("format_double round-trips exactly", "[io]") {
  for (double v : {0.1, -0.0, 1.0 / 3.0, 3.141592653589793, 1e308,
                   5e-324, -2.2250738585072014e-308, 42.0}) {
    std::string s = format_double(v);
    double back = std::strtod(s.c_str(), nullptr);
    REQUIRE(std::bit_cast<std::uint64_t>(back) ==
            std::bit_cast<std::uint64_t>(v));
  }
  REQUIRE(format_double(-0.0) == "-0");
  REQUIRE(format_double(42.0) == "42");
}

TEST_CASE("the content hash pins the FNV-1a reference value", "[io]") {
  REQUIRE(hash_hex("abc") == "e71fa2190541574b");
  REQUIRE(hash_hex("") != hash_hex("abc"));
  auto dir = temp_dir("hash");
  write_text_file((dir / "a.txt").string(), "abc");
  REQUIRE(hash_file((dir / "a.txt").string()) == "e71fa2190541574b");
  REQUIRE_THROWS_WITH(read_file_bytes((dir / "missing").string()),
                      Catch::Matchers::ContainsSubstring("cannot open"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("GMMS files carry doubles bit-exactly", "[io]") {
  auto dir = temp_dir("gmms");
  std::string path = (dir / "pts.gmms").string();

  Eigen::MatrixXd rows(3, 2);
  rows << -0.0, 5e-324,                           // signed zero, denormal
      1.7976931348623157e308, -1.0 / 3.0,         // extremes
      std::numeric_limits<double>::quiet_NaN(), 2.5;
  ArtifactMeta meta;
  meta.seed = 7;
  write_gmms(path, rows, meta);

  Eigen::MatrixXd back = read_gmms(path);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 2);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      REQUIRE(std::bit_cast<std::uint64_t>(back(i, j)) ==
              std::bit_cast<std::uint64_t>(rows(i, j)));

  // header prefix: magic, u32 dim, u64 count, little-endian
  std::string bytes = read_file_bytes(path);
  REQUIRE(bytes.size() == 16 + 3 * 2 * 8);
  REQUIRE(bytes.compare(0, 4, "GMMS") == 0);
  REQUIRE(static_cast<unsigned char>(bytes[4]) == 2);
  REQUIRE(static_cast<unsigned char>(bytes[8]) == 3);

  // the sidecar carries the artifact header
  json side = load_json(path + ".meta.json");
  REQUIRE(side.at("seed").get<std::uint64_t>() == 7);
  REQUIRE(side.at("tool").get<std::string>() == kToolName);

  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt GMMS files are rejected with a reason", "[io]") {
  auto dir = temp_dir("gmms_bad");
  std::string good = (dir / "good.gmms").string();
  write_gmms(good, Eigen::MatrixXd::Zero(2, 2), ArtifactMeta{});
  std::string bytes = read_file_bytes(good);

  write_text_file((dir / "trunc.gmms").string(),
                  bytes.substr(0, bytes.size() - 3));
  REQUIRE_THROWS_WITH(read_gmms((dir / "trunc.gmms").string()),
                      Catch::Matchers::ContainsSubstring("truncated payload"));

  std::string wrong = bytes;
  wrong[0] = 'X';
  write_text_file((dir / "wrong.gmms").string(), wrong);
  REQUIRE_THROWS_WITH(read_gmms((dir / "wrong.gmms").string()),
                      Catch::Matchers::ContainsSubstring("is not a GMMS file"));

  write_text_file((dir / "short.gmms").string(), "GMMS");
  REQUIRE_THROWS_WITH(read_gmms((dir / "short.gmms").string()),
                      Catch::Matchers::ContainsSubstring("is not a GMMS file"));

  std::filesystem::remove_all(dir);
}

TEST_CASE("mixture files round-trip byte-identically", "[io]") {
  auto dir = temp_dir("mix");
  GaussianMixture mix = small_mixture();
  ArtifactMeta meta;
  meta.seed = 99;
  meta.inputs = {{"config", "0123456789abcdef"}};

  std::string p1 = (dir / "mix1.json").string();
  std::string p2 = (dir / "mix2.json").string();
  save_mixture(p1, mix, meta);
  GaussianMixture loaded = load_mixture(p1);
  save_mixture(p2, loaded, meta);
  REQUIRE(read_file_bytes(p1) == read_file_bytes(p2));

  REQUIRE(loaded.k() == 2);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(loaded.components[static_cast<std::size_t>(i)].mean ==
            mix.components[static_cast<std::size_t>(i)].mean);
    REQUIRE(loaded.components[static_cast<std::size_t>(i)].covariance ==
            mix.components[static_cast<std::size_t>(i)].covariance);
    REQUIRE(loaded.weights[static_cast<std::size_t>(i)] ==
            mix.weights[static_cast<std::size_t>(i)]);
  }
  REQUIRE(loaded.conditioning.alpha == mix.conditioning.alpha);
  REQUIRE(loaded.conditioning.beta == mix.conditioning.beta);
  REQUIRE(loaded.conditioning.radius == mix.conditioning.radius);

  std::filesystem::remove_all(dir);
}

TEST_CASE("candidate lists round-trip with provenance", "[io]") {
  auto dir = temp_dir("cand");
  CandidateList list;
  Candidate full;
  full.mean = Eigen::VectorXd::Constant(2, 0.7);
  full.covariance = Eigen::MatrixXd::Identity(2, 2) * (1.0 / 3.0);
  full.provenance = "lattice";
  Candidate mean_only;
  mean_only.mean = Eigen::VectorXd::Constant(2, -1.5);
  mean_only.provenance = "net";
  list.entries = {full, mean_only};

  std::string p1 = (dir / "c1.json").string();
  std::string p2 = (dir / "c2.json").string();
  save_candidates(p1, list, ArtifactMeta{});
  CandidateList back = load_candidates(p1);
  save_candidates(p2, back, ArtifactMeta{});
  REQUIRE(read_file_bytes(p1) == read_file_bytes(p2));

  REQUIRE(back.entries.size() == 2);
  REQUIRE(back.entries[0].mean == full.mean);
  REQUIRE(back.entries[0].covariance == full.covariance);
  REQUIRE(back.entries[0].provenance == "lattice");
  REQUIRE(back.entries[1].covariance.size() == 0);
  REQUIRE(back.entries[1].provenance == "net");

  std::filesystem::remove_all(dir);
}

TEST_CASE("score models survive persistence without drift", "[io]") {
  Eigen::VectorXd mu(1);
  mu << 0.8;
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(1, 1, 1.3);
  GaussianMixture mix = GaussianMixture::make({mu}, {q}, {1.0});

  LearnConfig cfg;
  cfg.k = 1;
  cfg.degree = 2;
  cfg.n_train = 2000;
  cfg.n_val = 400;
  LearnResult res =
      learn_score_from_mix(mix, 0.5, oracle_candidates(mix), cfg, Prng(901));

  auto dir = temp_dir("model");
  std::string p1 = (dir / "m1.json").string();
  std::string p2 = (dir / "m2.json").string();
  save_models(p1, {res.model}, ArtifactMeta{});
  std::vector<PiecewiseScoreModel> loaded = load_models(p1);
  REQUIRE(loaded.size() == 1);
  save_models(p2, loaded, ArtifactMeta{});
  REQUIRE(read_file_bytes(p1) == read_file_bytes(p2));

  // evaluations agree bit-for-bit, so sampling from a reloaded model cannot
  // diverge from the in-memory one
  Prng rng(902);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd x(1);
    x << 4.0 * rng.normal();
    Eigen::VectorXd a = eval_piecewise_score(res.model, x);
    Eigen::VectorXd b = eval_piecewise_score(loaded[0], x);
    REQUIRE(std::bit_cast<std::uint64_t>(a(0)) ==
            std::bit_cast<std::uint64_t>(b(0)));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv artifacts start with the provenance header", "[io]") {
  auto dir = temp_dir("csv");
  std::string path = (dir / "table.csv").string();
  ArtifactMeta meta;
  meta.seed = 5;
  meta.inputs = {{"data", "00ff00ff00ff00ff"}};
  write_csv(path, meta, {"metric", "value"}, {{"w1", "0.03"}, {"kl", "0.5"}});

  std::string body = read_file_bytes(path);
  REQUIRE(body.find("# tool: ") == 0);
  REQUIRE(body.find("# seed: 5\n") != std::string::npos);
  REQUIRE(body.find("# input data: 00ff00ff00ff00ff\n") != std::string::npos);
  REQUIRE(body.find("metric,value\nw1,0.03\nkl,0.5\n") != std::string::npos);

  REQUIRE_THROWS_AS(write_csv(path, meta, {"a", "b"}, {{"only-one"}}),
                    std::invalid_argument);
  std::filesystem::remove_all(dir);
}
