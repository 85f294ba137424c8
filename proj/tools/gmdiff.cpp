#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmdiff/clustering.hpp"
#include "gmdiff/evaluation.hpp"
#include "gmdiff/io.hpp"
#include "gmdiff/learning.hpp"
#include "gmdiff/mixture.hpp"
#include "gmdiff/pipeline.hpp"
#include "gmdiff/sampler.hpp"
#include "gmdiff/schedule.hpp"
#include "gmdiff/spectral.hpp"
#include "gmdiff/util.hpp"
#include "gmdiff/version.hpp"

namespace {

using namespace gmdiff;

GaussianMixture mixture_from_spec_json(const json& j) {
  // Custom mixture documents may omit conditioning; the tightest valid
  // bounds are derived. Negative covariance eigenvalues are named here so
  // the error points at the offending number, not just at a failed
  // factorization.
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<double> weights;
  for (const auto& m : j.at("means")) means.push_back(vector_from_json(m));
  for (const auto& c : j.at("covariances")) covs.push_back(matrix_from_json(c));
  for (const auto& w : j.at("weights")) weights.push_back(w.get<double>());
  for (std::size_t i = 0; i < covs.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (covs[i] + covs[i].transpose()));
    double lo = es.eigenvalues().minCoeff();
    if (lo <= 0.0)
      throw std::invalid_argument("component " + std::to_string(i) +
                                  " covariance has eigenvalue " +
                                  format_double(lo) + " <= 0");
  }
  if (j.contains("conditioning")) {
    const auto& cond = j.at("conditioning");
    return GaussianMixture::make_with(means, covs, weights,
                                      cond.at("alpha").get<double>(),
                                      cond.at("beta").get<double>(),
                                      cond.at("radius").get<double>());
  }
  return GaussianMixture::make(means, covs, weights);
}

GaussianMixture mixture_from_flags(const std::string& preset,
                                   const std::string& config_path) {
  if (!preset.empty()) return preset_mixture(preset);
  if (!config_path.empty()) return mixture_from_spec_json(load_json(config_path));
  throw std::invalid_argument("need --preset or --config with mixture parameters");
}

std::string join_dir(const std::string& dir, const std::string& name) {
  return dir + "/" + name;
}

int cmd_gen_mixture(const std::string& preset, const std::string& config_path,
                    const std::string& out_dir, std::uint64_t seed) {
  GaussianMixture mix = mixture_from_flags(preset, config_path);
  ArtifactMeta meta;
  meta.seed = seed;
  if (!config_path.empty())
    meta.inputs.push_back({"config", hash_file(config_path)});
  std::string path = join_dir(out_dir, "mixture.json");
  save_mixture(path, mix, meta);
  const auto& c = mix.conditioning;
  std::printf("wrote %s\n", path.c_str());
  std::printf("k=%d d=%d alpha=%g beta=%g R=%g tau=%g lambda_min=%g\n",
              mix.k(), mix.dim(), c.alpha, c.beta, c.radius, c.tau,
              c.lambda_min);
  return 0;
}

int cmd_sample_data(const std::string& mixture_path, std::size_t n,
                    std::uint64_t seed, const std::string& out_dir, double t,
                    const std::string& format) {
  GaussianMixture mix = load_mixture(mixture_path);
  if (t > 0.0) mix = noised_mixture(mix, t);
  SampleSet s = sample_mixture(mix, n, Prng(seed));
  ArtifactMeta meta;
  meta.seed = seed;
  meta.inputs.push_back({"mixture", hash_file(mixture_path)});
  if (format == "gmms") {
    std::string path = join_dir(out_dir, "samples.gmms");
    write_gmms(path, s.points, meta);
    std::printf("wrote %zu x %d samples to %s\n", n, mix.dim(), path.c_str());
  } else if (format == "csv") {
    std::vector<std::string> cols;
    for (int j = 0; j < mix.dim(); ++j) cols.push_back("x" + std::to_string(j));
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
      std::vector<std::string> row;
      for (Eigen::Index j = 0; j < s.points.cols(); ++j)
        row.push_back(format_double(s.points(i, j)));
      rows.push_back(std::move(row));
    }
    std::string path = join_dir(out_dir, "samples.csv");
    write_csv(path, meta, cols, rows);
    std::printf("wrote %zu x %d samples to %s\n", n, mix.dim(), path.c_str());
  } else {
    throw std::invalid_argument("format must be gmms or csv");
  }
  return 0;
}

int cmd_estimate(const std::string& data_path, int k, std::uint64_t seed,
                 const std::string& out_dir, const CrudeConfig& crude) {
  Eigen::MatrixXd points = read_gmms(data_path);
  CandidateList cands = crude_estimate(points, k, crude);
  ArtifactMeta meta;
  meta.seed = seed;
  meta.inputs.push_back({"data", hash_file(data_path)});
  std::string path = join_dir(out_dir, "candidates.json");
  save_candidates(path, cands, meta);
  std::printf("wrote %zu candidate parameter pairs to %s\n",
              cands.entries.size(), path.c_str());
  return 0;
}

int cmd_cluster_test(const std::string& mixture_path, std::size_t n,
                     std::uint64_t seed, const std::string& out_dir,
                     double fraction) {
  GaussianMixture mix = load_mixture(mixture_path);
  int k = mix.k();
  SampleSet s = sample_mixture(mix, n, Prng(seed));
  std::vector<ParameterEstimate> est;
  for (int i = 0; i < k; ++i)
    est.push_back(make_estimate(mix.components[static_cast<std::size_t>(i)].mean,
                                mix.components[static_cast<std::size_t>(i)].covariance,
                                mix.conditioning.alpha,
                                mix.weights[static_cast<std::size_t>(i)]));
  Eigen::MatrixXd thresholds = oracle_thresholds(mix, fraction);

  auto pairs = enumerate_partition_pairs(k);
  std::vector<std::vector<std::string>> rows;
  auto part_str = [](const Partition& p) {
    std::string s;
    for (const auto& block : p) {
      s += s.empty() ? "" : "|";
      for (std::size_t i = 0; i < block.size(); ++i)
        s += (i ? "." : "") + std::to_string(block[i]);
    }
    return s;
  };
  double best_acc = -1.0;
  std::size_t best_row = 0;
  for (std::size_t pid = 0; pid < pairs.size(); ++pid) {
    const PartitionPair& pair = pairs[pid];
    double eta = clustering_eta(est, pair.cov_partition, mix.conditioning.beta);
    ClusteringFunction cf = make_clustering(pair, est, thresholds, eta);
    std::vector<int> mean_group(static_cast<std::size_t>(k)), cov_group(static_cast<std::size_t>(k));
    for (std::size_t a = 0; a < pair.mean_partition.size(); ++a)
      for (int i : pair.mean_partition[a]) mean_group[static_cast<std::size_t>(i)] = static_cast<int>(a);
    for (std::size_t b = 0; b < pair.cov_partition.size(); ++b)
      for (int i : pair.cov_partition[b]) cov_group[static_cast<std::size_t>(i)] = static_cast<int>(b) + 1;
    std::size_t mean_ok = 0, cov_ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd x = s.points.row(static_cast<Eigen::Index>(i)).transpose();
      int label = s.labels[i];
      MeanAssignment ma = cluster_mean(x, cf);
      if (ma.group == mean_group[static_cast<std::size_t>(label)]) ++mean_ok;
      if (cluster_cov_recentered(ma.recentered, cf) ==
          cov_group[static_cast<std::size_t>(label)])
        ++cov_ok;
    }
    double macc = static_cast<double>(mean_ok) / static_cast<double>(n);
    double cacc = static_cast<double>(cov_ok) / static_cast<double>(n);
    rows.push_back({std::to_string(pid), part_str(pair.mean_partition),
                    part_str(pair.cov_partition), format_double(eta),
                    format_double(macc), format_double(cacc)});
    if (macc + cacc > best_acc) {
      best_acc = macc + cacc;
      best_row = pid;
    }
  }
  ArtifactMeta meta;
  meta.seed = seed;
  meta.inputs.push_back({"mixture", hash_file(mixture_path)});
  std::string path = join_dir(out_dir, "cluster_report.csv");
  write_csv(path, meta,
            {"pair_id", "mean_partition", "cov_partition", "eta",
             "mean_group_accuracy", "cov_group_accuracy"},
            rows);
  std::printf("wrote %zu partition-pair rows to %s\n", rows.size(), path.c_str());
  std::printf("best pair %s: mean_acc=%s cov_acc=%s\n",
              rows[best_row][0].c_str(), rows[best_row][4].c_str(),
              rows[best_row][5].c_str());
  return 0;
}

int cmd_learn(const std::string& mixture_path, double t, std::uint64_t seed,
              const std::string& out_dir, bool oracle,
              const std::string& candidates_path, LearnConfig learn) {
  GaussianMixture mix = load_mixture(mixture_path);
  CandidateList candidates;
  if (oracle) {
    candidates = oracle_candidates(mix);
    learn.k = mix.k();
    learn.tuple_mode = TupleMode::kIdentity;
    learn.threshold_source = ThresholdSource::kTupleMidpoint;
    learn.alpha = mix.conditioning.alpha;
    learn.beta = mix.conditioning.beta;
    learn.lambda_hat = mix.weights;
  } else {
    if (candidates_path.empty())
      throw std::invalid_argument("learn needs --candidates or --oracle");
    candidates = load_candidates(candidates_path);
  }
  LearnResult lr = learn_score_from_mix(mix, t, candidates, learn, Prng(seed));
  ArtifactMeta meta;
  meta.seed = seed;
  meta.inputs.push_back({"mixture", hash_file(mixture_path)});
  if (!candidates_path.empty())
    meta.inputs.push_back({"candidates", hash_file(candidates_path)});
  std::string model_path = join_dir(out_dir, "model.json");
  save_models(model_path, {lr.model}, meta);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : lr.report)
    rows.push_back({std::to_string(r.candidate_id),
                    std::to_string(r.partition_id),
                    std::to_string(r.threshold_id),
                    format_double(r.train_loss), format_double(r.val_loss)});
  std::string report_path = join_dir(out_dir, "fit_report.csv");
  write_csv(report_path, meta,
            {"candidate_id", "partition_id", "threshold_id", "train_loss",
             "val_loss"},
            rows);
  std::printf("wrote %s and %s\n", model_path.c_str(), report_path.c_str());
  std::printf("combinations=%zu chosen=%zu validation_loss=%s\n",
              lr.report.size(), lr.chosen_row,
              format_double(lr.validation_loss).c_str());
  return 0;
}

int cmd_generate(const std::string& models_path, const std::string& mixture_path,
                 bool oracle, std::size_t n, std::uint64_t seed,
                 const std::string& out_dir, double terminal_t, double delta,
                 int steps, double kappa, const std::string& rho) {
  SamplerConfig cfg;
  cfg.schedule = build_schedule(terminal_t, delta, steps, kappa);
  cfg.n_samples = n;
  if (rho == "full")
    cfg.rho_mode = RhoMode::kFull;
  else if (rho == "half")
    cfg.rho_mode = RhoMode::kHalf;
  else
    throw std::invalid_argument("--rho must be full or half");

  ArtifactMeta meta;
  meta.seed = seed;
  Eigen::MatrixXd out;
  if (oracle) {
    if (mixture_path.empty())
      throw std::invalid_argument("oracle generation needs --mixture");
    GaussianMixture mix = load_mixture(mixture_path);
    meta.inputs.push_back({"mixture", hash_file(mixture_path)});
    OracleScore oracle_score(mix);
    std::vector<double> times;
    for (int l = 0; l < cfg.schedule.steps(); ++l)
      times.push_back(terminal_t -
                      cfg.schedule.times[static_cast<std::size_t>(l)]);
    oracle_score.precompute(times);
    out = generate_samples(oracle_score.fn(), mix.dim(), cfg, Prng(seed));
  } else {
    if (models_path.empty())
      throw std::invalid_argument("generation needs --models or --oracle");
    LearnedScoreSet learned;
    learned.models = load_models(models_path);
    meta.inputs.push_back({"models", hash_file(models_path)});
    int d = learned.models.front().dim();
    out = generate_samples(learned.fn(), d, cfg, Prng(seed));
  }
  std::string path = join_dir(out_dir, "generated.gmms");
  write_gmms(path, out, meta);
  std::printf("wrote %zu x %d samples to %s\n", n,
              static_cast<int>(out.cols()), path.c_str());
  return 0;
}

const char* kChecks =
    "fourth-moment, correlation, hanson-wright, kl, w1, score-error";

int cmd_eval(const std::string& check, const std::string& mixture_path,
             const std::string& samples_a, const std::string& samples_b,
             const std::string& models_path, double t, std::size_t n,
             std::size_t projections, double rel_bound, std::uint64_t seed,
             const std::string& out_dir) {
  Prng rng(seed);
  ArtifactMeta meta;
  meta.seed = seed;
  std::vector<std::vector<std::string>> rows;
  auto emit = [&](const std::string& name, const MCReport& r) {
    rows.push_back({name, format_double(r.estimate), format_double(r.std_error),
                    std::to_string(r.n),
                    std::isnan(r.bound) ? "" : format_double(r.bound),
                    r.pass ? "1" : "0", r.criterion});
    std::string bound_str =
        std::isnan(r.bound) ? "" : (" bound=" + format_double(r.bound));
    std::printf("%s %s estimate=%s std_error=%s%s\n",
                r.pass ? "PASS" : "FAIL", name.c_str(),
                format_double(r.estimate).c_str(),
                format_double(r.std_error).c_str(), bound_str.c_str());
  };
  bool all_pass = true;

  auto need_mixture = [&]() {
    if (mixture_path.empty())
      throw std::invalid_argument("check '" + check + "' needs --mixture");
    meta.inputs.push_back({"mixture", hash_file(mixture_path)});
    return load_mixture(mixture_path);
  };

  if (check == "fourth-moment") {
    GaussianMixture mix = need_mixture();
    const auto& comp = mix.components[0];
    int d = mix.dim();
    Eigen::MatrixXd a(d, d);
    Prng arng = rng.split("matrix");
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = arng.normal();
    a = 0.5 * (a + a.transpose()).eval();
    MCReport r = fourth_moment_check(a, comp.mean, comp.covariance, n,
                                     rng.split("mc"));
    emit("fourth-moment", r);
    all_pass = r.pass;
  } else if (check == "correlation") {
    GaussianMixture mix = need_mixture();
    if (mix.k() < 2)
      throw std::invalid_argument("correlation check needs k >= 2");
    MCReport r = correlation_bound_check(mix.components[0], mix.components[1],
                                         n, rng.split("mc"), mix.dim() == 1);
    emit("correlation", r);
    all_pass = r.pass;
  } else if (check == "hanson-wright") {
    GaussianMixture mix = need_mixture();
    int d = mix.dim();
    Eigen::MatrixXd a =
        Eigen::MatrixXd::Identity(d, d) / std::sqrt(static_cast<double>(d));
    std::vector<double> s_values{1.0, 2.0, 3.0, 4.0, 5.0};
    auto reports = hanson_wright_tail_check(a, s_values, n, rng.split("mc"));
    for (std::size_t i = 0; i < reports.size(); ++i) {
      emit("hanson-wright-s" + format_double(s_values[i]), reports[i]);
      all_pass = all_pass && reports[i].pass;
    }
  } else if (check == "kl") {
    GaussianMixture mix = need_mixture();
    if (mix.k() < 2) throw std::invalid_argument("kl check needs k >= 2");
    MCReport r;
    r.estimate = kl_gaussian(mix.components[0], mix.components[1]);
    r.criterion = "exact KL(N1 || N2)";
    emit("kl", r);
  } else if (check == "w1") {
    if (samples_a.empty() || samples_b.empty())
      throw std::invalid_argument("w1 check needs --samples-a and --samples-b");
    Eigen::MatrixXd a = read_gmms(samples_a);
    Eigen::MatrixXd b = read_gmms(samples_b);
    meta.inputs.push_back({"samples_a", hash_file(samples_a)});
    meta.inputs.push_back({"samples_b", hash_file(samples_b)});
    DiagnosticsReport d =
        distribution_diagnostics(a, b, projections, rng.split("proj"));
    emit("sliced-w1", d.w1);
    MCReport mg;
    mg.estimate = d.mean_gap;
    mg.criterion = "|mean_a - mean_b|";
    emit("mean-gap", mg);
    MCReport cg;
    cg.estimate = d.cov_gap;
    cg.criterion = "|cov_a - cov_b|_F";
    emit("cov-gap", cg);
  } else if (check == "score-error") {
    GaussianMixture mix = need_mixture();
    if (models_path.empty())
      throw std::invalid_argument("score-error check needs --models");
    meta.inputs.push_back({"models", hash_file(models_path)});
    LearnedScoreSet learned;
    learned.models = load_models(models_path);
    const PiecewiseScoreModel& model = learned.at_time(t);
    MCReport r = score_l2_error(
        [&](const Eigen::VectorXd& x) {
          return eval_piecewise_score(model, x);
        },
        mix, model.noise_time, n, rng.split("mc"));
    if (rel_bound > 0.0) {
      r.bound = rel_bound;
      r.pass = r.relative <= rel_bound;
      r.criterion = "relative score error <= bound";
    }
    emit("score-error", r);
    std::printf("relative=%s relative_std_error=%s (t=%s)\n",
                format_double(r.relative).c_str(),
                format_double(r.relative_std_error).c_str(),
                format_double(model.noise_time).c_str());
    all_pass = r.pass;
  } else {
    std::fprintf(stderr, "unknown check '%s'; available checks: %s\n",
                 check.c_str(), kChecks);
    return 2;
  }

  std::string path = join_dir(out_dir, "report.csv");
  write_csv(path, meta,
            {"check", "estimate", "std_error", "n", "bound", "pass",
             "criterion"},
            rows);
  std::printf("wrote %s\n", path.c_str());
  return all_pass ? 0 : 1;
}

int cmd_pipeline(const std::string& config_path, bool seed_set,
                 std::uint64_t seed, const std::string& out_flag, bool oracle,
                 bool threads_set, int threads) {
  PipelineConfig cfg = load_pipeline_config(config_path);
  if (seed_set) cfg.seed = seed;
  cfg.out_dir = resolve_out_dir(cfg.out_dir, out_flag);
  if (oracle) cfg.oracle = true;
  if (threads_set) cfg.threads = threads;
  PipelineResult res = run_pipeline(cfg);
  for (const auto& [name, path] : res.artifacts)
    std::printf("artifact %s: %s\n", name.c_str(), path.c_str());
  std::printf(
      "score_l2=%s relative=%s sliced_w1=%s (self baseline %s)\n",
      format_double(res.score_report.estimate).c_str(),
      format_double(res.score_report.relative).c_str(),
      format_double(res.diag.w1.estimate).c_str(),
      format_double(res.self_diag.w1.estimate).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gmdiff: learning well-conditioned Gaussian mixtures by diffusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gmdiff::kToolName) + " " +
                                        gmdiff::kVersion);

  std::string preset, config_path, out_dir = ".", mixture_path, data_path,
              candidates_path, models_path, samples_a, samples_b,
              format = "gmms", rho = "full", check, tuple_mode = "all",
              thresholds = "grid";
  std::uint64_t seed = 0;
  bool oracle = false;
  int threads = 1;
  std::size_t n = 10000, projections = 64;
  double t = 0.0, fraction = 0.5, terminal_t = 6.0, delta = 0.005,
         kappa = 0.0, rel_bound = 0.0;
  int k = 1, steps = 64;
  gmdiff::CrudeConfig crude;
  gmdiff::LearnConfig learn;

  struct CommonOpts {
    CLI::Option* seed_opt;
    CLI::Option* out_opt;
    CLI::Option* threads_opt;
  };
  auto add_common = [&](CLI::App* sub, bool need_seed) {
    CommonOpts opts;
    opts.out_opt = sub->add_option("--out", out_dir, "output directory");
    opts.threads_opt =
        sub->add_option("--threads", threads, "worker thread count");
    opts.seed_opt = sub->add_option("--seed", seed, "root seed (u64)");
    if (need_seed) opts.seed_opt->required();
    return opts;
  };

  auto* gen = app.add_subcommand("gen-mixture", "write a validated mixture file");
  gen->add_option("--preset", preset,
                  "symmetric-pair-1d | two-cluster-2d | three-cov-3d");
  gen->add_option("--config", config_path, "custom mixture parameter file");
  add_common(gen, false);

  auto* sample = app.add_subcommand("sample-data", "draw samples from a mixture");
  sample->add_option("--mixture", mixture_path, "mixture file")->required();
  sample->add_option("--n", n, "sample count");
  sample->add_option("--t", t, "forward noising time (0: clean data)");
  sample->add_option("--format", format, "gmms | csv");
  add_common(sample, true);

  auto* est = app.add_subcommand("estimate", "crude spectral parameter candidates");
  est->add_option("--data", data_path, "GMMS sample file")->required();
  est->add_option("--k", k, "component count")->required();
  est->add_option("--radius", crude.radius_R, "parameter radius bound");
  est->add_option("--beta", crude.beta, "covariance eigenvalue upper bound");
  est->add_option("--mean-step", crude.mean_step, "mean net step (<=0: auto)");
  est->add_option("--cov-step", crude.cov_step, "covariance net step (<=0: auto)");
  est->add_option("--max-candidates", crude.max_candidates, "candidate cap");
  est->add_option("--psi-dim-cap", crude.psi_dim_cap,
                  "flattened fourth-moment dimension cap");
  add_common(est, true);

  auto* cluster = app.add_subcommand(
      "cluster-test", "oracle-threshold clustering accuracy per partition pair");
  cluster->add_option("--mixture", mixture_path, "mixture file")->required();
  cluster->add_option("--n", n, "labeled sample count");
  cluster->add_option("--fraction", fraction, "threshold midpoint fraction");
  add_common(cluster, true);

  auto* lrn = app.add_subcommand("learn", "fit a piecewise polynomial score model");
  lrn->add_option("--mixture", mixture_path, "mixture file (data source)")
      ->required();
  lrn->add_option("--t", t, "forward noising time")->required();
  lrn->add_option("--candidates", candidates_path, "candidate list file");
  lrn->add_flag("--oracle", oracle, "inject true parameters as candidates");
  lrn->add_option("--k", learn.k, "component count");
  lrn->add_option("--degree", learn.degree, "polynomial degree");
  lrn->add_option("--ridge", learn.ridge, "trace-scaled ridge");
  lrn->add_option("--n-train", learn.n_train, "training rows");
  lrn->add_option("--n-val", learn.n_val, "validation rows");
  lrn->add_option("--alpha", learn.alpha, "eigenvalue lower bound");
  lrn->add_option("--beta", learn.beta, "eigenvalue upper bound");
  lrn->add_option("--caps-tuples", learn.caps.tuples,
                  "candidate tuple enumeration cap");
  lrn->add_option("--tuple-mode", tuple_mode,
                  "all | identity candidate tuple enumeration");
  lrn->add_option("--thresholds", thresholds,
                  "grid | midpoint boundary threshold source");
  add_common(lrn, true);

  auto* genr = app.add_subcommand("generate", "reverse-process sampling");
  genr->add_option("--models", models_path, "learned model file");
  genr->add_option("--mixture", mixture_path, "mixture file (oracle scores)");
  genr->add_flag("--oracle", oracle, "use exact scores from --mixture");
  genr->add_option("--n", n, "sample count");
  genr->add_option("--terminal-t", terminal_t, "forward horizon T");
  genr->add_option("--delta", delta, "early-stopping time");
  genr->add_option("--steps", steps, "discretization steps (even)");
  genr->add_option("--kappa", kappa, "step-size bound (0: auto)");
  genr->add_option("--rho", rho, "full | half exponential-integrator factor");
  add_common(genr, true);

  auto* ev = app.add_subcommand("eval", "run an evaluation check");
  ev->add_option("--check", check, kChecks)->required();
  ev->add_option("--mixture", mixture_path, "mixture file");
  ev->add_option("--samples-a", samples_a, "GMMS file");
  ev->add_option("--samples-b", samples_b, "GMMS file");
  ev->add_option("--models", models_path, "learned model file");
  ev->add_option("--t", t, "forward time for score-error");
  ev->add_option("--n", n, "MC sample count");
  ev->add_option("--projections", projections, "sliced-W1 projections");
  ev->add_option("--rel-bound", rel_bound,
                 "pass bound on relative score error (0: diagnostic only)");
  add_common(ev, true);

  auto* pipe = app.add_subcommand("pipeline", "run the full learning pipeline");
  pipe->add_option("--config", config_path, "flat experiment config")->required();
  pipe->add_flag("--oracle", oracle, "force oracle-mode candidates");
  CommonOpts pipe_opts = add_common(pipe, false);

  CLI11_PARSE(app, argc, argv);

  try {
    gmdiff::set_thread_count(threads);
    if (gen->parsed())
      return cmd_gen_mixture(preset, config_path, out_dir, seed);
    if (sample->parsed())
      return cmd_sample_data(mixture_path, n, seed, out_dir, t, format);
    if (est->parsed())
      return cmd_estimate(data_path, k, seed, out_dir, crude);
    if (cluster->parsed())
      return cmd_cluster_test(mixture_path, n, seed, out_dir, fraction);
    if (lrn->parsed()) {
      if (tuple_mode == "identity")
        learn.tuple_mode = gmdiff::TupleMode::kIdentity;
      else if (tuple_mode != "all")
        throw std::invalid_argument("--tuple-mode must be 'all' or 'identity'");
      if (thresholds == "midpoint")
        learn.threshold_source = gmdiff::ThresholdSource::kTupleMidpoint;
      else if (thresholds != "grid")
        throw std::invalid_argument("--thresholds must be 'grid' or 'midpoint'");
      return cmd_learn(mixture_path, t, seed, out_dir, oracle,
                       candidates_path, learn);
    }
    if (genr->parsed())
      return cmd_generate(models_path, mixture_path, oracle, n, seed, out_dir,
                          terminal_t, delta, steps, kappa, rho);
    if (ev->parsed())
      return cmd_eval(check, mixture_path, samples_a, samples_b, models_path,
                      t, n, projections, rel_bound, seed, out_dir);
    if (pipe->parsed())
      return cmd_pipeline(config_path, pipe_opts.seed_opt->count() > 0, seed,
                          pipe_opts.out_opt->count() > 0 ? out_dir : "",
                          oracle, pipe_opts.threads_opt->count() > 0, threads);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
