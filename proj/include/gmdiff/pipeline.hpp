#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmdiff/evaluation.hpp"
#include "gmdiff/io.hpp"
#include "gmdiff/learning.hpp"
#include "gmdiff/mixture.hpp"
#include "gmdiff/sampler.hpp"
#include "gmdiff/schedule.hpp"
#include "gmdiff/spectral.hpp"
#include "gmdiff/util.hpp"

namespace gmdiff {

inline GaussianMixture preset_mixture(const std::string& name) {
  auto vec1 = [](double a) {
    Eigen::VectorXd v(1);
    v << a;
    return v;
  };
  if (name == "symmetric-pair-1d") {
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(1, 1);
    return GaussianMixture::make({vec1(-4.0), vec1(4.0)}, {q, q}, {0.5, 0.5});
  }
  if (name == "two-cluster-2d") {
    Eigen::VectorXd m1(2), m2(2);
    m1 << 3.0, 0.0;
    m2 << -3.0, 0.0;
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(2, 2);
    return GaussianMixture::make({m1, m2}, {q, q}, {0.5, 0.5});
  }
  if (name == "three-cov-3d") {
    Eigen::VectorXd m1(3), m2(3), m3(3);
    m1 << 3.0, 0.0, 0.0;
    m2 << -3.0, 0.0, 0.0;
    m3 << 0.0, 3.0, 0.0;
    Eigen::MatrixXd q1 = 0.5 * Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd q2 = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd q3 = Eigen::MatrixXd::Identity(3, 3);
    q3.diagonal() << 2.0, 1.0, 0.5;
    return GaussianMixture::make({m1, m2, m3}, {q1, q2, q3},
                                 {1.0 / 3, 1.0 / 3, 1.0 / 3});
  }
  throw std::invalid_argument(
      "unknown preset '" + name +
      "' (available: symmetric-pair-1d, two-cluster-2d, three-cov-3d)");
}

struct PipelineConfig {
  std::string preset;
  std::string mixture_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t n_data = 100000;
  double terminal_t = 6.0;
  double delta = 0.005;
  int steps = 64;
  double kappa = 0.0;
  std::size_t n_generate = 20000;
  std::size_t n_eval = 20000;
  std::size_t n_projections = 64;
  double t_check = 0.1;     // forward time of the score-error report
  std::size_t n_check = 50000;
  bool oracle = false;
  RhoMode rho_mode = RhoMode::kFull;
  int threads = 1;
  LearnConfig learn;
  CrudeConfig crude;
};

// Flat config document; every key is top-level. Unknown keys are rejected so
// typos fail loudly; seed has no entropy default.
inline PipelineConfig parse_pipeline_config(const json& j) {
  static const std::vector<std::string> known = {
      "preset", "mixture_path", "seed", "out_dir", "n_data", "terminal_t",
      "delta", "steps", "kappa", "n_generate", "n_eval", "n_projections",
      "t_check", "n_check", "oracle", "rho_mode", "threads", "k", "degree",
      "ridge", "n_train", "n_val", "c1", "c2", "boundary_delta", "alpha",
      "beta", "midpoint_fraction", "grid_range_constant", "threshold_source",
      "tuple_mode", "caps_tuples", "caps_partition_pairs",
      "caps_threshold_assignments", "caps_grid_per_pair", "crude_radius",
      "crude_beta", "mean_step", "cov_step", "max_candidates", "psi_dim_cap"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw std::invalid_argument("config has unknown field: " + key);
  }
  auto require = [&](const char* name) -> const json& {
    if (!j.contains(name))
      throw std::invalid_argument(std::string("config missing field: ") + name);
    return j.at(name);
  };

  PipelineConfig cfg;
  cfg.seed = require("seed").get<std::uint64_t>();
  cfg.preset = j.value("preset", std::string());
  cfg.mixture_path = j.value("mixture_path", std::string());
  if (cfg.preset.empty() && cfg.mixture_path.empty())
    throw std::invalid_argument(
        "config missing field: preset or mixture_path");
  cfg.out_dir = j.value("out_dir", std::string());
  cfg.n_data = j.value("n_data", cfg.n_data);
  cfg.terminal_t = j.value("terminal_t", cfg.terminal_t);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.kappa = j.value("kappa", cfg.kappa);
  cfg.n_generate = j.value("n_generate", cfg.n_generate);
  cfg.n_eval = j.value("n_eval", cfg.n_eval);
  cfg.n_projections = j.value("n_projections", cfg.n_projections);
  cfg.t_check = j.value("t_check", cfg.t_check);
  cfg.n_check = j.value("n_check", cfg.n_check);
  cfg.oracle = j.value("oracle", cfg.oracle);
  cfg.threads = j.value("threads", cfg.threads);
  std::string rho = j.value("rho_mode", std::string("full"));
  if (rho == "full")
    cfg.rho_mode = RhoMode::kFull;
  else if (rho == "half")
    cfg.rho_mode = RhoMode::kHalf;
  else
    throw std::invalid_argument("config rho_mode must be 'full' or 'half'");

  cfg.learn.k = j.value("k", cfg.learn.k);
  cfg.learn.degree = j.value("degree", cfg.learn.degree);
  cfg.learn.ridge = j.value("ridge", cfg.learn.ridge);
  cfg.learn.n_train = j.value("n_train", cfg.learn.n_train);
  cfg.learn.n_val = j.value("n_val", cfg.learn.n_val);
  cfg.learn.c1 = j.value("c1", cfg.learn.c1);
  cfg.learn.c2 = j.value("c2", cfg.learn.c2);
  cfg.learn.boundary_delta = j.value("boundary_delta", cfg.learn.boundary_delta);
  cfg.learn.alpha = j.value("alpha", cfg.learn.alpha);
  cfg.learn.beta = j.value("beta", cfg.learn.beta);
  cfg.learn.midpoint_fraction =
      j.value("midpoint_fraction", cfg.learn.midpoint_fraction);
  cfg.learn.grid_range_constant =
      j.value("grid_range_constant", cfg.learn.grid_range_constant);
  std::string th = j.value("threshold_source", std::string("grid"));
  if (th == "grid")
    cfg.learn.threshold_source = ThresholdSource::kGrid;
  else if (th == "midpoint")
    cfg.learn.threshold_source = ThresholdSource::kTupleMidpoint;
  else
    throw std::invalid_argument(
        "config threshold_source must be 'grid' or 'midpoint'");
  std::string tm = j.value("tuple_mode", std::string("all"));
  if (tm == "all")
    cfg.learn.tuple_mode = TupleMode::kAll;
  else if (tm == "identity")
    cfg.learn.tuple_mode = TupleMode::kIdentity;
  else
    throw std::invalid_argument(
        "config tuple_mode must be 'all' or 'identity'");
  cfg.learn.caps.tuples = j.value("caps_tuples", cfg.learn.caps.tuples);
  cfg.learn.caps.partition_pairs =
      j.value("caps_partition_pairs", cfg.learn.caps.partition_pairs);
  cfg.learn.caps.threshold_assignments = j.value(
      "caps_threshold_assignments", cfg.learn.caps.threshold_assignments);
  cfg.learn.caps.grid_per_pair =
      j.value("caps_grid_per_pair", cfg.learn.caps.grid_per_pair);

  cfg.crude.radius_R = j.value("crude_radius", 5.0);
  cfg.crude.beta = j.value("crude_beta", cfg.learn.beta);
  cfg.crude.mean_step = j.value("mean_step", cfg.crude.mean_step);
  cfg.crude.cov_step = j.value("cov_step", cfg.crude.cov_step);
  cfg.crude.max_candidates = j.value("max_candidates", cfg.crude.max_candidates);
  cfg.crude.psi_dim_cap = j.value("psi_dim_cap", cfg.crude.psi_dim_cap);
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline_config(load_json(path));
}

// The only environment influence: an output-directory override.
inline std::string resolve_out_dir(const std::string& from_config,
                                   const std::string& from_flag) {
  if (!from_flag.empty()) return from_flag;
  if (const char* env = std::getenv("GMDIFF_OUT"); env && *env) return env;
  return from_config;
}

// Learned models indexed by forward time; lookup picks the nearest time.
struct LearnedScoreSet {
  std::vector<PiecewiseScoreModel> models;  // noise_time strictly decreasing

  const PiecewiseScoreModel& at_time(double t) const {
    if (models.empty()) throw std::runtime_error("no learned models");
    std::size_t best = 0;
    double gap = std::abs(models[0].noise_time - t);
    for (std::size_t i = 1; i < models.size(); ++i) {
      double g = std::abs(models[i].noise_time - t);
      if (g < gap) {
        gap = g;
        best = i;
      }
    }
    return models[best];
  }

  ScoreFn fn() const {
    return [this](const Eigen::VectorXd& x, double t) {
      return eval_piecewise_score(at_time(t), x);
    };
  }
};

struct PipelineResult {
  std::vector<std::pair<std::string, std::string>> artifacts;  // name, path
  MCReport score_report;     // learned score vs exact score at t_check
  DiagnosticsReport diag;    // generated vs fresh
  DiagnosticsReport self_diag;  // fresh vs fresh calibration baseline
  TimeSchedule schedule;
};

// sample -> estimate -> learn (per schedule time) -> generate -> evaluate,
// writing every intermediate artifact. Deterministic given config + seed.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult result;
  std::string stage = "config";
  try {
    if (cfg.out_dir.empty())
      throw std::invalid_argument("config missing field: out_dir");
    std::filesystem::create_directories(cfg.out_dir);
    set_thread_count(cfg.threads);
    Prng root(cfg.seed);
    auto path_of = [&](const std::string& name) {
      return cfg.out_dir + "/" + name;
    };
    auto record = [&](const std::string& name, const std::string& path) {
      result.artifacts.push_back({name, path});
    };

    stage = "mixture";
    GaussianMixture mix = cfg.mixture_path.empty()
                              ? preset_mixture(cfg.preset)
                              : load_mixture(cfg.mixture_path);
    ArtifactMeta base_meta;
    base_meta.seed = cfg.seed;
    if (!cfg.mixture_path.empty())
      base_meta.inputs.push_back({"mixture", hash_file(cfg.mixture_path)});
    save_mixture(path_of("mixture.json"), mix, base_meta);
    record("mixture", path_of("mixture.json"));

    stage = "sample";
    SampleSet data = sample_mixture(mix, cfg.n_data, root.split("data"));
    ArtifactMeta data_meta = base_meta;
    data_meta.inputs.push_back(
        {"mixture.json", hash_file(path_of("mixture.json"))});
    write_gmms(path_of("data.gmms"), data.points, data_meta);
    record("data", path_of("data.gmms"));

    stage = "estimate";
    LearnConfig learn = cfg.learn;
    CandidateList candidates;
    if (cfg.oracle) {
      candidates = oracle_candidates(mix);
      learn.k = mix.k();
      learn.tuple_mode = TupleMode::kIdentity;
      learn.threshold_source = ThresholdSource::kTupleMidpoint;
      learn.alpha = mix.conditioning.alpha;
      learn.beta = mix.conditioning.beta;
      learn.lambda_hat = mix.weights;
    } else {
      candidates = crude_estimate(data.points, learn.k, cfg.crude);
    }
    ArtifactMeta cand_meta = base_meta;
    cand_meta.inputs.push_back({"data.gmms", hash_file(path_of("data.gmms"))});
    save_candidates(path_of("candidates.json"), candidates, cand_meta);
    record("candidates", path_of("candidates.json"));

    stage = "schedule";
    result.schedule =
        build_schedule(cfg.terminal_t, cfg.delta, cfg.steps, cfg.kappa);

    stage = "learn";
    if (cfg.n_data < learn.n_train + learn.n_val)
      throw std::invalid_argument(
          "config needs n_data >= n_train + n_val for the learn stage");
    Eigen::MatrixXd train_pts =
        data.points.topRows(static_cast<Eigen::Index>(learn.n_train));
    Eigen::MatrixXd val_pts = data.points.middleRows(
        static_cast<Eigen::Index>(learn.n_train),
        static_cast<Eigen::Index>(learn.n_val));
    LearnedScoreSet learned;
    std::vector<FitReportRow> all_rows;
    std::vector<double> row_times;
    Prng learn_rng = root.split("learn");
    for (int l = 0; l < result.schedule.steps(); ++l) {
      double t_fwd = result.schedule.terminal_T -
                     result.schedule.times[static_cast<std::size_t>(l)];
      Prng step_rng = learn_rng.split(static_cast<std::uint64_t>(l));
      DenoisingBatch train_b = make_denoising_batch_from_points(
          train_pts, t_fwd, step_rng.split("train"));
      DenoisingBatch val_b = make_denoising_batch_from_points(
          val_pts, t_fwd, step_rng.split("val"));
      LearnResult lr = learn_score(train_b, val_b, candidates, learn);
      learned.models.push_back(std::move(lr.model));
      for (const auto& row : lr.report) {
        all_rows.push_back(row);
        row_times.push_back(t_fwd);
      }
    }
    ArtifactMeta model_meta = cand_meta;
    model_meta.inputs.push_back(
        {"candidates.json", hash_file(path_of("candidates.json"))});
    save_models(path_of("models.json"), learned.models, model_meta);
    record("models", path_of("models.json"));
    {
      std::vector<std::vector<std::string>> rows;
      for (std::size_t i = 0; i < all_rows.size(); ++i) {
        const auto& r = all_rows[i];
        rows.push_back({format_double(row_times[i]),
                        std::to_string(r.candidate_id),
                        std::to_string(r.partition_id),
                        std::to_string(r.threshold_id),
                        format_double(r.train_loss),
                        format_double(r.val_loss)});
      }
      write_csv(path_of("fit_report.csv"), model_meta,
                {"t", "candidate_id", "partition_id", "threshold_id",
                 "train_loss", "val_loss"},
                rows);
      record("fit_report", path_of("fit_report.csv"));
    }

    stage = "generate";
    SamplerConfig scfg;
    scfg.schedule = result.schedule;
    scfg.n_samples = cfg.n_generate;
    scfg.rho_mode = cfg.rho_mode;
    Eigen::MatrixXd generated =
        generate_samples(learned.fn(), mix.dim(), scfg, root.split("generate"));
    ArtifactMeta gen_meta = base_meta;
    gen_meta.inputs.push_back(
        {"models.json", hash_file(path_of("models.json"))});
    write_gmms(path_of("generated.gmms"), generated, gen_meta);
    record("generated", path_of("generated.gmms"));

    stage = "evaluate";
    SampleSet fresh = sample_mixture(mix, cfg.n_eval, root.split("fresh"));
    SampleSet fresh2 = sample_mixture(mix, cfg.n_eval, root.split("fresh2"));
    result.diag = distribution_diagnostics(generated, fresh.points,
                                           cfg.n_projections, root.split("proj"));
    result.self_diag = distribution_diagnostics(
        fresh2.points, fresh.points, cfg.n_projections, root.split("proj"));
    const PiecewiseScoreModel& check_model = learned.at_time(cfg.t_check);
    result.score_report = score_l2_error(
        [&](const Eigen::VectorXd& x) {
          return eval_piecewise_score(check_model, x);
        },
        mix, check_model.noise_time, cfg.n_check, root.split("score-check"));
    ArtifactMeta eval_meta = gen_meta;
    eval_meta.inputs.push_back(
        {"generated.gmms", hash_file(path_of("generated.gmms"))});
    std::vector<std::vector<std::string>> rows;
    auto add_row = [&](const std::string& name, double est, double se,
                       std::size_t n) {
      rows.push_back({name, format_double(est), format_double(se),
                      std::to_string(n)});
    };
    add_row("score_l2", result.score_report.estimate,
            result.score_report.std_error, result.score_report.n);
    add_row("score_l2_relative", result.score_report.relative,
            result.score_report.relative_std_error, result.score_report.n);
    add_row("sliced_w1", result.diag.w1.estimate, result.diag.w1.std_error,
            result.diag.w1.n);
    add_row("sliced_w1_self", result.self_diag.w1.estimate,
            result.self_diag.w1.std_error, result.self_diag.w1.n);
    add_row("mean_gap", result.diag.mean_gap, 0.0, 0);
    add_row("cov_gap", result.diag.cov_gap, 0.0, 0);
    write_csv(path_of("eval.csv"), eval_meta,
              {"check", "estimate", "std_error", "n"}, rows);
    record("eval", path_of("eval.csv"));

    std::string summary;
    summary += "pipeline summary\n";
    summary += "  mixture: k=" + std::to_string(mix.k()) +
               " d=" + std::to_string(mix.dim()) + "\n";
    summary += "  schedule: T=" + format_double(cfg.terminal_t) +
               " delta=" + format_double(cfg.delta) +
               " steps=" + std::to_string(cfg.steps) + "\n";
    summary += "  candidates: " + std::to_string(candidates.entries.size()) +
               (cfg.oracle ? " (oracle)" : " (crude)") + "\n";
    summary += "  score_l2 @ t=" + format_double(check_model.noise_time) +
               ": " + format_double(result.score_report.estimate) +
               " (relative " + format_double(result.score_report.relative) +
               ")\n";
    summary += "  sliced_w1: " + format_double(result.diag.w1.estimate) +
               " (self baseline " +
               format_double(result.self_diag.w1.estimate) + ")\n";
    write_text_file(path_of("summary.txt"), summary);
    record("summary", path_of("summary.txt"));
    return result;
  } catch (const std::exception& e) {
    std::string paths;
    for (const auto& [name, path] : result.artifacts) {
      (void)name;
      paths += paths.empty() ? path : (", " + path);
    }
    throw std::runtime_error("pipeline stage '" + stage + "' failed: " +
                             e.what() +
                             (paths.empty() ? std::string()
                                            : "; artifacts so far: " + paths));
  }
}

}  // namespace gmdiff
