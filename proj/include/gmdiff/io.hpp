#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmdiff/clustering.hpp"
#include "gmdiff/mixture.hpp"
#include "gmdiff/prng.hpp"
#include "gmdiff/score_model.hpp"
#include "gmdiff/spectral.hpp"
#include "gmdiff/version.hpp"

namespace gmdiff {

using json = nlohmann::json;

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct ArtifactMeta {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // name, hash
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string hash_hex(const std::string& bytes) {
  std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf, 16);
}

inline std::string hash_file(const std::string& path) {
  return hash_hex(read_file_bytes(path));
}

inline json meta_to_json(const ArtifactMeta& meta) {
  json j;
  j["tool"] = kToolName;
  j["version"] = kVersion;
  j["seed"] = meta.seed;
  json inputs = json::object();
  for (const auto& [name, hash] : meta.inputs) inputs[name] = hash;
  j["inputs"] = inputs;
  return j;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline void save_json(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline json load_json(const std::string& path) {
  return json::parse(read_file_bytes(path));
}

// ---- Eigen <-> json -------------------------------------------------------

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::runtime_error("ragged matrix in file");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j].get<double>();
  }
  return m;
}

// ---- mixture files --------------------------------------------------------

inline json mixture_to_json(const GaussianMixture& mix) {
  json j;
  j["weights"] = json::array();
  j["means"] = json::array();
  j["covariances"] = json::array();
  for (int i = 0; i < mix.k(); ++i) {
    j["weights"].push_back(mix.weights[static_cast<std::size_t>(i)]);
    j["means"].push_back(
        vector_to_json(mix.components[static_cast<std::size_t>(i)].mean));
    j["covariances"].push_back(
        matrix_to_json(mix.components[static_cast<std::size_t>(i)].covariance));
  }
  j["conditioning"] = {{"alpha", mix.conditioning.alpha},
                       {"beta", mix.conditioning.beta},
                       {"radius", mix.conditioning.radius}};
  return j;
}

inline GaussianMixture mixture_from_json(const json& j) {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<double> weights;
  for (const auto& m : j.at("means")) means.push_back(vector_from_json(m));
  for (const auto& c : j.at("covariances")) covs.push_back(matrix_from_json(c));
  for (const auto& w : j.at("weights")) weights.push_back(w.get<double>());
  const auto& cond = j.at("conditioning");
  return GaussianMixture::make_with(means, covs, weights,
                                    cond.at("alpha").get<double>(),
                                    cond.at("beta").get<double>(),
                                    cond.at("radius").get<double>());
}

inline void save_mixture(const std::string& path, const GaussianMixture& mix,
                         const ArtifactMeta& meta) {
  json j = mixture_to_json(mix);
  j["meta"] = meta_to_json(meta);
  save_json(path, j);
}

inline GaussianMixture load_mixture(const std::string& path) {
  return mixture_from_json(load_json(path));
}

// ---- candidate lists ------------------------------------------------------

inline json candidates_to_json(const CandidateList& list) {
  json entries = json::array();
  for (const auto& c : list.entries) {
    json e;
    e["mean"] = vector_to_json(c.mean);
    e["covariance"] = matrix_to_json(c.covariance);
    e["provenance"] = c.provenance;
    entries.push_back(std::move(e));
  }
  json j;
  j["entries"] = std::move(entries);
  return j;
}

inline CandidateList candidates_from_json(const json& j) {
  CandidateList list;
  for (const auto& e : j.at("entries")) {
    Candidate c;
    c.mean = vector_from_json(e.at("mean"));
    c.covariance = matrix_from_json(e.at("covariance"));
    c.provenance = e.at("provenance").get<std::string>();
    list.entries.push_back(std::move(c));
  }
  return list;
}

inline void save_candidates(const std::string& path, const CandidateList& list,
                            const ArtifactMeta& meta) {
  json j = candidates_to_json(list);
  j["meta"] = meta_to_json(meta);
  save_json(path, j);
}

inline CandidateList load_candidates(const std::string& path) {
  return candidates_from_json(load_json(path));
}

// ---- piecewise score models ----------------------------------------------
// Every derived field is stored verbatim so a load-save cycle is
// byte-identical and evaluation needs no recomputation.

inline json partition_to_json(const Partition& p) {
  json a = json::array();
  for (const auto& block : p) a.push_back(block);
  return a;
}

inline Partition partition_from_json(const json& a) {
  Partition p;
  for (const auto& block : a) p.push_back(block.get<std::vector<int>>());
  return p;
}

inline json model_to_json(const PiecewiseScoreModel& model) {
  json j;
  j["noise_time"] = model.noise_time;
  j["clip_radius"] = model.clip_radius;

  json fm;
  fm["degree"] = model.feature_map.degree;
  fm["dim"] = model.feature_map.dim;
  json exps = json::array();
  for (const auto& e : model.feature_map.exponents) exps.push_back(e);
  fm["exponents"] = std::move(exps);
  fm["shift"] = vector_to_json(model.feature_map.shift);
  fm["scale"] = vector_to_json(model.feature_map.scale);
  j["feature_map"] = std::move(fm);

  json cl;
  cl["mean_partition"] = partition_to_json(model.clustering.pair.mean_partition);
  cl["cov_partition"] = partition_to_json(model.clustering.pair.cov_partition);
  cl["eta"] = model.clustering.eta;
  cl["thresholds"] = matrix_to_json(model.clustering.thresholds);
  json ests = json::array();
  for (const auto& e : model.clustering.estimates) {
    json ej;
    ej["mean"] = vector_to_json(e.mean);
    ej["covariance"] = matrix_to_json(e.covariance);
    ej["clamped_inverse"] = matrix_to_json(e.clamped_inverse);
    ej["weight"] = e.weight;
    ej["log_det_cov"] = e.log_det_cov;
    ests.push_back(std::move(ej));
  }
  cl["estimates"] = std::move(ests);
  j["clustering"] = std::move(cl);

  json pieces = json::array();
  for (const auto& p : model.pieces) {
    json pj;
    pj["piece_index"] = p.piece_index;
    pj["members"] = p.members;
    pj["anchor"] = p.anchor;
    pj["coefficients"] = matrix_to_json(p.coefficients);
    pj["theta1"] = p.theta1;
    pj["theta2"] = p.theta2;
    pj["fallback_inverse"] = matrix_to_json(p.fallback_inverse);
    pj["fallback_mean"] = vector_to_json(p.fallback_mean);
    pieces.push_back(std::move(pj));
  }
  j["pieces"] = std::move(pieces);
  return j;
}

inline PiecewiseScoreModel model_from_json(const json& j) {
  PiecewiseScoreModel model;
  model.noise_time = j.at("noise_time").get<double>();
  model.clip_radius = j.at("clip_radius").get<double>();

  const json& fm = j.at("feature_map");
  model.feature_map.degree = fm.at("degree").get<int>();
  model.feature_map.dim = fm.at("dim").get<int>();
  for (const auto& e : fm.at("exponents"))
    model.feature_map.exponents.push_back(e.get<std::vector<int>>());
  model.feature_map.shift = vector_from_json(fm.at("shift"));
  model.feature_map.scale = vector_from_json(fm.at("scale"));

  const json& cl = j.at("clustering");
  PartitionPair pair;
  pair.mean_partition = partition_from_json(cl.at("mean_partition"));
  pair.cov_partition = partition_from_json(cl.at("cov_partition"));
  std::vector<ParameterEstimate> ests;
  for (const auto& ej : cl.at("estimates")) {
    ParameterEstimate e;
    e.mean = vector_from_json(ej.at("mean"));
    e.covariance = matrix_from_json(ej.at("covariance"));
    e.clamped_inverse = matrix_from_json(ej.at("clamped_inverse"));
    e.weight = ej.at("weight").get<double>();
    e.log_det_cov = ej.at("log_det_cov").get<double>();
    ests.push_back(std::move(e));
  }
  model.clustering = make_clustering(pair, std::move(ests),
                                     matrix_from_json(cl.at("thresholds")),
                                     cl.at("eta").get<double>());

  for (const auto& pj : j.at("pieces")) {
    PieceModel p;
    p.piece_index = pj.at("piece_index").get<int>();
    p.members = pj.at("members").get<std::vector<int>>();
    p.anchor = pj.at("anchor").get<int>();
    p.coefficients = matrix_from_json(pj.at("coefficients"));
    p.theta1 = pj.at("theta1").get<double>();
    p.theta2 = pj.at("theta2").get<double>();
    p.fallback_inverse = matrix_from_json(pj.at("fallback_inverse"));
    p.fallback_mean = vector_from_json(pj.at("fallback_mean"));
    model.pieces.push_back(std::move(p));
  }
  return model;
}

inline void save_models(const std::string& path,
                        const std::vector<PiecewiseScoreModel>& models,
                        const ArtifactMeta& meta) {
  json arr = json::array();
  for (const auto& m : models) arr.push_back(model_to_json(m));
  json j;
  j["models"] = std::move(arr);
  j["meta"] = meta_to_json(meta);
  save_json(path, j);
}

inline std::vector<PiecewiseScoreModel> load_models(const std::string& path) {
  json j = load_json(path);
  std::vector<PiecewiseScoreModel> models;
  for (const auto& mj : j.at("models")) models.push_back(model_from_json(mj));
  return models;
}

// ---- GMMS binary samples --------------------------------------------------
// magic "GMMS", u32 dim, u64 count, then count*dim float64, row-major, all
// little-endian. A .meta.json sidecar carries the artifact header.

namespace detail_io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i)
    v = (v << 8) | static_cast<unsigned char>(s[off + static_cast<std::size_t>(i)]);
  return v;
}

inline std::uint64_t get_u64(const std::string& s, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i)
    v = (v << 8) | static_cast<unsigned char>(s[off + static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace detail_io

inline void write_gmms(const std::string& path, const Eigen::MatrixXd& rows,
                       const ArtifactMeta& meta) {
  std::string out;
  out.reserve(16 + static_cast<std::size_t>(rows.size()) * 8);
  out += "GMMS";
  detail_io::put_u32(out, static_cast<std::uint32_t>(rows.cols()));
  detail_io::put_u64(out, static_cast<std::uint64_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < rows.cols(); ++j)
      detail_io::put_u64(out, std::bit_cast<std::uint64_t>(rows(i, j)));
  write_text_file(path, out);
  save_json(path + ".meta.json", meta_to_json(meta));
}

inline Eigen::MatrixXd read_gmms(const std::string& path) {
  std::string s = read_file_bytes(path);
  if (s.size() < 16 || s.compare(0, 4, "GMMS") != 0)
    throw std::runtime_error(path + " is not a GMMS file");
  std::uint32_t d = detail_io::get_u32(s, 4);
  std::uint64_t n = detail_io::get_u64(s, 8);
  if (s.size() != 16 + n * d * 8)
    throw std::runtime_error(path + " has a truncated payload");
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::size_t off = 16;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      rows(i, j) = std::bit_cast<double>(detail_io::get_u64(s, off));
      off += 8;
    }
  return rows;
}

// ---- CSV ------------------------------------------------------------------

inline void write_csv(const std::string& path, const ArtifactMeta& meta,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  out += "# tool: " + std::string(kToolName) + " " + std::string(kVersion) + "\n";
  out += "# seed: " + std::to_string(meta.seed) + "\n";
  for (const auto& [name, hash] : meta.inputs)
    out += "# input " + name + ": " + hash + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i)
    out += (i ? "," : "") + columns[i];
  out += "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size())
      throw std::invalid_argument("csv row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i)
      out += (i ? "," : "") + row[i];
    out += "\n";
  }
  write_text_file(path, out);
}

}  // namespace gmdiff
