#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gmc/error.hpp"
#include "gmc/model.hpp"

namespace gmc {

inline constexpr const char* kModelFormat = "gmc-model";
inline constexpr int kModelFormatVersion = 1;

/// Everything persisted alongside a trained model.
struct ModelFile {
  GmcModel model;
  std::optional<double> temperature;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

using nlohmann::json;

inline json finite_array(std::span<const double> values, const std::string& field) {
  json out = json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw std::invalid_argument("save_model: non-finite value in " + field + "[" + std::to_string(i) + "]");
    out.push_back(values[i]);
  }
  return out;
}

inline json matrix_to_json(const Matrix& m, const std::string& field) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", finite_array(m.values(), field + ".data")}};
}

inline std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

inline const json& field(const json& parent, const char* key, const std::string& path) {
  if (!parent.is_object() || !parent.contains(key)) throw ParseError(join(path, key), "missing field");
  return parent.at(key);
}

inline double read_double(const json& parent, const char* key, const std::string& path) {
  const json& v = field(parent, key, path);
  if (!v.is_number()) throw ParseError(join(path, key), "expected a number");
  return v.get<double>();
}

inline std::vector<double> read_doubles(const json& parent, const char* key, const std::string& path) {
  const json& v = field(parent, key, path);
  if (!v.is_array()) throw ParseError(join(path, key), "expected an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ParseError(join(path, key) + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

inline std::vector<std::size_t> read_sizes(const json& parent, const char* key, const std::string& path) {
  const json& v = field(parent, key, path);
  if (!v.is_array()) throw ParseError(join(path, key), "expected an array of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer() || v[i].get<std::int64_t>() < 0)
      throw ParseError(join(path, key) + "[" + std::to_string(i) + "]", "expected a non-negative integer");
    out.push_back(v[i].get<std::size_t>());
  }
  return out;
}

inline std::vector<std::string> read_strings(const json& parent, const char* key, const std::string& path) {
  if (!parent.contains(key)) return {};
  const json& v = parent.at(key);
  if (!v.is_array()) throw ParseError(join(path, key), "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ParseError(join(path, key) + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

inline Matrix read_matrix(const json& parent, const char* key, const std::string& path) {
  const json& m = field(parent, key, path);
  const std::string here = join(path, key);
  const double rows = read_double(m, "rows", here);
  const double cols = read_double(m, "cols", here);
  std::vector<double> data = read_doubles(m, "data", here);
  if (rows < 0 || cols < 0 || static_cast<double>(data.size()) != rows * cols)
    throw ParseError(here + ".data", "length does not equal rows*cols");
  Matrix out(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  std::copy(data.begin(), data.end(), out.values().begin());
  return out;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ModelFile& file) {
  using nlohmann::json;
  const GmcModel& m = file.model;
  m.validate();
  const auto& pipe = m.pipeline;
  json pipeline;
  pipeline["standardizer"] = {
      {"mean", detail::finite_array(pipe.standardizer().mean, "pipeline.standardizer.mean")},
      {"scale", detail::finite_array(pipe.standardizer().scale, "pipeline.standardizer.scale")}};
  if (pipe.pca()) {
    const auto& pca = *pipe.pca();
    pipeline["pca"] = {{"components", detail::matrix_to_json(pca.components, "pipeline.pca.components")},
                       {"center", detail::finite_array(pca.center, "pipeline.pca.center")},
                       {"eigenvalues", detail::finite_array(pca.eigenvalues, "pipeline.pca.eigenvalues")},
                       {"variance_retained", pca.variance_retained},
                       {"variance_explained", pca.variance_explained}};
  } else {
    pipeline["pca"] = nullptr;
  }
  if (pipe.rff()) {
    const auto& rff = *pipe.rff();
    pipeline["rff"] = {{"gamma", rff.gamma},
                       {"omega", detail::matrix_to_json(rff.omega, "pipeline.rff.omega")},
                       {"phases", detail::finite_array(rff.phases, "pipeline.rff.phases")}};
  } else {
    pipeline["rff"] = nullptr;
  }
  json doc;
  doc["format"] = kModelFormat;
  doc["version"] = kModelFormatVersion;
  doc["pipeline"] = std::move(pipeline);
  doc["planes"] = {{"offsets", m.planes.offsets},
                   {"weights", detail::matrix_to_json(m.planes.weights, "planes.weights")},
                   {"biases", detail::finite_array(m.planes.biases, "planes.biases")}};
  doc["alpha"] = m.alpha;
  if (file.temperature) {
    if (!(*file.temperature > 0.0) || !std::isfinite(*file.temperature))
      throw std::invalid_argument("save_model: temperature must be positive and finite");
    doc["temperature"] = *file.temperature;
  } else {
    doc["temperature"] = nullptr;
  }
  doc["class_names"] = m.class_names;
  doc["feature_names"] = m.feature_names;
  doc["metadata"] = file.metadata;
  return doc;
}

inline ModelFile model_from_json(const nlohmann::json& doc) {
  using nlohmann::json;
  if (!doc.is_object()) throw ParseError("", "model document is not a JSON object");
  const json& format = detail::field(doc, "format", "");
  if (!format.is_string() || format.get<std::string>() != kModelFormat)
    throw ParseError("format", std::string("expected \"") + kModelFormat + "\"");
  const json& version = detail::field(doc, "version", "");
  if (!version.is_number_integer()) throw ParseError("version", "expected an integer");
  if (version.get<int>() != kModelFormatVersion)
    throw VersionMismatch("model format version " + std::to_string(version.get<int>()) + " is not supported (expected " +
                          std::to_string(kModelFormatVersion) + ")");

  const json& pj = detail::field(doc, "pipeline", "");
  const json& sj = detail::field(pj, "standardizer", "pipeline");
  Standardizer standardizer{detail::read_doubles(sj, "mean", "pipeline.standardizer"),
                            detail::read_doubles(sj, "scale", "pipeline.standardizer")};
  if (standardizer.mean.size() != standardizer.scale.size())
    throw ParseError("pipeline.standardizer.scale", "length differs from mean");
  for (std::size_t j = 0; j < standardizer.scale.size(); ++j)
    if (!(standardizer.scale[j] > 0.0))
      throw ParseError("pipeline.standardizer.scale[" + std::to_string(j) + "]", "scale must be positive");

  std::optional<PcaMap> pca;
  if (pj.contains("pca") && !pj.at("pca").is_null()) {
    const json& cj = pj.at("pca");
    PcaMap p;
    p.components = detail::read_matrix(cj, "components", "pipeline.pca");
    p.center = detail::read_doubles(cj, "center", "pipeline.pca");
    p.eigenvalues = detail::read_doubles(cj, "eigenvalues", "pipeline.pca");
    p.variance_retained = detail::read_double(cj, "variance_retained", "pipeline.pca");
    p.variance_explained = detail::read_double(cj, "variance_explained", "pipeline.pca");
    if (p.components.rows() != standardizer.dim() || p.center.size() != standardizer.dim())
      throw ParseError("pipeline.pca.components", "width differs from standardizer");
    pca = std::move(p);
  }
  std::optional<RffMap> rff;
  if (pj.contains("rff") && !pj.at("rff").is_null()) {
    const json& rj = pj.at("rff");
    RffMap r;
    r.gamma = detail::read_double(rj, "gamma", "pipeline.rff");
    r.omega = detail::read_matrix(rj, "omega", "pipeline.rff");
    r.phases = detail::read_doubles(rj, "phases", "pipeline.rff");
    if (r.phases.size() != r.omega.cols()) throw ParseError("pipeline.rff.phases", "length differs from omega columns");
    const std::size_t expected = pca ? pca->output_dim() : standardizer.dim();
    if (r.omega.rows() != expected) throw ParseError("pipeline.rff.omega", "row count differs from input width");
    rff = std::move(r);
  }

  ModelFile file;
  GmcModel& m = file.model;
  m.pipeline = FeaturePipeline(std::move(standardizer), std::move(pca), std::move(rff));
  const json& plj = detail::field(doc, "planes", "");
  m.planes.offsets = detail::read_sizes(plj, "offsets", "planes");
  m.planes.weights = detail::read_matrix(plj, "weights", "planes");
  m.planes.biases = detail::read_doubles(plj, "biases", "planes");
  const auto& off = m.planes.offsets;
  if (off.size() < 2 || off.front() != 0) throw ParseError("planes.offsets", "expected [0, ..., M_tot] with C+1 entries");
  for (std::size_t c = 1; c < off.size(); ++c)
    if (off[c] <= off[c - 1]) throw ParseError("planes.offsets", "every class needs at least one plane");
  if (m.planes.weights.rows() != off.back()) throw ParseError("planes.weights", "row count differs from plane total");
  if (m.planes.biases.size() != off.back()) throw ParseError("planes.biases", "length differs from plane total");
  if (m.planes.weights.cols() != m.pipeline.output_dim())
    throw ParseError("planes.weights", "column count differs from pipeline output width");
  m.alpha = detail::read_double(doc, "alpha", "");
  if (!(m.alpha > 0.0)) throw ParseError("alpha", "must be positive");
  if (doc.contains("temperature") && !doc.at("temperature").is_null()) {
    const double t = detail::read_double(doc, "temperature", "");
    if (!(t > 0.0)) throw ParseError("temperature", "must be positive");
    file.temperature = t;
  }
  m.class_names = detail::read_strings(doc, "class_names", "");
  m.feature_names = detail::read_strings(doc, "feature_names", "");
  if (doc.contains("metadata")) file.metadata = doc.at("metadata");
  return file;
}

inline void save_model(const ModelFile& file, const std::string& path) {
  const std::string text = model_to_json(file).dump(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path + " for writing");
  out << text << '\n';
  if (!out) throw std::runtime_error("save_model: write to " + path + " failed");
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open model file");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, std::string("invalid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

}  // namespace gmc
