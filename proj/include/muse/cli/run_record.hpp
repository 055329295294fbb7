#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "muse/engine/counters.hpp"
#include "muse/errors.hpp"
#include "muse/numerics/linalg.hpp"
#include "muse/version.hpp"

namespace muse {

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const Vec& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline ordered_json to_json(const Mat& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Vec vec_from_json(const ordered_json& arr) {
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

inline Mat mat_from_json(const ordered_json& rows) {
  if (rows.empty()) return Mat();
  Mat m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(i, j) = rows[i][j].get<double>();
  return m;
}

inline ordered_json counters_to_json(const Counters& c) {
  ordered_json j;
  j["gradient_evals"] = c.gradient_evals;
  j["hvp_evals"] = c.hvp_evals;
  j["mixed_evals"] = c.mixed_evals;
  j["gradient_equivalents"] = c.gradient_equivalents();
  j["logp_evals"] = c.logp_evals;
  j["map_solves"] = c.map_solves;
  j["cg_solves"] = c.cg_solves;
  j["cg_iters"] = c.cg_iters;
  j["simulator_calls"] = c.simulator_calls;
  return j;
}

/// One run's result file: a structured UTF-8 key-value tree with stable key
/// order. Serialization is fixed (2-space indent plus trailing newline) so
/// write -> read -> write is byte-identical.
struct RunRecord {
  ordered_json doc;

  std::string model() const { return doc.at("model").at("name"); }
  std::string method() const { return doc.at("method"); }
  bool converged() const { return doc.at("results").at("converged"); }

  Vec mean_unconstrained() const {
    return vec_from_json(
        doc.at("results").at("theta").at("unconstrained").at("mean"));
  }
  Vec sd_unconstrained() const {
    return vec_from_json(
        doc.at("results").at("theta").at("unconstrained").at("sd"));
  }
  Vec mean_native() const {
    return vec_from_json(doc.at("results").at("theta").at("native").at("mean"));
  }
  Vec sd_native() const {
    return vec_from_json(doc.at("results").at("theta").at("native").at("sd"));
  }
  std::vector<std::string> labels() const {
    return doc.at("results")
        .at("theta")
        .at("unconstrained")
        .at("labels")
        .get<std::vector<std::string>>();
  }
  std::uint64_t gradient_equivalents() const {
    return doc.at("counters").at("gradient_equivalents").get<std::uint64_t>();
  }
  ordered_json model_config() const { return doc.at("model"); }

  std::string serialize() const { return doc.dump(2) + "\n"; }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << serialize();
    if (!out) throw IoError("failed writing '" + path + "'");
  }

  static RunRecord read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    RunRecord rec;
    try {
      rec.doc = ordered_json::parse(in);
    } catch (const std::exception& e) {
      throw IoError("failed parsing '" + path + "': " + e.what());
    }
    return rec;
  }
};

/// Shared frame: schema/version header plus model and option echoes.
inline ordered_json record_frame(const std::string& model_name,
                                 const ordered_json& model_config,
                                 const std::string& method,
                                 const ordered_json& options,
                                 std::uint64_t base_seed) {
  ordered_json doc;
  doc["schema_version"] = kRecordSchemaVersion;
  doc["artifact_version"] = kArtifactVersion;
  ordered_json model;
  model["name"] = model_name;
  for (auto& [k, v] : model_config.items()) model[k] = v;
  doc["model"] = model;
  doc["method"] = method;
  doc["options"] = options;
  doc["base_seed"] = base_seed;
  return doc;
}

}  // namespace muse
