#pragma once

// Experiment reports: a JSON document with the resolved configuration,
// metrics and pass flags, plus plot-ready CSV tables.

#include "osd/clt.hpp"
#include "osd/config.hpp"
#include "osd/linalg.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace osd {

using Json = nlohmann::json;

struct Flag {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct Report {
  std::string experiment;
  KeyValues config;
  Json metrics = Json::object();
  std::vector<Flag> flags;

  void flag(std::string name, bool pass, double value, double threshold);
  bool pass() const;
  Json to_json() const;
  std::string dump() const;
};

std::string version_string();

Json to_json(const Mat& m);
Json to_json(const Vec& v);
Mat matrix_from_json(const Json& j);

/// Columns n, energy, cf_sup, ratio_bound, infinitesimality@ε...; ratio
/// bound is the running prefix up to each checkpoint.
void write_clt_metrics_csv(std::ostream& os, const CltRun& run);

/// {"checkpoints": [...], "a": [matrix...], "b": [vector...]}.
Json normalizers_to_json(const NormalizerTrack& track);
NormalizerTrack normalizers_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace osd
