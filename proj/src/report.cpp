#include "osd/report.hpp"

#include "osd/error.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#ifndef OSD_VERSION
#define OSD_VERSION "0.0.0"
#endif

namespace osd {

namespace {

// JSON has no NaN or infinity.
Json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? Json("nan") : Json(v > 0 ? "inf" : "-inf");
}

}  // namespace

std::string version_string() { return "osd " OSD_VERSION; }

void Report::flag(std::string name, bool pass, double value, double threshold) {
  flags.push_back({std::move(name), pass, value, threshold});
}

bool Report::pass() const {
  for (const auto& f : flags)
    if (!f.pass) return false;
  return true;
}

Json Report::to_json() const {
  Json cfg = Json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  Json fl = Json::array();
  for (const auto& f : flags)
    fl.push_back({{"name", f.name}, {"pass", f.pass}, {"value", number(f.value)},
                  {"threshold", number(f.threshold)}});
  return {{"experiment", experiment}, {"config", cfg},    {"metrics", metrics},
          {"flags", fl},              {"pass", pass()},   {"version", version_string()}};
}

std::string Report::dump() const { return to_json().dump(2) + "\n"; }

Json to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

Json to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

Mat matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw Error(ErrorKind::io, "expected a matrix as an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(ErrorKind::io, "ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const Json& x = row[static_cast<std::size_t>(k)];
      if (!x.is_number()) throw Error(ErrorKind::io, "non-numeric matrix entry");
      m(i, k) = x.get<double>();
    }
  }
  return m;
}

void write_clt_metrics_csv(std::ostream& os, const CltRun& run) {
  const auto& inf = run.infinitesimality;
  os << "n,energy,energy_q95,cf_sup,ratio_bound";
  for (double e : inf.eps) os << ",infinitesimality@" << format_double(e);
  os << '\n';
  for (std::size_t k = 0; k < run.metrics.size(); ++k) {
    const auto& m = run.metrics[k];
    os << m.n << ',' << format_double(m.distance.energy) << ','
       << format_double(m.distance.null_q95) << ',' << format_double(m.distance.cf_sup) << ','
       << format_double(run.diagnostics.ratio_bound_prefix.at(k));
    for (std::size_t e = 0; e < inf.eps.size(); ++e) os << ',' << format_double(inf.value[k][e]);
    os << '\n';
  }
}

Json normalizers_to_json(const NormalizerTrack& track) {
  Json a = Json::array();
  Json b = Json::array();
  for (std::size_t k = 0; k < track.size(); ++k) {
    a.push_back(to_json(track.a[k]));
    b.push_back(to_json(track.b[k]));
  }
  return {{"checkpoints", track.checkpoints}, {"a", a}, {"b", b}, {"regularized", track.regularized}};
}

NormalizerTrack normalizers_from_json(const Json& j) {
  NormalizerTrack track;
  try {
    track.checkpoints = j.at("checkpoints").get<std::vector<std::size_t>>();
    for (const auto& a : j.at("a")) track.a.push_back(matrix_from_json(a));
    for (const auto& b : j.at("b")) {
      Vec v(static_cast<Eigen::Index>(b.size()));
      for (std::size_t i = 0; i < b.size(); ++i) v(static_cast<Eigen::Index>(i)) = b[i].get<double>();
      track.b.push_back(v);
    }
    track.regularized = j.value("regularized", false);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::io, std::string("malformed normalizer file: ") + e.what());
  }
  if (track.a.size() != track.checkpoints.size() || track.b.size() != track.checkpoints.size())
    throw Error(ErrorKind::io, "normalizer file: length mismatch");
  for (std::size_t k = 1; k < track.size(); ++k)
    if (track.checkpoints[k] <= track.checkpoints[k - 1])
      throw Error(ErrorKind::io, "normalizer file: checkpoints must increase");
  return track;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::io, path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

}  // namespace osd
