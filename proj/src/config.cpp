#include "osd/config.hpp"

#include "osd/clt.hpp"
#include "osd/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace osd {

namespace {

struct ExperimentName {
  Experiment e;
  const char* name;
};

constexpr ExperimentName kExperiments[] = {
    {Experiment::simulate_mixing, "simulate-mixing"}, {Experiment::estimate_alpha, "estimate-alpha"},
    {Experiment::clt_run, "clt-run"},                 {Experiment::osd_sample, "osd-sample"},
    {Experiment::extract_q, "extract-q"},             {Experiment::verify, "verify"},
};

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw Error(ErrorKind::config, "bad value for " + key + " ('" + value + "'): " + why);
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const std::string t = trim(s);
  int base = 10;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
    base = 16;
    first += 2;
  }
  auto [ptr, ec] = std::from_chars(first, last, v, base);
  if (ec != std::errc() || ptr != last || first == last)
    throw Error(ErrorKind::config, "not a non-negative integer: '" + t + "'");
  return v;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

bool same(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}
bool same(const Vec& a, const Vec& b) { return a.size() == b.size() && (a.size() == 0 || a == b); }

Mat default_ar1(int d) {
  Mat b = Mat::Zero(d, d);
  if (d == 2) {
    b << 0.5, 0.2, 0.0, 0.3;
    return b;
  }
  for (int i = 0; i < d; ++i) {
    b(i, i) = 0.5;
    if (i + 1 < d) b(i, i + 1) = 0.2;
  }
  return b;
}

void check_square(const std::string& key, const Mat& m, int d) {
  if (m.size() != 0 && (m.rows() != d || m.cols() != d))
    throw Error(ErrorKind::config, key + " must be " + std::to_string(d) + "x" + std::to_string(d));
}

void check_length(const std::string& key, const Vec& v, int d) {
  if (v.size() != 0 && v.size() != d)
    throw Error(ErrorKind::config, key + " must have " + std::to_string(d) + " entries");
}

}  // namespace

const char* to_string(Experiment e) noexcept {
  for (const auto& x : kExperiments)
    if (x.e == e) return x.name;
  return "?";
}

Experiment parse_experiment(const std::string& name) {
  for (const auto& x : kExperiments)
    if (name == x.name) return x.e;
  throw Error(ErrorKind::config, "unknown experiment '" + name + "'");
}

std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  // Shortest representation that parses back exactly.
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_number(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) throw Error(ErrorKind::config, "empty number");
  const auto slash = t.find('/');
  if (slash != std::string::npos) {
    const double num = parse_number(t.substr(0, slash));
    const double den = parse_number(t.substr(slash + 1));
    if (den == 0.0) throw Error(ErrorKind::config, "zero denominator in '" + t + "'");
    return num / den;
  }
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v))
    throw Error(ErrorKind::config, "not a finite number: '" + t + "'");
  return v;
}

std::string format_vector(const Vec& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v(i));
  }
  return out;
}

std::string format_matrix(const Mat& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ';';
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(parse_number(part));
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(static_cast<std::size_t>(parse_u64(part)));
  return out;
}

Vec parse_vector(const std::string& s) {
  const auto v = parse_double_list(s);
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

Mat parse_matrix(const std::string& s) {
  if (trim(s).empty()) return Mat();
  std::vector<std::vector<double>> rows;
  for (const auto& row : split(s, ';')) rows.push_back(parse_double_list(row));
  const std::size_t cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols || cols == 0) throw Error(ErrorKind::config, "ragged matrix '" + s + "'");
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

bool RunConfig::operator==(const RunConfig& o) const {
  if (process_theta.size() != o.process_theta.size()) return false;
  for (std::size_t i = 0; i < process_theta.size(); ++i)
    if (!same(process_theta[i], o.process_theta[i])) return false;
  return experiment == o.experiment && seed == o.seed && dim == o.dim && replicas == o.replicas &&
         length == o.length && checkpoints == o.checkpoints && grid_step == o.grid_step &&
         process == o.process && same(process_b, o.process_b) && same(process_cov, o.process_cov) &&
         same(levy_drift, o.levy_drift) && same(levy_diffusion, o.levy_diffusion) &&
         levy_jump_rate == o.levy_jump_rate && same(levy_jump_mean, o.levy_jump_mean) &&
         same(levy_jump_cov, o.levy_jump_cov) && same(q, o.q) && step == o.step &&
         samples == o.samples && lags == o.lags && eps_grid == o.eps_grid &&
         c_values == o.c_values && w_values == o.w_values && t_grid == o.t_grid && t == o.t &&
         q_file == o.q_file && normalizers_file == o.normalizers_file &&
         out_format == o.out_format && out_path == o.out_path;
}

RunConfig RunConfig::resolved() const {
  RunConfig c = *this;
  const int d = c.dim;
  if (c.checkpoints.empty()) c.checkpoints = power_of_two_checkpoints(8, 14);
  std::sort(c.checkpoints.begin(), c.checkpoints.end());
  const std::size_t last_checkpoint = c.checkpoints.back();

  if (c.process_cov.size() == 0) c.process_cov = Mat::Identity(d, d);
  if (c.process == ProcessKind::ar1 && c.process_b.size() == 0) c.process_b = default_ar1(d);
  if (c.process == ProcessKind::ma && c.process_theta.empty())
    c.process_theta = {Mat::Identity(d, d), Mat::Identity(d, d)};
  if (c.q.size() == 0) c.q = Mat::Identity(d, d);
  if (c.levy_drift.size() == 0) c.levy_drift = Vec::Zero(d);
  if (c.levy_diffusion.size() == 0)
    c.levy_diffusion = c.levy_jump_rate > 0.0 ? Mat(Mat::Zero(d, d)) : Mat(Mat::Identity(d, d));
  if (c.levy_jump_rate > 0.0) {
    if (c.levy_jump_mean.size() == 0) c.levy_jump_mean = Vec::Zero(d);
    if (c.levy_jump_cov.size() == 0) c.levy_jump_cov = Mat::Identity(d, d);
  }

  switch (c.experiment) {
    case Experiment::simulate_mixing:
      if (c.replicas == 0) c.replicas = 1000;
      if (c.length == 0) c.length = 256;
      break;
    case Experiment::estimate_alpha:
      if (c.replicas == 0) c.replicas = 100000;
      if (c.lags.empty()) c.lags = {1, 2, 4, 8};
      if (c.length == 0) c.length = 2 * (*std::max_element(c.lags.begin(), c.lags.end())) + 8;
      break;
    case Experiment::clt_run:
    case Experiment::extract_q:
      if (c.replicas == 0) c.replicas = 20000;
      if (c.length == 0) c.length = last_checkpoint;
      break;
    case Experiment::osd_sample:
    case Experiment::verify:
      if (c.samples == 0) c.samples = c.experiment == Experiment::verify ? 50000 : 100000;
      break;
  }
  return c;
}

void RunConfig::validate() const {
  if (dim < 1 || dim > 10) throw Error(ErrorKind::config, "dim must be in 1..10");
  if (out_format != "csv" && out_format != "json")
    throw Error(ErrorKind::config, "format must be csv or json");
  check_square("process.b", process_b, dim);
  check_square("process.cov", process_cov, dim);
  for (std::size_t i = 0; i < process_theta.size(); ++i)
    check_square("process.theta" + std::to_string(i), process_theta[i], dim);
  check_square("levy.diffusion", levy_diffusion, dim);
  check_square("levy.jump_cov", levy_jump_cov, dim);
  check_square("q", q, dim);
  check_length("levy.drift", levy_drift, dim);
  check_length("levy.jump_mean", levy_jump_mean, dim);
  if (!(step > 0.0)) throw Error(ErrorKind::config, "step must be positive");
  if (!(levy_jump_rate >= 0.0)) throw Error(ErrorKind::config, "levy.jump_rate must be >= 0");
  if (!(t > 0.0)) throw Error(ErrorKind::config, "t must be positive");
  for (double e : eps_grid)
    if (!(e > 0.0)) throw Error(ErrorKind::config, "eps values must be positive");
  for (double c : c_values)
    if (!(c > 0.0 && c < 1.0)) throw Error(ErrorKind::config, "c values must lie in (0, 1)");
  for (double w : w_values)
    if (!(w > 0.0)) throw Error(ErrorKind::config, "w values must be positive");
  for (double s : t_grid)
    if (!(s > 0.0)) throw Error(ErrorKind::config, "t grid values must be positive");
  for (std::size_t l : lags)
    if (l < 1) throw Error(ErrorKind::config, "lags must be >= 1");
  std::set<std::size_t> seen;
  for (std::size_t n : checkpoints) {
    if (n < 2) throw Error(ErrorKind::config, "checkpoints must be >= 2");
    if (!seen.insert(n).second) throw Error(ErrorKind::config, "duplicate checkpoint");
  }
  if (experiment == Experiment::clt_run || experiment == Experiment::extract_q) {
    if (replicas != 0 && replicas < 16) throw Error(ErrorKind::config, "replicas must be >= 16");
    if (length != 0 && !checkpoints.empty() &&
        length < *std::max_element(checkpoints.begin(), checkpoints.end()))
      throw Error(ErrorKind::config, "length shorter than the last checkpoint");
  }
  if (experiment == Experiment::estimate_alpha && length != 0)
    for (std::size_t l : lags)
      if (l >= length) throw Error(ErrorKind::config, "lag must be below the path length");
  if (experiment == Experiment::verify && q_file.empty() && q.size() == 0)
    throw Error(ErrorKind::config, "verify needs q or q_file");
}

ProcessSpec RunConfig::process_spec() const {
  const RunConfig c = resolved();
  GaussianLaw innovation = GaussianLaw::centered(c.process_cov);
  ProcessSpec spec;
  switch (c.process) {
    case ProcessKind::iid: spec = ProcessSpec::iid(innovation); break;
    case ProcessKind::ma: spec = ProcessSpec::ma(c.process_theta, innovation); break;
    case ProcessKind::ar1: spec = ProcessSpec::ar1(c.process_b, innovation); break;
  }
  spec.validate();
  return spec;
}

LevySpec RunConfig::levy_spec() const {
  const RunConfig c = resolved();
  LevySpec spec;
  if (c.levy_jump_rate > 0.0) {
    GaussianLaw jump{c.levy_jump_mean, c.levy_jump_cov};
    spec = LevySpec::compound_poisson(c.levy_jump_rate, jump);
    spec.diffusion = c.levy_diffusion;
  } else {
    spec = LevySpec::gaussian(c.levy_diffusion);
  }
  spec.drift = c.levy_drift;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("levy: ") + e.what());
  }
  return spec;
}

KeyValues to_key_values(const RunConfig& c) {
  KeyValues kv = {
      {"experiment", to_string(c.experiment)},
      {"seed", std::to_string(c.seed)},
      {"dim", std::to_string(c.dim)},
      {"replicas", std::to_string(c.replicas)},
      {"length", std::to_string(c.length)},
      {"checkpoints", join_sizes(c.checkpoints)},
      {"grid_step", std::to_string(c.grid_step)},
      {"process.kind", to_string(c.process)},
      {"process.b", format_matrix(c.process_b)},
      {"process.cov", format_matrix(c.process_cov)},
      {"process.order", std::to_string(c.process_theta.size())},
  };
  for (std::size_t i = 0; i < c.process_theta.size(); ++i)
    kv.emplace_back("process.theta" + std::to_string(i), format_matrix(c.process_theta[i]));
  const KeyValues rest = {
      {"levy.drift", format_vector(c.levy_drift)},
      {"levy.diffusion", format_matrix(c.levy_diffusion)},
      {"levy.jump_rate", format_double(c.levy_jump_rate)},
      {"levy.jump_mean", format_vector(c.levy_jump_mean)},
      {"levy.jump_cov", format_matrix(c.levy_jump_cov)},
      {"q", format_matrix(c.q)},
      {"step", format_double(c.step)},
      {"samples", std::to_string(c.samples)},
      {"lags", join_sizes(c.lags)},
      {"eps", join_doubles(c.eps_grid)},
      {"c_values", join_doubles(c.c_values)},
      {"w_values", join_doubles(c.w_values)},
      {"t_grid", join_doubles(c.t_grid)},
      {"t", format_double(c.t)},
      {"q_file", c.q_file},
      {"normalizers_file", c.normalizers_file},
      {"out_format", c.out_format},
      {"out_path", c.out_path},
  };
  kv.insert(kv.end(), rest.begin(), rest.end());
  return kv;
}

RunConfig apply_key_values(RunConfig c, const std::map<std::string, std::string>& kv) {
  // The MA order fixes how many theta keys are expected.
  std::size_t order = c.process_theta.size();
  if (auto it = kv.find("process.order"); it != kv.end()) {
    order = static_cast<std::size_t>(parse_u64(it->second));
    c.process_theta.resize(order);
  }
  for (const auto& [key, value] : kv) {
    try {
      if (key == "experiment") c.experiment = parse_experiment(value);
      else if (key == "seed") c.seed = parse_u64(value);
      else if (key == "dim") {
        const auto d = parse_u64(value);
        if (d > 1000) bad_value(key, value, "too large");
        c.dim = static_cast<int>(d);
      }
      else if (key == "replicas") c.replicas = parse_u64(value);
      else if (key == "length") c.length = parse_u64(value);
      else if (key == "checkpoints") c.checkpoints = parse_size_list(value);
      else if (key == "grid_step") c.grid_step = parse_u64(value);
      else if (key == "process.kind") c.process = parse_process_kind(value);
      else if (key == "process.b") c.process_b = parse_matrix(value);
      else if (key == "process.cov") c.process_cov = parse_matrix(value);
      else if (key == "process.order") continue;
      else if (key.rfind("process.theta", 0) == 0) {
        const auto i = static_cast<std::size_t>(parse_u64(key.substr(13)));
        if (i >= c.process_theta.size()) c.process_theta.resize(i + 1);
        c.process_theta[i] = parse_matrix(value);
      }
      else if (key == "levy.drift") c.levy_drift = parse_vector(value);
      else if (key == "levy.diffusion") c.levy_diffusion = parse_matrix(value);
      else if (key == "levy.jump_rate") c.levy_jump_rate = parse_number(value);
      else if (key == "levy.jump_mean") c.levy_jump_mean = parse_vector(value);
      else if (key == "levy.jump_cov") c.levy_jump_cov = parse_matrix(value);
      else if (key == "q") c.q = parse_matrix(value);
      else if (key == "step") c.step = parse_number(value);
      else if (key == "samples") c.samples = parse_u64(value);
      else if (key == "lags") c.lags = parse_size_list(value);
      else if (key == "eps") c.eps_grid = parse_double_list(value);
      else if (key == "c_values") c.c_values = parse_double_list(value);
      else if (key == "w_values") c.w_values = parse_double_list(value);
      else if (key == "t_grid") c.t_grid = parse_double_list(value);
      else if (key == "t") c.t = parse_number(value);
      else if (key == "q_file") c.q_file = value;
      else if (key == "normalizers_file") c.normalizers_file = value;
      else if (key == "out_format") c.out_format = value;
      else if (key == "out_path") c.out_path = value;
      else throw Error(ErrorKind::config, "unknown key '" + key + "'");
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::config && std::string(e.what()).find(key) != std::string::npos)
        throw;
      throw Error(ErrorKind::config, key + ": " + e.what());
    }
  }
  if (kv.count("process.order")) c.process_theta.resize(order);
  return c;
}

std::string render(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : to_key_values(config)) out += k + " = " + v + "\n";
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::config, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::config, "line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  return apply_key_values(std::move(base), parse_key_values(text));
}

}  // namespace osd
