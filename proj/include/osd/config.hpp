#pragma once

// Run configuration: flat `key = value` text with dotted section prefixes.
// Matrices are written row by row, rows separated by ';' and entries by
// ','; lists are comma separated.

#include "osd/bdlp.hpp"
#include "osd/linalg.hpp"
#include "osd/mixing.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace osd {

enum class Experiment { simulate_mixing, estimate_alpha, clt_run, osd_sample, extract_q, verify };

const char* to_string(Experiment e) noexcept;
Experiment parse_experiment(const std::string& name);

struct RunConfig {
  Experiment experiment = Experiment::clt_run;
  std::uint64_t seed = 7;
  int dim = 2;
  std::size_t replicas = 0;  // 0: experiment default
  std::size_t length = 0;    // 0: experiment default
  std::vector<std::size_t> checkpoints;
  std::size_t grid_step = 128;

  // process.*
  ProcessKind process = ProcessKind::ar1;
  Mat process_b;                 // empty: default AR(1) matrix
  std::vector<Mat> process_theta;  // empty: Θ_0 = Θ_1 = I
  Mat process_cov;               // empty: identity

  // levy.*
  Vec levy_drift;
  Mat levy_diffusion;
  double levy_jump_rate = 0.0;
  Vec levy_jump_mean;
  Mat levy_jump_cov;

  Mat q;                  // osd-sample generator; empty: identity
  double step = 1.0 / 64.0;
  std::size_t samples = 0;

  std::vector<std::size_t> lags;
  std::vector<double> eps_grid = {0.25};
  std::vector<double> c_values = {0.9, 0.8, 0.7};
  std::vector<double> w_values = {0.25, 0.5, 1.0, 2.0};
  std::vector<double> t_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
  double t = 1.0;
  std::string q_file;
  std::string normalizers_file;

  std::string out_format = "json";
  std::string out_path;

  bool operator==(const RunConfig& other) const;

  /// Fills experiment defaults (replicas, path length, matrices).
  RunConfig resolved() const;
  /// Throws Error(config) on inconsistent values.
  void validate() const;

  ProcessSpec process_spec() const;
  LevySpec levy_spec() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues to_key_values(const RunConfig& config);
/// Applies keys onto `base`; unknown keys throw Error(config).
RunConfig apply_key_values(RunConfig base, const std::map<std::string, std::string>& kv);

std::string render(const RunConfig& config);
RunConfig parse_config(const std::string& text, RunConfig base = {});
std::map<std::string, std::string> parse_key_values(const std::string& text);

// Value codecs, shared with the CLI flags.
std::string format_double(double v);
std::string format_matrix(const Mat& m);
std::string format_vector(const Vec& v);
Mat parse_matrix(const std::string& s);
Vec parse_vector(const std::string& s);
std::vector<double> parse_double_list(const std::string& s);
std::vector<std::size_t> parse_size_list(const std::string& s);
/// Accepts decimals and fractions such as "1/2".
double parse_number(const std::string& s);

}  // namespace osd
