#include "osd/cli.hpp"

#include "osd/bdlp.hpp"
#include "osd/clt.hpp"
#include "osd/error.hpp"
#include "osd/mixing.hpp"
#include "osd/parallel.hpp"
#include "osd/semigroup.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace osd {

namespace {

constexpr double kMarginTol = 1e-6;

std::string key_of(double v) { return format_double(v); }

Mat rowwise_cov(const Mat& x) {
  const Vec mean = x.colwise().mean().transpose();
  const Mat centered = x.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(1, x.rows() - 1));
}

std::string samples_binary(const Mat& x) {
  std::vector<double> data(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index k = 0; k < x.cols(); ++k)
      data[static_cast<std::size_t>(i * x.cols() + k)] = x(i, k);
  std::ostringstream os(std::ios::binary);
  write_binary(os, static_cast<std::size_t>(x.rows()), 1, static_cast<std::size_t>(x.cols()), data);
  return os.str();
}

void add_samples(Outcome& out, const RunConfig& c, const Mat& x) {
  if (c.out_format == "csv") {
    std::ostringstream os;
    write_samples_csv(os, x);
    out.artifacts.push_back({"samples.csv", os.str()});
  } else {
    out.artifacts.push_back({"samples.osdb", samples_binary(x)});
  }
}

// ---------------------------------------------------------------------------

Outcome simulate_mixing(const RunConfig& c) {
  Outcome out;
  const ProcessSpec spec = c.process_spec();
  const PathBatch batch = generate(spec, c.length, c.replicas, c.seed);
  const int d = spec.dim();
  const auto R = static_cast<double>(c.replicas);

  auto cov_at = [&](std::size_t t) {
    Mat x(static_cast<Eigen::Index>(c.replicas), d);
    for (std::size_t r = 0; r < c.replicas; ++r)
      for (int k = 0; k < d; ++k) x(static_cast<Eigen::Index>(r), k) = batch.at(r, t, static_cast<std::size_t>(k));
    return rowwise_cov(x);
  };
  const Mat theory = spec.stationary_law().cov;
  const Mat first = cov_at(0);
  const Mat last = cov_at(c.length - 1);
  const double scale = std::max(1.0, theory.cwiseAbs().maxCoeff());
  const double err = (first - last).cwiseAbs().maxCoeff();
  const double threshold = 5.0 * scale / std::sqrt(R);

  auto& m = out.report.metrics;
  m["stationary_cov"] = to_json(theory);
  m["long_run_cov"] = to_json(spec.long_run_covariance());
  m["cov_first"] = to_json(first);
  m["cov_last"] = to_json(last);
  out.report.flag("stationary_cov", err <= threshold, err, threshold);

  std::ostringstream os(std::ios::binary);
  if (c.out_format == "csv") {
    write_csv(os, batch);
    out.artifacts.push_back({"paths.csv", os.str()});
  } else {
    write_binary(os, batch);
    out.artifacts.push_back({"paths.osdb", os.str()});
  }
  return out;
}

Outcome estimate_alpha(const RunConfig& c) {
  Outcome out;
  const ProcessSpec spec = c.process_spec();
  const PathSource source(spec, c.length, c.replicas, c.seed);
  std::vector<std::size_t> lags = c.lags;
  std::sort(lags.begin(), lags.end());
  lags.erase(std::unique(lags.begin(), lags.end()), lags.end());

  Json alpha = Json::object();
  std::map<std::size_t, double> values;
  std::ostringstream csv;
  csv << "lag,alpha\n";
  for (std::size_t lag : lags) {
    const double a = alpha_estimate(source, lag);
    values[lag] = a;
    alpha[std::to_string(lag)] = a;
    csv << lag << ',' << format_double(a) << '\n';
  }
  out.report.metrics["alpha"] = alpha;
  out.report.metrics["binomial_resolution"] = 1.0 / std::sqrt(static_cast<double>(c.replicas));

  // Independence beyond the dependence range forces α = 0.
  std::optional<std::size_t> range;
  if (spec.kind == ProcessKind::iid) range = 0;
  if (spec.kind == ProcessKind::ma) range = spec.theta.size() - 1;
  if (range) {
    for (const auto& [lag, a] : values)
      if (lag > *range) out.report.flag("alpha_zero_lag_" + std::to_string(lag), a <= 0.01, a, 0.01);
  } else if (values.size() >= 2) {
    const double lo = values.begin()->second;
    const double hi = values.rbegin()->second;
    out.report.flag("alpha_decays", hi < lo, hi, lo);
  }
  out.artifacts.push_back({"alpha.csv", csv.str()});
  return out;
}

void add_normalizer_flags(Report& r, const NormalizerDiagnostics& diag) {
  r.metrics["ratio_bound"] = diag.ratio_bound;
  r.metrics["norms"] = diag.norms;
  r.metrics["det_index"] = diag.det_index;
  r.metrics["diagnostics"] = {{"norm_not_decreasing", diag.norm_not_decreasing},
                              {"det_ratio_unstable", diag.det_ratio_unstable},
                              {"ratio_bound_growing", diag.ratio_bound_growing}};
  r.flag("ratio_bound", diag.ratio_bound <= 2.0, diag.ratio_bound, 2.0);
  r.flag("normalizer_diagnostics", !diag.flagged(), diag.flagged() ? 1.0 : 0.0, 0.0);
}

Outcome clt_run(const RunConfig& c) {
  Outcome out;
  const ProcessSpec spec = c.process_spec();
  const PathSource source(spec, c.length, c.replicas, c.seed);
  CltOptions opt;
  opt.checkpoints = c.checkpoints;
  opt.grid_step = c.grid_step;
  opt.eps_grid = c.eps_grid;
  const CltRun run = run_clt(source, opt);
  auto& r = out.report;

  Json per = Json::array();
  for (std::size_t k = 0; k < run.metrics.size(); ++k) {
    const auto& m = run.metrics[k];
    Json inf = Json::object();
    for (std::size_t e = 0; e < run.infinitesimality.eps.size(); ++e)
      inf[key_of(run.infinitesimality.eps[e])] = run.infinitesimality.value[k][e];
    per.push_back({{"n", m.n},
                   {"energy", m.distance.energy},
                   {"energy_null_mean", m.distance.null_mean},
                   {"energy_null_q95", m.distance.null_q95},
                   {"cf_sup", m.distance.cf_sup},
                   {"mean_norm", m.mean_norm},
                   {"cov_error", m.cov_error},
                   {"ratio_bound", run.diagnostics.ratio_bound_prefix.at(k)},
                   {"infinitesimality", inf}});
  }
  r.metrics["checkpoints"] = per;
  r.metrics["schedule_breaks"] = run.schedule.breaks;
  r.metrics["schedule_heldout_margin"] = run.schedule_heldout_margin;
  r.metrics["block_sum_worst_margin"] = run.blocks.worst_margin;

  const auto& final = run.metrics.back();
  r.flag("energy_within_null_band", final.distance.within_band, final.distance.energy,
         final.distance.null_q95);
  for (std::size_t e = 0; e < run.infinitesimality.eps.size(); ++e) {
    double worst_rise = 0.0;
    for (std::size_t k = 1; k < run.metrics.size(); ++k)
      worst_rise = std::max(worst_rise, run.infinitesimality.value[k][e] - run.infinitesimality.value[k - 1][e]);
    const double last = run.infinitesimality.value.back()[e];
    const std::string tag = "@" + key_of(run.infinitesimality.eps[e]);
    r.flag("infinitesimality_decreasing" + tag, worst_rise <= 0.0, worst_rise, 0.0);
    r.flag("infinitesimality_final" + tag, last < 0.01, last, 0.01);
  }
  add_normalizer_flags(r, run.diagnostics);
  r.flag("block_sums", run.blocks.pass, run.blocks.worst_margin, 0.0);
  r.flag("schedule_heldout", run.schedule_heldout_ok, run.schedule_heldout_margin, 0.0);

  out.artifacts.push_back({"normalizers.json", normalizers_to_json(run.dense).dump(1) + "\n"});
  if (c.out_format == "csv") {
    std::ostringstream os;
    write_clt_metrics_csv(os, run);
    out.artifacts.push_back({"metrics.csv", os.str()});
  }
  return out;
}

Json certificate_json(const GeneratorExtraction& g) {
  Json kc = Json::array();
  for (const auto& k : g.kc)
    kc.push_back({{"n", k.n}, {"m", k.m}, {"det", k.det}, {"next_det", k.next_det}, {"k", to_json(k.k)}});
  Json margins = Json::object();
  for (const auto& [t, v] : g.certificate.membership_margins) margins[key_of(t)] = v;
  return {{"c", g.c},
          {"q", to_json(g.certificate.q)},
          {"spectral_margin", g.certificate.spectral_margin},
          {"membership_margins", margins},
          {"consistency_residual", g.certificate.consistency_residual},
          {"skipped_w", g.skipped_w},
          {"kc", kc}};
}

Outcome extract_q(const RunConfig& c) {
  Outcome out;
  NormalizerTrack track;
  if (!c.normalizers_file.empty()) {
    track = normalizers_from_json(read_json_file(c.normalizers_file));
    if (!track.size() || track.a.front().rows() != c.dim)
      throw Error(ErrorKind::config, "normalizer file dimension differs from dim");
  } else {
    const PathSource source(c.process_spec(), c.length, c.replicas, c.seed);
    track = fit_normalizers(source, normalizer_grid(c.checkpoints, c.grid_step));
  }
  auto& r = out.report;
  Json certs = Json::array();
  std::optional<Mat> q;
  for (double cv : c.c_values) {
    const GeneratorExtraction g = generator_from_normalizers(track, cv, c.w_values, c.t_grid);
    certs.push_back(certificate_json(g));
    const auto& cert = g.certificate;
    double worst = 1e300;
    for (const auto& [t, v] : cert.membership_margins) worst = std::min(worst, v);
    const std::string tag = "@c=" + key_of(cv);
    r.flag("spectral_margin" + tag, cert.spectral_margin > 0.0, cert.spectral_margin, 0.0);
    r.flag("membership_margin" + tag, worst >= -kMarginTol, worst, -kMarginTol);
    if (!q) q = cert.q;
  }
  r.metrics["certificates"] = certs;
  r.metrics["q"] = to_json(*q);
  out.artifacts.push_back({"q.json", Json{{"q", to_json(*q)}}.dump(1) + "\n"});
  return out;
}

// Stationary moments of ∫ e^{-sQ} dY for drift b, diffusion D and
// compound-Poisson jumps N(m, C) at rate λ.
std::pair<Vec, Mat> stationary_moments(const RunConfig& c) {
  Vec drift = c.levy_drift;
  Mat second = c.levy_diffusion;
  if (c.levy_jump_rate > 0.0) {
    drift += c.levy_jump_rate * c.levy_jump_mean;
    second += c.levy_jump_rate * (c.levy_jump_cov + c.levy_jump_mean * c.levy_jump_mean.transpose());
  }
  return {c.q.partialPivLu().solve(drift), solve_continuous_lyapunov(c.q, second)};
}

void add_moment_flags(Report& r, const Mat& x, const Vec& mean, const Mat& cov) {
  const double n = static_cast<double>(x.rows());
  const Mat sample_cov = rowwise_cov(x);
  const Vec sample_mean = x.colwise().mean().transpose();
  const double cov_err = (sample_cov - cov).cwiseAbs().maxCoeff();
  const double threshold = 10.0 * std::max(1.0, cov.cwiseAbs().maxCoeff()) / std::sqrt(n);
  r.metrics["stationary_mean"] = to_json(mean);
  r.metrics["stationary_cov"] = to_json(cov);
  r.metrics["sample_mean"] = to_json(sample_mean);
  r.metrics["sample_cov"] = to_json(sample_cov);
  r.flag("sample_cov", cov_err <= threshold, cov_err, threshold);
}

Outcome osd_sample(const RunConfig& c) {
  Outcome out;
  const OsdSampler sampler = make_osd_sampler(c.q, c.levy_spec(), c.step);
  const Mat x = sample_osd(sampler, c.samples, c.seed);
  const auto [mean, cov] = stationary_moments(c);
  auto& r = out.report;
  r.metrics["horizon"] = sampler.horizon;
  add_moment_flags(r, x, mean, cov);
  const auto grid = default_cf_grid(c.dim);
  const double residual = factorization_check(x, c.q, c.t, sampler, grid, c.seed);
  r.metrics["factorization_residual"] = residual;
  r.flag("factorization", residual <= 0.05, residual, 0.05);
  add_samples(out, c, x);
  return out;
}

Mat load_q(const RunConfig& c) {
  if (c.q_file.empty()) return c.q;
  const Json j = read_json_file(c.q_file);
  Mat q;
  if (j.contains("q")) q = matrix_from_json(j.at("q"));
  else if (j.contains("metrics") && j.at("metrics").contains("q")) q = matrix_from_json(j.at("metrics").at("q"));
  else throw Error(ErrorKind::io, c.q_file + ": no q matrix");
  if (q.rows() != c.dim || q.cols() != c.dim)
    throw Error(ErrorKind::config, c.q_file + ": q is not " + std::to_string(c.dim) + "x" + std::to_string(c.dim));
  return q;
}

Outcome verify(const RunConfig& c, const Mat& q) {
  Outcome out;
  auto& r = out.report;
  const int d = c.dim;
  const GaussianLaw law = GaussianLaw::standard(d);
  r.metrics["q"] = to_json(q);
  r.metrics["spectral_margin"] = min_real_eigenvalue(q);

  std::set<double> ts(c.t_grid.begin(), c.t_grid.end());
  ts.insert(c.t);
  Json margins = Json::object();
  double worst = 1e300;
  for (double t : ts) {
    const double m = gaussian_membership(law, mat_exp(q, -t)).margin;
    margins[key_of(t)] = m;
    worst = std::min(worst, m);
  }
  r.metrics["membership_margins"] = margins;
  r.flag("membership_margin", worst >= -kMarginTol, worst, -kMarginTol);

  // Gaussian driver with stationary law N(0, I).
  Mat diffusion = symmetrize(q + q.transpose());
  const double dm = psd_margin(diffusion);
  r.metrics["diffusion"] = to_json(diffusion);
  r.flag("diffusion_psd", dm >= -kMarginTol, dm, -kMarginTol);
  if (min_real_eigenvalue(q) <= 0.0 || dm < -kMarginTol) {
    r.flag("spectral_margin", false, min_real_eigenvalue(q), 0.0);
    return out;
  }
  if (dm < 0.0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(diffusion);
    diffusion = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
    diffusion = symmetrize(diffusion);
  }
  const OsdSampler sampler = make_osd_sampler(q, LevySpec::gaussian(diffusion), c.step);
  const Mat x = sample_osd(sampler, c.samples, c.seed);
  add_moment_flags(r, x, Vec::Zero(d), Mat::Identity(d, d));
  const auto grid = default_cf_grid(d);
  const double residual = factorization_check(x, q, c.t, sampler, grid, c.seed);
  const double control = factorization_check(x, 0.1 * q, c.t, sampler, grid, c.seed);
  r.metrics["factorization_residual"] = residual;
  r.metrics["negative_control_residual"] = control;
  r.flag("factorization", residual <= 0.05, residual, 0.05);
  return out;
}

void write_outputs(const RunConfig& c, const Outcome& out) {
  if (c.out_path.empty()) {
    std::cout << out.report.dump();
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(c.out_path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + c.out_path + ": " + ec.message());
  const std::filesystem::path dir(c.out_path);
  write_text_file((dir / "report.json").string(), out.report.dump());
  for (const auto& a : out.artifacts) write_text_file((dir / a.name).string(), a.content);
}

}  // namespace

Outcome run_experiment(const RunConfig& config) {
  Outcome out;
  switch (config.experiment) {
    case Experiment::simulate_mixing: out = simulate_mixing(config); break;
    case Experiment::estimate_alpha: out = estimate_alpha(config); break;
    case Experiment::clt_run: out = clt_run(config); break;
    case Experiment::osd_sample: out = osd_sample(config); break;
    case Experiment::extract_q: out = extract_q(config); break;
    case Experiment::verify: out = verify(config, load_q(config)); break;
  }
  out.report.experiment = to_string(config.experiment);
  out.report.config = to_key_values(config);
  return out;
}

int run(const RunConfig& input) {
  RunConfig config;
  try {
    input.validate();
    config = input.resolved();
    config.validate();
    if (config.experiment != Experiment::osd_sample && config.experiment != Experiment::verify)
      (void)config.process_spec();
    if (config.experiment == Experiment::osd_sample) {
      (void)config.levy_spec();
      if (!(min_real_eigenvalue(config.q) > 0.0))
        throw Error(ErrorKind::config, "q must have eigenvalues with positive real part");
    }
  } catch (const Error& e) {
    std::cerr << "osdtool: invalid configuration: " << e.what() << "\n";
    return exit_code::invalid_config;
  }

  Outcome out;
  try {
    out = run_experiment(config);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) {
      std::cerr << "osdtool: invalid configuration: " << e.what() << "\n";
      return exit_code::invalid_config;
    }
    std::cerr << "osdtool: " << to_string(config.experiment) << " failed (" << to_string(e.kind())
              << "): " << e.what() << "\n";
    out = Outcome{};
    out.report.experiment = to_string(config.experiment);
    out.report.config = to_key_values(config);
    out.report.metrics["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
    out.report.flag("completed", false, 0.0, 1.0);
  }

  try {
    write_outputs(config, out);
  } catch (const Error& e) {
    std::cerr << "osdtool: " << e.what() << "\n";
    return exit_code::failed;
  }
  for (const auto& f : out.report.flags)
    if (!f.pass)
      std::cerr << "osdtool: flag " << f.name << " failed (value " << format_double(f.value)
                << ", threshold " << format_double(f.threshold) << ")\n";
  return out.report.pass() ? exit_code::ok : exit_code::failed;
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Operator-selfdecomposable limits of strongly mixing sequences"};
  app.set_version_flag("--version", version_string());

  std::string experiment;
  app.add_option("experiment", experiment,
                 "simulate-mixing | estimate-alpha | clt-run | osd-sample | extract-q | verify");

  // Flag values are collected as config keys so they layer over the file.
  std::map<std::string, std::string> flags;
  auto kv_option = [&](CLI::Option_group* g, const std::string& name, const std::string& key,
                       const std::string& help) {
    return g->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };

  std::string config_path;
  unsigned threads = 0;
  std::vector<std::string> sets;
  bool print_config = false;

  auto* common = app.add_option_group("Common");
  common->add_option("--config", config_path, "key = value configuration file");
  kv_option(common, "--seed", "seed", "random seed");
  kv_option(common, "--dim", "dim", "dimension d");
  kv_option(common, "--replicas", "replicas", "Monte Carlo replicas R");
  kv_option(common, "--out", "out_path", "output directory (stdout report if omitted)");
  kv_option(common, "--format", "out_format", "data format: csv, or json (binary dumps)")
      ->check(CLI::IsMember({"csv", "json"}));
  common->add_option("--threads", threads, "worker threads (0: all cores)");
  common->add_option("--set", sets, "override any config key: KEY=VALUE");
  common->add_flag("--print-config", print_config, "print the resolved config and exit");

  auto* process = app.add_option_group("Process");
  kv_option(process, "--process", "process.kind", "iid | ma | ar1");
  kv_option(process, "--b", "process.b", "AR(1) matrix, rows separated by ';'");
  kv_option(process, "--cov", "process.cov", "innovation covariance");
  kv_option(process, "--length", "length", "path length n");

  auto* alpha = app.add_option_group("estimate-alpha");
  kv_option(alpha, "--lag", "lags", "lag or comma-separated lags");

  auto* clt = app.add_option_group("clt-run / extract-q");
  kv_option(clt, "--checkpoints", "checkpoints", "comma-separated checkpoints");
  kv_option(clt, "--grid-step", "grid_step", "dense normalizer grid spacing");
  kv_option(clt, "--eps", "eps", "infinitesimality levels");
  kv_option(clt, "--normalizers", "normalizers_file", "normalizers.json from clt-run");
  kv_option(clt, "--c-values", "c_values", "det levels c for K_c");
  kv_option(clt, "--w-values", "w_values", "w values for C_w");
  kv_option(clt, "--t-grid", "t_grid", "t values for membership margins");

  auto* bdlp = app.add_option_group("osd-sample / verify");
  kv_option(bdlp, "--q", "q", "generator Q");
  kv_option(bdlp, "--q-file", "q_file", "q.json from extract-q");
  kv_option(bdlp, "--t", "t", "factorization time t");
  kv_option(bdlp, "--samples", "samples", "number of draws N");
  kv_option(bdlp, "--step", "step", "OU step h");
  kv_option(bdlp, "--drift", "levy.drift", "Levy drift b");
  kv_option(bdlp, "--diffusion", "levy.diffusion", "Brownian covariance D");
  kv_option(bdlp, "--jump-rate", "levy.jump_rate", "compound-Poisson rate");
  kv_option(bdlp, "--jump-mean", "levy.jump_mean", "jump mean");
  kv_option(bdlp, "--jump-cov", "levy.jump_cov", "jump covariance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::ok : exit_code::invalid_config;
  }

  RunConfig config;
  try {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorKind::config, "cannot open " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      kv = parse_key_values(ss.str());
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::config, "--set expects KEY=VALUE");
      flags[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& [k, v] : flags) kv[k] = v;
    if (!experiment.empty()) kv["experiment"] = experiment;
    if (!kv.count("experiment"))
      throw Error(ErrorKind::config, "no experiment given (positional argument or config key)");
    config = apply_key_values(RunConfig{}, kv);
    if (print_config) {
      config.validate();
      std::cout << render(config.resolved());
      return exit_code::ok;
    }
  } catch (const Error& e) {
    std::cerr << "osdtool: invalid configuration: " << e.what() << "\n";
    return exit_code::invalid_config;
  }
  set_thread_count(threads);
  return run(config);
}

}  // namespace osd
