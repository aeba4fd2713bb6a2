// Acceptance suite: one PASS/FAIL line per criterion.

#include "osd/bdlp.hpp"
#include "osd/clt.hpp"
#include "osd/error.hpp"
#include "osd/mixing.hpp"
#include "osd/semigroup.hpp"
#include "testutil.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>

using namespace osd;
using namespace testutil;

namespace {

struct Line {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int id, const char* title, const std::function<void(Line&)>& body) {
  Line line;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(line);
  } catch (const std::exception& e) {
    line.pass = false;
    line.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!line.pass) ++failures;
  std::printf("%s %d %s:%s (%.1f s)\n", line.pass ? "PASS" : "FAIL", id, title, line.detail.str().c_str(), secs);
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Mat default_ar_b() {
  Mat b(2, 2);
  b << 0.5, 0.2, 0.0, 0.3;
  return b;
}

Mat rotation(double theta) {
  Mat r(2, 2);
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

Mat sample_cov(const Mat& x) {
  const Vec mean = x.colwise().mean().transpose();
  const Mat c = x.rowwise() - mean.transpose();
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

std::vector<CwBlock> scalar_blocks(int q, double n) {
  std::vector<CwBlock> blocks;
  for (int r = 0; r < q; ++r) {
    std::vector<int> mask(static_cast<std::size_t>(q), 0);
    mask[static_cast<std::size_t>(r)] = 1;
    const auto j = Idempotent::diagonal(mask);
    blocks.push_back({j, (1.0 - 1.0 / n) * j.mat()});
  }
  return blocks;
}

// Counts trials of `body` that return false.
int run_trials(int trials, std::uint64_t salt, const std::function<bool(std::mt19937_64&)>& body) {
  int bad = 0;
  for (int trial = 0; trial < trials; ++trial) {
    auto g = rng_for(static_cast<std::uint64_t>(trial), salt);
    if (!body(g)) ++bad;
  }
  return bad;
}

Mat bounded(std::mt19937_64& g, int d, double max_norm) {
  Mat a = randn(g, d, d);
  return a * (uniform(g, 0.0, max_norm) / std::max(op_norm(a), 1e-12));
}

Mat principal_generator(std::mt19937_64& g, int d) {
  Mat blocks = Mat::Zero(d, d);
  for (int i = 0; i < d;) {
    if (i + 1 < d && uniform(g, 0, 1) < 0.5) {
      const double re = uniform(g, -0.9, 0.9);
      const double im = uniform(g, -1.4, 1.4);
      blocks(i, i) = blocks(i + 1, i + 1) = re;
      blocks(i, i + 1) = im;
      blocks(i + 1, i) = -im;
      i += 2;
    } else {
      blocks(i, i) = uniform(g, -0.9, 0.9);
      ++i;
    }
  }
  const Mat p = random_invertible(g, d, 0.3);
  return p * blocks * p.inverse();
}

GaussianLaw random_law(std::mt19937_64& g, int d) { return GaussianLaw{randn(g, d, 1).col(0), random_spd(g, d)}; }

Mat sigma_contraction(std::mt19937_64& g, const Mat& cov) {
  const int d = static_cast<int>(cov.rows());
  return sqrt_spd(cov) * bounded(g, d, 1.0) * inv_sqrt_spd(cov);
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

int main() {
  constexpr std::uint64_t kSeed = 7;
  std::optional<CltRun> theorem_run;

  criterion(1, "AR(1) matrix-normalized CLT", [&](Line& l) {
    const auto t0 = std::chrono::steady_clock::now();
    const PathSource source(ProcessSpec::ar1(default_ar_b(), GaussianLaw::standard(2)), 1u << 14, 20000, kSeed);
    CltOptions opt;
    opt.checkpoints = power_of_two_checkpoints(8, 14);
    opt.eps_grid = {0.25};
    theorem_run = run_clt(source, opt);
    const double secs = elapsed_since(t0);
    const auto& run = *theorem_run;
    const auto& last = run.metrics.back().distance;
    l.detail << " energy=" << last.energy << " q95=" << last.null_q95;
    l.require(last.energy <= last.null_q95, "energy within null 95% band at n = 16384");
    bool decreasing = true;
    for (std::size_t k = 1; k < run.track.size(); ++k)
      decreasing = decreasing && run.infinitesimality.at(k, 0.25) <= run.infinitesimality.at(k - 1, 0.25);
    const double final_inf = run.infinitesimality.at(run.track.size() - 1, 0.25);
    l.detail << " infinitesimality_final=" << final_inf << " ratio_bound=" << run.diagnostics.ratio_bound;
    l.require(decreasing, "infinitesimality at 0.25 decreasing");
    l.require(final_inf < 0.01, "infinitesimality final < 0.01");
    l.require(run.diagnostics.ratio_bound <= 2.0, "ratio_bound <= 2");
    l.detail << " runtime=" << secs << "s";
    l.require(secs <= 120.0, "runtime <= 2 min");
  });

  criterion(2, "generator certificate from CLT normalizers", [&](Line& l) {
    if (!theorem_run) throw Error(ErrorKind::precondition, "criterion 1 produced no normalizers");
    const std::vector<double> t_grid = {0.25, 0.5, 1, 2, 4};
    for (double c : {0.9, 0.8, 0.7}) {
      const auto g = generator_from_normalizers(theorem_run->dense, c, {0.25, 0.5, 1.0, 2.0}, t_grid);
      double worst = 1e300;
      for (double t : t_grid) worst = std::min(worst, g.certificate.membership_margins.at(t));
      l.detail << " c=" << c << ":spectral=" << g.certificate.spectral_margin << ",membership=" << worst;
      l.require(g.certificate.spectral_margin > 0.0, "spectral_margin > 0");
      l.require(worst >= -1e-6, "membership margin >= -1e-6");
    }
  });

  criterion(3, "K_c closed form", [&](Line& l) {
    std::vector<Mat> mats;
    for (std::size_t n = 1; n <= 20002; ++n) mats.push_back(Mat::Identity(2, 2) / std::sqrt(static_cast<double>(n)));
    const auto kc = extract_kc(mats, Idempotent::identity(2), 0.5, 10000);
    l.detail << " det=" << kc.det << " m=" << kc.m;
    l.require(std::abs(kc.det - 0.5) <= 1e-3, "det within 0.5 +- 1e-3");
  });

  criterion(4, "C_w laws", [&](Line& l) {
    const double n = 1e4;
    const double c1 = build_cw(scalar_blocks(1, n), 1.0)(0, 0);
    l.detail << " |C_1 - e^-1|=" << std::abs(c1 - std::exp(-1.0));
    l.require(std::abs(c1 - std::exp(-1.0)) <= 1e-3, "scalar C_1");
    double worst_det = 0.0;
    double worst_semi = 0.0;
    for (int q = 1; q <= 3; ++q) {
      const auto blocks = scalar_blocks(q, n);
      for (double w : {0.5, 1.0, 2.0})
        worst_det = std::max(worst_det, std::abs(build_cw(blocks, w).determinant() - std::exp(-q * w)));
      const Mat half = build_cw(blocks, 0.5);
      worst_semi = std::max(worst_semi, op_norm(half * half - build_cw(blocks, 1.0)));
    }
    l.detail << " det_err=" << worst_det << " semigroup_err=" << worst_semi;
    l.require(worst_det <= 1e-3, "det law");
    l.require(worst_semi <= 1e-2, "semigroup residual");
  });

  criterion(5, "Numakura kernels", [&](Line& l) {
    const auto contraction = numakura_kernel(0.5 * Mat::Identity(2, 2), 1e-6, 10000);
    const auto rot = numakura_kernel(rotation(1.0), 1e-6, 10000);
    Mat mixed = Mat::Zero(3, 3);
    mixed(0, 0) = 0.9;
    mixed.bottomRightCorner(2, 2) = rotation(1.0);
    const auto res = numakura_kernel(mixed, 1e-6, 10000);
    Mat expected = Mat::Identity(3, 3);
    expected(0, 0) = 0.0;
    const double e1 = max_abs(contraction.unit.mat());
    const double e2 = max_abs(rot.unit.mat() - Mat::Identity(2, 2));
    const double e3 = max_abs(res.unit.mat() - expected);
    l.detail << " errors=" << e1 << "," << e2 << "," << e3;
    for (const auto* r : {&contraction, &rot, &res}) {
      l.require(r->converged, "converged");
      l.require(r->iterations <= 10000, "iterations <= 1e4");
    }
    l.require(e1 <= 1e-6 && e2 <= 1e-6 && e3 <= 1e-6, "unit within 1e-6");
  });

  criterion(6, "alpha-mixing estimator", [&](Line& l) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t R = 100000;
    const std::size_t length = 24;
    const PathSource iid(ProcessSpec::iid(GaussianLaw::standard(2)), length, R, kSeed);
    const PathSource ma(ProcessSpec::ma({Mat::Identity(2, 2), Mat::Identity(2, 2)}, GaussianLaw::standard(2)),
                        length, R, kSeed);
    const PathSource ar(ProcessSpec::ar1(0.5 * Mat::Identity(2, 2), GaussianLaw::standard(2)), length, R, kSeed);
    double iid_max = 0.0;
    for (std::size_t lag : {1, 2, 4, 8}) iid_max = std::max(iid_max, alpha_estimate(iid, lag));
    double ma_max = 0.0;
    for (std::size_t lag : {2, 4, 8}) ma_max = std::max(ma_max, alpha_estimate(ma, lag));
    const double ar1 = alpha_estimate(ar, 1);
    const double ar8 = alpha_estimate(ar, 8);
    const double secs = elapsed_since(t0);
    l.detail << " iid_max=" << iid_max << " ma_lag>=2_max=" << ma_max << " ar_lag1=" << ar1 << " ar_lag8=" << ar8
             << " runtime=" << secs << "s";
    l.require(iid_max <= 0.01, "IID alpha <= 0.01");
    l.require(ma_max <= 0.01, "MA(1) alpha <= 0.01 at lag >= 2");
    l.require(ar8 < ar1, "AR(1) alpha decays");
    l.require(secs <= 60.0, "runtime <= 1 min");
  });

  criterion(7, "characteristic-function dependence bound", [&](Line& l) {
    const std::size_t R = 20000;
    const std::size_t n = 256;
    const std::vector<std::pair<const char*, ProcessSpec>> specs = {
        {"iid", ProcessSpec::iid(GaussianLaw::standard(2))},
        {"ma1", ProcessSpec::ma({Mat::Identity(2, 2), Mat::Identity(2, 2)}, GaussianLaw::standard(2))},
        {"ar1", ProcessSpec::ar1(default_ar_b(), GaussianLaw::standard(2))}};
    const auto grid = default_cf_grid(2);
    for (const auto& [name, spec] : specs) {
      const PathSource source(spec, n, R, kSeed);
      const auto track = fit_normalizers(source, {n});
      l.detail << " " << name << ":";
      for (std::size_t q : {1, 4, 16}) {
        const auto r = cf_independence_residual(source, track, n, q, grid);
        l.detail << " q" << q << "=" << r.residual << "/" << r.bound + r.slack;
        l.require(r.residual <= r.bound + r.slack, std::string(name) + " q=" + std::to_string(q));
      }
    }
  });

  criterion(8, "BDLP representation", [&](Line& l) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t N = 100000;
    const Mat q = Mat::Identity(2, 2);
    const auto grid = default_cf_grid(2);
    const auto gauss = make_osd_sampler(q, LevySpec::gaussian(Mat::Identity(2, 2)));
    const Mat x = sample_osd(gauss, N, kSeed);
    const double cov_err = max_abs(sample_cov(x) - 0.5 * Mat::Identity(2, 2));
    const double fact_gauss = factorization_check(x, q, 1.0, gauss, grid, kSeed);
    const double control = factorization_check(x, 0.1 * q, 1.0, gauss, grid, kSeed);
    const auto jumps = make_osd_sampler(q, LevySpec::compound_poisson(1.0, GaussianLaw::standard(2)));
    const Mat y = sample_osd(jumps, N, kSeed);
    const double fact_jumps = factorization_check(y, q, 1.0, jumps, grid, kSeed);
    const double secs = elapsed_since(t0);
    l.detail << " cov_err=" << cov_err << "/" << 10.0 / std::sqrt(static_cast<double>(N)) << " gaussian=" << fact_gauss
             << " compound_poisson=" << fact_jumps << " control=" << control << " runtime=" << secs << "s";
    l.require(cov_err <= 10.0 / std::sqrt(static_cast<double>(N)), "covariance within 10/sqrt(N) of I/2");
    l.require(fact_gauss <= 0.05, "Gaussian factorization <= 0.05");
    l.require(fact_jumps <= 0.05, "compound-Poisson factorization <= 0.05");
    l.require(control > 0.15, "negative control > 0.15");
    l.require(secs <= 120.0, "runtime <= 2 min");
  });

  criterion(9, "algebra invariants", [&](Line& l) {
    constexpr int kTrials = 1000;
    auto suite = [&](const char* name, std::uint64_t salt, const std::function<bool(std::mt19937_64&)>& body) {
      const int bad = run_trials(kTrials, salt, body);
      if (bad) l.detail << " " << name << "=" << bad << "/" << kTrials;
      l.require(bad == 0, name);
    };
    suite("exp_semigroup", 101, [](auto& g) {
      const int d = uniform_int(g, 1, 5);
      const Mat a = bounded(g, d, 2.0);
      const double t = uniform(g, 0, 2), s = uniform(g, 0, 2);
      return op_norm(mat_exp(a, t) * mat_exp(a, s) - mat_exp(a, t + s)) <= 1e-9;
    });
    suite("det_trace", 102, [](auto& g) {
      const int d = uniform_int(g, 1, 5);
      const Mat a = bounded(g, d, 2.0);
      const double t = uniform(g, -2, 2);
      const double expected = std::exp(t * a.trace());
      return std::abs(mat_exp(a, t).determinant() - expected) <= 1e-9 * expected;
    });
    suite("det_sub_multiplicative", 103, [](auto& g) {
      const int d = uniform_int(g, 2, 5);
      const Idempotent j(random_idempotent(g, d, uniform_int(g, 1, d - 1)));
      const Mat a = randn(g, d, d), b = randn(g, d, d);
      return close_rel(det_sub(j, a * j.mat() * b), det_sub(j, a) * det_sub(j, b), 1e-9);
    });
    suite("block_determinant", 104, [](auto& g) {
      const int d = uniform_int(g, 2, 5);
      const Mat basis = random_orthogonal(g, d).leftCols(uniform_int(g, 1, d - 1));
      const Idempotent j(basis * basis.transpose());
      const Idempotent jc = j.complement();
      const Mat a = randn(g, d, d), b = randn(g, d, d);
      return close_rel((j.mat() * a * j.mat() + jc.mat() * b * jc.mat()).determinant(), det_sub(j, a) * det_sub(jc, b),
                       1e-9);
    });
    suite("log_exp", 105, [](auto& g) {
      const Mat q = principal_generator(g, uniform_int(g, 1, 4));
      return max_abs(mat_log(mat_exp(q, 1.0)) - q) <= 1e-8;
    });
    suite("zero_identity_members", 106, [](auto& g) {
      const int d = uniform_int(g, 1, 5);
      const auto law = random_law(g, d);
      return gaussian_membership(law, Mat::Zero(d, d)).member && gaussian_membership(law, Mat::Identity(d, d)).member;
    });
    suite("closure", 107, [](auto& g) {
      const auto law = random_law(g, uniform_int(g, 1, 5));
      const Mat a = sigma_contraction(g, law.cov), b = sigma_contraction(g, law.cov);
      return gaussian_membership(law, a).member && gaussian_membership(law, b).member &&
             gaussian_membership(law, a * b).member;
    });
    suite("boundedness", 108, [](auto& g) {
      const int d = uniform_int(g, 1, 5);
      const auto law = random_law(g, d);
      Eigen::SelfAdjointEigenSolver<Mat> es(law.cov);
      const double bound = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
      for (const Mat& a : {Mat(randn(g, d, d, 0.6)), sigma_contraction(g, law.cov)}) {
        if (!gaussian_membership(law, a).member) continue;
        const double n = op_norm(a);
        if (n * n > bound * (1.0 + 1e-8)) return false;
      }
      return true;
    });
    suite("largest_group", 109, [](auto& g) {
      const int d = uniform_int(g, 1, 5);
      const auto law = random_law(g, d);
      const Mat a = sqrt_spd(law.cov) * random_orthogonal(g, d) * inv_sqrt_spd(law.cov);
      if (!symmetry_membership(law, a, 1e-7 * max_abs(law.cov))) return false;
      return gaussian_membership(law, a).margin >= -kDefaultTol &&
             gaussian_membership(law, a.inverse()).margin >= -kDefaultTol;
    });
    suite("numakura_unit", 110, [](auto& g) {
      const int rot_blocks = uniform_int(g, 0, 2);
      const int contract = uniform_int(g, 0, 2);
      const int d = 2 * rot_blocks + contract;
      if (d == 0) return true;
      Mat core = Mat::Zero(d, d);
      for (int b = 0; b < rot_blocks; ++b) core.block(2 * b, 2 * b, 2, 2) = rotation(uniform(g, 0.2, 3.0));
      for (int c = 0; c < contract; ++c) core(2 * rot_blocks + c, 2 * rot_blocks + c) = uniform(g, -0.8, 0.8);
      const Mat p = random_invertible(g, d, 0.2);
      const Mat t = p * core * p.inverse();
      const auto res = numakura_kernel(t, 1e-6, 10000);
      const Mat& u = res.unit.mat();
      const Mat tk = mat_pow(t, res.power);
      return res.converged && op_norm(u * u - u) <= 1e-6 && op_norm(tk * u - u * tk) <= 1e-6;
    });
    suite("generator_certificate", 111, [](auto& g) {
      const int d = uniform_int(g, 1, 4);
      const Mat skew = randn(g, d, d, 0.2);
      const Mat q = random_spd(g, d, 0.2, 2.0) + (skew - skew.transpose());
      // Keep every w·Q on the principal branch of the logarithm.
      for (const auto& ev : eigenvalues(q))
        if (2.0 * std::abs(ev.imag()) >= 3.0) return true;
      std::map<double, Mat> cw;
      for (double w : {0.25, 0.5, 1.0, 2.0}) cw[w] = mat_exp(-q, w);
      const auto cert = extract_generator(cw, GaussianLaw::standard(d), {0.25, 0.5, 1, 2, 4});
      return cert.spectral_margin > 0.0 && cert.holds(1e-6);
    });
    // build_cw determinant law on the scalar-block family: n·error bounded.
    double worst = 0.0;
    for (double n : {1e2, 1e3, 1e4, 1e5})
      for (int q = 1; q <= 3; ++q)
        for (double w : {0.5, 1.0, 2.0})
          worst = std::max(worst, n * std::abs(build_cw(scalar_blocks(q, n), w).determinant() - std::exp(-q * w)));
    l.detail << " cw_det_n_err=" << worst;
    l.require(worst <= 10.0, "det C_w law O(1/n)");

    int bad_gap = 0;
    for (int a = -128; a <= 128; ++a)
      for (int b = -128; b <= 128; ++b) {
        const int gap = integer_part_gap(a / 16.0, b / 16.0);
        if (gap != 0 && gap != 1) ++bad_gap;
      }
    l.detail << " integer_part_gap_bad=" << bad_gap;
    l.require(bad_gap == 0, "integer_part_gap in {0, 1}");
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
