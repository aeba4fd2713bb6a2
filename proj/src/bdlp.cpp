#include "osd/bdlp.hpp"

#include "osd/error.hpp"
#include "osd/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace osd {

LevySpec LevySpec::zero(int d) {
  LevySpec s;
  s.drift = Vec::Zero(d);
  s.diffusion = Mat::Zero(d, d);
  return s;
}

LevySpec LevySpec::gaussian(Mat diffusion) {
  LevySpec s = zero(static_cast<int>(diffusion.rows()));
  s.diffusion = std::move(diffusion);
  return s;
}

LevySpec LevySpec::compound_poisson(double rate, GaussianLaw jump_law) {
  LevySpec s = zero(jump_law.dim());
  s.jump_rate = rate;
  s.jump = gaussian_jumps(std::move(jump_law));
  return s;
}

void LevySpec::validate() const {
  const auto d = drift.size();
  if (d < 1 || diffusion.rows() != d || diffusion.cols() != d)
    throw Error(ErrorKind::config, "LevySpec: drift/diffusion dimensions disagree");
  if ((diffusion - diffusion.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, diffusion.cwiseAbs().maxCoeff()))
    throw Error(ErrorKind::config, "LevySpec: diffusion is not symmetric");
  if (psd_margin(diffusion) < -1e-12) throw Error(ErrorKind::config, "LevySpec: diffusion is not psd");
  if (!(jump_rate >= 0.0) || !std::isfinite(jump_rate)) throw Error(ErrorKind::config, "LevySpec: jump rate must be >= 0");
  if (jump_rate > 0.0 && !jump) throw Error(ErrorKind::config, "LevySpec: jump law missing");
}

JumpSampler gaussian_jumps(GaussianLaw law) {
  law.validate();
  const Mat chol = Eigen::LLT<Mat>(law.cov).matrixL();
  return [mean = law.mean, chol](Rng& rng) {
    NormalSource normal;
    return Vec(mean + chol * normal.draw(rng, mean.size()));
  };
}

Vec levy_increment(const LevySpec& spec, double h, Rng& rng) {
  if (!(h > 0.0)) throw Error(ErrorKind::domain, "levy_increment: h must be positive");
  spec.validate();
  NormalSource normal;
  Vec inc = h * spec.drift + sqrt_spd(h * spec.diffusion) * normal.draw(rng, spec.drift.size());
  if (spec.jump_rate > 0.0) {
    std::poisson_distribution<long> count(spec.jump_rate * h);
    for (long i = count(rng); i > 0; --i) inc += spec.jump(rng);
  }
  return inc;
}

Mat ou_gaussian_covariance(const Mat& q, const Mat& diffusion, double h) {
  const auto d = q.rows();
  Mat block = Mat::Zero(2 * d, 2 * d);
  block.topLeftCorner(d, d) = q;
  block.topRightCorner(d, d) = diffusion;
  block.bottomRightCorner(d, d) = -q.transpose();
  const Mat e = mat_exp(block, h);
  // bottom-right = e^{-hQᵀ}, so its transpose is e^{-hQ}.
  return symmetrize(e.bottomRightCorner(d, d).transpose() * e.topRightCorner(d, d));
}

Mat ou_drift_integral(const Mat& q, double h) {
  const auto d = q.rows();
  Mat block = Mat::Zero(2 * d, 2 * d);
  block.topLeftCorner(d, d) = -q;
  block.topRightCorner(d, d) = Mat::Identity(d, d);
  return mat_exp(block, h).topRightCorner(d, d);
}

OuStepper::OuStepper(Mat q, LevySpec spec, double h) : q_(std::move(q)), spec_(std::move(spec)), h_(h) {
  if (!(h_ > 0.0)) throw Error(ErrorKind::domain, "ou_step: h must be positive");
  spec_.validate();
  if (q_.rows() != spec_.dim() || q_.cols() != spec_.dim())
    throw Error(ErrorKind::config, "ou_step: Q and Lévy dimensions disagree");
  transition_ = mat_exp(q_, -h_);
  cov_ = ou_gaussian_covariance(q_, spec_.diffusion, h_);
  chol_ = sqrt_spd(cov_);
  drift_ = ou_drift_integral(q_, h_) * spec_.drift;
}

namespace {

class StepState {
 public:
  explicit StepState(Eigen::Index d) : noise_(d), scratch_(d) {}

  void advance(const OuStepper& s, const Mat& q, const LevySpec& spec, Vec& z, Rng& rng) {
    normal_.fill(rng, noise_);
    scratch_.noalias() = s.transition() * z;
    scratch_ += s.drift_part();
    scratch_.noalias() += s.noise_factor() * noise_;
    if (spec.jump_rate > 0.0) {
      std::poisson_distribution<long> count(spec.jump_rate * s.h());
      std::uniform_real_distribution<double> unif(0.0, s.h());
      for (long i = count(rng); i > 0; --i) {
        const double tau = s.h() - unif(rng);  // in (0, h]
        const Vec jump = spec.jump(rng);
        scratch_.noalias() += mat_exp(q, -(s.h() - tau)) * jump;
      }
    }
    z.swap(scratch_);
  }


 private:
  NormalSource normal_;
  Vec noise_;
  Vec scratch_;
};

}  // namespace

Vec OuStepper::step(const Vec& z, Rng& rng) const {
  StepState state(z.size());
  Vec out = z;
  state.advance(*this, q_, spec_, out, rng);
  return out;
}

Vec OuStepper::run_from_zero(std::size_t steps, Rng& rng) const {
  const auto d = q_.rows();
  StepState state(d);
  Vec z = Vec::Zero(d);
  for (std::size_t i = 0; i < steps; ++i) state.advance(*this, q_, spec_, z, rng);
  return z;
}

Vec ou_step(const Mat& q, double h, const Vec& z, const LevySpec& spec, Rng& rng) {
  return OuStepper(q, spec, h).step(z, rng);
}

// ---------------------------------------------------------------------------

void OsdSampler::validate() const {
  levy.validate();
  if (!(h > 0.0)) throw Error(ErrorKind::config, "OsdSampler: step must be positive");
  if (!(min_real_eigenvalue(q) > 0.0)) throw Error(ErrorKind::config, "OsdSampler: Q needs min Re λ > 0");
  if (!(horizon > 0.0) || op_norm(mat_exp(q, -horizon)) > 1e-6)
    throw Error(ErrorKind::config, "OsdSampler: horizon too short, ||exp(-TQ)|| > 1e-6");
}

OsdSampler make_osd_sampler(Mat q, LevySpec levy, double h) {
  OsdSampler s;
  s.q = std::move(q);
  s.levy = std::move(levy);
  s.h = h;
  const double margin = min_real_eigenvalue(s.q);
  if (!(margin > 0.0)) throw Error(ErrorKind::config, "OsdSampler: Q needs min Re λ > 0");
  s.horizon = 20.0 / margin;
  for (int i = 0; i < 20 && op_norm(mat_exp(s.q, -s.horizon)) > 1e-6; ++i) s.horizon *= 1.5;
  s.validate();
  return s;
}

namespace {

Mat run_many(const OuStepper& stepper, std::size_t steps, std::size_t count, std::uint64_t seed, Stream stream) {
  const auto d = stepper.transition().rows();
  Mat out(static_cast<Eigen::Index>(count), d);
  parallel_chunks(count, thread_count(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      Rng rng = make_rng(seed, stream, i);
      out.row(static_cast<Eigen::Index>(i)) = stepper.run_from_zero(steps, rng).transpose();
    }
  });
  return out;
}

}  // namespace

Mat sample_osd(const OsdSampler& sampler, std::size_t count, std::uint64_t seed) {
  sampler.validate();
  const auto steps = static_cast<std::size_t>(std::ceil(sampler.horizon / sampler.h - 1e-9));
  const OuStepper stepper(sampler.q, sampler.levy, sampler.h);
  return run_many(stepper, steps, count, seed, Stream::osd);
}

Mat sample_nu(const OsdSampler& sampler, double t, std::size_t count, std::uint64_t seed) {
  if (!(t > 0.0)) throw Error(ErrorKind::domain, "sample_nu: t must be positive");
  const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t / sampler.h - 1e-9)));
  const OuStepper stepper(sampler.q, sampler.levy, t / static_cast<double>(steps));
  return run_many(stepper, steps, count, seed, Stream::nu);
}

double factorization_residual(const Mat& samples, const Mat& q, double t, const Mat& nu_samples,
                              const std::vector<Vec>& z_grid) {
  const Mat contraction_t = mat_exp(q, -t).transpose();
  double worst = 0.0;
  for (const auto& z : z_grid) {
    auto cf = [](const Mat& x, const Vec& u) {
      const Vec phase = x * u;
      double re = 0.0, im = 0.0;
      for (Eigen::Index i = 0; i < phase.size(); ++i) {
        re += std::cos(phase(i));
        im += std::sin(phase(i));
      }
      const double n = static_cast<double>(std::max<Eigen::Index>(1, x.rows()));
      return std::complex<double>(re / n, im / n);
    };
    const auto lhs = cf(samples, z);
    const auto rhs = cf(samples, contraction_t * z) * cf(nu_samples, z);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

double factorization_check(const Mat& samples, const Mat& q, double t, const OsdSampler& sampler,
                           const std::vector<Vec>& z_grid, std::uint64_t seed) {
  if (!(t > 0.0)) throw Error(ErrorKind::domain, "factorization_check: t must be positive");
  const Mat nu = sample_nu(sampler, t, static_cast<std::size_t>(samples.rows()), seed);
  return factorization_residual(samples, q, t, nu, z_grid);
}

}  // namespace osd
