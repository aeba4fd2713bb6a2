#pragma once

// The random-integral representation μ = L(∫₀^∞ e^{-tQ} dY(t)) for a Lévy
// driver Y with drift, Brownian part and compound-Poisson jumps, simulated
// by exact-in-law stepping of the operator Ornstein–Uhlenbeck process
// dZ = −QZ dt + dY.

#include "osd/linalg.hpp"
#include "osd/rng.hpp"
#include "osd/semigroup.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace osd {

using JumpSampler = std::function<Vec(Rng&)>;

struct LevySpec {
  Vec drift;
  Mat diffusion;           // symmetric psd
  double jump_rate = 0.0;  // λ
  JumpSampler jump;        // required when jump_rate > 0

  static LevySpec zero(int d);
  static LevySpec gaussian(Mat diffusion);
  static LevySpec compound_poisson(double rate, GaussianLaw jump_law);

  int dim() const noexcept { return static_cast<int>(drift.size()); }
  void validate() const;
};

/// Gaussian jumps N(mean, cov).
JumpSampler gaussian_jumps(GaussianLaw law);

/// Y(t + h) − Y(t).
Vec levy_increment(const LevySpec& spec, double h, Rng& rng);

/// ∫₀^h e^{-sQ} D e^{-sQᵀ} ds via the augmented block exponential.
Mat ou_gaussian_covariance(const Mat& q, const Mat& diffusion, double h);
/// ∫₀^h e^{-sQ} ds.
Mat ou_drift_integral(const Mat& q, double h);

/// Precomputed one-step transition for step h.
class OuStepper {
 public:
  OuStepper(Mat q, LevySpec spec, double h);

  /// z' = e^{-hQ} z + ξ_h.
  Vec step(const Vec& z, Rng& rng) const;
  /// Runs `steps` transitions from z = 0.
  Vec run_from_zero(std::size_t steps, Rng& rng) const;

  const Mat& transition() const noexcept { return transition_; }
  const Mat& gaussian_covariance() const noexcept { return cov_; }
  const Vec& drift_part() const noexcept { return drift_; }
  /// Symmetric square root of the Gaussian-part covariance.
  const Mat& noise_factor() const noexcept { return chol_; }
  double h() const noexcept { return h_; }

 private:
  Mat q_;
  LevySpec spec_;
  double h_;
  Mat transition_;
  Mat cov_;
  Mat chol_;
  Vec drift_;
};

Vec ou_step(const Mat& q, double h, const Vec& z, const LevySpec& spec, Rng& rng);

struct OsdSampler {
  Mat q;
  LevySpec levy;
  double h = 1.0 / 64.0;
  double horizon = 0.0;

  /// Throws Error(config) unless min Re λ(Q) > 0 and ||e^{-TQ}|| ≤ 1e-6.
  void validate() const;
};

/// Horizon 20 / min Re λ(Q), extended until ||e^{-TQ}|| ≤ 1e-6.
OsdSampler make_osd_sampler(Mat q, LevySpec levy, double h = 1.0 / 64.0);

/// N × d draws from the stationary law; draw i uses its own derived stream.
Mat sample_osd(const OsdSampler& sampler, std::size_t count, std::uint64_t seed);

/// N × d draws from ν_t = L(∫₀^t e^{-sQ} dY(s)), on a stream disjoint from
/// sample_osd's.
Mat sample_nu(const OsdSampler& sampler, double t, std::size_t count, std::uint64_t seed);

/// max_z |φ̂_μ(z) − φ̂_μ(e^{-tQᵀ} z) φ̂_{ν_t}(z)| with Q the argument
/// (corrupt it for a negative control) and ν_t drawn from the sampler.
double factorization_check(const Mat& samples, const Mat& q, double t, const OsdSampler& sampler,
                           const std::vector<Vec>& z_grid, std::uint64_t seed);
/// Same with ν_t samples supplied by the caller.
double factorization_residual(const Mat& samples, const Mat& q, double t, const Mat& nu_samples,
                              const std::vector<Vec>& z_grid);

}  // namespace osd
