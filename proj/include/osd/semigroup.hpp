#pragma once

// Decomposability-semigroup machinery for full Gaussian laws: membership
// oracles, kernel idempotents of monothetic semigroups, and the
// constructions that lead from a normalizer sequence to a generator Q with
// {e^{-tQ}} inside the decomposability semigroup.

#include "osd/linalg.hpp"

#include <cstddef>
#include <map>
#include <vector>

namespace osd {

/// N(mean, cov) with positive-definite cov.
struct GaussianLaw {
  Vec mean;
  Mat cov;

  static GaussianLaw standard(int d);
  static GaussianLaw centered(Mat cov);

  int dim() const noexcept { return static_cast<int>(mean.size()); }
  /// psd_margin(cov) > 0.
  bool full() const;
  /// Throws Error(precondition) unless cov is symmetric (1e-12) and full.
  void validate() const;
};

/// Outcome of testing X ≐ AX + Y with Y independent.
struct MembershipResult {
  bool member = false;
  double margin = 0.0;  // psd margin of residual_cov
  Vec residual_mean;    // (I − A)·mean
  Mat residual_cov;     // cov − A·cov·Aᵀ
};

MembershipResult gaussian_membership(const GaussianLaw& law, const Mat& a,
                                     double tol = kDefaultTol);

/// ||cov − A·cov·Aᵀ|| ≤ tol: A maps the law onto a shift of itself.
bool symmetry_membership(const GaussianLaw& law, const Mat& a, double tol = kDefaultTol);

/// cov = J cov Jᵀ + (I−J) cov (I−J)ᵀ.
bool check_idempotent_factorization(const GaussianLaw& law, const Idempotent& j,
                                    double tol = kDefaultTol);
/// Three-way split K + (J − K) + (I − J) = I for K under J.
bool check_idempotent_factorization(const GaussianLaw& law, const Idempotent& k,
                                    const Idempotent& j, double tol = kDefaultTol);

struct KernelResult {
  Idempotent unit;
  bool converged = false;
  int iterations = 0;           // matrix squarings performed
  unsigned long long power = 1; // exponent k of the final T^k
};

/// Unit of the kernel group of the closed semigroup generated by T: the
/// projection onto the peripheral (|λ| = 1) invariant subspace along the
/// complementary invariant subspace. Throws Error(precondition) with
/// "not conditionally compact" when the powers of T grow without bound.
KernelResult numakura_kernel(const Mat& t, double tol = 1e-6, int max_iter = 10000);

/// Result of the det_J-level crossing construction.
struct KcResult {
  Mat k;                  // A_m · A_n^{-1}
  std::size_t n = 0;      // base index
  std::size_t m = 0;      // last index with det_J(A_m A_n^{-1}) ≥ c
  double det = 0.0;       // det_J of k
  double next_det = 0.0;  // det_J at the index after m (< c)
  double increment = 0.0; // ||A_{m+} A_n^{-1} − A_m A_n^{-1}||
};

/// Normalizers A_{index[i]} = mats[i], indices strictly increasing.
/// With n = 0 the largest base index that admits a crossing is used.
KcResult extract_kc(const std::vector<std::size_t>& indices, const std::vector<Mat>& mats,
                    const Idempotent& j, double c, std::size_t n = 0);
/// Consecutive normalizers: mats[i] is A_{i+1}.
KcResult extract_kc(const std::vector<Mat>& mats, const Idempotent& j, double c,
                    std::size_t n = 0);

/// s·J with s the largest scalar ≤ 1 − 1/n for which s·J ∈ D(law).
Mat approach_idempotent(const GaussianLaw& law, const Idempotent& j, std::size_t n,
                        double tol = kDefaultTol);

/// Mutually annihilating idempotents in D(law) summing to I; the whitened
/// coordinate projections conjugated back by cov^{1/2}.
std::vector<Idempotent> primitive_decomposition(const GaussianLaw& law);

struct CwBlock {
  Idempotent j;
  Mat t;  // J T = T J = T, 0 < det_J T < 1
};

/// ⌊(−log det_J T)^{-1}⌋.
unsigned long long cw_steps(const CwBlock& block);

/// Σ_r J_r T_r^{⌊w·d_r⌋} J_r; the identity at w = 0.
Mat build_cw(const std::vector<CwBlock>& blocks, double w);

/// ⌊a + b⌋ − ⌊a⌋ − ⌊b⌋ ∈ {0, 1}.
int integer_part_gap(double a, double b);

struct GeneratorCertificate {
  Mat q;
  double spectral_margin = 0.0;             // min Re λ(Q)
  std::map<double, double> membership_margins;  // t ↦ margin of e^{-tQ}
  double consistency_residual = 0.0;        // max_w ||e^{-wQ} − C_w||
  bool consistent = false;                  // residual ≤ threshold
  bool holds(double margin_tol = 1e-6) const;
};

/// Q = mean_w −(1/w)·log C_w over w > 0. Throws Error(degenerate) with
/// "degenerate semigroup sample" on singular C_w or det C_w ≥ 1.
GeneratorCertificate extract_generator(const std::map<double, Mat>& cw_samples,
                                       const GaussianLaw& law, const std::vector<double>& t_grid,
                                       double residual_threshold = 1e-6);

}  // namespace osd
