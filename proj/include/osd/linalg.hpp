#pragma once

// Dense small-dimension matrix algebra. Everything here is a pure function
// of its arguments.

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace osd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kDefaultTol = 1e-8;

/// Operator 2-norm by power iteration on AᵀA.
double op_norm(const Mat& a);

/// Frobenius norm. Within a factor √d of op_norm.
inline double fro_norm(const Mat& a) { return a.norm(); }

bool all_finite(const Mat& a);

/// e^{tA} by scaling and squaring with a truncated Taylor series.
/// Throws Error(magnitude) when the result is not finite.
Mat mat_exp(const Mat& a, double t = 1.0);

/// Principal logarithm by inverse scaling and squaring. Throws
/// Error(spectrum) when A has an eigenvalue on the closed negative real axis.
Mat mat_log(const Mat& a);

/// A^k for k ≥ 0 by binary powering.
Mat mat_pow(const Mat& a, unsigned long long k);

std::vector<std::complex<double>> eigenvalues(const Mat& a);
double spectral_radius(const Mat& a);
/// min Re λ over the eigenvalues of A.
double min_real_eigenvalue(const Mat& a);

/// Smallest eigenvalue of the symmetric part (S + Sᵀ)/2.
double psd_margin(const Mat& s);

inline Mat symmetrize(const Mat& s) { return 0.5 * (s + s.transpose()); }

/// Symmetric square root and inverse square root of an SPD matrix.
Mat sqrt_spd(const Mat& s);
Mat inv_sqrt_spd(const Mat& s);

/// Orthogonal polar factor U Vᵀ of M = U S Vᵀ.
Mat polar_orthogonal(const Mat& m);

/// Orthonormal basis of range(A): column-pivoted Householder QR, keeping
/// columns whose pivot exceeds `pivot_tol`.
Mat range_basis(const Mat& a, double pivot_tol = 1e-10);

/// Solve Σ = BΣBᵀ + S (discrete Lyapunov / Stein equation).
Mat solve_discrete_lyapunov(const Mat& b, const Mat& s);
/// Solve QΣ + ΣQᵀ = D.
Mat solve_continuous_lyapunov(const Mat& q, const Mat& d);

/// A J² = J projector onto J(R^d), along ker J.
class Idempotent {
 public:
  /// Throws Error(precondition) if ||J² − J|| > tol.
  explicit Idempotent(Mat j, double tol = kDefaultTol);

  static Idempotent identity(int d);
  static Idempotent zero(int d);
  /// Coordinate projection diag(mask).
  static Idempotent diagonal(const std::vector<int>& mask);

  const Mat& mat() const noexcept { return mat_; }
  int rank() const noexcept { return rank_; }
  int dim() const noexcept { return static_cast<int>(mat_.rows()); }
  double tol() const noexcept { return tol_; }

  /// I − J.
  Idempotent complement() const;

 private:
  Mat mat_;
  int rank_ = 0;
  double tol_ = kDefaultTol;
};

bool is_idempotent(const Mat& a, double tol = kDefaultTol);

/// K ≠ J, JK = K and KJ = K.
bool is_under(const Idempotent& k, const Idempotent& j, double tol = kDefaultTol);

/// Determinant of the restriction of J·A to range(J). Basis independent.
/// Throws Error(degenerate) on the zero idempotent.
double det_sub(const Idempotent& j, const Mat& a);

}  // namespace osd
