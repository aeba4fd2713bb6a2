#include "osd/linalg.hpp"

#include "osd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace osd {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::magnitude: return "magnitude";
    case ErrorKind::spectrum: return "spectrum";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::horizon: return "horizon";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

namespace {

double norm1(const Mat& a) {
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

void require_square(const Mat& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << a.rows()
       << "x" << a.cols();
    throw Error(ErrorKind::domain, os.str());
  }
}

// Denman–Beavers iteration for the principal square root.
Mat sqrt_db(const Mat& a) {
  const auto d = a.rows();
  Mat y = a;
  Mat z = Mat::Identity(d, d);
  for (int it = 0; it < 100; ++it) {
    const Mat y_inv = y.partialPivLu().inverse();
    const Mat z_inv = z.partialPivLu().inverse();
    Mat y_next = 0.5 * (y + z_inv);
    Mat z_next = 0.5 * (z + y_inv);
    const double change = norm1(y_next - y);
    y = std::move(y_next);
    z = std::move(z_next);
    if (change <= 1e-15 * norm1(y)) break;
  }
  return y;
}

}  // namespace

bool all_finite(const Mat& a) { return a.allFinite(); }

double op_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  const Mat b = a.transpose() * a;
  const auto n = b.cols();
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.1 * static_cast<double>(i);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vec w = b * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / nw;
    if (std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  // Rayleigh quotient on the final iterate.
  lambda = std::max(lambda, v.dot(b * v));
  return std::sqrt(std::max(lambda, 0.0));
}

Mat mat_exp(const Mat& a, double t) {
  require_square(a, "mat_exp");
  const auto d = a.rows();
  if (!std::isfinite(t) || !a.allFinite())
    throw Error(ErrorKind::domain, "mat_exp: non-finite input");
  if (t == 0.0) return Mat::Identity(d, d);
  const Mat m = t * a;
  const double nrm = norm1(m);
  if (!std::isfinite(nrm))
    throw Error(ErrorKind::magnitude, "mat_exp: ||tA|| is not finite");
  int squarings = 0;
  if (nrm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
  const Mat x = m / std::ldexp(1.0, squarings);

  Mat result = Mat::Identity(d, d);
  Mat term = Mat::Identity(d, d);
  for (int k = 1; k <= 30; ++k) {
    term = term * x / static_cast<double>(k);
    result += term;
    if (norm1(term) <= 1e-18 * norm1(result)) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  if (!result.allFinite()) {
    std::ostringstream os;
    os << "mat_exp: result overflows (||tA||_1 = " << nrm << ")";
    throw Error(ErrorKind::magnitude, os.str());
  }
  return result;
}

Mat mat_log(const Mat& a) {
  require_square(a, "mat_log");
  if (!a.allFinite()) throw Error(ErrorKind::domain, "mat_log: non-finite input");
  const auto d = a.rows();
  const double scale = std::max(1.0, norm1(a));
  for (const auto& lambda : eigenvalues(a)) {
    const double mag = std::abs(lambda);
    const bool singular = mag <= 1e-14 * scale;
    const bool negative_real =
        lambda.real() <= 0.0 && std::abs(lambda.imag()) <= 1e-12 * std::max(mag, 1e-300);
    if (singular || negative_real)
      throw Error(ErrorKind::spectrum, "log not principal-branch computable");
  }

  const Mat id = Mat::Identity(d, d);
  Mat x = a;
  int roots = 0;
  while (norm1(x - id) > 0.25) {
    if (roots == 64)
      throw Error(ErrorKind::spectrum, "log not principal-branch computable");
    x = sqrt_db(x);
    ++roots;
  }

  // log X = 2 atanh(Z), Z = (X − I)(X + I)^{-1}
  const Mat z = (x + id).partialPivLu().solve(x - id);
  const Mat z2 = z * z;
  Mat power = z;
  Mat sum = z;
  for (int k = 1; k < 200; ++k) {
    power = power * z2;
    const Mat term = power / static_cast<double>(2 * k + 1);
    sum += term;
    if (norm1(term) <= 1e-18 * std::max(norm1(sum), 1e-300)) break;
  }
  return std::ldexp(2.0, roots) * sum;
}

Mat mat_pow(const Mat& a, unsigned long long k) {
  require_square(a, "mat_pow");
  Mat result = Mat::Identity(a.rows(), a.cols());
  Mat base = a;
  while (k > 0) {
    if (k & 1ULL) result = result * base;
    k >>= 1ULL;
    if (k > 0) base = base * base;
  }
  return result;
}

std::vector<std::complex<double>> eigenvalues(const Mat& a) {
  require_square(a, "eigenvalues");
  Eigen::EigenSolver<Mat> solver(a, false);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::spectrum, "eigenvalues: real Schur reduction failed");
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

double spectral_radius(const Mat& a) {
  double r = 0.0;
  for (const auto& l : eigenvalues(a)) r = std::max(r, std::abs(l));
  return r;
}

double min_real_eigenvalue(const Mat& a) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& l : eigenvalues(a)) m = std::min(m, l.real());
  return m;
}

double psd_margin(const Mat& s) {
  require_square(s, "psd_margin");
  Eigen::SelfAdjointEigenSolver<Mat> solver(symmetrize(s), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

Mat sqrt_spd(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(symmetrize(s));
  const Vec ev = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
}

Mat inv_sqrt_spd(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(symmetrize(s));
  if (solver.eigenvalues().minCoeff() <= 0.0)
    throw Error(ErrorKind::degenerate, "inv_sqrt_spd: matrix is not positive definite");
  const Vec ev = solver.eigenvalues().cwiseSqrt().cwiseInverse();
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
}

Mat polar_orthogonal(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

Mat range_basis(const Mat& a, double pivot_tol) {
  Eigen::ColPivHouseholderQR<Mat> qr(a);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  const auto diag = std::min(r.rows(), r.cols());
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < diag; ++i)
    if (std::abs(r(i, i)) > pivot_tol) ++rank;
  const Mat q = qr.householderQ();
  return q.leftCols(rank);
}

Mat solve_discrete_lyapunov(const Mat& b, const Mat& s) {
  require_square(b, "solve_discrete_lyapunov");
  const auto d = b.rows();
  const auto n = d * d;
  Mat kron(n, n);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) kron.block(i * d, j * d, d, d) = b(i, j) * b;
  const Mat lhs = Mat::Identity(n, n) - kron;
  const Vec rhs = Eigen::Map<const Vec>(s.data(), n);
  Eigen::FullPivLU<Mat> lu(lhs);
  if (!lu.isInvertible())
    throw Error(ErrorKind::degenerate, "solve_discrete_lyapunov: 1 is an eigenvalue of B⊗B");
  const Vec x = lu.solve(rhs);
  return symmetrize(Eigen::Map<const Mat>(x.data(), d, d));
}

Mat solve_continuous_lyapunov(const Mat& q, const Mat& dmat) {
  require_square(q, "solve_continuous_lyapunov");
  const auto d = q.rows();
  const auto n = d * d;
  const Mat id = Mat::Identity(d, d);
  Mat lhs = Mat::Zero(n, n);
  // vec(QΣ) = (I⊗Q) vec Σ, vec(ΣQᵀ) = (Q⊗I) vec Σ
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      lhs.block(i * d, j * d, d, d) = id(i, j) * q + q(i, j) * id;
  const Vec rhs = Eigen::Map<const Vec>(dmat.data(), n);
  Eigen::FullPivLU<Mat> lu(lhs);
  if (!lu.isInvertible())
    throw Error(ErrorKind::degenerate, "solve_continuous_lyapunov: Q and -Q share an eigenvalue");
  const Vec x = lu.solve(rhs);
  return symmetrize(Eigen::Map<const Mat>(x.data(), d, d));
}

// ---------------------------------------------------------------------------

Idempotent::Idempotent(Mat j, double tol) : mat_(std::move(j)), tol_(tol) {
  require_square(mat_, "Idempotent");
  if (!is_idempotent(mat_, tol)) {
    std::ostringstream os;
    os << "not an idempotent: ||J*J - J|| = " << op_norm(mat_ * mat_ - mat_);
    throw Error(ErrorKind::precondition, os.str());
  }
  for (const auto& l : eigenvalues(mat_))
    if (std::abs(l - 1.0) < 0.5) ++rank_;
}

Idempotent Idempotent::identity(int d) { return Idempotent(Mat::Identity(d, d)); }
Idempotent Idempotent::zero(int d) { return Idempotent(Mat::Zero(d, d)); }

Idempotent Idempotent::diagonal(const std::vector<int>& mask) {
  Vec v(static_cast<Eigen::Index>(mask.size()));
  for (std::size_t i = 0; i < mask.size(); ++i) v(static_cast<Eigen::Index>(i)) = mask[i] ? 1.0 : 0.0;
  return Idempotent(v.asDiagonal().toDenseMatrix());
}

Idempotent Idempotent::complement() const {
  return Idempotent(Mat::Identity(dim(), dim()) - mat_, tol_);
}

bool is_idempotent(const Mat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return op_norm(a * a - a) <= tol;
}

bool is_under(const Idempotent& k, const Idempotent& j, double tol) {
  const Mat& km = k.mat();
  const Mat& jm = j.mat();
  return op_norm(km - jm) > tol && op_norm(jm * km - km) <= tol &&
         op_norm(km * jm - km) <= tol;
}

double det_sub(const Idempotent& j, const Mat& a) {
  if (j.rank() == 0) throw Error(ErrorKind::degenerate, "det_J undefined on zero subspace");
  const Mat basis = range_basis(j.mat());
  if (basis.cols() == 0) throw Error(ErrorKind::degenerate, "det_J undefined on zero subspace");
  // B C = J A B with B orthonormal gives C = Bᵀ J A B.
  const Mat c = basis.transpose() * (j.mat() * a * basis);
  return c.determinant();
}

}  // namespace osd
