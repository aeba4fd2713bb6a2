#include "osd/semigroup.hpp"

#include "osd/error.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace osd {

GaussianLaw GaussianLaw::standard(int d) {
  return {Vec::Zero(d), Mat::Identity(d, d)};
}

GaussianLaw GaussianLaw::centered(Mat cov) {
  const auto d = cov.rows();
  return {Vec::Zero(d), std::move(cov)};
}

bool GaussianLaw::full() const { return psd_margin(cov) > 0.0; }

void GaussianLaw::validate() const {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size() || mean.size() < 1)
    throw Error(ErrorKind::precondition, "GaussianLaw: mean/cov dimensions disagree");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
    throw Error(ErrorKind::precondition, "GaussianLaw: covariance is not symmetric");
  if (!full()) throw Error(ErrorKind::precondition, "GaussianLaw: law is not full");
}

MembershipResult gaussian_membership(const GaussianLaw& law, const Mat& a, double tol) {
  law.validate();
  const auto d = law.cov.rows();
  MembershipResult res;
  res.residual_cov = symmetrize(law.cov - a * law.cov * a.transpose());
  res.residual_mean = (Mat::Identity(d, d) - a) * law.mean;
  res.margin = psd_margin(res.residual_cov);
  res.member = res.margin >= -tol;
  return res;
}

bool symmetry_membership(const GaussianLaw& law, const Mat& a, double tol) {
  law.validate();
  return op_norm(law.cov - a * law.cov * a.transpose()) <= tol;
}

bool check_idempotent_factorization(const GaussianLaw& law, const Idempotent& j, double tol) {
  law.validate();
  const auto d = law.cov.rows();
  const Mat& jm = j.mat();
  const Mat rest = Mat::Identity(d, d) - jm;
  const Mat split = jm * law.cov * jm.transpose() + rest * law.cov * rest.transpose();
  return op_norm(law.cov - split) <= tol;
}

bool check_idempotent_factorization(const GaussianLaw& law, const Idempotent& k,
                                    const Idempotent& j, double tol) {
  law.validate();
  if (!is_under(k, j, tol))
    throw Error(ErrorKind::precondition, "three-way factorization needs K under J");
  const auto d = law.cov.rows();
  const Mat& c = law.cov;
  const Mat mid = j.mat() - k.mat();
  const Mat rest = Mat::Identity(d, d) - j.mat();
  const Mat split = k.mat() * c * k.mat().transpose() + mid * c * mid.transpose() +
                    rest * c * rest.transpose();
  return op_norm(c - split) <= tol;
}

// ---------------------------------------------------------------------------

KernelResult numakura_kernel(const Mat& t, double tol, int max_iter) {
  if (t.rows() != t.cols() || t.rows() < 1)
    throw Error(ErrorKind::domain, "numakura_kernel: expected a square matrix");
  const auto d = t.rows();
  const double growth_limit = 1e6 * std::max(1.0, op_norm(t));
  // Peripheral singular values stay bounded below; contracting ones decay
  // geometrically. Anything under rank_cut is assigned to the contraction.
  const double rank_cut = std::sqrt(tol);
  const int max_squarings = std::min(max_iter, 62);

  // A candidate unit must survive this many further squarings: slow
  // contractions and polynomially growing blocks look stable for a while.
  constexpr int kConfirm = 20;

  Mat m = t;
  unsigned long long power = 1;
  Mat previous;
  bool have_previous = false;
  std::optional<Mat> candidate;
  int candidate_it = 0;
  unsigned long long candidate_power = 1;

  for (int it = 0; it <= max_squarings; ++it) {
    if (!m.allFinite() || op_norm(m) > growth_limit)
      throw Error(ErrorKind::precondition, "not conditionally compact: powers of T are unbounded");

    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec& sigma = svd.singularValues();
    Eigen::Index r = 0;
    while (r < sigma.size() && sigma(r) > rank_cut) ++r;
    const double tail = r < sigma.size() ? sigma(r) : 0.0;

    Mat unit = Mat::Zero(d, d);
    if (r > 0) {
      const Mat u = svd.matrixU().leftCols(r);
      const Mat v = svd.matrixV().leftCols(r);
      const Mat cross = v.transpose() * u;
      if (std::abs(cross.determinant()) > 1e-12)
        unit = u * cross.partialPivLu().solve(v.transpose());
    }

    const bool settled = tail <= 1e-2 * tol && is_idempotent(unit, tol) && op_norm(m * unit - unit * m) <= tol;
    if (settled && r == 0 && tail == 0.0) return KernelResult{Idempotent(unit, tol), true, it, power};
    if (candidate) {
      if (settled && op_norm(unit - *candidate) <= tol) {
        if (it - candidate_it >= kConfirm || it == max_squarings)
          return KernelResult{Idempotent(*candidate, tol), true, it, candidate_power};
      } else {
        candidate.reset();
      }
    }
    const bool stable = have_previous && op_norm(unit - previous) <= tol;
    if (!candidate && settled && (stable || r == 0)) {
      candidate = unit;
      candidate_it = it;
      candidate_power = power;
    }
    previous = unit;
    have_previous = true;
    if (it == max_squarings) break;
    m = m * m;
    power *= 2;
  }
  if (candidate) return KernelResult{Idempotent(*candidate, tol), true, max_squarings, candidate_power};
  Mat unit = is_idempotent(previous, tol) ? previous : Mat::Zero(d, d);
  return KernelResult{Idempotent(unit, tol), false, max_squarings, power};
}

// ---------------------------------------------------------------------------

namespace {

struct Crossing {
  bool found = false;
  KcResult result;
};

Crossing crossing_at(const std::vector<std::size_t>& indices, const std::vector<Mat>& mats,
                     const Idempotent& j, double c, std::size_t base) {
  Eigen::PartialPivLU<Mat> lu(mats[base]);
  if (std::abs(mats[base].determinant()) <= 0.0 || !lu.matrixLU().allFinite())
    throw Error(ErrorKind::degenerate, "extract_kc: normalizer is not invertible");
  const Mat base_inv = lu.inverse();

  std::size_t last = base;
  double last_det = 1.0;
  for (std::size_t p = base; p < mats.size(); ++p) {
    const double b = det_sub(j, mats[p] * base_inv);
    if (b >= c) {
      last = p;
      last_det = b;
    }
  }
  Crossing out;
  if (last + 1 >= mats.size()) return out;
  out.found = true;
  auto& r = out.result;
  r.k = mats[last] * base_inv;
  r.n = indices[base];
  r.m = indices[last];
  r.det = last_det;
  const Mat next = mats[last + 1] * base_inv;
  r.next_det = det_sub(j, next);
  r.increment = op_norm(next - r.k);
  return out;
}

}  // namespace

KcResult extract_kc(const std::vector<std::size_t>& indices, const std::vector<Mat>& mats,
                    const Idempotent& j, double c, std::size_t n) {
  if (!(c > 0.0 && c < 1.0)) throw Error(ErrorKind::domain, "extract_kc: c must lie in (0, 1)");
  if (indices.size() != mats.size() || mats.empty())
    throw Error(ErrorKind::domain, "extract_kc: indices and normalizers disagree");
  for (std::size_t i = 1; i < indices.size(); ++i)
    if (indices[i] <= indices[i - 1])
      throw Error(ErrorKind::domain, "extract_kc: indices must increase");

  if (n != 0) {
    const auto it = std::lower_bound(indices.begin(), indices.end(), n);
    if (it == indices.end() || *it != n)
      throw Error(ErrorKind::domain, "extract_kc: base index not among the normalizers");
    const auto crossing = crossing_at(indices, mats, j, c, static_cast<std::size_t>(it - indices.begin()));
    if (!crossing.found) throw Error(ErrorKind::horizon, "insufficient normalizer horizon");
    return crossing.result;
  }
  for (std::size_t p = mats.size(); p-- > 0;) {
    const auto crossing = crossing_at(indices, mats, j, c, p);
    if (crossing.found) return crossing.result;
  }
  throw Error(ErrorKind::horizon, "insufficient normalizer horizon");
}

KcResult extract_kc(const std::vector<Mat>& mats, const Idempotent& j, double c, std::size_t n) {
  std::vector<std::size_t> indices(mats.size());
  for (std::size_t i = 0; i < mats.size(); ++i) indices[i] = i + 1;
  return extract_kc(indices, mats, j, c, n);
}

// ---------------------------------------------------------------------------

Mat approach_idempotent(const GaussianLaw& law, const Idempotent& j, std::size_t n, double tol) {
  if (n == 0) throw Error(ErrorKind::domain, "approach_idempotent: n must be positive");
  if (!gaussian_membership(law, j.mat(), tol).member)
    throw Error(ErrorKind::precondition, "approach_idempotent: J is not in D(law)");
  const double top = 1.0 - 1.0 / static_cast<double>(n);
  if (gaussian_membership(law, top * j.mat(), tol).member) return top * j.mat();
  double lo = 0.0;
  double hi = top;
  for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gaussian_membership(law, mid * j.mat(), tol).member)
      lo = mid;
    else
      hi = mid;
  }
  return lo * j.mat();
}

std::vector<Idempotent> primitive_decomposition(const GaussianLaw& law) {
  law.validate();
  const int d = law.dim();
  const Mat root = sqrt_spd(law.cov);
  const Mat root_inv = inv_sqrt_spd(law.cov);
  Eigen::SelfAdjointEigenSolver<Mat> es(law.cov, Eigen::EigenvaluesOnly);
  const double cond = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  const double tol = std::max(kDefaultTol, 1e-12 * cond);
  std::vector<Idempotent> out;
  out.reserve(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    Mat e = Mat::Zero(d, d);
    e(i, i) = 1.0;
    out.emplace_back(root * e * root_inv, tol);
  }
  return out;
}

// ---------------------------------------------------------------------------

unsigned long long cw_steps(const CwBlock& block) {
  const double det = det_sub(block.j, block.t);
  if (!(det > 0.0 && det < 1.0)) {
    std::ostringstream os;
    os << "build_cw: det_J T = " << det << " outside (0, 1)";
    throw Error(ErrorKind::precondition, os.str());
  }
  return static_cast<unsigned long long>(std::floor(1.0 / -std::log(det)));
}

Mat build_cw(const std::vector<CwBlock>& blocks, double w) {
  if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::domain, "build_cw: w must be non-negative");
  if (blocks.empty()) throw Error(ErrorKind::domain, "build_cw: no blocks");
  const int d = blocks.front().j.dim();
  Mat c = Mat::Zero(d, d);
  for (const auto& b : blocks) {
    const auto steps = cw_steps(b);
    if (w == 0.0) continue;
    const auto k = static_cast<unsigned long long>(std::floor(w * static_cast<double>(steps)));
    c += b.j.mat() * mat_pow(b.t, k) * b.j.mat();
  }
  if (w == 0.0) return Mat::Identity(d, d);
  return c;
}

int integer_part_gap(double a, double b) {
  return static_cast<int>(std::floor(a + b) - std::floor(a) - std::floor(b));
}

// ---------------------------------------------------------------------------

bool GeneratorCertificate::holds(double margin_tol) const {
  if (!(spectral_margin > 0.0)) return false;
  for (const auto& [t, m] : membership_margins)
    if (m < -margin_tol) return false;
  return true;
}

GeneratorCertificate extract_generator(const std::map<double, Mat>& cw_samples,
                                       const GaussianLaw& law, const std::vector<double>& t_grid,
                                       double residual_threshold) {
  std::vector<std::pair<double, Mat>> logs;
  for (const auto& [w, c] : cw_samples) {
    if (w <= 0.0) continue;
    if (!c.allFinite() || std::abs(c.determinant()) <= 1e-12)
      throw Error(ErrorKind::degenerate, "degenerate semigroup sample");
    if (c.determinant() >= 1.0)
      throw Error(ErrorKind::degenerate, "degenerate semigroup sample: det C_w >= 1 for w > 0");
    try {
      logs.emplace_back(w, mat_log(c));
    } catch (const Error& e) {
      throw Error(ErrorKind::degenerate, std::string("degenerate semigroup sample: ") + e.what());
    }
  }
  if (logs.size() < 2)
    throw Error(ErrorKind::domain, "extract_generator: need at least two distinct w > 0");

  const auto d = logs.front().second.rows();
  GeneratorCertificate cert;
  cert.q = Mat::Zero(d, d);
  for (const auto& [w, l] : logs) cert.q -= l / w;
  cert.q /= static_cast<double>(logs.size());

  for (const auto& [w, c] : cw_samples) {
    if (w <= 0.0) continue;
    cert.consistency_residual = std::max(cert.consistency_residual, op_norm(mat_exp(-cert.q, w) - c));
  }
  cert.consistent = cert.consistency_residual <= residual_threshold;
  cert.spectral_margin = min_real_eigenvalue(cert.q);
  for (double t : t_grid)
    cert.membership_margins[t] = gaussian_membership(law, mat_exp(-cert.q, t)).margin;
  return cert;
}

}  // namespace osd
