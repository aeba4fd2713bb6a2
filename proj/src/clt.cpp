#include "osd/clt.hpp"

#include "osd/error.hpp"
#include "osd/parallel.hpp"
#include "osd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace osd {

PartialSums partial_sums(const PathSource& source, const std::vector<std::size_t>& checkpoints) {
  if (checkpoints.empty()) throw Error(ErrorKind::domain, "partial_sums: no checkpoints");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 1 || checkpoints[i] > source.length())
      throw Error(ErrorKind::domain, "partial_sums: checkpoint out of range");
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1])
      throw Error(ErrorKind::domain, "partial_sums: checkpoints must increase");
  }
  const std::size_t R = source.replicas();
  const std::size_t d = source.dim();
  const std::size_t n = checkpoints.back();
  PartialSums out;
  out.checkpoints = checkpoints;
  out.sums.assign(checkpoints.size(), Mat::Zero(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(d)));

  parallel_chunks(R, thread_count(), [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> path(source.length() * d);
    std::vector<double> acc(d);
    for (std::size_t r = begin; r < end; ++r) {
      source.fill(r, path);
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t next = 0;
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t k = 0; k < d; ++k) acc[k] += path[t * d + k];
        if (t + 1 == checkpoints[next]) {
          for (std::size_t k = 0; k < d; ++k)
            out.sums[next](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = acc[k];
          ++next;
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

std::size_t NormalizerTrack::index_of(std::size_t n) const {
  const auto it = std::lower_bound(checkpoints.begin(), checkpoints.end(), n);
  if (it == checkpoints.end() || *it != n) {
    std::ostringstream os;
    os << "normalizer track has no checkpoint " << n;
    throw Error(ErrorKind::domain, os.str());
  }
  return static_cast<std::size_t>(it - checkpoints.begin());
}

NormalizerTrack NormalizerTrack::subset(const std::vector<std::size_t>& keep) const {
  NormalizerTrack out;
  out.regularized = regularized;
  for (auto n : keep) {
    const auto k = index_of(n);
    out.checkpoints.push_back(n);
    out.a.push_back(a[k]);
    out.b.push_back(b[k]);
  }
  return out;
}

Mat NormalizerTrack::normalize(std::size_t k, const Mat& sums) const {
  Mat out = sums * a[k].transpose();
  out.rowwise() += b[k].transpose();
  return out;
}

namespace {

std::pair<Vec, Mat> sample_moments(const Mat& x) {
  const Vec mean = x.colwise().mean();
  const Mat centered = x.rowwise() - mean.transpose();
  const double denom = std::max<double>(1.0, static_cast<double>(x.rows()) - 1.0);
  return {mean, symmetrize(centered.transpose() * centered / denom)};
}

}  // namespace

NormalizerTrack choose_normalizers(const PartialSums& sums) {
  NormalizerTrack track;
  track.checkpoints = sums.checkpoints;
  for (const auto& s : sums.sums) {
    if (s.rows() < 2) throw Error(ErrorKind::degenerate, "degenerate sums; law not full");
    const auto [mean, cov] = sample_moments(s);
    const double scale = std::max(1.0, cov.trace());
    if (psd_margin(cov) <= 1e-12 * scale) throw Error(ErrorKind::degenerate, "degenerate sums; law not full");
    Mat a = inv_sqrt_spd(cov);
    track.b.push_back(-a * mean);
    track.a.push_back(std::move(a));
  }
  return track;
}

NormalizerTrack regularize_normalizers(const NormalizerTrack& track, const GaussianLaw& law) {
  law.validate();
  NormalizerTrack out = track;
  out.regularized = true;
  if (track.size() == 0) return out;
  Mat h = polar_orthogonal(track.a.front()).transpose();
  for (std::size_t k = 0; k < track.size(); ++k) {
    if (k > 0) {
      const Mat ratio = track.a[k] * track.a[k - 1].inverse();
      h = polar_orthogonal(h * ratio.transpose());
    }
    if (!symmetry_membership(law, h, 1e-8))
      throw Error(ErrorKind::precondition, "regularize_normalizers: frame change leaves A(law)");
    out.a[k] = h * track.a[k];
    out.b[k] = h * track.b[k];
  }
  return out;
}

NormalizerDiagnostics normalizer_diagnostics(const NormalizerTrack& track) {
  NormalizerDiagnostics diag;
  const std::size_t K = track.size();
  std::vector<Mat> inverses;
  for (const auto& a : track.a) {
    Eigen::FullPivLU<Mat> lu(a);
    if (!lu.isInvertible()) throw Error(ErrorKind::degenerate, "normalizer_diagnostics: A_n not invertible");
    inverses.push_back(lu.inverse());
    diag.norms.push_back(op_norm(a));
  }
  for (std::size_t k = 0; k + 1 < K; ++k) {
    if (diag.norms[k + 1] > diag.norms[k] * (1.0 + 1e-3)) diag.norm_not_decreasing = true;
    const double ratio = std::abs(track.a[k + 1].determinant() / track.a[k].determinant());
    const double steps = static_cast<double>(track.checkpoints[k + 1] - track.checkpoints[k]);
    diag.det_step_ratio.push_back(std::pow(ratio, 1.0 / steps));
    diag.det_index.push_back(std::log(ratio) /
                             std::log(static_cast<double>(track.checkpoints[k + 1]) /
                                      static_cast<double>(track.checkpoints[k])));
  }
  if (!diag.det_index.empty()) {
    const auto [lo, hi] = std::minmax_element(diag.det_index.begin(), diag.det_index.end());
    const double d = static_cast<double>(track.a.front().rows());
    diag.det_ratio_unstable = (*hi - *lo) > 0.25 * d;
  }
  double running = 0.0;
  for (std::size_t n = 0; n < K; ++n) {
    for (std::size_t m = 0; m <= n; ++m) running = std::max(running, op_norm(track.a[n] * inverses[m]));
    diag.ratio_bound_prefix.push_back(running);
  }
  diag.ratio_bound = running;
  if (K >= 2) {
    const double half = diag.ratio_bound_prefix[(K - 1) / 2];
    diag.ratio_bound_growing = diag.ratio_bound > 1.1 * half;
  }
  return diag;
}

// ---------------------------------------------------------------------------

DeltaSchedule delta_schedule(const TailFunction& tail, std::size_t horizon, std::size_t max_level) {
  if (horizon < 1) throw Error(ErrorKind::domain, "delta_schedule: empty horizon");
  if (max_level == 0) max_level = horizon;
  DeltaSchedule s;
  s.breaks.push_back(1);
  for (std::size_t m = 2; m <= max_level; ++m) {
    const double eps = 1.0 / static_cast<double>(m);
    std::size_t last_violation = 0;
    for (std::size_t n = horizon; n >= 1; --n) {
      if (tail(n, eps) > eps) {
        last_violation = n;
        break;
      }
    }
    const std::size_t candidate = std::max(s.breaks.back() + 1, last_violation + 1);
    if (candidate > horizon) {
      if (last_violation == horizon && s.breaks.back() < horizon &&
          tail(horizon, eps) >= tail(s.breaks.back(), eps))
        throw Error(ErrorKind::horizon, "not infinitesimal at horizon");
      break;
    }
    s.breaks.push_back(candidate);
  }
  s.delta.assign(horizon, 1.0);
  for (std::size_t i = 0; i < s.breaks.size(); ++i) {
    const std::size_t from = s.breaks[i];
    const std::size_t to = i + 1 < s.breaks.size() ? s.breaks[i + 1] : horizon + 1;
    for (std::size_t n = from; n < to; ++n) s.delta[n - 1] = 1.0 / static_cast<double>(i + 1);
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

// Per (checkpoint, j, ε) exceedance counts over a replica range.
struct ExceedanceCounts {
  std::vector<double> eps;                            // ascending
  std::vector<std::vector<std::uint32_t>> hist;       // [k][j * (E + 1) + idx]
  std::size_t replicas = 0;

  std::size_t levels() const { return eps.size() + 1; }

  void add(const ExceedanceCounts& o) {
    for (std::size_t k = 0; k < hist.size(); ++k)
      for (std::size_t i = 0; i < hist[k].size(); ++i) hist[k][i] += o.hist[k][i];
    replicas += o.replicas;
  }

  // max_j P̂(norm ≥ eps[e]) at checkpoint k
  double worst(std::size_t k, std::size_t e) const {
    const std::size_t L = levels();
    const std::size_t jn = hist[k].size() / L;
    std::uint32_t best = 0;
    for (std::size_t j = 0; j < jn; ++j) {
      std::uint32_t c = 0;
      for (std::size_t idx = e + 1; idx < L; ++idx) c += hist[k][j * L + idx];
      best = std::max(best, c);
    }
    return replicas == 0 ? 0.0 : static_cast<double>(best) / static_cast<double>(replicas);
  }
};

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }),
          v.end());
  return v;
}

ExceedanceCounts exceedance_counts(const PathSource& source, const NormalizerTrack& track,
                                   const std::vector<double>& eps_sorted, ReplicaRange range) {
  const std::size_t d = source.dim();
  const std::size_t begin = std::min(range.begin, source.replicas());
  const std::size_t end = std::min(range.end, source.replicas());
  if (track.size() == 0) throw Error(ErrorKind::domain, "infinitesimality_check: empty track");
  if (track.checkpoints.back() > source.length())
    throw Error(ErrorKind::domain, "infinitesimality_check: checkpoint beyond path length");

  ExceedanceCounts total;
  total.eps = eps_sorted;
  const std::size_t L = total.levels();
  auto blank = [&] {
    ExceedanceCounts c;
    c.eps = eps_sorted;
    for (auto n : track.checkpoints) c.hist.emplace_back(n * L, 0U);
    return c;
  };
  total = blank();

  std::vector<std::vector<double>> dense;  // row-major A_n
  for (const auto& a : track.a) {
    std::vector<double> v(d * d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) v[i * d + j] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    dense.push_back(std::move(v));
  }

  const std::size_t count = end > begin ? end - begin : 0;
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(thread_count(), count));
  std::vector<ExceedanceCounts> partial(chunks);
  parallel_chunks(count, chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
    ExceedanceCounts local = blank();
    std::vector<double> path(source.length() * d);
    std::vector<double> y(d);
    for (std::size_t r = begin + b; r < begin + e; ++r) {
      source.fill(r, path);
      for (std::size_t k = 0; k < track.size(); ++k) {
        const double* A = dense[k].data();
        auto& h = local.hist[k];
        for (std::size_t j = 0; j < track.checkpoints[k]; ++j) {
          const double* x = path.data() + j * d;
          double sq = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t l = 0; l < d; ++l) s += A[i * d + l] * x[l];
            sq += s * s;
          }
          const double norm = std::sqrt(sq);
          const auto idx = static_cast<std::size_t>(
              std::upper_bound(eps_sorted.begin(), eps_sorted.end(), norm) - eps_sorted.begin());
          ++h[j * L + idx];
        }
      }
      ++local.replicas;
    }
    partial[c] = std::move(local);
  });
  for (const auto& p : partial)
    if (!p.hist.empty()) total.add(p);
  return total;
}

std::size_t eps_position(const std::vector<double>& grid, double eps) {
  for (std::size_t e = 0; e < grid.size(); ++e)
    if (std::abs(grid[e] - eps) <= 1e-12 * std::max(1.0, eps)) return e;
  throw Error(ErrorKind::domain, "ε not on the infinitesimality grid");
}

InfinitesimalityTable table_from_counts(const ExceedanceCounts& counts, const NormalizerTrack& track,
                                        const std::vector<double>& wanted) {
  InfinitesimalityTable t;
  t.checkpoints = track.checkpoints;
  t.eps = wanted;
  t.replicas = counts.replicas;
  for (std::size_t k = 0; k < track.size(); ++k) {
    std::vector<double> row;
    for (double eps : wanted) row.push_back(counts.worst(k, eps_position(counts.eps, eps)));
    t.value.push_back(std::move(row));
  }
  return t;
}

}  // namespace

double InfinitesimalityTable::at(std::size_t k, double e) const { return value.at(k).at(eps_position(eps, e)); }

TailFunction InfinitesimalityTable::tail() const {
  return [this](std::size_t n, double e) { return at(n - 1, e); };
}

InfinitesimalityTable infinitesimality_check(const PathSource& source, const NormalizerTrack& track,
                                             const std::vector<double>& eps_grid, ReplicaRange range) {
  const auto sorted = sorted_unique(eps_grid);
  const auto counts = exceedance_counts(source, track, sorted, range);
  return table_from_counts(counts, track, eps_grid);
}

// ---------------------------------------------------------------------------

BlockSumReport block_sum_check(const PathSource& source, const NormalizerTrack& track,
                               const DeltaSchedule& schedule, const BlockSumOptions& options) {
  const std::size_t d = source.dim();
  const std::size_t R = source.replicas();
  const std::size_t K = track.size();
  if (K == 0 || schedule.horizon() == 0) throw Error(ErrorKind::domain, "block_sum_check: empty input");
  if (track.checkpoints.back() > source.length())
    throw Error(ErrorKind::domain, "block_sum_check: checkpoint beyond path length");

  struct Window {
    std::size_t start, size;
  };
  BlockSumReport report;
  std::vector<std::vector<Window>> windows(K);
  for (std::size_t k = 0; k < K; ++k) {
    BlockSumEntry e;
    e.n = track.checkpoints[k];
    e.delta = schedule.at(std::min(k + 1, schedule.horizon()));
    e.q = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(1.0 / std::sqrt(e.delta) + 1e-12)));
    e.q = std::min(e.q, e.n);
    e.bound = std::sqrt(e.delta) + 3.0 / std::sqrt(static_cast<double>(R));
    report.entries.push_back(e);
    Rng rng = make_rng(options.seed, Stream::windows, k);
    for (int w = 0; w < std::max(1, options.windows); ++w) {
      std::size_t size = options.singletons ? 1 : e.q;
      if (!options.singletons && w > 0) size = std::uniform_int_distribution<std::size_t>(1, e.q)(rng);
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, e.n - size)(rng);
      windows[k].push_back({start, size});
    }
  }

  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(thread_count(), R));
  std::vector<std::vector<std::vector<std::size_t>>> partial(chunks);
  parallel_chunks(R, chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
    std::vector<std::vector<std::size_t>> local(K);
    for (std::size_t k = 0; k < K; ++k) local[k].assign(windows[k].size(), 0);
    const std::size_t n = track.checkpoints.back();
    std::vector<double> path(source.length() * d);
    std::vector<double> prefix((n + 1) * d, 0.0);
    Vec sum(static_cast<Eigen::Index>(d));
    for (std::size_t r = b; r < e; ++r) {
      source.fill(r, path);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t i = 0; i < d; ++i) prefix[(t + 1) * d + i] = prefix[t * d + i] + path[t * d + i];
      for (std::size_t k = 0; k < K; ++k) {
        const double level = std::sqrt(report.entries[k].delta);
        for (std::size_t w = 0; w < windows[k].size(); ++w) {
          const auto& win = windows[k][w];
          for (std::size_t i = 0; i < d; ++i)
            sum(static_cast<Eigen::Index>(i)) = prefix[(win.start + win.size) * d + i] - prefix[win.start * d + i];
          if ((track.a[k] * sum).norm() >= level) ++local[k][w];
        }
      }
    }
    partial[c] = std::move(local);
  });

  report.worst_margin = -1e300;
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t worst = 0;
    for (std::size_t w = 0; w < windows[k].size(); ++w) {
      std::size_t c = 0;
      for (const auto& p : partial)
        if (!p.empty()) c += p[k][w];
      worst = std::max(worst, c);
    }
    auto& e = report.entries[k];
    e.probability = static_cast<double>(worst) / static_cast<double>(R);
    e.margin = e.probability - e.bound;
    report.worst_margin = std::max(report.worst_margin, e.margin);
  }
  report.pass = report.worst_margin <= 0.0;
  return report;
}

// ---------------------------------------------------------------------------

std::complex<double> empirical_cf(const Mat& samples, const Vec& z) {
  if (samples.rows() == 0) return {0.0, 0.0};
  const Vec phase = samples * z;
  double re = 0.0;
  double im = 0.0;
  for (Eigen::Index i = 0; i < phase.size(); ++i) {
    re += std::cos(phase(i));
    im += std::sin(phase(i));
  }
  const double n = static_cast<double>(samples.rows());
  return {re / n, im / n};
}

std::complex<double> gaussian_cf(const GaussianLaw& law, const Vec& z) {
  return std::exp(std::complex<double>(-0.5 * z.dot(law.cov * z), z.dot(law.mean)));
}

std::vector<Vec> default_cf_grid(int d) {
  std::vector<Vec> dirs;
  for (int i = 0; i < d; ++i) dirs.push_back(Vec::Unit(d, i));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      Vec v = Vec::Zero(d);
      v(i) = v(j) = 1.0 / std::sqrt(2.0);
      dirs.push_back(v);
      v(j) = -v(j);
      dirs.push_back(v);
    }
  std::vector<Vec> grid;
  for (double radius : {0.5, 1.0, 2.0})
    for (const auto& u : dirs) grid.push_back(radius * u);
  return grid;
}

double energy_distance(const Mat& x, const Mat& y) {
  auto mean_dist = [](const Mat& a, const Mat& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) s += (a.row(i) - b.row(j)).norm();
    return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
  };
  return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y);
}

LimitDistance limit_distance(const Mat& samples, const GaussianLaw& law, const std::vector<Vec>& cf_grid,
                             const EnergyOptions& options) {
  LimitDistance out;
  for (const auto& z : cf_grid)
    out.cf_sup = std::max(out.cf_sup, std::abs(empirical_cf(samples, z) - gaussian_cf(law, z)));

  const auto m = static_cast<Eigen::Index>(std::min<std::size_t>(static_cast<std::size_t>(samples.rows()), options.max_points));
  const auto d = samples.cols();
  if (m < 2) return out;
  Mat pooled(2 * m, d);
  pooled.topRows(m) = samples.topRows(m);
  {
    Rng rng = make_rng(options.seed, Stream::reference);
    NormalSource normal;
    const Mat chol = Eigen::LLT<Mat>(law.cov).matrixL();
    for (Eigen::Index i = 0; i < m; ++i) pooled.row(m + i) = (law.mean + chol * normal.draw(rng, d)).transpose();
  }
  const Eigen::Index N = 2 * m;
  std::vector<double> dist(static_cast<std::size_t>(N * N));
  double total = 0.0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j) {
      const double v = i == j ? 0.0 : (pooled.row(i) - pooled.row(j)).norm();
      dist[static_cast<std::size_t>(i * N + j)] = v;
      total += v;
    }
  const double mm = static_cast<double>(m) * static_cast<double>(m);
  auto statistic = [&](const std::vector<Eigen::Index>& order) {
    double sxx = 0.0;
    double syy = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto ia = static_cast<std::size_t>(order[static_cast<std::size_t>(a)] * N);
      const auto ib = static_cast<std::size_t>(order[static_cast<std::size_t>(m + a)] * N);
      for (Eigen::Index b = 0; b < m; ++b) {
        sxx += dist[ia + static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
        syy += dist[ib + static_cast<std::size_t>(order[static_cast<std::size_t>(m + b)])];
      }
    }
    const double sxy = 0.5 * (total - sxx - syy);
    return 2.0 * sxy / mm - sxx / mm - syy / mm;
  };
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  out.energy = statistic(order);

  Rng rng = make_rng(options.seed, Stream::permutation);
  std::vector<double> null;
  for (int p = 0; p < options.permutations; ++p) {
    std::shuffle(order.begin(), order.end(), rng);
    null.push_back(statistic(order));
  }
  if (!null.empty()) {
    const double P = static_cast<double>(null.size());
    out.null_mean = std::accumulate(null.begin(), null.end(), 0.0) / P;
    double ss = 0.0;
    for (double v : null) ss += (v - out.null_mean) * (v - out.null_mean);
    out.null_sd = std::sqrt(ss / std::max(1.0, P - 1.0));
    std::sort(null.begin(), null.end());
    const auto idx = static_cast<std::size_t>(std::ceil(0.95 * P)) - 1;
    out.null_q95 = null[std::min(idx, null.size() - 1)];
    out.within_band = out.energy <= out.null_q95;
  }
  return out;
}

// ---------------------------------------------------------------------------

CfIndependence cf_independence_residual(const PathSource& source, const Mat& a_n, std::size_t n,
                                        std::size_t q, const std::vector<Vec>& z_grid,
                                        const AlphaFamily& family) {
  if (n > source.length()) throw Error(ErrorKind::domain, "cf_independence_residual: n beyond path length");
  if (q < 1 || q + 2 > n) throw Error(ErrorKind::domain, "cf_independence_residual: invalid split indices");
  const std::size_t m = (n - q) / 2;
  if (m < 1 || m + q >= n) throw Error(ErrorKind::domain, "cf_independence_residual: invalid split indices");

  const std::size_t R = source.replicas();
  const std::size_t d = source.dim();
  const auto dd = static_cast<Eigen::Index>(d);
  Mat v(static_cast<Eigen::Index>(R), dd);
  Mat w(static_cast<Eigen::Index>(R), dd);
  parallel_chunks(R, thread_count(), [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> path(source.length() * d);
    Vec head(dd);
    Vec tail(dd);
    for (std::size_t r = b; r < e; ++r) {
      source.fill(r, path);
      head.setZero();
      tail.setZero();
      for (std::size_t t = 0; t < n; ++t) {
        const Eigen::Map<const Vec> x(path.data() + t * d, dd);
        if (t < m) head += x;
        else if (t >= m + q) tail += x;
      }
      v.row(static_cast<Eigen::Index>(r)) = (a_n * head).transpose();
      w.row(static_cast<Eigen::Index>(r)) = (a_n * tail).transpose();
    }
  });
  const Mat sum = v + w;
  CfIndependence out;
  out.split = m;
  for (const auto& z : z_grid) {
    const auto joint = empirical_cf(sum, z);
    const auto product = empirical_cf(v, z) * empirical_cf(w, z);
    out.residual = std::max(out.residual, std::abs(joint - product));
  }
  out.alpha = alpha_estimate(source, q + 1, family);
  out.bound = 16.0 * out.alpha;
  out.slack = 5.0 / std::sqrt(static_cast<double>(R));
  out.pass = out.residual <= out.bound + out.slack;
  return out;
}

CfIndependence cf_independence_residual(const PathSource& source, const NormalizerTrack& track,
                                        std::size_t n, std::size_t q, const std::vector<Vec>& z_grid,
                                        const AlphaFamily& family) {
  return cf_independence_residual(source, track.a[track.index_of(n)], n, q, z_grid, family);
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> power_of_two_checkpoints(int lo, int hi) {
  std::vector<std::size_t> out;
  for (int e = lo; e <= hi; ++e) out.push_back(std::size_t{1} << e);
  return out;
}

std::vector<std::size_t> normalizer_grid(const std::vector<std::size_t>& checkpoints, std::size_t step) {
  std::vector<std::size_t> grid = checkpoints;
  std::sort(grid.begin(), grid.end());
  if (step > 0 && !grid.empty()) {
    const std::size_t last = grid.back();
    for (std::size_t n = step; n <= last; n += step) grid.push_back(n);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

NormalizerTrack fit_normalizers(const PathSource& source, const std::vector<std::size_t>& grid) {
  const GaussianLaw target = GaussianLaw::standard(static_cast<int>(source.dim()));
  return regularize_normalizers(choose_normalizers(partial_sums(source, grid)), target);
}

CltRun run_clt(const PathSource& source, const CltOptions& options) {
  if (options.checkpoints.empty()) throw Error(ErrorKind::config, "run_clt: no checkpoints");
  const std::size_t R = source.replicas();
  const int d = static_cast<int>(source.dim());
  const GaussianLaw target = GaussianLaw::standard(d);

  const auto grid = normalizer_grid(options.checkpoints, options.grid_step);

  CltRun run;
  const PartialSums sums = partial_sums(source, grid);
  run.dense = regularize_normalizers(choose_normalizers(sums), target);
  run.track = run.dense.subset(options.checkpoints);
  run.diagnostics = normalizer_diagnostics(run.track);

  const auto cf_grid = default_cf_grid(d);
  for (std::size_t k = 0; k < run.track.size(); ++k) {
    const std::size_t g = run.dense.index_of(run.track.checkpoints[k]);
    const Mat normalized = run.track.normalize(k, sums.sums[g]);
    CltCheckpointMetrics m;
    m.n = run.track.checkpoints[k];
    m.distance = limit_distance(normalized, target, cf_grid, options.energy);
    const auto [mean, cov] = sample_moments(normalized);
    m.mean_norm = mean.norm();
    m.cov_error = (cov - Mat::Identity(d, d)).norm();
    run.metrics.push_back(m);
  }

  std::vector<double> levels = options.eps_grid;
  for (std::size_t m = 1; m <= options.schedule_levels; ++m) levels.push_back(1.0 / static_cast<double>(m));
  const auto sorted = sorted_unique(levels);
  const std::size_t half = R / 2;
  auto first = exceedance_counts(source, run.track, sorted, {0, half});
  const auto second = exceedance_counts(source, run.track, sorted, {half, R});

  std::vector<double> schedule_eps;
  for (std::size_t m = 1; m <= options.schedule_levels; ++m) schedule_eps.push_back(1.0 / static_cast<double>(m));
  const auto first_table = table_from_counts(first, run.track, schedule_eps);
  const auto second_table = table_from_counts(second, run.track, schedule_eps);
  run.schedule = delta_schedule(first_table.tail(), run.track.size(), options.schedule_levels);
  run.schedule_heldout_ok = true;
  run.schedule_heldout_margin = -1e300;
  const double slack = 2.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, R - half)));
  for (std::size_t k = 0; k < run.track.size(); ++k) {
    const double delta = run.schedule.at(k + 1);
    const double margin = second_table.at(k, delta) - delta - slack;
    run.schedule_heldout_margin = std::max(run.schedule_heldout_margin, margin);
    if (margin > 0.0) run.schedule_heldout_ok = false;
  }

  first.add(second);
  run.infinitesimality = table_from_counts(first, run.track, options.eps_grid);
  run.blocks = block_sum_check(source, run.track, run.schedule, options.blocks);
  return run;
}

GeneratorExtraction generator_from_normalizers(const NormalizerTrack& track, double c,
                                               const std::vector<double>& w_values,
                                               const std::vector<double>& t_grid) {
  if (track.size() < 2) throw Error(ErrorKind::horizon, "generator_from_normalizers: need two normalizers");
  const int d = static_cast<int>(track.a.front().rows());
  const GaussianLaw law = GaussianLaw::standard(d);
  GeneratorExtraction out;
  out.c = c;
  for (const auto& j : primitive_decomposition(law)) {
    KcResult kc = extract_kc(track.checkpoints, track.a, j, c);
    Mat t = j.mat() * kc.k * j.mat();
    out.blocks.push_back({j, std::move(t)});
    out.kc.push_back(std::move(kc));
  }
  // A w below 1/d_r leaves block r at the identity; such samples carry no
  // information about Q and are dropped.
  for (double w : w_values) {
    bool informative = true;
    for (const auto& b : out.blocks)
      if (std::floor(w * static_cast<double>(cw_steps(b))) < 1.0) informative = false;
    if (informative) out.cw[w] = build_cw(out.blocks, w);
    else out.skipped_w.push_back(w);
  }
  out.certificate = extract_generator(out.cw, law, t_grid);
  return out;
}

}  // namespace osd
