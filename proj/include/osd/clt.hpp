#pragma once

// Matrix-normalized partial sums of strongly mixing sequences: normalizer
// selection and regularization, infinitesimality and block-sum checks,
// dependence residuals and distances to the Gaussian limit.

#include "osd/linalg.hpp"
#include "osd/mixing.hpp"
#include "osd/semigroup.hpp"

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

namespace osd {

/// sums[k] is R × d: per-replica S_n at checkpoints[k].
struct PartialSums {
  std::vector<std::size_t> checkpoints;
  std::vector<Mat> sums;
};

PartialSums partial_sums(const PathSource& source, const std::vector<std::size_t>& checkpoints);

struct NormalizerTrack {
  std::vector<std::size_t> checkpoints;
  std::vector<Mat> a;
  std::vector<Vec> b;
  bool regularized = false;

  std::size_t size() const noexcept { return checkpoints.size(); }
  /// Position of checkpoint n; throws Error(domain) when absent.
  std::size_t index_of(std::size_t n) const;
  /// Restriction to the listed checkpoints.
  NormalizerTrack subset(const std::vector<std::size_t>& keep) const;
  /// A_n S_n + b_n for the rows of `sums` (R × d).
  Mat normalize(std::size_t k, const Mat& sums) const;
};

/// A_n = Cov(S_n)^{-1/2}, b_n = −A_n mean(S_n). Throws Error(degenerate)
/// with "degenerate sums; law not full" on a singular covariance.
NormalizerTrack choose_normalizers(const PartialSums& sums);

/// Ã_n = H_n A_n with orthogonal H_n chosen so successive ratios
/// Ã_{n_{k+1}} Ã_{n_k}^{-1} are as close to I as possible.
NormalizerTrack regularize_normalizers(const NormalizerTrack& track, const GaussianLaw& law);

struct NormalizerDiagnostics {
  std::vector<double> norms;            // ||A_n||
  std::vector<double> det_step_ratio;   // |det ratio|^{1/(n_{k+1} − n_k)}
  std::vector<double> det_index;        // log|det ratio| / log(n_{k+1}/n_k)
  std::vector<double> ratio_bound_prefix;
  double ratio_bound = 0.0;             // max_{m ≤ n} ||A_n A_m^{-1}||
  bool norm_not_decreasing = false;
  bool det_ratio_unstable = false;
  bool ratio_bound_growing = false;

  bool flagged() const noexcept {
    return norm_not_decreasing || det_ratio_unstable || ratio_bound_growing;
  }
};

NormalizerDiagnostics normalizer_diagnostics(const NormalizerTrack& track);

/// δ_n for n = 1..horizon, with δ_n = 1/m on [N_m, N_{m+1}).
struct DeltaSchedule {
  std::vector<double> delta;
  std::vector<std::size_t> breaks;  // N_1 = 1 < N_2 < ...

  std::size_t horizon() const noexcept { return delta.size(); }
  double at(std::size_t n) const { return delta.at(n - 1); }
};

/// tail(n, ε) = sup_j P(||X_{n,j}|| ≥ ε).
using TailFunction = std::function<double(std::size_t, double)>;

/// Throws Error(horizon) with "not infinitesimal at horizon" when the tail
/// at some level 1/m shows no decay over the horizon.
DeltaSchedule delta_schedule(const TailFunction& tail, std::size_t horizon, std::size_t max_level = 0);

struct ReplicaRange {
  std::size_t begin = 0;
  std::size_t end = static_cast<std::size_t>(-1);
};

/// value[k][e] = max_{j ≤ n_k} P̂(||A_{n_k} X_j|| ≥ eps[e]).
struct InfinitesimalityTable {
  std::vector<std::size_t> checkpoints;
  std::vector<double> eps;
  std::vector<std::vector<double>> value;
  std::size_t replicas = 0;

  /// Value at (checkpoint position k, ε); ε must be on the grid.
  double at(std::size_t k, double eps) const;
  TailFunction tail() const;
};

InfinitesimalityTable infinitesimality_check(const PathSource& source, const NormalizerTrack& track,
                                             const std::vector<double>& eps_grid,
                                             ReplicaRange range = {});

struct BlockSumEntry {
  std::size_t n = 0;
  double delta = 1.0;
  std::size_t q = 1;           // ⌊δ^{-1/2}⌋
  double probability = 0.0;    // worst P̂(||A_n Σ_Q X_k|| ≥ √δ) over windows
  double bound = 1.0;          // √δ + 3/√R
  double margin = 0.0;         // probability − bound
};

struct BlockSumReport {
  std::vector<BlockSumEntry> entries;
  double worst_margin = 0.0;
  bool pass = true;
};

struct BlockSumOptions {
  int windows = 16;
  std::uint64_t seed = 0xb10c;
  bool singletons = false;  // force |Q| = 1
};

/// Schedule position k + 1 applies to track checkpoint k.
BlockSumReport block_sum_check(const PathSource& source, const NormalizerTrack& track,
                               const DeltaSchedule& schedule, const BlockSumOptions& options = {});

struct EnergyOptions {
  int permutations = 200;
  std::size_t max_points = 1000;
  std::uint64_t seed = 0xe4e6;
};

struct LimitDistance {
  double energy = 0.0;
  double null_mean = 0.0;
  double null_sd = 0.0;
  double null_q95 = 0.0;
  double cf_sup = 0.0;
  bool within_band = false;  // energy ≤ null_q95
};

std::complex<double> empirical_cf(const Mat& samples, const Vec& z);
std::complex<double> gaussian_cf(const GaussianLaw& law, const Vec& z);

/// Axis and diagonal directions at radii {0.5, 1, 2}.
std::vector<Vec> default_cf_grid(int d);

/// V-statistic energy distance between two samples (rows).
double energy_distance(const Mat& x, const Mat& y);

LimitDistance limit_distance(const Mat& samples, const GaussianLaw& law, const std::vector<Vec>& cf_grid,
                             const EnergyOptions& options = {});

struct CfIndependence {
  double residual = 0.0;
  double alpha = 0.0;
  double bound = 0.0;  // 16·α̂(q + 1)
  double slack = 0.0;  // 5/√R
  std::size_t split = 0;
  bool pass = false;   // residual ≤ bound + slack
};

/// V = A_n S_m, W = A_n (S_n − S_{m+q}) with m = ⌊(n − q)/2⌋; residual is
/// max_z |Ê e^{i⟨z,V+W⟩} − Ê e^{i⟨z,V⟩} Ê e^{i⟨z,W⟩}|.
CfIndependence cf_independence_residual(const PathSource& source, const Mat& a_n, std::size_t n,
                                        std::size_t q, const std::vector<Vec>& z_grid,
                                        const AlphaFamily& family = {});
CfIndependence cf_independence_residual(const PathSource& source, const NormalizerTrack& track,
                                        std::size_t n, std::size_t q, const std::vector<Vec>& z_grid,
                                        const AlphaFamily& family = {});

// ---------------------------------------------------------------------------
// End-to-end harness.

std::vector<std::size_t> power_of_two_checkpoints(int lo, int hi);

/// Checkpoints together with every multiple of `step` up to the last one.
std::vector<std::size_t> normalizer_grid(const std::vector<std::size_t>& checkpoints, std::size_t step);

/// Regularized normalizers toward N(0, I) on `grid`, from one pass.
NormalizerTrack fit_normalizers(const PathSource& source, const std::vector<std::size_t>& grid);

struct CltOptions {
  std::vector<std::size_t> checkpoints = power_of_two_checkpoints(8, 14);
  std::size_t grid_step = 128;        // dense normalizer grid spacing; 0 disables
  std::vector<double> eps_grid = {0.25};
  std::size_t schedule_levels = 32;   // ε = 1/m for m ≤ schedule_levels
  EnergyOptions energy;
  BlockSumOptions blocks;
};

struct CltCheckpointMetrics {
  std::size_t n = 0;
  LimitDistance distance;
  double mean_norm = 0.0;        // ||mean of normalized sums||
  double cov_error = 0.0;        // ||cov of normalized sums − I||_F
};

struct CltRun {
  NormalizerTrack dense;         // regularized, dense grid ∪ checkpoints
  NormalizerTrack track;         // regularized, checkpoints only
  NormalizerDiagnostics diagnostics;
  InfinitesimalityTable infinitesimality;  // all replicas, options.eps_grid
  DeltaSchedule schedule;        // from the first half of the replicas
  bool schedule_heldout_ok = false;
  double schedule_heldout_margin = 0.0;
  BlockSumReport blocks;
  std::vector<CltCheckpointMetrics> metrics;
};

CltRun run_clt(const PathSource& source, const CltOptions& options = {});

/// From normalizers to a generator: per primitive idempotent J_r of
/// N(0, I), K_r = extract_kc(track, J_r, c) and T_r = J_r K_r J_r; the
/// blocks give C_w for each w and extract_generator certifies Q.
struct GeneratorExtraction {
  double c = 0.0;
  std::vector<KcResult> kc;
  std::vector<CwBlock> blocks;
  std::map<double, Mat> cw;
  std::vector<double> skipped_w;  // w·d_r < 1 for some block
  GeneratorCertificate certificate;
};

GeneratorExtraction generator_from_normalizers(const NormalizerTrack& track, double c,
                                               const std::vector<double>& w_values,
                                               const std::vector<double>& t_grid);

}  // namespace osd
