#pragma once

// Strongly mixing R^d-valued sequences (IID, moving average, AR(1) with
// Gaussian innovations) and a finite-family lower bound on the strong
// mixing coefficient α(n).

#include "osd/linalg.hpp"
#include "osd/semigroup.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace osd {

enum class ProcessKind { iid, ma, ar1 };

const char* to_string(ProcessKind kind) noexcept;
ProcessKind parse_process_kind(const std::string& name);

struct ProcessSpec {
  ProcessKind kind = ProcessKind::iid;
  GaussianLaw innovation;
  std::vector<Mat> theta;  // MA coefficients Θ_0..Θ_m
  Mat b;                   // AR(1) transition

  static ProcessSpec iid(GaussianLaw innovation);
  static ProcessSpec ma(std::vector<Mat> theta, GaussianLaw innovation);
  static ProcessSpec ar1(Mat b, GaussianLaw innovation);

  int dim() const noexcept { return innovation.dim(); }
  /// Throws Error(config) on inconsistent dimensions or spectral radius ≥ 1.
  void validate() const;

  /// Law of a single X_t.
  GaussianLaw stationary_law() const;
  /// Σ_h Cov(X_0, X_h), the covariance of S_n / √n as n → ∞.
  Mat long_run_covariance() const;
};

/// R × n × d, row-major in (replica, time, coordinate).
struct PathBatch {
  std::size_t replicas = 0;
  std::size_t length = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  ProcessSpec spec;
  std::vector<double> data;

  double at(std::size_t r, std::size_t t, std::size_t k) const {
    return data[(r * length + t) * dim + k];
  }
  std::span<const double> path(std::size_t r) const {
    return {data.data() + r * length * dim, length * dim};
  }
};

/// Either a materialized batch or a generator that reproduces the same
/// replicas on demand; large runs stream through the latter.
class ReplicaSampler;

class PathSource {
 public:
  PathSource(const PathBatch& batch);  // NOLINT(google-explicit-constructor)
  PathSource(ProcessSpec spec, std::size_t length, std::size_t replicas, std::uint64_t seed);

  std::size_t replicas() const noexcept { return replicas_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t dim() const noexcept { return dim_; }
  const ProcessSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Writes replica r (length × dim values) into out.
  void fill(std::size_t r, std::span<double> out) const;

 private:
  const PathBatch* batch_ = nullptr;
  std::shared_ptr<const ReplicaSampler> sampler_;
  ProcessSpec spec_;
  std::size_t length_ = 0;
  std::size_t replicas_ = 0;
  std::size_t dim_ = 0;
  std::uint64_t seed_ = 0;
};

/// One replica of `spec` of the given length; the stream is derived from
/// (seed, replica) only.
void generate_replica(const ProcessSpec& spec, std::size_t length, std::uint64_t seed,
                      std::size_t replica, std::span<double> out);

PathBatch generate(const ProcessSpec& spec, std::size_t length, std::size_t replicas,
                   std::uint64_t seed);

struct AlphaFamily {
  int directions = 8;
  int thresholds = 7;  // empirical quantiles 0.1..0.9
  int positions = 3;
  std::uint64_t seed = 0x05d5eed;
};

/// max |P̂(A∩B) − P̂(A)P̂(B)| over half-space events A = {⟨u, X_j⟩ ≤ τ} at
/// past positions j and B of the same form at positions ≥ j + lag, with
/// probabilities taken across replicas.
double alpha_estimate(const PathSource& source, std::size_t lag, const AlphaFamily& family = {});

// CSV: header "r,t,x1..xd"; r counts from 0, t from 1.
void write_csv(std::ostream& os, const PathBatch& batch);
void write_samples_csv(std::ostream& os, const Mat& samples);

// Binary: 16-byte header {"OSDB", u16 version, u16 d, u32 R, u32 n}
// followed by R·n·d little-endian float64 values.
inline constexpr std::uint16_t kBinaryVersion = 1;
void write_binary(std::ostream& os, std::size_t replicas, std::size_t length, std::size_t dim,
                  std::span<const double> data);
void write_binary(std::ostream& os, const PathBatch& batch);

struct BinaryDump {
  std::uint16_t version = 0;
  std::size_t replicas = 0;
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<double> data;
};
BinaryDump read_binary(std::istream& is);

}  // namespace osd
