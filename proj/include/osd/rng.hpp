#pragma once

// Counter-derived random streams. A stream is identified by
// (seed, stream tag, index); equal identifiers give bit-identical draws no
// matter which thread consumes them.

#include "osd/linalg.hpp"

#include <cstdint>
#include <boost/random/normal_distribution.hpp>

#include <random>

namespace osd {

using Rng = std::mt19937_64;

/// Stream tags keep the consumers of one user seed disjoint.
enum class Stream : std::uint64_t {
  paths = 1,
  directions = 2,
  reference = 3,
  permutation = 4,
  windows = 5,
  osd = 6,
  nu = 7,
  trial = 8,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) noexcept;
Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

class NormalSource {
 public:
  double operator()(Rng& rng) { return dist_(rng); }
  /// Fills `out` with i.i.d. N(0, 1).
  void fill(Rng& rng, Vec& out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = dist_(rng);
  }
  /// Clears any distribution state so the next draw depends on rng only.
  void reset() { dist_.reset(); }
  Vec draw(Rng& rng, Eigen::Index d) {
    Vec v(d);
    fill(rng, v);
    return v;
  }

 private:
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

/// Uniform direction on the unit sphere in R^d.
Vec random_direction(Rng& rng, Eigen::Index d);

}  // namespace osd
