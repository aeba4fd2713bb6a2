#include "osd/mixing.hpp"

#include "osd/error.hpp"
#include "osd/parallel.hpp"
#include "osd/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace osd {

const char* to_string(ProcessKind kind) noexcept {
  switch (kind) {
    case ProcessKind::iid: return "iid";
    case ProcessKind::ma: return "ma";
    case ProcessKind::ar1: return "ar1";
  }
  return "unknown";
}

ProcessKind parse_process_kind(const std::string& name) {
  if (name == "iid") return ProcessKind::iid;
  if (name == "ma" || name == "ma1") return ProcessKind::ma;
  if (name == "ar1") return ProcessKind::ar1;
  throw Error(ErrorKind::config, "unknown process kind '" + name + "'");
}

ProcessSpec ProcessSpec::iid(GaussianLaw innovation) {
  ProcessSpec s;
  s.kind = ProcessKind::iid;
  s.innovation = std::move(innovation);
  return s;
}

ProcessSpec ProcessSpec::ma(std::vector<Mat> theta, GaussianLaw innovation) {
  ProcessSpec s;
  s.kind = ProcessKind::ma;
  s.theta = std::move(theta);
  s.innovation = std::move(innovation);
  return s;
}

ProcessSpec ProcessSpec::ar1(Mat b, GaussianLaw innovation) {
  ProcessSpec s;
  s.kind = ProcessKind::ar1;
  s.b = std::move(b);
  s.innovation = std::move(innovation);
  return s;
}

void ProcessSpec::validate() const {
  try {
    innovation.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("process innovation: ") + e.what());
  }
  const auto d = innovation.cov.rows();
  switch (kind) {
    case ProcessKind::iid: break;
    case ProcessKind::ma:
      if (theta.empty()) throw Error(ErrorKind::config, "MA process needs at least Θ_0");
      for (const auto& t : theta)
        if (t.rows() != d || t.cols() != d)
          throw Error(ErrorKind::config, "MA coefficient has the wrong shape");
      break;
    case ProcessKind::ar1:
      if (b.rows() != d || b.cols() != d) throw Error(ErrorKind::config, "AR(1) matrix has the wrong shape");
      if (spectral_radius(b) >= 1.0)
        throw Error(ErrorKind::config, "AR(1) spectral radius must be below 1");
      break;
  }
}

GaussianLaw ProcessSpec::stationary_law() const {
  validate();
  const auto d = innovation.cov.rows();
  switch (kind) {
    case ProcessKind::iid: return innovation;
    case ProcessKind::ma: {
      GaussianLaw law{Vec::Zero(d), Mat::Zero(d, d)};
      for (const auto& t : theta) {
        law.mean += t * innovation.mean;
        law.cov += t * innovation.cov * t.transpose();
      }
      law.cov = symmetrize(law.cov);
      return law;
    }
    case ProcessKind::ar1: {
      const Mat id = Mat::Identity(d, d);
      return {(id - b).partialPivLu().solve(innovation.mean),
              solve_discrete_lyapunov(b, innovation.cov)};
    }
  }
  return innovation;
}

Mat ProcessSpec::long_run_covariance() const {
  validate();
  const auto d = innovation.cov.rows();
  switch (kind) {
    case ProcessKind::iid: return innovation.cov;
    case ProcessKind::ma: {
      Mat sum = Mat::Zero(d, d);
      for (const auto& t : theta) sum += t;
      return symmetrize(sum * innovation.cov * sum.transpose());
    }
    case ProcessKind::ar1: {
      const Mat inv = (Mat::Identity(d, d) - b).inverse();
      return symmetrize(inv * innovation.cov * inv.transpose());
    }
  }
  return innovation.cov;
}

// ---------------------------------------------------------------------------

namespace {

// Row-major copies so the inner loops stay allocation free.
struct Dense {
  std::size_t d = 0;
  std::vector<double> v;
  Dense() = default;
  explicit Dense(const Mat& m) : d(static_cast<std::size_t>(m.rows())), v(d * d) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) v[i * d + j] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  // out = this * x (+ out if accumulate)
  void apply(const double* x, double* out, bool accumulate) const {
    for (std::size_t i = 0; i < d; ++i) {
      double s = accumulate ? out[i] : 0.0;
      const double* row = v.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) s += row[j] * x[j];
      out[i] = s;
    }
  }
};

Mat cholesky_factor(const Mat& cov) {
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::config, "covariance is not positive definite");
  return llt.matrixL();
}

}  // namespace

class ReplicaSampler {
 public:
  explicit ReplicaSampler(const ProcessSpec& spec) : kind_(spec.kind), d_(static_cast<std::size_t>(spec.dim())) {
    spec.validate();
    chol_ = Dense(cholesky_factor(spec.innovation.cov));
    mean_.assign(spec.innovation.mean.data(), spec.innovation.mean.data() + d_);
    if (kind_ == ProcessKind::ma)
      for (const auto& t : spec.theta) theta_.emplace_back(t);
    if (kind_ == ProcessKind::ar1) {
      b_ = Dense(spec.b);
      const GaussianLaw st = spec.stationary_law();
      stat_chol_ = Dense(cholesky_factor(st.cov));
      stat_mean_.assign(st.mean.data(), st.mean.data() + d_);
    }
  }

  void fill(Rng& rng, std::size_t length, double* out) {
    normal_.reset();
    std::vector<double> z(d_);
    auto innovation = [&](double* e) {
      for (auto& zi : z) zi = normal_(rng);
      chol_.apply(z.data(), e, false);
      for (std::size_t k = 0; k < d_; ++k) e[k] += mean_[k];
    };
    switch (kind_) {
      case ProcessKind::iid:
        for (std::size_t t = 0; t < length; ++t) innovation(out + t * d_);
        break;
      case ProcessKind::ma: {
        const std::size_t order = theta_.size() - 1;
        // ring[s] holds e_{t - s}
        std::vector<std::vector<double>> ring(order + 1, std::vector<double>(d_));
        for (std::size_t s = order; s >= 1; --s) innovation(ring[s].data());
        for (std::size_t t = 0; t < length; ++t) {
          if (t > 0) std::rotate(ring.rbegin(), ring.rbegin() + 1, ring.rend());
          innovation(ring[0].data());
          double* x = out + t * d_;
          std::fill(x, x + d_, 0.0);
          for (std::size_t s = 0; s <= order; ++s) theta_[s].apply(ring[s].data(), x, true);
        }
        break;
      }
      case ProcessKind::ar1: {
        for (auto& zi : z) zi = normal_(rng);
        stat_chol_.apply(z.data(), out, false);
        for (std::size_t k = 0; k < d_; ++k) out[k] += stat_mean_[k];
        std::vector<double> e(d_);
        for (std::size_t t = 1; t < length; ++t) {
          innovation(e.data());
          double* x = out + t * d_;
          b_.apply(out + (t - 1) * d_, x, false);
          for (std::size_t k = 0; k < d_; ++k) x[k] += e[k];
        }
        break;
      }
    }
  }

 private:
  ProcessKind kind_;
  std::size_t d_;
  Dense chol_;
  std::vector<double> mean_;
  std::vector<Dense> theta_;
  Dense b_;
  Dense stat_chol_;
  std::vector<double> stat_mean_;
  NormalSource normal_;
};

void generate_replica(const ProcessSpec& spec, std::size_t length, std::uint64_t seed,
                      std::size_t replica, std::span<double> out) {
  const std::size_t d = static_cast<std::size_t>(spec.dim());
  if (out.size() < length * d) throw Error(ErrorKind::domain, "generate_replica: output too small");
  ReplicaSampler sampler(spec);
  Rng rng = make_rng(seed, Stream::paths, replica);
  sampler.fill(rng, length, out.data());
}

PathBatch generate(const ProcessSpec& spec, std::size_t length, std::size_t replicas,
                   std::uint64_t seed) {
  if (length < 1 || replicas < 1) throw Error(ErrorKind::domain, "generate: n and replicas must be positive");
  spec.validate();
  PathBatch batch;
  batch.replicas = replicas;
  batch.length = length;
  batch.dim = static_cast<std::size_t>(spec.dim());
  batch.seed = seed;
  batch.spec = spec;
  batch.data.assign(replicas * length * batch.dim, 0.0);
  const std::size_t stride = length * batch.dim;
  parallel_chunks(replicas, 64, [&](std::size_t, std::size_t begin, std::size_t end) {
    ReplicaSampler sampler(spec);
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = make_rng(seed, Stream::paths, r);
      sampler.fill(rng, length, batch.data.data() + r * stride);
    }
  });
  return batch;
}

PathSource::PathSource(const PathBatch& batch)
    : batch_(&batch), spec_(batch.spec), length_(batch.length), replicas_(batch.replicas),
      dim_(batch.dim), seed_(batch.seed) {}

PathSource::PathSource(ProcessSpec spec, std::size_t length, std::size_t replicas, std::uint64_t seed)
    : spec_(std::move(spec)), length_(length), replicas_(replicas), seed_(seed) {
  spec_.validate();
  dim_ = static_cast<std::size_t>(spec_.dim());
  if (length_ < 1 || replicas_ < 1) throw Error(ErrorKind::domain, "PathSource: n and replicas must be positive");
  sampler_ = std::make_shared<const ReplicaSampler>(spec_);
}

void PathSource::fill(std::size_t r, std::span<double> out) const {
  if (batch_ != nullptr) {
    const auto p = batch_->path(r);
    std::copy(p.begin(), p.end(), out.begin());
    return;
  }
  if (out.size() < length_ * dim_) throw Error(ErrorKind::domain, "PathSource::fill: output too small");
  ReplicaSampler sampler(*sampler_);
  Rng rng = make_rng(seed_, Stream::paths, r);
  sampler.fill(rng, length_, out.data());
}

// ---------------------------------------------------------------------------

namespace {

using Bits = std::vector<std::uint64_t>;

std::size_t popcount_and(const Bits& a, const Bits& b) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < a.size(); ++i) c += static_cast<std::size_t>(std::popcount(a[i] & b[i]));
  return c;
}

std::size_t popcount(const Bits& a) {
  std::size_t c = 0;
  for (auto w : a) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

}  // namespace

double alpha_estimate(const PathSource& source, std::size_t lag, const AlphaFamily& family) {
  const std::size_t n = source.length();
  if (lag < 1 || lag >= n) throw Error(ErrorKind::domain, "alpha_estimate: need 1 <= lag < path length");
  if (family.directions < 1 || family.thresholds < 1 || family.positions < 1)
    throw Error(ErrorKind::domain, "alpha_estimate: empty event family");
  const std::size_t R = source.replicas();
  const std::size_t d = source.dim();

  // Past positions evenly spread over [0, n − 1 − lag]; future positions
  // j + lag + s for s < positions.
  const std::size_t last_past = n - 1 - lag;
  std::vector<std::size_t> past;
  for (int i = 0; i < family.positions; ++i) {
    const std::size_t j = family.positions == 1
                              ? 0
                              : static_cast<std::size_t>(std::llround(
                                    static_cast<double>(i) * static_cast<double>(last_past) /
                                    static_cast<double>(family.positions - 1)));
    if (past.empty() || past.back() != j) past.push_back(j);
  }
  std::vector<std::vector<std::size_t>> future(past.size());
  std::vector<std::size_t> used;
  for (std::size_t p = 0; p < past.size(); ++p) {
    used.push_back(past[p]);
    for (int s = 0; s < family.positions; ++s) {
      const std::size_t k = past[p] + lag + static_cast<std::size_t>(s);
      if (k >= n) break;
      future[p].push_back(k);
      used.push_back(k);
    }
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  auto slot = [&](std::size_t pos) {
    return static_cast<std::size_t>(std::lower_bound(used.begin(), used.end(), pos) - used.begin());
  };

  // values[slot][r * d + k]
  std::vector<std::vector<double>> values(used.size(), std::vector<double>(R * d));
  parallel_chunks(R, 64, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> path(n * d);
    for (std::size_t r = begin; r < end; ++r) {
      source.fill(r, path);
      for (std::size_t s = 0; s < used.size(); ++s)
        std::copy_n(path.data() + used[s] * d, d, values[s].data() + r * d);
    }
  });

  Rng rng = make_rng(family.seed, Stream::directions);
  std::vector<Vec> dirs;
  for (int i = 0; i < family.directions; ++i) dirs.push_back(random_direction(rng, static_cast<Eigen::Index>(d)));

  const std::size_t words = (R + 63) / 64;
  const std::size_t T = static_cast<std::size_t>(family.thresholds);
  // events[slot][dir * T + thr]
  std::vector<std::vector<Bits>> events(used.size());
  std::vector<std::vector<double>> prob(used.size());
  std::vector<double> proj(R);
  std::vector<double> sorted(R);
  for (std::size_t s = 0; s < used.size(); ++s) {
    for (const auto& u : dirs) {
      for (std::size_t r = 0; r < R; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += u(static_cast<Eigen::Index>(k)) * values[s][r * d + k];
        proj[r] = acc;
      }
      sorted = proj;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t t = 0; t < T; ++t) {
        const double level = T == 1 ? 0.5 : 0.1 + 0.8 * static_cast<double>(t) / static_cast<double>(T - 1);
        const double tau = sorted[static_cast<std::size_t>(std::floor(level * static_cast<double>(R - 1)))];
        Bits bits(words, 0);
        for (std::size_t r = 0; r < R; ++r)
          if (proj[r] <= tau) bits[r / 64] |= (1ULL << (r % 64));
        prob[s].push_back(static_cast<double>(popcount(bits)) / static_cast<double>(R));
        events[s].push_back(std::move(bits));
      }
    }
  }

  double best = 0.0;
  for (std::size_t p = 0; p < past.size(); ++p) {
    const std::size_t a_slot = slot(past[p]);
    for (std::size_t k : future[p]) {
      const std::size_t b_slot = slot(k);
      for (std::size_t ea = 0; ea < events[a_slot].size(); ++ea) {
        for (std::size_t eb = 0; eb < events[b_slot].size(); ++eb) {
          const double joint = static_cast<double>(popcount_and(events[a_slot][ea], events[b_slot][eb])) /
                               static_cast<double>(R);
          best = std::max(best, std::abs(joint - prob[a_slot][ea] * prob[b_slot][eb]));
        }
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

void put_number(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

void put_le(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint64_t get_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw Error(ErrorKind::io, "binary dump truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_csv(std::ostream& os, const PathBatch& batch) {
  os << "r,t";
  for (std::size_t k = 0; k < batch.dim; ++k) os << ",x" << (k + 1);
  os << '\n';
  for (std::size_t r = 0; r < batch.replicas; ++r) {
    for (std::size_t t = 0; t < batch.length; ++t) {
      os << r << ',' << (t + 1);
      for (std::size_t k = 0; k < batch.dim; ++k) {
        os << ',';
        put_number(os, batch.at(r, t, k));
      }
      os << '\n';
    }
  }
}

void write_samples_csv(std::ostream& os, const Mat& samples) {
  os << "r,t";
  for (Eigen::Index k = 0; k < samples.cols(); ++k) os << ",x" << (k + 1);
  os << '\n';
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    os << r << ",1";
    for (Eigen::Index k = 0; k < samples.cols(); ++k) {
      os << ',';
      put_number(os, samples(r, k));
    }
    os << '\n';
  }
}

void write_binary(std::ostream& os, std::size_t replicas, std::size_t length, std::size_t dim,
                  std::span<const double> data) {
  if (data.size() != replicas * length * dim) throw Error(ErrorKind::io, "write_binary: shape mismatch");
  if (dim > 0xffffU || replicas > 0xffffffffULL || length > 0xffffffffULL)
    throw Error(ErrorKind::io, "write_binary: shape exceeds header limits");
  os.write("OSDB", 4);
  put_le(os, kBinaryVersion, 2);
  put_le(os, dim, 2);
  put_le(os, replicas, 4);
  put_le(os, length, 4);
  for (double v : data) put_le(os, std::bit_cast<std::uint64_t>(v), 8);
  if (!os) throw Error(ErrorKind::io, "write_binary: stream failure");
}

void write_binary(std::ostream& os, const PathBatch& batch) {
  write_binary(os, batch.replicas, batch.length, batch.dim, batch.data);
}

BinaryDump read_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "OSDB", 4) != 0)
    throw Error(ErrorKind::io, "binary dump: bad magic");
  BinaryDump dump;
  dump.version = static_cast<std::uint16_t>(get_le(is, 2));
  if (dump.version != kBinaryVersion) throw Error(ErrorKind::io, "binary dump: unsupported version");
  dump.dim = static_cast<std::size_t>(get_le(is, 2));
  dump.replicas = static_cast<std::size_t>(get_le(is, 4));
  dump.length = static_cast<std::size_t>(get_le(is, 4));
  dump.data.resize(dump.replicas * dump.length * dump.dim);
  for (auto& v : dump.data) v = std::bit_cast<double>(get_le(is, 8));
  return dump;
}

}  // namespace osd
