#include "osd/error.hpp"
#include "osd/mixing.hpp"
#include "osd/parallel.hpp"
#include "testutil.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace osd;
using namespace testutil;

namespace {

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

// Across-replica covariance between X_s and X_t (uncentered means removed).
Mat cross_cov(const PathBatch& b, std::size_t s, std::size_t t) {
  const auto d = static_cast<Eigen::Index>(b.dim);
  Vec ms = Vec::Zero(d), mt = Vec::Zero(d);
  Mat acc = Mat::Zero(d, d);
  for (std::size_t r = 0; r < b.replicas; ++r)
    for (Eigen::Index i = 0; i < d; ++i) {
      ms(i) += b.at(r, s, static_cast<std::size_t>(i));
      mt(i) += b.at(r, t, static_cast<std::size_t>(i));
    }
  const double R = static_cast<double>(b.replicas);
  ms /= R;
  mt /= R;
  for (std::size_t r = 0; r < b.replicas; ++r)
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        acc(i, j) += (b.at(r, s, static_cast<std::size_t>(i)) - ms(i)) * (b.at(r, t, static_cast<std::size_t>(j)) - mt(j));
  return acc / (R - 1.0);
}

ProcessSpec default_ar1() {
  Mat b(2, 2);
  b << 0.5, 0.2, 0.0, 0.3;
  return ProcessSpec::ar1(b, GaussianLaw::standard(2));
}

ProcessSpec ma1(int d) {
  return ProcessSpec::ma({Mat::Identity(d, d), Mat::Identity(d, d)}, GaussianLaw::standard(d));
}

}  // namespace

TEST_CASE("generate: shapes and IID independence") {
  const auto small = generate(ProcessSpec::iid(GaussianLaw::standard(2)), 3, 2, 11);
  CHECK(small.replicas == 2);
  CHECK(small.length == 3);
  CHECK(small.dim == 2);
  CHECK(small.data.size() == 12);

  const std::size_t R = 20000;
  const auto b = generate(ProcessSpec::iid(GaussianLaw::standard(2)), 2, R, 12);
  CHECK(max_abs(cross_cov(b, 0, 1)) <= 5.0 / std::sqrt(static_cast<double>(R)));
  CHECK(max_abs(cross_cov(b, 0, 0) - Mat::Identity(2, 2)) <= 5.0 * std::sqrt(2.0 / R));
}

TEST_CASE("AR(1) stationary variance") {
  const auto spec = ProcessSpec::ar1(scalar(0.5), GaussianLaw::standard(1));
  CHECK(spec.stationary_law().cov(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  // Long-run variance Var(X)(1 + 2b/(1 − b)) = 4.
  CHECK(spec.long_run_covariance()(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  const std::size_t R = 20000;
  const auto b = generate(spec, 4, R, 13);
  for (std::size_t t = 0; t < 4; ++t)
    CHECK(std::abs(cross_cov(b, t, t)(0, 0) - 4.0 / 3.0) <= 5.0 * (4.0 / 3.0) * std::sqrt(2.0 / R));
  CHECK(std::abs(cross_cov(b, 0, 1)(0, 0) - 2.0 / 3.0) <= 0.05);
}

TEST_CASE("AR(1) paths are stationary") {
  const std::size_t R = 20000;
  const auto b = generate(default_ar1(), 64, R, 14);
  const Mat diff = cross_cov(b, 0, 0) - cross_cov(b, 63, 63);
  CHECK(max_abs(diff) <= 5.0 / std::sqrt(static_cast<double>(R)));
  const Mat theory = default_ar1().stationary_law().cov;
  // Stein equation oracle Σ = BΣBᵀ + I.
  Mat bm(2, 2);
  bm << 0.5, 0.2, 0.0, 0.3;
  CHECK(max_abs(theory - bm * theory * bm.transpose() - Mat::Identity(2, 2)) < 1e-12);
}

TEST_CASE("MA(1) is one-dependent") {
  const std::size_t R = 20000;
  const auto b = generate(ma1(2), 4, R, 15);
  CHECK(max_abs(cross_cov(b, 0, 2)) <= 5.0 * 2.0 / std::sqrt(static_cast<double>(R)));
  CHECK(max_abs(cross_cov(b, 0, 1) - Mat::Identity(2, 2)) <= 0.1);
  CHECK(max_abs(ma1(2).long_run_covariance() - 4.0 * Mat::Identity(2, 2)) < 1e-12);
}

TEST_CASE("process validation") {
  CHECK_THROWS_AS(ProcessSpec::ar1(scalar(1.0), GaussianLaw::standard(1)).validate(), Error);
  Mat rot(2, 2);
  rot << 0, -1.2, 1.2, 0;
  try {
    ProcessSpec::ar1(rot, GaussianLaw::standard(2)).validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  CHECK_THROWS_AS(ProcessSpec::ma({}, GaussianLaw::standard(2)).validate(), Error);
  CHECK_THROWS_AS(ProcessSpec::ma({Mat::Identity(3, 3)}, GaussianLaw::standard(2)).validate(), Error);
  CHECK(parse_process_kind("ma1") == ProcessKind::ma);
  CHECK_THROWS_AS(parse_process_kind("garch"), Error);
}

TEST_CASE("generation is deterministic and thread independent") {
  const auto spec = default_ar1();
  set_thread_count(1);
  const auto one = generate(spec, 50, 300, 99);
  set_thread_count(3);
  const auto three = generate(spec, 50, 300, 99);
  set_thread_count(0);
  const auto again = generate(spec, 50, 300, 99);
  CHECK(one.data == three.data);
  CHECK(one.data == again.data);
  CHECK(generate(spec, 50, 300, 100).data != one.data);

  // Streaming source and single-replica generation reproduce the batch.
  const PathSource stream(spec, 50, 300, 99);
  std::vector<double> buf(100);
  for (std::size_t r : {0, 17, 299}) {
    stream.fill(r, buf);
    const auto p = one.path(r);
    CHECK(std::equal(buf.begin(), buf.end(), p.begin()));
    std::vector<double> single(100);
    generate_replica(spec, 50, 99, r, single);
    CHECK(single == buf);
  }
  // A replica does not depend on how many replicas are requested.
  const auto fewer = generate(spec, 50, 20, 99);
  CHECK(std::equal(fewer.data.begin(), fewer.data.end(), one.data.begin()));
}

TEST_CASE("alpha_estimate range and family monotonicity") {
  const std::size_t R = 4000;
  const double slack = 3.0 / std::sqrt(static_cast<double>(R));
  for (const auto& spec : {ProcessSpec::iid(GaussianLaw::standard(2)), ma1(2), default_ar1(),
                           ProcessSpec::ar1(scalar(0.9), GaussianLaw::standard(1))}) {
    for (std::uint64_t seed : {1u, 2u}) {
      const auto batch = generate(spec, 24, R, seed);
      for (std::size_t lag : {1, 2, 5}) {
        const double small = alpha_estimate(batch, lag, AlphaFamily{8, 7, 3, 5});
        const double large = alpha_estimate(batch, lag, AlphaFamily{16, 13, 5, 5});
        CHECK(small >= 0.0);
        CHECK(large <= 0.25 + slack);
        CHECK(small <= large + 2.0 / std::sqrt(static_cast<double>(R)));
      }
    }
  }
}

TEST_CASE("alpha_estimate separates dependence") {
  const std::size_t R = 20000;
  const auto ar = generate(ProcessSpec::ar1(scalar(0.9), GaussianLaw::standard(1)), 24, R, 3);
  const double strong = alpha_estimate(ar, 1);
  const double weak = alpha_estimate(ar, 16);
  CHECK(strong > 0.1);
  CHECK(weak < strong);
  const auto ma = generate(ma1(1), 24, R, 4);
  CHECK(alpha_estimate(ma, 1) > 0.05);
  CHECK(alpha_estimate(ma, 2) <= 0.03);
  CHECK_THROWS_AS(alpha_estimate(ma, 0), Error);
  CHECK_THROWS_AS(alpha_estimate(ma, 24), Error);
}

TEST_CASE("CSV and binary serialization") {
  const auto b = generate(default_ar1(), 3, 2, 5);
  std::ostringstream csv;
  write_csv(csv, b);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "r,t,x1,x2");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.find('\r') == std::string::npos);
    double r = 0, t = 0, x1 = 0, x2 = 0;
    char c1, c2, c3;
    std::istringstream row(line);
    row >> r >> c1 >> t >> c2 >> x1 >> c3 >> x2;
    const auto ri = static_cast<std::size_t>(r);
    const auto ti = static_cast<std::size_t>(t) - 1;
    CHECK(x1 == b.at(ri, ti, 0));
    CHECK(x2 == b.at(ri, ti, 1));
  }
  CHECK(rows == 6);

  std::ostringstream bin(std::ios::binary);
  write_binary(bin, b);
  const std::string bytes = bin.str();
  CHECK(bytes.size() == 16 + 12 * 8);
  CHECK(bytes.substr(0, 4) == "OSDB");
  std::istringstream bin_in(bytes, std::ios::binary);
  const auto dump = read_binary(bin_in);
  CHECK(dump.version == kBinaryVersion);
  CHECK(dump.replicas == 2);
  CHECK(dump.length == 3);
  CHECK(dump.dim == 2);
  CHECK(dump.data == b.data);

  std::istringstream junk(std::string("XXXX0000000000000000"), std::ios::binary);
  CHECK_THROWS_AS(read_binary(junk), Error);
}
