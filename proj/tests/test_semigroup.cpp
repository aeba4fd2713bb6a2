#include "osd/error.hpp"
#include "osd/semigroup.hpp"
#include "testutil.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace osd;
using namespace testutil;

namespace {

constexpr int kTrials = 1000;

Mat rotation(double theta) {
  Mat r(2, 2);
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

GaussianLaw random_law(std::mt19937_64& g, int d) {
  return GaussianLaw{randn(g, d, 1).col(0), random_spd(g, d)};
}

// Σ^{1/2} C Σ^{-1/2} with ||C|| ≤ bound: a member for bound ≤ 1.
Mat sigma_contraction(std::mt19937_64& g, const Mat& cov, double bound) {
  const int d = static_cast<int>(cov.rows());
  Mat c = randn(g, d, d);
  c *= uniform(g, 0.0, bound) / op_norm(c);
  return sqrt_spd(cov) * c * inv_sqrt_spd(cov);
}

std::vector<Mat> scaled_track(std::size_t count) {
  std::vector<Mat> mats;
  for (std::size_t n = 1; n <= count; ++n)
    mats.push_back(Mat::Identity(2, 2) / std::sqrt(static_cast<double>(n)));
  return mats;
}

}  // namespace

TEST_CASE("gaussian_membership examples") {
  const auto law = GaussianLaw::standard(2);
  const auto half = gaussian_membership(law, 0.5 * Mat::Identity(2, 2));
  CHECK(half.member);
  CHECK(half.margin == doctest::Approx(0.75));
  const auto big = gaussian_membership(law, 1.1 * Mat::Identity(2, 2));
  CHECK_FALSE(big.member);
  CHECK(big.margin == doctest::Approx(-0.21));

  for (int trial = 0; trial < 200; ++trial) {
    auto g = rng_for(trial, 20);
    const int d = uniform_int(g, 1, 4);
    const auto l = random_law(g, d);
    const Mat a = sigma_contraction(g, l.cov, 0.99);
    const auto res = gaussian_membership(l, a);
    CHECK(res.member);
    // Eigenvalue oracle: Σ − AΣAᵀ = Σ^{1/2}(I − CCᵀ)Σ^{1/2}.
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(l.cov - a * l.cov * a.transpose()));
    CHECK(res.margin == doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-9).scale(1.0));
    CHECK(max_abs(res.residual_mean - (Mat::Identity(d, d) - a) * l.mean) < 1e-14);
    CHECK(res.member == (res.margin >= -kDefaultTol));
  }
}

TEST_CASE("zero and identity are members") {
  for (int trial = 0; trial < kTrials; ++trial) {
    auto g = rng_for(trial, 21);
    const int d = uniform_int(g, 1, 5);
    const auto l = random_law(g, d);
    REQUIRE(gaussian_membership(l, Mat::Zero(d, d)).member);
    REQUIRE(gaussian_membership(l, Mat::Identity(d, d)).member);
  }
}

TEST_CASE("membership is closed under products") {
  for (int trial = 0; trial < kTrials; ++trial) {
    auto g = rng_for(trial, 22);
    const int d = uniform_int(g, 1, 5);
    const auto l = random_law(g, d);
    const Mat a = sigma_contraction(g, l.cov, 1.0);
    const Mat b = sigma_contraction(g, l.cov, 1.0);
    REQUIRE(gaussian_membership(l, a).member);
    REQUIRE(gaussian_membership(l, b).member);
    REQUIRE(gaussian_membership(l, a * b).member);
  }
}

TEST_CASE("members are bounded") {
  int accepted = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    auto g = rng_for(trial, 23);
    const int d = uniform_int(g, 1, 5);
    const auto l = random_law(g, d);
    Eigen::SelfAdjointEigenSolver<Mat> es(l.cov);
    const double bound = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    // Unstructured candidates plus structured members.
    for (const Mat& a : {Mat(randn(g, d, d, 0.6)), sigma_contraction(g, l.cov, 1.0)}) {
      if (!gaussian_membership(l, a).member) continue;
      ++accepted;
      const double n = op_norm(a);
      REQUIRE(n * n <= bound * (1.0 + 1e-8));
    }
  }
  CHECK(accepted >= kTrials);
}

TEST_CASE("symmetry_membership examples") {
  auto g = rng_for(0, 24);
  const auto law = GaussianLaw::standard(3);
  CHECK(symmetry_membership(law, random_orthogonal(g, 3)));
  CHECK_FALSE(symmetry_membership(law, 0.9 * Mat::Identity(3, 3)));
  Mat cov = Mat::Zero(2, 2);
  cov(0, 0) = 1;
  cov(1, 1) = 4;
  Mat flip = Mat::Identity(2, 2);
  flip(0, 0) = -1;
  CHECK(symmetry_membership(GaussianLaw::centered(cov), flip));
}

TEST_CASE("symmetries are invertible members") {
  for (int trial = 0; trial < kTrials; ++trial) {
    auto g = rng_for(trial, 25);
    const int d = uniform_int(g, 1, 5);
    const auto l = random_law(g, d);
    const Mat a = sqrt_spd(l.cov) * random_orthogonal(g, d) * inv_sqrt_spd(l.cov);
    REQUIRE(symmetry_membership(l, a, 1e-8 * max_abs(l.cov) * 10));
    REQUIRE(gaussian_membership(l, a).margin >= -kDefaultTol);
    REQUIRE(gaussian_membership(l, a.inverse()).margin >= -kDefaultTol);
  }
}

TEST_CASE("idempotent factorization") {
  auto g = rng_for(0, 26);
  const Mat basis = random_orthogonal(g, 3).leftCols(2);
  CHECK(check_idempotent_factorization(GaussianLaw::standard(3), Idempotent(basis * basis.transpose())));
  Mat corr(2, 2);
  corr << 1, 0.9, 0.9, 1;
  CHECK_FALSE(check_idempotent_factorization(GaussianLaw::centered(corr), Idempotent::diagonal({1, 0})));
  CHECK(check_idempotent_factorization(GaussianLaw::standard(3), Idempotent::diagonal({1, 0, 0}),
                                       Idempotent::diagonal({1, 1, 0})));
  CHECK_THROWS_AS(check_idempotent_factorization(GaussianLaw::standard(3), Idempotent::diagonal({0, 0, 1}),
                                                 Idempotent::diagonal({1, 1, 0})),
                  Error);
}

TEST_CASE("numakura_kernel examples") {
  const auto contraction = numakura_kernel(0.5 * Mat::Identity(2, 2), 1e-6, 10000);
  CHECK(contraction.converged);
  CHECK(max_abs(contraction.unit.mat()) <= 1e-6);
  CHECK(contraction.unit.rank() == 0);

  const auto rot = numakura_kernel(rotation(1.0), 1e-6, 10000);
  CHECK(rot.converged);
  CHECK(max_abs(rot.unit.mat() - Mat::Identity(2, 2)) <= 1e-6);

  Mat mixed = Mat::Zero(3, 3);
  mixed(0, 0) = 0.9;
  mixed.bottomRightCorner(2, 2) = rotation(1.0);
  const auto res = numakura_kernel(mixed, 1e-6, 10000);
  CHECK(res.converged);
  Mat expected = Mat::Identity(3, 3);
  expected(0, 0) = 0.0;
  CHECK(max_abs(res.unit.mat() - expected) <= 1e-6);
  CHECK(res.iterations <= 10000);
}

TEST_CASE("numakura_kernel rejects unbounded powers") {
  Mat jordan(2, 2);
  jordan << 1, 1, 0, 1;
  for (const Mat& t : {Mat(1.1 * Mat::Identity(2, 2)), jordan}) {
    try {
      (void)numakura_kernel(t);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("not conditionally compact") != std::string::npos);
    }
  }
}

TEST_CASE("numakura_kernel unit is an idempotent commuting with high powers") {
  for (int trial = 0; trial < kTrials; ++trial) {
    auto g = rng_for(trial, 27);
    const int rot_blocks = uniform_int(g, 0, 2);
    const int contract = uniform_int(g, 0, 2);
    const int d = 2 * rot_blocks + contract;
    if (d == 0) continue;
    Mat core = Mat::Zero(d, d);
    for (int b = 0; b < rot_blocks; ++b) core.block(2 * b, 2 * b, 2, 2) = rotation(uniform(g, 0.2, 3.0));
    for (int c = 0; c < contract; ++c) core(2 * rot_blocks + c, 2 * rot_blocks + c) = uniform(g, -0.8, 0.8);
    const Mat p = random_invertible(g, d, 0.2);
    const Mat t = p * core * p.inverse();
    const auto res = numakura_kernel(t, 1e-6, 10000);
    REQUIRE(res.converged);
    const Mat& l = res.unit.mat();
    REQUIRE(op_norm(l * l - l) <= 1e-6);
    const Mat tk = mat_pow(t, res.power);
    REQUIRE(op_norm(tk * l - l * tk) <= 1e-6);
    REQUIRE(res.unit.rank() == 2 * rot_blocks);
  }
}

TEST_CASE("extract_kc closed form") {
  const auto mats = scaled_track(20002);
  const auto kc = extract_kc(mats, Idempotent::identity(2), 0.5, 10000);
  CHECK(kc.n == 10000);
  CHECK((kc.m == 20000 || kc.m == 19999));
  CHECK(std::abs(kc.det - 0.5) <= 1e-3);
  CHECK(max_abs(kc.k - std::sqrt(0.5) * Mat::Identity(2, 2)) <= 1e-3);
  CHECK(kc.next_det < 0.5);

  const auto near_one = extract_kc(mats, Idempotent::identity(2), 1.0 - 1e-9, 10000);
  CHECK(near_one.m == 10000);
  CHECK(max_abs(near_one.k - Mat::Identity(2, 2)) < 1e-12);

  // d = 1: b_{m,n} = √(n/m), so the crossing sits at m = n / c².
  std::vector<Mat> scalar;
  for (std::size_t n = 1; n <= 16002; ++n) scalar.push_back(Mat::Constant(1, 1, 1.0 / std::sqrt(static_cast<double>(n))));
  const auto s = extract_kc(scalar, Idempotent::identity(1), 0.25, 1000);
  CHECK((s.m == 16000 || s.m == 15999));
  CHECK(s.k(0, 0) == doctest::Approx(s.det));
  CHECK(s.det == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("extract_kc errors") {
  const auto mats = scaled_track(100);
  CHECK_THROWS_AS(extract_kc(mats, Idempotent::identity(2), 1.0, 10), Error);
  CHECK_THROWS_AS(extract_kc(mats, Idempotent::identity(2), 0.0, 10), Error);
  try {
    (void)extract_kc(mats, Idempotent::identity(2), 0.5, 80);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::horizon);
    CHECK(std::string(e.what()) == "insufficient normalizer horizon");
  }
  // Without a base index the largest admissible one is used.
  const auto kc = extract_kc(mats, Idempotent::identity(2), 0.45);
  CHECK(kc.n == 44);
  CHECK(kc.m == 97);
}

TEST_CASE("approach_idempotent") {
  const auto law = GaussianLaw::standard(2);
  const auto j = Idempotent::diagonal({1, 0});
  CHECK(max_abs(approach_idempotent(law, j, 10) - 0.9 * j.mat()) < 1e-14);
  CHECK(max_abs(approach_idempotent(GaussianLaw::standard(2), Idempotent::identity(2), 4) - 0.75 * Mat::Identity(2, 2)) < 1e-14);

  // An oblique projection is not a member of D(N(0, I)).
  Mat oblique(2, 2);
  oblique << 1, 1, 0, 0;
  CHECK_THROWS_AS(approach_idempotent(law, Idempotent(oblique), 10), Error);

  for (int trial = 0; trial < 200; ++trial) {
    auto g = rng_for(trial, 28);
    const int d = uniform_int(g, 2, 4);
    const auto l = GaussianLaw::centered(random_spd(g, d));
    // Σ-compatible projection: Σ^{1/2} P Σ^{-1/2} with P orthogonal.
    const Mat basis = random_orthogonal(g, d).leftCols(uniform_int(g, 1, d));
    const Idempotent jp(sqrt_spd(l.cov) * basis * basis.transpose() * inv_sqrt_spd(l.cov), 1e-8);
    const std::size_t n = static_cast<std::size_t>(uniform_int(g, 2, 1000));
    const Mat t = approach_idempotent(l, jp, n);
    CHECK(op_norm(t - jp.mat()) <= 1.0 / static_cast<double>(n) * op_norm(jp.mat()) + 1e-12);
    CHECK(gaussian_membership(l, t).margin >= -kDefaultTol);
    CHECK(max_abs(jp.mat() * t - t) < 1e-10);
    CHECK(max_abs(t * jp.mat() - t) < 1e-10);
  }
}

TEST_CASE("primitive_decomposition") {
  const auto three = primitive_decomposition(GaussianLaw::standard(3));
  REQUIRE(three.size() == 3);
  for (int i = 0; i < 3; ++i) {
    Mat e = Mat::Zero(3, 3);
    e(i, i) = 1.0;
    CHECK(max_abs(three[static_cast<std::size_t>(i)].mat() - e) < 1e-14);
  }
  const auto one = primitive_decomposition(GaussianLaw::standard(1));
  REQUIRE(one.size() == 1);
  CHECK(one[0].mat()(0, 0) == doctest::Approx(1.0));

  for (int trial = 0; trial < 200; ++trial) {
    auto g = rng_for(trial, 29);
    const int d = uniform_int(g, 1, 5);
    const auto l = GaussianLaw::centered(random_spd(g, d));
    const auto parts = primitive_decomposition(l);
    Mat sum = Mat::Zero(d, d);
    for (std::size_t a = 0; a < parts.size(); ++a) {
      sum += parts[a].mat();
      CHECK(gaussian_membership(l, parts[a].mat()).member);
      for (std::size_t b = 0; b < parts.size(); ++b)
        if (a != b) CHECK(max_abs(parts[a].mat() * parts[b].mat()) < 1e-8);
    }
    CHECK(max_abs(sum - Mat::Identity(d, d)) < 1e-8);
  }
}

TEST_CASE("build_cw") {
  const double n = 1e4;
  const CwBlock scalar{Idempotent::identity(1), Mat::Constant(1, 1, 1.0 - 1.0 / n)};
  CHECK(std::abs(build_cw({scalar}, 1.0)(0, 0) - std::exp(-1.0)) <= 1e-3);
  CHECK(max_abs(build_cw({scalar}, 0.0) - Mat::Identity(1, 1)) == 0.0);
  CHECK_THROWS_AS(build_cw({scalar}, -1.0), Error);
  CHECK_THROWS_AS(build_cw({CwBlock{Idempotent::identity(1), Mat::Constant(1, 1, 1.0)}}, 1.0), Error);

  // q scalar blocks on the coordinate axes.
  for (int q = 1; q <= 3; ++q) {
    std::vector<CwBlock> blocks;
    std::vector<int> mask(static_cast<std::size_t>(q), 0);
    for (int r = 0; r < q; ++r) {
      std::fill(mask.begin(), mask.end(), 0);
      mask[static_cast<std::size_t>(r)] = 1;
      const auto j = Idempotent::diagonal(mask);
      blocks.push_back({j, (1.0 - 1.0 / n) * j.mat()});
    }
    for (double w : {0.5, 1.0, 2.0}) CHECK(std::abs(build_cw(blocks, w).determinant() - std::exp(-q * w)) <= 1e-3);
    const Mat half = build_cw(blocks, 0.5);
    CHECK(op_norm(half * half - build_cw(blocks, 1.0)) <= 1e-2);
  }
}

TEST_CASE("build_cw determinant law decays like 1/n") {
  // |det C_w − e^{−qw}| · n stays bounded along n.
  double worst = 0.0;
  for (double n : {1e2, 1e3, 1e4, 1e5}) {
    for (int q = 1; q <= 3; ++q) {
      std::vector<CwBlock> blocks;
      for (int r = 0; r < q; ++r) {
        std::vector<int> mask(static_cast<std::size_t>(q), 0);
        mask[static_cast<std::size_t>(r)] = 1;
        const auto j = Idempotent::diagonal(mask);
        blocks.push_back({j, (1.0 - 1.0 / n) * j.mat()});
      }
      for (double w : {0.5, 1.0, 2.0})
        worst = std::max(worst, n * std::abs(build_cw(blocks, w).determinant() - std::exp(-q * w)));
    }
  }
  CHECK(worst <= 10.0);
}

TEST_CASE("integer_part_gap") {
  CHECK(integer_part_gap(1.5, 1.5) == 1);
  CHECK(integer_part_gap(1.0, 2.0) == 0);
  for (int a = 0; a <= 64; ++a)
    for (int b = 0; b <= 64; ++b) {
      const int gap = integer_part_gap(a / 16.0, b / 16.0);
      REQUIRE((gap == 0 || gap == 1));
    }
  for (int trial = 0; trial < kTrials; ++trial) {
    auto g = rng_for(trial, 30);
    const int gap = integer_part_gap(uniform(g, -50, 50), uniform(g, -50, 50));
    REQUIRE((gap == 0 || gap == 1));
  }
}

TEST_CASE("extract_generator examples") {
  const auto law = GaussianLaw::standard(2);
  std::map<double, Mat> cw;
  for (double w : {0.25, 0.5, 1.0}) cw[w] = std::exp(-w) * Mat::Identity(2, 2);
  const auto cert = extract_generator(cw, law, {0.25, 0.5, 1, 2, 4});
  CHECK(max_abs(cert.q - Mat::Identity(2, 2)) < 1e-12);
  CHECK(cert.consistency_residual < 1e-12);
  CHECK(cert.consistent);
  CHECK(cert.holds());

  Mat s(2, 2);
  s << 0, 0.7, -0.7, 0;
  const Mat gen = Mat::Identity(2, 2) + s;
  std::map<double, Mat> rot;
  for (double w : {0.25, 0.5, 1.0}) rot[w] = mat_exp(-gen, w);
  CHECK(max_abs(extract_generator(rot, law, {1.0}).q - gen) < 1e-8);

  std::map<double, Mat> singular = cw;
  singular[2.0] = Mat::Zero(2, 2);
  try {
    (void)extract_generator(singular, law, {1.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate);
    CHECK(std::string(e.what()).find("degenerate semigroup sample") == 0);
  }
}

TEST_CASE("generator certificates") {
  for (int trial = 0; trial < kTrials; ++trial) {
    auto g = rng_for(trial, 31);
    const int d = uniform_int(g, 1, 4);
    const Mat skew = randn(g, d, d, 0.2);
    const Mat q = random_spd(g, d, 0.2, 2.0) + (skew - skew.transpose());
    bool principal = true;
    for (const auto& ev : eigenvalues(q)) principal = principal && 2.0 * std::abs(ev.imag()) < 3.0;
    if (!principal) continue;
    std::map<double, Mat> cw;
    for (double w : {0.25, 0.5, 1.0, 2.0}) cw[w] = mat_exp(-q, w);
    const std::vector<double> t_grid = {0.25, 0.5, 1, 2, 4};
    const auto cert = extract_generator(cw, GaussianLaw::standard(d), t_grid);
    REQUIRE(max_abs(cert.q - q) < 1e-8);
    REQUIRE(cert.spectral_margin > 0.0);
    // Symmetric part positive: e^{-tQ} contracts N(0, I).
    for (double t : t_grid) REQUIRE(cert.membership_margins.at(t) >= -1e-6);
    REQUIRE(op_norm(mat_exp(-cert.q, 20.0 / cert.spectral_margin)) < 1e-6);
  }
}
