#include <catch2/catch_amalgamated.hpp>

#include "muse/numerics/finite_diff.hpp"
#include "muse/numerics/linalg.hpp"
#include "muse/numerics/parallel.hpp"
#include "muse/numerics/random.hpp"

using namespace muse;

TEST_CASE("standard normal stream is deterministic per key") {
  RandomKey key{0, 0};
  Vec a = standard_normal_stream(key, 3);
  Vec b = standard_normal_stream(key, 3);
  REQUIRE(a == b);

  // Longer request reproduces the same prefix (pure indexed draws).
  Vec c = standard_normal_stream(key, 10);
  REQUIRE(c.head(3) == a);
}

TEST_CASE("distinct streams differ") {
  Vec a = standard_normal_stream(RandomKey{0, 0}, 8);
  Vec b = standard_normal_stream(RandomKey{0, 1}, 8);
  REQUIRE((a - b).cwiseAbs().maxCoeff() > 1e-8);

  Vec c = standard_normal_stream(RandomKey{1, 0}, 8);
  REQUIRE((a - c).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("forked keys are stable and independent") {
  RandomKey key{42, 7};
  REQUIRE(key.fork(0) == key.fork(0));
  REQUIRE(!(key.fork(0) == key.fork(1)));
  Vec a = standard_normal_stream(key.fork(0), 8);
  Vec b = standard_normal_stream(key.fork(1), 8);
  REQUIRE((a - b).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("normal stream moments satisfy CLT bounds") {
  const Eigen::Index n = 1000000;
  Vec draws = standard_normal_stream(RandomKey{1234, 0}, n);
  const double mean = draws.mean();
  const double var = (draws.array() - mean).square().sum() / (n - 1);
  REQUIRE(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::abs(var - 1.0) < 0.01);
  REQUIRE(draws.allFinite());
}

TEST_CASE("central difference jacobian: identity and constant") {
  Vec x0(3);
  x0 << 0.3, -1.2, 2.0;
  Vec eps = fd_default_steps(x0);

  Mat J = central_difference_jacobian([](const Vec& x) { return x; }, x0, eps);
  REQUIRE((J - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-9);

  Mat Jc = central_difference_jacobian(
      [](const Vec& x) { return Vec(Vec::Ones(2)); }, x0, eps);
  REQUIRE(Jc.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("central difference jacobian matches analytic quadratic") {
  // f(x) = (x1^2, x1 x2) at (1, 2): J = [[2, 0], [2, 1]].
  Vec x0(2);
  x0 << 1.0, 2.0;
  Vec eps = Vec::Constant(2, 1e-5);
  int evals = 0;
  Mat J = central_difference_jacobian(
      [&](const Vec& x) {
        ++evals;
        Vec f(2);
        f << x[0] * x[0], x[0] * x[1];
        return f;
      },
      x0, eps);
  Mat expected(2, 2);
  expected << 2, 0, 2, 1;
  REQUIRE((J - expected).cwiseAbs().maxCoeff() < 1e-8);
  REQUIRE(evals == 4);  // exactly 2 * dim evaluations
}

TEST_CASE("central difference jacobian reports non-finite coordinates") {
  Vec x0 = Vec::Zero(2);
  REQUIRE_THROWS_WITH(
      central_difference_jacobian(
          [](const Vec& x) {
            Vec f(1);
            f[0] = x[1] > 0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
            return f;
          },
          x0, Vec::Constant(2, 1e-3)),
      Catch::Matchers::ContainsSubstring("coordinate 1"));
}

TEST_CASE("fd jacobian of a quadratic form meets the default-step accuracy") {
  // Property: gradient of 0.5 x'Ax matches A_sym x to rel error <= 1e-6.
  const Eigen::Index n = 6;
  Mat A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      A(i, j) = standard_normal_at(RandomKey{5, 0}, i * n + j);
  Mat Asym = 0.5 * (A + A.transpose());
  Vec x0 = standard_normal_stream(RandomKey{6, 0}, n) * 2.0;

  Mat J = central_difference_jacobian(
      [&](const Vec& x) { return Vec(Asym * x); }, x0, fd_default_steps(x0));
  const double rel =
      (J - Asym).cwiseAbs().maxCoeff() / Asym.cwiseAbs().maxCoeff();
  REQUIRE(rel < 1e-6);
}

TEST_CASE("sample mean and covariance: hand-computed example") {
  std::vector<Vec> rows;
  Vec r1(2), r2(2);
  r1 << 1, 0;
  r2 << -1, 0;
  rows = {r1, r2};
  auto [mean, cov] = sample_mean_and_covariance(rows);
  REQUIRE(mean.cwiseAbs().maxCoeff() == 0.0);
  Mat expected(2, 2);
  expected << 2, 0, 0, 0;
  REQUIRE((cov - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sample covariance of identical rows is zero") {
  Vec r(3);
  r << 1.5, -2.0, 0.25;
  std::vector<Vec> rows{r, r, r, r};
  auto [mean, cov] = sample_mean_and_covariance(rows);
  REQUIRE((mean - r).cwiseAbs().maxCoeff() < 1e-15);
  REQUIRE(cov.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sample covariance needs two rows") {
  std::vector<Vec> rows{Vec::Zero(2)};
  REQUIRE_THROWS_AS(sample_mean_and_covariance(rows), Error);
}

TEST_CASE("sample covariance of standard normal pairs approaches identity") {
  std::vector<Vec> rows;
  RandomKey key{99, 0};
  for (int i = 0; i < 10000; ++i)
    rows.push_back(standard_normal_stream(key.fork(i), 2));
  auto [mean, cov] = sample_mean_and_covariance(rows);
  REQUIRE((cov - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sample covariance invariances") {
  std::vector<Vec> rows;
  for (int i = 0; i < 50; ++i)
    rows.push_back(standard_normal_stream(RandomKey{3, (std::uint64_t)i}, 3));
  auto [mean, cov] = sample_mean_and_covariance(rows);

  // Row permutation.
  std::vector<Vec> shuffled(rows.rbegin(), rows.rend());
  std::swap(shuffled[3], shuffled[17]);
  auto [mean2, cov2] = sample_mean_and_covariance(shuffled);
  REQUIRE((cov - cov2).cwiseAbs().maxCoeff() < 1e-12);

  // Adding a constant shifts the mean, not the covariance.
  Vec shift(3);
  shift << 10, -5, 2;
  std::vector<Vec> shifted;
  for (const Vec& r : rows) shifted.push_back(r + shift);
  auto [mean3, cov3] = sample_mean_and_covariance(shifted);
  REQUIRE((mean3 - mean - shift).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((cov - cov3).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("solve_small_linear: identity, diagonal, singular") {
  Mat I2 = Mat::Identity(2, 2);
  Mat B(2, 2);
  B << 1, 2, 3, 4;
  REQUIRE((solve_small_linear(I2, B) - B).cwiseAbs().maxCoeff() < 1e-14);

  Mat A(2, 2);
  A << 2, 0, 0, 4;
  Mat X = solve_small_linear(A, I2);
  Mat expected(2, 2);
  expected << 0.5, 0, 0, 0.25;
  REQUIRE((X - expected).cwiseAbs().maxCoeff() < 1e-14);

  Mat S(2, 2);
  S << 1, 1, 1, 1;
  REQUIRE_THROWS_AS(solve_small_linear(S, I2), SingularMatrixError);
}

TEST_CASE("solve_small_linear residual bound on a generic system") {
  const Eigen::Index n = 12;
  Mat A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      A(i, j) = standard_normal_at(RandomKey{21, 0}, i * n + j);
  A += 3.0 * Mat::Identity(n, n);
  Mat B(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      B(i, j) = standard_normal_at(RandomKey{22, 0}, i * 2 + j);
  Mat X = solve_small_linear(A, B);
  REQUIRE((A * X - B).cwiseAbs().maxCoeff() <=
          1e-8 * B.cwiseAbs().maxCoeff());
}

TEST_CASE("parallel_for writes every slot and rethrows") {
  std::vector<int> slots(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { slots[i] = static_cast<int>(i); });
  for (int i = 0; i < 100; ++i) REQUIRE(slots[i] == i);

  REQUIRE_THROWS_AS(parallel_for(10, 4,
                                 [&](std::size_t i) {
                                   if (i == 7) throw Error("boom");
                                 }),
                    Error);
}
