#include <catch2/catch_amalgamated.hpp>

#include "muse/numerics/random.hpp"
#include "muse/solvers/conjugate_gradient.hpp"
#include "muse/solvers/lbfgs.hpp"

using namespace muse;

TEST_CASE("lbfgs: quadratic bowl converges in a few iterations") {
  Vec z0 = standard_normal_stream(RandomKey{11, 0}, 8);
  auto objective = [](const Vec& z) {
    return std::make_pair(-0.5 * z.squaredNorm(), Vec(-z));
  };
  MapSolution sol = lbfgs_maximize(objective, z0);
  REQUIRE(sol.converged);
  REQUIRE(sol.iterations <= 3);
  REQUIRE(sol.z_hat.cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("lbfgs: gaussian-linear joint MAP matches the closed form") {
  // logp = -0.5 e^{-t} z^2 - 0.5 (x - z)^2 maximized at z = x e^t/(1+e^t).
  const double t = 0.4;
  Vec x = standard_normal_stream(RandomKey{12, 0}, 50) * 2.0;
  auto objective = [&](const Vec& z) {
    double lp = -0.5 * std::exp(-t) * z.squaredNorm() -
                0.5 * (x - z).squaredNorm();
    Vec g = -std::exp(-t) * z + (x - z);
    return std::make_pair(lp, g);
  };
  LbfgsOptions opts;
  opts.gtol = 1e-10;
  MapSolution sol = lbfgs_maximize(objective, Vec::Zero(50), opts);
  Vec expected = (std::exp(t) / (1.0 + std::exp(t))) * x;
  REQUIRE(sol.converged);
  REQUIRE((sol.z_hat - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("lbfgs: negated rosenbrock from the classic start") {
  auto objective = [](const Vec& z) {
    const double a = 1.0 - z[0];
    const double b = z[1] - z[0] * z[0];
    double f = -(a * a + 100.0 * b * b);
    Vec g(2);
    g[0] = -(-2.0 * a - 400.0 * z[0] * b);
    g[1] = -(200.0 * b);
    return std::make_pair(f, g);
  };
  Vec z0(2);
  z0 << -1.2, 1.0;
  LbfgsOptions opts;
  opts.gtol = 1e-10;
  opts.max_iters = 500;
  MapSolution sol = lbfgs_maximize(objective, z0, opts);
  REQUIRE(sol.converged);
  REQUIRE(std::abs(sol.z_hat[0] - 1.0) < 1e-6);
  REQUIRE(std::abs(sol.z_hat[1] - 1.0) < 1e-6);
}

TEST_CASE("lbfgs: finite termination on concave quadratics within memory") {
  // Strictly concave quadratic of dimension n <= memory: maximizer reached
  // within n+1 iterations to gradient norm 1e-10.
  for (Eigen::Index n : {2, 5, 8}) {
    Mat A = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      A(i, i) = 0.5 + 4.5 * uniform_at(RandomKey{13, (std::uint64_t)n}, i);
    // Mix with a rotation for non-axis-aligned curvature.
    Mat R(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        R(i, j) = standard_normal_at(RandomKey{14, (std::uint64_t)n}, i * n + j);
    Eigen::HouseholderQR<Mat> qr(R);
    Mat Q = qr.householderQ();
    Mat H = Q * A * Q.transpose();
    Vec b = standard_normal_stream(RandomKey{15, (std::uint64_t)n}, n);

    auto objective = [&](const Vec& z) {
      return std::make_pair(-0.5 * z.dot(H * z) + b.dot(z), Vec(b - H * z));
    };
    LbfgsOptions opts;
    opts.gtol = 1e-10 / std::max(1.0, b.norm());  // absolute 1e-10
    MapSolution sol = lbfgs_maximize(objective, Vec::Zero(n), opts);
    Vec expected = H.ldlt().solve(b);
    INFO("n=" << n << " iterations=" << sol.iterations
              << " grad_norm=" << sol.grad_norm);
    REQUIRE(sol.converged);
    REQUIRE(sol.grad_norm <= 1e-10);
    REQUIRE(sol.iterations <= n + 1);
    REQUIRE((sol.z_hat - expected).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("lbfgs: monotone objective and underflow diagnostics") {
  // Objective with a cliff: non-finite values force backtracking; if the
  // step underflows the solver reports converged=false.
  auto objective = [](const Vec& z) {
    if (z[0] > 1.0)
      return std::make_pair(std::numeric_limits<double>::quiet_NaN(), Vec(z));
    return std::make_pair(z[0], Vec(Vec::Ones(1)));  // unbounded slope 1
  };
  Vec z0 = Vec::Zero(1);
  LbfgsOptions opts;
  opts.max_iters = 200;
  MapSolution sol = lbfgs_maximize(objective, z0, opts);
  REQUIRE_FALSE(sol.converged);
  REQUIRE(sol.z_hat[0] <= 1.0);
  REQUIRE(std::isfinite(sol.objective));
}

TEST_CASE("lbfgs: non-finite start reports failure") {
  auto objective = [](const Vec& z) {
    return std::make_pair(std::numeric_limits<double>::infinity() * -1.0,
                          Vec(Vec::Zero(1)));
  };
  MapSolution sol = lbfgs_maximize(objective, Vec::Zero(1));
  REQUIRE_FALSE(sol.converged);
  REQUIRE(sol.iterations == 0);
}

TEST_CASE("cg: identity operator solves in one iteration") {
  Vec b = standard_normal_stream(RandomKey{16, 0}, 20);
  int applies = 0;
  CgReport rep = conjugate_gradient(
      [&](const Vec& v) {
        ++applies;
        return v;
      },
      b, Vec::Zero(20));
  REQUIRE(rep.converged);
  REQUIRE(rep.iterations == 1);
  REQUIRE(applies == rep.iterations + 1);
  REQUIRE((rep.solution - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cg: diagonal system solved exactly within n iterations") {
  const Eigen::Index n = 10;
  Vec d(n);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = static_cast<double>(i + 1);
  Vec b = Vec::Ones(n);
  int applies = 0;
  CgReport rep = conjugate_gradient(
      [&](const Vec& v) {
        ++applies;
        return Vec(d.cwiseProduct(v));
      },
      b, Vec::Zero(n));
  REQUIRE(rep.converged);
  REQUIRE(rep.iterations <= 10);
  REQUIRE(applies == rep.iterations + 1);
  for (Eigen::Index i = 0; i < n; ++i)
    REQUIRE(std::abs(rep.solution[i] - 1.0 / d[i]) < 1e-8);
}

TEST_CASE("cg: negative curvature raises") {
  Vec d(2);
  d << 1.0, -1.0;
  Vec b(2);
  b << 0.3, 1.0;
  REQUIRE_THROWS_AS(
      conjugate_gradient([&](const Vec& v) { return Vec(d.cwiseProduct(v)); },
                         b, Vec::Zero(2)),
      NegativeCurvatureError);
}

TEST_CASE("cg: numerically flat direction stalls without error") {
  // Operator with an exactly zero eigenvalue and b in its span: the first
  // search direction has p'Ap ~ 0; report non-convergence, not
  // indefiniteness.
  Vec d(3);
  d << 1.0, 1.0, 0.0;
  Vec b(3);
  b << 0.0, 0.0, 1.0;
  CgReport rep = conjugate_gradient(
      [&](const Vec& v) { return Vec(d.cwiseProduct(v)); }, b, Vec::Zero(3));
  REQUIRE_FALSE(rep.converged);
}

TEST_CASE("cg: residual norms are non-increasing on the test systems") {
  const Eigen::Index n = 30;
  Mat R(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      R(i, j) = standard_normal_at(RandomKey{17, 0}, i * n + j);
  Mat A = R * R.transpose() + 5.0 * Mat::Identity(n, n);
  Vec b = standard_normal_stream(RandomKey{18, 0}, n);

  std::vector<double> residuals;
  Vec x = Vec::Zero(n);
  Vec r = b;
  Vec p = r;
  double rz = r.dot(r);
  residuals.push_back(r.norm());
  for (int it = 0; it < 40 && r.norm() > 1e-10 * b.norm(); ++it) {
    Vec Ap = A * p;
    const double alpha = rz / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    const double rz_new = r.dot(r);
    p = r + (rz_new / rz) * p;
    rz = rz_new;
    residuals.push_back(r.norm());
  }
  for (std::size_t k = 1; k < residuals.size(); ++k)
    REQUIRE(residuals[k] <= residuals[k - 1] + 1e-12);
}

TEST_CASE("cg: jacobi preconditioning preserves the solution") {
  const Eigen::Index n = 40;
  Vec d(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d[i] = 1.0 + 50.0 * uniform_at(RandomKey{19, 0}, i);
  Vec b = standard_normal_stream(RandomKey{20, 0}, n);
  auto apply = [&](const Vec& v) { return Vec(d.cwiseProduct(v)); };

  CgReport plain = conjugate_gradient(apply, b, Vec::Zero(n));
  CgOptions with_precond;
  Vec dinv = d.cwiseInverse();
  with_precond.precond = [&](const Vec& r) { return Vec(r.cwiseProduct(dinv)); };
  CgReport pre = conjugate_gradient(apply, b, Vec::Zero(n), with_precond);

  REQUIRE(pre.converged);
  REQUIRE(pre.iterations <= 2);  // exact preconditioner: one step
  REQUIRE((pre.solution - plain.solution).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("cg multi matches single-rhs CG bitwise") {
  const Eigen::Index n = 25;
  Vec d(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d[i] = 1.0 + 9.0 * uniform_at(RandomKey{23, 0}, i);
  Mat B(n, 3);
  for (Eigen::Index j = 0; j < 3; ++j)
    B.col(j) = standard_normal_stream(RandomKey{24, (std::uint64_t)j}, n);

  auto apply_one = [&](const Vec& v) { return Vec(d.cwiseProduct(v)); };
  auto apply_multi = [&](const Mat& V) {
    Mat out(V.rows(), V.cols());
    for (Eigen::Index j = 0; j < V.cols(); ++j)
      out.col(j) = d.cwiseProduct(V.col(j));
    return out;
  };

  CgMultiReport multi = conjugate_gradient_multi(apply_multi, B);
  for (Eigen::Index j = 0; j < 3; ++j) {
    CgReport single = conjugate_gradient(apply_one, B.col(j), Vec::Zero(n));
    REQUIRE(multi.converged[j]);
    REQUIRE(multi.iterations[j] == single.iterations);
    REQUIRE((multi.solutions.col(j) - single.solution).cwiseAbs().maxCoeff() ==
            0.0);
  }
}
