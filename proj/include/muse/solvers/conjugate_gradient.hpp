#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "muse/errors.hpp"
#include "muse/numerics/linalg.hpp"

namespace muse {

struct CgOptions {
  double rtol = 1e-8;
  int max_iters = 0;  // 0: min(n, 10*ceil(sqrt(n)))
  // Optional preconditioner: applies M^{-1} to a residual.
  std::function<Vec(const Vec&)> precond;
};

struct CgReport {
  Vec solution;
  double residual_norm = 0.0;  // relative: ||r|| / ||b||
  int iterations = 0;
  bool converged = false;
};

inline int cg_default_max_iters(Eigen::Index n) {
  return static_cast<int>(
      std::min<double>(static_cast<double>(n),
                       10.0 * std::ceil(std::sqrt(static_cast<double>(n)))));
}

/// Preconditioned conjugate gradient for symmetric positive definite
/// operators. apply_A is called exactly iterations + 1 times (the +1
/// computes the initial residual). Throws NegativeCurvatureError when
/// p'Ap <= 0 is observed.
inline CgReport conjugate_gradient(
    const std::function<Vec(const Vec&)>& apply_A, const Vec& b, const Vec& x0,
    const CgOptions& opts = {}) {
  const Eigen::Index n = b.size();
  const int max_iters =
      opts.max_iters > 0 ? opts.max_iters : cg_default_max_iters(n);

  CgReport rep;
  rep.solution = x0;
  const double bnorm = b.norm();
  Vec r = b - apply_A(x0);
  if (bnorm == 0.0) {
    rep.solution = Vec::Zero(n);
    rep.converged = true;
    return rep;
  }

  Vec z = opts.precond ? opts.precond(r) : r;
  Vec p = z;
  double rz = r.dot(z);
  double op_scale = 0.0;  // largest Rayleigh-type quotient seen

  while (rep.iterations < max_iters) {
    if (r.norm() <= opts.rtol * bnorm) {
      rep.converged = true;
      break;
    }
    Vec Ap = apply_A(p);
    ++rep.iterations;
    const double pAp = p.dot(Ap);
    op_scale = std::max(op_scale, Ap.norm() / std::max(p.norm(), 1e-300));
    if (!(pAp > 0)) {
      // An eigendirection below ~1e-6 of the operator scale is numerically
      // flat at double precision: stall and report non-convergence.
      // Anything more negative is genuine indefiniteness.
      const double rayleigh = pAp / std::max(p.squaredNorm(), 1e-300);
      if (rayleigh > -1e-6 * std::max(op_scale, 1e-12)) break;
      std::ostringstream msg;
      msg << "conjugate_gradient: negative curvature p'Ap = " << pAp
          << " at iteration " << rep.iterations
          << "; operator is not positive definite";
      throw NegativeCurvatureError(msg.str(), p);
    }
    const double alpha = rz / pAp;
    rep.solution += alpha * p;
    r -= alpha * Ap;
    z = opts.precond ? opts.precond(r) : r;
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (!rep.converged) rep.converged = r.norm() <= opts.rtol * bnorm;
  rep.residual_norm = r.norm() / bnorm;
  return rep;
}

struct CgMultiReport {
  Mat solutions;                // one column per right-hand side
  std::vector<int> iterations;  // per column
  std::vector<double> residual_norms;
  std::vector<bool> converged;
  int batched_applies = 0;  // calls to the batched operator
};

/// Multi right-hand-side CG: k independent CG recurrences sharing batched
/// operator applications, so a model can amortize per-point setup across
/// columns. Column arithmetic is identical to conjugate_gradient as long as
/// apply_A_multi acts columnwise.
inline CgMultiReport conjugate_gradient_multi(
    const std::function<Mat(const Mat&)>& apply_A_multi, const Mat& B,
    const CgOptions& opts = {}) {
  const Eigen::Index n = B.rows();
  const Eigen::Index k = B.cols();
  const int max_iters =
      opts.max_iters > 0 ? opts.max_iters : cg_default_max_iters(n);

  CgMultiReport rep;
  rep.solutions = Mat::Zero(n, k);
  rep.iterations.assign(k, 0);
  rep.residual_norms.assign(k, 0.0);
  rep.converged.assign(k, false);

  Mat R = B;  // residuals (x0 = 0)
  Mat Z(n, k);
  for (Eigen::Index j = 0; j < k; ++j)
    Z.col(j) = opts.precond ? opts.precond(R.col(j)) : Vec(R.col(j));
  Mat P = Z;
  Vec rz(k), bnorm(k);
  double op_scale = 0.0;
  std::vector<bool> active(k, true);
  for (Eigen::Index j = 0; j < k; ++j) {
    rz[j] = R.col(j).dot(Z.col(j));
    bnorm[j] = B.col(j).norm();
    if (bnorm[j] == 0.0) {
      active[j] = false;
      rep.converged[j] = true;
    }
  }

  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!active[j]) continue;
      if (R.col(j).norm() <= opts.rtol * bnorm[j]) {
        rep.converged[j] = true;
        active[j] = false;
        continue;
      }
      cols.push_back(j);
    }
    if (cols.empty()) break;

    Mat Psub(n, cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) Psub.col(c) = P.col(cols[c]);
    Mat APsub = apply_A_multi(Psub);
    ++rep.batched_applies;

    for (std::size_t c = 0; c < cols.size(); ++c) {
      const Eigen::Index j = cols[c];
      ++rep.iterations[j];
      const double pAp = Psub.col(c).dot(APsub.col(c));
      op_scale = std::max(
          op_scale, APsub.col(c).norm() / std::max(Psub.col(c).norm(), 1e-300));
      if (!(pAp > 0)) {
        const double rayleigh =
            pAp / std::max(Psub.col(c).squaredNorm(), 1e-300);
        if (rayleigh > -1e-6 * std::max(op_scale, 1e-12)) {
          active[j] = false;  // numerically flat: stall, leave unconverged
          continue;
        }
        std::ostringstream msg;
        msg << "conjugate_gradient_multi: negative curvature p'Ap = " << pAp
            << " in column " << j << " at iteration " << rep.iterations[j];
        throw NegativeCurvatureError(msg.str(), Psub.col(c));
      }
      const double alpha = rz[j] / pAp;
      rep.solutions.col(j) += alpha * Psub.col(c);
      R.col(j) -= alpha * APsub.col(c);
      Vec zj = opts.precond ? opts.precond(R.col(j)) : Vec(R.col(j));
      const double rz_new = R.col(j).dot(zj);
      P.col(j) = zj + (rz_new / rz[j]) * P.col(j);
      rz[j] = rz_new;
    }
  }

  for (Eigen::Index j = 0; j < k; ++j) {
    if (bnorm[j] > 0.0) {
      rep.residual_norms[j] = R.col(j).norm() / bnorm[j];
      if (!rep.converged[j])
        rep.converged[j] = R.col(j).norm() <= opts.rtol * bnorm[j];
    }
  }
  return rep;
}

}  // namespace muse
