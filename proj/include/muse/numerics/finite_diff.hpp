#pragma once

#include <functional>
#include <sstream>

#include "muse/errors.hpp"
#include "muse/numerics/linalg.hpp"

namespace muse {

/// Default relative step for gradient checks: balances truncation against
/// rounding at 64-bit precision.
inline Vec fd_default_steps(const Vec& x0, double rel = 1e-5) {
  return rel * (Vec::Ones(x0.size()) + x0.cwiseAbs());
}

/// Central-difference Jacobian J_ij = [f_i(x0 + e_j eps_j) - f_i(x0 - e_j
/// eps_j)] / (2 eps_j). Exactly 2*dim(x0) evaluations of f.
inline Mat central_difference_jacobian(
    const std::function<Vec(const Vec&)>& f, const Vec& x0, const Vec& eps) {
  if (eps.size() != x0.size())
    throw Error("central_difference_jacobian: eps/x0 size mismatch");

  Mat jac;
  for (Eigen::Index j = 0; j < x0.size(); ++j) {
    Vec xp = x0, xm = x0;
    xp[j] += eps[j];
    xm[j] -= eps[j];
    Vec fp = f(xp);
    Vec fm = f(xm);
    for (int s = 0; s < 2; ++s) {
      const Vec& fv = s == 0 ? fp : fm;
      if (!fv.allFinite()) {
        std::ostringstream msg;
        msg << "central_difference_jacobian: non-finite f at coordinate " << j
            << " (" << (s == 0 ? "+" : "-") << "eps)";
        throw Error(msg.str());
      }
    }
    if (j == 0) jac.resize(fp.size(), x0.size());
    jac.col(j) = (fp - fm) / (2.0 * eps[j]);
  }
  return jac;
}

/// Directional central difference of a vector-valued map along v.
inline Vec central_difference_directional(
    const std::function<Vec(const Vec&)>& f, const Vec& x0, const Vec& v,
    double rel = 1e-5) {
  const double vn = v.norm();
  if (vn == 0.0) return Vec::Zero(f(x0).size());
  const double eps = rel * (1.0 + x0.cwiseAbs().maxCoeff()) / vn;
  Vec fp = f(x0 + eps * v);
  Vec fm = f(x0 - eps * v);
  return (fp - fm) / (2.0 * eps);
}

}  // namespace muse
