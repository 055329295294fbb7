#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "muse/errors.hpp"
#include "muse/numerics/finite_diff.hpp"
#include "muse/numerics/linalg.hpp"
#include "muse/numerics/random.hpp"

namespace muse {

/// One simulated realization: data x and the latent z that produced it.
/// A deterministic function of (key, theta).
struct SimPair {
  Vec x;
  Vec z;
};

/// The contract an inference problem implements for the engine: joint
/// log-density over (x, z, theta) with derivative oracles, a
/// reparameterized simulator, and unconstrained-space transforms for
/// theta. All operations must be pure; the engine evaluates them from
/// many threads on shared instances.
///
/// theta is always the engine-space (unconstrained) parameter vector, and
/// logp includes the log-Jacobian of the native->unconstrained transform.
/// Additive constants in logp are arbitrary.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual Eigen::Index theta_dim() const = 0;
  virtual Eigen::Index latent_dim() const = 0;
  virtual Eigen::Index data_dim() const = 0;
  virtual std::string name() const = 0;

  virtual std::vector<std::string> theta_labels() const {
    std::vector<std::string> labels;
    for (Eigen::Index i = 0; i < theta_dim(); ++i)
      labels.push_back("theta_" + std::to_string(i));
    return labels;
  }
  virtual std::vector<std::string> theta_labels_native() const {
    return theta_labels();
  }

  /// Draw z ~ P(z|theta), x ~ P(x|z,theta) with all noise taken from
  /// standard draws keyed by `key`: theta -> x(key, theta) is smooth at
  /// fixed key.
  virtual SimPair sample(const RandomKey& key, const Vec& theta) const = 0;

  /// Joint log-density log P(x, z | theta) + log P(theta), up to a
  /// constant. -inf is allowed outside the support; NaN is not.
  virtual double logp(const Vec& x, const Vec& z, const Vec& theta) const = 0;

  virtual Vec grad_z_logp(const Vec& x, const Vec& z,
                          const Vec& theta) const = 0;

  virtual Vec grad_theta_logp(const Vec& x, const Vec& z,
                              const Vec& theta) const = 0;

  /// (d^2 logp / dz dz) . v, matrix-free.
  virtual Vec hvp_zz(const Vec& x, const Vec& z, const Vec& theta,
                     const Vec& v) const = 0;

  /// Fused objective for the MAP solver; models may share work between the
  /// value and the gradient.
  virtual std::pair<double, Vec> logp_and_grad_z(const Vec& x, const Vec& z,
                                                 const Vec& theta) const {
    return {logp(x, z, theta), grad_z_logp(x, z, theta)};
  }

  /// Columnwise hvp_zz. Models with shared per-point setup (e.g. a fixed
  /// Hessian diagonal) can amortize it across columns; results must match
  /// hvp_zz column by column.
  virtual Mat hvp_zz_multi(const Vec& x, const Vec& z, const Vec& theta,
                           const Mat& V) const {
    Mat out(V.rows(), V.cols());
    for (Eigen::Index j = 0; j < V.cols(); ++j)
      out.col(j) = hvp_zz(x, z, theta, V.col(j));
    return out;
  }

  /// Exact diagonal of d^2 logp / dz dz when the model can provide it
  /// (used for Jacobi preconditioning of the implicit-differentiation
  /// solves). Empty when unavailable.
  virtual Vec hessian_zz_diag(const Vec& /*x*/, const Vec& /*z*/,
                              const Vec& /*theta*/) const {
    return Vec();
  }

  // -- Mixed second-order oracles ------------------------------------------
  //
  // Both differentiate through the simulator only: theta' perturbs the
  // simulated data x(key, theta') while z and the density's own theta stay
  // fixed. Defaults are central differences in theta'_j with re-simulation
  // at the same key (2 simulator calls + 2 gradient calls, no MAP solve).

  /// d/dtheta'_j [ grad_z_logp(x(key, theta'), z, theta_bar) ].
  virtual Vec grad_theta_of_grad_z(const RandomKey& key, const Vec& theta_prime,
                                   const Vec& theta_bar, const Vec& z,
                                   Eigen::Index j) const {
    return fd_grad_theta_of_grad_z(key, theta_prime, theta_bar, z, j);
  }

  /// d/dtheta'_j [ grad_theta_logp(x(key, theta'), z, theta_bar) ].
  virtual Vec grad_theta_of_grad_theta(const RandomKey& key,
                                       const Vec& theta_prime,
                                       const Vec& theta_bar, const Vec& z,
                                       Eigen::Index j) const {
    return fd_grad_theta_of_grad_theta(key, theta_prime, theta_bar, z, j);
  }

  /// d/dtheta_i [ grad_z_logp(x, z, theta) . v ] at fixed (x, z): the mixed
  /// z-theta second derivative applied to v. Default is a directional
  /// central difference of grad_theta_logp along v in z.
  virtual Vec grad_theta_dot_grad_z(const Vec& x, const Vec& z,
                                    const Vec& theta, const Vec& v) const {
    return fd_grad_theta_dot_grad_z(x, z, theta, v);
  }

  // FD reference implementations of the mixed oracles, always available so
  // analytic overrides can be cross-checked against them.

  Vec fd_grad_theta_of_grad_z(const RandomKey& key, const Vec& theta_prime,
                              const Vec& theta_bar, const Vec& z,
                              Eigen::Index j) const {
    const double eps = mixed_fd_step() * (1.0 + std::abs(theta_prime[j]));
    Vec tp = theta_prime, tm = theta_prime;
    tp[j] += eps;
    tm[j] -= eps;
    Vec gp = grad_z_logp(sample(key, tp).x, z, theta_bar);
    Vec gm = grad_z_logp(sample(key, tm).x, z, theta_bar);
    return (gp - gm) / (2.0 * eps);
  }

  Vec fd_grad_theta_of_grad_theta(const RandomKey& key, const Vec& theta_prime,
                                  const Vec& theta_bar, const Vec& z,
                                  Eigen::Index j) const {
    const double eps = mixed_fd_step() * (1.0 + std::abs(theta_prime[j]));
    Vec tp = theta_prime, tm = theta_prime;
    tp[j] += eps;
    tm[j] -= eps;
    Vec gp = grad_theta_logp(sample(key, tp).x, z, theta_bar);
    Vec gm = grad_theta_logp(sample(key, tm).x, z, theta_bar);
    return (gp - gm) / (2.0 * eps);
  }

  Vec fd_grad_theta_dot_grad_z(const Vec& x, const Vec& z, const Vec& theta,
                               const Vec& v) const {
    const double vn = v.norm();
    if (vn == 0.0) return Vec::Zero(theta_dim());
    const double eps = 1e-5 * (1.0 + z.cwiseAbs().maxCoeff()) / vn;
    Vec gp = grad_theta_logp(x, z + eps * v, theta);
    Vec gm = grad_theta_logp(x, z - eps * v, theta);
    return (gp - gm) / (2.0 * eps);
  }

  /// Relative FD step for the defaulted mixed oracles. Larger than the
  /// gradient-check step because the simulator path amplifies rounding.
  virtual double mixed_fd_step() const { return 1e-4; }

  // -- Transforms ------------------------------------------------------------

  /// Native -> unconstrained theta. Throws ModelError outside the support.
  virtual Vec to_unconstrained(const Vec& theta_native) const {
    return theta_native;
  }
  /// Unconstrained -> native theta; inverse of to_unconstrained.
  virtual Vec from_unconstrained(const Vec& theta_u) const { return theta_u; }
};

using ProblemPtr = std::shared_ptr<const Problem>;

}  // namespace muse
