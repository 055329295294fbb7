#pragma once

#include <cmath>

#include "muse/model/problem.hpp"

namespace muse {

/// Conjugate validation model with every quantity closed-form:
///
///   z_j ~ Normal(0, exp(theta))   (variance exp(theta), scalar theta)
///   x_j = z_j + Normal(0, 1)
///
/// with a flat (default) or wide-Normal prior on theta. Marginally
/// x_j ~ Normal(0, 1 + e^theta), so the marginal MLE is
/// log(mean(x^2) - 1) and the Fisher information is
/// (n/2) (e^theta / (1 + e^theta))^2.
class GaussianLinearModel final : public Problem {
 public:
  explicit GaussianLinearModel(Eigen::Index n_data, double prior_std = 0.0)
      : n_(n_data), prior_std_(prior_std) {}

  Eigen::Index theta_dim() const override { return 1; }
  Eigen::Index latent_dim() const override { return n_; }
  Eigen::Index data_dim() const override { return n_; }
  std::string name() const override { return "gaussian-linear"; }

  SimPair sample(const RandomKey& key, const Vec& theta) const override {
    Vec eps_z = standard_normal_stream(key.fork(0), n_);
    Vec eps_x = standard_normal_stream(key.fork(1), n_);
    SimPair out;
    out.z = std::exp(theta[0] / 2.0) * eps_z;
    out.x = out.z + eps_x;
    return out;
  }

  double logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    const double t = theta[0];
    double lp = -0.5 * std::exp(-t) * z.squaredNorm() -
                0.5 * static_cast<double>(n_) * t -
                0.5 * (x - z).squaredNorm();
    if (prior_std_ > 0) lp += -0.5 * t * t / (prior_std_ * prior_std_);
    return lp;
  }

  Vec grad_z_logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    return (-std::exp(-theta[0])) * z + (x - z);
  }

  Vec grad_theta_logp(const Vec& /*x*/, const Vec& z,
                      const Vec& theta) const override {
    const double t = theta[0];
    Vec g(1);
    g[0] = 0.5 * std::exp(-t) * z.squaredNorm() - 0.5 * static_cast<double>(n_);
    if (prior_std_ > 0) g[0] += -t / (prior_std_ * prior_std_);
    return g;
  }

  Vec hvp_zz(const Vec& /*x*/, const Vec& /*z*/, const Vec& theta,
             const Vec& v) const override {
    return (-(std::exp(-theta[0]) + 1.0)) * v;
  }

  Vec hessian_zz_diag(const Vec& /*x*/, const Vec& /*z*/,
                      const Vec& theta) const override {
    return Vec::Constant(n_, -(std::exp(-theta[0]) + 1.0));
  }

  // x(theta') = e^{theta'/2} eps_z + eps_x, and grad_z is x - (...) with
  // unit coefficient on x, so the derivative is dx/dtheta' directly.
  Vec grad_theta_of_grad_z(const RandomKey& key, const Vec& theta_prime,
                           const Vec& /*theta_bar*/, const Vec& /*z*/,
                           Eigen::Index /*j*/) const override {
    Vec eps_z = standard_normal_stream(key.fork(0), n_);
    return 0.5 * std::exp(theta_prime[0] / 2.0) * eps_z;
  }

  // grad_theta_logp does not depend on x.
  Vec grad_theta_of_grad_theta(const RandomKey& /*key*/,
                               const Vec& /*theta_prime*/,
                               const Vec& /*theta_bar*/, const Vec& /*z*/,
                               Eigen::Index /*j*/) const override {
    return Vec::Zero(1);
  }

  Vec grad_theta_dot_grad_z(const Vec& /*x*/, const Vec& z, const Vec& theta,
                            const Vec& v) const override {
    Vec out(1);
    out[0] = std::exp(-theta[0]) * z.dot(v);
    return out;
  }

  /// Analytic latent MAP for fixed (x, theta).
  Vec analytic_map(const Vec& x, const Vec& theta) const {
    const double e = std::exp(theta[0]);
    return (e / (1.0 + e)) * x;
  }

  /// Marginal maximum likelihood estimate; requires mean(x^2) > 1.
  static double marginal_mle(const Vec& x) {
    double m2 = x.squaredNorm() / static_cast<double>(x.size());
    if (m2 <= 1.0)
      throw Error("gaussian-linear marginal MLE undefined: mean(x^2) <= 1");
    return std::log(m2 - 1.0);
  }

  /// Fisher information of theta for x ~ Normal(0, 1 + e^theta), n data.
  double fisher_information(double theta) const {
    const double r = std::exp(theta) / (1.0 + std::exp(theta));
    return 0.5 * static_cast<double>(n_) * r * r;
  }

 private:
  Eigen::Index n_;
  double prior_std_;  // 0: flat prior
};

}  // namespace muse
