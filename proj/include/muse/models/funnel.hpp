#pragma once

#include <cmath>

#include "muse/model/problem.hpp"

namespace muse {

/// Several independent Neal's funnels embedded in one system, solved
/// jointly:
///
///   theta_i ~ Normal(0, 3)                        i in 0..n_params
///   z_ij    ~ Normal(0, exp(theta_i / 2))         j in 0..n_latent_per_param
///   x_ij    ~ Normal(tanh(z_ij), 1)
///
/// Scale arguments are standard deviations. Block i of z and x is the
/// index range [i*n_latent_per_param, (i+1)*n_latent_per_param).
class FunnelModel final : public Problem {
 public:
  FunnelModel(Eigen::Index n_params = 10, Eigen::Index n_latent_per_param = 500,
              double prior_scale = 3.0)
      : np_(n_params), nl_(n_latent_per_param), prior_scale_(prior_scale) {}

  Eigen::Index theta_dim() const override { return np_; }
  Eigen::Index latent_dim() const override { return np_ * nl_; }
  Eigen::Index data_dim() const override { return np_ * nl_; }
  std::string name() const override { return "funnel"; }

  SimPair sample(const RandomKey& key, const Vec& theta) const override {
    const Eigen::Index d = latent_dim();
    Vec eps_z = standard_normal_stream(key.fork(0), d);
    Vec eps_x = standard_normal_stream(key.fork(1), d);
    SimPair out;
    out.z.resize(d);
    out.x.resize(d);
    for (Eigen::Index i = 0; i < np_; ++i) {
      const double s = std::exp(theta[i] / 2.0);
      for (Eigen::Index j = i * nl_; j < (i + 1) * nl_; ++j) {
        out.z[j] = s * eps_z[j];
        out.x[j] = std::tanh(out.z[j]) + eps_x[j];
      }
    }
    return out;
  }

  double logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < np_; ++i) {
      const double inv_var = std::exp(-theta[i]);
      double zsq = 0.0, rsq = 0.0;
      for (Eigen::Index j = i * nl_; j < (i + 1) * nl_; ++j) {
        zsq += z[j] * z[j];
        const double r = x[j] - std::tanh(z[j]);
        rsq += r * r;
      }
      lp += -0.5 * inv_var * zsq - 0.5 * static_cast<double>(nl_) * theta[i] -
            0.5 * rsq -
            0.5 * theta[i] * theta[i] / (prior_scale_ * prior_scale_);
    }
    return lp;
  }

  Vec grad_z_logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    Vec g(latent_dim());
    for (Eigen::Index i = 0; i < np_; ++i) {
      const double inv_var = std::exp(-theta[i]);
      for (Eigen::Index j = i * nl_; j < (i + 1) * nl_; ++j) {
        const double t = std::tanh(z[j]);
        const double c = 1.0 - t * t;  // sech^2
        g[j] = -z[j] * inv_var + (x[j] - t) * c;
      }
    }
    return g;
  }

  std::pair<double, Vec> logp_and_grad_z(const Vec& x, const Vec& z,
                                         const Vec& theta) const override {
    double lp = 0.0;
    Vec g(latent_dim());
    for (Eigen::Index i = 0; i < np_; ++i) {
      const double inv_var = std::exp(-theta[i]);
      double zsq = 0.0, rsq = 0.0;
      for (Eigen::Index j = i * nl_; j < (i + 1) * nl_; ++j) {
        const double t = std::tanh(z[j]);
        const double c = 1.0 - t * t;
        const double r = x[j] - t;
        zsq += z[j] * z[j];
        rsq += r * r;
        g[j] = -z[j] * inv_var + r * c;
      }
      lp += -0.5 * inv_var * zsq - 0.5 * static_cast<double>(nl_) * theta[i] -
            0.5 * rsq -
            0.5 * theta[i] * theta[i] / (prior_scale_ * prior_scale_);
    }
    return {lp, std::move(g)};
  }

  Vec grad_theta_logp(const Vec& /*x*/, const Vec& z,
                      const Vec& theta) const override {
    Vec g(np_);
    for (Eigen::Index i = 0; i < np_; ++i) {
      double zsq = 0.0;
      for (Eigen::Index j = i * nl_; j < (i + 1) * nl_; ++j)
        zsq += z[j] * z[j];
      g[i] = 0.5 * std::exp(-theta[i]) * zsq - 0.5 * static_cast<double>(nl_) -
             theta[i] / (prior_scale_ * prior_scale_);
    }
    return g;
  }

  Vec hessian_zz_diag(const Vec& x, const Vec& z,
                      const Vec& theta) const override {
    Vec d(latent_dim());
    for (Eigen::Index i = 0; i < np_; ++i) {
      const double inv_var = std::exp(-theta[i]);
      for (Eigen::Index j = i * nl_; j < (i + 1) * nl_; ++j) {
        const double t = std::tanh(z[j]);
        const double c = 1.0 - t * t;
        d[j] = -inv_var - c * c - 2.0 * (x[j] - t) * c * t;
      }
    }
    return d;
  }

  Vec hvp_zz(const Vec& x, const Vec& z, const Vec& theta,
             const Vec& v) const override {
    return hessian_zz_diag(x, z, theta).cwiseProduct(v);
  }

  Mat hvp_zz_multi(const Vec& x, const Vec& z, const Vec& theta,
                   const Mat& V) const override {
    Vec d = hessian_zz_diag(x, z, theta);
    return V.array().colwise() * d.array();
  }

  // grad_z's data term is (x - tanh z) sech^2(z); only block j of x moves
  // with theta'_j, by d x_ij / d theta'_j = sech^2(ztilde) * ztilde / 2 at
  // the simulated latent ztilde = e^{theta'_j/2} eps_z.
  Vec grad_theta_of_grad_z(const RandomKey& key, const Vec& theta_prime,
                           const Vec& theta_bar, const Vec& z,
                           Eigen::Index j) const override {
    Vec eps_z = standard_normal_stream(key.fork(0), latent_dim());
    Vec out = Vec::Zero(latent_dim());
    const double s = std::exp(theta_prime[j] / 2.0);
    for (Eigen::Index n = j * nl_; n < (j + 1) * nl_; ++n) {
      const double zt = s * eps_z[n];
      const double tt = std::tanh(zt);
      const double dx = (1.0 - tt * tt) * 0.5 * zt;
      const double t = std::tanh(z[n]);
      out[n] = (1.0 - t * t) * dx;
    }
    (void)theta_bar;
    return out;
  }

  // grad_theta_logp does not depend on x.
  Vec grad_theta_of_grad_theta(const RandomKey& /*key*/,
                               const Vec& /*theta_prime*/,
                               const Vec& /*theta_bar*/, const Vec& /*z*/,
                               Eigen::Index /*j*/) const override {
    return Vec::Zero(np_);
  }

  Vec grad_theta_dot_grad_z(const Vec& /*x*/, const Vec& z, const Vec& theta,
                            const Vec& v) const override {
    Vec out(np_);
    for (Eigen::Index i = 0; i < np_; ++i) {
      double acc = 0.0;
      for (Eigen::Index j = i * nl_; j < (i + 1) * nl_; ++j)
        acc += z[j] * v[j];
      out[i] = std::exp(-theta[i]) * acc;
    }
    return out;
  }

  Eigen::Index n_params() const { return np_; }
  Eigen::Index n_latent_per_param() const { return nl_; }

 private:
  Eigen::Index np_;
  Eigen::Index nl_;
  double prior_scale_;
};

}  // namespace muse
