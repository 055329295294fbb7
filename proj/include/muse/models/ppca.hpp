#pragma once

#include <cmath>

#include "muse/model/problem.hpp"

namespace muse {

/// Probabilistic principal component analysis with automatic relevance
/// determination:
///
///   alpha_i ~ InverseGamma(1, 1)       i in components
///   W_ki    ~ Normal(0, sqrt(alpha_i)) k in observed dims
///   Z_ij    ~ Normal(0, 1)             j in observations
///   X_kjl   ~ Normal((W Z)_kj, 1)      l in batches
///
/// theta is log alpha; latent z packs [vec(W), vec(Z)] column-major. The
/// data term is bilinear in (W, Z); its Hessian-vector product carries the
/// Gauss-Newton and curvature cross terms exactly.
class PpcaModel final : public Problem {
 public:
  PpcaModel(Eigen::Index n_components = 10, Eigen::Index n_obs = 100,
            Eigen::Index n_samples = 100, Eigen::Index n_batches = 5)
      : nc_(n_components), no_(n_obs), nt_(n_samples), nb_(n_batches) {}

  Eigen::Index theta_dim() const override { return nc_; }
  Eigen::Index latent_dim() const override { return no_ * nc_ + nc_ * nt_; }
  Eigen::Index data_dim() const override { return no_ * nt_ * nb_; }
  std::string name() const override { return "ppca"; }

  std::vector<std::string> theta_labels() const override {
    std::vector<std::string> labels;
    for (Eigen::Index i = 0; i < nc_; ++i)
      labels.push_back("log_alpha_" + std::to_string(i + 1));
    return labels;
  }
  std::vector<std::string> theta_labels_native() const override {
    std::vector<std::string> labels;
    for (Eigen::Index i = 0; i < nc_; ++i)
      labels.push_back("alpha_" + std::to_string(i + 1));
    return labels;
  }

  SimPair sample(const RandomKey& key, const Vec& theta) const override {
    Vec z(latent_dim());
    z.head(no_ * nc_) = standard_normal_stream(key.fork(0), no_ * nc_);
    z.tail(nc_ * nt_) = standard_normal_stream(key.fork(1), nc_ * nt_);
    auto W = mutable_w(z);
    for (Eigen::Index i = 0; i < nc_; ++i)
      W.col(i) *= std::exp(theta[i] / 2.0);

    Mat M = map_w(z) * map_z(z);
    Vec eps = standard_normal_stream(key.fork(2), data_dim());
    SimPair out;
    out.z = std::move(z);
    out.x.resize(data_dim());
    for (Eigen::Index l = 0; l < nb_; ++l) {
      Eigen::Map<Mat> Xl(out.x.data() + l * no_ * nt_, no_, nt_);
      Xl = M + Eigen::Map<const Mat>(eps.data() + l * no_ * nt_, no_, nt_);
    }
    return out;
  }

  double logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    auto W = map_w(z);
    auto Z = map_z(z);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < nc_; ++i) {
      const double t = theta[i];
      // InverseGamma(1,1) on alpha plus the log-transform Jacobian.
      lp += -t - std::exp(-t);
      lp += -0.5 * std::exp(-t) * W.col(i).squaredNorm() -
            0.5 * static_cast<double>(no_) * t;
    }
    lp += -0.5 * Z.squaredNorm();
    Mat M = W * Z;
    for (Eigen::Index l = 0; l < nb_; ++l)
      lp += -0.5 * (batch(x, l) - M).squaredNorm();
    return lp;
  }

  Vec grad_z_logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    auto W = map_w(z);
    auto Z = map_z(z);
    Mat R = residual_sum(x, W * Z);
    Vec g(latent_dim());
    auto GW = mutable_w(g);
    auto GZ = mutable_z(g);
    GW = R * Z.transpose();
    for (Eigen::Index i = 0; i < nc_; ++i)
      GW.col(i) -= std::exp(-theta[i]) * W.col(i);
    GZ = W.transpose() * R - Z;
    return g;
  }

  Vec grad_theta_logp(const Vec& /*x*/, const Vec& z,
                      const Vec& theta) const override {
    auto W = map_w(z);
    Vec g(nc_);
    for (Eigen::Index i = 0; i < nc_; ++i) {
      const double e = std::exp(-theta[i]);
      g[i] = -1.0 + e + 0.5 * e * W.col(i).squaredNorm() -
             0.5 * static_cast<double>(no_);
    }
    return g;
  }

  Vec hvp_zz(const Vec& x, const Vec& z, const Vec& theta,
             const Vec& v) const override {
    auto W = map_w(z);
    auto Z = map_z(z);
    auto VW = map_w(v);
    auto VZ = map_z(v);
    Mat R = residual_sum(x, W * Z);
    Mat tR = -static_cast<double>(nb_) * (VW * Z + W * VZ);
    Vec out(latent_dim());
    auto OW = mutable_w(out);
    auto OZ = mutable_z(out);
    OW = tR * Z.transpose() + R * VZ.transpose();
    for (Eigen::Index i = 0; i < nc_; ++i)
      OW.col(i) -= std::exp(-theta[i]) * VW.col(i);
    OZ = VW.transpose() * R + W.transpose() * tR - VZ;
    return out;
  }

  Vec hessian_zz_diag(const Vec& /*x*/, const Vec& z,
                      const Vec& theta) const override {
    auto W = map_w(z);
    auto Z = map_z(z);
    Vec d(latent_dim());
    auto DW = mutable_w(d);
    auto DZ = mutable_z(d);
    const double nb = static_cast<double>(nb_);
    for (Eigen::Index i = 0; i < nc_; ++i) {
      DW.col(i).setConstant(-std::exp(-theta[i]) -
                            nb * Z.row(i).squaredNorm());
      DZ.row(i).setConstant(-1.0 - nb * W.col(i).squaredNorm());
    }
    return d;
  }

  Vec grad_theta_of_grad_z(const RandomKey& key, const Vec& theta_prime,
                           const Vec& /*theta_bar*/, const Vec& z,
                           Eigen::Index j) const override {
    Mat Dj = sim_mean_tangent(key, theta_prime, j);
    auto W = map_w(z);
    auto Z = map_z(z);
    Vec out(latent_dim());
    const double nb = static_cast<double>(nb_);
    mutable_w(out) = nb * Dj * Z.transpose();
    mutable_z(out) = nb * W.transpose() * Dj;
    return out;
  }

  // grad_theta_logp does not depend on x.
  Vec grad_theta_of_grad_theta(const RandomKey& /*key*/,
                               const Vec& /*theta_prime*/,
                               const Vec& /*theta_bar*/, const Vec& /*z*/,
                               Eigen::Index /*j*/) const override {
    return Vec::Zero(nc_);
  }

  Vec grad_theta_dot_grad_z(const Vec& /*x*/, const Vec& z, const Vec& theta,
                            const Vec& v) const override {
    auto W = map_w(z);
    auto VW = map_w(v);
    Vec out(nc_);
    for (Eigen::Index i = 0; i < nc_; ++i)
      out[i] = std::exp(-theta[i]) * W.col(i).dot(VW.col(i));
    return out;
  }

  Vec to_unconstrained(const Vec& theta_native) const override {
    Vec u(nc_);
    for (Eigen::Index i = 0; i < nc_; ++i) {
      if (!(theta_native[i] > 0.0))
        throw ModelError("ppca: alpha must be positive");
      u[i] = std::log(theta_native[i]);
    }
    return u;
  }
  Vec from_unconstrained(const Vec& theta_u) const override {
    return theta_u.array().exp();
  }

  Eigen::Index n_components() const { return nc_; }
  Eigen::Index n_obs() const { return no_; }
  Eigen::Index n_samples() const { return nt_; }
  Eigen::Index n_batches() const { return nb_; }

 private:
  Eigen::Map<const Mat> map_w(const Vec& z) const {
    return {z.data(), no_, nc_};
  }
  Eigen::Map<const Mat> map_z(const Vec& z) const {
    return {z.data() + no_ * nc_, nc_, nt_};
  }
  Eigen::Map<Mat> mutable_w(Vec& z) const { return {z.data(), no_, nc_}; }
  Eigen::Map<Mat> mutable_z(Vec& z) const {
    return {z.data() + no_ * nc_, nc_, nt_};
  }
  Eigen::Map<const Mat> batch(const Vec& x, Eigen::Index l) const {
    return {x.data() + l * no_ * nt_, no_, nt_};
  }

  // sum_l X_l - n_batches * M
  Mat residual_sum(const Vec& x, const Mat& M) const {
    Mat R = -static_cast<double>(nb_) * M;
    for (Eigen::Index l = 0; l < nb_; ++l) R += batch(x, l);
    return R;
  }

  // d/dtheta'_j of the simulated mean W(theta') Z: rank-one in the
  // perturbed column.
  Mat sim_mean_tangent(const RandomKey& key, const Vec& theta_prime,
                       Eigen::Index j) const {
    Vec eps_w = standard_normal_stream(key.fork(0), no_ * nc_);
    Vec eps_z = standard_normal_stream(key.fork(1), nc_ * nt_);
    Eigen::Map<const Mat> EW(eps_w.data(), no_, nc_);
    Eigen::Map<const Mat> EZ(eps_z.data(), nc_, nt_);
    Vec wj = 0.5 * std::exp(theta_prime[j] / 2.0) * EW.col(j);
    return wj * EZ.row(j);
  }

  Eigen::Index nc_, no_, nt_, nb_;
};

}  // namespace muse
