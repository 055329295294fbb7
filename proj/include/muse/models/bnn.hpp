#pragma once

#include <cmath>

#include "muse/model/problem.hpp"

namespace muse {

/// Bayesian neural network regression: a three-layer tanh network with no
/// bias terms interpolates noisy 1-D data,
///
///   sigma_i ~ LogNormal(0, 1)       i in layers 1..3
///   W_i     ~ Normal(0, sigma_i)    entries of layer i
///   tau     ~ Gamma(3, 1)           (shape-rate, mean 3)
///   Y_j     ~ Normal(NN(W)_j, 1/tau)
///
/// Scale arguments are standard deviations. The network maps cubic
/// polynomial features (c, c^2, c^3) of a scalar coordinate to 5 hidden
/// units and then to the output: 3*5 + 5*5 + 5*1 = 45 weights. theta is
/// (log sigma_1..3, log tau); latent z is the packed weights.
class BnnModel final : public Problem {
 public:
  static constexpr Eigen::Index kFeatures = 3;
  static constexpr Eigen::Index kHidden = 5;
  static constexpr Eigen::Index kWeights =
      kFeatures * kHidden + kHidden * kHidden + kHidden;  // 45

  explicit BnnModel(Eigen::Index n_data = 500) : n_(n_data), A0_(n_, kFeatures) {
    for (Eigen::Index j = 0; j < n_; ++j) {
      const double c =
          n_ > 1 ? -1.0 + 2.0 * static_cast<double>(j) / (n_ - 1) : 0.0;
      A0_(j, 0) = c;
      A0_(j, 1) = c * c;
      A0_(j, 2) = c * c * c;
    }
  }

  Eigen::Index theta_dim() const override { return 4; }
  Eigen::Index latent_dim() const override { return kWeights; }
  Eigen::Index data_dim() const override { return n_; }
  std::string name() const override { return "bnn"; }

  std::vector<std::string> theta_labels() const override {
    return {"log_sigma_1", "log_sigma_2", "log_sigma_3", "log_tau"};
  }
  std::vector<std::string> theta_labels_native() const override {
    return {"sigma_1", "sigma_2", "sigma_3", "tau"};
  }

  SimPair sample(const RandomKey& key, const Vec& theta) const override {
    Vec w = standard_normal_stream(key.fork(0), kWeights);
    for (int layer = 0; layer < 3; ++layer)
      w.segment(offset(layer), size(layer)) *= std::exp(theta[layer]);
    Vec eps_y = standard_normal_stream(key.fork(1), n_);
    Forward f = forward(w);
    SimPair out;
    out.z = std::move(w);
    out.x = f.out + std::exp(-theta[3]) * eps_y;
    return out;
  }

  double logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    const double t = theta[3];
    const double tau2 = std::exp(2.0 * t);
    double lp = 3.0 * t - std::exp(t);  // Gamma(3,1) prior in log space
    for (int layer = 0; layer < 3; ++layer) {
      const double s = theta[layer];
      lp += -0.5 * std::exp(-2.0 * s) *
                z.segment(offset(layer), size(layer)).squaredNorm() -
            static_cast<double>(size(layer)) * s - 0.5 * s * s;
    }
    Forward f = forward(z);
    lp += -0.5 * tau2 * (x - f.out).squaredNorm() + static_cast<double>(n_) * t;
    return lp;
  }

  Vec grad_z_logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    Forward f = forward(z);
    Vec r = std::exp(2.0 * theta[3]) * (x - f.out);
    Vec g = backprop(z, f, r);
    for (int layer = 0; layer < 3; ++layer)
      g.segment(offset(layer), size(layer)) -=
          std::exp(-2.0 * theta[layer]) *
          z.segment(offset(layer), size(layer));
    return g;
  }

  Vec grad_theta_logp(const Vec& x, const Vec& z,
                      const Vec& theta) const override {
    Vec g(4);
    for (int layer = 0; layer < 3; ++layer) {
      const double s = theta[layer];
      g[layer] = std::exp(-2.0 * s) *
                     z.segment(offset(layer), size(layer)).squaredNorm() -
                 static_cast<double>(size(layer)) - s;
    }
    Forward f = forward(z);
    const double t = theta[3];
    g[3] = -std::exp(2.0 * t) * (x - f.out).squaredNorm() +
           static_cast<double>(n_) + 3.0 - std::exp(t);
    return g;
  }

  Vec hvp_zz(const Vec& x, const Vec& z, const Vec& theta,
             const Vec& v) const override {
    const double tau2 = std::exp(2.0 * theta[3]);
    Forward f = forward(z);
    Tangent tf = jvp(z, f, v);
    Vec r = tau2 * (x - f.out);
    Vec tr = -tau2 * tf.t_out;
    Vec out = backprop_tangent(z, f, v, tf, r, tr);
    for (int layer = 0; layer < 3; ++layer)
      out.segment(offset(layer), size(layer)) -=
          std::exp(-2.0 * theta[layer]) *
          v.segment(offset(layer), size(layer));
    return out;
  }

  Vec grad_theta_of_grad_z(const RandomKey& key, const Vec& theta_prime,
                           const Vec& theta_bar, const Vec& z,
                           Eigen::Index j) const override {
    Vec dy = data_tangent(key, theta_prime, j);
    Forward f = forward(z);
    return backprop(z, f, Vec(std::exp(2.0 * theta_bar[3]) * dy));
  }

  Vec grad_theta_of_grad_theta(const RandomKey& key, const Vec& theta_prime,
                               const Vec& theta_bar, const Vec& z,
                               Eigen::Index j) const override {
    Vec dy = data_tangent(key, theta_prime, j);
    Vec y = simulate_data(key, theta_prime);
    Forward f = forward(z);
    Vec out = Vec::Zero(4);
    out[3] = -2.0 * std::exp(2.0 * theta_bar[3]) * (y - f.out).dot(dy);
    return out;
  }

  Vec grad_theta_dot_grad_z(const Vec& x, const Vec& z, const Vec& theta,
                            const Vec& v) const override {
    Vec out(4);
    for (int layer = 0; layer < 3; ++layer)
      out[layer] = 2.0 * std::exp(-2.0 * theta[layer]) *
                   z.segment(offset(layer), size(layer))
                       .dot(v.segment(offset(layer), size(layer)));
    Forward f = forward(z);
    Tangent tf = jvp(z, f, v);
    Vec r = std::exp(2.0 * theta[3]) * (x - f.out);
    out[3] = 2.0 * r.dot(tf.t_out);
    return out;
  }

  Vec to_unconstrained(const Vec& theta_native) const override {
    Vec u(4);
    for (int i = 0; i < 4; ++i) {
      if (!(theta_native[i] > 0.0))
        throw ModelError("bnn: native parameters must be positive");
      u[i] = std::log(theta_native[i]);
    }
    return u;
  }
  Vec from_unconstrained(const Vec& theta_u) const override {
    return theta_u.array().exp();
  }

  const Mat& design_matrix() const { return A0_; }

  /// NN output for packed weights (used by tests).
  Vec predict(const Vec& z) const { return forward(z).out; }

 private:
  static Eigen::Index offset(int layer) {
    return layer == 0 ? 0 : (layer == 1 ? 15 : 40);
  }
  static Eigen::Index size(int layer) {
    return layer == 0 ? 15 : (layer == 1 ? 25 : 5);
  }

  struct Forward {
    Mat a1, a2;  // post-activation layers, n x 5
    Vec out;     // network output, n
  };
  struct Tangent {
    Mat t_a1, t_a2;
    Vec t_out;
  };

  using MapW1 = Eigen::Map<const Eigen::Matrix<double, kFeatures, kHidden>>;
  using MapW2 = Eigen::Map<const Eigen::Matrix<double, kHidden, kHidden>>;
  using MapW3 = Eigen::Map<const Eigen::Matrix<double, kHidden, 1>>;

  Forward forward(const Vec& z) const {
    MapW1 W1(z.data());
    MapW2 W2(z.data() + 15);
    MapW3 W3(z.data() + 40);
    Forward f;
    f.a1 = (A0_ * W1).array().tanh();
    f.a2 = (f.a1 * W2).array().tanh();
    f.out = f.a2 * W3;
    return f;
  }

  // Gradient of sum_j r_j NN_j(W) with respect to the packed weights.
  Vec backprop(const Vec& z, const Forward& f, const Vec& r) const {
    MapW2 W2(z.data() + 15);
    MapW3 W3(z.data() + 40);
    Vec g(kWeights);
    Eigen::Map<Eigen::Matrix<double, kFeatures, kHidden>> G1(g.data());
    Eigen::Map<Eigen::Matrix<double, kHidden, kHidden>> G2(g.data() + 15);
    Eigen::Map<Eigen::Matrix<double, kHidden, 1>> G3(g.data() + 40);

    G3 = f.a2.transpose() * r;
    Mat dA2 = r * W3.transpose();
    Mat dZ2 = dA2.array() * (1.0 - f.a2.array().square());
    G2 = f.a1.transpose() * dZ2;
    Mat dA1 = dZ2 * W2.transpose();
    Mat dZ1 = dA1.array() * (1.0 - f.a1.array().square());
    G1 = A0_.transpose() * dZ1;
    return g;
  }

  // Forward-mode tangent of the network output along packed direction v.
  Tangent jvp(const Vec& z, const Forward& f, const Vec& v) const {
    MapW2 W2(z.data() + 15);
    MapW3 W3(z.data() + 40);
    MapW1 V1(v.data());
    MapW2 V2(v.data() + 15);
    MapW3 V3(v.data() + 40);
    Tangent t;
    Mat tZ1 = A0_ * V1;
    t.t_a1 = tZ1.array() * (1.0 - f.a1.array().square());
    Mat tZ2 = t.t_a1 * W2 + f.a1 * V2;
    t.t_a2 = tZ2.array() * (1.0 - f.a2.array().square());
    t.t_out = t.t_a2 * W3 + f.a2 * V3;
    return t;
  }

  // Tangent of backprop(z, r) along (v, tr): the forward-over-reverse pass
  // giving the data-term Hessian-vector product.
  Vec backprop_tangent(const Vec& z, const Forward& f, const Vec& v,
                       const Tangent& tf, const Vec& r, const Vec& tr) const {
    MapW2 W2(z.data() + 15);
    MapW3 W3(z.data() + 40);
    MapW2 V2(v.data() + 15);
    MapW3 V3(v.data() + 40);

    Vec g(kWeights);
    Eigen::Map<Eigen::Matrix<double, kFeatures, kHidden>> G1(g.data());
    Eigen::Map<Eigen::Matrix<double, kHidden, kHidden>> G2(g.data() + 15);
    Eigen::Map<Eigen::Matrix<double, kHidden, 1>> G3(g.data() + 40);

    Mat dA2 = r * W3.transpose();
    Mat dZ2 = dA2.array() * (1.0 - f.a2.array().square());
    Mat dA1 = dZ2 * W2.transpose();

    G3 = tf.t_a2.transpose() * r + f.a2.transpose() * tr;
    Mat t_dA2 = tr * W3.transpose() + r * V3.transpose();
    Mat t_dZ2 = t_dA2.array() * (1.0 - f.a2.array().square()) -
                dA2.array() * 2.0 * f.a2.array() * tf.t_a2.array();
    G2 = tf.t_a1.transpose() * dZ2 + f.a1.transpose() * t_dZ2;
    Mat t_dA1 = t_dZ2 * W2.transpose() + dZ2 * V2.transpose();
    Mat t_dZ1 = t_dA1.array() * (1.0 - f.a1.array().square()) -
                dA1.array() * 2.0 * f.a1.array() * tf.t_a1.array();
    G1 = A0_.transpose() * t_dZ1;
    return g;
  }

  Vec simulate_data(const RandomKey& key, const Vec& theta) const {
    Vec w = standard_normal_stream(key.fork(0), kWeights);
    for (int layer = 0; layer < 3; ++layer)
      w.segment(offset(layer), size(layer)) *= std::exp(theta[layer]);
    Vec eps_y = standard_normal_stream(key.fork(1), n_);
    return forward(w).out + std::exp(-theta[3]) * eps_y;
  }

  // dY/dtheta'_j at fixed key: for a layer scale, the network tangent along
  // that layer's simulated weights; for log tau, the noise-scale tangent.
  Vec data_tangent(const RandomKey& key, const Vec& theta_prime,
                   Eigen::Index j) const {
    Vec w = standard_normal_stream(key.fork(0), kWeights);
    for (int layer = 0; layer < 3; ++layer)
      w.segment(offset(layer), size(layer)) *= std::exp(theta_prime[layer]);
    if (j == 3) {
      Vec eps_y = standard_normal_stream(key.fork(1), n_);
      return -std::exp(-theta_prime[3]) * eps_y;
    }
    Vec mask = Vec::Zero(kWeights);
    mask.segment(offset(static_cast<int>(j)), size(static_cast<int>(j))) =
        w.segment(offset(static_cast<int>(j)), size(static_cast<int>(j)));
    Forward f = forward(w);
    return jvp(w, f, mask).t_out;
  }

  Eigen::Index n_;
  Mat A0_;  // fixed design matrix of polynomial features
};

}  // namespace muse
