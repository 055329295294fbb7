#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "muse/hmc/ess.hpp"
#include "muse/model/problem.hpp"
#include "muse/numerics/random.hpp"

namespace muse {

struct HmcOptions {
  int n_warmup = 1000;
  int n_samples = 1000;  // stored draws; transitions = n_samples * thin
  int thin = 1;
  double target_accept = 0.8;
  int leapfrog_steps = 32;  // jittered +-50% per transition
  bool jitter = true;
  RandomKey seed{};
  double init_step_size = 0.0;  // 0: 0.1 * dim^{-1/4}
  double divergence_threshold = 1000.0;
};

struct Chain {
  Mat draws;  // n_samples x (theta_dim + latent_dim), theta first
  double accept_rate = 0.0;
  std::uint64_t gradient_evals = 0;  // sum over transitions of (steps + 1)
  Vec ess;                           // per stored coordinate
  int divergences = 0;
  double step_size = 0.0;
  Vec inv_mass;  // adapted diagonal inverse mass
  Eigen::Index theta_dim = 0;
};

namespace detail {

// Dual averaging on log step size (Nesterov scheme with the usual HMC
// constants).
struct DualAverage {
  double mu, log_eps, log_eps_bar = 0.0, h_bar = 0.0;
  double target, gamma = 0.05, t0 = 10.0, kappa = 0.75;
  int m = 0;

  DualAverage(double eps0, double target) : mu(std::log(10.0 * eps0)),
                                            log_eps(std::log(eps0)),
                                            target(target) {}
  void update(double accept_prob) {
    ++m;
    const double w = 1.0 / (m + t0);
    h_bar = (1.0 - w) * h_bar + w * (target - accept_prob);
    log_eps = mu - std::sqrt(static_cast<double>(m)) / gamma * h_bar;
    const double w2 = std::pow(static_cast<double>(m), -kappa);
    log_eps_bar = w2 * log_eps + (1.0 - w2) * log_eps_bar;
  }
  double eps() const { return std::exp(log_eps); }
  double eps_final() const { return std::exp(log_eps_bar); }
};

struct JointTarget {
  const Problem& model;
  const Vec& x;
  Eigen::Index dt, dz;

  double logp(const Vec& q) const {
    return model.logp(x, q.tail(dz), q.head(dt));
  }
  Vec grad(const Vec& q) const {
    Vec g(dt + dz);
    g.head(dt) = model.grad_theta_logp(x, q.tail(dz), q.head(dt));
    g.tail(dz) = model.grad_z_logp(x, q.tail(dz), q.head(dt));
    return g;
  }
};

}  // namespace detail

/// Energy error |H(end) - H(start)| of one leapfrog trajectory with unit
/// mass; exposed for integrator checks.
inline double leapfrog_energy_error(const Problem& model, const Vec& x_obs,
                                    const Vec& q0, const Vec& p0, double eps,
                                    int steps) {
  detail::JointTarget target{model, x_obs, model.theta_dim(),
                             model.latent_dim()};
  Vec q = q0, p = p0;
  const double h0 = -target.logp(q) + 0.5 * p.squaredNorm();
  p += 0.5 * eps * target.grad(q);
  for (int s = 0; s < steps; ++s) {
    q += eps * p;
    if (s + 1 < steps) p += eps * target.grad(q);
  }
  p += 0.5 * eps * target.grad(q);
  const double h1 = -target.logp(q) + 0.5 * p.squaredNorm();
  return std::abs(h1 - h0);
}

/// Plain adaptive HMC over the joint (theta, z) space: leapfrog with a
/// jittered fixed path length, Metropolis acceptance, dual-averaging step
/// size adaptation toward target_accept, and a diagonal mass matrix
/// estimated from the second half of warmup. Counts every gradient
/// evaluation.
inline Chain hmc_sample(const Problem& model, const Vec& x_obs,
                        const Vec& theta0, const HmcOptions& opts) {
  const Eigen::Index dt = model.theta_dim();
  const Eigen::Index dz = model.latent_dim();
  const Eigen::Index dim = dt + dz;
  detail::JointTarget target{model, x_obs, dt, dz};

  Vec q(dim);
  q.head(dt) = theta0;
  q.tail(dz) = model.sample(opts.seed.fork(0xA11), theta0).z;

  const double eps0 = opts.init_step_size > 0
                          ? opts.init_step_size
                          : 0.1 * std::pow(static_cast<double>(dim), -0.25);
  detail::DualAverage da(eps0, opts.target_accept);
  Vec inv_mass = Vec::Ones(dim);  // inverse mass = posterior variance

  Chain chain;
  chain.theta_dim = dt;
  chain.draws.resize(opts.n_samples, dim);
  chain.inv_mass = inv_mass;

  // Welford accumulators for the mass window.
  Vec wf_mean = Vec::Zero(dim), wf_m2 = Vec::Zero(dim);
  std::int64_t wf_n = 0;

  double eps = eps0;
  std::uint64_t accepted = 0, transitions = 0;
  double logp_q = target.logp(q);

  const std::int64_t total =
      static_cast<std::int64_t>(opts.n_warmup) +
      static_cast<std::int64_t>(opts.n_samples) * opts.thin;
  const std::int64_t mass_begin = opts.n_warmup / 2;
  const std::int64_t mass_end = (3 * static_cast<std::int64_t>(opts.n_warmup)) / 4;

  int stored = 0;
  for (std::int64_t m = 0; m < total; ++m) {
    const bool warming = m < opts.n_warmup;
    RandomKey step_key = opts.seed.fork(static_cast<std::uint64_t>(m) + 1);

    // Momentum p ~ N(0, M) with M = 1 / inv_mass.
    Vec p = standard_normal_stream(step_key.fork(0), dim);
    p = p.cwiseQuotient(inv_mass.cwiseSqrt());

    int steps = opts.leapfrog_steps;
    if (opts.jitter) {
      const int lo = std::max(1, opts.leapfrog_steps / 2);
      const int hi = (3 * opts.leapfrog_steps) / 2;
      const double u = uniform_at(step_key.fork(1), 0);
      steps = lo + static_cast<int>(u * static_cast<double>(hi - lo + 1));
      steps = std::min(steps, hi);
    }

    // Leapfrog: exactly steps + 1 gradient evaluations.
    Vec qn = q;
    Vec pn = p;
    pn += 0.5 * eps * target.grad(qn);
    for (int s = 0; s < steps; ++s) {
      qn += eps * pn.cwiseProduct(inv_mass);
      if (s + 1 < steps) pn += eps * target.grad(qn);
    }
    pn += 0.5 * eps * target.grad(qn);
    chain.gradient_evals += static_cast<std::uint64_t>(steps) + 1;
    ++transitions;

    const double logp_new = target.logp(qn);
    const double h_old =
        -logp_q + 0.5 * p.dot(p.cwiseProduct(inv_mass));
    const double h_new =
        -logp_new + 0.5 * pn.dot(pn.cwiseProduct(inv_mass));
    double delta_h = h_new - h_old;
    bool divergent = !std::isfinite(delta_h) ||
                     std::abs(delta_h) > opts.divergence_threshold;

    double accept_prob =
        divergent ? 0.0 : std::min(1.0, std::exp(-delta_h));
    if (!divergent &&
        uniform_at(step_key.fork(2), 0) < accept_prob) {
      q = qn;
      logp_q = logp_new;
      ++accepted;
    }
    if (divergent) ++chain.divergences;

    if (warming) {
      da.update(accept_prob);
      eps = da.eps();
      if (m >= mass_begin && m < mass_end) {
        ++wf_n;
        Vec delta = q - wf_mean;
        wf_mean += delta / static_cast<double>(wf_n);
        wf_m2 += delta.cwiseProduct(q - wf_mean);
      }
      if (m + 1 == mass_end && wf_n > 1) {
        Vec var = wf_m2 / static_cast<double>(wf_n - 1);
        const double n = static_cast<double>(wf_n);
        inv_mass = (n / (n + 5.0)) * var.array() + 5.0e-3 / (n + 5.0);
        // Restart step-size adaptation around the current value under the
        // new metric.
        da = detail::DualAverage(std::max(da.eps_final(), 1e-8),
                                 opts.target_accept);
        eps = da.eps();
      }
      if (m + 1 == opts.n_warmup) eps = da.eps_final();
    } else {
      const std::int64_t k = m - opts.n_warmup;
      if ((k + 1) % opts.thin == 0 && stored < opts.n_samples)
        chain.draws.row(stored++) = q;
    }
  }

  chain.accept_rate =
      static_cast<double>(accepted) / static_cast<double>(transitions);
  chain.step_size = eps;
  chain.inv_mass = inv_mass;
  chain.ess.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    chain.ess[i] = effective_sample_size(chain.draws.col(i));
  return chain;
}

}  // namespace muse
