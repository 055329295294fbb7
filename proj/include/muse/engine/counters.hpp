#pragma once

#include <atomic>
#include <cstdint>

#include "muse/model/problem.hpp"

namespace muse {

/// Plain snapshot of evaluation counters, safe to copy into results.
struct Counters {
  std::uint64_t logp_evals = 0;
  std::uint64_t gradient_evals = 0;  // grad_z, grad_theta and fused calls
  std::uint64_t hvp_evals = 0;       // Hessian-vector products (per column)
  std::uint64_t mixed_evals = 0;     // mixed second-order oracle calls
  std::uint64_t simulator_calls = 0;
  std::uint64_t map_solves = 0;
  std::uint64_t cg_solves = 0;  // one per right-hand side
  std::uint64_t cg_iters = 0;

  /// Benchmark currency: every derivative-oracle call, each counted as one
  /// posterior-gradient-class evaluation.
  std::uint64_t gradient_equivalents() const {
    return gradient_evals + hvp_evals + mixed_evals;
  }
};

/// Thread-safe accumulator. Sums are commutative, so totals are identical
/// at any worker count.
struct EvalCounters {
  std::atomic<std::uint64_t> logp_evals{0};
  std::atomic<std::uint64_t> gradient_evals{0};
  std::atomic<std::uint64_t> hvp_evals{0};
  std::atomic<std::uint64_t> mixed_evals{0};
  std::atomic<std::uint64_t> simulator_calls{0};
  std::atomic<std::uint64_t> map_solves{0};
  std::atomic<std::uint64_t> cg_solves{0};
  std::atomic<std::uint64_t> cg_iters{0};

  Counters snapshot() const {
    Counters c;
    c.logp_evals = logp_evals.load();
    c.gradient_evals = gradient_evals.load();
    c.hvp_evals = hvp_evals.load();
    c.mixed_evals = mixed_evals.load();
    c.simulator_calls = simulator_calls.load();
    c.map_solves = map_solves.load();
    c.cg_solves = cg_solves.load();
    c.cg_iters = cg_iters.load();
    return c;
  }

  void reset() {
    logp_evals = gradient_evals = hvp_evals = mixed_evals = 0;
    simulator_calls = map_solves = cg_solves = cg_iters = 0;
  }
};

/// Decorator that counts every contract call it forwards.
class CountingProblem final : public Problem {
 public:
  CountingProblem(ProblemPtr inner, EvalCounters* counters)
      : inner_(std::move(inner)), c_(counters) {}

  Eigen::Index theta_dim() const override { return inner_->theta_dim(); }
  Eigen::Index latent_dim() const override { return inner_->latent_dim(); }
  Eigen::Index data_dim() const override { return inner_->data_dim(); }
  std::string name() const override { return inner_->name(); }
  std::vector<std::string> theta_labels() const override {
    return inner_->theta_labels();
  }
  std::vector<std::string> theta_labels_native() const override {
    return inner_->theta_labels_native();
  }

  SimPair sample(const RandomKey& key, const Vec& theta) const override {
    ++c_->simulator_calls;
    return inner_->sample(key, theta);
  }
  double logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    ++c_->logp_evals;
    return inner_->logp(x, z, theta);
  }
  Vec grad_z_logp(const Vec& x, const Vec& z, const Vec& theta) const override {
    ++c_->gradient_evals;
    return inner_->grad_z_logp(x, z, theta);
  }
  Vec grad_theta_logp(const Vec& x, const Vec& z,
                      const Vec& theta) const override {
    ++c_->gradient_evals;
    return inner_->grad_theta_logp(x, z, theta);
  }
  Vec hvp_zz(const Vec& x, const Vec& z, const Vec& theta,
             const Vec& v) const override {
    ++c_->hvp_evals;
    return inner_->hvp_zz(x, z, theta, v);
  }
  std::pair<double, Vec> logp_and_grad_z(const Vec& x, const Vec& z,
                                         const Vec& theta) const override {
    ++c_->gradient_evals;
    return inner_->logp_and_grad_z(x, z, theta);
  }
  Mat hvp_zz_multi(const Vec& x, const Vec& z, const Vec& theta,
                   const Mat& V) const override {
    c_->hvp_evals += static_cast<std::uint64_t>(V.cols());
    return inner_->hvp_zz_multi(x, z, theta, V);
  }
  Vec hessian_zz_diag(const Vec& x, const Vec& z,
                      const Vec& theta) const override {
    return inner_->hessian_zz_diag(x, z, theta);
  }
  Vec grad_theta_of_grad_z(const RandomKey& key, const Vec& theta_prime,
                           const Vec& theta_bar, const Vec& z,
                           Eigen::Index j) const override {
    ++c_->mixed_evals;
    return inner_->grad_theta_of_grad_z(key, theta_prime, theta_bar, z, j);
  }
  Vec grad_theta_of_grad_theta(const RandomKey& key, const Vec& theta_prime,
                               const Vec& theta_bar, const Vec& z,
                               Eigen::Index j) const override {
    ++c_->mixed_evals;
    return inner_->grad_theta_of_grad_theta(key, theta_prime, theta_bar, z, j);
  }
  Vec grad_theta_dot_grad_z(const Vec& x, const Vec& z, const Vec& theta,
                            const Vec& v) const override {
    ++c_->mixed_evals;
    return inner_->grad_theta_dot_grad_z(x, z, theta, v);
  }
  double mixed_fd_step() const override { return inner_->mixed_fd_step(); }
  Vec to_unconstrained(const Vec& theta_native) const override {
    return inner_->to_unconstrained(theta_native);
  }
  Vec from_unconstrained(const Vec& theta_u) const override {
    return inner_->from_unconstrained(theta_u);
  }

 private:
  ProblemPtr inner_;
  EvalCounters* c_;
};

}  // namespace muse
