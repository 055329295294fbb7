#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <vector>

#include "muse/engine/counters.hpp"
#include "muse/errors.hpp"
#include "muse/model/problem.hpp"
#include "muse/numerics/parallel.hpp"
#include "muse/solvers/conjugate_gradient.hpp"
#include "muse/solvers/lbfgs.hpp"

namespace muse {

enum class HMethod { implicit_diff, finite_difference };

struct MuseOptions {
  int n_sims = 100;
  double theta_rtol = 0.1;  // stop when |dtheta_i| <= rtol * sqrt(Sigma_ii)
  int max_theta_iters = 50;
  double step_damping = 0.7;
  HMethod h_method = HMethod::implicit_diff;
  double fd_step_theta = 1e-3;  // relative step for the legacy H path
  std::uint64_t base_seed = 0;
  bool warm_start = true;
  int h_reduced_sims = 20;  // per-iteration H sims; final H uses all
  int workers = 0;          // 0: MUSE_WORKERS env or hardware count
  LbfgsOptions map_opts{.max_iters = 20000};
  // MAP tolerance inside FD of the MAP. Near-absolute at a warm start; the
  // objective's floating-point resolution caps what is reachable, and FD
  // noise enters h at ~1e2 * (MAP error), so 1e-6 keeps h well inside the
  // ID/FD agreement band.
  double fd_map_gtol = 1e-6;
  CgOptions cg_opts{};
  double max_drop_fraction = 0.1;
};

struct MuseResult {
  Vec theta_bar;
  Mat sigma;  // H^{-1} J H^{-T}, symmetrized
  Mat J;
  Mat H;
  std::vector<Vec> theta_history;
  Counters counters;
  bool converged = false;
  int theta_iterations = 0;
  int dropped_sims = 0;
};

struct ScoreAtMap {
  Vec s;      // grad_theta_logp at the MAP
  Vec z_hat;  // converged latent MAP
  MapSolution map_report;
  bool ok = false;
};

inline Mat assemble_sigma(const Mat& J, const Mat& H) {
  Mat HinvJ = solve_small_linear(H, J);
  Mat sigma_t = solve_small_linear(H, HinvJ.transpose());
  Mat sigma = sigma_t.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

/// The MUSE estimator: latent-MAP score evaluation, the theta root-finding
/// loop, the score covariance J, and the H matrix computed per simulation
/// either by implicit differentiation of the MAP (one CG solve per theta
/// coordinate, no extra MAP solves) or by legacy finite differences over
/// theta (two MAP re-solves per coordinate).
class MuseEngine {
 public:
  MuseEngine(ProblemPtr model, MuseOptions opts = {})
      : opts_(std::move(opts)),
        raw_(model),
        model_(std::make_shared<CountingProblem>(std::move(model),
                                                 &counters_)) {}

  const MuseOptions& options() const { return opts_; }
  Counters counters() const { return counters_.snapshot(); }
  void reset_counters() { counters_.reset(); }

  /// Key of simulation alpha; fixed once per run so simulated data are
  /// common random numbers across theta iterations.
  RandomKey sim_key(int alpha) const {
    return RandomKey{opts_.base_seed, static_cast<std::uint64_t>(alpha) + 1};
  }

  /// Simulate through the counting decorator (cost is attributed to this
  /// engine's counters).
  SimPair simulate(const RandomKey& key, const Vec& theta) const {
    return model_->sample(key, theta);
  }

  /// Maximize logp over z from z0, then evaluate the score there. On
  /// non-convergence retries once from a prior draw keyed by retry_key.
  /// `gtol_abs` (optional) pins the stopping scale of the cold solve this
  /// warm start refines, so re-solves do not chase an ever-tighter
  /// relative threshold.
  ScoreAtMap score_at_map(const Vec& x, const Vec& theta, const Vec& z0,
                          const RandomKey& retry_key,
                          double gtol_abs = 0.0) const {
    LbfgsOptions lopts = opts_.map_opts;
    lopts.gtol_abs = gtol_abs;
    ScoreAtMap out;
    out.map_report = run_map(x, theta, z0, lopts);
    if (!out.map_report.converged) {
      // The retry must aim at the first attempt's effective threshold: a
      // fresh start has a larger initial gradient, and the relative rule
      // alone would declare convergence at a much looser point.
      lopts.gtol_abs = out.map_report.gtol_used;
      lopts.gtol = 0.0;
      Vec z_retry = model_->sample(retry_key, theta).z;
      out.map_report = run_map(x, theta, z_retry, lopts);
    }
    out.z_hat = out.map_report.z_hat;
    out.ok = out.map_report.converged;
    if (out.ok) out.s = model_->grad_theta_logp(x, out.z_hat, theta);
    return out;
  }

  /// Unbiased covariance and mean of the per-simulation scores at theta.
  /// `z_warm` (optional, per sim) seeds the MAP solves and receives the
  /// converged MAPs back. Simulations whose MAP fails after retry are
  /// dropped; more than max_drop_fraction dropped is an error.
  std::pair<Mat, Vec> compute_J(const Vec& theta,
                                const std::vector<RandomKey>& keys,
                                std::vector<Vec>* z_warm = nullptr,
                                std::vector<Vec>* scores_out = nullptr,
                                int* dropped_out = nullptr,
                                std::vector<double>* gtol_warm = nullptr) const {
    const std::size_t n = keys.size();
    if (n < 2) throw Error("compute_J: need at least 2 simulations");
    std::vector<Vec> scores(n);
    std::vector<char> ok(n, 0);

    parallel_for(n, opts_.workers, [&](std::size_t a) {
      SimPair sim = model_->sample(keys[a], theta);
      Vec z0 = (z_warm && opts_.warm_start && (*z_warm)[a].size() > 0)
                   ? (*z_warm)[a]
                   : sim.z;
      const double gtol_abs = gtol_warm ? (*gtol_warm)[a] : 0.0;
      ScoreAtMap sc =
          score_at_map(sim.x, theta, z0, keys[a].fork(kRetryStream), gtol_abs);
      if (sc.ok) {
        scores[a] = sc.s;
        ok[a] = 1;
        if (z_warm) (*z_warm)[a] = sc.z_hat;
        if (gtol_warm) (*gtol_warm)[a] = sc.map_report.gtol_used;
      }
    });

    std::vector<Vec> surviving;
    surviving.reserve(n);
    for (std::size_t a = 0; a < n; ++a)
      if (ok[a]) surviving.push_back(scores[a]);
    const int dropped = static_cast<int>(n - surviving.size());
    if (dropped_out) *dropped_out = dropped;
    if (dropped > opts_.max_drop_fraction * static_cast<double>(n)) {
      std::ostringstream msg;
      msg << "compute_J: " << dropped << "/" << n
          << " simulations failed their MAP solve";
      throw ConvergenceError(msg.str());
    }
    if (scores_out) *scores_out = surviving;
    auto [mean, cov] = sample_mean_and_covariance(surviving);
    return {cov, mean};
  }

  /// Per-simulation H contribution by implicit differentiation:
  /// h = T1 + T2 with T1 the simulator-path mixed theta-theta derivative
  /// and T2_ij = u_i . w_j, where w_j solves (-d2logp/dzdz) w_j = b_j by
  /// conjugate gradient (Jacobi-preconditioned when the model offers its
  /// Hessian diagonal). Exactly theta_dim CG solves and no MAP solves
  /// unless the point turns out to be a saddle, in which case the solver
  /// escapes once along the reported direction and re-solves the MAP.
  Mat compute_h_implicit(const Vec& theta, const RandomKey& key,
                         const Vec& z_hat, int saddle_retries = 1) const {
    const Eigen::Index d = model_->theta_dim();
    const Vec x = model_->sample(key, theta).x;

    Mat B(model_->latent_dim(), d);
    for (Eigen::Index j = 0; j < d; ++j)
      B.col(j) = model_->grad_theta_of_grad_z(key, theta, theta, z_hat, j);

    CgOptions cg = opts_.cg_opts;
    // Full CG budget: an ill-conditioned MAP Hessian (e.g. nearly
    // degenerate PPCA spectra) can need far more than the generic
    // 10*sqrt(n) heuristic, and a dropped sim costs more than the extra
    // iterations.
    if (cg.max_iters <= 0)
      cg.max_iters = static_cast<int>(model_->latent_dim());
    Vec diag = raw_->hessian_zz_diag(x, z_hat, theta);
    if (diag.size() > 0 && (diag.array() < 0.0).all()) {
      Vec inv = (-diag).cwiseInverse();
      cg.precond = [inv](const Vec& r) { return Vec(r.cwiseProduct(inv)); };
    }

    CgMultiReport rep;
    try {
      rep = conjugate_gradient_multi(
          [&](const Mat& V) { return Mat(-model_->hvp_zz_multi(x, z_hat, theta, V)); },
          B, cg);
    } catch (const NegativeCurvatureError& e) {
      if (saddle_retries > 0 && e.direction.size() == z_hat.size()) {
        Vec refined = escape_saddle(x, theta, z_hat, e.direction);
        if (refined.size() > 0)
          return compute_h_implicit(theta, key, refined, saddle_retries - 1);
      }
      std::ostringstream msg;
      msg << e.what() << " [simulation key seed=" << key.seed
          << " stream=" << key.stream << "; MAP is not a proper maximum]";
      throw NegativeCurvatureError(msg.str());
    }
    counters_.cg_solves += static_cast<std::uint64_t>(d);
    for (int it : rep.iterations)
      counters_.cg_iters += static_cast<std::uint64_t>(it);
    for (Eigen::Index j = 0; j < d; ++j)
      if (!rep.converged[j]) {
        std::ostringstream msg;
        msg << "compute_h_implicit: CG did not converge for coordinate " << j
            << " (relative residual " << rep.residual_norms[j] << ")";
        throw ConvergenceError(msg.str());
      }

    Mat h(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      Vec t1 = model_->grad_theta_of_grad_theta(key, theta, theta, z_hat, j);
      Vec t2 = model_->grad_theta_dot_grad_z(x, z_hat, theta,
                                             Vec(rep.solutions.col(j)));
      h.col(j) = t1 + t2;
    }
    return h;
  }

  /// Legacy per-simulation H contribution: central finite differences of
  /// theta'_j -> grad_theta_logp(x(key,theta'), zhat(x(theta'), theta), theta),
  /// re-solving the MAP at each perturbed theta' (warm-started from z_hat).
  /// Exactly 2 * theta_dim MAP solves.
  Mat compute_h_fd(const Vec& theta, const RandomKey& key, const Vec& z_hat,
                   double fd_step) const {
    const Eigen::Index d = model_->theta_dim();
    LbfgsOptions tight = opts_.map_opts;
    tight.gtol = std::min(opts_.map_opts.gtol, opts_.fd_map_gtol);

    Mat h(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double eps = fd_step * (1.0 + std::abs(theta[j]));
      Vec f_plus, f_minus;
      for (int sign = 0; sign < 2; ++sign) {
        Vec tp = theta;
        tp[j] += sign == 0 ? eps : -eps;
        Vec xp = model_->sample(key, tp).x;
        MapSolution map = run_map(xp, theta, z_hat, tight);
        if (!map.converged) {
          std::ostringstream msg;
          msg << "compute_h_fd: perturbed MAP failed at coordinate " << j;
          throw ConvergenceError(msg.str());
        }
        (sign == 0 ? f_plus : f_minus) =
            model_->grad_theta_logp(xp, map.z_hat, theta);
      }
      h.col(j) = (f_plus - f_minus) / (2.0 * eps);
    }
    return h;
  }

  /// Mean of the per-simulation h matrices over the given sims. Sims whose
  /// CG or perturbed MAP fails are dropped under the same policy as
  /// compute_J.
  Mat compute_H(const Vec& theta, const std::vector<RandomKey>& keys,
                const std::vector<Vec>& z_hats, HMethod method,
                int* dropped_out = nullptr) const {
    const std::size_t n = keys.size();
    const Eigen::Index d = model_->theta_dim();
    std::vector<Mat> hs(n);
    std::vector<char> ok(n, 0);

    parallel_for(n, opts_.workers, [&](std::size_t a) {
      try {
        hs[a] = method == HMethod::implicit_diff
                    ? compute_h_implicit(theta, keys[a], z_hats[a])
                    : compute_h_fd(theta, keys[a], z_hats[a],
                                   opts_.fd_step_theta);
        ok[a] = 1;
      } catch (const ConvergenceError&) {
        ok[a] = 0;  // dropped below
      }
    });

    Mat H = Mat::Zero(d, d);
    int kept = 0;
    for (std::size_t a = 0; a < n; ++a)
      if (ok[a]) {
        H += hs[a];
        ++kept;
      }
    const int dropped = static_cast<int>(n) - kept;
    if (dropped_out) *dropped_out = dropped;
    if (kept == 0 ||
        dropped > opts_.max_drop_fraction * static_cast<double>(n)) {
      std::ostringstream msg;
      msg << "compute_H: " << dropped << "/" << n << " simulations dropped";
      throw ConvergenceError(msg.str());
    }
    return H / static_cast<double>(kept);
  }

  /// The full estimator: damped Newton iteration on the score balance
  ///   g(theta) = s_MAP(theta, x_obs) - mean_a s_MAP(theta, x(key_a, theta))
  /// with H as the Jacobian surrogate, fixed simulation keys (common random
  /// numbers), warm-started MAP solves, and a final J/H/Sigma evaluation at
  /// theta_bar over the full simulation set.
  MuseResult solve(const Vec& x_obs, const Vec& theta0) {
    if (!x_obs.allFinite() || !theta0.allFinite())
      throw ModelError("muse: non-finite x_obs or theta0");

    const Eigen::Index d = model_->theta_dim();
    std::vector<RandomKey> keys;
    for (int a = 0; a < opts_.n_sims; ++a) keys.push_back(sim_key(a));
    const int n_h =
        std::min<int>(opts_.n_sims, std::max(2, opts_.h_reduced_sims));

    MuseResult res;
    Vec theta = theta0;
    res.theta_history.push_back(theta);

    // Warm-start caches. The observed-data MAP starts from a prior draw on
    // a reserved stream (zero can sit on a saddle of the joint density).
    Vec z_obs = model_->sample(RandomKey{opts_.base_seed, 0}, theta).z;
    std::vector<Vec> z_sims(keys.size());
    std::vector<double> gtol_sims(keys.size(), 0.0);
    double gtol_obs = 0.0;

    for (int iter = 1; iter <= opts_.max_theta_iters; ++iter) {
      res.theta_iterations = iter;

      ScoreAtMap obs = score_at_map(
          x_obs, theta, z_obs, RandomKey{opts_.base_seed, 0}.fork(1), gtol_obs);
      if (!obs.ok)
        throw ConvergenceError(
            "muse: MAP solve for the observed data failed at iteration " +
            std::to_string(iter));
      z_obs = obs.z_hat;
      gtol_obs = obs.map_report.gtol_used;

      auto [J, mean_score] =
          compute_J(theta, keys, &z_sims, nullptr, nullptr, &gtol_sims);
      Vec g = obs.s - mean_score;

      // H over the first n_h sims whose MAP converged; h must only ever be
      // evaluated at a converged MAP.
      std::vector<RandomKey> hk;
      std::vector<Vec> zh;
      for (std::size_t a = 0; a < keys.size() && (int)hk.size() < n_h; ++a)
        if (z_sims[a].size() > 0) {
          hk.push_back(keys[a]);
          zh.push_back(z_sims[a]);
        }
      Mat H = compute_H(theta, hk, zh, opts_.h_method);

      Vec dtheta = solve_small_linear(H, g).col(0);
      Mat sigma = assemble_sigma(J, H);

      theta += opts_.step_damping * dtheta;
      res.theta_history.push_back(theta);

      if (iter >= 2) {
        bool done = true;
        for (Eigen::Index i = 0; i < d; ++i) {
          const double scale = std::sqrt(std::max(sigma(i, i), 0.0));
          if (std::abs(dtheta[i]) > opts_.theta_rtol * scale) done = false;
        }
        if (done) {
          res.converged = true;
          break;
        }
      }
    }

    // Final J and H at theta_bar with the full simulation set.
    res.theta_bar = theta;
    int dropped_j = 0, dropped_h = 0;
    auto [J, mean_score] =
        compute_J(theta, keys, &z_sims, nullptr, &dropped_j, &gtol_sims);
    std::vector<RandomKey> hk;
    std::vector<Vec> zh;
    for (std::size_t a = 0; a < keys.size(); ++a)
      if (z_sims[a].size() > 0) {
        hk.push_back(keys[a]);
        zh.push_back(z_sims[a]);
      }
    res.J = J;
    res.H = compute_H(theta, hk, zh, opts_.h_method, &dropped_h);
    res.sigma = assemble_sigma(res.J, res.H);
    res.dropped_sims = std::max(dropped_j, dropped_h);
    res.counters = counters_.snapshot();
    return res;
  }

 private:
  static constexpr std::uint64_t kRetryStream = 0x7265747279ull;  // "retry"

  MapSolution run_map(const Vec& x, const Vec& theta, const Vec& z0,
                      const LbfgsOptions& lopts) const {
    ++counters_.map_solves;
    return lbfgs_maximize(
        [&](const Vec& z) { return model_->logp_and_grad_z(x, z, theta); }, z0,
        lopts);
  }

  // A zero-gradient point with an ascent direction is a saddle: nudge
  // uphill along the reported direction and re-maximize. Returns the
  // refined MAP, or empty on failure.
  Vec escape_saddle(const Vec& x, const Vec& theta, const Vec& z_hat,
                    const Vec& direction) const {
    Vec dir = direction / direction.norm();
    const double delta =
        1e-2 * (1.0 + z_hat.norm() /
                          std::sqrt(static_cast<double>(z_hat.size())));
    Vec zp = z_hat + delta * dir;
    Vec zm = z_hat - delta * dir;
    const double lp = model_->logp(x, zp, theta);
    const double lm = model_->logp(x, zm, theta);
    Vec z0 = lp >= lm ? zp : zm;
    MapSolution sol = run_map(x, theta, z0, opts_.map_opts);
    if (!sol.converged) return Vec();
    return sol.z_hat;
  }

  MuseOptions opts_;
  mutable EvalCounters counters_;
  ProblemPtr raw_;    // un-counted access for preconditioner hints
  ProblemPtr model_;  // counting decorator used for all engine work
};

}  // namespace muse
