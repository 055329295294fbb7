#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <utility>

#include "muse/numerics/linalg.hpp"

namespace muse {

/// Objective callback: value and gradient of the function to MAXIMIZE.
using ObjectiveFn = std::function<std::pair<double, Vec>(const Vec&)>;

struct LbfgsOptions {
  int memory = 10;
  double gtol = 1e-6;  // relative: stop at ||g|| <= gtol * max(1, ||g(z0)||)
  // Optional absolute tolerance; the effective threshold is
  // max(gtol * max(1, ||g(z0)||), gtol_abs). Lets warm-started re-solves
  // keep the stopping scale of the cold solve they refine.
  double gtol_abs = 0.0;
  int max_iters = 1000;
  double armijo_c = 1e-4;
  double wolfe_c = 0.9;  // curvature constant; keeps s.y > 0
  double min_step = 1e-16;
  int max_line_search = 60;
};

struct MapSolution {
  Vec z_hat;
  double grad_norm = 0.0;  // final gradient norm
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;   // final (maximized) objective value
  int evals = 0;            // objective+gradient evaluations
  double gtol_used = 0.0;   // effective absolute threshold of this solve
};

/// Two-loop-recursion LBFGS ascent (internally a descent on the negated
/// objective). The line search brackets a weak-Wolfe step: Armijo failures
/// shrink by bisection, curvature failures grow the step, so every accepted
/// (s, y) pair has positive curvature content. An accepted step is refined
/// by one quadratic interpolation when the fit suggests a distinctly better
/// point; on exact quadratics this is an exact line search, giving finite
/// termination like CG.
inline MapSolution lbfgs_maximize(const ObjectiveFn& objective, const Vec& z0,
                                  const LbfgsOptions& opts = {}) {
  MapSolution out;
  out.z_hat = z0;

  // Minimize f = -objective.
  auto eval = [&](const Vec& x) -> std::pair<double, Vec> {
    auto [v, g] = objective(x);
    ++out.evals;
    return {-v, Vec(-g)};
  };

  auto [f, g] = eval(z0);
  if (!std::isfinite(f) || !g.allFinite()) {
    out.grad_norm = std::numeric_limits<double>::quiet_NaN();
    out.objective = -f;
    return out;  // converged=false: objective not finite at the start
  }

  Vec x = z0;
  const double g0_norm = g.norm();
  const double gtol_abs =
      std::max(opts.gtol * std::max(1.0, g0_norm), opts.gtol_abs);
  out.gtol_used = gtol_abs;

  struct Pair {
    Vec s, y;
    double rho;
  };
  std::deque<Pair> mem;

  for (out.iterations = 0; out.iterations < opts.max_iters; ++out.iterations) {
    if (g.norm() <= gtol_abs) {
      out.converged = true;
      break;
    }

    // Two-loop recursion for p = -H g.
    Vec q = g;
    std::vector<double> alpha(mem.size());
    for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
      alpha[i] = mem[i].rho * mem[i].s.dot(q);
      q -= alpha[i] * mem[i].y;
    }
    if (!mem.empty()) {
      const Pair& last = mem.back();
      q *= last.s.dot(last.y) / last.y.dot(last.y);
    }
    for (std::size_t i = 0; i < mem.size(); ++i) {
      double beta = mem[i].rho * mem[i].y.dot(q);
      q += mem[i].s * (alpha[i] - beta);
    }
    Vec p = -q;

    double slope = g.dot(p);
    if (!(slope < 0)) {  // not a descent direction: restart from steepest
      mem.clear();
      p = -g;
      slope = g.dot(p);
    }

    // Weak-Wolfe bracketing search with one-shot quadratic refinement.
    double step = 1.0, lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double f_new = 0.0;
    Vec g_new;
    bool accepted = false;
    double best_armijo_step = -1.0, best_armijo_f = 0.0;
    Vec best_armijo_g;
    for (int ls = 0; ls < opts.max_line_search && step >= opts.min_step;
         ++ls) {
      Vec x_try = x + step * p;
      auto [ft, gt] = eval(x_try);
      const bool finite = std::isfinite(ft) && gt.allFinite();
      if (!finite || ft > f + opts.armijo_c * step * slope) {
        hi = step;  // too long (or off the support)
        step = 0.5 * (lo + hi);
        continue;
      }
      if (best_armijo_step < 0 || ft < best_armijo_f) {
        best_armijo_step = step;
        best_armijo_f = ft;
        best_armijo_g = gt;
      }
      if (gt.dot(p) < opts.wolfe_c * slope) {
        lo = step;  // slope still steep: too short
        step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * step;
        continue;
      }
      // Quadratic through f, slope, ft: minimizer along the ray.
      const double curv = (ft - f - slope * step) / (step * step);
      if (curv > 0) {
        const double step_star = -slope / (2.0 * curv);
        if (step_star > 0 && std::abs(step_star - step) > 0.1 * step &&
            step_star < 100.0 * step) {
          Vec x_star = x + step_star * p;
          auto [fs, gs] = eval(x_star);
          if (std::isfinite(fs) && gs.allFinite() &&
              fs <= f + opts.armijo_c * step_star * slope && fs < ft) {
            ft = fs;
            gt = std::move(gs);
            step = step_star;
            x_try = std::move(x_star);
          }
        }
      }
      f_new = ft;
      g_new = std::move(gt);
      x = std::move(x_try);
      accepted = true;
      break;
    }
    if (!accepted && best_armijo_step > 0) {
      // Curvature condition unmet within budget: take the best Armijo point.
      step = best_armijo_step;
      f_new = best_armijo_f;
      g_new = std::move(best_armijo_g);
      x += step * p;
      accepted = true;
    }
    if (!accepted) {  // step underflow
      out.grad_norm = g.norm();
      out.objective = -f;
      out.z_hat = x;
      out.converged = false;
      return out;
    }

    Vec s = step * p;
    Vec y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      mem.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
    }
    f = f_new;
    g = std::move(g_new);
  }

  if (!out.converged) out.converged = g.norm() <= gtol_abs;
  out.z_hat = x;
  out.grad_norm = g.norm();
  out.objective = -f;
  return out;
}

}  // namespace muse
