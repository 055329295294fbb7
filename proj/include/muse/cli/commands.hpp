#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "muse/cli/registry.hpp"
#include "muse/cli/run_record.hpp"
#include "muse/engine/muse.hpp"
#include "muse/hmc/hmc.hpp"

namespace muse {

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string model_name = "funnel";
  std::string method = "muse-id";  // muse-id | muse-fd | hmc
  ModelOverrides overrides;
  MuseOptions muse;
  HmcOptions hmc;
  std::uint64_t data_seed = 7777;
  std::optional<Vec> theta_true;  // unconstrained space
  std::optional<Vec> theta0;      // unconstrained space
  std::string out_path;
  bool quiet = false;
};

namespace detail {

inline ordered_json model_config_json(const ModelSpec& spec,
                                      const Vec& theta_true,
                                      std::uint64_t data_seed) {
  ordered_json cfg;
  cfg["d_theta"] = spec.problem->theta_dim();
  cfg["d_z"] = spec.problem->latent_dim();
  cfg["d_x"] = spec.problem->data_dim();
  cfg["theta_true_unconstrained"] = to_json(theta_true);
  cfg["data_seed"] = data_seed;
  return cfg;
}

inline ordered_json muse_options_json(const MuseOptions& o) {
  ordered_json j;
  j["n_sims"] = o.n_sims;
  j["theta_rtol"] = o.theta_rtol;
  j["max_theta_iters"] = o.max_theta_iters;
  j["step_damping"] = o.step_damping;
  j["h_method"] =
      o.h_method == HMethod::implicit_diff ? "implicit" : "finite_difference";
  j["fd_step_theta"] = o.fd_step_theta;
  j["base_seed"] = o.base_seed;
  j["warm_start"] = o.warm_start;
  j["h_reduced_sims"] = o.h_reduced_sims;
  j["map_gtol"] = o.map_opts.gtol;
  j["cg_rtol"] = o.cg_opts.rtol;
  return j;
}

inline ordered_json hmc_options_json(const HmcOptions& o) {
  ordered_json j;
  j["n_warmup"] = o.n_warmup;
  j["n_samples"] = o.n_samples;
  j["thin"] = o.thin;
  j["target_accept"] = o.target_accept;
  j["leapfrog_steps"] = o.leapfrog_steps;
  j["jitter"] = o.jitter;
  j["seed"] = o.seed.seed;
  return j;
}

// Native-space mean/sd of a MUSE Gaussian by the delta method.
inline std::pair<Vec, Vec> native_summary(const Problem& model,
                                          const Vec& theta_bar,
                                          const Mat& sigma) {
  Mat G = central_difference_jacobian(
      [&](const Vec& u) { return model.from_unconstrained(u); }, theta_bar,
      fd_default_steps(theta_bar, 1e-6));
  Mat sigma_native = G * sigma * G.transpose();
  Vec sd = sigma_native.diagonal().cwiseMax(0.0).cwiseSqrt();
  return {model.from_unconstrained(theta_bar), sd};
}

inline ordered_json theta_block(const std::vector<std::string>& labels,
                                const Vec& mean, const Vec& sd) {
  ordered_json j;
  j["labels"] = labels;
  j["mean"] = to_json(mean);
  j["sd"] = to_json(sd);
  return j;
}

inline void print_theta_summary(std::ostream& os,
                                const std::vector<std::string>& labels,
                                const Vec& mean, const Vec& sd,
                                const Vec& mean_native,
                                const Vec& sd_native) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    os << "  " << std::left << std::setw(14) << labels[i] << std::right
       << std::setw(12) << std::setprecision(5) << std::fixed << mean[i]
       << " +- " << std::setw(10) << sd[i] << "   (native " << std::setw(10)
       << mean_native[i] << " +- " << std::setw(10) << sd_native[i] << ")\n";
  }
  os.unsetf(std::ios::fixed);
  os << std::setprecision(6);
}

}  // namespace detail

inline RunRecord cmd_run(const RunConfig& cfg, std::ostream& os = std::cout) {
  ModelSpec spec = make_model(cfg.model_name, cfg.overrides);
  const Problem& model = *spec.problem;
  const Vec theta_true = cfg.theta_true.value_or(spec.theta_true);
  const Vec theta0 = cfg.theta0.value_or(spec.theta0);
  if (theta_true.size() != model.theta_dim() ||
      theta0.size() != model.theta_dim())
    throw ModelError("theta_true/theta0 dimension mismatch for model '" +
                     cfg.model_name + "'");
  const Vec x_obs =
      model.sample(default_data_key(cfg.data_seed), theta_true).x;

  RunRecord rec;
  ordered_json results;
  Counters counters;

  const auto t_start = std::chrono::steady_clock::now();
  if (cfg.method == "hmc") {
    Chain chain = hmc_sample(model, x_obs, theta0, cfg.hmc);
    const Eigen::Index dt = model.theta_dim();
    Mat theta_draws = chain.draws.leftCols(dt);
    Vec mean(dt), sd(dt), mean_n(dt), sd_n(dt), ess(dt);
    Mat native_draws(theta_draws.rows(), dt);
    for (Eigen::Index r = 0; r < theta_draws.rows(); ++r)
      native_draws.row(r) =
          model.from_unconstrained(theta_draws.row(r).transpose()).transpose();
    for (Eigen::Index i = 0; i < dt; ++i) {
      mean[i] = theta_draws.col(i).mean();
      sd[i] = std::sqrt((theta_draws.col(i).array() - mean[i]).square().sum() /
                        static_cast<double>(theta_draws.rows() - 1));
      mean_n[i] = native_draws.col(i).mean();
      sd_n[i] =
          std::sqrt((native_draws.col(i).array() - mean_n[i]).square().sum() /
                    static_cast<double>(native_draws.rows() - 1));
      ess[i] = chain.ess[i];
    }
    results["converged"] = true;
    ordered_json theta;
    theta["unconstrained"] = detail::theta_block(model.theta_labels(), mean, sd);
    theta["native"] =
        detail::theta_block(model.theta_labels_native(), mean_n, sd_n);
    results["theta"] = theta;
    results["ess"] = to_json(ess);
    results["min_ess"] = ess.minCoeff();
    results["accept_rate"] = chain.accept_rate;
    results["divergences"] = chain.divergences;
    results["step_size"] = chain.step_size;
    counters.gradient_evals = chain.gradient_evals;
    if (!cfg.quiet) {
      os << cfg.model_name << " / hmc: accept " << chain.accept_rate
         << ", min ESS " << ess.minCoeff() << ", gradient evals "
         << chain.gradient_evals << "\n";
      detail::print_theta_summary(os, model.theta_labels(), mean, sd, mean_n,
                                  sd_n);
    }
  } else if (cfg.method == "muse-id" || cfg.method == "muse-fd") {
    MuseOptions mo = cfg.muse;
    mo.h_method = cfg.method == "muse-id" ? HMethod::implicit_diff
                                          : HMethod::finite_difference;
    MuseEngine engine(spec.problem, mo);
    MuseResult res = engine.solve(x_obs, theta0);
    counters = res.counters;

    Vec sd = res.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
    auto [mean_n, sd_n] = detail::native_summary(model, res.theta_bar, res.sigma);

    results["converged"] = res.converged;
    ordered_json theta;
    theta["unconstrained"] =
        detail::theta_block(model.theta_labels(), res.theta_bar, sd);
    theta["native"] =
        detail::theta_block(model.theta_labels_native(), mean_n, sd_n);
    results["theta"] = theta;
    results["sigma"] = to_json(res.sigma);
    results["J"] = to_json(res.J);
    results["H"] = to_json(res.H);
    ordered_json hist = ordered_json::array();
    for (const Vec& t : res.theta_history) hist.push_back(to_json(t));
    results["theta_history"] = hist;
    results["theta_iterations"] = res.theta_iterations;
    results["dropped_sims"] = res.dropped_sims;
    if (!cfg.quiet) {
      os << cfg.model_name << " / " << cfg.method << ": "
         << (res.converged ? "converged" : "NOT CONVERGED") << " in "
         << res.theta_iterations << " iterations, gradient evals "
         << counters.gradient_evals << "\n";
      detail::print_theta_summary(os, model.theta_labels(), res.theta_bar, sd,
                                  mean_n, sd_n);
    }
  } else {
    throw Error("unknown method '" + cfg.method +
                "' (expected muse-id, muse-fd or hmc)");
  }
  const auto t_end = std::chrono::steady_clock::now();

  rec.doc = record_frame(
      cfg.model_name, detail::model_config_json(spec, theta_true, cfg.data_seed),
      cfg.method,
      cfg.method == "hmc" ? detail::hmc_options_json(cfg.hmc)
                          : detail::muse_options_json(cfg.muse),
      cfg.method == "hmc" ? cfg.hmc.seed.seed : cfg.muse.base_seed);
  rec.doc["results"] = results;
  rec.doc["counters"] = counters_to_json(counters);
  rec.doc["wall_time_seconds"] =
      std::chrono::duration<double>(t_end - t_start).count();

  if (!cfg.out_path.empty()) rec.write(cfg.out_path);
  return rec;
}

// ---------------------------------------------------------------------------
// scaling
// ---------------------------------------------------------------------------

struct ScalingConfig {
  std::vector<int> dims = {10, 40, 160};
  std::vector<std::string> methods = {"muse-id", "muse-fd"};
  int n_sims = 6;
  int repeats = 2;
  std::uint64_t seed = 0;
  Eigen::Index total_latent = 5000;
  int workers = 1;  // sequential by default for stable timings
  std::string out_path;
};

struct ScalingCell {
  int dim = 0;
  std::string method;
  int n_sims = 0;
  Counters counters;
  double map_solves_per_sim = 0.0;
  double wall_time_seconds = 0.0;  // best over repeats
  bool failed = false;
  std::string error;
};

/// H-computation cost at a fixed theta: per simulation one base MAP plus the
/// per-method H work (ID: theta_dim CG solves; FD: 2*theta_dim MAP re-solves).
inline std::vector<ScalingCell> cmd_scaling(const ScalingConfig& cfg,
                                            std::ostream& os = std::cout) {
  std::vector<ScalingCell> cells;
  for (int dim : cfg.dims) {
    const Eigen::Index n_latent =
        std::max<Eigen::Index>(1, cfg.total_latent / dim);
    for (const std::string& method : cfg.methods) {
      ScalingCell cell;
      cell.dim = dim;
      cell.method = method;
      cell.n_sims = cfg.n_sims;
      try {
        auto model = std::make_shared<FunnelModel>(dim, n_latent);
        const Vec theta_bar = Vec::Zero(dim);
        MuseOptions mo;
        mo.base_seed = cfg.seed;
        mo.workers = cfg.workers;
        mo.h_method = method == "muse-fd" ? HMethod::finite_difference
                                          : HMethod::implicit_diff;
        double best = std::numeric_limits<double>::infinity();
        Counters counters;
        for (int rep = 0; rep < std::max(1, cfg.repeats); ++rep) {
          MuseEngine engine(model, mo);
          const auto t0 = std::chrono::steady_clock::now();
          for (int a = 0; a < cfg.n_sims; ++a) {
            RandomKey key = engine.sim_key(a);
            SimPair sim = engine.simulate(key, theta_bar);
            ScoreAtMap sc = engine.score_at_map(sim.x, theta_bar, sim.z,
                                                key.fork(0xF0));
            if (!sc.ok)
              throw ConvergenceError("scaling: base MAP failed");
            if (mo.h_method == HMethod::implicit_diff)
              engine.compute_h_implicit(theta_bar, key, sc.z_hat);
            else
              engine.compute_h_fd(theta_bar, key, sc.z_hat, mo.fd_step_theta);
          }
          const auto t1 = std::chrono::steady_clock::now();
          best = std::min(best,
                          std::chrono::duration<double>(t1 - t0).count());
          counters = engine.counters();
        }
        cell.counters = counters;
        cell.map_solves_per_sim =
            static_cast<double>(counters.map_solves) / cfg.n_sims;
        cell.wall_time_seconds = best;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      cells.push_back(cell);
    }
  }

  os << std::left << std::setw(6) << "dim" << std::setw(10) << "method"
     << std::right << std::setw(14) << "map/sim" << std::setw(14)
     << "grad_evals" << std::setw(12) << "hvp_evals" << std::setw(10)
     << "cg_iters" << std::setw(12) << "wall_s" << "\n";
  for (const ScalingCell& c : cells) {
    if (c.failed) {
      os << std::left << std::setw(6) << c.dim << std::setw(10) << c.method
         << "  FAILED: " << c.error << "\n";
      continue;
    }
    os << std::left << std::setw(6) << c.dim << std::setw(10) << c.method
       << std::right << std::setw(14) << c.map_solves_per_sim << std::setw(14)
       << c.counters.gradient_evals << std::setw(12) << c.counters.hvp_evals
       << std::setw(10) << c.counters.cg_iters << std::setw(12)
       << std::setprecision(4) << c.wall_time_seconds << "\n";
  }

  if (!cfg.out_path.empty()) {
    ordered_json doc;
    doc["schema_version"] = kRecordSchemaVersion;
    doc["artifact_version"] = kArtifactVersion;
    doc["experiment"] = "scaling";
    doc["total_latent"] = cfg.total_latent;
    doc["n_sims"] = cfg.n_sims;
    doc["seed"] = cfg.seed;
    ordered_json rows = ordered_json::array();
    for (const ScalingCell& c : cells) {
      ordered_json row;
      row["dim"] = c.dim;
      row["method"] = c.method;
      row["failed"] = c.failed;
      if (c.failed) {
        row["error"] = c.error;
      } else {
        row["map_solves_per_sim"] = c.map_solves_per_sim;
        row["counters"] = counters_to_json(c.counters);
        row["wall_time_seconds"] = c.wall_time_seconds;
      }
      rows.push_back(row);
    }
    doc["cells"] = rows;
    std::ofstream out(cfg.out_path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + cfg.out_path + "'");
    out << doc.dump(2) << "\n";
  }
  return cells;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct OracleCheck {
  std::string oracle;
  double worst_rel_err = 0.0;
  double tol = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::string model;
  std::vector<OracleCheck> checks;
  bool pass = true;
};

namespace detail {

inline double rel_err(const Vec& a, const Vec& b) {
  const double scale =
      std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace detail

/// Derivative-oracle consistency suite: every analytic oracle against a
/// central-difference oracle of the next-lower derivative at seeded random
/// points, plus symmetry, transform and simulator-continuity checks.
inline GradcheckReport cmd_gradcheck(const ModelSpec& spec, int n_points = 20,
                                     std::uint64_t seed = 0,
                                     std::ostream* os = nullptr) {
  const Problem& model = *spec.problem;
  const Eigen::Index dt = model.theta_dim();
  const Eigen::Index dz = model.latent_dim();

  GradcheckReport report;
  report.model = spec.name;
  OracleCheck c_gz{"grad_z_logp vs fd(logp)", 0, 1e-5};
  OracleCheck c_gt{"grad_theta_logp vs fd(logp)", 0, 1e-5};
  OracleCheck c_hvp{"hvp_zz vs fd(grad_z_logp)", 0, 1e-5};
  OracleCheck c_sym{"hvp_zz symmetry probe", 0, 1e-8};
  OracleCheck c_mgz{"grad_theta_of_grad_z vs fd default", 0, 1e-5};
  OracleCheck c_mgt{"grad_theta_of_grad_theta vs fd default", 0, 1e-5};
  OracleCheck c_dot{"grad_theta_dot_grad_z vs fd default", 0, 1e-5};
  OracleCheck c_diag{"hessian_zz_diag vs hvp_zz", 0, 1e-8};
  OracleCheck c_tr{"unconstrained transform round trip", 0, 1e-12};
  OracleCheck c_cont{"sample continuity in theta", 0, 1.0};

  for (int p = 0; p < n_points; ++p) {
    RandomKey pk{seed, static_cast<std::uint64_t>(p) + 101};
    Vec theta =
        spec.theta0 + 0.3 * standard_normal_stream(pk.fork(0), dt);
    RandomKey sim_key = pk.fork(1);
    SimPair sim = model.sample(sim_key, theta);
    Vec z = sim.z + 0.1 * standard_normal_stream(pk.fork(2), dz);
    const Vec& x = sim.x;

    // grad_z vs FD of logp on a coordinate subset.
    {
      Vec g = model.grad_z_logp(x, z, theta);
      const Eigen::Index n_coords = std::min<Eigen::Index>(dz, 25);
      for (Eigen::Index c = 0; c < n_coords; ++c) {
        const Eigen::Index idx =
            dz <= 25 ? c
                     : static_cast<Eigen::Index>(
                           uniform_at(pk.fork(3), static_cast<std::uint64_t>(c)) *
                           static_cast<double>(dz));
        const double eps = 1e-5 * (1.0 + std::abs(z[idx]));
        Vec zp = z, zm = z;
        zp[idx] += eps;
        zm[idx] -= eps;
        const double fd =
            (model.logp(x, zp, theta) - model.logp(x, zm, theta)) / (2 * eps);
        c_gz.worst_rel_err =
            std::max(c_gz.worst_rel_err, detail::rel_err(g[idx], fd));
      }
    }

    // grad_theta vs FD of logp.
    {
      Vec g = model.grad_theta_logp(x, z, theta);
      for (Eigen::Index j = 0; j < dt; ++j) {
        const double eps = 1e-5 * (1.0 + std::abs(theta[j]));
        Vec tp = theta, tm = theta;
        tp[j] += eps;
        tm[j] -= eps;
        const double fd =
            (model.logp(x, z, tp) - model.logp(x, z, tm)) / (2 * eps);
        c_gt.worst_rel_err =
            std::max(c_gt.worst_rel_err, detail::rel_err(g[j], fd));
      }
    }

    // hvp vs FD of grad_z along a direction, plus symmetry.
    {
      Vec v = standard_normal_stream(pk.fork(4), dz);
      Vec u = standard_normal_stream(pk.fork(5), dz);
      Vec hv = model.hvp_zz(x, z, theta, v);
      Vec fd = central_difference_directional(
          [&](const Vec& zz) { return model.grad_z_logp(x, zz, theta); }, z, v);
      c_hvp.worst_rel_err = std::max(c_hvp.worst_rel_err, detail::rel_err(hv, fd));

      Vec hu = model.hvp_zz(x, z, theta, u);
      const double sym = std::abs(u.dot(hv) - v.dot(hu)) /
                         std::max(1.0, u.norm() * v.norm());
      c_sym.worst_rel_err = std::max(c_sym.worst_rel_err, sym);
    }

    // Mixed oracles vs their FD defaults.
    for (Eigen::Index j = 0; j < dt; ++j) {
      Vec a = model.grad_theta_of_grad_z(sim_key, theta, theta, z, j);
      Vec b = model.fd_grad_theta_of_grad_z(sim_key, theta, theta, z, j);
      c_mgz.worst_rel_err = std::max(c_mgz.worst_rel_err, detail::rel_err(a, b));

      Vec at = model.grad_theta_of_grad_theta(sim_key, theta, theta, z, j);
      Vec bt = model.fd_grad_theta_of_grad_theta(sim_key, theta, theta, z, j);
      c_mgt.worst_rel_err =
          std::max(c_mgt.worst_rel_err, detail::rel_err(at, bt));
    }
    {
      Vec v = standard_normal_stream(pk.fork(6), dz);
      Vec a = model.grad_theta_dot_grad_z(x, z, theta, v);
      Vec b = model.fd_grad_theta_dot_grad_z(x, z, theta, v);
      c_dot.worst_rel_err = std::max(c_dot.worst_rel_err, detail::rel_err(a, b));
    }

    // Hessian diagonal hint against unit-vector HVPs.
    {
      Vec diag = model.hessian_zz_diag(x, z, theta);
      if (diag.size() > 0) {
        for (int probe = 0; probe < 3; ++probe) {
          const Eigen::Index idx = static_cast<Eigen::Index>(
              uniform_at(pk.fork(7), static_cast<std::uint64_t>(probe)) *
              static_cast<double>(dz));
          Vec e = Vec::Zero(dz);
          e[idx] = 1.0;
          const double hkk = model.hvp_zz(x, z, theta, e)[idx];
          c_diag.worst_rel_err =
              std::max(c_diag.worst_rel_err, detail::rel_err(hkk, diag[idx]));
        }
      }
    }

    // Transform round trip.
    {
      Vec back = model.to_unconstrained(model.from_unconstrained(theta));
      c_tr.worst_rel_err =
          std::max(c_tr.worst_rel_err, (back - theta).cwiseAbs().maxCoeff());
    }

    // Simulator continuity: the secant slope at 1e-6 must agree with the
    // slope at 1e-4 to first order.
    {
      Vec dir = standard_normal_stream(pk.fork(8), dt);
      dir /= dir.norm();
      const Vec x0 = model.sample(sim_key, theta).x;
      auto slope = [&](double delta) {
        return (model.sample(sim_key, Vec(theta + delta * dir)).x - x0).norm() /
               delta;
      };
      const double s4 = slope(1e-4);
      const double s6 = slope(1e-6);
      c_cont.worst_rel_err = std::max(
          c_cont.worst_rel_err, std::abs(s6 - s4) / std::max(1.0, s4) > 0.05
                                    ? std::abs(s6 - s4) / std::max(1.0, s4)
                                    : 0.0);
    }
  }

  for (OracleCheck* c :
       {&c_gz, &c_gt, &c_hvp, &c_sym, &c_mgz, &c_mgt, &c_dot, &c_diag, &c_tr,
        &c_cont}) {
    c->pass = c->worst_rel_err <= c->tol;
    report.checks.push_back(*c);
    report.pass = report.pass && c->pass;
  }

  if (os) {
    *os << "gradcheck: " << report.model << "\n";
    for (const OracleCheck& c : report.checks)
      *os << "  " << (c.pass ? "PASS" : "FAIL") << "  " << std::left
          << std::setw(42) << c.oracle << " worst rel err "
          << std::scientific << std::setprecision(3) << c.worst_rel_err
          << " (tol " << c.tol << ")\n"
          << std::defaultfloat;
  }
  return report;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareRow {
  std::string label;
  std::vector<double> means;           // one per record
  std::vector<double> sds;             // one per record
  std::vector<double> mean_diff_in_sd; // vs record 0, in units of its sd
  std::vector<double> sd_ratio;        // vs record 0
};

struct CompareResult {
  std::vector<std::string> methods;
  std::vector<CompareRow> rows;
  std::vector<double> gradient_eval_ratio;  // record k / record 0
  std::string table;
};

/// Per-theta comparison of records sharing a model: means, sds, the mean
/// difference in units of the reference sd, sd ratios, and the
/// gradient-evaluation ratio against the first record.
inline CompareResult cmd_compare(const std::vector<RunRecord>& records,
                                 std::ostream* os = nullptr) {
  if (records.size() < 2)
    throw Error("cmd_compare: need at least 2 records");
  const RunRecord& ref = records.front();
  for (const RunRecord& r : records) {
    if (r.model() != ref.model() ||
        r.model_config().at("d_theta") != ref.model_config().at("d_theta") ||
        r.model_config().at("d_z") != ref.model_config().at("d_z"))
      throw ModelError("cmd_compare: records are for different models (" +
                       r.model() + " vs " + ref.model() + ")");
  }

  CompareResult out;
  for (const RunRecord& r : records) out.methods.push_back(r.method());

  const Vec ref_mean = ref.mean_unconstrained();
  const Vec ref_sd = ref.sd_unconstrained();
  const auto labels = ref.labels();

  for (Eigen::Index i = 0; i < ref_mean.size(); ++i) {
    CompareRow row;
    row.label = labels[i];
    for (const RunRecord& r : records) {
      const Vec m = r.mean_unconstrained();
      const Vec s = r.sd_unconstrained();
      row.means.push_back(m[i]);
      row.sds.push_back(s[i]);
      row.mean_diff_in_sd.push_back((m[i] - ref_mean[i]) / ref_sd[i]);
      row.sd_ratio.push_back(s[i] / ref_sd[i]);
    }
    out.rows.push_back(row);
  }

  const double ref_evals = static_cast<double>(ref.gradient_equivalents());
  for (const RunRecord& r : records)
    out.gradient_eval_ratio.push_back(
        static_cast<double>(r.gradient_equivalents()) / ref_evals);

  std::ostringstream tbl;
  tbl << "model: " << ref.model() << "   reference: " << ref.method() << "\n";
  tbl << std::left << std::setw(14) << "theta";
  for (const std::string& m : out.methods)
    tbl << std::right << std::setw(13) << (m + " mean") << std::setw(13)
        << (m + " sd");
  tbl << std::setw(13) << "max|dmean|/sd" << std::setw(13) << "sd ratio rng"
      << "\n";
  for (const CompareRow& row : out.rows) {
    tbl << std::left << std::setw(14) << row.label << std::right
        << std::setprecision(4) << std::fixed;
    for (std::size_t k = 0; k < row.means.size(); ++k)
      tbl << std::setw(13) << row.means[k] << std::setw(13) << row.sds[k];
    double worst_dmean = 0, lo_ratio = 1, hi_ratio = 1;
    for (std::size_t k = 1; k < row.means.size(); ++k) {
      worst_dmean = std::max(worst_dmean, std::abs(row.mean_diff_in_sd[k]));
      lo_ratio = std::min(lo_ratio, row.sd_ratio[k]);
      hi_ratio = std::max(hi_ratio, row.sd_ratio[k]);
    }
    tbl << std::setw(13) << worst_dmean << "  [" << lo_ratio << ", "
        << hi_ratio << "]\n";
    tbl.unsetf(std::ios::fixed);
  }
  tbl << "gradient-evaluation ratio vs " << ref.method() << ":";
  for (std::size_t k = 0; k < records.size(); ++k)
    tbl << "  " << out.methods[k] << " "
        << std::setprecision(3) << out.gradient_eval_ratio[k];
  tbl << "\n";
  out.table = tbl.str();
  if (os) *os << out.table;
  return out;
}

}  // namespace muse
