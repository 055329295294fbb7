// Command-line front end: run MUSE or HMC on a registered model, run the
// derivative-oracle checks, run the H-computation scaling sweep, and compare
// result files.
//
// Exit codes: 0 success, 2 non-convergence, 3 model error, 4 I/O error,
// 5 usage error, 1 unexpected failure.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "muse/muse.hpp"

namespace {

muse::Vec parse_csv_vec(const std::string& csv) {
  muse::Vec out;
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
  out.resize(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = vals[i];
  return out;
}

struct CliOverrides {
  long long n_params = -1, n_latent_per_param = -1, n_data = -1;
  long long n_components = -1, n_obs = -1, n_samples_ppca = -1, n_batches = -1;

  muse::ModelOverrides resolve() const {
    muse::ModelOverrides ov;
    if (n_params > 0) ov.n_params = n_params;
    if (n_latent_per_param > 0) ov.n_latent_per_param = n_latent_per_param;
    if (n_data > 0) ov.n_data = n_data;
    if (n_components > 0) ov.n_components = n_components;
    if (n_obs > 0) ov.n_obs = n_obs;
    if (n_samples_ppca > 0) ov.n_samples = n_samples_ppca;
    if (n_batches > 0) ov.n_batches = n_batches;
    return ov;
  }
};

void add_override_flags(CLI::App* cmd, CliOverrides& ov) {
  cmd->add_option("--n-params", ov.n_params, "funnel: number of theta dims");
  cmd->add_option("--n-latent-per-param", ov.n_latent_per_param,
                  "funnel: latent dims per theta");
  cmd->add_option("--n-data", ov.n_data, "gaussian-linear/bnn: data points");
  cmd->add_option("--n-components", ov.n_components, "ppca: components");
  cmd->add_option("--n-obs", ov.n_obs, "ppca: observed dimension");
  cmd->add_option("--n-latent-samples", ov.n_samples_ppca,
                  "ppca: latent sample count");
  cmd->add_option("--n-batches", ov.n_batches, "ppca: data batches");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MUSE: marginal posterior estimation by score expansion, with "
               "an HMC baseline"};
  app.require_subcommand(1);

  // ---- run ----
  muse::RunConfig run_cfg;
  CliOverrides run_ov;
  std::string theta_true_csv, theta0_csv;
  long long run_seed = 0, run_data_seed = 7777;
  auto* run = app.add_subcommand("run", "run an inference method on a model");
  run->add_option("--model", run_cfg.model_name, "model name")
      ->required()
      ->check(CLI::IsMember(muse::registered_models()));
  run->add_option("--method", run_cfg.method,
                  "inference method: muse-id, muse-fd or hmc")
      ->check(CLI::IsMember({"muse-id", "muse-fd", "hmc"}));
  run->add_option("--nsims", run_cfg.muse.n_sims, "MUSE simulation count");
  run->add_option("--theta-rtol", run_cfg.muse.theta_rtol,
                  "MUSE theta tolerance (fraction of posterior sd)");
  run->add_option("--max-iters", run_cfg.muse.max_theta_iters,
                  "MUSE max theta iterations");
  run->add_option("--fd-step", run_cfg.muse.fd_step_theta,
                  "muse-fd relative step size");
  run->add_option("--seed", run_seed, "base seed for the run");
  run->add_option("--data-seed", run_data_seed,
                  "seed of the synthetic observed dataset");
  run->add_option("--workers", run_cfg.muse.workers,
                  "worker threads (0: MUSE_WORKERS env or hardware)");
  run->add_option("--warmup", run_cfg.hmc.n_warmup, "hmc warmup transitions");
  run->add_option("--samples", run_cfg.hmc.n_samples, "hmc stored draws");
  run->add_option("--thin", run_cfg.hmc.thin, "hmc thinning stride");
  run->add_option("--leapfrog-steps", run_cfg.hmc.leapfrog_steps,
                  "hmc base path length");
  run->add_option("--target-accept", run_cfg.hmc.target_accept,
                  "hmc dual-averaging target");
  run->add_option("--theta-true", theta_true_csv,
                  "data-generating theta (unconstrained space, CSV)");
  run->add_option("--theta0", theta0_csv,
                  "initial theta (unconstrained space, CSV)");
  run->add_option("--out", run_cfg.out_path, "result file path");
  run->add_flag("--quiet", run_cfg.quiet, "suppress the per-theta summary");
  add_override_flags(run, run_ov);

  // ---- scaling ----
  muse::ScalingConfig scaling_cfg;
  std::string dims_csv = "10,40,160", methods_csv = "muse-id,muse-fd";
  long long scaling_seed = 0;
  auto* scaling = app.add_subcommand(
      "scaling", "H-computation cost sweep over theta dimension (funnel)");
  scaling->add_option("--dims", dims_csv, "theta dimensions, CSV ascending");
  scaling->add_option("--methods", methods_csv, "methods: muse-id,muse-fd");
  scaling->add_option("--nsims", scaling_cfg.n_sims, "simulations per cell");
  scaling->add_option("--repeats", scaling_cfg.repeats,
                      "timing repetitions (best is kept)");
  scaling->add_option("--total-latent", scaling_cfg.total_latent,
                      "total latent dimension held fixed");
  scaling->add_option("--seed", scaling_seed, "base seed");
  scaling->add_option("--workers", scaling_cfg.workers, "worker threads");
  scaling->add_option("--out", scaling_cfg.out_path, "table file path");

  // ---- gradcheck ----
  std::string gradcheck_model;
  CliOverrides gc_ov;
  long long gc_seed = 0;
  int gc_points = 20;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "derivative-oracle consistency checks for a model");
  gradcheck->add_option("--model", gradcheck_model, "model name (or 'all')")
      ->default_val("all");
  gradcheck->add_option("--points", gc_points, "random points per model");
  gradcheck->add_option("--seed", gc_seed, "seed for the random points");
  add_override_flags(gradcheck, gc_ov);

  // ---- compare ----
  std::vector<std::string> compare_paths;
  std::string compare_out;
  auto* compare = app.add_subcommand(
      "compare", "per-theta comparison table across result files");
  compare->add_option("records", compare_paths, "RunRecord files")
      ->required()
      ->expected(-2);
  compare->add_option("--out", compare_out, "write the table to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 5;
  }

  try {
    if (*run) {
      run_cfg.overrides = run_ov.resolve();
      run_cfg.muse.base_seed = static_cast<std::uint64_t>(run_seed);
      run_cfg.hmc.seed = muse::RandomKey{static_cast<std::uint64_t>(run_seed), 0};
      run_cfg.data_seed = static_cast<std::uint64_t>(run_data_seed);
      if (!theta_true_csv.empty()) run_cfg.theta_true = parse_csv_vec(theta_true_csv);
      if (!theta0_csv.empty()) run_cfg.theta0 = parse_csv_vec(theta0_csv);
      muse::RunRecord rec = muse::cmd_run(run_cfg);
      return rec.converged() ? 0 : 2;
    }
    if (*scaling) {
      std::stringstream ds(dims_csv);
      std::string tok;
      scaling_cfg.dims.clear();
      while (std::getline(ds, tok, ',')) scaling_cfg.dims.push_back(std::stoi(tok));
      std::stringstream ms(methods_csv);
      scaling_cfg.methods.clear();
      while (std::getline(ms, tok, ',')) scaling_cfg.methods.push_back(tok);
      scaling_cfg.seed = static_cast<std::uint64_t>(scaling_seed);
      auto cells = muse::cmd_scaling(scaling_cfg);
      for (const auto& c : cells)
        if (c.failed) return 2;
      return 0;
    }
    if (*gradcheck) {
      std::vector<std::string> names =
          gradcheck_model == "all"
              ? muse::registered_models()
              : std::vector<std::string>{gradcheck_model};
      bool ok = true;
      for (const std::string& name : names) {
        muse::ModelSpec spec = muse::make_model(name, gc_ov.resolve());
        auto report = muse::cmd_gradcheck(
            spec, gc_points, static_cast<std::uint64_t>(gc_seed), &std::cout);
        ok = ok && report.pass;
      }
      return ok ? 0 : 2;
    }
    if (*compare) {
      std::vector<muse::RunRecord> records;
      for (const std::string& p : compare_paths)
        records.push_back(muse::RunRecord::read(p));
      auto result = muse::cmd_compare(records, &std::cout);
      if (!compare_out.empty()) {
        std::ofstream out(compare_out, std::ios::binary);
        if (!out) throw muse::IoError("cannot open '" + compare_out + "'");
        out << result.table;
      }
      return 0;
    }
  } catch (const muse::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const muse::ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const muse::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
