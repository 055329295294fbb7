#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "muse/errors.hpp"
#include "muse/model/problem.hpp"
#include "muse/models/bnn.hpp"
#include "muse/models/funnel.hpp"
#include "muse/models/gaussian_linear.hpp"
#include "muse/models/ppca.hpp"

namespace muse {

/// Dimension overrides accepted by the CLI; unset fields keep each model's
/// defaults.
struct ModelOverrides {
  std::optional<Eigen::Index> n_params;            // funnel
  std::optional<Eigen::Index> n_latent_per_param;  // funnel
  std::optional<Eigen::Index> n_data;              // gaussian-linear, bnn
  std::optional<Eigen::Index> n_components;        // ppca
  std::optional<Eigen::Index> n_obs;               // ppca
  std::optional<Eigen::Index> n_samples;           // ppca
  std::optional<Eigen::Index> n_batches;           // ppca
};

/// A registered model plus the defaults a run needs: the data-generating
/// truth, the observed-data key, and the initial theta (all in
/// unconstrained space).
struct ModelSpec {
  ProblemPtr problem;
  Vec theta_true;
  Vec theta0;
  std::string name;
};

inline std::vector<std::string> registered_models() {
  return {"funnel", "bnn", "ppca", "gaussian-linear"};
}

inline ModelSpec make_model(const std::string& name,
                            const ModelOverrides& ov = {}) {
  ModelSpec spec;
  spec.name = name;
  if (name == "funnel") {
    auto m = std::make_shared<FunnelModel>(ov.n_params.value_or(10),
                                           ov.n_latent_per_param.value_or(500));
    spec.problem = m;
    spec.theta_true = Vec::Zero(m->theta_dim());
    spec.theta0 = Vec::Zero(m->theta_dim());
  } else if (name == "bnn") {
    auto m = std::make_shared<BnnModel>(ov.n_data.value_or(500));
    spec.problem = m;
    spec.theta_true = Vec::Zero(4);
    spec.theta_true[3] = std::log(3.0);  // tau at its prior mean
    spec.theta0 = Vec::Zero(4);
  } else if (name == "ppca") {
    auto m = std::make_shared<PpcaModel>(
        ov.n_components.value_or(10), ov.n_obs.value_or(100),
        ov.n_samples.value_or(100), ov.n_batches.value_or(5));
    spec.problem = m;
    const Eigen::Index nc = m->theta_dim();
    // Distinct component amplitudes: equal alphas put the latent MAP on a
    // rotational ridge with a singular Hessian, so both the truth and the
    // starting point carry a spread spectrum.
    spec.theta_true.resize(nc);
    spec.theta0.resize(nc);
    for (Eigen::Index i = 0; i < nc; ++i) {
      const double f =
          nc > 1 ? static_cast<double>(i) / static_cast<double>(nc - 1) : 0.0;
      spec.theta_true[i] = std::log(4.0) + f * (std::log(0.25) - std::log(4.0));
      // Same spread as the truth but offset; a narrow spectrum makes the
      // latent MAP ill-conditioned (near-rotational directions).
      spec.theta0[i] = std::log(3.0) + f * (std::log(0.2) - std::log(3.0));
    }
  } else if (name == "gaussian-linear") {
    auto m = std::make_shared<GaussianLinearModel>(ov.n_data.value_or(1000));
    spec.problem = m;
    spec.theta_true = Vec::Zero(1);
    spec.theta0 = Vec::Zero(1);
  } else {
    throw ModelError("unknown model '" + name + "'");
  }
  return spec;
}

/// Default key for generating the observed dataset; overridable via
/// --data-seed.
inline RandomKey default_data_key(std::uint64_t data_seed = 7777) {
  return RandomKey{data_seed, 0};
}

}  // namespace muse
