#pragma once

#include "muse/cli/commands.hpp"
#include "muse/cli/registry.hpp"
#include "muse/cli/run_record.hpp"
#include "muse/engine/counters.hpp"
#include "muse/engine/muse.hpp"
#include "muse/errors.hpp"
#include "muse/hmc/ess.hpp"
#include "muse/hmc/hmc.hpp"
#include "muse/model/problem.hpp"
#include "muse/models/bnn.hpp"
#include "muse/models/funnel.hpp"
#include "muse/models/gaussian_linear.hpp"
#include "muse/models/ppca.hpp"
#include "muse/numerics/finite_diff.hpp"
#include "muse/numerics/linalg.hpp"
#include "muse/numerics/parallel.hpp"
#include "muse/numerics/random.hpp"
#include "muse/solvers/conjugate_gradient.hpp"
#include "muse/solvers/lbfgs.hpp"
#include "muse/version.hpp"
