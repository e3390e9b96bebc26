#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ekinfer/ensemble.hpp"

namespace ekinfer {

// Outputs of one inference run: final equally weighted samples plus the
// per-iteration adaptation trace and the forward-model call count.
struct RunReport {
  std::string method;
  std::vector<double> alphas;       // cumulative temperature after each iteration
  std::vector<double> h_schedule;   // temperature increments (EKI methods)
  std::vector<double> ess;          // ESS at each accepted temperature
  std::vector<int> repeats;         // MCMC repeats per iteration
  std::vector<double> acceptance;   // mean acceptance rate per iteration
  long long g_evals = 0;            // actual forward-model evaluations
  long long g_evals_formula = 0;    // headline count: J*N (EKI), N*sum(M_j) + N (SMC)
  std::uint64_t seed = 0;
  Ensemble samples;                 // (d_theta + d_phi) x N
  std::vector<std::string> param_names;
};

}  // namespace ekinfer
