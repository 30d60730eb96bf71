#pragma once

#include <string>
#include <vector>

#include "cmdprox/estimate.hpp"
#include "cmdprox/types.hpp"

namespace cmdprox {

enum class ValueRule {
  expectation,    // V_t(x) = sum_u pi(u|x) Q_t(x,u)
  log_partition,  // V_t(x) = log sum_u exp Q_t(x,u)
};

struct FitConfig {
  int max_iters = 200;
  double tol_tv = 1e-8;
  double damping = 0.5;  // in [0,1); applied from the second policy update on
  ValueRule value_rule = ValueRule::expectation;
  double alpha = 0.5;            // Laplace smoothing for the estimates
  double pinv_tolerance = 1e-10;
};

struct FitIterLog {
  int iter = 0;
  double delta_tv = 0.0;  // fixed-point residual before the update
  double nll = 0.0;       // action NLL of the candidate policy (NaN without data)
};

// Per-cell diagnostics of the data-averaged reward estimate.
struct NaiveCellStats {
  std::vector<double> mean;    // [X][U]
  std::vector<double> stderr_; // [X][U]
  std::vector<double> count;   // [X][U]
};

struct SurrogateModel {
  std::string kind;  // surrogate | naive | oracle
  int num_states = 0;  // |X|, or |S| for the oracle
  int num_actions = 0;
  int horizon = 0;
  bool full_state = false;

  PhiTable phi;
  RewardTable rho;
  std::vector<double> q;  // [T][X][U]
  std::vector<double> v;  // [T+1][X], v[T] = 0
  Policy policy;
  ValueRule value_rule = ValueRule::expectation;
  std::vector<double> reward_alphabet;

  bool converged = true;
  int iterations = 0;  // policy updates applied
  std::vector<FitIterLog> fit_log;
  NaiveCellStats naive_stats;  // populated for naive (and oracle fallback) fits

  // x-level view of an oracle model, for comparison against the others
  PhiTable x_phi;
  std::string config_hash;

  double q_at(int t, int x, int u) const {
    return q[(static_cast<std::size_t>(t) * num_states + x) * num_actions + u];
  }
  double v_at(int t, int x) const { return v[static_cast<std::size_t>(t) * num_states + x]; }
};

struct BackwardResult {
  std::vector<double> q;
  std::vector<double> v;
  Policy policy;
};

// Finite-horizon soft recursion: V_T = 0, Q_t = rho_t + phi_t V_{t+1},
// pi_t = row softmax of Q_t (max-subtracted), V_t per value_rule.
BackwardResult soft_backward_recursion(const PhiTable& phi, const RewardTable& rho, int horizon,
                                       ValueRule rule);

// Fits the surrogate: per-time phi from triplet counts, proximal reward table
// coupled to the policy through the chain's policy factors, resolved by a
// damped fixed-point loop. Non-convergence returns the final iterate with
// converged = false.
SurrogateModel fit_surrogate(const Dataset& ds, const FitConfig& cfg);

// Population-level variant: exact behavioral conditionals and the exact
// behavior-averaged transition table instead of estimates.
SurrogateModel fit_surrogate_population(const PomdpSpec& spec, const Policy& behavioral,
                                        const FitConfig& cfg);

// Data-averaging baseline: pooled empirical mean rewards per (x,u), pooled
// transition table, one backward pass. Empty cells fall back to the global
// mean and are flagged.
SurrogateModel fit_naive(const Dataset& ds, const FitConfig& cfg);

// Latent-informed baseline over full states; requires emit_latent data.
// Also exposes an x-level view (x_phi) for the comparison harness.
SurrogateModel fit_oracle(const Dataset& ds, const FitConfig& cfg);

// Oracle tables in the population limit (sufficient statistics): the spec's
// own kernels.
SurrogateModel oracle_population(const PomdpSpec& spec, const Policy& behavioral,
                                 const FitConfig& cfg);

// Mean over records of sum_t -log pi_t(u_t | y_t); +inf if any observed
// action has zero probability.
double action_nll(const Dataset& ds, const Policy& pol);

// Lossless (bit-exact) model document.
std::string model_to_json(const SurrogateModel& m);
SurrogateModel model_from_json(const std::string& text);

}  // namespace cmdprox
