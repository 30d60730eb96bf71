#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "cmdprox/estimate.hpp"
#include "cmdprox/types.hpp"

namespace cmdprox {

// Evaluation context for the proximal chain: behavioral conditionals, the
// observation-based policy being evaluated, and the pseudo-inverse cutoff
// (singular values below pinv_tolerance * sigma_max are truncated).
class WeightChainContext {
 public:
  WeightChainContext(const EstimatedMatrices& em, Policy eval_policy,
                     double pinv_tolerance = 1e-10);

  const EstimatedMatrices& em() const { return *em_; }
  const Policy& eval_policy() const { return eval_policy_; }
  double pinv_tolerance() const { return pinv_tolerance_; }

  // Truncated Moore-Penrose inverse of m_obs[t][u], cached.
  const Eigen::MatrixXd& pinv_obs(int t, int u) const;

 private:
  const EstimatedMatrices* em_;
  Policy eval_policy_;
  double pinv_tolerance_;
  mutable std::map<std::pair<int, int>, Eigen::MatrixXd> pinv_cache_;
};

// W_k = pinv(P(Y_k|Y_{k-1},u_cur)) * P(Y_k, y_prev|Y_{k-2},u_prev), the
// observable replacement for one latent-state factor of the reward chain.
// Rows index Y_{k-1}, columns Y_{k-2} (Y_N at k = 1).
Eigen::MatrixXd weight_matrix(const WeightChainContext& ctx, int k, int y_prev, int u_prev,
                              int u_cur);

// k = 0 boundary: pinv(P(Y_0|u_0,Y_N)) * P(Y_0), a column over the Y_N space.
Eigen::VectorXd weight_vector_k0(const WeightChainContext& ctx, int u0);

// Exact behavioral conditionals computed from the spec kernels and the
// behavioral occupancy (no sampling). counts hold the exact joint masses.
EstimatedMatrices population_matrices(const PomdpSpec& spec, const Policy& behavioral);

// Marginal reward distribution p(r_t) under the evaluation policy. `raw`
// keeps the pre-clipping chain values; probs is raw clipped at zero and
// renormalized. mass_defect = 1 - sum(raw).
struct RewardDistribution {
  int t = 0;
  std::vector<double> probs;
  std::vector<double> raw;
  double mass_defect = 0.0;
  double negative_mass = 0.0;
};

// Literal sum over all observable prefixes; cost (|Y||U|)^(t+1), guarded to
// t <= 3. Reference implementation for the message-passing version below.
RewardDistribution reward_dist_enumerate(const WeightChainContext& ctx, int t);

// Same value by sum-product contraction over the chain, O(t |Y|^3 |U|^2).
RewardDistribution reward_dist_dp(const WeightChainContext& ctx, int t);

// rho_t(x,u) = E[r_t | y_t = x, u_t = u] under the evaluation policy,
// obtained from the chain by fixing the final (y_t, u_t) pair instead of
// summing it; the final policy factor cancels, so only components 0..t-1 of
// the evaluation policy matter. Cells whose chain mass is <= 1e-12 fall back
// to the empirical (behavioral) mean and are flagged.
RewardTable deconfounded_reward_table(const WeightChainContext& ctx);

// Ground-truth oracle: exact p(r_t) under an evaluation policy by enumerating
// all (s_{0:t}, u_{0:t}) with the true kernels. Guarded to (|S||U|)^(t+1)
// <= 1e7. Also exposes the conditional table p(r_t | y_t, u_t).
struct ConditionalReward {
  int t = 0;
  std::vector<double> marginal;   // [R]
  std::vector<double> joint_yu;   // [Y][U] mass of (y_t, u_t)
  std::vector<double> cond;       // [Y][U][R], rows normalized where mass > 0
  std::vector<double> cond_mean;  // [Y][U]
};

RewardDistribution brute_force_reward_dist(const PomdpSpec& spec, const Policy& eval_policy,
                                           int t);
ConditionalReward brute_force_reward_conditional(const PomdpSpec& spec,
                                                 const Policy& eval_policy, int t);

// Same conditional computed through the occupancy recursion instead of path
// enumeration; no size guard. Cross-checked against the enumeration oracle.
ConditionalReward exact_reward_conditional(const PomdpSpec& spec, const Policy& eval_policy,
                                           int t);

// Per-(t,x,u) diagnostic dump: pre-clip mass defect and fallback flags.
void write_reward_diagnostics(const RewardTable& table, std::ostream& os);

}  // namespace cmdprox
