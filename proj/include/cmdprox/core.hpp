#pragma once

#include <string>
#include <vector>

#include "cmdprox/types.hpp"

namespace cmdprox {

// Inputs of the factored constructor: context-conditional kernels over the
// observable state x and the context z, a scalar reward map, and the two
// initial distributions.
struct CmdpParams {
  int num_obs = 0;       // |X|
  int num_contexts = 0;  // |Z|
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> px;      // [x][z][u][x']
  std::vector<double> pz;      // [x][z][u][z']
  std::vector<double> reward;  // [x][z][u] scalar values
  std::vector<double> eta;     // [x]
  std::vector<double> nu;      // [z]
};

// Flattens the factored model into a PomdpSpec with s = x*|Z|+z, a
// deterministic observation s -> x, and a point-mass reward kernel over the
// sorted alphabet of distinct reward values (merged within 1e-9).
PomdpSpec build_cmdp(const CmdpParams& params);

// Reports every violated structural invariant; empty means valid.
std::vector<Violation> validate(const PomdpSpec& spec);

// Action probability at (t, s, y) under either policy kind.
double policy_prob(const PomdpSpec& spec, const Policy& pol, int t, int s, int y, int u);

// Throws ValidationError unless pol's shape matches spec.
void check_policy(const PomdpSpec& spec, const Policy& pol);

// Exact per-time distribution over full states, t = 0..T-1. Observation-based
// policies are marginalized through the observation kernel.
std::vector<std::vector<double>> exact_occupancy(const PomdpSpec& spec, const Policy& pol);

// Observable marginal of the per-time state distribution: m_t(y).
std::vector<double> obs_marginal(const PomdpSpec& spec, const std::vector<double>& occupancy_t);

// Behavior-averaged transition table of the factored model,
//   phi_t(x'|x,u) = sum_z p(x'|x,z,u) p_t(z|x,u),
// with the context weights taken from the behavioral occupancy at t. Rows
// with zero visitation probability are set uniform and flagged.
PhiTable exact_marginalized_transition(const PomdpSpec& spec, const Policy& behavioral);

// Occupancy-weighted time average of a per-time table; weights[t][(x,u)].
PhiTable pool_phi(const PhiTable& phi, const std::vector<std::vector<double>>& weights);

// The observable action marginal of a (possibly context-aware) policy:
// p_t(u|y) under the occupancy the policy induces on spec.
Policy obs_marginal_policy(const PomdpSpec& spec, const Policy& pol);

// Structured-text (JSON) serialization with probability entries as decimal
// strings; round-trips bit-exactly.
std::string spec_to_json(const PomdpSpec& spec);
PomdpSpec spec_from_json(const std::string& text);

std::string policy_to_json(const Policy& pol);
Policy policy_from_json(const std::string& text);
std::string policy_hash(const Policy& pol);

}  // namespace cmdprox
