#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmdprox {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a weight-matrix chain loses all rank: the proxy conditionals
// carry no invertible signal at (k, action).
struct SingularChainError : std::runtime_error {
  int k = -1;
  int action = -1;
  double cond = 0.0;
  SingularChainError(const std::string& msg, int k_, int action_, double cond_)
      : std::runtime_error(msg), k(k_), action(action_), cond(cond_) {}
};

// ---------------------------------------------------------------------------
// PomdpSpec: the full generative model. Latent full states s, observations y,
// actions u, a finite reward alphabet, an initial distribution and a horizon.
// Contextual MDPs are the factored case s = (x, z) with deterministic y = x;
// they are built through build_cmdp() which fixes the flattening s = x*|Z|+z.
// ---------------------------------------------------------------------------

struct PomdpSpec {
  int num_obs = 0;          // |Y| (= |X| for factored specs)
  int num_contexts = 0;     // |Z|; 0 marks a non-factored spec, 1 no confounding
  int num_full_states = 0;  // |S|
  int num_actions = 0;      // |U|
  int horizon = 0;          // T; steps 0..T-1 act and collect rewards
  bool factored = false;

  std::vector<double> init_dist;        // [S]
  std::vector<double> trans;            // [S][U][S']
  std::vector<double> obs;              // [S][Y]
  std::vector<double> reward_alphabet;  // strictly increasing values
  std::vector<double> reward_kernel;    // [S][U][R]

  int num_rewards() const { return static_cast<int>(reward_alphabet.size()); }

  int state_of(int x, int z) const { return x * num_contexts + z; }
  int x_of(int s) const { return s / num_contexts; }
  int z_of(int s) const { return s % num_contexts; }

  double p_trans(int s, int u, int s2) const {
    return trans[(static_cast<std::size_t>(s) * num_actions + u) * num_full_states + s2];
  }
  double& trans_at(int s, int u, int s2) {
    return trans[(static_cast<std::size_t>(s) * num_actions + u) * num_full_states + s2];
  }
  std::span<const double> trans_row(int s, int u) const {
    return {trans.data() + (static_cast<std::size_t>(s) * num_actions + u) * num_full_states,
            static_cast<std::size_t>(num_full_states)};
  }

  double p_obs(int s, int y) const {
    return obs[static_cast<std::size_t>(s) * num_obs + y];
  }
  double& obs_at(int s, int y) {
    return obs[static_cast<std::size_t>(s) * num_obs + y];
  }
  std::span<const double> obs_row(int s) const {
    return {obs.data() + static_cast<std::size_t>(s) * num_obs,
            static_cast<std::size_t>(num_obs)};
  }

  double p_reward(int s, int u, int r) const {
    return reward_kernel[(static_cast<std::size_t>(s) * num_actions + u) * num_rewards() + r];
  }
  double& reward_at(int s, int u, int r) {
    return reward_kernel[(static_cast<std::size_t>(s) * num_actions + u) * num_rewards() + r];
  }
  std::span<const double> reward_row(int s, int u) const {
    return {reward_kernel.data() + (static_cast<std::size_t>(s) * num_actions + u) * num_rewards(),
            static_cast<std::size_t>(num_rewards())};
  }

  // Expected reward value of the kernel cell (s, u).
  double reward_mean(int s, int u) const {
    double m = 0.0;
    for (int r = 0; r < num_rewards(); ++r) m += reward_alphabet[r] * p_reward(s, u, r);
    return m;
  }
};

struct Violation {
  std::string what;
  int s = -1;  // full-state index when applicable
  int u = -1;  // action index when applicable
};

// ---------------------------------------------------------------------------
// Policy: T time slices of conditional action distributions. Observation-based
// policies condition on y, state-based policies on the full state s.
// ---------------------------------------------------------------------------

enum class PolicyKind { obs_based, state_based };

struct Policy {
  PolicyKind kind = PolicyKind::obs_based;
  int horizon = 0;
  int num_cond = 0;     // |Y| or |S| depending on kind
  int num_actions = 0;
  std::vector<double> table;  // [T][cond][U]

  static Policy uniform(PolicyKind kind, int horizon, int num_cond, int num_actions) {
    Policy p;
    p.kind = kind;
    p.horizon = horizon;
    p.num_cond = num_cond;
    p.num_actions = num_actions;
    p.table.assign(static_cast<std::size_t>(horizon) * num_cond * num_actions,
                   1.0 / num_actions);
    return p;
  }

  double prob(int t, int cond, int u) const {
    return table[(static_cast<std::size_t>(t) * num_cond + cond) * num_actions + u];
  }
  double& at(int t, int cond, int u) {
    return table[(static_cast<std::size_t>(t) * num_cond + cond) * num_actions + u];
  }
  std::span<const double> row(int t, int cond) const {
    return {table.data() + (static_cast<std::size_t>(t) * num_cond + cond) * num_actions,
            static_cast<std::size_t>(num_actions)};
  }
};

// ---------------------------------------------------------------------------
// Trajectories and datasets
// ---------------------------------------------------------------------------

struct StepRecord {
  int y = 0;  // observation
  int u = 0;  // action
  int r = 0;  // reward alphabet index
};

struct Trajectory {
  int null_obs = 0;              // pre-episode second observation of s_0
  std::vector<int> states;       // [T] latent full states; empty when stripped
  std::vector<StepRecord> steps; // [T]
};

struct ObservableTrajectory {
  int null_obs = 0;
  std::vector<StepRecord> steps;
};

inline ObservableTrajectory to_observable(const Trajectory& tr) {
  return ObservableTrajectory{tr.null_obs, tr.steps};
}

struct DatasetMeta {
  std::string schema = "cmdprox/dataset/v1";
  std::string fixture;      // producing fixture label, "" for ad-hoc specs
  std::int64_t n = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  bool emit_latent = false;
  bool factored = false;
  int num_obs = 0;
  int num_full_states = 0;
  int num_actions = 0;
  std::vector<double> reward_alphabet;
  std::string policy_hash;
  std::string config_hash;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Trajectory> records;  // states empty unless meta.emit_latent
};

// ---------------------------------------------------------------------------
// Table types shared by the estimation / learning / evaluation modules
// ---------------------------------------------------------------------------

// Behavior-averaged transition table phi_t(x'|x,u). Either one slice per time
// step or a single pooled slice.
struct PhiTable {
  bool per_time = true;
  int horizon = 0;  // number of stored slices (1 when pooled)
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> p;        // [slices][X][U][X']
  std::vector<std::uint8_t> flagged;  // [slices][X][U]; 1 = filled, not observed

  int slice(int t) const { return per_time ? t : 0; }
  double at(int t, int x, int u, int x2) const {
    return p[((static_cast<std::size_t>(slice(t)) * num_states + x) * num_actions + u) *
                 num_states + x2];
  }
  double& at(int t, int x, int u, int x2) {
    return p[((static_cast<std::size_t>(slice(t)) * num_states + x) * num_actions + u) *
                 num_states + x2];
  }
  bool is_flagged(int t, int x, int u) const {
    return flagged[(static_cast<std::size_t>(slice(t)) * num_states + x) * num_actions + u] != 0;
  }
  void set_flag(int t, int x, int u) {
    flagged[(static_cast<std::size_t>(slice(t)) * num_states + x) * num_actions + u] = 1;
  }
  static PhiTable zeros(bool per_time, int slices, int num_states, int num_actions) {
    PhiTable tab;
    tab.per_time = per_time;
    tab.horizon = slices;
    tab.num_states = num_states;
    tab.num_actions = num_actions;
    tab.p.assign(static_cast<std::size_t>(slices) * num_states * num_actions * num_states, 0.0);
    tab.flagged.assign(static_cast<std::size_t>(slices) * num_states * num_actions, 0);
    return tab;
  }
};

// Per-time expected-reward table rho_t(x,u) with per-cell diagnostics.
struct RewardTable {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> rho;             // [T][X][U]
  std::vector<std::uint8_t> flagged;   // degenerate cells filled by fallback
  std::vector<double> mass_defect;     // 1 - sum of raw cell masses before clipping

  double at(int t, int x, int u) const {
    return rho[(static_cast<std::size_t>(t) * num_states + x) * num_actions + u];
  }
  double& at(int t, int x, int u) {
    return rho[(static_cast<std::size_t>(t) * num_states + x) * num_actions + u];
  }
  bool is_flagged(int t, int x, int u) const {
    return flagged[(static_cast<std::size_t>(t) * num_states + x) * num_actions + u] != 0;
  }
  static RewardTable zeros(int horizon, int num_states, int num_actions) {
    RewardTable tab;
    tab.horizon = horizon;
    tab.num_states = num_states;
    tab.num_actions = num_actions;
    const std::size_t n = static_cast<std::size_t>(horizon) * num_states * num_actions;
    tab.rho.assign(n, 0.0);
    tab.flagged.assign(n, 0);
    tab.mass_defect.assign(n, 0.0);
    return tab;
  }
};

}  // namespace cmdprox
