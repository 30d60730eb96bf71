#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmdprox/types.hpp"

namespace cmdprox {

struct CondInfo {
  int dim = 0;
  int rank = 0;
  double cond = 0.0;  // sigma_max / sigma_min; inf when rank deficient
};

// Rank counts singular values above rank_tol * sigma_max.
CondInfo cond_info(const Eigen::MatrixXd& m, double rank_tol = 1e-9);

struct UntrustedColumn {
  std::string kind;  // "obs" | "joint" | "reward"
  int t = 0;         // time (or chain index k for "joint")
  int u = 0;
  int y_prev = -1;   // realized y_{k-1} for "joint" slices
  int col = 0;       // conditioning column
};

// The behavioral conditional-probability matrices consumed by the proximal
// weight chain. Orientation: rows index the newer variable, columns the
// conditioning variable, so chain contractions are plain matrix products.
//
//   m_obs[t][u]            P(Y_t | Y_{t-1}, u_t=u), columns Y_N at t = 0
//   m_joint[k][u][y_prev]  P(Y_k, y_{k-1}=y_prev | Y_{k-2}, u_{k-1}=u),
//                          k = 1..T-1, columns Y_N at k = 1
//   m_reward[t][u]         p(r_t, y_t | Y_{t-1}, u_t=u) with rows r*|Y|+y_t
//   p_y0                   P(Y_0)
//
// `counts` mirrors each estimate with raw counts (or exact joint masses for
// population-built instances).
struct EstimatedMatrices {
  int num_obs = 0;
  int num_actions = 0;
  int num_rewards = 0;
  int horizon = 0;
  bool factored = false;
  std::vector<double> reward_alphabet;

  double alpha = 0.0;
  bool pooled_time = false;
  bool population = false;
  int declared_full_states = 0;  // |S| from the spec or dataset metadata; 0 if unknown

  std::vector<std::vector<Eigen::MatrixXd>> m_obs;                 // [T][U]
  std::vector<std::vector<std::vector<Eigen::MatrixXd>>> m_joint;  // [T][U][Y]; index 0 unused
  std::vector<std::vector<Eigen::MatrixXd>> m_reward;              // [T][U]
  Eigen::VectorXd p_y0;

  std::vector<std::vector<Eigen::MatrixXd>> counts_obs;
  std::vector<std::vector<std::vector<Eigen::MatrixXd>>> counts_joint;
  std::vector<std::vector<Eigen::MatrixXd>> counts_reward;

  std::vector<UntrustedColumn> untrusted;
  std::vector<CondInfo> obs_cond;  // per (t,u), row-major over u

  const CondInfo& obs_cond_at(int t, int u) const { return obs_cond[t * num_actions + u]; }
};

// Laplace-smoothed conditional estimates from an observable dataset. With
// alpha = 0, conditioning columns that were never observed are filled uniform
// and listed in `untrusted`. pool_time merges counts across steps t >= 1
// (t = 0 keeps its own estimates: its conditioning variable is the null
// observation).
EstimatedMatrices estimate_matrices(const Dataset& ds, double alpha, bool pool_time = false);

// Per-time transition estimate phi_t(x'|x,u) from (x_t, u_t, x_{t+1})
// triplets; requires a factored (y = x) dataset. Slices t = 0..T-2 come from
// counts; the final slice has no observed successor and is flagged uniform
// (it is never consumed: terminal values are zero). The pooled variant sums
// counts over t.
PhiTable estimate_phi(const Dataset& ds, double alpha, bool pooled = false);

struct InvertibilityRow {
  std::string kind;   // "obs" or "structural"
  int t = -1;
  int u = -1;
  int dim = 0;
  int rank = 0;
  double cond = 0.0;
  int zero_count_columns = 0;
  std::string klass;  // ok | warn | fail
};

struct InvertibilityReport {
  std::vector<InvertibilityRow> rows;
  std::string verdict;  // worst classification present
  int num_warn = 0;
  int num_fail = 0;
};

// Classifies every inverted matrix: fail on rank deficiency or cond >=
// fail_cond, warn on cond >= warn_cond or unobserved conditioning columns.
// When the declared latent space is larger than the observation alphabet the
// report adds a structural fail row: the latent-state proxy conditional
// cannot be square there, whatever the counts say.
InvertibilityReport invertibility_report(const EstimatedMatrices& em,
                                         double warn_cond = 1e8,
                                         double fail_cond = 1e12);

std::string report_to_text(const InvertibilityReport& rep);
std::string report_to_json(const InvertibilityReport& rep);

// Delimited text dump of every matrix block, for inspection and golden files.
void dump_matrices(const EstimatedMatrices& em, std::ostream& os);

}  // namespace cmdprox
