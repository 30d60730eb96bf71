#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmdprox/learn.hpp"
#include "cmdprox/types.hpp"

namespace cmdprox {

// l1 distance between the observable-state distribution of the true system
// and the model's propagated distribution, per step t = 0..horizon-1.
//
// A state-based pol drives the true system directly while the model side is
// propagated under pol's observable marginal (the self-consistent pairing:
// the exact behavior-averaged table reproduces the generating process's
// observable marginals). An obs-based pol drives both sides as given.
std::vector<double> l1_rollout_error(const PomdpSpec& spec, const SurrogateModel& model,
                                     const Policy& pol, int horizon);

// Same metric with the true side estimated from sampled episodes.
std::vector<double> l1_rollout_error_mc(const PomdpSpec& spec, const SurrogateModel& model,
                                        const Policy& pol, int horizon, std::int64_t episodes,
                                        std::uint64_t seed);

struct ReturnStat {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::int64_t episodes = 0;
};

ReturnStat mc_return(const PomdpSpec& spec, const Policy& pol, std::int64_t episodes,
                     std::uint64_t seed);

// Per-episode returns (for paired comparisons).
std::vector<double> mc_return_samples(const PomdpSpec& spec, const Policy& pol,
                                      std::int64_t episodes, std::uint64_t seed);

// Common-random-number comparison of two policies on the same spec.
struct PairedReturn {
  ReturnStat a;
  ReturnStat b;
  double diff_mean = 0.0;    // a - b
  double diff_stderr = 0.0;
};
PairedReturn mc_return_paired(const PomdpSpec& spec, const Policy& a, const Policy& b,
                              std::int64_t episodes, std::uint64_t seed);

struct EvalConfig {
  bool exact_metric = true;   // exact propagation vs Monte-Carlo true side
  std::int64_t episodes = 1000;
  std::uint64_t seed = 7;
};

struct RolloutRow {
  std::string metric;  // "l1"
  std::string model;
  std::string policy;  // "behavioral" | "learned"
  int t = 0;
  double value = 0.0;
};

struct ReturnRow {
  std::string model;
  std::string policy;
  std::int64_t episodes = 0;
  double mean_return = 0.0;
  double stderr_ = 0.0;
};

struct EvalReport {
  std::vector<RolloutRow> rollout;
  std::vector<ReturnRow> returns;
  std::vector<std::pair<std::string, std::string>> metadata;
};

// Runs both metrics for every model under the behavioral policy and under
// each model's own learned policy.
EvalReport compare(const PomdpSpec& spec, const Policy& behavioral,
                   const std::vector<const SurrogateModel*>& models,
                   const std::vector<std::string>& labels, const EvalConfig& cfg);

std::string rollout_csv(const EvalReport& rep);
std::string returns_csv(const EvalReport& rep);

}  // namespace cmdprox
