#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cmdprox/core.hpp"
#include "cmdprox/envs.hpp"
#include "cmdprox/estimate.hpp"
#include "cmdprox/proximal.hpp"
#include "cmdprox/rng.hpp"
#include "doctest.h"

using namespace cmdprox;

namespace {

Policy random_obs_policy(int horizon, int num_obs, int num_actions, std::uint64_t seed,
                         double floor = 0.05) {
  Rng rng(splitmix64(seed));
  Policy pol = Policy::uniform(PolicyKind::obs_based, horizon, num_obs, num_actions);
  for (int t = 0; t < horizon; ++t)
    for (int y = 0; y < num_obs; ++y) {
      double sum = 0.0;
      std::vector<double> row(num_actions);
      for (int u = 0; u < num_actions; ++u) {
        row[u] = floor + rng.uniform01();
        sum += row[u];
      }
      for (int u = 0; u < num_actions; ++u) pol.at(t, y, u) = row[u] / sum;
    }
  return pol;
}

}  // namespace

TEST_CASE("population chain reproduces the brute-force reward law on proxyrich") {
  const Fixture fx = make_fixture("proxyrich");
  const EstimatedMatrices em = population_matrices(fx.spec, fx.behavioral);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Policy pol = random_obs_policy(fx.spec.horizon, fx.spec.num_obs,
                                         fx.spec.num_actions, 100 + s);
    WeightChainContext ctx(em, pol);
    for (int t = 0; t < fx.spec.horizon; ++t) {
      const RewardDistribution got = reward_dist_dp(ctx, t);
      const RewardDistribution want = brute_force_reward_dist(fx.spec, pol, t);
      REQUIRE(got.probs.size() == want.probs.size());
      for (std::size_t r = 0; r < want.probs.size(); ++r) {
        CHECK(std::abs(got.probs[r] - want.probs[r]) < 1e-8);
      }
    }
  }
}

TEST_CASE("dp and enumeration agree exactly") {
  const Fixture fx = make_fixture("proxyrich");
  const EstimatedMatrices em = population_matrices(fx.spec, fx.behavioral);
  const Policy pol =
      random_obs_policy(fx.spec.horizon, fx.spec.num_obs, fx.spec.num_actions, 7);
  WeightChainContext ctx(em, pol);
  for (int t = 0; t <= 3; ++t) {
    const RewardDistribution a = reward_dist_dp(ctx, t);
    const RewardDistribution b = reward_dist_enumerate(ctx, t);
    for (std::size_t r = 0; r < a.probs.size(); ++r) {
      CHECK(std::abs(a.probs[r] - b.probs[r]) < 1e-10);
    }
  }
}
