#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cmdprox/core.hpp"
#include "cmdprox/envs.hpp"
#include "cmdprox/rng.hpp"
#include "cmdprox/simulate.hpp"
#include "doctest.h"

using namespace cmdprox;

namespace {

// 2-state, 2-context fixture params with x = 1 unreachable, for the
// zero-visitation path.
CmdpParams unreachable_x1_params() {
  CmdpParams p;
  p.num_obs = 2;
  p.num_contexts = 2;
  p.num_actions = 2;
  p.horizon = 3;
  p.eta = {1.0, 0.0};
  p.nu = {0.5, 0.5};
  p.px.assign(2 * 2 * 2 * 2, 0.0);
  p.pz.assign(2 * 2 * 2 * 2, 0.0);
  p.reward.assign(2 * 2 * 2, 0.0);
  for (int x = 0; x < 2; ++x)
    for (int z = 0; z < 2; ++z)
      for (int u = 0; u < 2; ++u) {
        const std::size_t base = (static_cast<std::size_t>(x) * 2 + z) * 2 + u;
        p.px[base * 2 + 0] = 1.0;  // everything collapses onto x = 0
        p.pz[base * 2 + z] = 1.0;
        p.reward[base] = 0.25 * static_cast<double>(u);
      }
  return p;
}

Policy z_independent_policy(const PomdpSpec& spec, std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  Policy pol = Policy::uniform(PolicyKind::state_based, spec.horizon, spec.num_full_states,
                               spec.num_actions);
  for (int t = 0; t < spec.horizon; ++t)
    for (int x = 0; x < spec.num_obs; ++x) {
      std::vector<double> row(spec.num_actions);
      double sum = 0.0;
      for (double& v : row) {
        v = 0.2 + rng.uniform01();
        sum += v;
      }
      for (int z = 0; z < spec.num_contexts; ++z)
        for (int u = 0; u < spec.num_actions; ++u) {
          pol.at(t, spec.state_of(x, z), u) = row[u] / sum;
        }
    }
  return pol;
}

}  // namespace

TEST_CASE("build_cmdp produces the icu shape") {
  const Fixture fx = make_fixture("icu");
  CHECK(fx.spec.num_full_states == 8);
  CHECK(fx.spec.num_obs == 4);
  CHECK(fx.spec.num_actions == 3);
  CHECK(fx.spec.horizon == 9);
  CHECK(fx.spec.factored);
}

TEST_CASE("build_cmdp with one context degenerates to an identity observation") {
  FixtureId id{"tiny", {}, {{"num_contexts", 1.0}}};
  const Fixture fx = make_fixture(id);
  CHECK(fx.spec.num_full_states == fx.spec.num_obs);
  for (int s = 0; s < fx.spec.num_full_states; ++s)
    for (int y = 0; y < fx.spec.num_obs; ++y) {
      CHECK(fx.spec.p_obs(s, y) == (s == y ? 1.0 : 0.0));
    }
}

TEST_CASE("tiny reward alphabet has exactly four entries") {
  const Fixture fx = make_fixture("tiny");
  CHECK(fx.spec.num_rewards() == 4);
}

TEST_CASE("build_cmdp rejects non-stochastic kernels naming the cell") {
  CmdpParams p = unreachable_x1_params();
  p.px[3] = 0.7;  // break row (x=0,z=0,u=1)
  p.px[2] = 0.0;
  try {
    build_cmdp(p);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("x=0") != std::string::npos);
    CHECK(std::string(e.what()).find("u=1") != std::string::npos);
  }
}

TEST_CASE("build_cmdp rejects non-finite rewards") {
  CmdpParams p = unreachable_x1_params();
  p.reward[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(build_cmdp(p), ValidationError);
}

TEST_CASE("validate is empty on fixtures and reports broken rows") {
  for (const char* name : {"icu", "tiny", "proxyrich"}) {
    CHECK(validate(make_fixture(name).spec).empty());
  }

  Fixture fx = make_fixture("tiny");
  fx.spec.trans_at(1, 0, 0) -= 0.1;  // row now sums to 0.9
  const auto viol = validate(fx.spec);
  REQUIRE(viol.size() == 1);
  CHECK(viol[0].s == 1);
  CHECK(viol[0].u == 0);

  Fixture fx2 = make_fixture("tiny");
  std::swap(fx2.spec.reward_alphabet[0], fx2.spec.reward_alphabet[1]);
  bool found = false;
  for (const auto& v : validate(fx2.spec)) {
    found = found || v.what.find("strictly increasing") != std::string::npos;
  }
  CHECK(found);
}

TEST_CASE("exact_occupancy starts at the initial distribution and conserves mass") {
  for (const char* name : {"icu", "tiny", "proxyrich"}) {
    const Fixture fx = make_fixture(name);
    const auto occ = exact_occupancy(fx.spec, fx.behavioral);
    REQUIRE(static_cast<int>(occ.size()) == fx.spec.horizon);
    for (int s = 0; s < fx.spec.num_full_states; ++s) {
      CHECK(occ[0][s] == fx.spec.init_dist[s]);
    }
    for (const auto& d : occ) {
      double mass = 0.0;
      for (double v : d) {
        CHECK(v >= 0.0);
        mass += v;
      }
      CHECK(std::abs(mass - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("exact_occupancy on a single-state spec is the constant one") {
  CmdpParams p;
  p.num_obs = 1;
  p.num_contexts = 1;
  p.num_actions = 2;
  p.horizon = 4;
  p.eta = {1.0};
  p.nu = {1.0};
  p.px = {1.0, 1.0};
  p.pz = {1.0, 1.0};
  p.reward = {0.0, 1.0};
  const PomdpSpec spec = build_cmdp(p);
  const Policy pol = Policy::uniform(PolicyKind::obs_based, 4, 1, 2);
  for (const auto& d : exact_occupancy(spec, pol)) {
    CHECK(d[0] == 1.0);
  }
}

TEST_CASE("exact_occupancy matches Monte-Carlo frequencies on tiny") {
  Fixture fx = make_fixture("tiny");
  // extend to a third step so the recursion is exercised beyond the base case
  fx.spec.horizon = 3;
  Policy pol = fx.behavioral;
  pol.horizon = 3;
  pol.table.insert(pol.table.end(), pol.table.end() - pol.num_cond * pol.num_actions,
                   pol.table.end());
  const auto occ = exact_occupancy(fx.spec, pol);

  const std::int64_t M = 1000000;
  std::vector<double> freq(fx.spec.num_full_states, 0.0);
  for (std::int64_t i = 0; i < M; ++i) {
    const Trajectory tr = sample_trajectory(fx.spec, pol, derive_seed(41, i));
    freq[tr.states[2]] += 1.0;
  }
  for (int s = 0; s < fx.spec.num_full_states; ++s) {
    CHECK(std::abs(freq[s] / M - occ[2][s]) < 3e-3);
  }
}

TEST_CASE("occupancy agrees with sampled state frequencies within 4/sqrt(M)") {
  const Fixture fx = make_fixture("icu");
  const auto occ = exact_occupancy(fx.spec, fx.behavioral);
  const std::int64_t M = 40000;
  std::vector<std::vector<double>> freq(fx.spec.horizon,
                                        std::vector<double>(fx.spec.num_full_states, 0.0));
  for (std::int64_t i = 0; i < M; ++i) {
    const Trajectory tr = sample_trajectory(fx.spec, fx.behavioral, derive_seed(17, i));
    for (int t = 0; t < fx.spec.horizon; ++t) freq[t][tr.states[t]] += 1.0;
  }
  const double tol = 4.0 / std::sqrt(static_cast<double>(M));
  for (int t = 0; t < fx.spec.horizon; ++t)
    for (int s = 0; s < fx.spec.num_full_states; ++s) {
      CHECK(std::abs(freq[t][s] / M - occ[t][s]) < tol);
    }
}

TEST_CASE("marginalized transition collapses to the kernel without confounding") {
  FixtureId id{"tiny", {}, {{"num_contexts", 1.0}}};
  const Fixture fx = make_fixture(id);
  const PhiTable phi = exact_marginalized_transition(fx.spec, fx.behavioral);
  for (int t = 0; t < fx.spec.horizon; ++t)
    for (int x = 0; x < fx.spec.num_obs; ++x)
      for (int u = 0; u < fx.spec.num_actions; ++u)
        for (int x2 = 0; x2 < fx.spec.num_obs; ++x2) {
          CHECK(std::abs(phi.at(t, x, u, x2) - fx.spec.p_trans(x, u, x2)) <= 1e-14);
        }
}

TEST_CASE("marginalized transition at t=0 uses the prior under a context-free policy") {
  const Fixture fx = make_fixture("tiny");
  const Policy pol = z_independent_policy(fx.spec, 5);
  const PhiTable phi = exact_marginalized_transition(fx.spec, pol);
  // with init = eta (x) nu and a z-independent policy, the mixture weights at
  // t = 0 are exactly nu
  const std::vector<double> nu = {0.7, 0.3};
  for (int x = 0; x < 2; ++x)
    for (int u = 0; u < 2; ++u)
      for (int x2 = 0; x2 < 2; ++x2) {
        double want = 0.0;
        for (int z = 0; z < 2; ++z) {
          double pxx = 0.0;
          for (int z2 = 0; z2 < 2; ++z2) {
            pxx += fx.spec.p_trans(fx.spec.state_of(x, z), u, fx.spec.state_of(x2, z2));
          }
          want += nu[z] * pxx;
        }
        CHECK(std::abs(phi.at(0, x, u, x2) - want) <= 1e-12);
      }
}

TEST_CASE("marginalized transition matches Monte-Carlo triplet frequencies on tiny") {
  const Fixture fx = make_fixture("tiny");
  const PhiTable phi = exact_marginalized_transition(fx.spec, fx.behavioral);
  const std::int64_t M = 1000000;
  std::vector<double> counts(2 * 2 * 2, 0.0), totals(2 * 2, 0.0);
  for (std::int64_t i = 0; i < M; ++i) {
    const Trajectory tr = sample_trajectory(fx.spec, fx.behavioral, derive_seed(23, i));
    const int x = tr.steps[0].y, u = tr.steps[0].u, x2 = tr.steps[1].y;
    counts[(x * 2 + u) * 2 + x2] += 1.0;
    totals[x * 2 + u] += 1.0;
  }
  for (int x = 0; x < 2; ++x)
    for (int u = 0; u < 2; ++u)
      for (int x2 = 0; x2 < 2; ++x2) {
        const double emp = counts[(x * 2 + u) * 2 + x2] / totals[x * 2 + u];
        CHECK(std::abs(emp - phi.at(0, x, u, x2)) < 3e-3);
      }
}

TEST_CASE("marginalized transition rows are distributions and flag unvisited cells") {
  const PomdpSpec spec = build_cmdp(unreachable_x1_params());
  const Policy pol = Policy::uniform(PolicyKind::state_based, 3, 4, 2);
  const PhiTable phi = exact_marginalized_transition(spec, pol);
  for (int t = 0; t < 3; ++t)
    for (int x = 0; x < 2; ++x)
      for (int u = 0; u < 2; ++u) {
        double sum = 0.0;
        for (int x2 = 0; x2 < 2; ++x2) sum += phi.at(t, x, u, x2);
        CHECK(std::abs(sum - 1.0) <= 1e-10);
        CHECK(phi.is_flagged(t, x, u) == (x == 1));  // x = 1 is never visited
        if (x == 1) CHECK(phi.at(t, x, u, 0) == 0.5);
      }
}

TEST_CASE("observable marginal policy mixes the behavioral rows by the prior at t=0") {
  const Fixture fx = make_fixture("icu");
  const Policy marg = obs_marginal_policy(fx.spec, fx.behavioral);
  for (int x = 0; x < fx.spec.num_obs; ++x) {
    for (int u = 0; u < fx.spec.num_actions; ++u) {
      double want = 0.0, norm = 0.0;
      for (int z = 0; z < fx.spec.num_contexts; ++z) {
        const int s = fx.spec.state_of(x, z);
        want += fx.spec.init_dist[s] * fx.behavioral.prob(0, s, u);
        norm += fx.spec.init_dist[s];
      }
      CHECK(std::abs(marg.prob(0, x, u) - want / norm) <= 1e-12);
    }
  }
}

TEST_CASE("spec and policy documents round-trip bit-exactly") {
  for (const char* name : {"icu", "proxyrich", "tiny"}) {
    const Fixture fx = make_fixture(name);
    const std::string doc = spec_to_json(fx.spec);
    const PomdpSpec back = spec_from_json(doc);
    CHECK(spec_to_json(back) == doc);
    CHECK(back.trans == fx.spec.trans);
    CHECK(back.init_dist == fx.spec.init_dist);
    CHECK(back.reward_alphabet == fx.spec.reward_alphabet);

    const std::string pdoc = policy_to_json(fx.behavioral);
    const Policy pback = policy_from_json(pdoc);
    CHECK(policy_to_json(pback) == pdoc);
    CHECK(pback.table == fx.behavioral.table);
  }
}
