#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cmdprox/core.hpp"
#include "cmdprox/envs.hpp"
#include "cmdprox/estimate.hpp"
#include "cmdprox/proximal.hpp"
#include "doctest.h"

using namespace cmdprox;

TEST_CASE("icu keeps the context persistent") {
  const Fixture fx = make_fixture("icu");
  CHECK(fx.spec.num_full_states == 8);
  CHECK(fx.spec.horizon == 9);
  // transitions never move the z component
  for (int s = 0; s < fx.spec.num_full_states; ++s)
    for (int u = 0; u < fx.spec.num_actions; ++u)
      for (int s2 = 0; s2 < fx.spec.num_full_states; ++s2) {
        if (fx.spec.z_of(s) != fx.spec.z_of(s2)) {
          CHECK(fx.spec.p_trans(s, u, s2) == 0.0);
        }
      }
}

TEST_CASE("icu behavioral policy escalates strictly more under high risk") {
  const Fixture fx = make_fixture("icu");
  const int aggressive = fx.spec.num_actions - 1;
  for (int t = 0; t < fx.spec.horizon; ++t)
    for (int x = 0; x < fx.spec.num_obs; ++x) {
      const double low = fx.behavioral.prob(t, fx.spec.state_of(x, 0), aggressive);
      const double high = fx.behavioral.prob(t, fx.spec.state_of(x, 1), aggressive);
      CHECK(high > low);
    }
}

TEST_CASE("icu lambda override shifts the treatment penalty") {
  const Fixture base = make_fixture("icu");
  FixtureId id{"icu", {}, {{"lambda", 0.2}}};
  const Fixture heavy = make_fixture(id);
  // max alphabet value corresponds to the untreated healthy cell; min picks
  // up the doubled burden
  CHECK(heavy.spec.reward_alphabet.back() == base.spec.reward_alphabet.back());
  CHECK(heavy.spec.reward_alphabet.front() < base.spec.reward_alphabet.front());
}

TEST_CASE("unknown fixture and unknown override keys are rejected") {
  CHECK_THROWS_AS(make_fixture("hospital"), ValidationError);
  FixtureId id{"icu", {}, {{"gamma", 0.9}}};
  CHECK_THROWS_AS(make_fixture(id), ValidationError);
  FixtureId id2{"tiny", {}, {{"num_contexts", 3.0}}};
  CHECK_THROWS_AS(make_fixture(id2), ValidationError);
  FixtureId id3{"proxyrich", {}, {{"lambda", 0.1}}};
  CHECK_THROWS_AS(make_fixture(id3), ValidationError);
}

TEST_CASE("proxyrich proxy conditionals are well conditioned at population level") {
  const Fixture fx = make_fixture("proxyrich");
  const EstimatedMatrices em = population_matrices(fx.spec, fx.behavioral);
  for (int t = 0; t < fx.spec.horizon; ++t)
    for (int u = 0; u < fx.spec.num_actions; ++u) {
      const CondInfo info = cond_info(em.m_obs[t][u]);
      CHECK(info.rank == info.dim);
      CHECK(info.cond < 50.0);
    }
  const InvertibilityReport rep = invertibility_report(em);
  CHECK(rep.verdict == "ok");
  CHECK(rep.num_warn == 0);
  CHECK(rep.num_fail == 0);
}

TEST_CASE("tiny kernels are strictly positive") {
  const Fixture fx = make_fixture("tiny");
  for (int s = 0; s < fx.spec.num_full_states; ++s)
    for (int u = 0; u < fx.spec.num_actions; ++u)
      for (int s2 = 0; s2 < fx.spec.num_full_states; ++s2) {
        CHECK(fx.spec.p_trans(s, u, s2) > 0.0);
      }
  for (double v : fx.spec.init_dist) CHECK(v > 0.0);
  for (int t = 0; t < fx.spec.horizon; ++t)
    for (int s = 0; s < fx.spec.num_full_states; ++s)
      for (int u = 0; u < fx.spec.num_actions; ++u) {
        CHECK(fx.behavioral.prob(t, s, u) > 0.0);
      }
}

TEST_CASE("tiny with the context collapsed has coinciding marginal and true dynamics") {
  FixtureId id{"tiny", {}, {{"num_contexts", 1.0}}};
  const Fixture fx = make_fixture(id);
  const PhiTable phi = exact_marginalized_transition(fx.spec, fx.behavioral);
  for (int t = 0; t < fx.spec.horizon; ++t)
    for (int x = 0; x < 2; ++x)
      for (int u = 0; u < 2; ++u)
        for (int x2 = 0; x2 < 2; ++x2) {
          CHECK(phi.at(t, x, u, x2) == doctest::Approx(fx.spec.p_trans(x, u, x2)).epsilon(1e-14));
        }
}

TEST_CASE("fixture construction is deterministic") {
  const Fixture a = make_fixture("proxyrich");
  const Fixture b = make_fixture("proxyrich");
  CHECK(a.spec.trans == b.spec.trans);
  CHECK(a.spec.obs == b.spec.obs);
  CHECK(a.behavioral.table == b.behavioral.table);
}
