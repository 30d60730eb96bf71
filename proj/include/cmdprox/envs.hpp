#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "cmdprox/types.hpp"

namespace cmdprox {

// Built-in reproducible environments:
//   icu      - 4 health states, 3 treatment intensities, 2 persistent latent
//              risk profiles, T = 9; the behavioral policy escalates more for
//              high-risk patients at equal observed state.
//   proxyrich - 4 latent states observed through a full-rank stochastic
//              kernel, 2 actions, T = 4; constructed so the proxy
//              conditionals are square and well conditioned, which makes the
//              weight-chain identification exact.
//   tiny     - 2x2x2 contextual model with T = 2 and strictly positive
//              kernels; small enough for exhaustive enumeration oracles.
struct FixtureId {
  std::string name;                           // icu | proxyrich | tiny
  std::optional<std::uint64_t> override_seed; // proxyrich kernel seed
  std::map<std::string, double> param_overrides;
};

struct Fixture {
  std::string name;
  PomdpSpec spec;
  Policy behavioral;
  std::string description;
};

// Throws ValidationError on unknown names, unknown override keys, or when a
// proxyrich build fails its conditioning check after overrides.
Fixture make_fixture(const FixtureId& id);

inline Fixture make_fixture(const std::string& name) { return make_fixture(FixtureId{name, {}, {}}); }

}  // namespace cmdprox
