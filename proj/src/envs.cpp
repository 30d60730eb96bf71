#include "cmdprox/envs.hpp"

#include <cmath>

#include "cmdprox/core.hpp"
#include "cmdprox/estimate.hpp"
#include "cmdprox/proximal.hpp"
#include "cmdprox/rng.hpp"

namespace cmdprox {

namespace {

double get_override(const std::map<std::string, double>& overrides, const std::string& key,
                    double fallback) {
  auto it = overrides.find(key);
  return it == overrides.end() ? fallback : it->second;
}

void reject_unknown_overrides(const FixtureId& id, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : id.param_overrides) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) {
      throw ValidationError("fixture '" + id.name + "': unknown override '" + key + "'");
    }
  }
}

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// ---------------------------------------------------------------------------
// icu: 4 health states (stable, borderline, deteriorating, critical), 3
// treatment intensities, 2 persistent latent risk profiles, T = 9. All
// numeric entries below are fixture constants of this repository.
// ---------------------------------------------------------------------------

Fixture make_icu(const FixtureId& id) {
  reject_unknown_overrides(id, {"lambda", "nu_high", "imp_gain", "imp_risk_drop",
                                "wor_risk_rise"});
  const int X = 4, Z = 2, U = 3, T = 9;
  const double lambda = get_override(id.param_overrides, "lambda", 0.1);
  const double nu_high = get_override(id.param_overrides, "nu_high", 0.5);
  // Treatment raises the chance of improving, strongly for low-risk patients
  // and moderately for high-risk ones; deterioration is mostly a high-risk
  // phenomenon. Over the episode this sorts the latent profiles across
  // observed severities.
  const double imp_base[2] = {0.22, 0.03};
  const double imp_gain_default[2] = {0.24, 0.05};
  const double wor_base[2] = {0.14, 0.50};
  const double wor_gain[2] = {0.05, 0.08};
  const double imp_gain_low = get_override(id.param_overrides, "imp_gain", imp_gain_default[0]);
  const double imp_gain_by_z[2] = {imp_gain_low, imp_gain_default[1]};
  // Two-level rebound (e.g. critical -> borderline) under escalated care.
  const double rebound_u[3] = {0.0, 0.05, 0.14};
  const double rebound_high_risk_scale = 0.25;

  CmdpParams p;
  p.num_obs = X;
  p.num_contexts = Z;
  p.num_actions = U;
  p.horizon = T;
  p.eta = {0.35, 0.30, 0.20, 0.15};
  p.nu = {1.0 - nu_high, nu_high};
  p.px.assign(static_cast<std::size_t>(X) * Z * U * X, 0.0);
  p.pz.assign(static_cast<std::size_t>(X) * Z * U * Z, 0.0);
  p.reward.assign(static_cast<std::size_t>(X) * Z * U, 0.0);

  auto px_at = [&](int x, int z, int u, int x2) -> double& {
    return p.px[((static_cast<std::size_t>(x) * Z + z) * U + u) * X + x2];
  };
  auto pz_at = [&](int x, int z, int u, int z2) -> double& {
    return p.pz[((static_cast<std::size_t>(x) * Z + z) * U + u) * Z + z2];
  };

  for (int x = 0; x < X; ++x)
    for (int z = 0; z < Z; ++z)
      for (int u = 0; u < U; ++u) {
        double improve = clamp(imp_base[z] + imp_gain_by_z[z] * u, 0.02, 0.90);
        double worsen = clamp(wor_base[z] - wor_gain[z] * u, 0.02, 0.90);
        double rebound = rebound_u[u] * (z == 1 ? rebound_high_risk_scale : 1.0);
        if (x == 0) improve = 0.0;          // already stable
        if (x < 2) rebound = 0.0;           // needs two levels of headroom
        if (x == 3) worsen = 0.0;           // nowhere worse to go
        const double stay = 1.0 - improve - worsen - rebound;
        if (improve > 0.0) px_at(x, z, u, x - 1) += improve;
        if (rebound > 0.0) px_at(x, z, u, x - 2) += rebound;
        if (worsen > 0.0) px_at(x, z, u, x + 1) += worsen;
        px_at(x, z, u, x) += stay;
        // persistent context
        pz_at(x, z, u, z) = 1.0;
      }

  // reward = health level minus a small treatment burden
  const double r_health[4][2] = {{8.00, 6.00}, {6.00, 4.00}, {3.60, 1.60}, {1.20, -0.80}};
  const double cost_u[3] = {0.0, 2.0, 4.0};
  for (int x = 0; x < X; ++x)
    for (int z = 0; z < Z; ++z)
      for (int u = 0; u < U; ++u) {
        p.reward[(static_cast<std::size_t>(x) * Z + z) * U + u] =
            r_health[x][z] - lambda * cost_u[u];
      }

  Fixture fx;
  fx.spec = build_cmdp(p);

  // Behavioral clinician: escalates with severity, and strongly more under
  // the high-risk profile at every observed state.
  const double g[4][2][3] = {
      {{0.92, 0.07, 0.01}, {0.45, 0.33, 0.22}},
      {{0.75, 0.20, 0.05}, {0.18, 0.34, 0.48}},
      {{0.55, 0.32, 0.13}, {0.07, 0.25, 0.68}},
      {{0.35, 0.40, 0.25}, {0.03, 0.15, 0.82}},
  };
  fx.behavioral = Policy::uniform(PolicyKind::state_based, T, fx.spec.num_full_states, U);
  for (int t = 0; t < T; ++t)
    for (int x = 0; x < X; ++x)
      for (int z = 0; z < Z; ++z)
        for (int u = 0; u < U; ++u) fx.behavioral.at(t, fx.spec.state_of(x, z), u) = g[x][z][u];

  fx.description =
      "icu: 4 severity states, 3 treatment intensities, persistent latent risk profile "
      "(|S|=8, |Y|=4, T=9); risk-aware behavioral policy";
  return fx;
}

// ---------------------------------------------------------------------------
// tiny: 2x2x2 contextual model, T = 2, strictly positive kernels, reward
// table with exactly four distinct values. Small enough for exhaustive
// enumeration oracles.
// ---------------------------------------------------------------------------

Fixture make_tiny(const FixtureId& id) {
  reject_unknown_overrides(id, {"num_contexts"});
  const int Zfull = 2;
  const int Z = static_cast<int>(get_override(id.param_overrides, "num_contexts", Zfull));
  if (Z != 1 && Z != 2) throw ValidationError("tiny: num_contexts override must be 1 or 2");
  const int X = 2, U = 2, T = 2;

  // p(x'=1 | x,z,u)
  const double px1[2][2][2] = {{{0.25, 0.55}, {0.45, 0.20}}, {{0.70, 0.35}, {0.80, 0.60}}};
  // reward values; distinct set {0, 0.25, 0.5, 1}
  const double rv[2][2][2] = {{{1.00, 0.50}, {0.50, 0.00}}, {{0.50, 0.25}, {0.25, 0.00}}};

  CmdpParams p;
  p.num_obs = X;
  p.num_contexts = Z;
  p.num_actions = U;
  p.horizon = T;
  p.eta = {0.6, 0.4};
  p.nu = Z == 2 ? std::vector<double>{0.7, 0.3} : std::vector<double>{1.0};
  p.px.assign(static_cast<std::size_t>(X) * Z * U * X, 0.0);
  p.pz.assign(static_cast<std::size_t>(X) * Z * U * Z, 0.0);
  p.reward.assign(static_cast<std::size_t>(X) * Z * U, 0.0);
  for (int x = 0; x < X; ++x)
    for (int z = 0; z < Z; ++z)
      for (int u = 0; u < U; ++u) {
        const std::size_t base = ((static_cast<std::size_t>(x) * Z + z) * U + u);
        p.px[base * X + 1] = px1[x][z][u];
        p.px[base * X + 0] = 1.0 - px1[x][z][u];
        if (Z == 2) {
          // mildly sticky context with small state/action leakage
          const double to_high =
              z == 0 ? 0.15 + 0.05 * x + 0.04 * u : 0.85 - 0.05 * x - 0.03 * u;
          p.pz[base * Z + 1] = to_high;
          p.pz[base * Z + 0] = 1.0 - to_high;
        } else {
          p.pz[base * Z + 0] = 1.0;
        }
        p.reward[base] = rv[x][z][u];
      }

  Fixture fx;
  fx.spec = build_cmdp(p);
  fx.behavioral = Policy::uniform(PolicyKind::state_based, T, fx.spec.num_full_states, U);
  for (int t = 0; t < T; ++t)
    for (int x = 0; x < X; ++x)
      for (int z = 0; z < Z; ++z) {
        const double pu1 = (t == 0 ? 0.20 + 0.30 * z + 0.15 * x : 0.30 + 0.35 * z + 0.10 * x);
        fx.behavioral.at(t, fx.spec.state_of(x, z), 0) = 1.0 - pu1;
        fx.behavioral.at(t, fx.spec.state_of(x, z), 1) = pu1;
      }
  fx.description = "tiny: 2 states, 2 contexts, 2 actions, T=2; strictly positive kernels";
  return fx;
}

// ---------------------------------------------------------------------------
// proxyrich: 4 latent states seen through a full-rank stochastic observation
// kernel, 2 actions, T = 4. Kernels are drawn from the (seeded) generator
// below and the proxy conditionals are verified to be well conditioned at
// build time, so weight-chain identification is exact here.
// ---------------------------------------------------------------------------

Fixture make_proxyrich(const FixtureId& id) {
  reject_unknown_overrides(id, {});
  const std::uint64_t seed = id.override_seed.value_or(2024001ULL);
  const int S = 4, Y = 4, U = 2, T = 4;
  Rng rng(splitmix64(seed));

  PomdpSpec spec;
  spec.num_obs = Y;
  spec.num_contexts = 0;  // not factored
  spec.num_full_states = S;
  spec.num_actions = U;
  spec.horizon = T;
  spec.factored = false;
  spec.reward_alphabet = {0.0, 0.5, 1.0};
  const int R = 3;

  spec.init_dist.assign(S, 0.0);
  spec.trans.assign(static_cast<std::size_t>(S) * U * S, 0.0);
  spec.obs.assign(static_cast<std::size_t>(S) * Y, 0.0);
  spec.reward_kernel.assign(static_cast<std::size_t>(S) * U * R, 0.0);

  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    for (double& x : v) x /= s;
  };

  {
    std::vector<double> init(S);
    for (int s = 0; s < S; ++s) init[s] = 0.8 + 0.4 * rng.uniform01();
    normalize(init);
    spec.init_dist = init;
  }
  for (int s = 0; s < S; ++s) {
    std::vector<double> row(Y);
    for (int y = 0; y < Y; ++y) row[y] = (y == s ? 0.82 : 0.0) + 0.06 * (0.3 + rng.uniform01());
    normalize(row);
    for (int y = 0; y < Y; ++y) spec.obs_at(s, y) = row[y];
  }
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u) {
      // action 1 follows a 3-cycle with a fixed point; mixing it with the
      // stay action never cancels (no -1 eigenvalue), unlike a full cycle
      const int target = u == 0 ? s : (s < 3 ? (s + 1) % 3 : 3);
      std::vector<double> row(S);
      for (int s2 = 0; s2 < S; ++s2) {
        row[s2] = (s2 == target ? 0.70 : 0.0) + 0.09 * (0.3 + rng.uniform01());
      }
      normalize(row);
      for (int s2 = 0; s2 < S; ++s2) spec.trans_at(s, u, s2) = row[s2];
    }
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u) {
      std::vector<double> row(R);
      for (int r = 0; r < R; ++r) {
        const bool peak = (s + u + r) % R == 0;
        row[r] = (peak ? 0.6 : 0.2) + 0.2 * rng.uniform01();
      }
      normalize(row);
      for (int r = 0; r < R; ++r) spec.reward_at(s, u, r) = row[r];
    }

  Fixture fx;
  fx.spec = spec;
  fx.behavioral = Policy::uniform(PolicyKind::state_based, T, S, U);
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      const double p0 = clamp(0.30 + 0.40 * ((s + t) % 2) + 0.10 * rng.uniform01(), 0.2, 0.8);
      fx.behavioral.at(t, s, 0) = p0;
      fx.behavioral.at(t, s, 1) = 1.0 - p0;
    }

  // Build-time conditioning gate on every inverted proxy matrix.
  const EstimatedMatrices em = population_matrices(fx.spec, fx.behavioral);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U; ++u) {
      const CondInfo info = cond_info(em.m_obs[t][u]);
      if (info.rank < info.dim || info.cond >= 50.0) {
        throw ValidationError("proxyrich: proxy conditional at (t=" + std::to_string(t) +
                              ",u=" + std::to_string(u) + ") is ill conditioned (cond=" +
                              std::to_string(info.cond) + "); pick another seed");
      }
    }

  fx.description =
      "proxyrich: 4 latent states under a full-rank observation kernel (|S|=|Y|=4, T=4); "
      "proxy conditionals verified well conditioned at build time";
  return fx;
}

}  // namespace

Fixture make_fixture(const FixtureId& id) {
  Fixture fx;
  if (id.name == "icu") {
    fx = make_icu(id);
  } else if (id.name == "tiny") {
    fx = make_tiny(id);
  } else if (id.name == "proxyrich") {
    fx = make_proxyrich(id);
  } else {
    throw ValidationError("unknown fixture '" + id.name + "'");
  }
  fx.name = id.name;
  return fx;
}

}  // namespace cmdprox
