#include "cmdprox/core.hpp"

#include <algorithm>
#include <cmath>

#include "cmdprox/text.hpp"
#include "json.hpp"

namespace cmdprox {

using json = nlohmann::json;

namespace {

constexpr double kProbTol = 1e-12;
constexpr double kRewardMergeTol = 1e-9;

bool prob_row_ok(std::span<const double> row) {
  double sum = 0.0;
  for (double v : row) {
    if (v < 0.0 || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= kProbTol;
}

}  // namespace

PomdpSpec build_cmdp(const CmdpParams& params) {
  const int X = params.num_obs, Z = params.num_contexts, U = params.num_actions;
  if (X <= 0 || Z <= 0 || U <= 0 || params.horizon <= 0) {
    throw ValidationError("build_cmdp: all dimensions and the horizon must be positive");
  }
  const std::size_t nxzu = static_cast<std::size_t>(X) * Z * U;
  if (params.px.size() != nxzu * X || params.pz.size() != nxzu * Z ||
      params.reward.size() != nxzu || params.eta.size() != static_cast<std::size_t>(X) ||
      params.nu.size() != static_cast<std::size_t>(Z)) {
    throw ValidationError("build_cmdp: kernel tensor sizes do not match the dimensions");
  }

  auto px = [&](int x, int z, int u, int x2) {
    return params.px[((static_cast<std::size_t>(x) * Z + z) * U + u) * X + x2];
  };
  auto pz = [&](int x, int z, int u, int z2) {
    return params.pz[((static_cast<std::size_t>(x) * Z + z) * U + u) * Z + z2];
  };
  auto rew = [&](int x, int z, int u) {
    return params.reward[(static_cast<std::size_t>(x) * Z + z) * U + u];
  };

  // Validate the ingredients before flattening; non-stochastic rows are
  // reported with their (x,z,u) indices.
  for (int x = 0; x < X; ++x)
    for (int z = 0; z < Z; ++z)
      for (int u = 0; u < U; ++u) {
        double sx = 0.0, sz = 0.0;
        bool neg = false;
        for (int x2 = 0; x2 < X; ++x2) {
          sx += px(x, z, u, x2);
          neg = neg || px(x, z, u, x2) < 0.0;
        }
        for (int z2 = 0; z2 < Z; ++z2) {
          sz += pz(x, z, u, z2);
          neg = neg || pz(x, z, u, z2) < 0.0;
        }
        if (neg || std::abs(sx - 1.0) > kProbTol || std::abs(sz - 1.0) > kProbTol) {
          throw ValidationError("build_cmdp: non-stochastic kernel row at (x=" +
                                std::to_string(x) + ",z=" + std::to_string(z) +
                                ",u=" + std::to_string(u) + ")");
        }
        if (!std::isfinite(rew(x, z, u))) {
          throw ValidationError("build_cmdp: non-finite reward at (x=" + std::to_string(x) +
                                ",z=" + std::to_string(z) + ",u=" + std::to_string(u) + ")");
        }
      }
  if (!prob_row_ok(params.eta) || !prob_row_ok(params.nu)) {
    throw ValidationError("build_cmdp: eta and nu must be probability vectors");
  }

  PomdpSpec spec;
  spec.num_obs = X;
  spec.num_contexts = Z;
  spec.num_full_states = X * Z;
  spec.num_actions = U;
  spec.horizon = params.horizon;
  spec.factored = true;

  // Reward alphabet: sorted distinct values, merging anything within 1e-9.
  std::vector<double> values(params.reward.begin(), params.reward.end());
  std::sort(values.begin(), values.end());
  for (double v : values) {
    if (spec.reward_alphabet.empty() || v - spec.reward_alphabet.back() > kRewardMergeTol) {
      spec.reward_alphabet.push_back(v);
    }
  }
  const int R = spec.num_rewards();
  auto alphabet_index = [&](double v) {
    auto it = std::lower_bound(spec.reward_alphabet.begin(), spec.reward_alphabet.end(),
                               v - kRewardMergeTol);
    return static_cast<int>(it - spec.reward_alphabet.begin());
  };

  const int S = spec.num_full_states;
  spec.init_dist.assign(S, 0.0);
  spec.trans.assign(static_cast<std::size_t>(S) * U * S, 0.0);
  spec.obs.assign(static_cast<std::size_t>(S) * X, 0.0);
  spec.reward_kernel.assign(static_cast<std::size_t>(S) * U * R, 0.0);

  for (int x = 0; x < X; ++x)
    for (int z = 0; z < Z; ++z) {
      const int s = spec.state_of(x, z);
      spec.init_dist[s] = params.eta[x] * params.nu[z];
      spec.obs_at(s, x) = 1.0;
      for (int u = 0; u < U; ++u) {
        for (int x2 = 0; x2 < X; ++x2)
          for (int z2 = 0; z2 < Z; ++z2) {
            spec.trans_at(s, u, spec.state_of(x2, z2)) = px(x, z, u, x2) * pz(x, z, u, z2);
          }
        spec.reward_at(s, u, alphabet_index(rew(x, z, u))) = 1.0;
      }
    }
  return spec;
}

std::vector<Violation> validate(const PomdpSpec& spec) {
  std::vector<Violation> out;
  const int S = spec.num_full_states, U = spec.num_actions, Y = spec.num_obs;
  if (S <= 0 || U <= 0 || Y <= 0 || spec.horizon <= 0) {
    out.push_back({"non-positive dimension or horizon", -1, -1});
    return out;
  }
  if (spec.factored && spec.num_full_states != spec.num_obs * spec.num_contexts) {
    out.push_back({"factored spec with |S| != |X|*|Z|", -1, -1});
  }
  if (!prob_row_ok(spec.init_dist)) out.push_back({"init_dist is not a probability vector", -1, -1});
  for (int s = 0; s < S; ++s) {
    if (!prob_row_ok(spec.obs_row(s))) {
      out.push_back({"observation row is not a probability vector", s, -1});
    }
    if (spec.factored) {
      const int x = spec.x_of(s);
      if (std::abs(spec.p_obs(s, x) - 1.0) > kProbTol) {
        out.push_back({"factored spec must observe y = x deterministically", s, -1});
      }
    }
    for (int u = 0; u < U; ++u) {
      if (!prob_row_ok(spec.trans_row(s, u))) {
        out.push_back({"transition row is not a probability vector", s, u});
      }
      if (!prob_row_ok(spec.reward_row(s, u))) {
        out.push_back({"reward kernel row is not a probability vector", s, u});
      }
    }
  }
  for (std::size_t i = 1; i < spec.reward_alphabet.size(); ++i) {
    if (!(spec.reward_alphabet[i] > spec.reward_alphabet[i - 1])) {
      out.push_back({"reward_alphabet must be strictly increasing", static_cast<int>(i), -1});
      break;
    }
  }
  return out;
}

void check_policy(const PomdpSpec& spec, const Policy& pol) {
  const int want_cond =
      pol.kind == PolicyKind::obs_based ? spec.num_obs : spec.num_full_states;
  if (pol.num_cond != want_cond || pol.num_actions != spec.num_actions ||
      pol.horizon < spec.horizon) {
    throw ValidationError("policy shape does not match the spec");
  }
}

double policy_prob(const PomdpSpec&, const Policy& pol, int t, int s, int y, int u) {
  return pol.kind == PolicyKind::obs_based ? pol.prob(t, y, u) : pol.prob(t, s, u);
}

namespace {

// Marginal action probability at (t, s): observation-based policies are
// averaged through the observation kernel.
double action_prob_s(const PomdpSpec& spec, const Policy& pol, int t, int s, int u) {
  if (pol.kind == PolicyKind::state_based) return pol.prob(t, s, u);
  double p = 0.0;
  for (int y = 0; y < spec.num_obs; ++y) p += spec.p_obs(s, y) * pol.prob(t, y, u);
  return p;
}

}  // namespace

std::vector<std::vector<double>> exact_occupancy(const PomdpSpec& spec, const Policy& pol) {
  check_policy(spec, pol);
  const int S = spec.num_full_states, U = spec.num_actions, T = spec.horizon;
  std::vector<std::vector<double>> d(T);
  d[0] = spec.init_dist;
  for (int t = 0; t + 1 < T; ++t) {
    d[t + 1].assign(S, 0.0);
    for (int s = 0; s < S; ++s) {
      if (d[t][s] == 0.0) continue;
      for (int u = 0; u < U; ++u) {
        const double w = d[t][s] * action_prob_s(spec, pol, t, s, u);
        if (w == 0.0) continue;
        auto row = spec.trans_row(s, u);
        for (int s2 = 0; s2 < S; ++s2) d[t + 1][s2] += w * row[s2];
      }
    }
  }
  return d;
}

std::vector<double> obs_marginal(const PomdpSpec& spec, const std::vector<double>& occ_t) {
  std::vector<double> m(spec.num_obs, 0.0);
  for (int s = 0; s < spec.num_full_states; ++s) {
    if (occ_t[s] == 0.0) continue;
    for (int y = 0; y < spec.num_obs; ++y) m[y] += occ_t[s] * spec.p_obs(s, y);
  }
  return m;
}

PhiTable exact_marginalized_transition(const PomdpSpec& spec, const Policy& behavioral) {
  if (!spec.factored) {
    throw ValidationError("exact_marginalized_transition requires a factored spec");
  }
  check_policy(spec, behavioral);
  const int X = spec.num_obs, Z = spec.num_contexts, U = spec.num_actions, T = spec.horizon;
  const auto occ = exact_occupancy(spec, behavioral);

  PhiTable phi = PhiTable::zeros(true, T, X, U);
  for (int t = 0; t < T; ++t) {
    for (int x = 0; x < X; ++x) {
      for (int u = 0; u < U; ++u) {
        // p_t(z|x,u) proportional to d_t(x,z) * g_t(u|x,z)
        double denom = 0.0;
        std::vector<double> w(Z, 0.0);
        for (int z = 0; z < Z; ++z) {
          const int s = spec.state_of(x, z);
          w[z] = occ[t][s] * policy_prob(spec, behavioral, t, s, x, u);
          denom += w[z];
        }
        if (denom <= 0.0) {
          for (int x2 = 0; x2 < X; ++x2) phi.at(t, x, u, x2) = 1.0 / X;
          phi.set_flag(t, x, u);
          continue;
        }
        for (int z = 0; z < Z; ++z) {
          if (w[z] == 0.0) continue;
          const double wz = w[z] / denom;
          const int s = spec.state_of(x, z);
          for (int x2 = 0; x2 < X; ++x2) {
            // x-marginal of the joint kernel: sum over z'
            double pxx = 0.0;
            for (int z2 = 0; z2 < Z; ++z2) pxx += spec.p_trans(s, u, spec.state_of(x2, z2));
            phi.at(t, x, u, x2) += wz * pxx;
          }
        }
        // guard against accumulated rounding
        double rowsum = 0.0;
        for (int x2 = 0; x2 < X; ++x2) rowsum += phi.at(t, x, u, x2);
        for (int x2 = 0; x2 < X; ++x2) phi.at(t, x, u, x2) /= rowsum;
      }
    }
  }
  return phi;
}

PhiTable pool_phi(const PhiTable& phi, const std::vector<std::vector<double>>& weights) {
  const int X = phi.num_states, U = phi.num_actions;
  PhiTable out = PhiTable::zeros(false, 1, X, U);
  for (int x = 0; x < X; ++x)
    for (int u = 0; u < U; ++u) {
      double total = 0.0;
      for (int t = 0; t < phi.horizon; ++t) {
        const double w = weights[t][static_cast<std::size_t>(x) * U + u];
        if (w == 0.0) continue;
        total += w;
        for (int x2 = 0; x2 < X; ++x2) out.at(0, x, u, x2) += w * phi.at(t, x, u, x2);
      }
      if (total <= 0.0) {
        for (int x2 = 0; x2 < X; ++x2) out.at(0, x, u, x2) = 1.0 / X;
        out.set_flag(0, x, u);
      } else {
        for (int x2 = 0; x2 < X; ++x2) out.at(0, x, u, x2) /= total;
      }
    }
  return out;
}

Policy obs_marginal_policy(const PomdpSpec& spec, const Policy& pol) {
  check_policy(spec, pol);
  const int Y = spec.num_obs, U = spec.num_actions, T = spec.horizon;
  const auto occ = exact_occupancy(spec, pol);
  Policy out = Policy::uniform(PolicyKind::obs_based, T, Y, U);
  for (int t = 0; t < T; ++t) {
    for (int y = 0; y < Y; ++y) {
      std::vector<double> num(U, 0.0);
      double denom = 0.0;
      for (int s = 0; s < spec.num_full_states; ++s) {
        const double w = occ[t][s] * spec.p_obs(s, y);
        if (w == 0.0) continue;
        denom += w;
        for (int u = 0; u < U; ++u) num[u] += w * policy_prob(spec, pol, t, s, y, u);
      }
      if (denom > 0.0) {
        for (int u = 0; u < U; ++u) out.at(t, y, u) = num[u] / denom;
      }
      // zero-mass observations keep the uniform row
    }
  }
  return out;
}

// --- serialization ----------------------------------------------------------

namespace {

json vec_to_json(const std::vector<double>& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(text::format_double(x));
  return arr;
}

std::vector<double> vec_from_json(const json& arr) {
  std::vector<double> v;
  v.reserve(arr.size());
  for (const auto& e : arr) v.push_back(text::parse_double(e.get<std::string>()));
  return v;
}

}  // namespace

std::string spec_to_json(const PomdpSpec& spec) {
  json j;
  j["schema"] = "cmdprox/spec/v1";
  j["num_obs"] = spec.num_obs;
  j["num_contexts"] = spec.num_contexts;
  j["num_full_states"] = spec.num_full_states;
  j["num_actions"] = spec.num_actions;
  j["horizon"] = spec.horizon;
  j["factored"] = spec.factored;
  j["init_dist"] = vec_to_json(spec.init_dist);
  j["trans"] = vec_to_json(spec.trans);
  j["obs"] = vec_to_json(spec.obs);
  j["reward_alphabet"] = vec_to_json(spec.reward_alphabet);
  j["reward_kernel"] = vec_to_json(spec.reward_kernel);
  return j.dump(2) + "\n";
}

PomdpSpec spec_from_json(const std::string& textdoc) {
  json j = json::parse(textdoc);
  if (j.value("schema", "") != "cmdprox/spec/v1") {
    throw IoError("spec document: unknown schema");
  }
  PomdpSpec spec;
  spec.num_obs = j.at("num_obs").get<int>();
  spec.num_contexts = j.at("num_contexts").get<int>();
  spec.num_full_states = j.at("num_full_states").get<int>();
  spec.num_actions = j.at("num_actions").get<int>();
  spec.horizon = j.at("horizon").get<int>();
  spec.factored = j.at("factored").get<bool>();
  spec.init_dist = vec_from_json(j.at("init_dist"));
  spec.trans = vec_from_json(j.at("trans"));
  spec.obs = vec_from_json(j.at("obs"));
  spec.reward_alphabet = vec_from_json(j.at("reward_alphabet"));
  spec.reward_kernel = vec_from_json(j.at("reward_kernel"));
  auto viol = validate(spec);
  if (!viol.empty()) throw ValidationError("spec document failed validation: " + viol[0].what);
  return spec;
}

std::string policy_to_json(const Policy& pol) {
  json j;
  j["schema"] = "cmdprox/policy/v1";
  j["kind"] = pol.kind == PolicyKind::obs_based ? "obs_based" : "state_based";
  j["horizon"] = pol.horizon;
  j["num_cond"] = pol.num_cond;
  j["num_actions"] = pol.num_actions;
  j["table"] = vec_to_json(pol.table);
  return j.dump(2) + "\n";
}

Policy policy_from_json(const std::string& textdoc) {
  json j = json::parse(textdoc);
  if (j.value("schema", "") != "cmdprox/policy/v1") {
    throw IoError("policy document: unknown schema");
  }
  Policy pol;
  pol.kind = j.at("kind").get<std::string>() == "obs_based" ? PolicyKind::obs_based
                                                            : PolicyKind::state_based;
  pol.horizon = j.at("horizon").get<int>();
  pol.num_cond = j.at("num_cond").get<int>();
  pol.num_actions = j.at("num_actions").get<int>();
  pol.table = vec_from_json(j.at("table"));
  if (pol.table.size() !=
      static_cast<std::size_t>(pol.horizon) * pol.num_cond * pol.num_actions) {
    throw ValidationError("policy document: table size mismatch");
  }
  return pol;
}

std::string policy_hash(const Policy& pol) {
  return text::fnv1a64_hex(policy_to_json(pol));
}

}  // namespace cmdprox
