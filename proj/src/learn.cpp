#include "cmdprox/learn.hpp"

#include <cmath>
#include <limits>

#include "cmdprox/core.hpp"
#include "cmdprox/proximal.hpp"
#include "cmdprox/text.hpp"
#include "json.hpp"

namespace cmdprox {

using json = nlohmann::json;

BackwardResult soft_backward_recursion(const PhiTable& phi, const RewardTable& rho, int horizon,
                                       ValueRule rule) {
  const int X = rho.num_states, U = rho.num_actions;
  BackwardResult out;
  out.q.assign(static_cast<std::size_t>(horizon) * X * U, 0.0);
  out.v.assign(static_cast<std::size_t>(horizon + 1) * X, 0.0);
  out.policy = Policy::uniform(PolicyKind::obs_based, horizon, X, U);

  for (int t = horizon - 1; t >= 0; --t) {
    for (int x = 0; x < X; ++x) {
      double qmax = -std::numeric_limits<double>::infinity();
      for (int u = 0; u < U; ++u) {
        double q = rho.at(t, x, u);
        if (!std::isfinite(q)) throw ValidationError("soft recursion: non-finite reward cell");
        if (t + 1 < horizon) {
          for (int x2 = 0; x2 < X; ++x2) {
            q += phi.at(t, x, u, x2) * out.v[static_cast<std::size_t>(t + 1) * X + x2];
          }
        }
        out.q[(static_cast<std::size_t>(t) * X + x) * U + u] = q;
        qmax = std::max(qmax, q);
      }
      // softmax with max subtraction
      double zsum = 0.0;
      for (int u = 0; u < U; ++u) {
        zsum += std::exp(out.q[(static_cast<std::size_t>(t) * X + x) * U + u] - qmax);
      }
      double v = 0.0;
      for (int u = 0; u < U; ++u) {
        const double q = out.q[(static_cast<std::size_t>(t) * X + x) * U + u];
        const double pi = std::exp(q - qmax) / zsum;
        out.policy.at(t, x, u) = pi;
        if (rule == ValueRule::expectation) v += pi * q;
      }
      if (rule == ValueRule::log_partition) v = qmax + std::log(zsum);
      out.v[static_cast<std::size_t>(t) * X + x] = v;
    }
  }
  return out;
}

namespace {

double max_tv(const Policy& a, const Policy& b) {
  double worst = 0.0;
  for (int t = 0; t < a.horizon; ++t)
    for (int c = 0; c < a.num_cond; ++c) {
      double tv = 0.0;
      for (int u = 0; u < a.num_actions; ++u) tv += std::abs(a.prob(t, c, u) - b.prob(t, c, u));
      worst = std::max(worst, 0.5 * tv);
    }
  return worst;
}

void check_fit_config(const FitConfig& cfg) {
  if (cfg.tol_tv <= 0.0 || cfg.damping < 0.0 || cfg.damping >= 1.0 || cfg.max_iters < 1) {
    throw ValidationError("fit config: tol_tv > 0, damping in [0,1), max_iters >= 1 required");
  }
}

// Damped fixed point coupling the policy to the chain-identified reward
// table. The first update is undamped (the uniform start carries no signal
// worth retaining); convergence is the fixed-point residual max TV between
// the undamped candidate and the current iterate, checked before updating.
// `iterations` counts updates applied, so a policy-independent reward table
// converges after exactly one.
SurrogateModel run_fixed_point(const EstimatedMatrices& em, const PhiTable& phi,
                               const FitConfig& cfg, const Dataset* ds_for_nll) {
  check_fit_config(cfg);
  const int T = em.horizon, X = em.num_obs, U = em.num_actions;

  SurrogateModel model;
  model.kind = "surrogate";
  model.num_states = X;
  model.num_actions = U;
  model.horizon = T;
  model.phi = phi;
  model.value_rule = cfg.value_rule;
  model.reward_alphabet = em.reward_alphabet;

  Policy theta = Policy::uniform(PolicyKind::obs_based, T, X, U);
  model.converged = false;
  for (int pass = 1; pass <= cfg.max_iters; ++pass) {
    WeightChainContext ctx(em, theta, cfg.pinv_tolerance);
    RewardTable rho = deconfounded_reward_table(ctx);
    BackwardResult br = soft_backward_recursion(phi, rho, T, cfg.value_rule);

    const double delta = max_tv(br.policy, theta);
    const double nll = ds_for_nll ? action_nll(*ds_for_nll, br.policy)
                                  : std::numeric_limits<double>::quiet_NaN();
    model.fit_log.push_back({pass, delta, nll});

    model.rho = std::move(rho);
    model.q = std::move(br.q);
    model.v = std::move(br.v);
    if (delta < cfg.tol_tv) {
      model.policy = br.policy;
      model.converged = true;
      model.iterations = pass - 1;
      break;
    }
    if (pass == 1) {
      theta = br.policy;
    } else {
      for (std::size_t i = 0; i < theta.table.size(); ++i) {
        theta.table[i] = (1.0 - cfg.damping) * br.policy.table[i] + cfg.damping * theta.table[i];
      }
    }
    model.policy = theta;
    model.iterations = pass;
  }
  return model;
}

}  // namespace

SurrogateModel fit_surrogate(const Dataset& ds, const FitConfig& cfg) {
  if (ds.records.empty()) throw ValidationError("fit_surrogate: empty dataset");
  const PhiTable phi = estimate_phi(ds, cfg.alpha, false);
  const EstimatedMatrices em = estimate_matrices(ds, cfg.alpha);
  return run_fixed_point(em, phi, cfg, &ds);
}

SurrogateModel fit_surrogate_population(const PomdpSpec& spec, const Policy& behavioral,
                                        const FitConfig& cfg) {
  const PhiTable phi = exact_marginalized_transition(spec, behavioral);
  const EstimatedMatrices em = population_matrices(spec, behavioral);
  return run_fixed_point(em, phi, cfg, nullptr);
}

SurrogateModel fit_naive(const Dataset& ds, const FitConfig& cfg) {
  if (ds.records.empty()) throw ValidationError("fit_naive: empty dataset");
  const PhiTable phi = estimate_phi(ds, cfg.alpha, false);
  const int X = ds.meta.num_obs, U = ds.meta.num_actions, T = ds.meta.horizon;
  const int R = static_cast<int>(ds.meta.reward_alphabet.size());

  // data averaging: pooled empirical mean reward per (x,u)
  std::vector<double> sum(static_cast<std::size_t>(X) * U, 0.0);
  std::vector<double> sumsq(sum.size(), 0.0);
  std::vector<double> count(sum.size(), 0.0);
  double global_sum = 0.0, global_n = 0.0;
  for (const auto& tr : ds.records) {
    for (const auto& st : tr.steps) {
      const double rv = ds.meta.reward_alphabet[st.r];
      const std::size_t cell = static_cast<std::size_t>(st.y) * U + st.u;
      sum[cell] += rv;
      sumsq[cell] += rv * rv;
      count[cell] += 1.0;
      global_sum += rv;
      global_n += 1.0;
    }
  }
  const double global_mean = global_n > 0.0 ? global_sum / global_n : 0.0;

  SurrogateModel model;
  model.kind = "naive";
  model.num_states = X;
  model.num_actions = U;
  model.horizon = T;
  model.phi = phi;
  model.value_rule = cfg.value_rule;
  model.reward_alphabet = ds.meta.reward_alphabet;
  model.rho = RewardTable::zeros(T, X, U);
  model.naive_stats.mean.assign(sum.size(), 0.0);
  model.naive_stats.stderr_.assign(sum.size(), 0.0);
  model.naive_stats.count = count;
  (void)R;

  for (int x = 0; x < X; ++x)
    for (int u = 0; u < U; ++u) {
      const std::size_t cell = static_cast<std::size_t>(x) * U + u;
      double mean = global_mean;
      bool empty = count[cell] == 0.0;
      if (!empty) {
        mean = sum[cell] / count[cell];
        const double var =
            std::max(0.0, sumsq[cell] / count[cell] - mean * mean);
        model.naive_stats.stderr_[cell] =
            count[cell] > 1.0 ? std::sqrt(var / count[cell]) : 0.0;
      }
      model.naive_stats.mean[cell] = mean;
      for (int t = 0; t < T; ++t) {
        model.rho.at(t, x, u) = mean;
        if (empty) {
          model.rho.flagged[(static_cast<std::size_t>(t) * X + x) * U + u] = 1;
        }
      }
    }

  BackwardResult br = soft_backward_recursion(model.phi, model.rho, T, cfg.value_rule);
  model.q = std::move(br.q);
  model.v = std::move(br.v);
  model.policy = std::move(br.policy);
  return model;
}

namespace {

// Latent mixture weights w_t(z|x,u) plus the pooled full-state kernel give
// the oracle's x-level transition view.
PhiTable oracle_x_view(const Dataset& ds, const PhiTable& s_phi, double alpha) {
  const int X = ds.meta.num_obs, U = ds.meta.num_actions, T = ds.meta.horizon;
  const int S = ds.meta.num_full_states;
  const int Z = S / X;
  PhiTable x_phi = PhiTable::zeros(true, T, X, U);
  std::vector<double> zcount(static_cast<std::size_t>(T) * S * U, 0.0);
  for (const auto& tr : ds.records) {
    for (int t = 0; t < T; ++t) {
      zcount[(static_cast<std::size_t>(t) * S + tr.states[t]) * U + tr.steps[t].u] += 1.0;
    }
  }
  for (int t = 0; t < T; ++t)
    for (int x = 0; x < X; ++x)
      for (int u = 0; u < U; ++u) {
        double denom = 0.0;
        for (int z = 0; z < Z; ++z) {
          denom += zcount[(static_cast<std::size_t>(t) * S + (x * Z + z)) * U + u];
        }
        for (int z = 0; z < Z; ++z) {
          const int s = x * Z + z;
          const double w =
              (zcount[(static_cast<std::size_t>(t) * S + s) * U + u] + alpha) /
              (denom + alpha * Z);
          for (int x2 = 0; x2 < X; ++x2) {
            double px2 = 0.0;
            for (int z2 = 0; z2 < Z; ++z2) px2 += s_phi.at(0, s, u, x2 * Z + z2);
            x_phi.at(t, x, u, x2) += w * px2;
          }
        }
        if (denom == 0.0) x_phi.set_flag(t, x, u);
      }
  return x_phi;
}

}  // namespace

SurrogateModel fit_oracle(const Dataset& ds, const FitConfig& cfg) {
  if (ds.records.empty()) throw ValidationError("fit_oracle: empty dataset");
  if (!ds.meta.emit_latent) {
    throw ValidationError("fit_oracle: dataset is missing latent state columns");
  }
  const int S = ds.meta.num_full_states, U = ds.meta.num_actions, T = ds.meta.horizon;

  // pooled sufficient statistics over full states
  std::vector<double> tcount(static_cast<std::size_t>(S) * U * S, 0.0);
  std::vector<double> rsum(static_cast<std::size_t>(S) * U, 0.0);
  std::vector<double> rsumsq(rsum.size(), 0.0);
  std::vector<double> rcount(rsum.size(), 0.0);
  double global_sum = 0.0, global_n = 0.0;
  for (const auto& tr : ds.records) {
    for (int t = 0; t < T; ++t) {
      const int s = tr.states[t], u = tr.steps[t].u;
      const double rv = ds.meta.reward_alphabet[tr.steps[t].r];
      rsum[static_cast<std::size_t>(s) * U + u] += rv;
      rsumsq[static_cast<std::size_t>(s) * U + u] += rv * rv;
      rcount[static_cast<std::size_t>(s) * U + u] += 1.0;
      global_sum += rv;
      global_n += 1.0;
      if (t + 1 < T) {
        tcount[(static_cast<std::size_t>(s) * U + u) * S + tr.states[t + 1]] += 1.0;
      }
    }
  }
  const double global_mean = global_n > 0.0 ? global_sum / global_n : 0.0;

  SurrogateModel model;
  model.kind = "oracle";
  model.full_state = true;
  model.num_states = S;
  model.num_actions = U;
  model.horizon = T;
  model.value_rule = cfg.value_rule;
  model.reward_alphabet = ds.meta.reward_alphabet;
  model.phi = PhiTable::zeros(false, 1, S, U);
  model.rho = RewardTable::zeros(T, S, U);
  model.naive_stats.mean.assign(rsum.size(), 0.0);
  model.naive_stats.stderr_.assign(rsum.size(), 0.0);
  model.naive_stats.count = rcount;

  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u) {
      const std::size_t cell = static_cast<std::size_t>(s) * U + u;
      double total = 0.0;
      for (int s2 = 0; s2 < S; ++s2) total += tcount[cell * S + s2];
      const double denom = total + cfg.alpha * S;
      if (denom <= 0.0) {
        for (int s2 = 0; s2 < S; ++s2) model.phi.at(0, s, u, s2) = 1.0 / S;
        model.phi.set_flag(0, s, u);
      } else {
        for (int s2 = 0; s2 < S; ++s2) {
          model.phi.at(0, s, u, s2) = (tcount[cell * S + s2] + cfg.alpha) / denom;
        }
        if (total == 0.0) model.phi.set_flag(0, s, u);
      }
      double mean = global_mean;
      if (rcount[cell] > 0.0) {
        mean = rsum[cell] / rcount[cell];
        const double var = std::max(0.0, rsumsq[cell] / rcount[cell] - mean * mean);
        model.naive_stats.stderr_[cell] =
            rcount[cell] > 1.0 ? std::sqrt(var / rcount[cell]) : 0.0;
      }
      model.naive_stats.mean[cell] = mean;
      for (int t = 0; t < T; ++t) {
        model.rho.at(t, s, u) = mean;
        if (rcount[cell] == 0.0) {
          model.rho.flagged[(static_cast<std::size_t>(t) * S + s) * U + u] = 1;
        }
      }
    }

  BackwardResult br = soft_backward_recursion(model.phi, model.rho, T, cfg.value_rule);
  model.q = std::move(br.q);
  model.v = std::move(br.v);
  model.policy = std::move(br.policy);
  model.policy.kind = PolicyKind::state_based;
  if (ds.meta.factored) model.x_phi = oracle_x_view(ds, model.phi, cfg.alpha);
  return model;
}

SurrogateModel oracle_population(const PomdpSpec& spec, const Policy& behavioral,
                                 const FitConfig& cfg) {
  const int S = spec.num_full_states, U = spec.num_actions, T = spec.horizon;
  SurrogateModel model;
  model.kind = "oracle";
  model.full_state = true;
  model.num_states = S;
  model.num_actions = U;
  model.horizon = T;
  model.value_rule = cfg.value_rule;
  model.reward_alphabet = spec.reward_alphabet;
  model.phi = PhiTable::zeros(false, 1, S, U);
  model.rho = RewardTable::zeros(T, S, U);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < U; ++u) {
      for (int s2 = 0; s2 < S; ++s2) model.phi.at(0, s, u, s2) = spec.p_trans(s, u, s2);
      for (int t = 0; t < T; ++t) model.rho.at(t, s, u) = spec.reward_mean(s, u);
    }
  BackwardResult br = soft_backward_recursion(model.phi, model.rho, T, cfg.value_rule);
  model.q = std::move(br.q);
  model.v = std::move(br.v);
  model.policy = std::move(br.policy);
  model.policy.kind = PolicyKind::state_based;
  if (spec.factored) model.x_phi = exact_marginalized_transition(spec, behavioral);
  return model;
}

double action_nll(const Dataset& ds, const Policy& pol) {
  if (ds.records.empty()) throw ValidationError("action_nll: empty dataset");
  if (pol.kind != PolicyKind::obs_based || pol.horizon < ds.meta.horizon) {
    throw ValidationError("action_nll: needs an observation-based policy covering the horizon");
  }
  double total = 0.0;
  for (const auto& tr : ds.records) {
    for (int t = 0; t < ds.meta.horizon; ++t) {
      const double p = pol.prob(t, tr.steps[t].y, tr.steps[t].u);
      if (p <= 0.0) return std::numeric_limits<double>::infinity();
      total -= std::log(p);
    }
  }
  return total / static_cast<double>(ds.records.size());
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

json flags_to_json(const std::vector<std::uint8_t>& v) {
  json arr = json::array();
  for (auto x : v) arr.push_back(static_cast<int>(x));
  return arr;
}

std::vector<std::uint8_t> flags_from_json(const json& arr) {
  std::vector<std::uint8_t> v;
  for (const auto& e : arr) v.push_back(static_cast<std::uint8_t>(e.get<int>()));
  return v;
}

json phi_to_json(const PhiTable& phi) {
  json j;
  j["per_time"] = phi.per_time;
  j["horizon"] = phi.horizon;
  j["num_states"] = phi.num_states;
  j["num_actions"] = phi.num_actions;
  j["p"] = vec_to_json(phi.p);
  j["flagged"] = flags_to_json(phi.flagged);
  return j;
}

PhiTable phi_from_json(const json& j) {
  PhiTable phi;
  phi.per_time = j.at("per_time").get<bool>();
  phi.horizon = j.at("horizon").get<int>();
  phi.num_states = j.at("num_states").get<int>();
  phi.num_actions = j.at("num_actions").get<int>();
  phi.p = vec_from_json(j.at("p"));
  phi.flagged = flags_from_json(j.at("flagged"));
  return phi;
}

}  // namespace

std::string model_to_json(const SurrogateModel& m) {
  json j;
  j["schema"] = "cmdprox/model/v1";
  j["kind"] = m.kind;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["horizon"] = m.horizon;
  j["full_state"] = m.full_state;
  j["value_rule"] = m.value_rule == ValueRule::expectation ? "expectation" : "log_partition";
  j["reward_alphabet"] = vec_to_json(m.reward_alphabet);
  j["phi"] = phi_to_json(m.phi);
  j["rho"] = vec_to_json(m.rho.rho);
  j["rho_flagged"] = flags_to_json(m.rho.flagged);
  j["rho_mass_defect"] = vec_to_json(m.rho.mass_defect);
  j["q"] = vec_to_json(m.q);
  j["v"] = vec_to_json(m.v);
  j["policy_kind"] = m.policy.kind == PolicyKind::obs_based ? "obs_based" : "state_based";
  j["policy"] = vec_to_json(m.policy.table);
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  {
    json log = json::array();
    for (const auto& e : m.fit_log) {
      json it;
      it["iter"] = e.iter;
      it["delta_tv"] = text::format_double(e.delta_tv);
      it["nll"] = text::format_double(e.nll);
      log.push_back(it);
    }
    j["fit_log"] = log;
  }
  j["naive_mean"] = vec_to_json(m.naive_stats.mean);
  j["naive_stderr"] = vec_to_json(m.naive_stats.stderr_);
  j["naive_count"] = vec_to_json(m.naive_stats.count);
  if (m.x_phi.num_states > 0) j["x_phi"] = phi_to_json(m.x_phi);
  j["config_hash"] = m.config_hash;
  return j.dump(2) + "\n";
}

SurrogateModel model_from_json(const std::string& textdoc) {
  json j = json::parse(textdoc);
  if (j.value("schema", "") != "cmdprox/model/v1") throw IoError("model document: unknown schema");
  SurrogateModel m;
  m.kind = j.at("kind").get<std::string>();
  m.num_states = j.at("num_states").get<int>();
  m.num_actions = j.at("num_actions").get<int>();
  m.horizon = j.at("horizon").get<int>();
  m.full_state = j.at("full_state").get<bool>();
  m.value_rule = j.at("value_rule").get<std::string>() == "expectation"
                     ? ValueRule::expectation
                     : ValueRule::log_partition;
  m.reward_alphabet = vec_from_json(j.at("reward_alphabet"));
  m.phi = phi_from_json(j.at("phi"));
  m.rho.horizon = m.horizon;
  m.rho.num_states = m.num_states;
  m.rho.num_actions = m.num_actions;
  m.rho.rho = vec_from_json(j.at("rho"));
  m.rho.flagged = flags_from_json(j.at("rho_flagged"));
  m.rho.mass_defect = vec_from_json(j.at("rho_mass_defect"));
  m.q = vec_from_json(j.at("q"));
  m.v = vec_from_json(j.at("v"));
  m.policy.kind = j.at("policy_kind").get<std::string>() == "obs_based"
                      ? PolicyKind::obs_based
                      : PolicyKind::state_based;
  m.policy.horizon = m.horizon;
  m.policy.num_cond = m.num_states;
  m.policy.num_actions = m.num_actions;
  m.policy.table = vec_from_json(j.at("policy"));
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  for (const auto& e : j.at("fit_log")) {
    m.fit_log.push_back({e.at("iter").get<int>(),
                         text::parse_double(e.at("delta_tv").get<std::string>()),
                         text::parse_double(e.at("nll").get<std::string>())});
  }
  m.naive_stats.mean = vec_from_json(j.at("naive_mean"));
  m.naive_stats.stderr_ = vec_from_json(j.at("naive_stderr"));
  m.naive_stats.count = vec_from_json(j.at("naive_count"));
  if (j.contains("x_phi")) m.x_phi = phi_from_json(j.at("x_phi"));
  m.config_hash = j.value("config_hash", "");
  return m;
}

}  // namespace cmdprox
