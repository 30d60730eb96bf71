#include "cmdprox/eval.hpp"

#include <cmath>
#include <sstream>

#include "cmdprox/core.hpp"
#include "cmdprox/rng.hpp"
#include "cmdprox/simulate.hpp"
#include "cmdprox/text.hpp"

namespace cmdprox {

namespace {

// Model-side propagation of the observable-state distribution under an
// obs-based policy. Full-state (oracle) models propagate jointly and report
// the observable marginal; state-based policies may drive them directly.
std::vector<std::vector<double>> model_rollout(const PomdpSpec& spec,
                                               const SurrogateModel& model, const Policy& pol,
                                               const Policy& polx, int horizon) {
  std::vector<std::vector<double>> out(horizon);
  if (!model.full_state) {
    std::vector<double> m(model.num_states, 0.0);
    for (int s = 0; s < spec.num_full_states; ++s) {
      for (int y = 0; y < spec.num_obs; ++y) m[y] += spec.init_dist[s] * spec.p_obs(s, y);
    }
    out[0] = m;
    for (int t = 0; t + 1 < horizon; ++t) {
      std::vector<double> next(model.num_states, 0.0);
      for (int x = 0; x < model.num_states; ++x) {
        if (m[x] == 0.0) continue;
        for (int u = 0; u < model.num_actions; ++u) {
          const double w = m[x] * polx.prob(t, x, u);
          if (w == 0.0) continue;
          for (int x2 = 0; x2 < model.num_states; ++x2) {
            next[x2] += w * model.phi.at(t, x, u, x2);
          }
        }
      }
      out[t + 1] = next;
      m = std::move(next);
    }
    return out;
  }

  // full-state model: shared initial distribution, joint propagation
  std::vector<double> d = spec.init_dist;
  auto to_obs = [&](const std::vector<double>& dist) {
    std::vector<double> m(spec.num_obs, 0.0);
    for (int s = 0; s < spec.num_full_states; ++s) {
      for (int y = 0; y < spec.num_obs; ++y) m[y] += dist[s] * spec.p_obs(s, y);
    }
    return m;
  };
  out[0] = to_obs(d);
  for (int t = 0; t + 1 < horizon; ++t) {
    std::vector<double> next(spec.num_full_states, 0.0);
    for (int s = 0; s < spec.num_full_states; ++s) {
      if (d[s] == 0.0) continue;
      for (int u = 0; u < model.num_actions; ++u) {
        double pu = 0.0;
        if (pol.kind == PolicyKind::state_based) {
          pu = pol.prob(t, s, u);
        } else {
          for (int y = 0; y < spec.num_obs; ++y) pu += spec.p_obs(s, y) * pol.prob(t, y, u);
        }
        const double w = d[s] * pu;
        if (w == 0.0) continue;
        for (int s2 = 0; s2 < spec.num_full_states; ++s2) {
          next[s2] += w * model.phi.at(t, s, u, s2);
        }
      }
    }
    out[t + 1] = to_obs(next);
    d = std::move(next);
  }
  return out;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e += std::abs(a[i] - b[i]);
  return e;
}

}  // namespace

std::vector<double> l1_rollout_error(const PomdpSpec& spec, const SurrogateModel& model,
                                     const Policy& pol, int horizon) {
  if (!model.full_state && model.num_states != spec.num_obs) {
    throw ValidationError("l1_rollout_error: model and spec observable alphabets differ");
  }
  if (horizon > spec.horizon) throw ValidationError("l1_rollout_error: horizon too long");
  const auto occ = exact_occupancy(spec, pol);
  const Policy polx = pol.kind == PolicyKind::obs_based ? pol : obs_marginal_policy(spec, pol);
  const auto model_dist = model_rollout(spec, model, pol, polx, horizon);
  std::vector<double> err(horizon, 0.0);
  for (int t = 0; t < horizon; ++t) {
    err[t] = l1(obs_marginal(spec, occ[t]), model_dist[t]);
  }
  return err;
}

std::vector<double> l1_rollout_error_mc(const PomdpSpec& spec, const SurrogateModel& model,
                                        const Policy& pol, int horizon, std::int64_t episodes,
                                        std::uint64_t seed) {
  if (episodes < 1) throw ValidationError("l1_rollout_error_mc: episodes must be >= 1");
  const Policy polx = pol.kind == PolicyKind::obs_based ? pol : obs_marginal_policy(spec, pol);
  std::vector<std::vector<double>> freq(horizon, std::vector<double>(spec.num_obs, 0.0));
  for (std::int64_t i = 0; i < episodes; ++i) {
    const Trajectory tr = sample_trajectory(spec, pol, derive_seed(seed, i));
    for (int t = 0; t < horizon; ++t) freq[t][tr.steps[t].y] += 1.0;
  }
  for (auto& row : freq) {
    for (double& v : row) v /= static_cast<double>(episodes);
  }
  const auto model_dist = model_rollout(spec, model, pol, polx, horizon);
  std::vector<double> err(horizon, 0.0);
  for (int t = 0; t < horizon; ++t) err[t] = l1(freq[t], model_dist[t]);
  return err;
}

std::vector<double> mc_return_samples(const PomdpSpec& spec, const Policy& pol,
                                      std::int64_t episodes, std::uint64_t seed) {
  if (episodes < 1) throw ValidationError("mc_return: episodes must be >= 1");
  std::vector<double> returns;
  returns.reserve(episodes);
  for (std::int64_t i = 0; i < episodes; ++i) {
    const Trajectory tr = sample_trajectory(spec, pol, derive_seed(seed, i));
    double total = 0.0;
    for (const auto& st : tr.steps) total += spec.reward_alphabet[st.r];
    returns.push_back(total);
  }
  return returns;
}

namespace {

ReturnStat stats_of(const std::vector<double>& xs) {
  ReturnStat st;
  st.episodes = static_cast<std::int64_t>(xs.size());
  double sum = 0.0;
  for (double v : xs) sum += v;
  st.mean = sum / xs.size();
  double ss = 0.0;
  for (double v : xs) ss += (v - st.mean) * (v - st.mean);
  st.stderr_ = xs.size() > 1 ? std::sqrt(ss / (xs.size() - 1) / xs.size()) : 0.0;
  return st;
}

}  // namespace

ReturnStat mc_return(const PomdpSpec& spec, const Policy& pol, std::int64_t episodes,
                     std::uint64_t seed) {
  return stats_of(mc_return_samples(spec, pol, episodes, seed));
}

PairedReturn mc_return_paired(const PomdpSpec& spec, const Policy& a, const Policy& b,
                              std::int64_t episodes, std::uint64_t seed) {
  const auto ra = mc_return_samples(spec, a, episodes, seed);
  const auto rb = mc_return_samples(spec, b, episodes, seed);
  PairedReturn pr;
  pr.a = stats_of(ra);
  pr.b = stats_of(rb);
  std::vector<double> diff(ra.size());
  for (std::size_t i = 0; i < ra.size(); ++i) diff[i] = ra[i] - rb[i];
  const ReturnStat ds = stats_of(diff);
  pr.diff_mean = ds.mean;
  pr.diff_stderr = ds.stderr_;
  return pr;
}

EvalReport compare(const PomdpSpec& spec, const Policy& behavioral,
                   const std::vector<const SurrogateModel*>& models,
                   const std::vector<std::string>& labels, const EvalConfig& cfg) {
  if (models.empty() || models.size() != labels.size()) {
    throw ValidationError("compare: need matching non-empty model and label lists");
  }
  EvalReport rep;
  rep.metadata.emplace_back("episodes", std::to_string(cfg.episodes));
  rep.metadata.emplace_back("seed", std::to_string(cfg.seed));
  rep.metadata.emplace_back("metric_mode", cfg.exact_metric ? "exact" : "mc");

  for (std::size_t i = 0; i < models.size(); ++i) {
    const SurrogateModel& model = *models[i];
    const std::vector<std::pair<std::string, const Policy*>> policies = {
        {"behavioral", &behavioral}, {"learned", &model.policy}};
    for (const auto& [pol_label, pol] : policies) {
      if (pol->kind == PolicyKind::state_based && pol->num_cond != spec.num_full_states) {
        continue;  // learned full-state policy on a mismatched spec
      }
      const auto err =
          cfg.exact_metric
              ? l1_rollout_error(spec, model, *pol, spec.horizon)
              : l1_rollout_error_mc(spec, model, *pol, spec.horizon, cfg.episodes, cfg.seed);
      for (int t = 0; t < static_cast<int>(err.size()); ++t) {
        rep.rollout.push_back({"l1", labels[i], pol_label, t, err[t]});
      }
    }

    const ReturnStat rs = mc_return(spec, model.policy, cfg.episodes, cfg.seed);
    rep.returns.push_back({labels[i], "learned", rs.episodes, rs.mean, rs.stderr_});
  }
  const ReturnStat rb = mc_return(spec, behavioral, cfg.episodes, cfg.seed);
  rep.returns.push_back({"behavioral", "behavioral", rb.episodes, rb.mean, rb.stderr_});
  return rep;
}

std::string rollout_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "metric,model,policy,t,value\n";
  for (const auto& r : rep.rollout) {
    os << r.metric << ',' << r.model << ',' << r.policy << ',' << r.t << ','
       << text::format_sig12(r.value) << "\n";
  }
  return os.str();
}

std::string returns_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "model,policy,episodes,mean_return,stderr\n";
  for (const auto& r : rep.returns) {
    os << r.model << ',' << r.policy << ',' << r.episodes << ','
       << text::format_sig12(r.mean_return) << ',' << text::format_sig12(r.stderr_) << "\n";
  }
  return os.str();
}

}  // namespace cmdprox
