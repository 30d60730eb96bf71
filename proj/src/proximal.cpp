#include "cmdprox/proximal.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "cmdprox/core.hpp"
#include "cmdprox/text.hpp"

namespace cmdprox {

using Eigen::MatrixXd;
using Eigen::VectorXd;

WeightChainContext::WeightChainContext(const EstimatedMatrices& em, Policy eval_policy,
                                       double pinv_tolerance)
    : em_(&em), eval_policy_(std::move(eval_policy)), pinv_tolerance_(pinv_tolerance) {
  if (eval_policy_.kind != PolicyKind::obs_based) {
    throw ValidationError("weight chain: evaluation policy must be observation-based");
  }
  if (eval_policy_.num_cond != em.num_obs || eval_policy_.num_actions != em.num_actions) {
    throw ValidationError("weight chain: evaluation policy shape does not match matrices");
  }
}

const MatrixXd& WeightChainContext::pinv_obs(int t, int u) const {
  const auto key = std::make_pair(t, u);
  auto it = pinv_cache_.find(key);
  if (it != pinv_cache_.end()) return it->second;

  const MatrixXd& m = em_->m_obs.at(t).at(u);
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax <= 0.0) {
    throw SingularChainError("weight chain: zero proxy conditional at (t=" + std::to_string(t) +
                                 ",u=" + std::to_string(u) + ")",
                             t, u, std::numeric_limits<double>::infinity());
  }
  VectorXd inv = VectorXd::Zero(sv.size());
  int kept = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > pinv_tolerance_ * smax) {
      inv(i) = 1.0 / sv(i);
      ++kept;
    }
  }
  if (kept == 0) {
    throw SingularChainError(
        "weight chain: proxy conditional vanished after truncation at (t=" + std::to_string(t) +
            ",u=" + std::to_string(u) + ")",
        t, u, std::numeric_limits<double>::infinity());
  }
  MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return pinv_cache_.emplace(key, std::move(pinv)).first->second;
}

MatrixXd weight_matrix(const WeightChainContext& ctx, int k, int y_prev, int u_prev,
                       int u_cur) {
  const auto& em = ctx.em();
  if (k < 1 || k >= em.horizon) throw ValidationError("weight_matrix: k out of range");
  return ctx.pinv_obs(k, u_cur) * em.m_joint.at(k).at(u_prev).at(y_prev);
}

VectorXd weight_vector_k0(const WeightChainContext& ctx, int u0) {
  return ctx.pinv_obs(0, u0) * ctx.em().p_y0;
}

// ---------------------------------------------------------------------------
// population_matrices: every behavioral conditional evaluated exactly from
// the kernels. J_t(y_prev, s) denotes the joint mass of (Y_{t-1} = y_prev,
// S_t = s) under the behavioral process; at t = 0 the role of Y_{t-1} is
// played by the null observation, a second draw from the initial state.
// ---------------------------------------------------------------------------

EstimatedMatrices population_matrices(const PomdpSpec& spec, const Policy& behavioral) {
  check_policy(spec, behavioral);
  const int S = spec.num_full_states, Y = spec.num_obs, U = spec.num_actions,
            R = spec.num_rewards(), T = spec.horizon;

  EstimatedMatrices em;
  em.num_obs = Y;
  em.num_actions = U;
  em.num_rewards = R;
  em.horizon = T;
  em.factored = spec.factored;
  em.reward_alphabet = spec.reward_alphabet;
  em.alpha = 0.0;
  em.population = true;
  em.declared_full_states = S;
  em.m_obs.assign(T, std::vector<MatrixXd>(U, MatrixXd::Zero(Y, Y)));
  em.counts_obs = em.m_obs;
  em.m_joint.assign(
      T, std::vector<std::vector<MatrixXd>>(U, std::vector<MatrixXd>(Y, MatrixXd::Zero(Y, Y))));
  em.counts_joint = em.m_joint;
  em.m_reward.assign(T, std::vector<MatrixXd>(U, MatrixXd::Zero(R * Y, Y)));
  em.counts_reward = em.m_reward;
  em.p_y0 = VectorXd::Zero(Y);

  const auto occ = exact_occupancy(spec, behavioral);
  for (int s = 0; s < S; ++s)
    for (int y = 0; y < Y; ++y) em.p_y0(y) += spec.init_dist[s] * spec.p_obs(s, y);

  // J[t]: (y_prev, s) joint; J[0] couples the null observation with s_0.
  std::vector<MatrixXd> J(T, MatrixXd::Zero(Y, S));
  for (int s = 0; s < S; ++s)
    for (int yn = 0; yn < Y; ++yn) J[0](yn, s) = spec.init_dist[s] * spec.p_obs(s, yn);
  for (int t = 1; t < T; ++t) {
    for (int sp = 0; sp < S; ++sp) {
      if (occ[t - 1][sp] == 0.0) continue;
      for (int yp = 0; yp < Y; ++yp) {
        const double base = occ[t - 1][sp] * spec.p_obs(sp, yp);
        if (base == 0.0) continue;
        for (int u = 0; u < U; ++u) {
          const double w = base * policy_prob(spec, behavioral, t - 1, sp, yp, u);
          if (w == 0.0) continue;
          const auto row = spec.trans_row(sp, u);
          for (int s = 0; s < S; ++s) J[t](yp, s) += w * row[s];
        }
      }
    }
  }

  for (int t = 0; t < T; ++t) {
    for (int u = 0; u < U; ++u) {
      MatrixXd& joint_obs = em.counts_obs[t][u];        // (y_t, y_prev)
      MatrixXd& joint_rew = em.counts_reward[t][u];     // (r*Y + y_t, y_prev)
      VectorXd cell_mass = VectorXd::Zero(Y);           // p(Y_prev = c, u_t = u)
      for (int c = 0; c < Y; ++c) {
        for (int s = 0; s < S; ++s) {
          const double base = J[t](c, s);
          if (base == 0.0) continue;
          for (int y = 0; y < Y; ++y) {
            const double w = base * spec.p_obs(s, y) * policy_prob(spec, behavioral, t, s, y, u);
            if (w == 0.0) continue;
            joint_obs(y, c) += w;
            for (int r = 0; r < R; ++r) {
              const double pr = spec.p_reward(s, u, r);
              if (pr > 0.0) joint_rew(r * Y + y, c) += w * pr;
            }
          }
        }
        cell_mass(c) = joint_obs.col(c).sum();
      }
      for (int c = 0; c < Y; ++c) {
        if (cell_mass(c) <= 0.0) {
          em.m_obs[t][u].col(c).setConstant(1.0 / Y);
          em.m_reward[t][u].col(c).setConstant(1.0 / (R * Y));
          em.untrusted.push_back({"obs", t, u, -1, c});
        } else {
          em.m_obs[t][u].col(c) = joint_obs.col(c) / cell_mass(c);
          em.m_reward[t][u].col(c) = joint_rew.col(c) / cell_mass(c);
        }
      }
    }
  }

  // chain joints: k >= 1, conditioning (y_{k-2} = c, u_{k-1} = u), realized
  // y_{k-1}, rows y_k
  for (int k = 1; k < T; ++k) {
    const MatrixXd& base = J[k - 1];
    for (int u = 0; u < U; ++u) {
      VectorXd cell_mass = VectorXd::Zero(Y);
      for (int c = 0; c < Y; ++c) {
        for (int sp = 0; sp < S; ++sp) {
          const double jm = base(c, sp);
          if (jm == 0.0) continue;
          for (int yp = 0; yp < Y; ++yp) {
            const double w =
                jm * spec.p_obs(sp, yp) * policy_prob(spec, behavioral, k - 1, sp, yp, u);
            if (w == 0.0) continue;
            cell_mass(c) += w;
            const auto row = spec.trans_row(sp, u);
            for (int s = 0; s < S; ++s) {
              if (row[s] == 0.0) continue;
              for (int y = 0; y < Y; ++y) {
                const double o = spec.p_obs(s, y);
                if (o > 0.0) em.counts_joint[k][u][yp](y, c) += w * row[s] * o;
              }
            }
          }
        }
      }
      for (int c = 0; c < Y; ++c) {
        if (cell_mass(c) <= 0.0) {
          for (int yp = 0; yp < Y; ++yp) {
            em.m_joint[k][u][yp].col(c).setConstant(1.0 / (Y * Y));
          }
          em.untrusted.push_back({"joint", k, u, 0, c});
        } else {
          for (int yp = 0; yp < Y; ++yp) {
            em.m_joint[k][u][yp].col(c) = em.counts_joint[k][u][yp].col(c) / cell_mass(c);
          }
        }
      }
    }
  }

  em.obs_cond.reserve(static_cast<std::size_t>(T) * U);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U; ++u) em.obs_cond.push_back(cond_info(em.m_obs[t][u]));
  return em;
}

// ---------------------------------------------------------------------------
// reward distributions
// ---------------------------------------------------------------------------

namespace {

RewardDistribution finish_distribution(int t, std::vector<double> raw) {
  RewardDistribution rd;
  rd.t = t;
  rd.raw = raw;
  double total_raw = 0.0;
  for (double v : raw) {
    total_raw += v;
    if (v < 0.0) rd.negative_mass += -v;
  }
  rd.mass_defect = 1.0 - total_raw;
  double clipped_sum = 0.0;
  for (double& v : raw) {
    if (v < 0.0) v = 0.0;
    clipped_sum += v;
  }
  if (clipped_sum <= 0.0) {
    throw SingularChainError("reward distribution degenerated to zero mass", t, -1,
                             std::numeric_limits<double>::infinity());
  }
  for (double& v : raw) v /= clipped_sum;
  rd.probs = std::move(raw);
  return rd;
}

void check_t(const WeightChainContext& ctx, int t) {
  if (t < 0 || t >= ctx.em().horizon) throw ValidationError("reward chain: t out of range");
  if (ctx.eval_policy().horizon < t + 1) {
    throw ValidationError("reward chain: evaluation policy horizon too short");
  }
}

// Backward chain messages: mu[k](u_k) is the policy-weighted contraction of
// W_k ... W_1 W_0, a column over the Y_{k-1} (Y_N at k = 0) index space.
std::vector<std::vector<VectorXd>> chain_messages(const WeightChainContext& ctx, int t) {
  const auto& em = ctx.em();
  const auto& pol = ctx.eval_policy();
  const int Y = em.num_obs, U = em.num_actions;
  std::vector<std::vector<VectorXd>> mu(t + 1, std::vector<VectorXd>(U));
  for (int u = 0; u < U; ++u) mu[0][u] = weight_vector_k0(ctx, u);
  for (int k = 1; k <= t; ++k) {
    for (int u_cur = 0; u_cur < U; ++u_cur) {
      VectorXd acc = VectorXd::Zero(Y);
      for (int y_prev = 0; y_prev < Y; ++y_prev) {
        for (int u_prev = 0; u_prev < U; ++u_prev) {
          const double pi = pol.prob(k - 1, y_prev, u_prev);
          if (pi == 0.0) continue;
          acc += pi * (weight_matrix(ctx, k, y_prev, u_prev, u_cur) * mu[k - 1][u_prev]);
        }
      }
      mu[k][u_cur] = std::move(acc);
    }
  }
  return mu;
}

}  // namespace

RewardDistribution reward_dist_dp(const WeightChainContext& ctx, int t) {
  check_t(ctx, t);
  const auto& em = ctx.em();
  const auto& pol = ctx.eval_policy();
  const int Y = em.num_obs, U = em.num_actions, R = em.num_rewards;
  const auto mu = chain_messages(ctx, t);
  std::vector<double> raw(R, 0.0);
  for (int y = 0; y < Y; ++y)
    for (int u = 0; u < U; ++u) {
      const double pi = pol.prob(t, y, u);
      if (pi == 0.0) continue;
      for (int r = 0; r < R; ++r) {
        raw[r] += pi * em.m_reward[t][u].row(r * Y + y).dot(mu[t][u]);
      }
    }
  return finish_distribution(t, std::move(raw));
}

RewardDistribution reward_dist_enumerate(const WeightChainContext& ctx, int t) {
  check_t(ctx, t);
  if (t > 3) throw ValidationError("reward_dist_enumerate: guarded to t <= 3");
  const auto& em = ctx.em();
  const auto& pol = ctx.eval_policy();
  const int Y = em.num_obs, U = em.num_actions, R = em.num_rewards;

  std::vector<double> raw(R, 0.0);
  // odometer over the observable prefix (y_0..y_t, u_0..u_t)
  std::vector<int> ys(t + 1, 0), us(t + 1, 0);
  while (true) {
    double pol_factor = 1.0;
    for (int k = 0; k <= t; ++k) pol_factor *= pol.prob(k, ys[k], us[k]);
    if (pol_factor > 0.0) {
      VectorXd chain = weight_vector_k0(ctx, us[0]);
      for (int k = 1; k <= t; ++k) {
        chain = weight_matrix(ctx, k, ys[k - 1], us[k - 1], us[k]) * chain;
      }
      for (int r = 0; r < R; ++r) {
        raw[r] += pol_factor * em.m_reward[t][us[t]].row(r * Y + ys[t]).dot(chain);
      }
    }
    // advance
    int pos = 0;
    for (; pos <= t; ++pos) {
      if (++us[pos] < U) break;
      us[pos] = 0;
      if (++ys[pos] < Y) break;
      ys[pos] = 0;
    }
    if (pos > t) break;
  }
  return finish_distribution(t, std::move(raw));
}

RewardTable deconfounded_reward_table(const WeightChainContext& ctx) {
  const auto& em = ctx.em();
  const int Y = em.num_obs, U = em.num_actions, R = em.num_rewards, T = em.horizon;
  if (ctx.eval_policy().horizon < T) {
    throw ValidationError("deconfounded_reward_table: evaluation policy horizon too short");
  }

  RewardTable table = RewardTable::zeros(T, Y, U);
  const auto mu = chain_messages(ctx, T - 1);

  // Fallback for degenerate cells: behavioral mean reward of (y_t = x, u),
  // pooled from the count mirrors; global mean when even that is empty.
  double global_num = 0.0, global_den = 0.0;
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U; ++u)
      for (int r = 0; r < R; ++r)
        for (int y = 0; y < Y; ++y) {
          const double c = em.counts_reward[t][u].row(r * Y + y).sum();
          global_num += c * em.reward_alphabet[r];
          global_den += c;
        }
  const double global_mean = global_den > 0.0 ? global_num / global_den : 0.0;

  int usable_cells = 0;
  for (int t = 0; t < T; ++t) {
    for (int x = 0; x < Y; ++x) {
      for (int u = 0; u < U; ++u) {
        std::vector<double> m(R, 0.0);
        double total = 0.0, neg = 0.0;
        for (int r = 0; r < R; ++r) {
          m[r] = em.m_reward[t][u].row(r * Y + x).dot(mu[t][u]);
          total += m[r];
          if (m[r] < 0.0) neg += -m[r];
        }
        const std::size_t cell = (static_cast<std::size_t>(t) * Y + x) * U + u;
        table.mass_defect[cell] = 1.0 - total;
        double clipped = 0.0;
        for (double& v : m) {
          if (v < 0.0) v = 0.0;
          clipped += v;
        }
        if (clipped <= 1e-12) {
          double num = 0.0, den = 0.0;
          for (int r = 0; r < R; ++r) {
            const double c = em.counts_reward[t][u].row(r * Y + x).sum();
            num += c * em.reward_alphabet[r];
            den += c;
          }
          table.rho[cell] = den > 0.0 ? num / den : global_mean;
          table.flagged[cell] = 1;
        } else {
          double mean = 0.0;
          for (int r = 0; r < R; ++r) mean += em.reward_alphabet[r] * (m[r] / clipped);
          table.rho[cell] = mean;
          ++usable_cells;
        }
      }
    }
  }
  if (usable_cells == 0) {
    throw SingularChainError("deconfounded_reward_table: every cell degenerated", -1, -1,
                             std::numeric_limits<double>::infinity());
  }
  return table;
}

// ---------------------------------------------------------------------------
// ground-truth oracles
// ---------------------------------------------------------------------------

namespace {

double marginal_action_prob(const PomdpSpec& spec, const Policy& pol, int t, int s, int u) {
  if (pol.kind == PolicyKind::state_based) return pol.prob(t, s, u);
  double p = 0.0;
  for (int y = 0; y < spec.num_obs; ++y) p += spec.p_obs(s, y) * pol.prob(t, y, u);
  return p;
}

void check_enumeration_guard(const PomdpSpec& spec, int t) {
  const double paths =
      std::pow(static_cast<double>(spec.num_full_states) * spec.num_actions, t + 1);
  if (paths > 1e7) throw ValidationError("brute force: (|S||U|)^(t+1) exceeds 1e7");
}

// Enumerates (s_0..s_t, u_0..u_{t-1}) recursively; per-step observations are
// marginalized into the action factor, which is exact because each y_k enters
// one policy factor only.
void enumerate_paths(const PomdpSpec& spec, const Policy& pol, int t, int depth, int s,
                     double mass, ConditionalReward& out) {
  if (mass == 0.0) return;
  if (depth == t) {
    const int Y = spec.num_obs, U = spec.num_actions, R = spec.num_rewards();
    for (int y = 0; y < Y; ++y) {
      const double oy = spec.p_obs(s, y);
      if (oy == 0.0) continue;
      for (int u = 0; u < U; ++u) {
        const double w = mass * oy * policy_prob(spec, pol, t, s, y, u);
        if (w == 0.0) continue;
        out.joint_yu[static_cast<std::size_t>(y) * U + u] += w;
        for (int r = 0; r < R; ++r) {
          const double pr = spec.p_reward(s, u, r);
          if (pr == 0.0) continue;
          out.marginal[r] += w * pr;
          out.cond[(static_cast<std::size_t>(y) * U + u) * R + r] += w * pr;
        }
      }
    }
    return;
  }
  for (int u = 0; u < spec.num_actions; ++u) {
    const double pu = marginal_action_prob(spec, pol, depth, s, u);
    if (pu == 0.0) continue;
    const auto row = spec.trans_row(s, u);
    for (int s2 = 0; s2 < spec.num_full_states; ++s2) {
      if (row[s2] > 0.0) enumerate_paths(spec, pol, t, depth + 1, s2, mass * pu * row[s2], out);
    }
  }
}

ConditionalReward finish_conditional(const PomdpSpec& spec, int t, ConditionalReward cr) {
  const int Y = spec.num_obs, U = spec.num_actions, R = spec.num_rewards();
  cr.t = t;
  for (int y = 0; y < Y; ++y)
    for (int u = 0; u < U; ++u) {
      const std::size_t cell = static_cast<std::size_t>(y) * U + u;
      const double mass = cr.joint_yu[cell];
      if (mass <= 0.0) continue;
      double mean = 0.0;
      for (int r = 0; r < R; ++r) {
        cr.cond[cell * R + r] /= mass;
        mean += spec.reward_alphabet[r] * cr.cond[cell * R + r];
      }
      cr.cond_mean[cell] = mean;
    }
  return cr;
}

ConditionalReward empty_conditional(const PomdpSpec& spec) {
  ConditionalReward cr;
  const int Y = spec.num_obs, U = spec.num_actions, R = spec.num_rewards();
  cr.marginal.assign(R, 0.0);
  cr.joint_yu.assign(static_cast<std::size_t>(Y) * U, 0.0);
  cr.cond.assign(static_cast<std::size_t>(Y) * U * R, 0.0);
  cr.cond_mean.assign(static_cast<std::size_t>(Y) * U, 0.0);
  return cr;
}

}  // namespace

ConditionalReward brute_force_reward_conditional(const PomdpSpec& spec,
                                                 const Policy& eval_policy, int t) {
  check_policy(spec, eval_policy);
  if (t < 0 || t >= spec.horizon) throw ValidationError("brute force: t out of range");
  check_enumeration_guard(spec, t);
  ConditionalReward cr = empty_conditional(spec);
  for (int s0 = 0; s0 < spec.num_full_states; ++s0) {
    enumerate_paths(spec, eval_policy, t, 0, s0, spec.init_dist[s0], cr);
  }
  return finish_conditional(spec, t, cr);
}

RewardDistribution brute_force_reward_dist(const PomdpSpec& spec, const Policy& eval_policy,
                                           int t) {
  const ConditionalReward cr = brute_force_reward_conditional(spec, eval_policy, t);
  RewardDistribution rd;
  rd.t = t;
  rd.raw = cr.marginal;
  rd.probs = cr.marginal;
  double sum = 0.0;
  for (double v : rd.probs) sum += v;
  rd.mass_defect = 1.0 - sum;
  for (double& v : rd.probs) v /= sum;
  return rd;
}

ConditionalReward exact_reward_conditional(const PomdpSpec& spec, const Policy& eval_policy,
                                           int t) {
  check_policy(spec, eval_policy);
  if (t < 0 || t >= spec.horizon) throw ValidationError("exact conditional: t out of range");
  const auto occ = exact_occupancy(spec, eval_policy);
  const int Y = spec.num_obs, U = spec.num_actions, R = spec.num_rewards();
  ConditionalReward cr = empty_conditional(spec);
  for (int s = 0; s < spec.num_full_states; ++s) {
    const double ds = occ[t][s];
    if (ds == 0.0) continue;
    for (int y = 0; y < Y; ++y) {
      const double oy = spec.p_obs(s, y);
      if (oy == 0.0) continue;
      for (int u = 0; u < U; ++u) {
        const double w = ds * oy * policy_prob(spec, eval_policy, t, s, y, u);
        if (w == 0.0) continue;
        cr.joint_yu[static_cast<std::size_t>(y) * U + u] += w;
        for (int r = 0; r < R; ++r) {
          const double pr = spec.p_reward(s, u, r);
          if (pr == 0.0) continue;
          cr.marginal[r] += w * pr;
          cr.cond[(static_cast<std::size_t>(y) * U + u) * R + r] += w * pr;
        }
      }
    }
  }
  return finish_conditional(spec, t, cr);
}

void write_reward_diagnostics(const RewardTable& table, std::ostream& os) {
  os << "t x u rho mass_defect flagged\n";
  for (int t = 0; t < table.horizon; ++t)
    for (int x = 0; x < table.num_states; ++x)
      for (int u = 0; u < table.num_actions; ++u) {
        const std::size_t cell =
            (static_cast<std::size_t>(t) * table.num_states + x) * table.num_actions + u;
        os << t << ' ' << x << ' ' << u << ' ' << text::format_sig12(table.rho[cell]) << ' '
           << text::format_sig12(table.mass_defect[cell]) << ' '
           << static_cast<int>(table.flagged[cell]) << "\n";
      }
}

}  // namespace cmdprox
