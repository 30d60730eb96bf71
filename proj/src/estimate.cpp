#include "cmdprox/estimate.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "cmdprox/text.hpp"
#include "json.hpp"

namespace cmdprox {

using Eigen::MatrixXd;
using Eigen::VectorXd;

CondInfo cond_info(const MatrixXd& m, double rank_tol) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  CondInfo info;
  info.dim = static_cast<int>(std::min(m.rows(), m.cols()));
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax <= 0.0) {
    info.rank = 0;
    info.cond = std::numeric_limits<double>::infinity();
    return info;
  }
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > rank_tol * smax) ++info.rank;
  }
  const double smin = sv(sv.size() - 1);
  info.cond = info.rank < info.dim ? std::numeric_limits<double>::infinity() : smax / smin;
  return info;
}

namespace {

struct Shapes {
  int Y, U, R, T;
};

void allocate(EstimatedMatrices& em, const Shapes& sh) {
  em.m_obs.assign(sh.T, std::vector<MatrixXd>(sh.U, MatrixXd::Zero(sh.Y, sh.Y)));
  em.counts_obs = em.m_obs;
  em.m_joint.assign(sh.T, std::vector<std::vector<MatrixXd>>(
                              sh.U, std::vector<MatrixXd>(sh.Y, MatrixXd::Zero(sh.Y, sh.Y))));
  em.counts_joint = em.m_joint;
  em.m_reward.assign(sh.T, std::vector<MatrixXd>(sh.U, MatrixXd::Zero(sh.R * sh.Y, sh.Y)));
  em.counts_reward = em.m_reward;
  em.p_y0 = VectorXd::Zero(sh.Y);
}

// Normalize per conditioning column: cell <- (count + alpha) / (total +
// alpha*cells). `col_total` is the number of events carrying the conditioning
// cell regardless of outcome, which for the joint and reward blocks exceeds
// the column sum of the slice being normalized (other outcome slices share
// the same conditioning cell).
void normalize_column(const MatrixXd& counts, double col_total, double alpha, int cells,
                      int col, MatrixXd& out) {
  const double denom = col_total + alpha * cells;
  for (int r = 0; r < counts.rows(); ++r) {
    out(r, col) = (counts(r, col) + alpha) / denom;
  }
}

}  // namespace

EstimatedMatrices estimate_matrices(const Dataset& ds, double alpha, bool pool_time) {
  if (ds.records.empty()) throw ValidationError("estimate_matrices: empty dataset");
  if (alpha < 0.0) throw ValidationError("estimate_matrices: alpha must be >= 0");

  const Shapes sh{ds.meta.num_obs, ds.meta.num_actions,
                  static_cast<int>(ds.meta.reward_alphabet.size()), ds.meta.horizon};
  EstimatedMatrices em;
  em.num_obs = sh.Y;
  em.num_actions = sh.U;
  em.num_rewards = sh.R;
  em.horizon = sh.T;
  em.factored = ds.meta.factored;
  em.reward_alphabet = ds.meta.reward_alphabet;
  em.alpha = alpha;
  em.pooled_time = pool_time;
  em.declared_full_states = ds.meta.num_full_states;
  allocate(em, sh);

  for (const auto& tr : ds.records) {
    em.p_y0(tr.steps[0].y) += 1.0;
    for (int t = 0; t < sh.T; ++t) {
      const auto& st = tr.steps[t];
      const int y_prev = t == 0 ? tr.null_obs : tr.steps[t - 1].y;
      em.counts_obs[t][st.u](st.y, y_prev) += 1.0;
      em.counts_reward[t][st.u](st.r * sh.Y + st.y, y_prev) += 1.0;
      if (t + 1 < sh.T) {
        // chain slice k = t+1 conditions on u_t and the realization y_t,
        // with columns two observations back
        const auto& next = tr.steps[t + 1];
        em.counts_joint[t + 1][st.u][st.y](next.y, y_prev) += 1.0;
      }
    }
  }

  if (pool_time) {
    // merge counts across t >= 1 (t = 0 conditions on the null observation)
    for (int u = 0; u < sh.U; ++u) {
      MatrixXd obs_sum = MatrixXd::Zero(sh.Y, sh.Y);
      MatrixXd rew_sum = MatrixXd::Zero(sh.R * sh.Y, sh.Y);
      std::vector<MatrixXd> joint_sum(sh.Y, MatrixXd::Zero(sh.Y, sh.Y));
      for (int t = 1; t < sh.T; ++t) {
        obs_sum += em.counts_obs[t][u];
        rew_sum += em.counts_reward[t][u];
      }
      for (int k = 2; k < sh.T; ++k)
        for (int y = 0; y < sh.Y; ++y) joint_sum[y] += em.counts_joint[k][u][y];
      for (int t = 1; t < sh.T; ++t) {
        em.counts_obs[t][u] = obs_sum;
        em.counts_reward[t][u] = rew_sum;
      }
      for (int k = 2; k < sh.T; ++k)
        for (int y = 0; y < sh.Y; ++y) em.counts_joint[k][u][y] = joint_sum[y];
    }
  }

  // normalize; conditioning cell totals are shared across outcome slices
  for (int t = 0; t < sh.T; ++t) {
    for (int u = 0; u < sh.U; ++u) {
      for (int c = 0; c < sh.Y; ++c) {
        const double n_obs = em.counts_obs[t][u].col(c).sum();
        if (n_obs == 0.0 && alpha == 0.0) {
          em.m_obs[t][u].col(c).setConstant(1.0 / sh.Y);
          em.m_reward[t][u].col(c).setConstant(1.0 / (sh.R * sh.Y));
          em.untrusted.push_back({"obs", t, u, -1, c});
          em.untrusted.push_back({"reward", t, u, -1, c});
        } else {
          normalize_column(em.counts_obs[t][u], n_obs, alpha, sh.Y, c, em.m_obs[t][u]);
          normalize_column(em.counts_reward[t][u], n_obs, alpha, sh.R * sh.Y, c,
                           em.m_reward[t][u]);
        }
      }
      if (t >= 1) {
        for (int y_prev = 0; y_prev < sh.Y; ++y_prev) {
          for (int c = 0; c < sh.Y; ++c) {
            // total over all (y_t, y_prev') outcomes for the cell (c, u)
            double n_cell = 0.0;
            for (int yp = 0; yp < sh.Y; ++yp) n_cell += em.counts_joint[t][u][yp].col(c).sum();
            if (n_cell == 0.0 && alpha == 0.0) {
              em.m_joint[t][u][y_prev].col(c).setConstant(1.0 / (sh.Y * sh.Y));
              if (y_prev == 0) em.untrusted.push_back({"joint", t, u, y_prev, c});
            } else {
              normalize_column(em.counts_joint[t][u][y_prev], n_cell, alpha, sh.Y * sh.Y, c,
                               em.m_joint[t][u][y_prev]);
            }
          }
        }
      }
    }
  }
  em.p_y0 /= static_cast<double>(ds.records.size());

  em.obs_cond.reserve(static_cast<std::size_t>(sh.T) * sh.U);
  for (int t = 0; t < sh.T; ++t)
    for (int u = 0; u < sh.U; ++u) em.obs_cond.push_back(cond_info(em.m_obs[t][u]));
  return em;
}

PhiTable estimate_phi(const Dataset& ds, double alpha, bool pooled) {
  if (ds.records.empty()) throw ValidationError("estimate_phi: empty dataset");
  if (!ds.meta.factored) {
    throw ValidationError("estimate_phi: requires a factored (y = x) dataset");
  }
  const int X = ds.meta.num_obs, U = ds.meta.num_actions, T = ds.meta.horizon;

  std::vector<double> counts(static_cast<std::size_t>(T) * X * U * X, 0.0);
  auto cnt = [&](int t, int x, int u, int x2) -> double& {
    return counts[((static_cast<std::size_t>(t) * X + x) * U + u) * X + x2];
  };
  for (const auto& tr : ds.records) {
    for (int t = 0; t + 1 < T; ++t) {
      cnt(t, tr.steps[t].y, tr.steps[t].u, tr.steps[t + 1].y) += 1.0;
    }
  }

  const int slices = pooled ? 1 : T;
  PhiTable phi = PhiTable::zeros(!pooled, slices, X, U);
  for (int sl = 0; sl < slices; ++sl) {
    for (int x = 0; x < X; ++x)
      for (int u = 0; u < U; ++u) {
        double total = 0.0;
        std::vector<double> row(X, 0.0);
        if (pooled) {
          for (int t = 0; t + 1 < T; ++t)
            for (int x2 = 0; x2 < X; ++x2) row[x2] += cnt(t, x, u, x2);
        } else if (sl + 1 < T) {
          for (int x2 = 0; x2 < X; ++x2) row[x2] = cnt(sl, x, u, x2);
        }
        for (double v : row) total += v;
        const double denom = total + alpha * X;
        if (denom <= 0.0) {
          for (int x2 = 0; x2 < X; ++x2) phi.at(sl, x, u, x2) = 1.0 / X;
          phi.set_flag(sl, x, u);
        } else {
          for (int x2 = 0; x2 < X; ++x2) phi.at(sl, x, u, x2) = (row[x2] + alpha) / denom;
          if (total == 0.0) phi.set_flag(sl, x, u);
        }
      }
  }
  return phi;
}

InvertibilityReport invertibility_report(const EstimatedMatrices& em, double warn_cond,
                                         double fail_cond) {
  InvertibilityReport rep;
  for (int t = 0; t < em.horizon; ++t)
    for (int u = 0; u < em.num_actions; ++u) {
      const CondInfo info =
          em.obs_cond.empty() ? cond_info(em.m_obs[t][u]) : em.obs_cond_at(t, u);
      InvertibilityRow row;
      row.kind = "obs";
      row.t = t;
      row.u = u;
      row.dim = info.dim;
      row.rank = info.rank;
      row.cond = info.cond;
      for (const auto& uc : em.untrusted) {
        if (uc.kind == "obs" && uc.t == t && uc.u == u) ++row.zero_count_columns;
      }
      if (row.rank < row.dim || row.cond >= fail_cond) {
        row.klass = "fail";
      } else if (row.cond >= warn_cond || row.zero_count_columns > 0) {
        row.klass = "warn";
      } else {
        row.klass = "ok";
      }
      rep.rows.push_back(row);
    }
  if (em.declared_full_states > em.num_obs) {
    // The latent-state proxy conditional is |S| x |Y| here, so no square
    // inverse exists no matter how the observable blocks condition.
    InvertibilityRow row;
    row.kind = "structural";
    row.dim = em.declared_full_states;
    row.rank = em.num_obs;
    row.cond = std::numeric_limits<double>::infinity();
    row.klass = "fail";
    rep.rows.push_back(row);
  }
  for (const auto& row : rep.rows) {
    if (row.klass == "warn") ++rep.num_warn;
    if (row.klass == "fail") ++rep.num_fail;
  }
  rep.verdict = rep.num_fail > 0 ? "fail" : (rep.num_warn > 0 ? "warn" : "ok");
  return rep;
}

std::string report_to_text(const InvertibilityReport& rep) {
  std::ostringstream os;
  os << "kind t u dim rank cond zero_count_columns class\n";
  for (const auto& r : rep.rows) {
    os << r.kind << ' ' << r.t << ' ' << r.u << ' ' << r.dim << ' ' << r.rank << ' '
       << text::format_sig12(r.cond) << ' ' << r.zero_count_columns << ' ' << r.klass << "\n";
  }
  os << "verdict " << rep.verdict << " warn " << rep.num_warn << " fail " << rep.num_fail
     << "\n";
  return os.str();
}

std::string report_to_json(const InvertibilityReport& rep) {
  nlohmann::json j;
  j["verdict"] = rep.verdict;
  j["num_warn"] = rep.num_warn;
  j["num_fail"] = rep.num_fail;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json e;
    e["kind"] = r.kind;
    e["t"] = r.t;
    e["u"] = r.u;
    e["dim"] = r.dim;
    e["rank"] = r.rank;
    e["cond"] = std::isfinite(r.cond) ? text::format_double(r.cond) : "inf";
    e["zero_count_columns"] = r.zero_count_columns;
    e["class"] = r.klass;
    rows.push_back(e);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

namespace {

void dump_block(std::ostream& os, const std::string& header, const MatrixXd& m) {
  os << header << "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << text::format_double(m(r, c));
    }
    os << "\n";
  }
}

}  // namespace

void dump_matrices(const EstimatedMatrices& em, std::ostream& os) {
  os << "# cmdprox/matrices/v1 Y=" << em.num_obs << " U=" << em.num_actions
     << " R=" << em.num_rewards << " T=" << em.horizon << " alpha="
     << text::format_double(em.alpha) << (em.population ? " population" : "") << "\n";
  {
    std::ostringstream h;
    h << "block p_y0";
    dump_block(os, h.str(), em.p_y0);
  }
  for (int t = 0; t < em.horizon; ++t)
    for (int u = 0; u < em.num_actions; ++u) {
      std::ostringstream h;
      h << "block obs t=" << t << " u=" << u;
      dump_block(os, h.str(), em.m_obs[t][u]);
    }
  for (int k = 1; k < em.horizon; ++k)
    for (int u = 0; u < em.num_actions; ++u)
      for (int y = 0; y < em.num_obs; ++y) {
        std::ostringstream h;
        h << "block joint k=" << k << " u=" << u << " y_prev=" << y;
        dump_block(os, h.str(), em.m_joint[k][u][y]);
      }
  for (int t = 0; t < em.horizon; ++t)
    for (int u = 0; u < em.num_actions; ++u) {
      std::ostringstream h;
      h << "block reward t=" << t << " u=" << u;
      dump_block(os, h.str(), em.m_reward[t][u]);
    }
}

}  // namespace cmdprox
