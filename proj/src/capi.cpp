#include "cmdprox.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "cmdprox/core.hpp"
#include "cmdprox/envs.hpp"
#include "cmdprox/estimate.hpp"
#include "cmdprox/eval.hpp"
#include "cmdprox/learn.hpp"
#include "cmdprox/proximal.hpp"
#include "cmdprox/simulate.hpp"
#include "json.hpp"

using namespace cmdprox;
using json = nlohmann::json;

struct cpx_env {
  Fixture fixture;
};
struct cpx_dataset {
  Dataset ds;
};
struct cpx_matrices {
  EstimatedMatrices em;
};
struct cpx_model {
  SurrogateModel model;
};

namespace {

thread_local std::string g_last_error;

cpx_status fail(cpx_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename Fn>
cpx_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const SingularChainError& e) {
    return fail(CPX_ERR_SINGULAR_CHAIN, e.what());
  } catch (const ValidationError& e) {
    return fail(CPX_ERR_VALIDATION, e.what());
  } catch (const IoError& e) {
    return fail(CPX_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(CPX_ERR_BAD_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(CPX_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

cpx_status require(bool ok, const char* what) {
  return ok ? CPX_OK : fail(CPX_ERR_BAD_ARGUMENT, std::string("null argument: ") + what);
}

FitConfig fit_config_from_json(const char* cfg_json, std::string* config_hash) {
  FitConfig cfg;
  if (cfg_json == nullptr || *cfg_json == '\0') return cfg;
  json j = json::parse(cfg_json);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.tol_tv = j.value("tol_tv", cfg.tol_tv);
  cfg.damping = j.value("damping", cfg.damping);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.pinv_tolerance = j.value("pinv_tolerance", cfg.pinv_tolerance);
  const std::string rule = j.value("value_rule", "expectation");
  if (rule != "expectation" && rule != "log_partition") {
    throw ValidationError("fit config: unknown value_rule '" + rule + "'");
  }
  cfg.value_rule = rule == "expectation" ? ValueRule::expectation : ValueRule::log_partition;
  if (config_hash != nullptr) *config_hash = j.value("config_hash", "");
  return cfg;
}

}  // namespace

extern "C" {

const char* cpx_version(void) { return "0.1.0"; }

const char* cpx_last_error(void) { return g_last_error.c_str(); }

void cpx_string_free(char* s) { std::free(s); }

cpx_status cpx_env_create(const char* fixture_name, const char* overrides_json, uint64_t seed,
                          cpx_env** out) {
  if (auto rc = require(fixture_name && out, "fixture_name/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    FixtureId id;
    id.name = fixture_name;
    if (seed != 0) id.override_seed = seed;
    if (overrides_json != nullptr && *overrides_json != '\0') {
      json j = json::parse(overrides_json);
      for (auto it = j.begin(); it != j.end(); ++it) {
        id.param_overrides[it.key()] = it.value().get<double>();
      }
    }
    *out = new cpx_env{make_fixture(id)};
    return CPX_OK;
  });
}

void cpx_env_destroy(cpx_env* env) { delete env; }

cpx_status cpx_env_spec_json(const cpx_env* env, char** out_json) {
  if (auto rc = require(env && out_json, "env/out_json"); rc != CPX_OK) return rc;
  return guarded([&] {
    *out_json = dup_string(spec_to_json(env->fixture.spec));
    return CPX_OK;
  });
}

cpx_status cpx_env_behavioral_json(const cpx_env* env, char** out_json) {
  if (auto rc = require(env && out_json, "env/out_json"); rc != CPX_OK) return rc;
  return guarded([&] {
    *out_json = dup_string(policy_to_json(env->fixture.behavioral));
    return CPX_OK;
  });
}

cpx_status cpx_env_describe(const cpx_env* env, char** out_text) {
  if (auto rc = require(env && out_text, "env/out_text"); rc != CPX_OK) return rc;
  *out_text = dup_string(env->fixture.description);
  return CPX_OK;
}

cpx_status cpx_env_validate(const cpx_env* env, char** out_report) {
  if (auto rc = require(env && out_report, "env/out_report"); rc != CPX_OK) return rc;
  return guarded([&] {
    std::string report;
    for (const auto& v : validate(env->fixture.spec)) {
      report += v.what;
      if (v.s >= 0) report += " (s=" + std::to_string(v.s) + ")";
      if (v.u >= 0) report += " (u=" + std::to_string(v.u) + ")";
      report += "\n";
    }
    *out_report = dup_string(report);
    return CPX_OK;
  });
}

cpx_status cpx_dataset_generate(const cpx_env* env, int64_t num_trajectories, uint64_t seed,
                                int emit_latent, const char* config_hash, cpx_dataset** out) {
  if (auto rc = require(env && out, "env/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    SimConfig cfg;
    cfg.num_trajectories = num_trajectories;
    cfg.master_seed = seed;
    cfg.emit_latent = emit_latent != 0;
    *out = new cpx_dataset{generate_dataset(env->fixture.spec, env->fixture.behavioral, cfg,
                                            env->fixture.name,
                                            config_hash ? config_hash : "")};
    return CPX_OK;
  });
}

void cpx_dataset_destroy(cpx_dataset* ds) { delete ds; }

cpx_status cpx_dataset_save(const cpx_dataset* ds, const char* path) {
  if (auto rc = require(ds && path, "ds/path"); rc != CPX_OK) return rc;
  return guarded([&] {
    save_dataset(ds->ds, path);
    return CPX_OK;
  });
}

cpx_status cpx_dataset_load(const char* path, cpx_dataset** out) {
  if (auto rc = require(path && out, "path/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    *out = new cpx_dataset{load_dataset(path)};
    return CPX_OK;
  });
}

int64_t cpx_dataset_size(const cpx_dataset* ds) {
  return ds ? static_cast<int64_t>(ds->ds.records.size()) : 0;
}

int cpx_dataset_horizon(const cpx_dataset* ds) { return ds ? ds->ds.meta.horizon : 0; }

int cpx_dataset_has_latent(const cpx_dataset* ds) {
  return ds && ds->ds.meta.emit_latent ? 1 : 0;
}

cpx_status cpx_matrices_estimate(const cpx_dataset* ds, double alpha, cpx_matrices** out) {
  if (auto rc = require(ds && out, "ds/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    *out = new cpx_matrices{estimate_matrices(ds->ds, alpha)};
    return CPX_OK;
  });
}

cpx_status cpx_matrices_population(const cpx_env* env, cpx_matrices** out) {
  if (auto rc = require(env && out, "env/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    *out = new cpx_matrices{population_matrices(env->fixture.spec, env->fixture.behavioral)};
    return CPX_OK;
  });
}

void cpx_matrices_destroy(cpx_matrices* em) { delete em; }

cpx_status cpx_matrices_dump(const cpx_matrices* em, const char* path) {
  if (auto rc = require(em && path, "em/path"); rc != CPX_OK) return rc;
  return guarded([&] {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(std::string("cannot open '") + path + "' for writing");
    dump_matrices(em->em, os);
    return CPX_OK;
  });
}

cpx_status cpx_matrices_invertibility_json(const cpx_matrices* em, double warn_cond,
                                           double fail_cond, char** out_json) {
  if (auto rc = require(em && out_json, "em/out_json"); rc != CPX_OK) return rc;
  return guarded([&] {
    *out_json = dup_string(report_to_json(invertibility_report(em->em, warn_cond, fail_cond)));
    return CPX_OK;
  });
}

cpx_status cpx_fit_surrogate(const cpx_dataset* ds, const char* cfg_json, cpx_model** out) {
  if (auto rc = require(ds && out, "ds/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    std::string hash;
    const FitConfig cfg = fit_config_from_json(cfg_json, &hash);
    auto* m = new cpx_model{fit_surrogate(ds->ds, cfg)};
    m->model.config_hash = hash;
    *out = m;
    if (!m->model.converged) {
      return fail(CPX_ERR_NOT_CONVERGED, "surrogate fit did not converge within max_iters");
    }
    return CPX_OK;
  });
}

cpx_status cpx_fit_naive(const cpx_dataset* ds, const char* cfg_json, cpx_model** out) {
  if (auto rc = require(ds && out, "ds/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    std::string hash;
    const FitConfig cfg = fit_config_from_json(cfg_json, &hash);
    auto* m = new cpx_model{fit_naive(ds->ds, cfg)};
    m->model.config_hash = hash;
    *out = m;
    return CPX_OK;
  });
}

cpx_status cpx_fit_oracle(const cpx_dataset* ds, const char* cfg_json, cpx_model** out) {
  if (auto rc = require(ds && out, "ds/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    std::string hash;
    const FitConfig cfg = fit_config_from_json(cfg_json, &hash);
    auto* m = new cpx_model{fit_oracle(ds->ds, cfg)};
    m->model.config_hash = hash;
    *out = m;
    return CPX_OK;
  });
}

void cpx_model_destroy(cpx_model* m) { delete m; }

cpx_status cpx_model_save(const cpx_model* m, const char* path) {
  if (auto rc = require(m && path, "m/path"); rc != CPX_OK) return rc;
  return guarded([&] {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(std::string("cannot open '") + path + "' for writing");
    os << model_to_json(m->model);
    return CPX_OK;
  });
}

cpx_status cpx_model_load(const char* path, cpx_model** out) {
  if (auto rc = require(path && out, "path/out"); rc != CPX_OK) return rc;
  return guarded([&] {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(std::string("cannot open '") + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    *out = new cpx_model{model_from_json(ss.str())};
    return CPX_OK;
  });
}

int cpx_model_converged(const cpx_model* m) { return m && m->model.converged ? 1 : 0; }

int cpx_model_iterations(const cpx_model* m) { return m ? m->model.iterations : 0; }

cpx_status cpx_model_action_nll(const cpx_model* m, const cpx_dataset* ds, double* out_nll) {
  if (auto rc = require(m && ds && out_nll, "m/ds/out_nll"); rc != CPX_OK) return rc;
  return guarded([&] {
    *out_nll = action_nll(ds->ds, m->model.policy);
    return CPX_OK;
  });
}

cpx_status cpx_eval_compare(const cpx_env* env, const cpx_model* const* models,
                            const char* const* labels, size_t n_models, const char* cfg_json,
                            const char* rollout_csv_path, const char* returns_csv_path) {
  if (auto rc = require(env && models && labels && n_models > 0 && rollout_csv_path &&
                            returns_csv_path,
                        "env/models/labels/paths");
      rc != CPX_OK) {
    return rc;
  }
  return guarded([&] {
    EvalConfig cfg;
    if (cfg_json != nullptr && *cfg_json != '\0') {
      json j = json::parse(cfg_json);
      cfg.exact_metric = j.value("metric_mode", "exact") == std::string("exact");
      cfg.episodes = j.value("episodes", cfg.episodes);
      cfg.seed = j.value("seed", cfg.seed);
    }
    std::vector<const SurrogateModel*> ms;
    std::vector<std::string> ls;
    for (size_t i = 0; i < n_models; ++i) {
      if (models[i] == nullptr || labels[i] == nullptr) {
        throw ValidationError("compare: null model or label");
      }
      ms.push_back(&models[i]->model);
      ls.push_back(labels[i]);
    }
    const EvalReport rep = compare(env->fixture.spec, env->fixture.behavioral, ms, ls, cfg);
    std::ofstream r1(rollout_csv_path, std::ios::binary);
    if (!r1) throw IoError(std::string("cannot open '") + rollout_csv_path + "'");
    r1 << rollout_csv(rep);
    std::ofstream r2(returns_csv_path, std::ios::binary);
    if (!r2) throw IoError(std::string("cannot open '") + returns_csv_path + "'");
    r2 << returns_csv(rep);
    return CPX_OK;
  });
}

}  // extern "C"
