/* cmdprox: confounded contextual-MDP toolkit - C interface.
 *
 * All functions return cpx_status; CPX_OK is 0. On failure a thread-local
 * message is available through cpx_last_error(). Handles are opaque and must
 * be released with their _destroy function. Strings returned through char**
 * out-parameters must be released with cpx_string_free().
 */
#ifndef CMDPROX_H
#define CMDPROX_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cpx_status {
  CPX_OK = 0,
  CPX_ERR_INTERNAL = 1,
  CPX_ERR_VALIDATION = 2,
  CPX_ERR_SINGULAR_CHAIN = 3,
  CPX_ERR_NOT_CONVERGED = 4,
  CPX_ERR_IO = 5,
  CPX_ERR_BAD_ARGUMENT = 6
} cpx_status;

typedef struct cpx_env cpx_env;           /* fixture: spec + behavioral policy */
typedef struct cpx_dataset cpx_dataset;
typedef struct cpx_matrices cpx_matrices; /* behavioral conditional estimates */
typedef struct cpx_model cpx_model;       /* fitted surrogate/naive/oracle model */

const char* cpx_version(void);
const char* cpx_last_error(void);
void cpx_string_free(char* s);

/* ---- fixtures ----------------------------------------------------------- */

/* overrides_json: optional JSON object {"key": number, ...}; NULL for none.
 * seed: fixture construction seed (used by generated fixtures); pass 0 for
 * the built-in default. */
cpx_status cpx_env_create(const char* fixture_name, const char* overrides_json,
                          uint64_t seed, cpx_env** out);
void cpx_env_destroy(cpx_env* env);
cpx_status cpx_env_spec_json(const cpx_env* env, char** out_json);
cpx_status cpx_env_behavioral_json(const cpx_env* env, char** out_json);
cpx_status cpx_env_describe(const cpx_env* env, char** out_text);
/* Empty string when the spec passes validation, one line per violation
 * otherwise. */
cpx_status cpx_env_validate(const cpx_env* env, char** out_report);

/* ---- datasets ------------------------------------------------------------ */

cpx_status cpx_dataset_generate(const cpx_env* env, int64_t num_trajectories,
                                uint64_t seed, int emit_latent, const char* config_hash,
                                cpx_dataset** out);
void cpx_dataset_destroy(cpx_dataset* ds);
cpx_status cpx_dataset_save(const cpx_dataset* ds, const char* path);
cpx_status cpx_dataset_load(const char* path, cpx_dataset** out);
int64_t cpx_dataset_size(const cpx_dataset* ds);
int cpx_dataset_horizon(const cpx_dataset* ds);
int cpx_dataset_has_latent(const cpx_dataset* ds);

/* ---- estimation ----------------------------------------------------------- */

cpx_status cpx_matrices_estimate(const cpx_dataset* ds, double alpha, cpx_matrices** out);
cpx_status cpx_matrices_population(const cpx_env* env, cpx_matrices** out);
void cpx_matrices_destroy(cpx_matrices* em);
cpx_status cpx_matrices_dump(const cpx_matrices* em, const char* path);
cpx_status cpx_matrices_invertibility_json(const cpx_matrices* em, double warn_cond,
                                           double fail_cond, char** out_json);

/* ---- learning -------------------------------------------------------------
 * cfg_json: JSON object, all fields optional:
 *   {"max_iters":200,"tol_tv":1e-8,"damping":0.5,
 *    "value_rule":"expectation"|"log_partition","alpha":0.5,
 *    "pinv_tolerance":1e-10,"config_hash":"..."}
 * cpx_fit_surrogate returns CPX_ERR_NOT_CONVERGED (with a valid model whose
 * converged flag is unset) when the fixed point does not settle. */

cpx_status cpx_fit_surrogate(const cpx_dataset* ds, const char* cfg_json, cpx_model** out);
cpx_status cpx_fit_naive(const cpx_dataset* ds, const char* cfg_json, cpx_model** out);
cpx_status cpx_fit_oracle(const cpx_dataset* ds, const char* cfg_json, cpx_model** out);
void cpx_model_destroy(cpx_model* m);
cpx_status cpx_model_save(const cpx_model* m, const char* path);
cpx_status cpx_model_load(const char* path, cpx_model** out);
int cpx_model_converged(const cpx_model* m);
int cpx_model_iterations(const cpx_model* m);
cpx_status cpx_model_action_nll(const cpx_model* m, const cpx_dataset* ds, double* out_nll);

/* ---- evaluation ------------------------------------------------------------
 * cfg_json fields (all optional):
 *   {"metric_mode":"exact"|"mc","episodes":1000,"seed":7}
 * Writes the two CSV artifacts (per-step l1 rollout error; Monte-Carlo mean
 * returns with standard errors). */

cpx_status cpx_eval_compare(const cpx_env* env, const cpx_model* const* models,
                            const char* const* labels, size_t n_models, const char* cfg_json,
                            const char* rollout_csv_path, const char* returns_csv_path);

#ifdef __cplusplus
}
#endif

#endif /* CMDPROX_H */
