// cmdprox command-line pipeline: fixture/dataset generation, estimation,
// model fitting, and evaluation, driven by a config file with flag overrides
// (flags win). Everything goes through the shared-library C interface.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmdprox.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunConfig {
  std::string fixture = "icu";
  std::int64_t n = 1000;
  std::uint64_t seed = 7;
  double alpha = 0.5;
  double tol_tv = 1e-8;
  double damping = 0.5;
  int max_iters = 200;
  std::string value_rule = "expectation";
  std::string metric_mode = "exact";
  std::int64_t episodes = 1000;
  double warn_cond = 1e8;
  double fail_cond = 1e12;
  bool emit_latent = false;
  std::map<std::string, double> overrides;
  std::string out_dir = "out";
};

json semantic_json(const RunConfig& cfg) {
  json j;
  j["fixture"] = cfg.fixture;
  j["n"] = cfg.n;
  j["seed"] = cfg.seed;
  j["alpha"] = cfg.alpha;
  j["tol_tv"] = cfg.tol_tv;
  j["damping"] = cfg.damping;
  j["max_iters"] = cfg.max_iters;
  j["value_rule"] = cfg.value_rule;
  j["metric_mode"] = cfg.metric_mode;
  j["episodes"] = cfg.episodes;
  j["warn_cond"] = cfg.warn_cond;
  j["fail_cond"] = cfg.fail_cond;
  j["emit_latent"] = cfg.emit_latent;
  j["overrides"] = cfg.overrides;
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  // FNV-1a over the canonical (sorted-key) config document
  const std::string s = semantic_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string overrides_json(const RunConfig& cfg) {
  if (cfg.overrides.empty()) return "";
  return json(cfg.overrides).dump();
}

std::string fit_cfg_json(const RunConfig& cfg) {
  json j;
  j["max_iters"] = cfg.max_iters;
  j["tol_tv"] = cfg.tol_tv;
  j["damping"] = cfg.damping;
  j["value_rule"] = cfg.value_rule;
  j["alpha"] = cfg.alpha;
  j["config_hash"] = config_hash(cfg);
  return j.dump();
}

std::string eval_cfg_json(const RunConfig& cfg) {
  json j;
  j["metric_mode"] = cfg.metric_mode;
  j["episodes"] = cfg.episodes;
  j["seed"] = cfg.seed;
  return j.dump();
}

int status_to_exit(cpx_status st) {
  switch (st) {
    case CPX_OK:
      return 0;
    case CPX_ERR_VALIDATION:
    case CPX_ERR_BAD_ARGUMENT:
      return 2;
    case CPX_ERR_SINGULAR_CHAIN:
      return 3;
    case CPX_ERR_NOT_CONVERGED:
      return 4;
    default:
      return 1;
  }
}

[[noreturn]] void die(const std::string& stage, cpx_status st) {
  std::cerr << "cmdprox " << stage << ": " << cpx_last_error() << "\n";
  std::exit(status_to_exit(st));
}

void check(const std::string& stage, cpx_status st) {
  if (st != CPX_OK) die(stage, st);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    std::cerr << "cmdprox: cannot write " << path << "\n";
    std::exit(1);
  }
  os << content;
}

struct EnvHandle {
  cpx_env* p = nullptr;
  ~EnvHandle() { cpx_env_destroy(p); }
};
struct DatasetHandle {
  cpx_dataset* p = nullptr;
  ~DatasetHandle() { cpx_dataset_destroy(p); }
};
struct MatricesHandle {
  cpx_matrices* p = nullptr;
  ~MatricesHandle() { cpx_matrices_destroy(p); }
};
struct ModelHandle {
  cpx_model* p = nullptr;
  ~ModelHandle() { cpx_model_destroy(p); }
};

void open_env(const RunConfig& cfg, EnvHandle& env) {
  const std::string ov = overrides_json(cfg);
  check("env", cpx_env_create(cfg.fixture.c_str(), ov.empty() ? nullptr : ov.c_str(), 0,
                              &env.p));
}

int run_gen(const RunConfig& cfg) {
  EnvHandle env;
  open_env(cfg, env);
  fs::create_directories(cfg.out_dir);

  char* spec_json = nullptr;
  check("gen", cpx_env_spec_json(env.p, &spec_json));
  write_file(fs::path(cfg.out_dir) / "spec.json", spec_json);
  cpx_string_free(spec_json);

  char* pol_json = nullptr;
  check("gen", cpx_env_behavioral_json(env.p, &pol_json));
  write_file(fs::path(cfg.out_dir) / "behavioral.json", pol_json);
  cpx_string_free(pol_json);

  DatasetHandle ds;
  check("gen", cpx_dataset_generate(env.p, cfg.n, cfg.seed, cfg.emit_latent ? 1 : 0,
                                    config_hash(cfg).c_str(), &ds.p));
  check("gen", cpx_dataset_save(ds.p, (fs::path(cfg.out_dir) / "dataset.txt").string().c_str()));
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "dataset.txt").string() << " ("
            << cpx_dataset_size(ds.p) << " records)\n";
  return 0;
}

int run_estimate(const RunConfig& cfg) {
  DatasetHandle ds;
  check("estimate",
        cpx_dataset_load((fs::path(cfg.out_dir) / "dataset.txt").string().c_str(), &ds.p));
  MatricesHandle em;
  check("estimate", cpx_matrices_estimate(ds.p, cfg.alpha, &em.p));
  check("estimate",
        cpx_matrices_dump(em.p, (fs::path(cfg.out_dir) / "matrices.txt").string().c_str()));
  char* report = nullptr;
  check("estimate",
        cpx_matrices_invertibility_json(em.p, cfg.warn_cond, cfg.fail_cond, &report));
  write_file(fs::path(cfg.out_dir) / "invertibility.json", report);
  cpx_string_free(report);
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "matrices.txt").string() << " and "
            << (fs::path(cfg.out_dir) / "invertibility.json").string() << "\n";
  return 0;
}

int run_learn(const RunConfig& cfg) {
  DatasetHandle ds;
  check("learn",
        cpx_dataset_load((fs::path(cfg.out_dir) / "dataset.txt").string().c_str(), &ds.p));
  const std::string fit_cfg = fit_cfg_json(cfg);

  ModelHandle surrogate;
  const cpx_status st = cpx_fit_surrogate(ds.p, fit_cfg.c_str(), &surrogate.p);
  if (st != CPX_OK && st != CPX_ERR_NOT_CONVERGED) die("learn", st);
  check("learn", cpx_model_save(surrogate.p,
                                (fs::path(cfg.out_dir) / "model_surrogate.json").string().c_str()));

  ModelHandle naive;
  check("learn", cpx_fit_naive(ds.p, fit_cfg.c_str(), &naive.p));
  check("learn",
        cpx_model_save(naive.p, (fs::path(cfg.out_dir) / "model_naive.json").string().c_str()));

  if (cpx_dataset_has_latent(ds.p)) {
    ModelHandle oracle;
    check("learn", cpx_fit_oracle(ds.p, fit_cfg.c_str(), &oracle.p));
    check("learn", cpx_model_save(
                       oracle.p, (fs::path(cfg.out_dir) / "model_oracle.json").string().c_str()));
  }
  std::cout << "wrote model files under " << cfg.out_dir << " (surrogate "
            << (cpx_model_converged(surrogate.p) ? "converged" : "NOT converged") << " after "
            << cpx_model_iterations(surrogate.p) << " updates)\n";
  if (st == CPX_ERR_NOT_CONVERGED) {
    std::cerr << "cmdprox learn: " << cpx_last_error() << "\n";
    return 4;
  }
  return 0;
}

int run_eval(const RunConfig& cfg) {
  EnvHandle env;
  open_env(cfg, env);
  std::vector<ModelHandle> handles;
  std::vector<const cpx_model*> models;
  std::vector<const char*> labels;
  const std::vector<std::pair<std::string, std::string>> candidates = {
      {"model_surrogate.json", "surrogate"},
      {"model_naive.json", "naive"},
      {"model_oracle.json", "oracle"},
  };
  handles.reserve(candidates.size());
  for (const auto& [file, label] : candidates) {
    const fs::path path = fs::path(cfg.out_dir) / file;
    if (!fs::exists(path)) continue;
    handles.emplace_back();
    check("eval", cpx_model_load(path.string().c_str(), &handles.back().p));
    models.push_back(handles.back().p);
    labels.push_back(label == "surrogate" ? "surrogate" : (label == "naive" ? "naive" : "oracle"));
  }
  if (models.empty()) {
    std::cerr << "cmdprox eval: no model files under " << cfg.out_dir << "\n";
    return 2;
  }
  const std::string eval_cfg = eval_cfg_json(cfg);
  check("eval", cpx_eval_compare(env.p, models.data(), labels.data(), models.size(),
                                 eval_cfg.c_str(),
                                 (fs::path(cfg.out_dir) / "rollout.csv").string().c_str(),
                                 (fs::path(cfg.out_dir) / "returns.csv").string().c_str()));
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "rollout.csv").string() << " and "
            << (fs::path(cfg.out_dir) / "returns.csv").string() << "\n";
  return 0;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

int run_report(const RunConfig& cfg) {
  std::ostringstream rep;
  rep << "run configuration: " << semantic_json(cfg).dump() << "\n";
  rep << "config hash: " << config_hash(cfg) << "\n\n";

  const fs::path rollout_path = fs::path(cfg.out_dir) / "rollout.csv";
  if (fs::exists(rollout_path)) {
    std::ifstream is(rollout_path);
    std::string line;
    std::getline(is, line);  // header
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> agg;
    while (std::getline(is, line)) {
      const auto cols = split(line, ',');
      if (cols.size() != 5) continue;
      const int t = std::stoi(cols[3]);
      if (t < 2) continue;  // multi-step regime
      auto& [sum, count] = agg[{cols[1], cols[2]}];
      sum += std::stod(cols[4]);
      ++count;
    }
    rep << "mean l1 rollout error over t >= 2:\n";
    for (const auto& [key, val] : agg) {
      rep << "  model=" << key.first << " policy=" << key.second << " mean_l1="
          << val.first / std::max(1, val.second) << "\n";
    }
    rep << "\n";
  }
  const fs::path returns_path = fs::path(cfg.out_dir) / "returns.csv";
  if (fs::exists(returns_path)) {
    std::ifstream is(returns_path);
    std::string line;
    std::getline(is, line);
    rep << "mean returns:\n";
    while (std::getline(is, line)) {
      const auto cols = split(line, ',');
      if (cols.size() != 5) continue;
      rep << "  model=" << cols[0] << " policy=" << cols[1] << " episodes=" << cols[2]
          << " return=" << cols[3] << " stderr=" << cols[4] << "\n";
    }
    rep << "\n";
  }
  for (const char* name : {"model_surrogate.json", "model_naive.json", "model_oracle.json"}) {
    const fs::path path = fs::path(cfg.out_dir) / name;
    if (!fs::exists(path)) continue;
    std::ifstream is(path);
    json j = json::parse(is);
    rep << name << ": kind=" << j.value("kind", "?")
        << " converged=" << (j.value("converged", false) ? "yes" : "no")
        << " iterations=" << j.value("iterations", 0) << "\n";
  }
  write_file(fs::path(cfg.out_dir) / "report.txt", rep.str());
  std::cout << rep.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmdprox: model learning and evaluation for confounded contextual MDPs"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file;
  std::vector<std::string> override_flags;

  app.add_option("--config", config_file, "JSON config file; flags override its fields");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--fixture", cfg.fixture, "fixture name: icu | proxyrich | tiny");
    sub->add_option("--n", cfg.n, "number of trajectories");
    sub->add_option("--seed", cfg.seed, "master seed");
    sub->add_option("--alpha", cfg.alpha, "Laplace smoothing");
    sub->add_option("--tol-tv", cfg.tol_tv, "fixed-point tolerance (max TV)");
    sub->add_option("--damping", cfg.damping, "fixed-point damping in [0,1)");
    sub->add_option("--max-iters", cfg.max_iters, "fixed-point iteration cap");
    sub->add_option("--value-rule", cfg.value_rule, "expectation | log_partition");
    sub->add_option("--metric-mode", cfg.metric_mode, "exact | mc");
    sub->add_option("--episodes", cfg.episodes, "Monte-Carlo episodes for evaluation");
    sub->add_option("--warn-cond", cfg.warn_cond, "condition-number warning threshold");
    sub->add_option("--fail-cond", cfg.fail_cond, "condition-number failure threshold");
    sub->add_flag("--emit-latent", cfg.emit_latent, "keep latent state columns in the dataset");
    sub->add_option("--override", override_flags, "fixture parameter override key=value")
        ->take_all();
    sub->add_option("--out", cfg.out_dir, "artifact directory");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a dataset (plus spec and policy files)");
  CLI::App* estimate = app.add_subcommand("estimate", "estimate behavioral conditionals");
  CLI::App* learn = app.add_subcommand("learn", "fit surrogate, naive and oracle models");
  CLI::App* eval = app.add_subcommand("eval", "rollout-error and return comparison CSVs");
  CLI::App* report = app.add_subcommand("report", "human-readable summary of the artifacts");
  CLI::App* all = app.add_subcommand("all", "run the whole pipeline");
  for (CLI::App* sub : {gen, estimate, learn, eval, report, all}) add_common(sub);

  // config file first, then flags win
  app.preparse_callback([&](std::size_t) {
    for (int i = 1; i + 1 < argc; ++i) {
      if (std::string(argv[i]) == "--config") config_file = argv[i + 1];
    }
    if (config_file.empty()) return;
    std::ifstream is(config_file);
    if (!is) throw CLI::ValidationError("--config", "cannot open " + config_file);
    json j = json::parse(is);
    cfg.fixture = j.value("fixture", cfg.fixture);
    cfg.n = j.value("n", cfg.n);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.tol_tv = j.value("tol_tv", cfg.tol_tv);
    cfg.damping = j.value("damping", cfg.damping);
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.value_rule = j.value("value_rule", cfg.value_rule);
    cfg.metric_mode = j.value("metric_mode", cfg.metric_mode);
    cfg.episodes = j.value("episodes", cfg.episodes);
    cfg.warn_cond = j.value("warn_cond", cfg.warn_cond);
    cfg.fail_cond = j.value("fail_cond", cfg.fail_cond);
    cfg.emit_latent = j.value("emit_latent", cfg.emit_latent);
    cfg.out_dir = j.value("out", cfg.out_dir);
    if (j.contains("overrides")) {
      for (auto it = j["overrides"].begin(); it != j["overrides"].end(); ++it) {
        cfg.overrides[it.key()] = it.value().get<double>();
      }
    }
  });

  CLI11_PARSE(app, argc, argv);

  for (const auto& kv : override_flags) {
    const auto pos = kv.find('=');
    if (pos == std::string::npos) {
      std::cerr << "cmdprox: --override expects key=value, got '" << kv << "'\n";
      return 2;
    }
    try {
      cfg.overrides[kv.substr(0, pos)] = std::stod(kv.substr(pos + 1));
    } catch (const std::exception&) {
      std::cerr << "cmdprox: --override value must be numeric in '" << kv << "'\n";
      return 2;
    }
  }

  if (all->parsed()) {
    // the full pipeline trains the oracle too, which needs latent columns
    cfg.emit_latent = true;
    int worst = 0;
    for (auto stage : {run_gen, run_estimate, run_learn, run_eval, run_report}) {
      const int rc = stage(cfg);
      if (rc != 0 && rc != 4) return rc;
      if (rc == 4) {
        // keep going: artifacts are written and flagged, exit status reports it
        std::cerr << "cmdprox all: continuing with unconverged surrogate\n";
        worst = 4;
      }
    }
    return worst;
  }
  if (gen->parsed()) return run_gen(cfg);
  if (estimate->parsed()) return run_estimate(cfg);
  if (learn->parsed()) return run_learn(cfg);
  if (eval->parsed()) return run_eval(cfg);
  if (report->parsed()) return run_report(cfg);
  return 2;
}
