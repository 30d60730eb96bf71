#include "cmdprox/simulate.hpp"

#include <fstream>
#include <sstream>

#include "cmdprox/core.hpp"
#include "cmdprox/rng.hpp"
#include "cmdprox/text.hpp"
#include "json.hpp"

namespace cmdprox {

using json = nlohmann::json;

Trajectory sample_trajectory(const PomdpSpec& spec, const Policy& pol, std::uint64_t seed) {
  check_policy(spec, pol);
  Rng rng(seed);
  Trajectory tr;
  tr.states.reserve(spec.horizon);
  tr.steps.reserve(spec.horizon);

  int s = rng.categorical(std::span<const double>(spec.init_dist));
  tr.null_obs = rng.categorical(spec.obs_row(s));  // second look at s_0
  for (int t = 0; t < spec.horizon; ++t) {
    const int y = rng.categorical(spec.obs_row(s));
    const int cond = pol.kind == PolicyKind::obs_based ? y : s;
    const int u = rng.categorical(pol.row(t, cond));
    const int r = rng.categorical(spec.reward_row(s, u));
    tr.states.push_back(s);
    tr.steps.push_back({y, u, r});
    s = rng.categorical(spec.trans_row(s, u));
  }
  return tr;
}

Dataset generate_dataset(const PomdpSpec& spec, const Policy& pol, const SimConfig& cfg,
                         const std::string& fixture_label, const std::string& config_hash) {
  if (cfg.num_trajectories < 1) throw ValidationError("generate_dataset: N must be >= 1");
  Dataset ds;
  ds.meta.fixture = fixture_label;
  ds.meta.n = cfg.num_trajectories;
  ds.meta.horizon = spec.horizon;
  ds.meta.seed = cfg.master_seed;
  ds.meta.emit_latent = cfg.emit_latent;
  ds.meta.factored = spec.factored;
  ds.meta.num_obs = spec.num_obs;
  ds.meta.num_full_states = spec.num_full_states;
  ds.meta.num_actions = spec.num_actions;
  ds.meta.reward_alphabet = spec.reward_alphabet;
  ds.meta.policy_hash = policy_hash(pol);
  ds.meta.config_hash = config_hash;

  ds.records.reserve(cfg.num_trajectories);
  for (std::int64_t i = 0; i < cfg.num_trajectories; ++i) {
    Trajectory tr = sample_trajectory(spec, pol, derive_seed(cfg.master_seed, i));
    if (!cfg.emit_latent) tr.states.clear();
    ds.records.push_back(std::move(tr));
  }
  return ds;
}

Dataset strip_latent(const Dataset& ds) {
  Dataset out = ds;
  out.meta.emit_latent = false;
  for (auto& tr : out.records) tr.states.clear();
  return out;
}

std::string dataset_to_text(const Dataset& ds) {
  std::ostringstream os;
  json meta;
  meta["schema"] = ds.meta.schema;
  meta["fixture"] = ds.meta.fixture;
  meta["n"] = ds.meta.n;
  meta["horizon"] = ds.meta.horizon;
  meta["seed"] = ds.meta.seed;
  meta["emit_latent"] = ds.meta.emit_latent;
  meta["factored"] = ds.meta.factored;
  meta["num_obs"] = ds.meta.num_obs;
  meta["num_full_states"] = ds.meta.num_full_states;
  meta["num_actions"] = ds.meta.num_actions;
  {
    json arr = json::array();
    for (double v : ds.meta.reward_alphabet) arr.push_back(text::format_double(v));
    meta["reward_alphabet"] = arr;
  }
  meta["policy_hash"] = ds.meta.policy_hash;
  meta["config_hash"] = ds.meta.config_hash;
  os << "# " << meta.dump() << "\n";

  for (const auto& tr : ds.records) {
    os << tr.null_obs;
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      const auto& st = tr.steps[t];
      os << ';';
      if (ds.meta.emit_latent) os << tr.states[t] << ',';
      os << st.y << ',' << st.u << ',' << st.r << ','
         << text::format_double(ds.meta.reward_alphabet[st.r]);
    }
    os << "\n";
  }
  return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset dataset_from_text(const std::string& textdoc) {
  std::istringstream is(textdoc);
  std::string line;
  if (!std::getline(is, line) || line.size() < 2 || line[0] != '#') {
    throw IoError("dataset: missing metadata header");
  }
  json meta = json::parse(line.substr(1));
  Dataset ds;
  ds.meta.schema = meta.at("schema").get<std::string>();
  if (ds.meta.schema != "cmdprox/dataset/v1") throw IoError("dataset: unknown schema");
  ds.meta.fixture = meta.at("fixture").get<std::string>();
  ds.meta.n = meta.at("n").get<std::int64_t>();
  ds.meta.horizon = meta.at("horizon").get<int>();
  ds.meta.seed = meta.at("seed").get<std::uint64_t>();
  ds.meta.emit_latent = meta.at("emit_latent").get<bool>();
  ds.meta.factored = meta.at("factored").get<bool>();
  ds.meta.num_obs = meta.at("num_obs").get<int>();
  ds.meta.num_full_states = meta.at("num_full_states").get<int>();
  ds.meta.num_actions = meta.at("num_actions").get<int>();
  for (const auto& e : meta.at("reward_alphabet")) {
    ds.meta.reward_alphabet.push_back(text::parse_double(e.get<std::string>()));
  }
  ds.meta.policy_hash = meta.at("policy_hash").get<std::string>();
  ds.meta.config_hash = meta.at("config_hash").get<std::string>();

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ';');
    if (static_cast<int>(fields.size()) != ds.meta.horizon + 1) {
      throw IoError("dataset: record with wrong number of steps");
    }
    Trajectory tr;
    tr.null_obs = std::stoi(fields[0]);
    for (int t = 1; t <= ds.meta.horizon; ++t) {
      const auto cols = split(fields[t], ',');
      const std::size_t want = ds.meta.emit_latent ? 5 : 4;
      if (cols.size() != want) throw IoError("dataset: malformed step record");
      std::size_t c = 0;
      if (ds.meta.emit_latent) tr.states.push_back(std::stoi(cols[c++]));
      StepRecord st;
      st.y = std::stoi(cols[c++]);
      st.u = std::stoi(cols[c++]);
      st.r = std::stoi(cols[c++]);
      if (st.y < 0 || st.y >= ds.meta.num_obs || st.u < 0 || st.u >= ds.meta.num_actions ||
          st.r < 0 || st.r >= static_cast<int>(ds.meta.reward_alphabet.size())) {
        throw IoError("dataset: id out of alphabet bounds");
      }
      tr.steps.push_back(st);
    }
    ds.records.push_back(std::move(tr));
  }
  if (static_cast<std::int64_t>(ds.records.size()) != ds.meta.n) {
    throw IoError("dataset: record count does not match metadata");
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << dataset_to_text(ds);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return dataset_from_text(ss.str());
}

}  // namespace cmdprox
