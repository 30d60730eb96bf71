#pragma once

#include <cstdint>
#include <string>

#include "cmdprox/types.hpp"

namespace cmdprox {

struct SimConfig {
  std::int64_t num_trajectories = 1;
  std::uint64_t master_seed = 0;
  bool emit_latent = false;
};

// One episode: s_0 ~ init, the null observation is an independent second
// observation of s_0, then for t = 0..T-1 draw y_t, u_t, r_t and advance.
// Identical seed implies a bit-identical trajectory.
Trajectory sample_trajectory(const PomdpSpec& spec, const Policy& pol, std::uint64_t seed);

// N trajectories under counter-derived per-record seeds (see rng.hpp);
// latent state columns are dropped unless cfg.emit_latent.
Dataset generate_dataset(const PomdpSpec& spec, const Policy& pol, const SimConfig& cfg,
                         const std::string& fixture_label = "",
                         const std::string& config_hash = "");

// Delimited text encoding; byte-stable for identical inputs.
std::string dataset_to_text(const Dataset& ds);
Dataset dataset_from_text(const std::string& text);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Copy with latent columns removed.
Dataset strip_latent(const Dataset& ds);

}  // namespace cmdprox
