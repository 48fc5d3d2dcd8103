#pragma once

#include "cascade/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cascade {

/// Latent per-example difficulty: with probability easy_fraction the
/// example draws uniformly from [0, easy_max], otherwise from [0, 1].
struct DifficultyMix {
    double easy_fraction = 0.5;
    double easy_max = 0.3;
};

/// Knobs mirror the phenomena under study: large_advantage forces the
/// large model correct on the hardest (1 - advantage_quantile) slice,
/// certain_regression forces it wrong on a share of the easiest
/// regression_quantile slice. Both at 0 leave the large runs identical
/// to their paired small runs.
struct SynthConfig {
    std::size_t n_examples = 1000;
    std::size_t n_classes = 2;
    std::size_t committee_size = 1;
    std::uint64_t seed = 1;
    DifficultyMix difficulty_mix;
    double large_advantage = 0.0;
    double certain_regression = 0.0;
    double advantage_quantile = 0.9;
    double regression_quantile = 0.5;
    double score_noise = 0.15;

    void validate() const;
};

struct SynthData {
    RunSet small_committee;
    RunSet large_committee;
    std::vector<std::string> example_ids; // ascending id order
    std::vector<double> difficulty;       // parallel to example_ids
};

/// Pure function of the config (including its seed): same config, same
/// bytes. Correctness and uncertainty are separate draws off the shared
/// difficulty, so confidence is informative about difficulty but not
/// about the realized correctness coin.
SynthData generate(const SynthConfig& config);

SynthConfig load_synth_config(const std::filesystem::path& path);

/// Writes one log per run plus manifest.json into dir (created if absent).
void write_synth_dataset(const SynthData& data, const std::filesystem::path& dir);

} // namespace cascade
