#include "cascade/synthgen.hpp"

#include "cascade/log_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace cascade {

namespace {

// Counter-based draws: every sample is a pure function of
// (seed, stream, index), so generation order and platform do not matter.
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t draw_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

double draw_unit(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return static_cast<double>(draw_bits(seed, stream, index) >> 11) * 0x1.0p-53;
}

std::size_t draw_index(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                       std::size_t m) {
    auto k = static_cast<std::size_t>(draw_unit(seed, stream, index) *
                                      static_cast<double>(m));
    return std::min(k, m - 1);
}

// Stream layout: purpose * 4096 + run index. Purposes that both model
// families consume share the run-indexed stream, which is what makes the
// null config produce byte-identical small/large pairs.
enum Purpose : std::uint64_t {
    kGold = 0,
    kDiffComponent,
    kDiffMagnitude,
    kCorrect,
    kWrongPick,
    kULevel,
    kAdvantage,
    kRegression,
    kRegressionPick,
};

constexpr std::uint64_t kRunStride = 4096;

std::uint64_t stream_of(Purpose purpose, std::size_t run = 0) {
    return static_cast<std::uint64_t>(purpose) * kRunStride + run;
}

std::string padded_id(std::size_t i, std::size_t width) {
    std::string digits = std::to_string(i);
    return "ex-" + std::string(width - digits.size(), '0') + digits;
}

// Membership flags for the hardest / easiest slices, cut by rank so the
// slice sizes are exact regardless of the difficulty distribution.
std::vector<char> slice_flags(const std::vector<double>& difficulty, double fraction,
                              bool hardest) {
    const std::size_t n = difficulty.size();
    std::vector<char> flags(n, 0);
    const std::size_t k = count_at_fraction(fraction, n);
    if (k == 0) return flags;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (difficulty[a] != difficulty[b]) {
            return hardest ? difficulty[a] > difficulty[b] : difficulty[a] < difficulty[b];
        }
        return a < b;
    });
    for (std::size_t i = 0; i < k; ++i) flags[order[i]] = 1;
    return flags;
}

} // namespace

void SynthConfig::validate() const {
    if (n_examples == 0) throw Error("synth config: n_examples must be positive");
    if (n_classes < 2 || n_classes > 1000) {
        throw Error("synth config: n_classes must be in [2, 1000]");
    }
    if (committee_size == 0 || committee_size > 1000) {
        throw Error("synth config: committee_size must be in [1, 1000]");
    }
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(difficulty_mix.easy_fraction)) {
        throw Error("synth config: easy_fraction outside [0, 1]");
    }
    if (!(difficulty_mix.easy_max > 0.0) || difficulty_mix.easy_max > 1.0) {
        throw Error("synth config: easy_max outside (0, 1]");
    }
    if (!in_unit(large_advantage)) throw Error("synth config: large_advantage outside [0, 1]");
    if (!in_unit(certain_regression)) {
        throw Error("synth config: certain_regression outside [0, 1]");
    }
    if (!in_unit(advantage_quantile)) {
        throw Error("synth config: advantage_quantile outside [0, 1]");
    }
    if (!in_unit(regression_quantile)) {
        throw Error("synth config: regression_quantile outside [0, 1]");
    }
    if (!in_unit(score_noise)) throw Error("synth config: score_noise outside [0, 1]");
}

SynthData generate(const SynthConfig& config) {
    config.validate();
    const std::size_t n = config.n_examples;
    const std::size_t k = config.n_classes;
    const std::uint64_t seed = config.seed;

    std::vector<std::string> labels(k);
    for (std::size_t c = 0; c < k; ++c) labels[c] = "c" + std::to_string(c);

    const std::size_t width = std::max<std::size_t>(6, std::to_string(n - 1).size());

    SynthData data;
    data.example_ids.reserve(n);
    data.difficulty.reserve(n);
    std::vector<std::size_t> gold(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.example_ids.push_back(padded_id(i, width));
        const bool easy = draw_unit(seed, stream_of(kDiffComponent), i) <
                          config.difficulty_mix.easy_fraction;
        const double mag = draw_unit(seed, stream_of(kDiffMagnitude), i);
        data.difficulty.push_back(easy ? mag * config.difficulty_mix.easy_max : mag);
        gold[i] = draw_index(seed, stream_of(kGold), i, k);
    }

    const auto advantage = slice_flags(data.difficulty, 1.0 - config.advantage_quantile,
                                       /*hardest=*/true);
    const auto regression = slice_flags(data.difficulty, config.regression_quantile,
                                        /*hardest=*/false);

    // Chance-level accuracy at difficulty 1, perfect at 0.
    const double wrong_span = 1.0 - 1.0 / static_cast<double>(k);

    auto build_record = [&](std::size_t i, std::size_t run, bool large) {
        const double d = data.difficulty[i];
        const double p_correct = 1.0 - d * wrong_span;
        bool correct = draw_unit(seed, stream_of(kCorrect, run), i) < p_correct;
        std::size_t pred = gold[i];
        if (!correct) {
            const std::size_t w = draw_index(seed, stream_of(kWrongPick, run), i, k - 1);
            pred = w < gold[i] ? w : w + 1;
        }
        if (large) {
            if (advantage[i] &&
                draw_unit(seed, stream_of(kAdvantage, run), i) < config.large_advantage) {
                pred = gold[i];
                correct = true;
            } else if (regression[i] && draw_unit(seed, stream_of(kRegression, run), i) <
                                            config.certain_regression) {
                const std::size_t w =
                    draw_index(seed, stream_of(kRegressionPick, run), i, k - 1);
                pred = w < gold[i] ? w : w + 1;
                correct = false;
            }
        }

        const double jitter =
            config.score_noise * (2.0 * draw_unit(seed, stream_of(kULevel, run), i) - 1.0);
        const double u_level = std::clamp(d + jitter, 0.0, 1.0);

        ClassDistribution dist;
        dist.probs.assign(k, u_level / static_cast<double>(k));
        dist.probs[pred] = 1.0 - u_level + u_level / static_cast<double>(k);

        PredictionRecord rec;
        rec.example_id = data.example_ids[i];
        rec.prediction = labels[pred];
        rec.gold = labels[gold[i]];
        rec.output = std::move(dist);
        rec.labels = labels;
        rec.correct = pred == gold[i];
        return rec;
    };

    auto build_run = [&](std::size_t run, bool large) {
        ModelRun out;
        out.model_id = (large ? "large-r" : "small-r") + std::to_string(run);
        out.size_tag = large ? SizeTag::Large : SizeTag::Small;
        out.run_index = static_cast<int>(run);
        for (std::size_t i = 0; i < n; ++i) {
            out.records.emplace(data.example_ids[i], build_record(i, run, large));
        }
        return out;
    };

    for (std::size_t r = 0; r < config.committee_size; ++r) {
        data.small_committee.runs.push_back(build_run(r, false));
        data.large_committee.runs.push_back(build_run(r, true));
    }
    return data;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open synth config: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error("invalid synth config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) {
        throw Error("invalid synth config " + path.string() + ": expected an object");
    }
    SynthConfig config;
    try {
        config.n_examples = j.value("n_examples", config.n_examples);
        config.n_classes = j.value("n_classes", config.n_classes);
        config.committee_size = j.value("committee_size", config.committee_size);
        config.seed = j.value("seed", config.seed);
        if (j.contains("difficulty_mix")) {
            const auto& m = j.at("difficulty_mix");
            config.difficulty_mix.easy_fraction =
                m.value("easy_fraction", config.difficulty_mix.easy_fraction);
            config.difficulty_mix.easy_max =
                m.value("easy_max", config.difficulty_mix.easy_max);
        }
        config.large_advantage = j.value("large_advantage", config.large_advantage);
        config.certain_regression = j.value("certain_regression", config.certain_regression);
        config.advantage_quantile = j.value("advantage_quantile", config.advantage_quantile);
        config.regression_quantile =
            j.value("regression_quantile", config.regression_quantile);
        config.score_noise = j.value("score_noise", config.score_noise);
    } catch (const nlohmann::json::exception& e) {
        throw Error("invalid synth config " + path.string() + ": " + e.what());
    }
    config.validate();
    return config;
}

void write_synth_dataset(const SynthData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    Manifest manifest;
    manifest.dataset = "synthetic";
    manifest.split = "full";
    auto emit = [&](const RunSet& runs) {
        for (const auto& run : runs.runs) {
            const std::string file = run.model_id + ".jsonl";
            write_prediction_log(run, dir / file);
            manifest.entries.push_back({file, run.size_tag, run.run_index});
        }
    };
    emit(data.small_committee);
    emit(data.large_committee);
    write_manifest(manifest, dir / "manifest.json");
}

} // namespace cascade
