#pragma once

// Brute-force reference implementations and instance builders shared by the
// unit and acceptance suites. Everything here recomputes results from first
// principles (materialized sets, candidate enumeration) so agreement with the
// library is meaningful.

#include "cascade/types.hpp"
#include "cascade/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace oracles {

struct Instance {
    cascade::ModelRun small;
    cascade::ModelRun large;
    cascade::ScoreMap scores;
};

// gold is always "g"; wrong predictions are distinct per side so that
// disagreement follows correctness exactly.
inline cascade::PredictionRecord make_record(const std::string& id, bool correct,
                                             const std::string& wrong_tag) {
    cascade::PredictionRecord rec;
    rec.example_id = id;
    rec.gold = "g";
    rec.prediction = correct ? "g" : "w-" + wrong_tag;
    cascade::ClassDistribution dist;
    dist.probs = {0.75, 0.25};
    rec.output = dist;
    rec.correct = correct;
    return rec;
}

inline Instance build_instance(const std::vector<std::string>& ids,
                               const std::vector<bool>& small_correct,
                               const std::vector<bool>& large_correct,
                               const std::vector<double>& scores) {
    Instance inst;
    inst.small.model_id = "small";
    inst.small.size_tag = cascade::SizeTag::Small;
    inst.large.model_id = "large";
    inst.large.size_tag = cascade::SizeTag::Large;
    inst.scores.kind = cascade::UncertaintyKind::Margin;
    inst.scores.reference_model_id = "small";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        inst.small.records.emplace(ids[i], make_record(ids[i], small_correct[i], "s"));
        inst.large.records.emplace(ids[i], make_record(ids[i], large_correct[i], "l"));
        inst.scores.scores[ids[i]] = scores[i];
    }
    return inst;
}

// The running 4-example instance: small correct on {a,b,c}, large on
// {b,c,d}, uncertainty d > c > b > a.
inline Instance hand_instance() {
    return build_instance({"a", "b", "c", "d"}, {true, true, true, false},
                          {false, true, true, true}, {0.1, 0.2, 0.3, 0.4});
}

// Random instance with deliberate score ties (scores on a coarse lattice).
inline Instance random_instance(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::string> ids;
    std::vector<bool> small_c;
    std::vector<bool> large_c;
    std::vector<double> scores;
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> lattice(0, 9);
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("e" + std::to_string(100 + i));
        small_c.push_back(coin(rng) == 1);
        large_c.push_back(coin(rng) == 1);
        scores.push_back(0.05 * lattice(rng));
    }
    return build_instance(ids, small_c, large_c, scores);
}

// Same deferred-set rule as the contract, recomputed without prefix sums:
// a materialized set per fraction, built from an independently sorted list.
inline std::size_t deferred_count(double fraction, std::size_t n) {
    if (fraction <= 0.0) return 0;
    if (fraction >= 1.0) return n;
    const double raw = fraction * static_cast<double>(n);
    auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    if (count < 1) count = 1;
    return std::min(count, n);
}

inline std::vector<std::string> ranked_ids(const Instance& inst) {
    std::vector<std::pair<double, std::string>> order;
    for (const auto& [id, s] : inst.scores.scores) order.emplace_back(s, id);
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> ids;
    for (const auto& [s, id] : order) ids.push_back(id);
    return ids;
}

struct BruteCurve {
    std::vector<double> fractions;
    std::vector<double> accuracy;
};

inline BruteCurve brute_force_curve(const Instance& inst, double step) {
    BruteCurve out;
    for (std::size_t k = 0;; ++k) {
        const double f = static_cast<double>(k) * step;
        if (f >= 1.0 - 1e-12) break;
        out.fractions.push_back(f);
    }
    out.fractions.push_back(1.0);

    const auto order = ranked_ids(inst);
    const std::size_t n = order.size();
    for (double f : out.fractions) {
        const std::size_t k = deferred_count(f, n);
        std::set<std::string> deferred(order.begin(), order.begin() + k);
        std::size_t correct = 0;
        for (const auto& [id, rec] : inst.small.records) {
            const bool use_large = deferred.count(id) > 0;
            const auto& chosen = use_large ? inst.large.records.at(id) : rec;
            if (chosen.correct.value()) ++correct;
        }
        out.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
    }
    return out;
}

// Candidate enumeration: every distinct score plus an above-max sentinel.
inline double brute_force_threshold(const std::map<std::string, double>& scores,
                                    double fraction) {
    const std::size_t n = scores.size();
    const std::size_t budget = deferred_count(fraction, n);
    std::set<double> candidates;
    double max_score = -std::numeric_limits<double>::infinity();
    for (const auto& [id, s] : scores) {
        candidates.insert(s);
        max_score = std::max(max_score, s);
    }
    double best = std::nextafter(max_score, std::numeric_limits<double>::max());
    for (double t : candidates) {
        std::size_t count = 0;
        for (const auto& [id, s] : scores) {
            if (s >= t) ++count;
        }
        if (count <= budget) {
            best = std::min(best, t);
        }
    }
    return best;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace oracles
