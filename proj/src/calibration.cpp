#include "cascade/calibration.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

namespace cascade {

using ordered_json = nlohmann::ordered_json;

bool should_defer(const RoutingPolicy& policy, double uncertainty) {
    return uncertainty >= policy.threshold;
}

RoutingPolicy threshold_for_fraction(const ScoreMap& scores, double fraction) {
    if (scores.scores.empty()) {
        throw Error("cannot calibrate on an empty score map");
    }
    if (fraction < 0.0 || fraction > 1.0) {
        throw Error("target fraction must be in [0, 1]");
    }
    const std::size_t n = scores.scores.size();
    const std::size_t budget = count_at_fraction(fraction, n);

    std::vector<double> values;
    values.reserve(n);
    for (const auto& [id, s] : scores.scores) {
        (void)id;
        values.push_back(s);
    }
    std::sort(values.begin(), values.end(), std::greater<>());

    // {t : |{score >= t}| <= budget} is upward-closed, so the answer is the
    // lowest distinct score still inside the budget. Ties at a value defer
    // together, which is what keeps the count from overshooting.
    double threshold = std::nextafter(values.front(), std::numeric_limits<double>::max());
    std::size_t deferred = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && values[j] == values[i]) ++j;
        if (j > budget) break;
        threshold = values[i];
        deferred = j;
        i = j;
    }

    RoutingPolicy policy;
    policy.kind = scores.kind;
    policy.threshold = threshold;
    policy.expected_deferral_fraction =
        static_cast<double>(deferred) / static_cast<double>(n);
    policy.provenance = scores.reference_model_id;
    return policy;
}

std::optional<double> fraction_for_target_accuracy(const SwitcherCurve& curve,
                                                   double target) {
    if (curve.fractions.size() != curve.accuracy.size() || curve.fractions.empty()) {
        throw Error("malformed switcher curve");
    }
    for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
        if (curve.accuracy[i] >= target) return curve.fractions[i];
    }
    return std::nullopt;
}

void save_policy(const RoutingPolicy& policy, const std::filesystem::path& path) {
    ordered_json j;
    j["kind"] = kind_name(policy.kind);
    j["threshold"] = policy.threshold;
    j["expected_deferral_fraction"] = policy.expected_deferral_fraction;
    j["provenance"] = policy.provenance;
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write policy file: " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out.good()) {
        throw Error("failed while writing policy file: " + path.string());
    }
}

RoutingPolicy load_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open policy file: " + path.string());
    }
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error("invalid policy file " + path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("kind") || !j.contains("threshold")) {
        throw Error("invalid policy file " + path.string() +
                    ": expected kind and threshold");
    }
    RoutingPolicy policy;
    try {
        policy.kind = kind_from_name(j.at("kind").get<std::string>());
        policy.threshold = j.at("threshold").get<double>();
        policy.expected_deferral_fraction = j.value("expected_deferral_fraction", 0.0);
        policy.provenance = j.value("provenance", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw Error("invalid policy file " + path.string() + ": " + e.what());
    }
    if (!std::isfinite(policy.threshold)) {
        throw Error("invalid policy file " + path.string() + ": threshold not finite");
    }
    if (policy.expected_deferral_fraction < 0.0 ||
        policy.expected_deferral_fraction > 1.0) {
        throw Error("invalid policy file " + path.string() +
                    ": expected_deferral_fraction outside [0, 1]");
    }
    return policy;
}

} // namespace cascade
