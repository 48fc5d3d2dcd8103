#pragma once

#include "cascade/analysis.hpp"
#include "cascade/uncertainty.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace cascade {

/// Deployable deferral rule: defer exactly when score >= threshold.
struct RoutingPolicy {
    UncertaintyKind kind = UncertaintyKind::Margin;
    double threshold = 0.0;
    double expected_deferral_fraction = 0.0;
    std::string provenance;
};

bool should_defer(const RoutingPolicy& policy, double uncertainty);

/// Smallest threshold t with |{score >= t}| <= ceil(f*N). With ties the
/// realized deferral is the closest achievable count not exceeding that
/// budget; expected_deferral_fraction records the realized value.
RoutingPolicy threshold_for_fraction(const ScoreMap& scores, double fraction);

/// Smallest grid fraction whose accuracy reaches the target; nullopt if
/// no grid point does.
std::optional<double> fraction_for_target_accuracy(const SwitcherCurve& curve,
                                                   double target);

void save_policy(const RoutingPolicy& policy, const std::filesystem::path& path);
RoutingPolicy load_policy(const std::filesystem::path& path);

} // namespace cascade
