#pragma once

#include "cascade/log_io.hpp"
#include "cascade/types.hpp"
#include "cascade/uncertainty.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace cascade {

/// Accuracy of the small/large switch as a function of the deferred
/// fraction. fractions and accuracy are parallel; fractions ascend and
/// always include 0 and 1.
struct SwitcherCurve {
    std::vector<double> fractions;
    std::vector<double> accuracy;
    double small_accuracy = 0.0;
    double large_accuracy = 0.0;
    UncertaintyKind ranking_kind = UncertaintyKind::Margin;
    std::size_t n_examples = 0;
};

struct HumpReport {
    double hump_size = 0.0; // may be <= 0: no hump
    double peak_fraction = 0.0;
    double peak_accuracy = 0.0;
};

enum class ThresholdDirection { AtMost, AtLeast };

std::string direction_name(ThresholdDirection direction);
ThresholdDirection direction_from_name(const std::string& name);

/// Four-way correctness split at a series of score thresholds. Rows with
/// n == 0 carry no fractions.
struct BucketProfile {
    struct Row {
        double threshold = 0.0;
        std::size_t n = 0;
        double both_correct = 0.0;
        double both_wrong = 0.0;
        double only_large_correct = 0.0;
        double only_small_correct = 0.0;
    };
    ThresholdDirection direction = ThresholdDirection::AtMost;
    std::vector<Row> rows;
};

/// Q1 is the most certain half, Q5 the most uncertain 1%.
struct QuantileChurnTable {
    struct Bucket {
        std::string name;
        double lo_quantile = 0.0;
        double hi_quantile = 0.0;
        std::size_t n = 0; // 0 flags an empty bucket
        double churn_mean = 0.0;
        double churn_se = 0.0;
    };
    std::array<Bucket, 5> buckets;
};

struct PairStats {
    std::string small_id;
    std::string large_id;
    double accuracy_gap = 0.0;
    double disagreement_fraction = 0.0;
    double hump_size = 0.0;
};

/// Closed interval on accuracy_gap used to select comparable pairs.
struct GapInterval {
    double lo = 0.005;
    double hi = 0.01;
};

struct Histogram {
    std::vector<double> edges; // strictly increasing, size = counts.size() + 1
    std::vector<std::int64_t> counts;

    std::int64_t total() const;
};

enum class CorrectnessBucket { SmallCorrect, SmallWrong, OnlyPartnerCorrect, BothWrong };

std::string bucket_name(CorrectnessBucket bucket);
CorrectnessBucket bucket_from_name(const std::string& name);

/// Examples ranked by score descending (ties by ascending id); at each
/// grid fraction f the top ceil(f*N) take the large run's correctness.
SwitcherCurve switcher_curve(const ModelRun& small, const ModelRun& large,
                             const ScoreMap& scores, double grid_step = 0.01);

HumpReport hump(const SwitcherCurve& curve);

/// Mean excess of the curve over the random-routing chord at interior
/// grid fractions. The chord is the exact expectation of deferring a
/// uniformly random subset of the same size.
double average_concavity(const SwitcherCurve& curve);

BucketProfile bucket_profile(const ModelRun& small, const ModelRun& large,
                             const ScoreMap& scores, std::vector<double> thresholds,
                             ThresholdDirection direction = ThresholdDirection::AtMost);

/// Equal-count buckets by ascending score; remainder examples go one
/// each to the leading buckets. Columns: bucket, n, then one accuracy
/// column per run (header = model_id).
Table percentile_accuracy(const std::vector<ModelRun>& runs, const ScoreMap& ranking,
                          std::size_t buckets = 100);

QuantileChurnTable churn_by_quantile(const RunSet& target, const ScoreMap& ranking);

std::optional<PairStats> pair_stats(const ModelRun& small, const ModelRun& large,
                                    const SwitcherCurve& curve,
                                    std::optional<GapInterval> gap_filter = {});

/// Score histogram over the examples in one correctness bucket; bins are
/// half-open [lo, hi), the last closed. Scores outside the edges fall out.
Histogram uncertainty_histogram(const ModelRun& run, const ModelRun& partner,
                                const ScoreMap& scores, CorrectnessBucket bucket,
                                const std::vector<double>& edges);

/// bins+1 log-spaced edges from lo to hi; requires 0 < lo < hi.
std::vector<double> log_spaced_edges(double lo, double hi, std::size_t bins);

Table curve_table(const SwitcherCurve& curve);
Table bucket_profile_table(const BucketProfile& profile);
Table churn_table(const QuantileChurnTable& table);
Table histogram_table(const Histogram& histogram);

} // namespace cascade
