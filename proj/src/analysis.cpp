#include "cascade/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cascade {

namespace {

struct Ranked {
    const std::string* id;
    double score;
};

// Deferral order: most uncertain first, ties broken by ascending id so
// every analysis is invariant under input permutation.
std::vector<Ranked> rank_descending(const ModelRun& run, const ScoreMap& scores) {
    if (!scores.covers(run)) {
        throw Error("scores do not cover the run's example ids");
    }
    std::vector<Ranked> ranked;
    ranked.reserve(run.records.size());
    for (const auto& [id, rec] : run.records) {
        (void)rec;
        ranked.push_back({&id, scores.at(id)});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        return *a.id < *b.id;
    });
    return ranked;
}

void require_aligned_gold(const ModelRun& small, const ModelRun& large) {
    if (!aligned(small, large)) {
        throw Error("runs cover different example ids: " + small.model_id + " vs " +
                    large.model_id);
    }
    for (const auto& [id, rec] : small.records) {
        rec.require_correct();
        large.record(id).require_correct();
    }
}

std::vector<double> fraction_grid(double step) {
    if (!(step > 0.0) || step > 1.0) {
        throw Error("grid step must be in (0, 1]");
    }
    std::vector<double> grid;
    for (std::size_t k = 0;; ++k) {
        const double f = static_cast<double>(k) * step;
        if (f >= 1.0 - 1e-12) break;
        grid.push_back(f);
    }
    grid.push_back(1.0);
    return grid;
}

struct FourWay {
    std::size_t both_correct = 0;
    std::size_t both_wrong = 0;
    std::size_t only_large = 0;
    std::size_t only_small = 0;

    std::size_t total() const { return both_correct + both_wrong + only_large + only_small; }

    void add(bool small_ok, bool large_ok) {
        if (small_ok && large_ok) ++both_correct;
        else if (!small_ok && !large_ok) ++both_wrong;
        else if (large_ok) ++only_large;
        else ++only_small;
    }
};

} // namespace

std::string direction_name(ThresholdDirection direction) {
    return direction == ThresholdDirection::AtMost ? "at_most" : "at_least";
}

ThresholdDirection direction_from_name(const std::string& name) {
    if (name == "at_most") return ThresholdDirection::AtMost;
    if (name == "at_least") return ThresholdDirection::AtLeast;
    throw Error("unknown threshold direction: " + name);
}

std::string bucket_name(CorrectnessBucket bucket) {
    switch (bucket) {
    case CorrectnessBucket::SmallCorrect: return "small_correct";
    case CorrectnessBucket::SmallWrong: return "small_wrong";
    case CorrectnessBucket::OnlyPartnerCorrect: return "only_partner_correct";
    case CorrectnessBucket::BothWrong: return "both_wrong";
    }
    throw Error("unknown correctness bucket");
}

CorrectnessBucket bucket_from_name(const std::string& name) {
    if (name == "small_correct") return CorrectnessBucket::SmallCorrect;
    if (name == "small_wrong") return CorrectnessBucket::SmallWrong;
    if (name == "only_partner_correct") return CorrectnessBucket::OnlyPartnerCorrect;
    if (name == "both_wrong") return CorrectnessBucket::BothWrong;
    throw Error("unknown correctness bucket: " + name);
}

std::int64_t Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

SwitcherCurve switcher_curve(const ModelRun& small, const ModelRun& large,
                             const ScoreMap& scores, double grid_step) {
    require_aligned_gold(small, large);
    const auto grid = fraction_grid(grid_step);
    const auto ranked = rank_descending(small, scores);
    const std::size_t n = ranked.size();

    // prefix[k] = correct count after deferring the top k examples.
    std::int64_t small_total = 0;
    for (const auto& [id, rec] : small.records) {
        (void)id;
        if (rec.require_correct()) ++small_total;
    }
    std::vector<std::int64_t> prefix(n + 1);
    prefix[0] = small_total;
    for (std::size_t k = 0; k < n; ++k) {
        const std::string& id = *ranked[k].id;
        const std::int64_t delta = (large.record(id).require_correct() ? 1 : 0) -
                                   (small.record(id).require_correct() ? 1 : 0);
        prefix[k + 1] = prefix[k] + delta;
    }

    SwitcherCurve curve;
    curve.fractions = grid;
    curve.ranking_kind = scores.kind;
    curve.n_examples = n;
    curve.accuracy.reserve(grid.size());
    const double dn = static_cast<double>(n);
    for (double f : grid) {
        const std::size_t k = count_at_fraction(f, n);
        curve.accuracy.push_back(static_cast<double>(prefix[k]) / dn);
    }
    curve.small_accuracy = static_cast<double>(prefix[0]) / dn;
    curve.large_accuracy = static_cast<double>(prefix[n]) / dn;
    return curve;
}

HumpReport hump(const SwitcherCurve& curve) {
    if (curve.fractions.empty() || curve.fractions.size() != curve.accuracy.size()) {
        throw Error("malformed switcher curve");
    }
    std::size_t peak = 0;
    for (std::size_t i = 1; i < curve.accuracy.size(); ++i) {
        if (curve.accuracy[i] > curve.accuracy[peak]) peak = i;
    }
    HumpReport report;
    report.peak_fraction = curve.fractions[peak];
    report.peak_accuracy = curve.accuracy[peak];
    report.hump_size =
        report.peak_accuracy - std::max(curve.small_accuracy, curve.large_accuracy);
    return report;
}

double average_concavity(const SwitcherCurve& curve) {
    if (curve.fractions.size() != curve.accuracy.size()) {
        throw Error("malformed switcher curve");
    }
    if (curve.fractions.size() < 3) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 1; i + 1 < curve.fractions.size(); ++i) {
        const double f = curve.fractions[i];
        const double chord = (1.0 - f) * curve.small_accuracy + f * curve.large_accuracy;
        sum += curve.accuracy[i] - chord;
    }
    return sum / static_cast<double>(curve.fractions.size() - 2);
}

BucketProfile bucket_profile(const ModelRun& small, const ModelRun& large,
                             const ScoreMap& scores, std::vector<double> thresholds,
                             ThresholdDirection direction) {
    require_aligned_gold(small, large);
    if (!scores.covers(small)) {
        throw Error("scores do not cover the run's example ids");
    }
    std::sort(thresholds.begin(), thresholds.end());

    BucketProfile profile;
    profile.direction = direction;
    for (double t : thresholds) {
        FourWay counts;
        for (const auto& [id, rec] : small.records) {
            const double s = scores.at(id);
            const bool in = direction == ThresholdDirection::AtMost ? s <= t : s >= t;
            if (!in) continue;
            counts.add(rec.require_correct(), large.record(id).require_correct());
        }
        BucketProfile::Row row;
        row.threshold = t;
        row.n = counts.total();
        if (row.n > 0) {
            const double dn = static_cast<double>(row.n);
            row.both_correct = static_cast<double>(counts.both_correct) / dn;
            row.both_wrong = static_cast<double>(counts.both_wrong) / dn;
            row.only_large_correct = static_cast<double>(counts.only_large) / dn;
            row.only_small_correct = static_cast<double>(counts.only_small) / dn;
        }
        profile.rows.push_back(row);
    }
    return profile;
}

Table percentile_accuracy(const std::vector<ModelRun>& runs, const ScoreMap& ranking,
                          std::size_t buckets) {
    if (runs.empty()) {
        throw Error("percentile accuracy needs at least one run");
    }
    for (const auto& run : runs) {
        if (!aligned(runs.front(), run)) {
            throw Error("runs cover different example ids: " + run.model_id);
        }
        for (const auto& [id, rec] : run.records) {
            (void)id;
            rec.require_correct();
        }
    }
    const std::size_t n = runs.front().records.size();
    if (buckets == 0 || buckets > n) {
        throw Error("bucket count must be in [1, N]");
    }
    if (!ranking.covers(runs.front())) {
        throw Error("scores do not cover the run's example ids");
    }

    // Ascending score here: bucket 1 is the most certain group. Ties keep
    // ascending example_id, so a constant ranking degrades to id order.
    auto ranked = rank_descending(runs.front(), ranking);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score < b.score;
        return *a.id < *b.id;
    });

    Table t;
    t.header = {"bucket", "n"};
    for (const auto& run : runs) t.header.push_back(run.model_id);

    const std::size_t base = n / buckets;
    const std::size_t extra = n % buckets;
    std::size_t cursor = 0;
    for (std::size_t b = 0; b < buckets; ++b) {
        const std::size_t size = base + (b < extra ? 1 : 0);
        std::vector<Table::Cell> row;
        row.push_back(static_cast<std::int64_t>(b + 1));
        row.push_back(static_cast<std::int64_t>(size));
        for (const auto& run : runs) {
            std::size_t correct = 0;
            for (std::size_t i = cursor; i < cursor + size; ++i) {
                if (run.record(*ranked[i].id).require_correct()) ++correct;
            }
            row.push_back(static_cast<double>(correct) / static_cast<double>(size));
        }
        t.rows.push_back(std::move(row));
        cursor += size;
    }
    return t;
}

QuantileChurnTable churn_by_quantile(const RunSet& target, const ScoreMap& ranking) {
    const std::size_t r = target.runs.size();
    if (r < 2) {
        throw Error("churn table needs at least 2 runs");
    }
    for (const auto& run : target.runs) {
        if (!aligned(target.runs.front(), run)) {
            throw Error("runs cover different example ids: " + run.model_id);
        }
    }
    const auto ranked = rank_descending(target.runs.front(), ranking);
    const std::size_t n = ranked.size();

    // Cuts measured from the most uncertain end; quantile q of the score
    // corresponds to the top (1-q) fraction.
    const std::size_t c5 = count_at_fraction(0.01, n);
    const std::size_t c4 = std::max(c5, count_at_fraction(0.10, n));
    const std::size_t c3 = std::max(c4, count_at_fraction(0.25, n));
    const std::size_t c2 = std::max(c3, count_at_fraction(0.50, n));
    const std::array<std::pair<std::size_t, std::size_t>, 5> spans = {{
        {c2, n},  // Q1: most certain half
        {c3, c2}, // Q2
        {c4, c3}, // Q3
        {c5, c4}, // Q4
        {0, c5},  // Q5: most uncertain 1%
    }};
    const std::array<std::pair<double, double>, 5> quantiles = {{
        {0.0, 0.50},
        {0.50, 0.75},
        {0.75, 0.90},
        {0.90, 0.99},
        {0.99, 1.0},
    }};

    const std::size_t pairs = r * (r - 1) / 2;
    QuantileChurnTable table;
    for (std::size_t b = 0; b < 5; ++b) {
        auto& bucket = table.buckets[b];
        bucket.name = "Q" + std::to_string(b + 1);
        bucket.lo_quantile = quantiles[b].first;
        bucket.hi_quantile = quantiles[b].second;
        const auto [lo, hi] = spans[b];
        bucket.n = hi - lo;
        if (bucket.n == 0) continue; // flagged empty: no statistics

        std::vector<double> per_pair;
        per_pair.reserve(pairs);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = i + 1; j < r; ++j) {
                std::size_t disagree = 0;
                for (std::size_t k = lo; k < hi; ++k) {
                    const std::string& id = *ranked[k].id;
                    if (target.runs[i].record(id).prediction !=
                        target.runs[j].record(id).prediction) {
                        ++disagree;
                    }
                }
                per_pair.push_back(static_cast<double>(disagree) /
                                   static_cast<double>(bucket.n));
            }
        }
        const double mean = std::accumulate(per_pair.begin(), per_pair.end(), 0.0) /
                            static_cast<double>(pairs);
        bucket.churn_mean = mean;
        if (pairs > 1) {
            double ss = 0.0;
            for (double v : per_pair) ss += (v - mean) * (v - mean);
            const double var = ss / static_cast<double>(pairs - 1);
            bucket.churn_se = std::sqrt(var / static_cast<double>(pairs));
        }
    }
    return table;
}

std::optional<PairStats> pair_stats(const ModelRun& small, const ModelRun& large,
                                    const SwitcherCurve& curve,
                                    std::optional<GapInterval> gap_filter) {
    require_aligned_gold(small, large);
    PairStats stats;
    stats.small_id = small.model_id;
    stats.large_id = large.model_id;
    stats.accuracy_gap = std::abs(curve.large_accuracy - curve.small_accuracy);
    std::size_t differ = 0;
    for (const auto& [id, rec] : small.records) {
        if (large.record(id).prediction != rec.prediction) ++differ;
    }
    stats.disagreement_fraction =
        static_cast<double>(differ) / static_cast<double>(small.records.size());
    stats.hump_size = hump(curve).hump_size;
    if (gap_filter &&
        (stats.accuracy_gap < gap_filter->lo || stats.accuracy_gap > gap_filter->hi)) {
        return std::nullopt;
    }
    return stats;
}

Histogram uncertainty_histogram(const ModelRun& run, const ModelRun& partner,
                                const ScoreMap& scores, CorrectnessBucket bucket,
                                const std::vector<double>& edges) {
    require_aligned_gold(run, partner);
    if (!scores.covers(run)) {
        throw Error("scores do not cover the run's example ids");
    }
    if (edges.size() < 2) {
        throw Error("histogram needs at least 2 bin edges");
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) {
            throw Error("histogram bin edges must be strictly increasing");
        }
    }
    Histogram h;
    h.edges = edges;
    h.counts.assign(edges.size() - 1, 0);
    for (const auto& [id, rec] : run.records) {
        const bool ours = rec.require_correct();
        const bool theirs = partner.record(id).require_correct();
        bool in = false;
        switch (bucket) {
        case CorrectnessBucket::SmallCorrect: in = ours; break;
        case CorrectnessBucket::SmallWrong: in = !ours; break;
        case CorrectnessBucket::OnlyPartnerCorrect: in = theirs && !ours; break;
        case CorrectnessBucket::BothWrong: in = !ours && !theirs; break;
        }
        if (!in) continue;
        const double s = scores.at(id);
        if (s < edges.front() || s > edges.back()) continue;
        // upper_bound lands one past the bin; the max score joins the last bin.
        auto it = std::upper_bound(edges.begin(), edges.end(), s);
        std::size_t idx = static_cast<std::size_t>(it - edges.begin());
        idx = idx == 0 ? 0 : idx - 1;
        if (idx >= h.counts.size()) idx = h.counts.size() - 1;
        ++h.counts[idx];
    }
    return h;
}

std::vector<double> log_spaced_edges(double lo, double hi, std::size_t bins) {
    if (!(lo > 0.0) || !(hi > lo) || bins == 0) {
        throw Error("log-spaced edges need 0 < lo < hi and at least 1 bin");
    }
    std::vector<double> edges(bins + 1);
    const double llo = std::log(lo);
    const double lhi = std::log(hi);
    for (std::size_t i = 0; i <= bins; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(bins);
        edges[i] = std::exp(llo + t * (lhi - llo));
    }
    edges.front() = lo;
    edges.back() = hi;
    return edges;
}

Table curve_table(const SwitcherCurve& curve) {
    Table t;
    t.header = {"fraction", "accuracy", "small_accuracy", "large_accuracy", "ranking_kind"};
    const std::string kname = kind_name(curve.ranking_kind);
    for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
        t.rows.push_back({curve.fractions[i], curve.accuracy[i], curve.small_accuracy,
                          curve.large_accuracy, kname});
    }
    return t;
}

Table bucket_profile_table(const BucketProfile& profile) {
    Table t;
    t.header = {"threshold", "direction", "n",
                "both_correct", "both_wrong", "only_large_correct", "only_small_correct"};
    const std::string dname = direction_name(profile.direction);
    for (const auto& row : profile.rows) {
        if (row.n == 0) {
            t.rows.push_back({row.threshold, dname, std::int64_t{0},
                              std::string{}, std::string{}, std::string{}, std::string{}});
        } else {
            t.rows.push_back({row.threshold, dname, static_cast<std::int64_t>(row.n),
                              row.both_correct, row.both_wrong, row.only_large_correct,
                              row.only_small_correct});
        }
    }
    return t;
}

Table churn_table(const QuantileChurnTable& table) {
    Table t;
    t.header = {"bucket", "lo_quantile", "hi_quantile", "n", "churn_mean", "churn_se"};
    for (const auto& b : table.buckets) {
        if (b.n == 0) {
            t.rows.push_back({b.name, b.lo_quantile, b.hi_quantile, std::int64_t{0},
                              std::string{}, std::string{}});
        } else {
            t.rows.push_back({b.name, b.lo_quantile, b.hi_quantile,
                              static_cast<std::int64_t>(b.n), b.churn_mean, b.churn_se});
        }
    }
    return t;
}

Table histogram_table(const Histogram& histogram) {
    Table t;
    t.header = {"bin_lo", "bin_hi", "count"};
    for (std::size_t i = 0; i < histogram.counts.size(); ++i) {
        t.rows.push_back({histogram.edges[i], histogram.edges[i + 1], histogram.counts[i]});
    }
    return t;
}

} // namespace cascade
