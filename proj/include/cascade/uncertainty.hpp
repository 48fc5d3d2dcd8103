#pragma once

#include "cascade/log_io.hpp"
#include "cascade/types.hpp"

#include <map>
#include <string>

namespace cascade {

/// Every score is oriented so that HIGHER means MORE uncertain; a fully
/// confident or fully agreeing input scores 0.
enum class UncertaintyKind {
    Margin,
    Entropy,
    SeqMargin,
    CommitteeMargin,
    CommitteeEntropy,
    Churn,
    CommitteeChurn,
};

std::string kind_name(UncertaintyKind kind);
UncertaintyKind kind_from_name(const std::string& name);

/// Churn and committee variants need extra runs beyond the reference.
bool kind_needs_committee(UncertaintyKind kind);

/// Margin -> CommitteeMargin etc.; errors on kinds with no such variant.
UncertaintyKind committee_variant(UncertaintyKind base);

/// Per-example uncertainty scores for one reference run (or committee).
struct ScoreMap {
    UncertaintyKind kind = UncertaintyKind::Margin;
    std::string reference_model_id;
    std::map<std::string, double> scores;

    double at(const std::string& example_id) const;

    /// True when the score domain is exactly the run's example set.
    bool covers(const ModelRun& run) const;
};

/// Probability of the second most likely class. 0 when certain, up to 0.5.
double margin_uncertainty(const ClassDistribution& dist);

/// Shannon entropy, natural log, 0·ln 0 = 0. Up to ln K.
double entropy_uncertainty(const ClassDistribution& dist);

/// One minus the mean per-token gap between the two top token
/// probabilities. 0 when every token is certain, up to 1.
double seq_margin_uncertainty(const std::vector<TokenDistribution>& tokens);

/// Dispatches Margin / Entropy / SeqMargin on one record.
double record_uncertainty(const PredictionRecord& record, UncertaintyKind base_kind);

/// Scores every example of a run with a base (non-committee) kind.
ScoreMap score_run(const ModelRun& run, UncertaintyKind base_kind);

/// Arithmetic mean of the base score across committee runs; the result is
/// tagged with the committee variant of `base_kind`.
ScoreMap committee_average(UncertaintyKind base_kind, const RunSet& committee);

/// Fraction of committee runs predicting differently from the reference.
ScoreMap churn_uncertainty(const ModelRun& reference, const RunSet& committee);

/// Fraction of unordered committee run pairs that disagree per example.
/// Needs at least 2 runs.
ScoreMap committee_churn_uncertainty(const RunSet& committee);

/// CSV export: example_id, kind, score.
Table scores_table(const ScoreMap& scores);

} // namespace cascade
