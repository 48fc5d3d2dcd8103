#include "cascade/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cascade {

std::string kind_name(UncertaintyKind kind) {
    switch (kind) {
    case UncertaintyKind::Margin: return "margin";
    case UncertaintyKind::Entropy: return "entropy";
    case UncertaintyKind::SeqMargin: return "seq_margin";
    case UncertaintyKind::CommitteeMargin: return "committee_margin";
    case UncertaintyKind::CommitteeEntropy: return "committee_entropy";
    case UncertaintyKind::Churn: return "churn";
    case UncertaintyKind::CommitteeChurn: return "committee_churn";
    }
    throw Error("unknown uncertainty kind");
}

UncertaintyKind kind_from_name(const std::string& name) {
    if (name == "margin") return UncertaintyKind::Margin;
    if (name == "entropy") return UncertaintyKind::Entropy;
    if (name == "seq_margin") return UncertaintyKind::SeqMargin;
    if (name == "committee_margin") return UncertaintyKind::CommitteeMargin;
    if (name == "committee_entropy") return UncertaintyKind::CommitteeEntropy;
    if (name == "churn") return UncertaintyKind::Churn;
    if (name == "committee_churn") return UncertaintyKind::CommitteeChurn;
    throw Error("unknown uncertainty kind: " + name);
}

bool kind_needs_committee(UncertaintyKind kind) {
    switch (kind) {
    case UncertaintyKind::Margin:
    case UncertaintyKind::Entropy:
    case UncertaintyKind::SeqMargin:
        return false;
    default:
        return true;
    }
}

UncertaintyKind committee_variant(UncertaintyKind base) {
    switch (base) {
    case UncertaintyKind::Margin: return UncertaintyKind::CommitteeMargin;
    case UncertaintyKind::Entropy: return UncertaintyKind::CommitteeEntropy;
    default:
        throw Error("no committee variant for kind: " + kind_name(base));
    }
}

double ScoreMap::at(const std::string& example_id) const {
    auto it = scores.find(example_id);
    if (it == scores.end()) {
        throw Error("no score for example id: " + example_id);
    }
    return it->second;
}

bool ScoreMap::covers(const ModelRun& run) const {
    if (scores.size() != run.records.size()) return false;
    for (const auto& [id, rec] : run.records) {
        (void)rec;
        if (scores.find(id) == scores.end()) return false;
    }
    return true;
}

double margin_uncertainty(const ClassDistribution& dist) {
    dist.validate();
    double best = -1.0;
    double second = -1.0;
    for (double p : dist.probs) {
        if (p > best) {
            second = best;
            best = p;
        } else if (p > second) {
            second = p;
        }
    }
    return second;
}

double entropy_uncertainty(const ClassDistribution& dist) {
    dist.validate();
    double h = 0.0;
    for (double p : dist.probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    // Rounding can leave a tiny negative on one-hot distributions.
    return std::max(h, 0.0);
}

double seq_margin_uncertainty(const std::vector<TokenDistribution>& tokens) {
    if (tokens.empty()) {
        throw Error("sequence margin of an empty token sequence");
    }
    double gap_sum = 0.0;
    for (const auto& t : tokens) {
        t.validate();
        gap_sum += t.top[0].prob - t.top[1].prob;
    }
    const double mean_gap = gap_sum / static_cast<double>(tokens.size());
    return std::clamp(1.0 - mean_gap, 0.0, 1.0);
}

double record_uncertainty(const PredictionRecord& record, UncertaintyKind base_kind) {
    switch (base_kind) {
    case UncertaintyKind::Margin:
        return margin_uncertainty(record.class_dist());
    case UncertaintyKind::Entropy:
        return entropy_uncertainty(record.class_dist());
    case UncertaintyKind::SeqMargin:
        return seq_margin_uncertainty(record.token_dists());
    default:
        throw Error("kind requires a committee, not a single record: " + kind_name(base_kind));
    }
}

ScoreMap score_run(const ModelRun& run, UncertaintyKind base_kind) {
    if (run.records.empty()) {
        throw Error("cannot score an empty run");
    }
    ScoreMap out;
    out.kind = base_kind;
    out.reference_model_id = run.model_id;
    for (const auto& [id, rec] : run.records) {
        out.scores[id] = record_uncertainty(rec, base_kind);
    }
    return out;
}

ScoreMap committee_average(UncertaintyKind base_kind, const RunSet& committee) {
    if (committee.runs.empty()) {
        throw Error("committee average needs at least one run");
    }
    const UncertaintyKind tagged = committee_variant(base_kind);
    ScoreMap out;
    out.kind = tagged;
    out.reference_model_id = committee.runs.front().model_id;
    const double inv = 1.0 / static_cast<double>(committee.runs.size());
    for (const auto& [id, rec] : committee.runs.front().records) {
        (void)rec;
        double sum = 0.0;
        for (const auto& run : committee.runs) {
            sum += record_uncertainty(run.record(id), base_kind);
        }
        out.scores[id] = sum * inv;
    }
    return out;
}

ScoreMap churn_uncertainty(const ModelRun& reference, const RunSet& committee) {
    if (committee.runs.empty()) {
        throw Error("churn needs at least one committee run");
    }
    for (const auto& run : committee.runs) {
        if (!aligned(reference, run)) {
            throw Error("committee run not aligned with reference: " + run.model_id);
        }
    }
    ScoreMap out;
    out.kind = UncertaintyKind::Churn;
    out.reference_model_id = reference.model_id;
    const double inv = 1.0 / static_cast<double>(committee.runs.size());
    for (const auto& [id, rec] : reference.records) {
        std::size_t disagree = 0;
        for (const auto& run : committee.runs) {
            if (run.record(id).prediction != rec.prediction) ++disagree;
        }
        out.scores[id] = static_cast<double>(disagree) * inv;
    }
    return out;
}

ScoreMap committee_churn_uncertainty(const RunSet& committee) {
    const std::size_t r = committee.runs.size();
    if (r < 2) {
        throw Error("committee churn needs at least 2 runs");
    }
    for (std::size_t i = 1; i < r; ++i) {
        if (!aligned(committee.runs[0], committee.runs[i])) {
            throw Error("committee runs not aligned: " + committee.runs[i].model_id);
        }
    }
    ScoreMap out;
    out.kind = UncertaintyKind::CommitteeChurn;
    out.reference_model_id = committee.runs.front().model_id;
    const std::size_t pairs = r * (r - 1) / 2;
    const double inv = 1.0 / static_cast<double>(pairs);
    for (const auto& [id, rec] : committee.runs.front().records) {
        (void)rec;
        std::size_t disagree = 0;
        for (std::size_t i = 0; i < r; ++i) {
            const auto& pi = committee.runs[i].record(id).prediction;
            for (std::size_t j = i + 1; j < r; ++j) {
                if (committee.runs[j].record(id).prediction != pi) ++disagree;
            }
        }
        out.scores[id] = static_cast<double>(disagree) * inv;
    }
    return out;
}

Table scores_table(const ScoreMap& scores) {
    Table t;
    t.header = {"example_id", "kind", "score"};
    const std::string kname = kind_name(scores.kind);
    for (const auto& [id, score] : scores.scores) {
        t.rows.push_back({id, kname, score});
    }
    return t;
}

} // namespace cascade
