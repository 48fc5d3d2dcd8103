#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cascade {

/// Validation or input error; the CLI maps these to exit code 1.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Number of examples in the "top f" slice of n examples.
/// Ceiling rule: f = 1 covers everything and any f > 0 covers at least one
/// example. The 1e-9 nudge keeps grid fractions like 29 * 0.01 from
/// spilling into the next integer.
std::size_t count_at_fraction(double fraction, std::size_t n);

/// Softmax class scores for one example. Entries sum to 1 within 1e-6.
struct ClassDistribution {
    std::vector<double> probs;

    void validate() const;
    bool operator==(const ClassDistribution&) const = default;
};

struct TokenProb {
    std::string token;
    double prob = 0.0;

    bool operator==(const TokenProb&) const = default;
};

/// Top-k slice of one decoding step's token distribution, descending by
/// probability. k >= 2 so the per-token margin is always defined; the sum
/// may be below 1 because of the truncation.
struct TokenDistribution {
    std::vector<TokenProb> top;

    void validate() const;
    bool operator==(const TokenDistribution&) const = default;
};

enum class SizeTag { Small, Base, Large, Xl3b, Other };

std::string to_string(SizeTag tag);
SizeTag size_tag_from_string(const std::string& name);

/// Rank used to order model sizes when pairing runs (Small < Base < Large
/// < Xl3b). Other has no rank and never participates in size pairing.
int size_rank(SizeTag tag);

/// Exact-match correctness. With normalize set, both sides are lowercased
/// and stripped of punctuation with whitespace collapsed before comparing.
bool exact_match(const std::string& prediction, const std::string& gold, bool normalize = false);
std::string normalize_answer(const std::string& text);

/// One model's output on one example. Holds either a class distribution
/// (classification) or per-token distributions (seq2seq), never both.
/// `gold` and `correct` are absent for unlabeled (live) traffic.
struct PredictionRecord {
    std::string example_id;
    std::string prediction;
    std::optional<std::string> gold;
    std::variant<ClassDistribution, std::vector<TokenDistribution>> output;
    std::optional<std::vector<std::string>> labels;
    std::optional<bool> correct;

    bool is_classification() const { return std::holds_alternative<ClassDistribution>(output); }
    const ClassDistribution& class_dist() const;
    const std::vector<TokenDistribution>& token_dists() const;

    /// Correctness flag, or an error naming the example if gold was absent.
    bool require_correct() const;

    bool operator==(const PredictionRecord&) const = default;
};

/// All records of one (model size, retraining index) over a dataset split.
/// Keyed by example_id, so iteration order is always ascending id.
struct ModelRun {
    std::string model_id;
    SizeTag size_tag = SizeTag::Other;
    int run_index = 0;
    std::map<std::string, PredictionRecord> records;

    std::size_t size() const { return records.size(); }
    const PredictionRecord& record(const std::string& example_id) const;

    /// Mean correctness; requires gold on every record.
    double accuracy() const;

    bool operator==(const ModelRun&) const = default;
};

/// A set of runs over the same example set. Construct via
/// validate_alignment, which is the only place alignment is checked.
struct RunSet {
    std::vector<ModelRun> runs;

    std::size_t size() const { return runs.size(); }
    bool empty() const { return runs.empty(); }
    const ModelRun& operator[](std::size_t i) const { return runs[i]; }

    bool operator==(const RunSet&) const = default;
};

/// Checks that all runs cover the same example ids and wraps them in a
/// RunSet. Rejects empty runs and mismatched id sets; the error message
/// lists up to 20 ids from the symmetric difference.
RunSet validate_alignment(std::vector<ModelRun> runs);

/// True when both runs cover exactly the same example ids.
bool aligned(const ModelRun& a, const ModelRun& b);

} // namespace cascade
