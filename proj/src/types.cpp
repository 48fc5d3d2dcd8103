#include "cascade/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace cascade {

std::size_t count_at_fraction(double fraction, std::size_t n) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw Error("fraction " + std::to_string(fraction) + " outside [0, 1]");
    }
    if (n == 0 || fraction <= 0.0) {
        return 0;
    }
    if (fraction >= 1.0) {
        return n;
    }
    const double raw = fraction * static_cast<double>(n);
    auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    count = std::max<std::size_t>(count, 1);
    return std::min(count, n);
}

void ClassDistribution::validate() const {
    if (probs.size() < 2) {
        throw Error("class distribution needs at least 2 classes, got " +
                    std::to_string(probs.size()));
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error("class probability " + std::to_string(p) + " outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw Error("distribution not normalized: probabilities sum to " + std::to_string(sum));
    }
}

void TokenDistribution::validate() const {
    if (top.size() < 2) {
        throw Error("token with fewer than 2 entries in its top-k list");
    }
    double sum = 0.0;
    double prev = 1.0;
    for (const auto& [token, prob] : top) {
        if (!(prob >= 0.0 && prob <= 1.0)) {
            throw Error("token probability " + std::to_string(prob) + " outside [0, 1]");
        }
        if (prob > prev + 1e-12) {
            throw Error("token probabilities not in descending order");
        }
        prev = prob;
        sum += prob;
    }
    if (sum > 1.0 + 1e-6) {
        throw Error("token probabilities sum to " + std::to_string(sum) + " > 1");
    }
}

std::string to_string(SizeTag tag) {
    switch (tag) {
    case SizeTag::Small: return "SMALL";
    case SizeTag::Base: return "BASE";
    case SizeTag::Large: return "LARGE";
    case SizeTag::Xl3b: return "XL3B";
    case SizeTag::Other: return "OTHER";
    }
    throw Error("unknown size tag");
}

SizeTag size_tag_from_string(const std::string& name) {
    std::string upper = name;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (upper == "SMALL") return SizeTag::Small;
    if (upper == "BASE") return SizeTag::Base;
    if (upper == "LARGE") return SizeTag::Large;
    if (upper == "XL3B" || upper == "3B") return SizeTag::Xl3b;
    if (upper == "OTHER") return SizeTag::Other;
    throw Error("unknown size tag \"" + name + "\"");
}

int size_rank(SizeTag tag) {
    switch (tag) {
    case SizeTag::Small: return 0;
    case SizeTag::Base: return 1;
    case SizeTag::Large: return 2;
    case SizeTag::Xl3b: return 3;
    case SizeTag::Other: return -1;
    }
    return -1;
}

std::string normalize_answer(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (std::ispunct(c)) {
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

bool exact_match(const std::string& prediction, const std::string& gold, bool normalize) {
    if (!normalize) {
        return prediction == gold;
    }
    return normalize_answer(prediction) == normalize_answer(gold);
}

const ClassDistribution& PredictionRecord::class_dist() const {
    if (!is_classification()) {
        throw Error("example " + example_id + " has token distributions, not class probabilities");
    }
    return std::get<ClassDistribution>(output);
}

const std::vector<TokenDistribution>& PredictionRecord::token_dists() const {
    if (is_classification()) {
        throw Error("example " + example_id + " has class probabilities, not token distributions");
    }
    return std::get<std::vector<TokenDistribution>>(output);
}

bool PredictionRecord::require_correct() const {
    if (!correct.has_value()) {
        throw Error("example " + example_id + " has no gold label; correctness unavailable");
    }
    return *correct;
}

const PredictionRecord& ModelRun::record(const std::string& example_id) const {
    auto it = records.find(example_id);
    if (it == records.end()) {
        throw Error("run " + model_id + " has no example " + example_id);
    }
    return it->second;
}

double ModelRun::accuracy() const {
    if (records.empty()) {
        throw Error("run " + model_id + " is empty");
    }
    std::size_t correct = 0;
    for (const auto& [id, rec] : records) {
        correct += rec.require_correct() ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

bool aligned(const ModelRun& a, const ModelRun& b) {
    if (a.records.size() != b.records.size()) {
        return false;
    }
    auto ita = a.records.begin();
    auto itb = b.records.begin();
    for (; ita != a.records.end(); ++ita, ++itb) {
        if (ita->first != itb->first) {
            return false;
        }
    }
    return true;
}

RunSet validate_alignment(std::vector<ModelRun> runs) {
    if (runs.empty()) {
        throw Error("need at least one run");
    }
    for (const auto& run : runs) {
        if (run.records.empty()) {
            throw Error("run " + run.model_id + " is empty");
        }
    }
    const ModelRun& first = runs.front();
    bool all_aligned = true;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (!aligned(first, runs[i])) {
            all_aligned = false;
            break;
        }
    }
    if (!all_aligned) {
        // Union minus intersection across all runs, reported ascending.
        std::map<std::string, std::size_t> seen;
        for (const auto& run : runs) {
            for (const auto& [id, rec] : run.records) {
                ++seen[id];
            }
        }
        std::vector<std::string> odd;
        for (const auto& [id, count] : seen) {
            if (count != runs.size()) {
                odd.push_back(id);
            }
        }
        constexpr std::size_t kCap = 20;
        std::ostringstream msg;
        msg << "runs cover different example ids; " << odd.size() << " mismatched:";
        for (std::size_t i = 0; i < odd.size() && i < kCap; ++i) {
            msg << ' ' << odd[i];
        }
        if (odd.size() > kCap) {
            msg << " ...";
        }
        throw Error(msg.str());
    }
    RunSet set;
    set.runs = std::move(runs);
    return set;
}

} // namespace cascade
