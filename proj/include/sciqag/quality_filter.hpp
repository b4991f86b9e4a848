#pragma once

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sciqag/corpus.hpp"
#include "sciqag/qa_evaluator.hpp"
#include "sciqag/qa_generator.hpp"
#include "sciqag/util.hpp"

namespace sciqag {

struct FilterDecision {
    std::string paper_id;
    int pair_index = 0;
    bool kept = true;
    std::string rule;    // "score_threshold" or "phrase_blacklist"
    std::string detail;
};

enum class Split { train, test };

inline std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

struct SplitAssignment {
    std::string paper_id;
    Split split = Split::train;
};

struct SplitResult {
    std::vector<SplitAssignment> assignments;  // manifest order
    std::vector<std::string> warnings;

    std::map<std::string, Split> by_paper() const {
        std::map<std::string, Split> m;
        for (const auto& a : assignments) m[a.paper_id] = a.split;
        return m;
    }
};

/// Samples `per_category_test` papers per category into the test split
/// without replacement; everything else goes to train. The per-category
/// shuffle is seeded from (seed, category name), so the assignment depends
/// only on the manifest and the seed. Categories smaller than the quota
/// contribute all their papers and a warning.
inline SplitResult assign_splits(const CorpusManifest& manifest, int per_category_test = 50,
                                 std::uint64_t seed = 0) {
    if (per_category_test < 0) throw Error("InvalidArgument", "per_category_test must be >= 0");

    std::map<std::string, std::vector<std::string>> per_category;
    for (const auto& p : manifest.papers) per_category[p.category].push_back(p.id);

    std::map<std::string, Split> chosen;
    SplitResult result;
    for (const auto& category : manifest.categories) {
        auto it = per_category.find(category);
        if (it == per_category.end()) continue;
        std::vector<std::string> ids = it->second;
        DetRng rng(mix64(seed ^ fnv1a64(category)));
        rng.shuffle(ids);
        const std::size_t quota = static_cast<std::size_t>(per_category_test);
        if (ids.size() < quota) {
            result.warnings.push_back("category '" + category + "' has only " +
                                      std::to_string(ids.size()) + " papers for a test quota of " +
                                      std::to_string(per_category_test));
        }
        const std::size_t take = std::min(quota, ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            chosen[ids[i]] = i < take ? Split::test : Split::train;
        }
    }
    for (const auto& p : manifest.papers) {
        result.assignments.push_back({p.id, chosen.at(p.id)});
    }
    return result;
}

/// Test-set rule: a pair is kept iff every RACAR dimension scored at least
/// `threshold`. "Lower than" is strict, so a score equal to the threshold
/// passes. The detail names the dimension that caused a drop.
inline std::vector<FilterDecision> filter_test(const std::vector<RacarScore>& scores,
                                               int threshold = 3) {
    std::vector<FilterDecision> decisions;
    decisions.reserve(scores.size());
    for (const auto& s : scores) {
        if (threshold > s.scale_max) {
            throw Error("ThresholdExceedsScale", "threshold " + std::to_string(threshold) +
                                                     " exceeds scale_max " + std::to_string(s.scale_max));
        }
        FilterDecision d;
        d.paper_id = s.paper_id;
        d.pair_index = s.pair_index;
        d.rule = "score_threshold";
        d.kept = true;
        for (RacarDim dim : kRacarDims) {
            if (s.dim(dim).score < threshold) {
                d.kept = false;
                d.detail = std::string(racar_dim_name(dim)) + " scored " +
                           std::to_string(s.dim(dim).score) + " < " + std::to_string(threshold);
                break;
            }
        }
        if (d.kept) {
            d.detail = "min score " + std::to_string(s.min_score()) + " >= " + std::to_string(threshold);
        }
        decisions.push_back(std::move(d));
    }
    return decisions;
}

namespace detail {

inline bool phrase_match(std::string_view text, std::string_view phrase, bool word_boundary) {
    const std::string hay = to_lower(text);
    const std::string needle = to_lower(phrase);
    if (needle.empty()) return false;
    std::size_t pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        if (!word_boundary) return true;
        const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(hay[pos - 1]));
        const std::size_t end = pos + needle.size();
        const bool right_ok = end >= hay.size() || !std::isalnum(static_cast<unsigned char>(hay[end]));
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

}  // namespace detail

/// Train-set rule: a pair is dropped when its question or answer contains a
/// blacklisted phrase. Matching is case-insensitive plain substring by
/// default ("This papering technique" drops under "this paper");
/// word-boundary matching is available behind the flag.
inline std::vector<FilterDecision> filter_train(
    const std::string& paper_id, const std::vector<QaPair>& pairs,
    const std::vector<std::string>& blacklist = {"this paper", "this study"},
    bool word_boundary = false) {
    std::vector<FilterDecision> decisions;
    decisions.reserve(pairs.size());
    for (const auto& pair : pairs) {
        FilterDecision d;
        d.paper_id = paper_id;
        d.pair_index = pair.index;
        d.rule = "phrase_blacklist";
        d.kept = true;
        for (const auto& phrase : blacklist) {
            if (detail::phrase_match(pair.question, phrase, word_boundary)) {
                d.kept = false;
                d.detail = "matched \"" + phrase + "\" in question";
                break;
            }
            if (detail::phrase_match(pair.answer, phrase, word_boundary)) {
                d.kept = false;
                d.detail = "matched \"" + phrase + "\" in answer";
                break;
            }
        }
        if (d.kept) d.detail = "no blacklisted phrase";
        decisions.push_back(std::move(d));
    }
    return decisions;
}

// ---------------------------------------------------------------------------
// Persistence for the audit log and the split assignment.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json decision_to_json(const FilterDecision& d) {
    return nlohmann::ordered_json{{"paper_id", d.paper_id},
                                  {"pair_index", d.pair_index},
                                  {"kept", d.kept},
                                  {"rule", d.rule},
                                  {"detail", d.detail}};
}

inline FilterDecision decision_from_json(const nlohmann::json& doc) {
    FilterDecision d;
    d.paper_id = doc.at("paper_id").get<std::string>();
    d.pair_index = doc.at("pair_index").get<int>();
    d.kept = doc.at("kept").get<bool>();
    d.rule = doc.at("rule").get<std::string>();
    d.detail = doc.at("detail").get<std::string>();
    return d;
}

inline nlohmann::ordered_json splits_to_json(const SplitResult& splits, std::uint64_t seed,
                                             int per_category_test) {
    nlohmann::ordered_json doc;
    doc["seed"] = seed;
    doc["per_category_test"] = per_category_test;
    doc["assignments"] = nlohmann::ordered_json::array();
    for (const auto& a : splits.assignments) {
        doc["assignments"].push_back(
            {{"paper_id", a.paper_id}, {"split", std::string(split_name(a.split))}});
    }
    doc["warnings"] = splits.warnings;
    return doc;
}

inline SplitResult splits_from_json(const nlohmann::json& doc) {
    SplitResult result;
    for (const auto& a : doc.at("assignments")) {
        SplitAssignment sa;
        sa.paper_id = a.at("paper_id").get<std::string>();
        sa.split = a.at("split").get<std::string>() == "test" ? Split::test : Split::train;
        result.assignments.push_back(std::move(sa));
    }
    for (const auto& w : doc.at("warnings")) result.warnings.push_back(w.get<std::string>());
    return result;
}

}  // namespace sciqag
