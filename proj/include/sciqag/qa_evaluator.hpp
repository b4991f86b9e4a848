#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sciqag/corpus.hpp"
#include "sciqag/gateway.hpp"
#include "sciqag/parse_util.hpp"
#include "sciqag/prompts.hpp"
#include "sciqag/qa_generator.hpp"

namespace sciqag {

enum class RacarDim { relevance, agnosticism, completeness, accuracy, reasonableness };

inline constexpr std::array<RacarDim, 5> kRacarDims = {
    RacarDim::relevance, RacarDim::agnosticism, RacarDim::completeness, RacarDim::accuracy,
    RacarDim::reasonableness};

inline std::string_view racar_dim_name(RacarDim d) {
    switch (d) {
        case RacarDim::relevance: return "relevance";
        case RacarDim::agnosticism: return "agnosticism";
        case RacarDim::completeness: return "completeness";
        case RacarDim::accuracy: return "accuracy";
        case RacarDim::reasonableness: return "reasonableness";
    }
    return "";
}

struct DimScore {
    int score = 0;
    std::string reason;
};

struct RacarScore {
    std::string paper_id;
    int pair_index = 0;
    int scale_max = 5;
    DimScore relevance;
    DimScore agnosticism;
    DimScore completeness;
    DimScore accuracy;
    DimScore reasonableness;

    const DimScore& dim(RacarDim d) const {
        switch (d) {
            case RacarDim::relevance: return relevance;
            case RacarDim::agnosticism: return agnosticism;
            case RacarDim::completeness: return completeness;
            case RacarDim::accuracy: return accuracy;
            case RacarDim::reasonableness: return reasonableness;
        }
        return relevance;
    }

    DimScore& dim(RacarDim d) {
        return const_cast<DimScore&>(static_cast<const RacarScore*>(this)->dim(d));
    }

    int min_score() const {
        int m = relevance.score;
        for (RacarDim d : kRacarDims) m = std::min(m, dim(d).score);
        return m;
    }
};

struct CarScore {
    DimScore completeness;
    DimScore accuracy;
    DimScore reasonableness;
};

struct JudgeResponseItem {
    int score = 0;
    std::string reasons;
};

// ---------------------------------------------------------------------------
// Prompt rendering. Relevance and Agnosticism judge questions only,
// Completeness and Accuracy judge QA pairs, Reasonableness judges the
// answers as standalone statements. Agnosticism is the one dimension that
// never sees the paper text.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string questions_json(const QaSet& qa) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : qa.pairs) arr.push_back(p.question);
    return arr.dump();
}

inline std::string qa_pairs_json(const QaSet& qa) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : qa.pairs) arr.push_back({{"question", p.question}, {"answer", p.answer}});
    return arr.dump();
}

inline std::string answers_json(const QaSet& qa) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : qa.pairs) arr.push_back(p.answer);
    return arr.dump();
}

}  // namespace detail

inline std::string render_racar_prompt(const PromptSet& prompts, RacarDim dim,
                                       const PaperRecord& paper, const QaSet& qa_set,
                                       int scale_max = 5) {
    if (qa_set.pairs.empty()) throw Error("EmptySet", "cannot judge an empty QA set");
    const std::string scale = std::to_string(scale_max);
    switch (dim) {
        case RacarDim::relevance:
            return prompts.racar_relevance.render({{"scale_max", scale},
                                                   {"paper_text", paper.full_text},
                                                   {"questions", detail::questions_json(qa_set)}});
        case RacarDim::agnosticism:
            return prompts.racar_agnosticism.render(
                {{"scale_max", scale}, {"questions", detail::questions_json(qa_set)}});
        case RacarDim::completeness:
            return prompts.racar_completeness.render({{"scale_max", scale},
                                                      {"paper_text", paper.full_text},
                                                      {"qa_pairs", detail::qa_pairs_json(qa_set)}});
        case RacarDim::accuracy:
            return prompts.racar_accuracy.render({{"scale_max", scale},
                                                  {"paper_text", paper.full_text},
                                                  {"qa_pairs", detail::qa_pairs_json(qa_set)}});
        case RacarDim::reasonableness:
            return prompts.racar_reasonableness.render({{"scale_max", scale},
                                                        {"paper_text", paper.full_text},
                                                        {"answers", detail::answers_json(qa_set)}});
    }
    throw Error("InvalidArgument", "unknown RACAR dimension");
}

inline std::string render_car_prompt(const PromptSet& prompts, const QaPair& qa) {
    if (qa.question.empty() || qa.answer.empty()) {
        throw Error("EmptySet", "CAR prompt needs a non-empty question and answer");
    }
    nlohmann::ordered_json pair = {{"question", qa.question}, {"answer", qa.answer}};
    return prompts.car.render({{"qa", pair.dump()}});
}

// ---------------------------------------------------------------------------
// Judge output parsing. Tolerates fences, surrounding prose, Python-style
// tuples/quotes; enforces item counts and the configured score scale.
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<int> item_int(const nlohmann::json& v) {
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == static_cast<int>(d)) return static_cast<int>(d);
        return std::nullopt;
    }
    if (v.is_string()) {
        try {
            std::size_t used = 0;
            const int parsed = std::stoi(v.get<std::string>(), &used);
            if (used == v.get<std::string>().size()) return parsed;
        } catch (...) {
        }
    }
    return std::nullopt;
}

inline const nlohmann::json* find_key_ci(const nlohmann::json& obj, std::string_view key) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (to_lower(it.key()) == to_lower(key)) return &it.value();
    }
    return nullptr;
}

/// First balanced region (after repair) that parses as the wanted JSON kind.
inline std::optional<nlohmann::json> first_parseable(std::string_view body, char open, char close,
                                                     bool want_array) {
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t begin = 0;
        const auto region = extract_balanced(body, open, close, pos, &begin);
        if (!region) break;
        try {
            nlohmann::json parsed = nlohmann::json::parse(json_repair(*region));
            if ((want_array && parsed.is_array()) || (!want_array && parsed.is_object())) {
                return parsed;
            }
        } catch (const nlohmann::json::parse_error&) {
        }
        pos = begin + 1;
    }
    return std::nullopt;
}

}  // namespace detail

inline std::vector<JudgeResponseItem> parse_judge_list(std::string_view text, int expected_n,
                                                       int scale_max) {
    const std::string body = strip_code_fences(text);
    const auto arr = detail::first_parseable(body, '[', ']', /*want_array=*/true);
    if (!arr) throw Error("Unparseable", "no JSON list of score dictionaries found");

    std::vector<JudgeResponseItem> items;
    for (const auto& el : *arr) {
        if (!el.is_object()) throw Error("Unparseable", "list element is not a dictionary");
        const nlohmann::json* score = detail::find_key_ci(el, "score");
        if (!score) throw Error("Unparseable", "list element lacks a 'score' field");
        const auto value = detail::item_int(*score);
        if (!value) throw Error("Unparseable", "score is not an integer");
        JudgeResponseItem item;
        item.score = *value;
        if (const nlohmann::json* reasons = detail::find_key_ci(el, "reasons")) {
            if (reasons->is_string()) item.reasons = reasons->get<std::string>();
        } else if (const nlohmann::json* reason = detail::find_key_ci(el, "reason")) {
            if (reason->is_string()) item.reasons = reason->get<std::string>();
        }
        items.push_back(std::move(item));
    }

    if (static_cast<int>(items.size()) != expected_n) {
        throw Error("ItemCountMismatch", "judge returned " + std::to_string(items.size()) +
                                             " items, expected " + std::to_string(expected_n));
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].score < 1 || items[i].score > scale_max) {
            throw Error("ScoreOutOfRange", "item " + std::to_string(i + 1) + " scored " +
                                               std::to_string(items[i].score) + ", scale is 1.." +
                                               std::to_string(scale_max),
                        items[i].score);
        }
    }
    return items;
}

inline CarScore parse_car_output(std::string_view text, int scale_max = 5) {
    const std::string body = strip_code_fences(text);
    const auto obj = detail::first_parseable(body, '{', '}', /*want_array=*/false);
    if (!obj) throw Error("Unparseable", "no dictionary found in CAR response");

    auto read_dim = [&](std::string_view name) -> DimScore {
        const nlohmann::json* value = detail::find_key_ci(*obj, name);
        if (!value) throw Error("MissingDimension", std::string(name));
        DimScore out;
        std::optional<int> score;
        if (value->is_array() && !value->empty()) {
            score = detail::item_int((*value)[0]);
            if (value->size() > 1 && (*value)[1].is_string()) out.reason = (*value)[1].get<std::string>();
        } else if (value->is_object()) {
            if (const nlohmann::json* s = detail::find_key_ci(*value, "score")) score = detail::item_int(*s);
            if (const nlohmann::json* r = detail::find_key_ci(*value, "reason")) {
                if (r->is_string()) out.reason = r->get<std::string>();
            } else if (const nlohmann::json* rs = detail::find_key_ci(*value, "reasons")) {
                if (rs->is_string()) out.reason = rs->get<std::string>();
            }
        } else {
            score = detail::item_int(*value);
        }
        if (!score) throw Error("Unparseable", "no score for dimension " + std::string(name));
        if (*score < 1 || *score > scale_max) {
            throw Error("ScoreOutOfRange", std::string(name) + " scored " + std::to_string(*score) +
                                               ", scale is 1.." + std::to_string(scale_max),
                        *score);
        }
        out.score = *score;
        return out;
    };

    CarScore car;
    car.accuracy = read_dim("Accuracy");
    car.completeness = read_dim("Completeness");
    car.reasonableness = read_dim("Reasonableness");
    return car;
}

// ---------------------------------------------------------------------------
// Evaluation orchestration: one batched judge call per dimension, then a
// deterministic zip by pair index. A dimension whose output stays
// unparseable after the configured retries fails just that dimension;
// the evaluation surfaces PartialDimensions listing them.
// ---------------------------------------------------------------------------

class PartialDimensionsError : public Error {
public:
    PartialDimensionsError(const std::string& paper_id,
                           std::vector<std::pair<RacarDim, std::string>> failures)
        : Error("PartialDimensions", describe(paper_id, failures)), failures_(std::move(failures)) {}

    const std::vector<std::pair<RacarDim, std::string>>& failures() const { return failures_; }

private:
    static std::string describe(const std::string& paper_id,
                                const std::vector<std::pair<RacarDim, std::string>>& failures) {
        std::vector<std::string> parts;
        for (const auto& [dim, kind] : failures) {
            parts.push_back(std::string(racar_dim_name(dim)) + "=" + kind);
        }
        return "paper '" + paper_id + "': " + join(parts, ", ");
    }

    std::vector<std::pair<RacarDim, std::string>> failures_;
};

struct EvaluateOptions {
    int scale_max = 5;
    int judge_retries = 2;  // extra attempts per dimension, only on Unparseable
};

inline std::vector<RacarScore> evaluate_racar(ChatGateway& gateway, const PromptSet& prompts,
                                              const PaperRecord& paper, const QaSet& qa_set,
                                              const EvaluateOptions& opts = {},
                                              const ChatRequest& params = {}) {
    const int n = static_cast<int>(qa_set.pairs.size());
    std::map<RacarDim, std::vector<JudgeResponseItem>> per_dim;
    std::vector<std::pair<RacarDim, std::string>> failures;

    for (RacarDim dim : kRacarDims) {
        ChatRequest req = params;
        req.prompt = render_racar_prompt(prompts, dim, paper, qa_set, opts.scale_max);
        std::string failure_kind;
        for (int attempt = 0; attempt <= opts.judge_retries; ++attempt) {
            try {
                const Completion c = gateway.complete(req, /*bypass_cache=*/attempt > 0);
                per_dim[dim] = parse_judge_list(c.text, n, opts.scale_max);
                failure_kind.clear();
                break;
            } catch (const Error& e) {
                failure_kind = e.kind();
                if (e.kind() != "Unparseable") break;  // structural errors are not retried
            }
        }
        if (!failure_kind.empty()) failures.emplace_back(dim, failure_kind);
    }
    if (!failures.empty()) throw PartialDimensionsError(paper.paper_id, std::move(failures));

    std::vector<RacarScore> scores;
    scores.reserve(n);
    for (int i = 0; i < n; ++i) {
        RacarScore s;
        s.paper_id = paper.paper_id;
        s.pair_index = qa_set.pairs[i].index;
        s.scale_max = opts.scale_max;
        for (RacarDim dim : kRacarDims) {
            s.dim(dim).score = per_dim[dim][i].score;
            s.dim(dim).reason = per_dim[dim][i].reasons;
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

inline CarScore evaluate_car(ChatGateway& gateway, const PromptSet& prompts, const QaPair& qa,
                             int judge_retries = 2, const ChatRequest& params = {}) {
    ChatRequest req = params;
    req.prompt = render_car_prompt(prompts, qa);
    for (int attempt = 0;; ++attempt) {
        try {
            const Completion c = gateway.complete(req, /*bypass_cache=*/attempt > 0);
            return parse_car_output(c.text);
        } catch (const Error& e) {
            if (e.kind() != "Unparseable" || attempt >= judge_retries) throw;
        }
    }
}

// ---------------------------------------------------------------------------
// Persistence: one JSONL line per scored pair,
// {paper_id, pair_index, scale_max, dims:{name:{score,reason}}}.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json racar_to_json(const RacarScore& s) {
    nlohmann::ordered_json dims;
    for (RacarDim d : kRacarDims) {
        dims[std::string(racar_dim_name(d))] = {{"score", s.dim(d).score}, {"reason", s.dim(d).reason}};
    }
    return nlohmann::ordered_json{{"paper_id", s.paper_id},
                                  {"pair_index", s.pair_index},
                                  {"scale_max", s.scale_max},
                                  {"dims", dims}};
}

inline RacarScore racar_from_json(const nlohmann::json& doc) {
    RacarScore s;
    s.paper_id = doc.at("paper_id").get<std::string>();
    s.pair_index = doc.at("pair_index").get<int>();
    s.scale_max = doc.at("scale_max").get<int>();
    for (RacarDim d : kRacarDims) {
        const auto& dim = doc.at("dims").at(std::string(racar_dim_name(d)));
        s.dim(d).score = dim.at("score").get<int>();
        s.dim(d).reason = dim.at("reason").get<std::string>();
    }
    return s;
}

}  // namespace sciqag
