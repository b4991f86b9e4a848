#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sciqag/corpus.hpp"
#include "sciqag/gateway.hpp"
#include "sciqag/prompts.hpp"
#include "sciqag/util.hpp"

namespace sciqag {

struct KeywordSet {
    std::vector<std::string> keywords;
};

struct QaPair {
    int index = 0;  // 1-based, matching the Q1..Qn scaffold
    std::string question;
    std::string answer;
};

struct QaSet {
    std::string paper_id;
    KeywordSet keywords;
    std::vector<QaPair> pairs;
    std::string raw_response;
};

// ---------------------------------------------------------------------------
// Prompt rendering.
// ---------------------------------------------------------------------------

struct RenderedPrompt {
    std::string text;
    bool truncated = false;
    std::size_t chars_dropped = 0;
};

/// Fills the generation template with the paper text. When the rendered
/// prompt would exceed `budget` characters the paper text is cut tail-first
/// until it fits, and the cut is reported.
inline RenderedPrompt render_generation_prompt(const PromptSet& prompts, const PaperRecord& paper,
                                               std::optional<std::size_t> budget = std::nullopt) {
    RenderedPrompt out;
    out.text = prompts.generation.render({{"text", paper.full_text}});
    if (budget && out.text.size() > *budget) {
        const std::size_t overhead = out.text.size() - paper.full_text.size();
        const std::size_t keep = *budget > overhead ? *budget - overhead : 0;
        out.chars_dropped = paper.full_text.size() - keep;
        out.truncated = true;
        out.text = prompts.generation.render({{"text", paper.full_text.substr(0, keep)}});
    }
    return out;
}

/// Serializes keywords and pairs back into the exact response scaffold the
/// generator is instructed to emit. parse_generation_output() of this string
/// reproduces the inputs verbatim.
inline std::string serialize_scaffold(const KeywordSet& keywords, const std::vector<QaPair>& pairs) {
    std::string out = "Keywords: " + join(keywords.keywords, ", ") + "\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const QaPair& p = pairs[i];
        out += "Q" + std::to_string(p.index) + ": " + p.question + "\n";
        out += "A" + std::to_string(p.index) + ": " + p.answer + "\n";
        if (i + 1 != pairs.size()) out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Response parsing. Line-anchored on `Keywords:` / `Q<i>:` / `A<i>:` with
// multi-line capture, tolerant of blank-line variation. Strict mode turns
// every count deviation into an error; lenient mode returns the partial set
// and reports deviations.
// ---------------------------------------------------------------------------

struct ParseIssue {
    std::string kind;
    int index = 0;  // pair index where applicable, else 0
    std::string message;
};

struct ParseReport {
    std::vector<ParseIssue> errors;
    std::vector<ParseIssue> warnings;

    bool ok() const { return errors.empty(); }

    std::string summary() const {
        std::vector<std::string> parts;
        for (const auto& e : errors) parts.push_back(e.kind + "(" + e.message + ")");
        return join(parts, "; ");
    }
};

struct GenerationParse {
    KeywordSet keywords;
    std::vector<QaPair> pairs;
    ParseReport report;

    bool ok() const { return report.ok(); }
};

namespace detail {

/// Marker test for "Q<i>:" / "A<i>:" at the start of a line.
inline std::optional<int> line_marker(std::string_view line, char tag) {
    if (line.empty() || line[0] != tag) return std::nullopt;
    std::size_t i = 1;
    int idx = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
        idx = idx * 10 + (line[i] - '0');
        ++i;
    }
    if (i == 1 || i >= line.size() || line[i] != ':') return std::nullopt;
    return idx;
}

inline std::string strip_trailing_blank(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.pop_back();
    }
    return s;
}

}  // namespace detail

inline GenerationParse parse_generation_output(std::string_view text, int expected_pairs = 10,
                                               int expected_keywords = 15, bool strict = true) {
    GenerationParse out;
    auto issue = [&](bool is_error, std::string kind, int index, std::string message) {
        ParseIssue item{std::move(kind), index, std::move(message)};
        if (is_error) {
            out.report.errors.push_back(std::move(item));
        } else {
            out.report.warnings.push_back(std::move(item));
        }
    };

    const std::vector<std::string> lines = split(std::string(text), '\n');

    bool keywords_seen = false;
    struct Block {
        char tag;
        int index;
        std::string body;
    };
    std::vector<Block> blocks;

    for (const auto& raw_line : lines) {
        std::string_view line = raw_line;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (!keywords_seen && line.rfind("Keywords:", 0) == 0) {
            keywords_seen = true;
            for (auto& part : split(line.substr(9), ',')) {
                std::string kw = trim(part);
                if (kw.size() >= 2 && kw.front() == '[' && kw.back() == ']') {
                    kw = trim(kw.substr(1, kw.size() - 2));
                }
                if (!kw.empty()) out.keywords.keywords.push_back(std::move(kw));
            }
            continue;
        }
        if (auto qi = detail::line_marker(line, 'Q')) {
            blocks.push_back({'Q', *qi, trim(line.substr(line.find(':') + 1))});
            continue;
        }
        if (auto ai = detail::line_marker(line, 'A')) {
            blocks.push_back({'A', *ai, trim(line.substr(line.find(':') + 1))});
            continue;
        }
        if (!blocks.empty()) {
            blocks.back().body += "\n";
            blocks.back().body += line;
        }
    }

    if (!keywords_seen) {
        issue(strict, "MissingKeywordsLine", 0, "no 'Keywords:' line in response");
    } else {
        const int found = static_cast<int>(out.keywords.keywords.size());
        if (found != expected_keywords) {
            issue(strict, "KeywordCountMismatch", 0,
                  "found " + std::to_string(found) + ", expected " + std::to_string(expected_keywords));
        }
        std::set<std::string> seen;
        for (const auto& kw : out.keywords.keywords) {
            if (!seen.insert(to_lower(kw)).second) {
                issue(false, "DuplicateKeyword", 0, "keyword '" + kw + "' repeated");
            }
        }
    }

    // Zip Q/A blocks into pairs.
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].tag != 'Q') {
            issue(strict, "UnpairedQuestion", blocks[i].index,
                  "answer A" + std::to_string(blocks[i].index) + " without a preceding question");
            continue;
        }
        if (i + 1 >= blocks.size() || blocks[i + 1].tag != 'A' || blocks[i + 1].index != blocks[i].index) {
            issue(strict, "UnpairedQuestion", blocks[i].index,
                  "Q" + std::to_string(blocks[i].index) + " has no matching A" +
                      std::to_string(blocks[i].index));
            continue;
        }
        QaPair pair;
        pair.index = blocks[i].index;
        pair.question = detail::strip_trailing_blank(blocks[i].body);
        pair.answer = detail::strip_trailing_blank(blocks[i + 1].body);
        ++i;

        if (pair.question.empty() || pair.answer.empty()) {
            issue(strict, "EmptyField", pair.index,
                  "pair " + std::to_string(pair.index) + " has an empty question or answer");
            continue;
        }
        if (pair.question.back() != '?') {
            issue(false, "QuestionMissingMark", pair.index,
                  "question " + std::to_string(pair.index) + " does not end with '?'");
        }
        out.pairs.push_back(std::move(pair));
    }

    std::sort(out.pairs.begin(), out.pairs.end(),
              [](const QaPair& a, const QaPair& b) { return a.index < b.index; });
    for (std::size_t i = 0; i + 1 < out.pairs.size(); ++i) {
        if (out.pairs[i].index == out.pairs[i + 1].index) {
            issue(strict, "DuplicateIndex", out.pairs[i].index,
                  "pair index " + std::to_string(out.pairs[i].index) + " appears twice");
        }
    }
    if (strict) {
        for (std::size_t i = 0; i < out.pairs.size(); ++i) {
            if (out.pairs[i].index != static_cast<int>(i) + 1) {
                issue(true, "IndexGap", out.pairs[i].index, "pair indices are not contiguous from 1");
                break;
            }
        }
    }
    const int found_pairs = static_cast<int>(out.pairs.size());
    if (found_pairs != expected_pairs) {
        issue(strict, "PairCountMismatch", 0,
              "found " + std::to_string(found_pairs) + ", expected " + std::to_string(expected_pairs));
    }
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end generation for one paper.
// ---------------------------------------------------------------------------

struct GenerateOptions {
    int expected_pairs = 10;
    int expected_keywords = 15;
    bool strict = true;
    int regen_attempts = 2;  // additional attempts after the first failure
    std::optional<std::size_t> prompt_budget;
};

class GenerationError : public Error {
public:
    GenerationError(const std::string& paper_id, int attempts, ParseReport report)
        : Error("GenerationFailed",
                "paper '" + paper_id + "' failed after " + std::to_string(attempts) +
                    " attempt(s): " + report.summary()),
          attempts_(attempts), report_(std::move(report)) {}

    int attempts() const { return attempts_; }
    const ParseReport& report() const { return report_; }

private:
    int attempts_;
    ParseReport report_;
};

struct GenerateResult {
    QaSet qa_set;
    int attempts = 1;
    bool truncated_prompt = false;
    ParseReport report;
};

/// render -> complete -> parse, with up to `regen_attempts` fresh samples
/// (cache bypassed) when parsing fails. The raw response is always retained.
inline GenerateResult generate_qa(ChatGateway& gateway, const PromptSet& prompts,
                                  const PaperRecord& paper, const ChatRequest& params,
                                  const GenerateOptions& opts = {}) {
    const RenderedPrompt prompt = render_generation_prompt(prompts, paper, opts.prompt_budget);
    ChatRequest req = params;
    req.prompt = prompt.text;

    ParseReport last_report;
    const int max_attempts = 1 + std::max(0, opts.regen_attempts);
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        const Completion completion = gateway.complete(req, /*bypass_cache=*/attempt > 1);
        GenerationParse parsed = parse_generation_output(completion.text, opts.expected_pairs,
                                                         opts.expected_keywords, opts.strict);
        if (parsed.ok()) {
            GenerateResult result;
            result.qa_set.paper_id = paper.paper_id;
            result.qa_set.keywords = std::move(parsed.keywords);
            result.qa_set.pairs = std::move(parsed.pairs);
            result.qa_set.raw_response = completion.text;
            result.attempts = attempt;
            result.truncated_prompt = prompt.truncated;
            result.report = std::move(parsed.report);
            return result;
        }
        last_report = std::move(parsed.report);
    }
    throw GenerationError(paper.paper_id, max_attempts, std::move(last_report));
}

// ---------------------------------------------------------------------------
// Persistence: one JSON object per paper, schema
// {paper_id, keywords, pairs:[{index,question,answer}], raw_response_hash}.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json qa_set_to_json(const QaSet& qa) {
    nlohmann::ordered_json doc;
    doc["paper_id"] = qa.paper_id;
    doc["keywords"] = qa.keywords.keywords;
    doc["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : qa.pairs) {
        doc["pairs"].push_back({{"index", p.index}, {"question", p.question}, {"answer", p.answer}});
    }
    doc["raw_response_hash"] = sha256_hex(qa.raw_response);
    return doc;
}

inline QaSet qa_set_from_json(const nlohmann::json& doc) {
    QaSet qa;
    qa.paper_id = doc.at("paper_id").get<std::string>();
    for (const auto& k : doc.at("keywords")) qa.keywords.keywords.push_back(k.get<std::string>());
    for (const auto& p : doc.at("pairs")) {
        QaPair pair;
        pair.index = p.at("index").get<int>();
        pair.question = p.at("question").get<std::string>();
        pair.answer = p.at("answer").get<std::string>();
        qa.pairs.push_back(std::move(pair));
    }
    return qa;
}

}  // namespace sciqag
