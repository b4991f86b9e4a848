#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <regex>
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

// ---------------------------------------------------------------------------
// Numeric source validation. Numbers are compared by canonical form only:
// the claim being audited is verbatim provenance, so matching is exact, with
// no tolerance windows.
// ---------------------------------------------------------------------------

struct NumericToken {
    std::string raw;
    std::string canonical;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct NumericAudit {
    std::size_t total_numbers = 0;
    std::size_t matched_numbers = 0;
    std::optional<double> ratio;  // absent when no numbers were found
    std::size_t answers_total = 0;
    std::size_t answers_with_numbers = 0;
    double answers_with_numbers_fraction = 0.0;
};

/// Canonical decimal form: thousands separators and a trailing '%' dropped,
/// exponents expanded ("1e3" -> "1000"), fractional trailing zeros stripped
/// ("5.20" -> "5.2"), sign dropped on zero. Values too large to expand fall
/// back to a normalized scientific form; canonicalization is idempotent.
inline std::optional<std::string> canonicalize_number(std::string_view raw) {
    std::string s(raw);
    if (!s.empty() && s.back() == '%') s.pop_back();
    s = replace_all(std::move(s), ",", "");
    if (s.empty()) return std::nullopt;

    std::size_t i = 0;
    bool negative = false;
    if (s[i] == '+' || s[i] == '-') {
        negative = s[i] == '-';
        ++i;
    }
    std::string digits;
    long long point = 0;
    bool any_digit = false;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        digits += s[i++];
        ++point;
        any_digit = true;
    }
    if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            digits += s[i++];
            any_digit = true;
        }
    }
    if (!any_digit) return std::nullopt;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        ++i;
        bool exp_neg = false;
        if (i < s.size() && (s[i] == '+' || s[i] == '-')) exp_neg = s[i++] == '-';
        long long exp = 0;
        bool any_exp = false;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            exp = exp * 10 + (s[i++] - '0');
            if (exp > 1000000) exp = 1000000;  // clamp pathological exponents
            any_exp = true;
        }
        if (!any_exp) return std::nullopt;
        point += exp_neg ? -exp : exp;
    }
    if (i != s.size()) return std::nullopt;

    // Strip leading zeros (adjusting the point) and fractional trailing zeros.
    std::size_t lead = 0;
    while (lead + 1 < digits.size() && digits[lead] == '0') ++lead;
    digits.erase(0, lead);
    point -= static_cast<long long>(lead);
    while (static_cast<long long>(digits.size()) > std::max(point, 0LL) && digits.back() == '0') {
        digits.pop_back();
    }
    if (digits.find_first_not_of('0') == std::string::npos) return "0";

    std::string body;
    if (point > 64 || point < -60) {
        // Normalized scientific form for magnitudes we will not expand.
        body = digits.substr(0, 1);
        if (digits.size() > 1) body += "." + digits.substr(1);
        body += "e" + std::to_string(point - 1);
    } else if (point >= static_cast<long long>(digits.size())) {
        body = digits + std::string(point - digits.size(), '0');
    } else if (point <= 0) {
        body = "0." + std::string(-point, '0') + digits;
    } else {
        body = digits.substr(0, point) + "." + digits.substr(point);
    }
    return negative ? "-" + body : body;
}

/// Finds integers, decimals, scientific notation, optional sign, optional
/// trailing '%'. A sign is included only when it is not glued to a preceding
/// word or number ("range 3-5" yields 3 and 5, not -5).
inline std::vector<NumericToken> extract_numbers(std::string_view text) {
    static const std::regex pattern(
        R"((?:\d{1,3}(?:,\d{3})+(?:\.\d+)?(?!\d)|\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?%?)");
    std::vector<NumericToken> tokens;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator();
         ++it) {
        std::size_t begin = static_cast<std::size_t>(it->position());
        std::size_t end = begin + static_cast<std::size_t>(it->length());
        if (begin > 0 && (s[begin - 1] == '+' || s[begin - 1] == '-')) {
            const bool sign_free =
                begin == 1 || (!std::isalnum(static_cast<unsigned char>(s[begin - 2])) &&
                               s[begin - 2] != '.' && s[begin - 2] != '-' && s[begin - 2] != '+');
            if (sign_free) --begin;
        }
        NumericToken tok;
        tok.raw = s.substr(begin, end - begin);
        tok.begin = begin;
        tok.end = end;
        if (auto canonical = canonicalize_number(tok.raw)) {
            tok.canonical = std::move(*canonical);
            tokens.push_back(std::move(tok));
        }
    }
    return tokens;
}

/// Eq.-style source audit: a number in an answer counts as sourced iff its
/// canonical form also occurs among the numbers extracted from the paper.
inline NumericAudit numeric_source_ratio(const std::vector<std::string>& answers,
                                         const PaperRecord& paper) {
    std::set<std::string> paper_numbers;
    for (const auto& tok : extract_numbers(paper.full_text)) paper_numbers.insert(tok.canonical);

    NumericAudit audit;
    audit.answers_total = answers.size();
    for (const auto& answer : answers) {
        const auto tokens = extract_numbers(answer);
        if (!tokens.empty()) ++audit.answers_with_numbers;
        for (const auto& tok : tokens) {
            ++audit.total_numbers;
            if (paper_numbers.count(tok.canonical)) ++audit.matched_numbers;
        }
    }
    if (audit.total_numbers > 0) {
        audit.ratio = static_cast<double>(audit.matched_numbers) /
                      static_cast<double>(audit.total_numbers);
    }
    audit.answers_with_numbers_fraction =
        answers.empty() ? 0.0
                        : static_cast<double>(audit.answers_with_numbers) /
                              static_cast<double>(audit.answers_total);
    return audit;
}

// ---------------------------------------------------------------------------
// Question diversity: one judged score per unordered question pair,
// normalized from the judge's 0-100 scale into [0, 1].
// ---------------------------------------------------------------------------

struct SimilarityMatrix {
    std::string paper_id;
    std::size_t n = 0;
    std::vector<double> scores;  // upper triangle, row-major: (0,1),(0,2),..,(1,2),..

    static std::size_t tri_index(std::size_t i, std::size_t j, std::size_t n) {
        // requires i < j < n
        return i * (2 * n - i - 1) / 2 + (j - i - 1);
    }

    double at(std::size_t i, std::size_t j) const {
        if (i == j) return 1.0;
        if (i > j) std::swap(i, j);
        return scores[tri_index(i, j, n)];
    }
};

inline std::string render_similarity_prompt(const PromptSet& prompts, const std::string& q1,
                                            const std::string& q2) {
    return prompts.similarity.render({{"sent1", q1}, {"sent2", q2}});
}

/// Extracts the 0-100 integer after the "similarity score:" anchor
/// (case-insensitive, last occurrence) and maps it to [0, 1]. Anything
/// without the anchor phrase is Unparseable.
inline double parse_similarity_score(std::string_view text) {
    static const std::string anchor = "similarity score:";
    const std::string lowered = to_lower(text);
    std::size_t pos = lowered.rfind(anchor);
    if (pos == std::string::npos) throw Error("Unparseable", "no 'similarity score:' anchor in response");
    pos += anchor.size();
    while (pos < lowered.size() && (lowered[pos] == ' ' || lowered[pos] == '\t')) ++pos;
    bool negative = false;
    if (pos < lowered.size() && (lowered[pos] == '-' || lowered[pos] == '+')) {
        negative = lowered[pos] == '-';
        ++pos;
    }
    if (pos >= lowered.size() || !std::isdigit(static_cast<unsigned char>(lowered[pos]))) {
        throw Error("Unparseable", "no integer after 'similarity score:'");
    }
    long long v = 0;
    while (pos < lowered.size() && std::isdigit(static_cast<unsigned char>(lowered[pos]))) {
        v = v * 10 + (lowered[pos] - '0');
        if (v > 1000000) break;
        ++pos;
    }
    if (negative) v = -v;
    if (v < 0 || v > 100) {
        throw Error("OutOfRange", "similarity score " + std::to_string(v) + " outside 0..100");
    }
    return static_cast<double>(v) / 100.0;
}

inline SimilarityMatrix similarity_matrix(ChatGateway& gateway, const PromptSet& prompts,
                                          const std::vector<std::string>& questions,
                                          const std::string& paper_id = "",
                                          const ChatRequest& params = {}) {
    const std::size_t n = questions.size();
    if (n < 2) throw Error("InvalidArgument", "similarity needs at least 2 questions");
    SimilarityMatrix m;
    m.paper_id = paper_id;
    m.n = n;
    m.scores.resize(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            ChatRequest req = params;
            req.prompt = render_similarity_prompt(prompts, questions[i], questions[j]);
            try {
                const Completion c = gateway.complete(req);
                m.scores[SimilarityMatrix::tri_index(i, j, n)] = parse_similarity_score(c.text);
            } catch (const Error& e) {
                throw Error(e.kind(), "question pair (" + std::to_string(i) + "," + std::to_string(j) +
                                          "): " + e.what());
            }
        }
    }
    return m;
}

struct DiversityStats {
    double mean = 0.0;
    std::size_t count = 0;
    std::map<double, double> frac_below;  // threshold -> fraction strictly below
    std::map<double, double> frac_above;  // threshold -> fraction strictly above
};

inline DiversityStats diversity_stats(const std::vector<SimilarityMatrix>& matrices,
                                      const std::vector<double>& below_thresholds = {0.3},
                                      const std::vector<double>& above_thresholds = {0.7}) {
    DiversityStats stats;
    double sum = 0.0;
    for (const auto& m : matrices) {
        for (double s : m.scores) {
            sum += s;
            ++stats.count;
        }
    }
    if (stats.count == 0) throw Error("EmptyInput", "no similarity scores to pool");
    stats.mean = sum / static_cast<double>(stats.count);
    for (double t : below_thresholds) {
        std::size_t c = 0;
        for (const auto& m : matrices) {
            for (double s : m.scores) {
                if (s < t) ++c;
            }
        }
        stats.frac_below[t] = static_cast<double>(c) / static_cast<double>(stats.count);
    }
    for (double t : above_thresholds) {
        std::size_t c = 0;
        for (const auto& m : matrices) {
            for (double s : m.scores) {
                if (s > t) ++c;
            }
        }
        stats.frac_above[t] = static_cast<double>(c) / static_cast<double>(stats.count);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Answer coverage. For each answer, the top ceil(k_fraction * |sentences|)
// most-similar sentences join the hit set; the rate is the fraction of the
// paper's chunks containing at least one hit. The denominator is the actual
// chunk count, so clamped short papers are never penalized for chunks that
// cannot exist.
// ---------------------------------------------------------------------------

struct CoverageReport {
    std::string paper_id;
    double k_fraction = 0.15;
    std::size_t n_chunks = 10;      // actual chunk count used as denominator
    std::vector<bool> chunk_hits;
    std::size_t hits = 0;
    double rate = 0.0;
};

inline CoverageReport coverage_rate(EmbeddingGateway& embedder,
                                    const std::vector<std::string>& answers,
                                    const PaperRecord& paper, double k_fraction = 0.15,
                                    std::size_t n_chunks = 10) {
    if (paper.sentences.empty()) throw Error("EmptyPaper", "paper has no sentences");
    if (answers.empty()) throw Error("EmptyInput", "no answers to measure coverage for");
    if (!(k_fraction > 0.0 && k_fraction <= 1.0)) {
        throw Error("InvalidArgument", "k_fraction must be in (0, 1]");
    }

    const std::size_t n_sent = paper.sentences.size();
    std::vector<EmbeddingVector> sentence_vecs;
    sentence_vecs.reserve(n_sent);
    for (const auto& s : paper.sentences) sentence_vecs.push_back(embedder.embed(s.text));

    const std::size_t topk = static_cast<std::size_t>(
        std::ceil(k_fraction * static_cast<double>(n_sent)));
    std::set<std::size_t> hit_sentences;
    for (const auto& answer : answers) {
        const EmbeddingVector av = embedder.embed(answer);
        std::vector<std::pair<double, std::size_t>> ranked;
        ranked.reserve(n_sent);
        for (std::size_t i = 0; i < n_sent; ++i) {
            ranked.emplace_back(cosine(av, sentence_vecs[i]), i);
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;  // deterministic tie-break by sentence order
        });
        for (std::size_t k = 0; k < std::min(topk, ranked.size()); ++k) {
            hit_sentences.insert(ranked[k].second);
        }
    }

    const Chunking chunking = chunk_paper(paper, n_chunks);
    CoverageReport report;
    report.paper_id = paper.paper_id;
    report.k_fraction = k_fraction;
    report.n_chunks = chunking.chunks.size();
    for (const auto& chunk : chunking.chunks) {
        bool hit = false;
        for (std::size_t idx : chunk) {
            if (hit_sentences.count(idx)) {
                hit = true;
                break;
            }
        }
        report.chunk_hits.push_back(hit);
        if (hit) ++report.hits;
    }
    report.rate = static_cast<double>(report.hits) / static_cast<double>(report.n_chunks);
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json numeric_audit_to_json(const NumericAudit& a) {
    nlohmann::ordered_json doc;
    doc["total_numbers"] = a.total_numbers;
    doc["matched_numbers"] = a.matched_numbers;
    if (a.ratio) doc["ratio"] = *a.ratio;
    doc["answers_total"] = a.answers_total;
    doc["answers_with_numbers"] = a.answers_with_numbers;
    doc["answers_with_numbers_fraction"] = a.answers_with_numbers_fraction;
    return doc;
}

inline nlohmann::ordered_json similarity_to_json(const SimilarityMatrix& m) {
    nlohmann::ordered_json doc;
    doc["paper_id"] = m.paper_id;
    doc["n"] = m.n;
    // Upper triangle, row-major: index(i,j) = i*(2n-i-1)/2 + (j-i-1).
    doc["scores"] = m.scores;
    return doc;
}

inline nlohmann::ordered_json coverage_to_json(const CoverageReport& r) {
    nlohmann::ordered_json doc;
    doc["paper_id"] = r.paper_id;
    doc["k_fraction"] = r.k_fraction;
    doc["n_chunks"] = r.n_chunks;
    doc["chunk_hits"] = r.chunk_hits;
    doc["hits"] = r.hits;
    doc["rate"] = r.rate;
    return doc;
}

}  // namespace sciqag
