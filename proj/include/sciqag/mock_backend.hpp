#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sciqag/gateway.hpp"
#include "sciqag/parse_util.hpp"
#include "sciqag/util.hpp"

namespace sciqag {

/// Knobs for the deterministic chat mock. Everything it emits is a pure
/// function of (seed, prompt) plus these options, so whole pipeline runs are
/// reproducible byte for byte.
struct MockChatOptions {
    std::uint64_t seed = 42;
    int n_keywords = 15;
    int n_pairs = 10;

    std::optional<int> fixed_judge_score;       // constant score in every judge item
    std::optional<int> fixed_similarity_score;  // constant 0..100 similarity
    std::optional<int> low_score_pair;          // 1-based pair index scored 1 in judge lists
    std::optional<int> taint_phrase_pair;       // 1-based pair whose answer says "this study"

    enum class Malform { garbage, drop_item, bad_score };
    int malform_first_calls = 0;  // emit a malformed response for the first N calls per prompt
    Malform malform_kind = Malform::garbage;
    std::vector<std::string> malform_if_prompt_contains;  // when set, only these prompts malform

    std::vector<std::string> fail_if_prompt_contains;  // simulate backend outages
    bool fence_judge_output = false;                    // wrap judge lists in a ```json fence
};

/// Template-driven mock: recognizes the pipeline's prompt shapes by their
/// anchor phrases and answers each with a well-formed response.
class MockChatBackend : public ChatBackend {
public:
    explicit MockChatBackend(MockChatOptions options = {}) : opt_(options) {}

    std::string id() const override { return "mock-chat/" + std::to_string(opt_.seed); }

    Completion complete(const ChatRequest& req) override {
        for (const auto& marker : opt_.fail_if_prompt_contains) {
            if (req.prompt.find(marker) != std::string::npos) {
                throw Error("BackendUnavailable", "mock outage triggered by marker");
            }
        }
        const bool malform = take_malform_slot(req.prompt);

        Completion c;
        c.backend_id = id();
        c.text = respond(req.prompt, malform);
        c.prompt_tokens = static_cast<int>(req.prompt.size() / 4);
        c.completion_tokens = static_cast<int>(c.text.size() / 4);
        return c;
    }

    int calls_for(std::string_view prompt) const {
        std::lock_guard lock(m_);
        auto it = calls_.find(fnv1a64(prompt));
        return it == calls_.end() ? 0 : it->second;
    }

private:
    bool take_malform_slot(std::string_view prompt) {
        if (opt_.malform_first_calls <= 0) return false;
        if (!opt_.malform_if_prompt_contains.empty()) {
            bool hit = false;
            for (const auto& marker : opt_.malform_if_prompt_contains) {
                hit = hit || prompt.find(marker) != std::string_view::npos;
            }
            if (!hit) return false;
        }
        std::lock_guard lock(m_);
        const int n = calls_[fnv1a64(prompt)]++;
        return n < opt_.malform_first_calls;
    }

    std::string respond(std::string_view prompt, bool malform) const {
        if (prompt.find("Here is a scientific paper:") != std::string_view::npos) {
            return generation_response(prompt, malform);
        }
        if (prompt.find("evaluate the relevance of the question") != std::string_view::npos) {
            return judge_list_response(prompt, "Questions: ", malform);
        }
        if (prompt.find("evaluate its context independence") != std::string_view::npos) {
            return judge_list_response(prompt, "Questions: ", malform);
        }
        if (prompt.find("evaluate the completeness of the answer") != std::string_view::npos) {
            return judge_list_response(prompt, "Questions: ", malform);
        }
        if (prompt.find("evaluate the accuracy of the answer") != std::string_view::npos) {
            return judge_list_response(prompt, "QA pairs: ", malform);
        }
        if (prompt.find("evaluate the reasonableness of the statements") != std::string_view::npos) {
            return judge_list_response(prompt, "Statements: ", malform);
        }
        if (prompt.find("you are provided with a question-answer pair") != std::string_view::npos) {
            return car_response(prompt, malform);
        }
        if (prompt.find("Assess the similarity of two questions") != std::string_view::npos) {
            return similarity_response(prompt, malform);
        }
        if (prompt.find("Answer the following question.") != std::string_view::npos) {
            return bench_response(prompt);
        }
        // Unrecognized prompts get a deterministic echo so nothing hangs.
        return "mock response " + std::to_string(mix64(opt_.seed ^ fnv1a64(prompt)) % 100000);
    }

    // -- deterministic vocabulary ------------------------------------------

    std::string word(DetRng& rng) const {
        static constexpr char consonants[] = "bdfgklmnprstvz";
        static constexpr char vowels[] = "aeiou";
        const int syllables = 2 + static_cast<int>(rng.below(2));
        std::string w;
        for (int s = 0; s < syllables; ++s) {
            w += consonants[rng.below(sizeof(consonants) - 1)];
            w += vowels[rng.below(sizeof(vowels) - 1)];
        }
        return w;
    }

    std::string number(DetRng& rng) const {
        const auto v = rng.below(9000) + 100;
        return std::to_string(v / 10) + "." + std::to_string(v % 10);
    }

    // -- generation ---------------------------------------------------------

    std::string generation_response(std::string_view prompt, bool malform) const {
        if (malform) {
            return "I considered the paper carefully but cannot follow the requested layout.";
        }
        DetRng rng(mix64(opt_.seed ^ fnv1a64(prompt)));
        std::string out = "Keywords: ";
        for (int i = 0; i < opt_.n_keywords; ++i) {
            if (i) out += ", ";
            out += word(rng);
        }
        out += "\n";
        for (int i = 1; i <= opt_.n_pairs; ++i) {
            const std::string subject = word(rng);
            const std::string object = word(rng);
            const std::string agent = word(rng);
            out += "Q" + std::to_string(i) + ": What is the effect of " + subject + " on " + object +
                   " under " + agent + " conditions?\n";
            std::string answer;
            if (opt_.taint_phrase_pair && *opt_.taint_phrase_pair == i) {
                answer = "In this study the " + subject + " response of " + object +
                         " grows once " + agent + " is applied.";
            } else if (rng.below(2) == 0) {
                answer = "The " + subject + " response of " + object + " increases by " + number(rng) +
                         " percent when " + agent + " is present.";
            } else {
                answer = "Strong coupling between " + subject + " and " + object +
                         " dominates whenever " + agent + " remains stable.";
            }
            out += "A" + std::to_string(i) + ": " + answer + "\n";
            if (i != opt_.n_pairs) out += "\n";
        }
        return out;
    }

    // -- judge lists (five per-dimension batch prompts) ----------------------

    std::string judge_list_response(std::string_view prompt, std::string_view slot_anchor,
                                    bool malform) const {
        if (malform && opt_.malform_kind == MockChatOptions::Malform::garbage) {
            return "As an evaluator I would rather describe my impressions in free text.";
        }
        const std::size_t n = count_slot_items(prompt, slot_anchor);
        const int scale = parse_scale(prompt);
        DetRng rng(mix64(opt_.seed ^ fnv1a64(prompt)));

        std::size_t emit_n = n;
        if (malform && opt_.malform_kind == MockChatOptions::Malform::drop_item && emit_n > 0) {
            --emit_n;
        }
        nlohmann::ordered_json items = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < emit_n; ++i) {
            int score;
            if (opt_.low_score_pair && static_cast<std::size_t>(*opt_.low_score_pair - 1) == i) {
                score = 1;
            } else if (opt_.fixed_judge_score) {
                score = std::min(*opt_.fixed_judge_score, scale);
            } else {
                score = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(scale)));
            }
            if (malform && opt_.malform_kind == MockChatOptions::Malform::bad_score && i == 0) {
                score = 0;
            }
            items.push_back({{"score", score}, {"reasons", "mock evaluation of item " + std::to_string(i + 1)}});
        }
        std::string body = items.dump();
        if (opt_.fence_judge_output) return "```json\n" + body + "\n```\n";
        return body;
    }

    std::size_t count_slot_items(std::string_view prompt, std::string_view anchor) const {
        const std::size_t pos = prompt.rfind(anchor);
        if (pos == std::string_view::npos) return 0;
        const auto arr = extract_balanced(prompt, '[', ']', pos + anchor.size());
        if (!arr) return 0;
        try {
            return nlohmann::json::parse(*arr).size();
        } catch (const nlohmann::json::parse_error&) {
            return 0;
        }
    }

    int parse_scale(std::string_view prompt) const {
        const std::size_t pos = prompt.find("ranging from 1-");
        if (pos == std::string_view::npos) return 5;
        int v = 0;
        std::size_t i = pos + 15;
        while (i < prompt.size() && std::isdigit(static_cast<unsigned char>(prompt[i]))) {
            v = v * 10 + (prompt[i] - '0');
            ++i;
        }
        return v > 0 ? v : 5;
    }

    // -- CAR ------------------------------------------------------------------

    std::string car_response(std::string_view prompt, bool malform) const {
        if (malform) return "The answer seems decent overall.";
        DetRng rng(mix64(opt_.seed ^ fnv1a64(prompt)));
        auto score = [&](int salt) {
            if (opt_.fixed_judge_score) return std::min(*opt_.fixed_judge_score, 5);
            return 1 + static_cast<int>(mix64(rng.next() + salt) % 5);
        };
        // Python-flavored tuples on purpose: this is the shape the judge
        // template asks for, and the tolerant parser has to handle it.
        return "{\"Accuracy\": (" + std::to_string(score(1)) + ", \"mock accuracy note\"), " +
               "\"Completeness\": (" + std::to_string(score(2)) + ", \"mock completeness note\"), " +
               "\"Reasonableness\": (" + std::to_string(score(3)) + ", \"mock reasonableness note\")}";
    }

    // -- similarity -----------------------------------------------------------

    std::string similarity_response(std::string_view prompt, bool malform) const {
        if (malform) return "These questions look fairly close to me.";
        const std::string q1 = line_after(prompt, "Question1: ");
        std::string q2 = line_after(prompt, "Question2: ");
        const std::size_t inst = q2.rfind(" [/INST]");
        if (inst != std::string::npos) q2 = q2.substr(0, inst);
        int score;
        if (q1 == q2) {
            score = 100;
        } else if (opt_.fixed_similarity_score) {
            score = *opt_.fixed_similarity_score;
        } else {
            score = static_cast<int>(mix64(opt_.seed ^ fnv1a64(q1) ^ (fnv1a64(q2) * 3)) % 101);
        }
        return "similarity score: " + std::to_string(score);
    }

    // -- bench answering -------------------------------------------------------

    std::string bench_response(std::string_view prompt) const {
        std::string q = line_after(prompt, "Question: ");
        if (!q.empty() && q.back() == '?') q.pop_back();
        return "Considering " + q + ", the mock model reports a stable outcome.";
    }

    static std::string line_after(std::string_view text, std::string_view anchor) {
        const std::size_t pos = text.rfind(anchor);
        if (pos == std::string_view::npos) return "";
        const std::size_t start = pos + anchor.size();
        const std::size_t eol = text.find('\n', start);
        return std::string(text.substr(start, eol == std::string_view::npos ? std::string_view::npos
                                                                            : eol - start));
    }

    MockChatOptions opt_;
    mutable std::mutex m_;
    mutable std::map<std::uint64_t, int> calls_;
};

/// Hashed bag-of-words embedding: tokens are lowercase alphanumeric runs,
/// each token adds 1 to bucket fnv1a64(token) % dim, and the result is
/// unit-normalized. Identical strings therefore embed identically and
/// verbatim-equal texts score cosine 1.
class HashEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HashEmbeddingBackend(std::size_t dim = 512) : dim_(dim) {
        if (dim_ == 0) throw Error("InvalidArgument", "embedding dim must be > 0");
    }

    std::string id() const override { return "hash-embed/" + std::to_string(dim_); }

    EmbeddingVector embed(std::string_view text) override {
        EmbeddingVector v;
        v.backend_id = id();
        v.values.assign(dim_, 0.0);
        std::string token;
        bool any = false;
        auto flush = [&] {
            if (token.empty()) return;
            v.values[fnv1a64(token) % dim_] += 1.0;
            token.clear();
            any = true;
        };
        for (char ch : text) {
            if (std::isalnum(static_cast<unsigned char>(ch))) {
                token += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            } else {
                flush();
            }
        }
        flush();
        if (!any) v.values[fnv1a64("") % dim_] = 1.0;  // token-less text still embeds
        double norm = 0.0;
        for (double x : v.values) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : v.values) x /= norm;
        return v;
    }

private:
    std::size_t dim_;
};

}  // namespace sciqag
