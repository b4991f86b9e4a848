#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sciqag {

/// Returns the body of the first ``` fenced block (any language tag) when one
/// exists, otherwise the input unchanged. Judges often wrap their payload in
/// a fence and add prose around it.
inline std::string strip_code_fences(std::string_view text) {
    const std::size_t open = text.find("```");
    if (open == std::string_view::npos) return std::string(text);
    std::size_t body = open + 3;
    // Skip a language tag up to end of line.
    const std::size_t eol = text.find('\n', body);
    if (eol == std::string_view::npos) return std::string(text);
    bool tag_only = true;
    for (std::size_t i = body; i < eol; ++i) {
        if (!std::isalnum(static_cast<unsigned char>(text[i])) && !std::isspace(static_cast<unsigned char>(text[i]))) {
            tag_only = false;
            break;
        }
    }
    if (tag_only) body = eol + 1;
    const std::size_t close = text.find("```", body);
    if (close == std::string_view::npos) return std::string(text.substr(body));
    return std::string(text.substr(body, close - body));
}

/// Extracts the first balanced `open`..`close` region at or after `from`,
/// honoring double-quoted strings with backslash escapes.
inline std::optional<std::string> extract_balanced(std::string_view text, char open, char close,
                                                   std::size_t from = 0,
                                                   std::size_t* begin_out = nullptr) {
    bool in_string = false;
    int depth = 0;
    std::size_t begin = std::string_view::npos;
    for (std::size_t i = from; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == open) {
            if (depth == 0) begin = i;
            ++depth;
        } else if (c == close) {
            if (depth > 0 && --depth == 0) {
                if (begin_out) *begin_out = begin;
                return std::string(text.substr(begin, i - begin + 1));
            }
        }
    }
    return std::nullopt;
}

namespace detail {

inline bool word_boundary_at(std::string_view text, std::size_t pos, std::size_t len) {
    const bool left_ok =
        pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
    const bool right_ok = pos + len >= text.size() ||
                          !std::isalnum(static_cast<unsigned char>(text[pos + len]));
    return left_ok && right_ok;
}

}  // namespace detail

/// Best-effort conversion of Python-flavored dict/list notation into strict
/// JSON: tuples to arrays, single-quoted strings to double-quoted, Python
/// literals to JSON literals, trailing commas dropped. Contents of
/// double-quoted strings are left untouched.
inline std::string json_repair(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_dq = false;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (in_dq) {
            out += c;
            if (c == '\\' && i + 1 < text.size()) {
                out += text[i + 1];
                ++i;
            } else if (c == '"') {
                in_dq = false;
            }
            ++i;
            continue;
        }
        switch (c) {
            case '"':
                in_dq = true;
                out += c;
                ++i;
                break;
            case '\'': {
                // Re-quote a single-quoted string, escaping embedded '"'.
                out += '"';
                ++i;
                while (i < text.size() && text[i] != '\'') {
                    if (text[i] == '\\' && i + 1 < text.size() && text[i + 1] == '\'') {
                        out += '\'';
                        i += 2;
                        continue;
                    }
                    if (text[i] == '"') {
                        out += "\\\"";
                    } else {
                        out += text[i];
                    }
                    ++i;
                }
                ++i;  // closing quote
                out += '"';
                break;
            }
            case '(':
                out += '[';
                ++i;
                break;
            case ')':
                out += ']';
                ++i;
                break;
            case ',': {
                std::size_t j = i + 1;
                while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
                if (j < text.size() && (text[j] == ']' || text[j] == '}')) {
                    ++i;  // trailing comma
                } else {
                    out += c;
                    ++i;
                }
                break;
            }
            default: {
                bool replaced = false;
                for (const auto& [py, js] :
                     {std::pair<std::string_view, std::string_view>{"True", "true"},
                      {"False", "false"},
                      {"None", "null"}}) {
                    if (text.substr(i, py.size()) == py && detail::word_boundary_at(text, i, py.size())) {
                        out += js;
                        i += py.size();
                        replaced = true;
                        break;
                    }
                }
                if (!replaced) {
                    out += c;
                    ++i;
                }
                break;
            }
        }
    }
    return out;
}

}  // namespace sciqag
