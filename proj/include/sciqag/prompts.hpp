#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "sciqag/util.hpp"

namespace sciqag {

/// Text template with `{name}` slots. `{{` and `}}` are escapes for literal
/// braces (the judge templates embed JSON examples). Unknown slots and
/// unbalanced braces are errors so template typos fail loudly at render time.
class PromptTemplate {
public:
    PromptTemplate() = default;
    explicit PromptTemplate(std::string text) : text_(std::move(text)) {}

    static PromptTemplate from_file(const std::filesystem::path& path) {
        return PromptTemplate(read_file(path));
    }

    const std::string& text() const { return text_; }

    std::string render(const std::map<std::string, std::string>& vars) const {
        std::string out;
        out.reserve(text_.size());
        std::size_t i = 0;
        const std::size_t n = text_.size();
        while (i < n) {
            const char c = text_[i];
            if (c == '{') {
                if (i + 1 < n && text_[i + 1] == '{') {
                    out += '{';
                    i += 2;
                    continue;
                }
                const std::size_t close = text_.find('}', i + 1);
                if (close == std::string::npos) {
                    throw Error("TemplateError", "unterminated '{' in template");
                }
                const std::string name = text_.substr(i + 1, close - i - 1);
                auto it = vars.find(name);
                if (it == vars.end()) {
                    throw Error("TemplateError", "no value for template slot '" + name + "'");
                }
                out += it->second;
                i = close + 1;
            } else if (c == '}') {
                if (i + 1 < n && text_[i + 1] == '}') {
                    out += '}';
                    i += 2;
                    continue;
                }
                throw Error("TemplateError", "stray '}' in template");
            } else {
                out += c;
                ++i;
            }
        }
        return out;
    }

private:
    std::string text_;
};

/// The full set of templates used by the pipeline, loaded from one directory.
/// File names are part of the external interface.
struct PromptSet {
    PromptTemplate generation;
    PromptTemplate racar_relevance;
    PromptTemplate racar_agnosticism;
    PromptTemplate racar_completeness;
    PromptTemplate racar_accuracy;
    PromptTemplate racar_reasonableness;
    PromptTemplate car;
    PromptTemplate similarity;
    PromptTemplate bench_answer;

    static PromptSet load(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir)) {
            throw Error("IoError", "prompt directory not found: " + dir.string());
        }
        PromptSet set;
        set.generation = PromptTemplate::from_file(dir / "generation.txt");
        set.racar_relevance = PromptTemplate::from_file(dir / "racar_relevance.txt");
        set.racar_agnosticism = PromptTemplate::from_file(dir / "racar_agnosticism.txt");
        set.racar_completeness = PromptTemplate::from_file(dir / "racar_completeness.txt");
        set.racar_accuracy = PromptTemplate::from_file(dir / "racar_accuracy.txt");
        set.racar_reasonableness = PromptTemplate::from_file(dir / "racar_reasonableness.txt");
        set.car = PromptTemplate::from_file(dir / "car.txt");
        set.similarity = PromptTemplate::from_file(dir / "similarity.txt");
        set.bench_answer = PromptTemplate::from_file(dir / "bench_answer.txt");
        return set;
    }
};

}  // namespace sciqag
