#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sciqag/util.hpp"

namespace sciqag {

/// One segmentation unit. [begin, end) indexes into the owning paper's
/// normalized full_text; spans are disjoint and strictly increasing, and
/// every non-space character of the text falls inside exactly one span.
struct Sentence {
    std::size_t index = 0;
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct PaperRecord {
    std::string paper_id;
    std::string category;
    std::string full_text;  // whitespace-normalized
    std::vector<Sentence> sentences;
    std::size_t utf8_replacements = 0;
};

struct ManifestEntry {
    std::string id;
    std::string category;
    std::string path;  // relative to the manifest file's directory
};

struct CorpusManifest {
    std::vector<std::string> categories;
    std::vector<ManifestEntry> papers;
    std::filesystem::path base_dir;
};

// ---------------------------------------------------------------------------
// Sentence segmentation. Rule-based: '.', '!', '?' terminate a sentence
// unless guarded. Guards: decimals (digit '.' digit), periods glued to a
// following letter/digit (internal dots of "U.S." or "e.g."), and a fixed
// abbreviation list for the trailing dot of common textual abbreviations.
// Single capital initials ("J.") are NOT guarded: they are rare in running
// prose and guarding them would also merge legitimate one-letter sentences.
// ---------------------------------------------------------------------------

namespace detail {

inline const std::set<std::string>& abbreviation_guards() {
    static const std::set<std::string> guards = {
        "e.g.", "i.e.",  "etc.", "vs.",  "cf.",   "ca.",  "approx.", "fig.",  "figs.",
        "eq.",  "eqs.",  "ref.", "refs.", "sec.",  "no.",  "nos.",    "vol.",  "pp.",
        "al.",  "dr.",   "mr.",  "mrs.", "ms.",   "prof.", "inc.",   "ltd.",  "jr.",
        "sr.",  "st.",   "dept.", "univ.",
    };
    return guards;
}

inline bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

inline bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

/// Token of letters/periods immediately before position `dot` (inclusive of
/// the dot itself), lowercased, e.g. "Fig." -> "fig.".
inline std::string preceding_token(std::string_view text, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0) {
        const char c = text[b - 1];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '.') {
            --b;
        } else {
            break;
        }
    }
    return to_lower(text.substr(b, dot - b + 1));
}

}  // namespace detail

/// Deterministic segmentation of whitespace-normalized text. Empty input
/// yields an empty list.
inline std::vector<Sentence> segment_sentences(std::string_view text) {
    std::vector<Sentence> out;
    const std::size_t n = text.size();
    std::size_t start = 0;
    while (start < n && text[start] == ' ') ++start;

    std::size_t i = start;
    while (i < n) {
        const char c = text[i];
        if (!detail::is_terminator(c)) {
            ++i;
            continue;
        }
        // Collapse runs like "..." or "?!" into one terminator position.
        std::size_t last = i;
        while (last + 1 < n && detail::is_terminator(text[last + 1])) ++last;

        bool boundary = true;
        if (c == '.' && last == i) {
            const bool next_glued =
                i + 1 < n && (std::isalnum(static_cast<unsigned char>(text[i + 1])));
            if (next_glued) {
                boundary = false;  // decimal or internal dot of "e.g."/"U.S."
            } else {
                const std::string token = detail::preceding_token(text, i);
                const bool known_abbrev = detail::abbreviation_guards().count(token) > 0;
                const bool initialism = !token.empty() &&
                                        std::isalpha(static_cast<unsigned char>(token[0])) &&
                                        token.find('.') < token.size() - 1;
                if (known_abbrev || initialism) boundary = false;
            }
        }
        if (!boundary) {
            ++i;
            continue;
        }

        std::size_t end = last + 1;
        while (end < n && detail::is_closer(text[end])) ++end;
        Sentence s;
        s.index = out.size();
        s.begin = start;
        s.end = end;
        s.text = std::string(text.substr(start, end - start));
        out.push_back(std::move(s));

        i = end;
        while (i < n && text[i] == ' ') ++i;
        start = i;
    }

    if (start < n) {
        Sentence s;
        s.index = out.size();
        s.begin = start;
        std::size_t end = n;
        while (end > start && text[end - 1] == ' ') --end;
        s.end = end;
        s.text = std::string(text.substr(start, end - start));
        out.push_back(std::move(s));
    }
    return out;
}

/// Builds a record from raw bytes: UTF-8 sanitation (replacements counted),
/// whitespace normalization, then segmentation.
inline PaperRecord make_paper(std::string paper_id, std::string category, std::string_view raw_text) {
    PaperRecord rec;
    rec.paper_id = std::move(paper_id);
    rec.category = std::move(category);
    std::size_t replaced = 0;
    rec.full_text = normalize_whitespace(sanitize_utf8(raw_text, &replaced));
    rec.utf8_replacements = replaced;
    if (rec.full_text.empty()) {
        throw Error("EmptyPaper", "paper '" + rec.paper_id + "' has no content after normalization");
    }
    rec.sentences = segment_sentences(rec.full_text);
    return rec;
}

// ---------------------------------------------------------------------------
// Manifest: one JSON file with `categories: [string]` and
// `papers: [{id, category, path}]`. Paths are resolved against the manifest
// directory.
// ---------------------------------------------------------------------------

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("ParseError", "manifest " + path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("categories") || !doc.contains("papers")) {
        throw Error("ParseError", "manifest must have 'categories' and 'papers' fields");
    }

    CorpusManifest m;
    m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::set<std::string> category_set;
    for (const auto& c : doc["categories"]) {
        m.categories.push_back(c.get<std::string>());
        category_set.insert(m.categories.back());
    }

    std::set<std::string> seen_ids;
    for (const auto& p : doc["papers"]) {
        ManifestEntry e;
        e.id = p.at("id").get<std::string>();
        e.category = p.at("category").get<std::string>();
        e.path = p.at("path").get<std::string>();
        if (e.id.empty()) throw Error("ParseError", "manifest entry with empty id");
        if (!seen_ids.insert(e.id).second) {
            throw Error("DuplicateId", "paper id '" + e.id + "' listed twice");
        }
        if (!category_set.count(e.category)) {
            throw Error("UnknownCategory",
                        "paper '" + e.id + "' has category '" + e.category + "' not in category list");
        }
        if (!std::filesystem::exists(m.base_dir / e.path)) {
            throw Error("IoError", "paper file not found: " + (m.base_dir / e.path).string());
        }
        m.papers.push_back(std::move(e));
    }
    return m;
}

inline nlohmann::ordered_json manifest_to_json(const CorpusManifest& m) {
    nlohmann::ordered_json doc;
    doc["categories"] = m.categories;
    doc["papers"] = nlohmann::ordered_json::array();
    for (const auto& p : m.papers) {
        doc["papers"].push_back({{"id", p.id}, {"category", p.category}, {"path", p.path}});
    }
    return doc;
}

inline void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
    write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

inline PaperRecord ingest_paper(const CorpusManifest& manifest, const ManifestEntry& entry) {
    const std::string raw = read_file(manifest.base_dir / entry.path);
    return make_paper(entry.id, entry.category, raw);
}

// ---------------------------------------------------------------------------
// Chunking for the coverage metric: contiguous sentence-index chunks whose
// sizes differ by at most one, earlier chunks taking the remainder. When a
// paper has fewer sentences than requested chunks, the count is clamped so
// no chunk is ever empty.
// ---------------------------------------------------------------------------

struct Chunking {
    std::vector<std::vector<std::size_t>> chunks;
    std::size_t requested = 0;
    bool clamped = false;
};

inline Chunking chunk_paper(const PaperRecord& paper, std::size_t n_chunks = 10) {
    if (n_chunks < 1) throw Error("InvalidArgument", "n_chunks must be >= 1");
    const std::size_t n = paper.sentences.size();
    if (n == 0) throw Error("EmptyPaper", "cannot chunk paper '" + paper.paper_id + "' with 0 sentences");

    Chunking result;
    result.requested = n_chunks;
    if (n_chunks > n) {
        n_chunks = n;
        result.clamped = true;
    }
    const std::size_t base = n / n_chunks;
    const std::size_t rem = n % n_chunks;
    std::size_t next = 0;
    for (std::size_t i = 0; i < n_chunks; ++i) {
        const std::size_t size = base + (i < rem ? 1 : 0);
        std::vector<std::size_t> chunk(size);
        for (std::size_t k = 0; k < size; ++k) chunk[k] = next++;
        result.chunks.push_back(std::move(chunk));
    }
    return result;
}

}  // namespace sciqag
