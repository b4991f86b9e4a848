#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sciqag/util.hpp"

namespace sciqag {

// ---------------------------------------------------------------------------
// Minimal TOML reader covering what the pipeline config uses: [dotted.table]
// headers, bare keys, strings with basic escapes, integers, floats, booleans
// and single-line arrays. Parsed into an ordered_json tree.
// ---------------------------------------------------------------------------

namespace toml {

namespace detail {

inline void skip_ws(std::string_view s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

inline nlohmann::ordered_json parse_value(std::string_view s, std::size_t& i, int line);

inline std::string parse_string(std::string_view s, std::size_t& i, int line) {
    ++i;  // opening quote
    std::string out;
    while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char esc = s[i + 1];
            switch (esc) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default:
                    throw Error("ConfigError",
                                "line " + std::to_string(line) + ": unsupported escape \\" + esc);
            }
            i += 2;
        } else {
            out += s[i++];
        }
    }
    if (i >= s.size()) throw Error("ConfigError", "line " + std::to_string(line) + ": unterminated string");
    ++i;  // closing quote
    return out;
}

inline nlohmann::ordered_json parse_scalar(std::string_view token, int line) {
    if (token == "true") return true;
    if (token == "false") return false;
    if (token.empty()) throw Error("ConfigError", "line " + std::to_string(line) + ": missing value");
    const bool looks_float = token.find('.') != std::string_view::npos ||
                             token.find('e') != std::string_view::npos ||
                             token.find('E') != std::string_view::npos;
    if (!looks_float) {
        long long v = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec == std::errc() && ptr == token.data() + token.size()) return v;
    }
    double d = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), d);
    if (ec == std::errc() && ptr == token.data() + token.size()) return d;
    throw Error("ConfigError",
                "line " + std::to_string(line) + ": cannot parse value '" + std::string(token) + "'");
}

inline nlohmann::ordered_json parse_value(std::string_view s, std::size_t& i, int line) {
    skip_ws(s, i);
    if (i >= s.size()) throw Error("ConfigError", "line " + std::to_string(line) + ": missing value");
    if (s[i] == '"') return parse_string(s, i, line);
    if (s[i] == '[') {
        ++i;
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        skip_ws(s, i);
        if (i < s.size() && s[i] == ']') {
            ++i;
            return arr;
        }
        while (true) {
            arr.push_back(parse_value(s, i, line));
            skip_ws(s, i);
            if (i < s.size() && s[i] == ',') {
                ++i;
                skip_ws(s, i);
                continue;
            }
            if (i < s.size() && s[i] == ']') {
                ++i;
                return arr;
            }
            throw Error("ConfigError", "line " + std::to_string(line) + ": expected ',' or ']' in array");
        }
    }
    std::size_t end = i;
    while (end < s.size() && s[end] != ',' && s[end] != ']' && s[end] != '#' && s[end] != ' ' &&
           s[end] != '\t') {
        ++end;
    }
    const auto token = s.substr(i, end - i);
    i = end;
    return parse_scalar(token, line);
}

}  // namespace detail

inline nlohmann::ordered_json parse(std::string_view text) {
    nlohmann::ordered_json root = nlohmann::ordered_json::object();
    nlohmann::ordered_json* table = &root;
    int line_no = 0;
    for (const auto& raw_line : split(std::string(text), '\n')) {
        ++line_no;
        std::string_view line = trim_view(raw_line);
        if (line.empty() || line[0] == '#') continue;
        if (line[0] == '[') {
            const std::size_t close = line.find(']');
            if (close == std::string_view::npos) {
                throw Error("ConfigError", "line " + std::to_string(line_no) + ": unterminated table header");
            }
            table = &root;
            for (const auto& part : split(std::string(line.substr(1, close - 1)), '.')) {
                const std::string key = trim(part);
                if (key.empty()) {
                    throw Error("ConfigError", "line " + std::to_string(line_no) + ": empty table name");
                }
                table = &(*table)[key];
                if (table->is_null()) *table = nlohmann::ordered_json::object();
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error("ConfigError", "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw Error("ConfigError", "line " + std::to_string(line_no) + ": empty key");
        std::size_t i = eq + 1;
        const std::string value_part(line.substr(i));
        std::size_t vi = 0;
        nlohmann::ordered_json value = detail::parse_value(value_part, vi, line_no);
        detail::skip_ws(value_part, vi);
        if (vi < value_part.size() && value_part[vi] != '#') {
            throw Error("ConfigError",
                        "line " + std::to_string(line_no) + ": trailing content after value");
        }
        (*table)[key] = std::move(value);
    }
    return root;
}

}  // namespace toml

// ---------------------------------------------------------------------------
// Pipeline configuration. Every constant of the workflow (pair/keyword
// targets, threshold, quotas, k fraction, chunk count, seeds) lives here as
// a default rather than in code.
// ---------------------------------------------------------------------------

struct BackendConfig {
    std::string kind;  // chat: "mock" | "openai"; embeddings: "hash" | "openai"
    std::string base_url;
    std::string model = "default";
    std::string api_key_env = "SCIQAG_API_KEY";
    std::uint64_t seed = 42;
    std::size_t dim = 512;  // hash embedding width
    std::optional<double> repetition_penalty;

    static BackendConfig make(std::string kind, std::uint64_t seed) {
        BackendConfig b;
        b.kind = std::move(kind);
        b.seed = seed;
        return b;
    }
};

struct BenchOverride {
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::optional<int> max_tokens;
    std::optional<double> repetition_penalty;
};

struct MockKnobs {
    std::optional<int> judge_fixed_score;
    std::optional<int> judge_low_score_pair;
    std::optional<int> taint_phrase_pair;
    std::optional<int> fixed_similarity_score;
};

struct PipelineConfig {
    std::filesystem::path manifest_path = "manifest.json";
    std::filesystem::path output_dir = "out";
    std::filesystem::path cache_dir;  // defaults to output_dir / "cache"
    std::filesystem::path prompt_dir = "prompts";

    int n_keywords = 15;
    int n_pairs = 10;
    bool strict_parse = true;
    int regen_attempts = 2;
    double gen_temperature = 0.8;
    double gen_top_p = 0.75;
    int gen_max_tokens = 2048;
    std::size_t prompt_budget_chars = 60000;

    int scale_max = 5;
    int judge_retries = 2;

    int threshold = 3;
    std::vector<std::string> blacklist = {"this paper", "this study"};
    bool blacklist_word_boundary = false;
    int per_category_test = 50;
    std::uint64_t split_seed = 17;

    double k_fraction = 0.15;
    int n_chunks = 10;
    std::vector<double> below_thresholds = {0.3};
    std::vector<double> above_thresholds = {0.7};
    std::string metrics_scope = "test";  // "test" or "all"
    int histogram_bins = 20;

    std::size_t bench_n = 1000;
    std::uint64_t bench_seed = 23;
    std::vector<std::string> bench_models = {"mock-answerer"};
    std::string bench_baseline;
    double bench_temperature = 0.8;
    double bench_top_p = 0.75;
    int bench_max_tokens = 512;
    std::map<std::string, BenchOverride> bench_overrides;

    int max_in_flight = 8;
    int workers = 4;

    BackendConfig generator = BackendConfig::make("mock", 42);
    BackendConfig judge = BackendConfig::make("mock", 43);
    BackendConfig embedder = BackendConfig::make("hash", 44);
    BackendConfig similarity = BackendConfig::make("", 45);  // empty kind -> reuse judge

    bool force_mock = false;  // --mock
    MockKnobs mock;

    static PipelineConfig from_toml(const nlohmann::ordered_json& doc);
    static PipelineConfig load(const std::filesystem::path& path);

    void validate() const;

    std::filesystem::path effective_cache_dir() const {
        return cache_dir.empty() ? output_dir / "cache" : cache_dir;
    }
};

namespace detail {

template <typename T>
void read_if(const nlohmann::ordered_json& table, const char* key, T& out) {
    if (table.contains(key)) out = table.at(key).get<T>();
}

inline void read_path(const nlohmann::ordered_json& table, const char* key,
                      std::filesystem::path& out) {
    if (table.contains(key)) out = table.at(key).get<std::string>();
}

inline void read_opt_int(const nlohmann::ordered_json& table, const char* key,
                         std::optional<int>& out) {
    if (table.contains(key)) {
        const int v = table.at(key).get<int>();
        if (v > 0) out = v;
    }
}

inline void read_backend(const nlohmann::ordered_json& root, const char* name, BackendConfig& out) {
    if (!root.contains("backends") || !root.at("backends").contains(name)) return;
    const auto& t = root.at("backends").at(name);
    read_if(t, "kind", out.kind);
    read_if(t, "base_url", out.base_url);
    read_if(t, "model", out.model);
    read_if(t, "api_key_env", out.api_key_env);
    read_if(t, "seed", out.seed);
    read_if(t, "dim", out.dim);
    if (t.contains("repetition_penalty")) out.repetition_penalty = t.at("repetition_penalty").get<double>();
}

}  // namespace detail

inline PipelineConfig PipelineConfig::from_toml(const nlohmann::ordered_json& doc) {
    PipelineConfig cfg;
    using detail::read_if;
    using detail::read_path;

    if (doc.contains("corpus")) read_path(doc.at("corpus"), "manifest", cfg.manifest_path);
    if (doc.contains("output")) {
        read_path(doc.at("output"), "dir", cfg.output_dir);
        read_path(doc.at("output"), "cache_dir", cfg.cache_dir);
    }
    if (doc.contains("prompts")) read_path(doc.at("prompts"), "dir", cfg.prompt_dir);

    if (doc.contains("generation")) {
        const auto& t = doc.at("generation");
        read_if(t, "keywords", cfg.n_keywords);
        read_if(t, "pairs", cfg.n_pairs);
        read_if(t, "strict", cfg.strict_parse);
        read_if(t, "regen_attempts", cfg.regen_attempts);
        read_if(t, "temperature", cfg.gen_temperature);
        read_if(t, "top_p", cfg.gen_top_p);
        read_if(t, "max_tokens", cfg.gen_max_tokens);
        read_if(t, "prompt_budget_chars", cfg.prompt_budget_chars);
    }
    if (doc.contains("evaluation")) {
        const auto& t = doc.at("evaluation");
        read_if(t, "scale_max", cfg.scale_max);
        read_if(t, "judge_retries", cfg.judge_retries);
    }
    if (doc.contains("filter")) {
        const auto& t = doc.at("filter");
        read_if(t, "threshold", cfg.threshold);
        read_if(t, "blacklist", cfg.blacklist);
        read_if(t, "word_boundary", cfg.blacklist_word_boundary);
        read_if(t, "per_category_test", cfg.per_category_test);
        read_if(t, "seed", cfg.split_seed);
    }
    if (doc.contains("metrics")) {
        const auto& t = doc.at("metrics");
        read_if(t, "k_fraction", cfg.k_fraction);
        read_if(t, "n_chunks", cfg.n_chunks);
        read_if(t, "below_thresholds", cfg.below_thresholds);
        read_if(t, "above_thresholds", cfg.above_thresholds);
        read_if(t, "scope", cfg.metrics_scope);
        read_if(t, "histogram_bins", cfg.histogram_bins);
    }
    if (doc.contains("bench")) {
        const auto& t = doc.at("bench");
        read_if(t, "n", cfg.bench_n);
        read_if(t, "seed", cfg.bench_seed);
        read_if(t, "models", cfg.bench_models);
        read_if(t, "baseline", cfg.bench_baseline);
        read_if(t, "temperature", cfg.bench_temperature);
        read_if(t, "top_p", cfg.bench_top_p);
        read_if(t, "max_tokens", cfg.bench_max_tokens);
        if (t.contains("overrides")) {
            for (auto it = t.at("overrides").begin(); it != t.at("overrides").end(); ++it) {
                BenchOverride ov;
                const auto& o = it.value();
                if (o.contains("temperature")) ov.temperature = o.at("temperature").get<double>();
                if (o.contains("top_p")) ov.top_p = o.at("top_p").get<double>();
                if (o.contains("max_tokens")) ov.max_tokens = o.at("max_tokens").get<int>();
                if (o.contains("repetition_penalty")) {
                    ov.repetition_penalty = o.at("repetition_penalty").get<double>();
                }
                cfg.bench_overrides[it.key()] = ov;
            }
        }
    }
    if (doc.contains("concurrency")) {
        const auto& t = doc.at("concurrency");
        read_if(t, "max_in_flight", cfg.max_in_flight);
        read_if(t, "workers", cfg.workers);
    }
    detail::read_backend(doc, "generator", cfg.generator);
    detail::read_backend(doc, "judge", cfg.judge);
    detail::read_backend(doc, "embedder", cfg.embedder);
    detail::read_backend(doc, "similarity", cfg.similarity);
    if (doc.contains("mock")) {
        const auto& t = doc.at("mock");
        detail::read_opt_int(t, "judge_fixed_score", cfg.mock.judge_fixed_score);
        detail::read_opt_int(t, "judge_low_score_pair", cfg.mock.judge_low_score_pair);
        detail::read_opt_int(t, "taint_phrase_pair", cfg.mock.taint_phrase_pair);
        if (t.contains("fixed_similarity_score")) {
            const int v = t.at("fixed_similarity_score").get<int>();
            if (v >= 0) cfg.mock.fixed_similarity_score = v;
        }
    }
    return cfg;
}

inline PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    return from_toml(toml::parse(read_file(path)));
}

inline void PipelineConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error("ConfigError", msg); };
    if (!std::filesystem::exists(manifest_path)) {
        fail("manifest not found: " + manifest_path.string());
    }
    if (!std::filesystem::is_directory(prompt_dir)) {
        fail("prompt directory not found: " + prompt_dir.string());
    }
    if (n_keywords < 1) fail("generation.keywords must be >= 1");
    if (n_pairs < 1) fail("generation.pairs must be >= 1");
    if (regen_attempts < 0) fail("generation.regen_attempts must be >= 0");
    if (gen_temperature < 0) fail("generation.temperature must be >= 0");
    if (!(gen_top_p > 0 && gen_top_p <= 1)) fail("generation.top_p must be in (0, 1]");
    if (gen_max_tokens < 1) fail("generation.max_tokens must be >= 1");
    if (scale_max < 1) fail("evaluation.scale_max must be >= 1");
    if (judge_retries < 0) fail("evaluation.judge_retries must be >= 0");
    if (threshold < 1 || threshold > scale_max) {
        fail("filter.threshold " + std::to_string(threshold) + " must be within 1..scale_max (" +
             std::to_string(scale_max) + ")");
    }
    if (per_category_test < 0) fail("filter.per_category_test must be >= 0");
    if (!(k_fraction > 0 && k_fraction <= 1)) fail("metrics.k_fraction must be in (0, 1]");
    if (n_chunks < 1) fail("metrics.n_chunks must be >= 1");
    if (metrics_scope != "test" && metrics_scope != "all") {
        fail("metrics.scope must be 'test' or 'all'");
    }
    if (histogram_bins < 1) fail("metrics.histogram_bins must be >= 1");
    if (bench_n < 1) fail("bench.n must be >= 1");
    if (bench_models.empty()) fail("bench.models must not be empty");
    if (!(bench_top_p > 0 && bench_top_p <= 1)) fail("bench.top_p must be in (0, 1]");
    if (bench_max_tokens < 1) fail("bench.max_tokens must be >= 1");
    if (max_in_flight < 1) fail("concurrency.max_in_flight must be >= 1");
    if (workers < 1) fail("concurrency.workers must be >= 1");
    for (const auto* b : {&generator, &judge}) {
        if (!force_mock && b->kind != "mock" && b->kind != "openai") {
            fail("chat backend kind must be 'mock' or 'openai', got '" + b->kind + "'");
        }
        if (!force_mock && b->kind == "openai" && b->base_url.empty()) {
            fail("openai backend needs base_url");
        }
    }
    if (!force_mock && embedder.kind != "hash" && embedder.kind != "openai") {
        fail("embedding backend kind must be 'hash' or 'openai', got '" + embedder.kind + "'");
    }
    if (!force_mock && embedder.kind == "openai" && embedder.base_url.empty()) {
        fail("openai embedding backend needs base_url");
    }
    if (embedder.dim < 1) fail("embedder dim must be >= 1");
}

}  // namespace sciqag
