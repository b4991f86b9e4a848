#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sciqag/util.hpp"

namespace sciqag {

struct ChatRequest {
    std::string prompt;
    double temperature = 0.8;
    double top_p = 0.75;
    int max_tokens = 512;
    std::string model_tag = "default";
};

struct Completion {
    std::string text;
    bool cached = false;
    std::string backend_id;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string backend_id;

    std::size_t dim() const { return values.size(); }
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string id() const = 0;
    virtual Completion complete(const ChatRequest& req) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string id() const = 0;
    virtual EmbeddingVector embed(std::string_view text) = 0;
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw Error("DimMismatch", "cosine over dims " + std::to_string(a.dim()) + " and " +
                                       std::to_string(b.dim()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("ZeroVector", "cosine of an all-zero vector");
    const double v = dot / (std::sqrt(na) * std::sqrt(nb));
    // Guard rounding drift out of [-1, 1].
    return v > 1.0 ? 1.0 : (v < -1.0 ? -1.0 : v);
}

// ---------------------------------------------------------------------------
// Content-addressed response cache: one value file per key plus a small JSON
// sidecar. Writes are atomic renames, so identical concurrent writers
// resolve to identical bytes.
// ---------------------------------------------------------------------------

class DiskCache {
public:
    explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) { ensure_dir(dir_); }

    const std::filesystem::path& dir() const { return dir_; }

    std::optional<std::string> get(const std::string& key) const {
        const auto path = value_path(key);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return read_file(path);
    }

    void put(const std::string& key, std::string_view value, const nlohmann::ordered_json& meta) const {
        write_file_atomic(value_path(key), value);
        write_file_atomic(meta_path(key), meta.dump(2) + "\n");
    }

    bool contains(const std::string& key) const { return std::filesystem::exists(value_path(key)); }

    std::filesystem::path value_path(const std::string& key) const { return dir_ / (key + ".txt"); }
    std::filesystem::path meta_path(const std::string& key) const { return dir_ / (key + ".meta.json"); }

private:
    std::filesystem::path dir_;
};

struct RetryPolicy {
    int max_attempts = 5;
    int base_delay_ms = 50;
    int max_delay_ms = 2000;
};

namespace detail {

inline bool retryable(const Error& e) {
    return e.kind() == "RateLimited" || e.kind() == "Timeout" || e.kind() == "BackendUnavailable" ||
           (e.kind() == "BadResponse" && e.code() && *e.code() >= 500);
}

inline int backoff_delay_ms(const RetryPolicy& policy, int attempt, std::optional<int> retry_after_s) {
    if (retry_after_s) return *retry_after_s * 1000;
    const int exp = policy.base_delay_ms * (1 << std::min(attempt, 10));
    const int capped = std::min(exp, policy.max_delay_ms);
    thread_local std::mt19937 jitter_rng{std::random_device{}()};
    std::uniform_int_distribution<int> jitter(0, policy.base_delay_ms);
    return capped + jitter(jitter_rng);
}

}  // namespace detail

/// Caching, rate-limit-aware front end over a chat backend. The cache key is
/// a SHA-256 over the canonical serialization of
/// (backend_id, model_tag, prompt, temperature, top_p, max_tokens), so warm
/// reruns of large jobs are byte-stable. `bypass_cache` forces a live call
/// and overwrites the stored entry; regeneration after a parse failure uses
/// it to obtain a fresh sample under the same key.
class ChatGateway {
public:
    ChatGateway(std::shared_ptr<ChatBackend> backend, std::optional<DiskCache> cache = std::nullopt,
                RetryPolicy retry = {}, std::shared_ptr<Semaphore> in_flight = nullptr)
        : backend_(std::move(backend)), cache_(std::move(cache)), retry_(retry),
          in_flight_(std::move(in_flight)) {}

    const std::string backend_id() const { return backend_->id(); }

    static std::string cache_key(const std::string& backend_id, const ChatRequest& req) {
        nlohmann::ordered_json canon;
        canon["backend_id"] = backend_id;
        canon["model_tag"] = req.model_tag;
        canon["prompt"] = req.prompt;
        canon["temperature"] = format_double(req.temperature);
        canon["top_p"] = format_double(req.top_p);
        canon["max_tokens"] = req.max_tokens;
        return sha256_hex(canon.dump());
    }

    Completion complete(const ChatRequest& req, bool bypass_cache = false) {
        validate(req);
        const std::string key = cache_key(backend_->id(), req);
        if (cache_ && !bypass_cache) {
            if (auto hit = cache_->get(key)) {
                Completion c;
                c.text = std::move(*hit);
                c.cached = true;
                c.backend_id = backend_->id();
                return c;
            }
        }

        Completion c = call_with_retries(req);
        if (cache_) {
            nlohmann::ordered_json meta;
            meta["backend_id"] = c.backend_id;
            meta["model_tag"] = req.model_tag;
            meta["prompt_sha256"] = sha256_hex(req.prompt);
            if (c.prompt_tokens) meta["prompt_tokens"] = *c.prompt_tokens;
            if (c.completion_tokens) meta["completion_tokens"] = *c.completion_tokens;
            cache_->put(key, c.text, meta);
        }
        return c;
    }

private:
    static void validate(const ChatRequest& req) {
        if (req.temperature < 0) throw Error("InvalidRequest", "temperature must be >= 0");
        if (!(req.top_p > 0 && req.top_p <= 1)) throw Error("InvalidRequest", "top_p must be in (0, 1]");
        if (req.max_tokens < 1) throw Error("InvalidRequest", "max_tokens must be >= 1");
    }

    Completion call_with_retries(const ChatRequest& req) {
        SemaphoreGuard guard(in_flight_.get());
        for (int attempt = 0;; ++attempt) {
            try {
                Completion c = backend_->complete(req);
                c.backend_id = backend_->id();
                return c;
            } catch (const Error& e) {
                if (!detail::retryable(e) || attempt + 1 >= retry_.max_attempts) throw;
                const auto retry_after =
                    e.kind() == "RateLimited" ? e.code() : std::optional<int>{};
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(detail::backoff_delay_ms(retry_, attempt, retry_after)));
            }
        }
    }

    std::shared_ptr<ChatBackend> backend_;
    std::optional<DiskCache> cache_;
    RetryPolicy retry_;
    std::shared_ptr<Semaphore> in_flight_;
};

/// Embedding front end with the same cache discipline; vectors are stored as
/// JSON arrays of shortest-round-trip doubles, so cached and live values are
/// bit-identical.
class EmbeddingGateway {
public:
    EmbeddingGateway(std::shared_ptr<EmbeddingBackend> backend,
                     std::optional<DiskCache> cache = std::nullopt,
                     std::shared_ptr<Semaphore> in_flight = nullptr)
        : backend_(std::move(backend)), cache_(std::move(cache)), in_flight_(std::move(in_flight)) {}

    const std::string backend_id() const { return backend_->id(); }

    EmbeddingVector embed(std::string_view text) {
        if (text.empty()) throw Error("EmptyText", "cannot embed empty text");
        std::string key;
        if (cache_) {
            nlohmann::ordered_json canon;
            canon["backend_id"] = backend_->id();
            canon["op"] = "embed";
            canon["text"] = std::string(text);
            key = sha256_hex(canon.dump());
            if (auto hit = cache_->get(key)) {
                EmbeddingVector v;
                v.backend_id = backend_->id();
                for (const auto& x : nlohmann::json::parse(*hit)) v.values.push_back(x.get<double>());
                return v;
            }
        }
        EmbeddingVector v;
        {
            SemaphoreGuard guard(in_flight_.get());
            v = backend_->embed(text);
        }
        v.backend_id = backend_->id();
        for (double x : v.values) {
            if (!std::isfinite(x)) throw Error("BadResponse", "non-finite embedding entry");
        }
        if (cache_) {
            std::string serialized = "[";
            for (std::size_t i = 0; i < v.values.size(); ++i) {
                if (i) serialized += ",";
                serialized += format_double(v.values[i]);
            }
            serialized += "]";
            nlohmann::ordered_json meta;
            meta["backend_id"] = v.backend_id;
            meta["dim"] = v.values.size();
            meta["text_sha256"] = sha256_hex(text);
            cache_->put(key, serialized, meta);
        }
        return v;
    }

private:
    std::shared_ptr<EmbeddingBackend> backend_;
    std::optional<DiskCache> cache_;
    std::shared_ptr<Semaphore> in_flight_;
};

}  // namespace sciqag
