#pragma once

#include <memory>
#include <optional>
#include <string>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "sciqag/gateway.hpp"
#include "sciqag/util.hpp"

namespace sciqag {

/// OpenAI-compatible endpoint configuration. `base_url` may carry a path
/// prefix; "/v1/chat/completions" and "/v1/embeddings" are appended (the
/// "/v1" is skipped if the prefix already ends with it). The API key comes
/// from the SCIQAG_API_KEY environment variable by way of the pipeline
/// config.
struct HttpBackendOptions {
    std::string base_url;
    std::string model = "default";
    std::string api_key;
    std::optional<double> repetition_penalty;
    int timeout_s = 120;
};

namespace detail {

struct SplitUrl {
    std::string host;  // scheme://host[:port]
    std::string path_prefix;
};

inline SplitUrl split_base_url(const std::string& base_url) {
    const std::size_t scheme = base_url.find("://");
    if (scheme == std::string::npos) {
        throw Error("ConfigError", "base_url must start with http:// or https://: " + base_url);
    }
    const std::size_t path = base_url.find('/', scheme + 3);
    SplitUrl out;
    if (path == std::string::npos) {
        out.host = base_url;
    } else {
        out.host = base_url.substr(0, path);
        out.path_prefix = base_url.substr(path);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    }
    return out;
}

inline std::string endpoint_path(const std::string& prefix, const std::string& endpoint) {
    if (prefix.size() >= 3 && prefix.substr(prefix.size() - 3) == "/v1") {
        return prefix + endpoint.substr(3);  // strip the duplicate "/v1"
    }
    return prefix + endpoint;
}

inline nlohmann::json post_json(const HttpBackendOptions& opt, const std::string& endpoint,
                                const nlohmann::ordered_json& body) {
    const SplitUrl url = split_base_url(opt.base_url);
    httplib::Client client(url.host);
    client.set_connection_timeout(opt.timeout_s, 0);
    client.set_read_timeout(opt.timeout_s, 0);
    httplib::Headers headers;
    if (!opt.api_key.empty()) headers.emplace("Authorization", "Bearer " + opt.api_key);

    const auto result = client.Post(endpoint_path(url.path_prefix, endpoint), headers, body.dump(),
                                    "application/json");
    if (!result) {
        const auto err = result.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
            err == httplib::Error::Write) {
            throw Error("Timeout", "request to " + opt.base_url + " timed out");
        }
        throw Error("BackendUnavailable", "cannot reach " + opt.base_url + ": " + httplib::to_string(err));
    }
    if (result->status == 429) {
        std::optional<int> retry_after;
        if (result->has_header("Retry-After")) {
            try {
                retry_after = std::stoi(result->get_header_value("Retry-After"));
            } catch (...) {
            }
        }
        throw Error("RateLimited", "429 from " + opt.base_url, retry_after);
    }
    if (result->status < 200 || result->status >= 300) {
        throw Error("BadResponse", "HTTP " + std::to_string(result->status) + " from " + opt.base_url,
                    result->status);
    }
    try {
        return nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("BadResponse", std::string("response is not JSON: ") + e.what(), result->status);
    }
}

}  // namespace detail

class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendOptions options) : opt_(std::move(options)) {}

    std::string id() const override { return "openai/" + opt_.base_url; }

    Completion complete(const ChatRequest& req) override {
        nlohmann::ordered_json body;
        body["model"] = req.model_tag.empty() || req.model_tag == "default" ? opt_.model : req.model_tag;
        body["messages"] = {{{"role", "user"}, {"content", req.prompt}}};
        body["temperature"] = req.temperature;
        body["top_p"] = req.top_p;
        body["max_tokens"] = req.max_tokens;
        if (opt_.repetition_penalty) body["repetition_penalty"] = *opt_.repetition_penalty;

        const nlohmann::json doc = detail::post_json(opt_, "/v1/chat/completions", body);
        Completion c;
        c.backend_id = id();
        try {
            c.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error("BadResponse", std::string("unexpected completion shape: ") + e.what());
        }
        if (doc.contains("usage")) {
            const auto& usage = doc["usage"];
            if (usage.contains("prompt_tokens")) c.prompt_tokens = usage["prompt_tokens"].get<int>();
            if (usage.contains("completion_tokens")) {
                c.completion_tokens = usage["completion_tokens"].get<int>();
            }
        }
        return c;
    }

private:
    HttpBackendOptions opt_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(HttpBackendOptions options) : opt_(std::move(options)) {}

    std::string id() const override { return "openai-embed/" + opt_.base_url + "/" + opt_.model; }

    EmbeddingVector embed(std::string_view text) override {
        nlohmann::ordered_json body;
        body["model"] = opt_.model;
        body["input"] = std::string(text);
        const nlohmann::json doc = detail::post_json(opt_, "/v1/embeddings", body);
        EmbeddingVector v;
        v.backend_id = id();
        try {
            for (const auto& x : doc.at("data").at(0).at("embedding")) {
                v.values.push_back(x.get<double>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error("BadResponse", std::string("unexpected embedding shape: ") + e.what());
        }
        if (v.values.empty()) throw Error("BadResponse", "empty embedding vector");
        return v;
    }

private:
    HttpBackendOptions opt_;
};

}  // namespace sciqag
