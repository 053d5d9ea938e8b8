#pragma once

// Remote backends: a chat-completions client and an embeddings client over
// plain HTTP. TLS is intentionally out of scope for v1 — point the endpoint
// at a local gateway if the upstream service is https-only.

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "trawl/embedding.hpp"
#include "trawl/errors.hpp"
#include "trawl/llm_client.hpp"

namespace trawl {

struct ParsedUrl {
    std::string base; // scheme://host[:port]
    std::string path; // leading slash, "/" if absent
};

inline ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint url missing scheme: " + url);
    std::string scheme = url.substr(0, scheme_end);
    if (scheme == "https")
        throw ConfigError("https endpoints are not supported in this build; "
                          "use an http gateway: " + url);
    if (scheme != "http") throw ConfigError("unsupported url scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    if (path_start == scheme_end + 3) throw ConfigError("endpoint url missing host: " + url);
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string env_or(const char* name, const std::string& fallback) {
    const char* value = std::getenv(name);
    return value && *value ? std::string(value) : fallback;
}

inline std::string require_env(const char* name) {
    const char* value = std::getenv(name);
    if (!value || !*value)
        throw ConfigError(std::string("required environment variable not set: ") + name);
    return value;
}

namespace detail {

// 401/403 are auth; 408/429/5xx are worth retrying; a 400 naming a context
// overflow is surfaced distinctly so callers can truncate and re-ask.
[[noreturn]] inline void throw_for_http(int status, const std::string& body) {
    std::string brief = body.substr(0, 200);
    if (status == 401 || status == 403)
        throw AuthError("authentication failed (HTTP " + std::to_string(status) + "): " + brief);
    if (body.find("context_length") != std::string::npos ||
        body.find("context length") != std::string::npos ||
        body.find("maximum context") != std::string::npos)
        throw ContextLengthError("context length exceeded (HTTP " + std::to_string(status) +
                                 "): " + brief);
    if (status == 408 || status == 429 || status >= 500)
        throw TransientBackendError("backend returned HTTP " + std::to_string(status) + ": " +
                                    brief);
    throw BackendError("backend returned HTTP " + std::to_string(status) + ": " + brief);
}

inline nlohmann::json post_json(const std::string& endpoint, const std::string& api_key,
                                const nlohmann::json& body, int timeout_s) {
    ParsedUrl url = parse_url(endpoint);
    httplib::Client client(url.base);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(timeout_s, 0);
    client.set_write_timeout(timeout_s, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto result = client.Post(url.path, headers, body.dump(), "application/json");
    if (!result)
        throw TransientBackendError("request to " + endpoint + " failed: " +
                                    httplib::to_string(result.error()));
    if (result->status != 200) throw_for_http(result->status, result->body);
    nlohmann::json parsed = nlohmann::json::parse(result->body, nullptr, false);
    if (parsed.is_discarded())
        throw BackendError("backend returned non-JSON body from " + endpoint);
    return parsed;
}

} // namespace detail

struct HttpBackendConfig {
    std::string endpoint;
    std::string api_key;
    std::string model = "default";
    int timeout_s = 120;
};

// Chat-completions wire shape:
//   {"model", "messages": [{"role","content"}], "temperature", "max_tokens"}
//   -> choices[0].message.content
class HttpCompletionClient : public CompletionClient {
public:
    explicit HttpCompletionClient(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.endpoint.empty())
            throw ConfigError("completion backend: endpoint not configured");
        parse_url(config_.endpoint); // fail fast on malformed urls
    }

    // Reads TRAWL_LLM_ENDPOINT / TRAWL_LLM_API_KEY / TRAWL_LLM_MODEL.
    static std::shared_ptr<HttpCompletionClient> from_env() {
        HttpBackendConfig config;
        config.endpoint = require_env("TRAWL_LLM_ENDPOINT");
        config.api_key = env_or("TRAWL_LLM_API_KEY", "");
        config.model = env_or("TRAWL_LLM_MODEL", "default");
        return std::make_shared<HttpCompletionClient>(std::move(config));
    }

    std::string complete(const CompletionRequest& request) override {
        request.validate();
        nlohmann::json body = {
            {"model", request.model_id == "default" ? config_.model : request.model_id},
            {"messages", nlohmann::json::array({
                             {{"role", "user"}, {"content", request.prompt}},
                         })},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens},
        };
        nlohmann::json response =
            detail::post_json(config_.endpoint, config_.api_key, body, config_.timeout_s);
        if (!response.contains("choices") || !response["choices"].is_array() ||
            response["choices"].empty())
            throw BackendError("completion response missing choices");
        const auto& message = response["choices"][0]["message"];
        if (!message.contains("content") || !message["content"].is_string())
            throw BackendError("completion response missing message content");
        return message["content"].get<std::string>();
    }

private:
    HttpBackendConfig config_;
};

// Embeddings wire shape:
//   {"model", "input": [string,...]} -> {"data": [{"index", "embedding"},...]}
class RemoteEmbedder : public Embedder {
public:
    RemoteEmbedder(HttpBackendConfig config, int dimension,
                   std::shared_ptr<Semaphore> semaphore = global_request_semaphore())
        : config_(std::move(config)), dim_(dimension), semaphore_(std::move(semaphore)) {
        if (config_.endpoint.empty())
            throw ConfigError("embedding backend: endpoint not configured");
        if (dim_ < 1) throw ConfigError("embedding backend: dimension must be >= 1");
        parse_url(config_.endpoint);
    }

    // Reads TRAWL_EMBED_ENDPOINT / TRAWL_EMBED_API_KEY / TRAWL_EMBED_MODEL /
    // TRAWL_EMBED_DIM.
    static std::shared_ptr<RemoteEmbedder> from_env() {
        HttpBackendConfig config;
        config.endpoint = require_env("TRAWL_EMBED_ENDPOINT");
        config.api_key = env_or("TRAWL_EMBED_API_KEY", "");
        config.model = env_or("TRAWL_EMBED_MODEL", "default");
        std::string dim_text = require_env("TRAWL_EMBED_DIM");
        int dim = 0;
        try {
            dim = std::stoi(dim_text);
        } catch (const std::exception&) {
            throw ConfigError("TRAWL_EMBED_DIM is not an integer: " + dim_text);
        }
        return std::make_shared<RemoteEmbedder>(std::move(config), dim);
    }

    int dimension() const override { return dim_; }

    EmbeddingVector embed(std::string_view text, std::string_view instruction = {}) override {
        auto batch = embed_batch({std::string(text)}, instruction);
        return std::move(batch.front());
    }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                             std::string_view instruction = {}) override {
        if (texts.empty()) return {};
        std::vector<std::string> inputs;
        inputs.reserve(texts.size());
        for (const auto& t : texts) {
            if (t.find_first_not_of(" \t\r\n") == std::string::npos)
                throw DataError("embedding backend: blank input text");
            inputs.push_back(compose(t, instruction));
        }
        nlohmann::json body = {{"model", config_.model}, {"input", inputs}};
        nlohmann::json response;
        {
            ScopedPermit permit(*semaphore_);
            response =
                detail::post_json(config_.endpoint, config_.api_key, body, config_.timeout_s);
        }
        if (!response.contains("data") || !response["data"].is_array() ||
            response["data"].size() != texts.size())
            throw BackendError("embedding response data size mismatch");
        std::vector<EmbeddingVector> out(texts.size());
        std::vector<bool> filled(texts.size(), false);
        for (const auto& item : response["data"]) {
            if (!item.contains("index") || !item.contains("embedding"))
                throw BackendError("embedding response item missing index/embedding");
            std::size_t index = item["index"].get<std::size_t>();
            if (index >= texts.size() || filled[index])
                throw BackendError("embedding response has bad index " + std::to_string(index));
            EmbeddingVector vec = item["embedding"].get<EmbeddingVector>();
            if (vec.size() != static_cast<std::size_t>(dim_))
                throw BackendError("embedding dimension mismatch: got " +
                                   std::to_string(vec.size()) + ", configured " +
                                   std::to_string(dim_));
            normalize(vec);
            out[index] = std::move(vec);
            filled[index] = true;
        }
        for (bool f : filled)
            if (!f) throw BackendError("embedding response missing an index");
        return out;
    }

private:
    static std::string compose(std::string_view text, std::string_view instruction) {
        if (instruction.empty()) return std::string(text);
        std::string out(instruction);
        out += "\n";
        out += text;
        return out;
    }

    static void normalize(EmbeddingVector& vec) {
        double norm = l2_norm(std::span<const float>(vec));
        if (norm == 0.0) throw BackendError("embedding backend returned a zero vector");
        for (auto& v : vec) v = static_cast<float>(v / norm);
    }

    HttpBackendConfig config_;
    int dim_;
    std::shared_ptr<Semaphore> semaphore_;
};

} // namespace trawl
