#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <thread>

#include "trawl/http_backends.hpp"

using namespace trawl;

namespace {

// In-process HTTP server for exercising the wire protocol end to end.
class TestServer {
public:
    TestServer() = default;

    ~TestServer() { stop(); }

    template <typename Handler>
    void post(const std::string& path, Handler&& handler) {
        server_.Post(path, std::forward<Handler>(handler));
    }

    std::string start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return "http://127.0.0.1:" + std::to_string(port_);
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

CompletionRequest req(const std::string& prompt) {
    CompletionRequest r;
    r.prompt = prompt;
    return r;
}

} // namespace

TEST_CASE("url parsing") {
    auto url = parse_url("http://localhost:8000/v1/chat/completions");
    CHECK(url.base == "http://localhost:8000");
    CHECK(url.path == "/v1/chat/completions");

    auto bare = parse_url("http://10.0.0.1:9000");
    CHECK(bare.base == "http://10.0.0.1:9000");
    CHECK(bare.path == "/");

    CHECK_THROWS_AS(parse_url("localhost:8000/api"), ConfigError);
    CHECK_THROWS_AS(parse_url("https://api.example.com/v1"), ConfigError);
    CHECK_THROWS_AS(parse_url("ftp://host/x"), ConfigError);
    CHECK_THROWS_AS(parse_url("http:///nohost"), ConfigError);
}

TEST_CASE("completion client speaks the chat-completions protocol") {
    TestServer server;
    nlohmann::json seen_body;
    std::string seen_auth;
    server.post("/v1/chat/completions", [&](const httplib::Request& request,
                                            httplib::Response& response) {
        seen_body = nlohmann::json::parse(request.body);
        auto it = request.headers.find("Authorization");
        seen_auth = it == request.headers.end() ? "" : it->second;
        nlohmann::json reply = {
            {"choices",
             nlohmann::json::array(
                 {{{"message", {{"role", "assistant"}, {"content", "the answer"}}}}})}};
        response.set_content(reply.dump(), "application/json");
    });
    auto base = server.start();

    HttpBackendConfig config;
    config.endpoint = base + "/v1/chat/completions";
    config.api_key = "k3y";
    config.model = "configured-model";
    HttpCompletionClient client(config);

    auto request = req("what is hybrid retrieval?");
    request.temperature = 0.7;
    request.max_output_tokens = 99;
    CHECK(client.complete(request) == "the answer");

    CHECK(seen_auth == "Bearer k3y");
    CHECK(seen_body["model"] == "configured-model");
    CHECK(seen_body["temperature"] == 0.7);
    CHECK(seen_body["max_tokens"] == 99);
    REQUIRE(seen_body["messages"].size() == 1);
    CHECK(seen_body["messages"][0]["role"] == "user");
    CHECK(seen_body["messages"][0]["content"] == "what is hybrid retrieval?");

    // Per-request model override.
    auto override_request = req("x");
    override_request.model_id = "special";
    client.complete(override_request);
    CHECK(seen_body["model"] == "special");
}

TEST_CASE("http status codes map onto the error taxonomy") {
    TestServer server;
    int status = 200;
    std::string body;
    server.post("/v1/chat/completions",
                [&](const httplib::Request&, httplib::Response& response) {
                    response.status = status;
                    response.set_content(body, "application/json");
                });
    auto base = server.start();

    HttpBackendConfig config;
    config.endpoint = base + "/v1/chat/completions";
    HttpCompletionClient client(config);

    status = 401;
    body = "{\"error\": \"bad key\"}";
    CHECK_THROWS_AS(client.complete(req("p")), AuthError);
    status = 403;
    CHECK_THROWS_AS(client.complete(req("p")), AuthError);
    status = 429;
    body = "{\"error\": \"slow down\"}";
    CHECK_THROWS_AS(client.complete(req("p")), TransientBackendError);
    status = 500;
    CHECK_THROWS_AS(client.complete(req("p")), TransientBackendError);
    status = 503;
    CHECK_THROWS_AS(client.complete(req("p")), TransientBackendError);
    status = 400;
    body = "{\"error\": \"bad request\"}";
    CHECK_THROWS_AS(client.complete(req("p")), BackendError);
    status = 400;
    body = "{\"error\": {\"message\": \"maximum context length is 8192 tokens\", "
           "\"code\": \"context_length_exceeded\"}}";
    CHECK_THROWS_AS(client.complete(req("p")), ContextLengthError);

    // Malformed success bodies are backend errors.
    status = 200;
    body = "not json at all";
    CHECK_THROWS_AS(client.complete(req("p")), BackendError);
    body = "{\"choices\": []}";
    CHECK_THROWS_AS(client.complete(req("p")), BackendError);
    body = "{\"unexpected\": true}";
    CHECK_THROWS_AS(client.complete(req("p")), BackendError);
}

TEST_CASE("connection failures surface as transient errors") {
    HttpBackendConfig config;
    config.endpoint = "http://127.0.0.1:1/v1/chat/completions"; // nothing listens here
    config.timeout_s = 2;
    HttpCompletionClient client(config);
    CHECK_THROWS_AS(client.complete(req("p")), TransientBackendError);
}

TEST_CASE("remote embedder speaks the embeddings protocol") {
    TestServer server;
    nlohmann::json seen_body;
    server.post("/v1/embeddings", [&](const httplib::Request& request,
                                      httplib::Response& response) {
        seen_body = nlohmann::json::parse(request.body);
        // Answer out of order to exercise index-based reassembly; the first
        // vector is unnormalized on purpose.
        nlohmann::json reply = {
            {"data", nlohmann::json::array({
                         {{"index", 1}, {"embedding", {0.0, 1.0, 0.0}}},
                         {{"index", 0}, {"embedding", {2.0, 0.0, 0.0}}},
                     })}};
        response.set_content(reply.dump(), "application/json");
    });
    auto base = server.start();

    HttpBackendConfig config;
    config.endpoint = base + "/v1/embeddings";
    config.model = "embed-model";
    RemoteEmbedder embedder(config, 3);
    CHECK(embedder.dimension() == 3);

    auto vectors = embedder.embed_batch({"first text", "second text"}, "Represent this:");
    REQUIRE(vectors.size() == 2);
    CHECK(vectors[0][0] == Catch::Approx(1.0)); // normalized from (2,0,0)
    CHECK(vectors[0][1] == 0.0f);
    CHECK(vectors[1][1] == Catch::Approx(1.0));

    CHECK(seen_body["model"] == "embed-model");
    REQUIRE(seen_body["input"].size() == 2);
    CHECK(seen_body["input"][0] == "Represent this:\nfirst text");
    CHECK(seen_body["input"][1] == "Represent this:\nsecond text");

    CHECK_THROWS_AS(embedder.embed_batch({"ok", "   "}), DataError);
    CHECK(embedder.embed_batch({}).empty());
}

TEST_CASE("remote embedder rejects malformed responses") {
    TestServer server;
    std::string body;
    server.post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& response) {
        response.set_content(body, "application/json");
    });
    auto base = server.start();

    HttpBackendConfig config;
    config.endpoint = base + "/v1/embeddings";
    RemoteEmbedder embedder(config, 3);

    body = "{\"data\": []}"; // size mismatch
    CHECK_THROWS_AS(embedder.embed("text"), BackendError);
    body = "{\"data\": [{\"index\": 0, \"embedding\": [1.0, 0.0]}]}"; // wrong dim
    CHECK_THROWS_AS(embedder.embed("text"), BackendError);
    body = "{\"data\": [{\"index\": 5, \"embedding\": [1.0, 0.0, 0.0]}]}"; // bad index
    CHECK_THROWS_AS(embedder.embed("text"), BackendError);
    body = "{\"data\": [{\"index\": 0, \"embedding\": [0.0, 0.0, 0.0]}]}"; // zero vector
    CHECK_THROWS_AS(embedder.embed("text"), BackendError);
}

TEST_CASE("backend construction validates configuration") {
    HttpBackendConfig config;
    CHECK_THROWS_AS(HttpCompletionClient(config), ConfigError); // empty endpoint
    config.endpoint = "https://secure.example.com/v1";
    CHECK_THROWS_AS(HttpCompletionClient(config), ConfigError); // https rejected
    config.endpoint = "http://ok.example.com/v1";
    CHECK_NOTHROW(HttpCompletionClient(config));
    CHECK_THROWS_AS(RemoteEmbedder(config, 0), ConfigError);

    ::unsetenv("TRAWL_LLM_ENDPOINT");
    CHECK_THROWS_AS(HttpCompletionClient::from_env(), ConfigError);
    ::setenv("TRAWL_LLM_ENDPOINT", "http://127.0.0.1:8123/v1/chat/completions", 1);
    CHECK_NOTHROW(HttpCompletionClient::from_env());
    ::unsetenv("TRAWL_LLM_ENDPOINT");

    ::unsetenv("TRAWL_EMBED_ENDPOINT");
    CHECK_THROWS_AS(RemoteEmbedder::from_env(), ConfigError);
    ::setenv("TRAWL_EMBED_ENDPOINT", "http://127.0.0.1:8123/v1/embeddings", 1);
    ::setenv("TRAWL_EMBED_DIM", "not-a-number", 1);
    CHECK_THROWS_AS(RemoteEmbedder::from_env(), ConfigError);
    ::setenv("TRAWL_EMBED_DIM", "16", 1);
    auto remote = RemoteEmbedder::from_env();
    CHECK(remote->dimension() == 16);
    ::unsetenv("TRAWL_EMBED_ENDPOINT");
    ::unsetenv("TRAWL_EMBED_DIM");
}
