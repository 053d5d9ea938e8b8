#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include "test_util.hpp"
#include "trawl/llm_client.hpp"

using namespace trawl;

namespace {

// Fails with a transient error a set number of times, then succeeds.
class FlakyClient : public CompletionClient {
public:
    explicit FlakyClient(int failures, std::string response = "ok")
        : failures_(failures), response_(std::move(response)) {}

    std::string complete(const CompletionRequest&) override {
        ++calls_;
        if (fail_count_ < failures_) {
            ++fail_count_;
            throw TransientBackendError("simulated 503");
        }
        return response_;
    }

    int calls() const { return calls_; }

private:
    int failures_;
    int fail_count_ = 0;
    int calls_ = 0;
    std::string response_;
};

class ThrowingClient : public CompletionClient {
public:
    explicit ThrowingClient(std::function<void()> thrower) : thrower_(std::move(thrower)) {}
    std::string complete(const CompletionRequest&) override {
        thrower_();
        return "";
    }

private:
    std::function<void()> thrower_;
};

CompletionRequest req(const std::string& prompt) {
    CompletionRequest r;
    r.prompt = prompt;
    return r;
}

} // namespace

TEST_CASE("completion request validation") {
    CompletionRequest r;
    CHECK_THROWS_AS(r.validate(), ConfigError); // empty prompt
    r.prompt = "hello";
    CHECK_NOTHROW(r.validate());
    r.temperature = -0.5;
    CHECK_THROWS_AS(r.validate(), ConfigError);
    r.temperature = 0.7;
    r.max_output_tokens = 0;
    CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("queue mock returns responses in order and then errors") {
    QueueMockClient mock({"first", "second"});
    CHECK(mock.complete(req("p1")) == "first");
    CHECK(mock.complete(req("p2")) == "second");
    CHECK_THROWS_AS(mock.complete(req("p3")), BackendError);
    CHECK(mock.call_count() == 3);
    CHECK(mock.prompts() == std::vector<std::string>{"p1", "p2", "p3"});

    mock.push("third");
    CHECK(mock.complete(req("p4")) == "third");

    auto r = req("temp check");
    r.temperature = 0.7;
    mock.push("x");
    mock.complete(r);
    CHECK(mock.temperatures().back() == 0.7);
}

TEST_CASE("digest mock keys responses off the prompt text") {
    DigestMockClient mock;
    mock.add("what is bm25", "a ranking function");
    CHECK(mock.complete(req("what is bm25")) == "a ranking function");
    CHECK(mock.complete(req("what is bm25")) == "a ranking function");
    CHECK_THROWS_AS(mock.complete(req("unknown prompt")), BackendError);
}

TEST_CASE("offline stub recognizes task markers") {
    OfflineStubClient stub;
    auto pointwise = stub.complete(
        req("judge this and output a single integer between 0 and 10.\nDoc: x"));
    int value = std::stoi(pointwise);
    CHECK(value >= 0);
    CHECK(value <= 10);
    // Deterministic per prompt.
    CHECK(stub.complete(req("judge this and output a single integer between 0 and 10.\nDoc: x")) ==
          pointwise);

    CHECK(stub.complete(req("list them in descending order of relevance please")) == "[1]");

    auto annotation = stub.complete(
        req("please output the score and reason in JSON format.\nQuery: x\nDoc: y"));
    auto parsed = nlohmann::json::parse(annotation);
    CHECK(parsed["score"].get<int>() >= 0);
    CHECK(parsed["score"].get<int>() <= 10);

    auto other = stub.complete(req("write an answer to this question"));
    CHECK(!other.empty());
    CHECK(other == stub.complete(req("write an answer to this question")));
}

TEST_CASE("retrying client retries transient failures with exponential backoff") {
    auto inner = std::make_shared<FlakyClient>(2);
    RetryPolicy policy;
    policy.max_attempts = 3;
    policy.base_delay = std::chrono::milliseconds(10);
    policy.jitter = false;
    std::vector<std::chrono::milliseconds> sleeps;
    RetryingClient client(inner, policy,
                          [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    CHECK(client.complete(req("p")) == "ok");
    CHECK(inner->calls() == 3);
    CHECK(client.total_failed_attempts() == 2);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[0] == std::chrono::milliseconds(10));
    CHECK(sleeps[1] == std::chrono::milliseconds(20)); // doubles per attempt
}

TEST_CASE("retrying client gives up after max attempts") {
    auto inner = std::make_shared<FlakyClient>(1000);
    RetryPolicy policy;
    policy.max_attempts = 3;
    policy.base_delay = std::chrono::milliseconds(1);
    policy.jitter = false;
    int sleep_calls = 0;
    std::vector<std::string> log_lines;
    RetryingClient client(
        inner, policy, [&](std::chrono::milliseconds) { ++sleep_calls; },
        [&](const std::string& line) { log_lines.push_back(line); });
    CHECK_THROWS_AS(client.complete(req("p")), TransientBackendError);
    CHECK(inner->calls() == 3);
    CHECK(sleep_calls == 2); // no sleep after the final failure
    CHECK(log_lines.size() == 3);
}

TEST_CASE("retrying client does not retry non-transient errors") {
    for (auto thrower : std::vector<std::function<void()>>{
             [] { throw AuthError("401"); },
             [] { throw ContextLengthError("too long"); },
             [] { throw BackendError("malformed"); }}) {
        auto inner = std::make_shared<ThrowingClient>(thrower);
        int sleep_calls = 0;
        RetryingClient client(inner, {}, [&](std::chrono::milliseconds) { ++sleep_calls; });
        CHECK_THROWS_AS(client.complete(req("p")), BackendError);
        CHECK(sleep_calls == 0);
        CHECK(client.total_failed_attempts() == 0);
    }
}

TEST_CASE("jittered backoff stays within one half of the base step") {
    auto inner = std::make_shared<FlakyClient>(1);
    RetryPolicy policy;
    policy.base_delay = std::chrono::milliseconds(100);
    policy.jitter = true;
    std::vector<std::chrono::milliseconds> sleeps;
    RetryingClient client(inner, policy,
                          [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    client.complete(req("p"));
    REQUIRE(sleeps.size() == 1);
    CHECK(sleeps[0].count() >= 100);
    CHECK(sleeps[0].count() < 150);
}

TEST_CASE("semaphore bounds concurrent completions") {
    auto semaphore = std::make_shared<Semaphore>(2);

    // Inner client that tracks its own concurrency.
    class CountingClient : public CompletionClient {
    public:
        std::string complete(const CompletionRequest&) override {
            int now = ++in_flight;
            int seen = max_seen.load();
            while (now > seen && !max_seen.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            --in_flight;
            return "done";
        }
        std::atomic<int> in_flight{0};
        std::atomic<int> max_seen{0};
    };

    auto inner = std::make_shared<CountingClient>();
    ThrottledClient client(inner, semaphore);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&] { client.complete(req("p")); });
    for (auto& t : threads) t.join();
    CHECK(inner->max_seen.load() <= 2);
    CHECK(inner->max_seen.load() >= 1);

    CHECK_THROWS_AS(Semaphore(0), ConfigError);
    semaphore->set_limit(4);
    CHECK(semaphore->limit() == 4);
}

TEST_CASE("global request semaphore defaults to eight permits") {
    CHECK(global_request_semaphore()->limit() == 8);
}

TEST_CASE("recording then replaying reproduces responses without a backend") {
    testutil::TempDir dir("cassette");
    auto cassette = dir.file("run.jsonl");
    {
        auto inner = std::make_shared<QueueMockClient>(
            std::vector<std::string>{"resp A", "resp B", "resp C"});
        RecordingClient recorder(inner, cassette);
        CHECK(recorder.complete(req("same prompt")) == "resp A");
        CHECK(recorder.complete(req("same prompt")) == "resp B");
        CHECK(recorder.complete(req("other prompt")) == "resp C");
    }
    ReplayClient replay(cassette);
    // Repeated prompts replay in recorded order.
    CHECK(replay.complete(req("same prompt")) == "resp A");
    CHECK(replay.complete(req("same prompt")) == "resp B");
    // Exhausted digests reuse the final recording.
    CHECK(replay.complete(req("same prompt")) == "resp B");
    CHECK(replay.complete(req("other prompt")) == "resp C");
    CHECK_THROWS_AS(replay.complete(req("never recorded")), BackendError);

    CHECK_THROWS_AS(ReplayClient(dir.file("missing.jsonl")), DataError);
}

TEST_CASE("prompt digests are stable and hex-rendered") {
    auto d = prompt_digest("hello");
    CHECK(d == prompt_digest("hello"));
    CHECK(d != prompt_digest("hello!"));
    auto hex = digest_hex(d);
    CHECK(hex.size() == 16);
    CHECK(hex.find_first_not_of("0123456789abcdef") == std::string::npos);
}
