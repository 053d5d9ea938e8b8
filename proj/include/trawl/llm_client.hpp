#pragma once

// Completion-service contract shared by expansion, reranking, and data
// curation, plus the deterministic mocks and record/replay machinery that
// keep the whole pipeline testable offline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "trawl/embedding.hpp" // fnv1a64
#include "trawl/errors.hpp"

namespace trawl {

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::string model_id = "default";

    void validate() const {
        if (prompt.empty()) throw ConfigError("completion request: empty prompt");
        if (temperature < 0.0) throw ConfigError("completion request: negative temperature");
        if (max_output_tokens < 1)
            throw ConfigError("completion request: max_output_tokens must be >= 1");
    }
};

class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

inline uint64_t prompt_digest(std::string_view prompt) {
    return fnv1a64(prompt, kDefaultHashSeed);
}

inline std::string digest_hex(uint64_t digest) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << digest;
    return out.str();
}

// Counting semaphore with an adjustable limit; bounds in-flight requests
// process-wide when shared across clients.
class Semaphore {
public:
    explicit Semaphore(int limit) : limit_(limit) {
        if (limit < 1) throw ConfigError("semaphore: limit must be >= 1");
    }

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < limit_; });
        ++in_flight_;
    }

    void release() {
        {
            std::lock_guard lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

    void set_limit(int limit) {
        if (limit < 1) throw ConfigError("semaphore: limit must be >= 1");
        {
            std::lock_guard lock(mu_);
            limit_ = limit;
        }
        cv_.notify_all();
    }

    int limit() const {
        std::lock_guard lock(mu_);
        return limit_;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    int limit_;
    int in_flight_ = 0;
};

class ScopedPermit {
public:
    explicit ScopedPermit(Semaphore& sem) : sem_(sem) { sem_.acquire(); }
    ~ScopedPermit() { sem_.release(); }
    ScopedPermit(const ScopedPermit&) = delete;
    ScopedPermit& operator=(const ScopedPermit&) = delete;

private:
    Semaphore& sem_;
};

inline std::shared_ptr<Semaphore> global_request_semaphore() {
    static auto sem = std::make_shared<Semaphore>(8);
    return sem;
}

// ---------------------------------------------------------------------------
// Retry wrapper

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{1000};
    bool jitter = true;
    uint64_t jitter_seed = 1; // fixed by default so retry timing is replayable
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;
using LogFn = std::function<void(const std::string&)>;

inline void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

// Retries only TransientBackendError; auth and context-length failures
// propagate immediately so callers can react (re-authenticate, truncate).
class RetryingClient : public CompletionClient {
public:
    RetryingClient(std::shared_ptr<CompletionClient> inner, RetryPolicy policy = {},
                   SleepFn sleep = default_sleep, LogFn log = nullptr)
        : inner_(std::move(inner)), policy_(policy), sleep_(std::move(sleep)),
          log_(std::move(log)), rng_(policy.jitter_seed) {
        if (policy_.max_attempts < 1)
            throw ConfigError("retry policy: max_attempts must be >= 1");
    }

    std::string complete(const CompletionRequest& request) override {
        for (int attempt = 1;; ++attempt) {
            try {
                return inner_->complete(request);
            } catch (const TransientBackendError& err) {
                {
                    std::lock_guard lock(mu_);
                    ++total_attempts_;
                }
                if (attempt >= policy_.max_attempts) {
                    emit_log("completion failed after " + std::to_string(attempt) +
                             " attempts: " + err.what());
                    throw;
                }
                auto delay = backoff_delay(attempt);
                emit_log("transient completion failure (attempt " + std::to_string(attempt) +
                         "/" + std::to_string(policy_.max_attempts) + "): " + err.what() +
                         "; retrying in " + std::to_string(delay.count()) + "ms");
                if (sleep_) sleep_(delay);
            }
        }
    }

    // Failed attempts observed so far (successes are not counted).
    int total_failed_attempts() const {
        std::lock_guard lock(mu_);
        return total_attempts_;
    }

private:
    std::chrono::milliseconds backoff_delay(int attempt) {
        double factor = std::pow(2.0, attempt - 1);
        double ms = static_cast<double>(policy_.base_delay.count()) * factor;
        if (policy_.jitter) {
            std::lock_guard lock(mu_);
            std::uniform_real_distribution<double> dist(0.0, 0.5);
            ms *= 1.0 + dist(rng_);
        }
        return std::chrono::milliseconds(static_cast<long long>(ms));
    }

    void emit_log(const std::string& line) {
        if (log_) log_(line);
    }

    std::shared_ptr<CompletionClient> inner_;
    RetryPolicy policy_;
    SleepFn sleep_;
    LogFn log_;
    mutable std::mutex mu_;
    std::mt19937_64 rng_;
    int total_attempts_ = 0;
};

// Applies the shared in-flight bound around an inner client.
class ThrottledClient : public CompletionClient {
public:
    ThrottledClient(std::shared_ptr<CompletionClient> inner,
                    std::shared_ptr<Semaphore> semaphore = global_request_semaphore())
        : inner_(std::move(inner)), semaphore_(std::move(semaphore)) {}

    std::string complete(const CompletionRequest& request) override {
        ScopedPermit permit(*semaphore_);
        return inner_->complete(request);
    }

private:
    std::shared_ptr<CompletionClient> inner_;
    std::shared_ptr<Semaphore> semaphore_;
};

// ---------------------------------------------------------------------------
// Test doubles

// Ordered canned responses; errors on exhaustion rather than recycling.
class QueueMockClient : public CompletionClient {
public:
    QueueMockClient() = default;
    explicit QueueMockClient(std::vector<std::string> responses) {
        for (auto& r : responses) queue_.push_back(std::move(r));
    }

    void push(std::string response) {
        std::lock_guard lock(mu_);
        queue_.push_back(std::move(response));
    }

    std::string complete(const CompletionRequest& request) override {
        request.validate();
        std::lock_guard lock(mu_);
        prompts_.push_back(request.prompt);
        temperatures_.push_back(request.temperature);
        if (queue_.empty())
            throw BackendError("mock queue exhausted after " +
                               std::to_string(prompts_.size() - 1) + " responses");
        std::string out = std::move(queue_.front());
        queue_.pop_front();
        return out;
    }

    std::size_t call_count() const {
        std::lock_guard lock(mu_);
        return prompts_.size();
    }
    std::vector<std::string> prompts() const {
        std::lock_guard lock(mu_);
        return prompts_;
    }
    std::vector<double> temperatures() const {
        std::lock_guard lock(mu_);
        return temperatures_;
    }

private:
    mutable std::mutex mu_;
    std::deque<std::string> queue_;
    std::vector<std::string> prompts_;
    std::vector<double> temperatures_;
};

// Maps prompt digest -> fixed response; identical prompts always get
// identical responses.
class DigestMockClient : public CompletionClient {
public:
    void add(std::string_view prompt, std::string response) {
        responses_[prompt_digest(prompt)] = std::move(response);
    }

    std::string complete(const CompletionRequest& request) override {
        request.validate();
        auto it = responses_.find(prompt_digest(request.prompt));
        if (it == responses_.end())
            throw BackendError("digest mock: no response scripted for prompt digest " +
                               digest_hex(prompt_digest(request.prompt)));
        return it->second;
    }

private:
    std::unordered_map<uint64_t, std::string> responses_;
};

// Fully offline stand-in for `--backend mock` CLI runs: a pure function of
// the prompt, shaped so downstream parsers see well-formed output. Relies on
// sentinel phrases present in the built-in prompt assets.
class OfflineStubClient : public CompletionClient {
public:
    std::string complete(const CompletionRequest& request) override {
        request.validate();
        uint64_t digest = prompt_digest(request.prompt);
        if (request.prompt.find("single integer between 0 and 10") != std::string::npos)
            return std::to_string(digest % 11);
        if (request.prompt.find("descending order of relevance") != std::string::npos)
            return "[1]"; // parser appends the rest in original order
        if (request.prompt.find("score and reason in JSON format") != std::string::npos)
            return "{\"score\": " + std::to_string(digest % 11) +
                   ", \"reason\": \"offline stub\"}";
        return "(offline expansion stub " + digest_hex(digest).substr(0, 8) + ")";
    }
};

// ---------------------------------------------------------------------------
// Record / replay

// Appends one JSON object per completed request so a run can be replayed
// byte-for-byte without the backend.
class RecordingClient : public CompletionClient {
public:
    RecordingClient(std::shared_ptr<CompletionClient> inner, const std::string& cassette_path,
                    std::string run_id = "run")
        : inner_(std::move(inner)), out_(cassette_path, std::ios::app),
          run_id_(std::move(run_id)) {
        if (!out_) throw DataError("cannot open cassette for writing: " + cassette_path);
    }

    std::string complete(const CompletionRequest& request) override {
        auto start = std::chrono::steady_clock::now();
        std::string response = inner_->complete(request);
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        nlohmann::json record = {
            {"run_id", run_id_},
            {"digest", digest_hex(prompt_digest(request.prompt))},
            {"prompt", request.prompt},
            {"response", response},
            {"model", request.model_id},
            {"temperature", request.temperature},
            {"latency_ms", elapsed.count()},
        };
        std::lock_guard lock(mu_);
        out_ << record.dump() << "\n";
        out_.flush();
        return response;
    }

private:
    std::shared_ptr<CompletionClient> inner_;
    std::ofstream out_;
    std::string run_id_;
    std::mutex mu_;
};

// Serves responses from a cassette by prompt digest. Repeated identical
// prompts replay their recorded responses in order; once a digest's queue
// is exhausted its last response is reused (recording captures every call,
// so exact replays never need the reuse path).
class ReplayClient : public CompletionClient {
public:
    explicit ReplayClient(const std::string& cassette_path) {
        std::ifstream in(cassette_path);
        if (!in) throw DataError("cannot open cassette: " + cassette_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
            if (record.is_discarded() || !record.contains("prompt") ||
                !record.contains("response"))
                throw DataError("cassette " + cassette_path + ":" + std::to_string(line_no) +
                                ": malformed record");
            responses_[prompt_digest(record["prompt"].get<std::string>())].push_back(
                record["response"].get<std::string>());
        }
    }

    std::string complete(const CompletionRequest& request) override {
        request.validate();
        std::lock_guard lock(mu_);
        auto it = responses_.find(prompt_digest(request.prompt));
        if (it == responses_.end() || it->second.empty())
            throw BackendError("cassette miss for prompt digest " +
                               digest_hex(prompt_digest(request.prompt)));
        auto& queue = it->second;
        auto& cursor = cursors_[prompt_digest(request.prompt)];
        std::string out = queue[std::min(cursor, queue.size() - 1)];
        ++cursor;
        return out;
    }

private:
    std::mutex mu_;
    std::unordered_map<uint64_t, std::vector<std::string>> responses_;
    std::unordered_map<uint64_t, std::size_t> cursors_;
};

} // namespace trawl
