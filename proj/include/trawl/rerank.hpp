#pragma once

// Two-module reranking over the retrieved pool: pointwise 0-10 helpfulness
// scores interpolated with the retriever score, and listwise ordering of the
// top candidates with sliding windows when the pool exceeds one context.
// Both parsers must survive arbitrary model output and always yield a valid
// result (clamped score / true permutation), degrading with a warning rather
// than failing.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trawl/errors.hpp"
#include "trawl/fusion.hpp"
#include "trawl/llm_client.hpp"
#include "trawl/scored_list.hpp"

namespace trawl {

struct RerankConfig {
    int scale_max = 10;
    double w_rerank = 0.6;
    double w_retriever = 0.4;
    int listwise_pool = 100;
    double w_point = 0.5;
    double w_list = 0.5;
    int parse_retries = 1;
    int window_size = 20;
    int window_stride = 10;
    double temperature = 0.0;
    int max_output_tokens = 256;
    std::string model_id = "default";

    void validate() const {
        if (scale_max < 1) throw ConfigError("rerank: scale_max must be >= 1");
        if (std::abs(w_rerank + w_retriever - 1.0) > 1e-9)
            throw ConfigError("rerank: w_rerank + w_retriever must equal 1");
        if (std::abs(w_point + w_list - 1.0) > 1e-9)
            throw ConfigError("rerank: w_point + w_list must equal 1");
        if (w_rerank < 0.0 || w_retriever < 0.0 || w_point < 0.0 || w_list < 0.0)
            throw ConfigError("rerank: weights must be non-negative");
        if (listwise_pool < 1) throw ConfigError("rerank: listwise_pool must be >= 1");
        if (parse_retries < 0) throw ConfigError("rerank: parse_retries must be >= 0");
        if (window_size < 1) throw ConfigError("rerank: window_size must be >= 1");
        if (window_stride < 1 || window_stride > window_size)
            throw ConfigError("rerank: window_stride must be in [1, window_size]");
    }
};

// Prompt templates are versioned assets so experiments stay reproducible;
// the built-in set must match the files shipped under prompts/<version>/.
struct PromptSet {
    std::string version;
    std::string pointwise;
    std::string listwise;

    static PromptSet builtin() {
        PromptSet p;
        p.version = "v1";
        p.pointwise =
            "You are judging how helpful a document is for answering a query.\n"
            "Rate the document's helpfulness for answering the query as a single integer "
            "between 0 and 10, where 0 means completely unhelpful and 10 means directly and "
            "fully helpful.\n"
            "Query: {query}\n"
            "Document: {document}\n"
            "Respond with the integer only.\n";
        p.listwise =
            "You are ranking passages by how well they help answer a query.\n"
            "Query: {query}\n"
            "Passages:\n"
            "{passages}\n"
            "Output the passage identifiers in descending order of relevance to the query, "
            "formatted exactly like [2] > [1] > [3]. Include every passage and output the "
            "ranking only.\n";
        return p;
    }

    static PromptSet load(const std::string& dir, const std::string& version = "v1") {
        auto slurp = [](const std::string& path) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw ConfigError("cannot open prompt file: " + path);
            std::ostringstream buf;
            buf << in.rdbuf();
            return buf.str();
        };
        PromptSet p;
        p.version = version;
        p.pointwise = slurp(dir + "/" + version + "/pointwise.txt");
        p.listwise = slurp(dir + "/" + version + "/listwise.txt");
        return p;
    }
};

namespace detail {

inline std::string render_template(std::string text,
                                   const std::vector<std::pair<std::string, std::string>>& subs) {
    for (const auto& [key, value] : subs) {
        auto pos = text.find(key);
        if (pos == std::string::npos)
            throw ConfigError("prompt template missing placeholder " + key);
        while (pos != std::string::npos) {
            text.replace(pos, key.size(), value);
            pos = text.find(key, pos + value.size());
        }
    }
    return text;
}

} // namespace detail

// First integer token in the response, sign included ("Score: 12 because" -> 12).
inline std::optional<long long> parse_first_int(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        bool neg = text[i] == '-' && i + 1 < text.size() &&
                   std::isdigit(static_cast<unsigned char>(text[i + 1]));
        if (!neg && !std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        std::size_t start = i;
        std::size_t j = neg ? i + 1 : i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        try {
            return std::stoll(std::string(text.substr(start, j - start)));
        } catch (const std::out_of_range&) {
            return text[start] == '-' ? std::numeric_limits<long long>::min()
                                      : std::numeric_limits<long long>::max();
        }
    }
    return std::nullopt;
}

struct PointwiseResult {
    int score = 0;    // clamped to [0, scale_max]
    bool warned = false; // true when no integer was parseable and 0 was recorded
    int llm_calls = 0;
};

inline PointwiseResult pointwise_score(const std::string& query, const std::string& doc_text,
                                       CompletionClient& llm, const RerankConfig& config = {},
                                       const PromptSet& prompts = PromptSet::builtin()) {
    config.validate();
    if (doc_text.empty()) throw DataError("pointwise rerank: empty document text");
    CompletionRequest request;
    request.prompt = detail::render_template(
        prompts.pointwise, {{"{query}", query}, {"{document}", doc_text}});
    request.temperature = config.temperature;
    request.max_output_tokens = config.max_output_tokens;
    request.model_id = config.model_id;

    PointwiseResult result;
    for (int attempt = 0; attempt <= config.parse_retries; ++attempt) {
        std::string response = llm.complete(request);
        ++result.llm_calls;
        if (auto value = parse_first_int(response)) {
            result.score = static_cast<int>(
                std::clamp<long long>(*value, 0, config.scale_max));
            return result;
        }
    }
    result.score = 0;
    result.warned = true;
    return result;
}

// w_rerank * (llm_score / scale_max) + w_retriever * retriever_score.
inline double pointwise_final(int llm_score, double retriever_score,
                              const RerankConfig& config = {}) {
    config.validate();
    if (retriever_score < -1e-9 || retriever_score > 1.0 + 1e-9)
        throw DataError("pointwise final: retriever score " + std::to_string(retriever_score) +
                        " outside [0, 1]");
    retriever_score = std::clamp(retriever_score, 0.0, 1.0);
    int clamped = std::clamp(llm_score, 0, config.scale_max);
    return config.w_rerank * (static_cast<double>(clamped) / config.scale_max) +
           config.w_retriever * retriever_score;
}

// Bracketed numbers in order of first mention: "[3] > [3] > [1]" -> {3, 1}.
// Out-of-range mentions are dropped. Empty result means unparsable.
inline std::vector<int> parse_listwise_mentions(std::string_view text, int count) {
    std::vector<int> mentions;
    std::unordered_set<int> seen;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[') continue;
        std::size_t j = i + 1;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i + 1 || j >= text.size() || text[j] != ']') continue;
        long long value = 0;
        try {
            value = std::stoll(std::string(text.substr(i + 1, j - i - 1)));
        } catch (const std::out_of_range&) {
            continue;
        }
        if (value < 1 || value > count) continue;
        int idx = static_cast<int>(value);
        if (seen.insert(idx).second) mentions.push_back(idx);
        i = j;
    }
    return mentions;
}

struct ListwiseResult {
    std::vector<std::string> order; // permutation of the candidate ids
    bool warned = false;            // some window fell back to input order
    int llm_calls = 0;
};

namespace detail {

inline std::string render_listwise_prompt(const PromptSet& prompts, const std::string& query,
                                          const std::vector<std::string>& texts) {
    std::string passages;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (i > 0) passages += "\n\n";
        passages += "[" + std::to_string(i + 1) + "] " + texts[i];
    }
    return render_template(prompts.listwise, {{"{query}", query}, {"{passages}", passages}});
}

// Rank one window; the returned permutation is of local 1-based indices.
inline std::vector<int> rank_window(const std::string& query,
                                    const std::vector<std::string>& texts,
                                    CompletionClient& llm, const RerankConfig& config,
                                    const PromptSet& prompts, ListwiseResult& result) {
    int count = static_cast<int>(texts.size());
    CompletionRequest request;
    request.prompt = render_listwise_prompt(prompts, query, texts);
    request.temperature = config.temperature;
    request.max_output_tokens = config.max_output_tokens;
    request.model_id = config.model_id;

    std::vector<int> mentions;
    for (int attempt = 0; attempt <= config.parse_retries; ++attempt) {
        std::string response = llm.complete(request);
        ++result.llm_calls;
        mentions = parse_listwise_mentions(response, count);
        if (!mentions.empty()) break;
    }
    if (mentions.empty()) result.warned = true; // fall back to input order below
    std::unordered_set<int> mentioned(mentions.begin(), mentions.end());
    for (int i = 1; i <= count; ++i)
        if (!mentioned.count(i)) mentions.push_back(i); // omitted keep input order
    return mentions;
}

} // namespace detail

// Order the candidates by listwise model judgment. Pools larger than one
// window are ranked bottom-up with overlapping windows (size window_size,
// stride window_stride) so strong low-ranked candidates can bubble to the
// top across windows.
inline ListwiseResult listwise_rank(const std::string& query, const ScoredList& candidates,
                                    const std::function<std::string(const std::string&)>& fetch_text,
                                    CompletionClient& llm, const RerankConfig& config = {},
                                    const PromptSet& prompts = PromptSet::builtin()) {
    config.validate();
    if (candidates.empty()) throw DataError("listwise rerank: empty candidate list");
    if (candidates.size() > static_cast<std::size_t>(config.listwise_pool))
        throw ConfigError("listwise rerank: candidate pool exceeds listwise_pool");

    ListwiseResult result;
    result.order = candidates.ids();
    int n = static_cast<int>(result.order.size());
    if (n == 1) return result;

    auto apply_window = [&](int start, int end) {
        std::vector<std::string> texts;
        texts.reserve(end - start);
        for (int i = start; i < end; ++i) texts.push_back(fetch_text(result.order[i]));
        std::vector<int> local = detail::rank_window(query, texts, llm, config, prompts, result);
        std::vector<std::string> slice(result.order.begin() + start,
                                       result.order.begin() + end);
        for (std::size_t r = 0; r < local.size(); ++r)
            result.order[start + r] = slice[local[r] - 1];
    };

    if (n <= config.window_size) {
        apply_window(0, n);
        return result;
    }
    int end = n;
    while (true) {
        int start = std::max(0, end - config.window_size);
        apply_window(start, end);
        if (start == 0) break;
        end -= config.window_stride;
    }
    return result;
}

// final = w_point * minmax(point) + w_list * (N - rank + 1) / N.
// Ties: original retrieval score descending, then id ascending.
inline ScoredList combine_point_list(const ScoredList& point,
                                     const std::vector<std::string>& list_order,
                                     const RerankConfig& config = {},
                                     const std::unordered_map<std::string, double>&
                                         retrieval_scores = {}) {
    config.validate();
    if (point.empty()) throw DataError("combine: empty pointwise list");
    if (point.size() != list_order.size())
        throw DataError("combine: pointwise and listwise id sets differ in size");
    std::unordered_map<std::string, double> list_score;
    double n = static_cast<double>(list_order.size());
    for (std::size_t r = 0; r < list_order.size(); ++r) {
        if (!point.contains(list_order[r]))
            throw DataError("combine: listwise id '" + list_order[r] +
                            "' missing from pointwise list");
        list_score[list_order[r]] = (n - static_cast<double>(r + 1) + 1.0) / n;
    }
    if (list_score.size() != list_order.size())
        throw DataError("combine: duplicate id in listwise order");

    auto norm_point = minmax_normalize(point).as_map();
    struct Row {
        std::string id;
        double final_score;
        double point_score;
        double retrieval;
    };
    std::vector<Row> rows;
    rows.reserve(point.size());
    for (const auto& entry : point.entries()) {
        double fused = config.w_point * norm_point.at(entry.id) +
                       config.w_list * list_score.at(entry.id);
        auto rit = retrieval_scores.find(entry.id);
        double retrieval = rit == retrieval_scores.end() ? 0.0 : rit->second;
        rows.push_back({entry.id, fused, entry.score, retrieval});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.final_score != b.final_score) return a.final_score > b.final_score;
        if (a.retrieval != b.retrieval) return a.retrieval > b.retrieval;
        if (a.point_score != b.point_score) return a.point_score > b.point_score;
        return a.id < b.id;
    });
    std::vector<ScoredEntry> entries;
    entries.reserve(rows.size());
    for (const auto& row : rows) entries.push_back({row.id, row.final_score});
    return ScoredList::from_ranked_entries(std::move(entries), Provenance::Final);
}

enum class RerankMode { Point, List, Both };

inline RerankMode rerank_mode_from_string(const std::string& name) {
    if (name == "point") return RerankMode::Point;
    if (name == "list") return RerankMode::List;
    if (name == "both") return RerankMode::Both;
    throw ConfigError("rerank: unknown mode '" + name + "' (expected point|list|both)");
}

struct RerankOutcome {
    ScoredList final;
    int warnings = 0;
    int llm_calls = 0;
};

// Drive both modules over a retrieved candidate list whose scores are the
// normalized retriever scores (hybrid output).
inline RerankOutcome rerank_candidates(const std::string& query_text,
                                       const ScoredList& candidates,
                                       const std::function<std::string(const std::string&)>&
                                           fetch_text,
                                       CompletionClient& llm, RerankMode mode,
                                       const RerankConfig& config = {},
                                       const PromptSet& prompts = PromptSet::builtin()) {
    config.validate();
    if (candidates.empty()) throw DataError("rerank: empty candidate list");
    RerankOutcome outcome;

    auto run_pointwise = [&]() {
        std::vector<ScoredEntry> entries;
        entries.reserve(candidates.size());
        for (const auto& entry : candidates.entries()) {
            auto point = pointwise_score(query_text, fetch_text(entry.id), llm, config, prompts);
            outcome.llm_calls += point.llm_calls;
            if (point.warned) ++outcome.warnings;
            entries.push_back(
                {entry.id, pointwise_final(point.score, entry.score, config)});
        }
        return ScoredList::from_entries(std::move(entries), Provenance::RerankPoint);
    };

    switch (mode) {
        case RerankMode::Point: {
            outcome.final = run_pointwise();
            return outcome;
        }
        case RerankMode::List: {
            auto listed = listwise_rank(query_text, candidates, fetch_text, llm, config, prompts);
            outcome.llm_calls += listed.llm_calls;
            if (listed.warned) ++outcome.warnings;
            std::vector<ScoredEntry> entries;
            double n = static_cast<double>(listed.order.size());
            for (std::size_t r = 0; r < listed.order.size(); ++r)
                entries.push_back(
                    {listed.order[r], (n - static_cast<double>(r + 1) + 1.0) / n});
            outcome.final =
                ScoredList::from_ranked_entries(std::move(entries), Provenance::RerankList);
            return outcome;
        }
        case RerankMode::Both: {
            ScoredList point = run_pointwise();
            auto listed = listwise_rank(query_text, candidates, fetch_text, llm, config, prompts);
            outcome.llm_calls += listed.llm_calls;
            if (listed.warned) ++outcome.warnings;
            outcome.final =
                combine_point_list(point, listed.order, config, candidates.as_map());
            return outcome;
        }
    }
    throw ConfigError("rerank: invalid mode");
}

} // namespace trawl
