#pragma once

// Iterative document-interactive query expansion: retrieve, ask the model to
// write an answering passage from the evidence, retrieve again with the
// refined query. Only the original query plus the final-round expansion
// survive, which keeps expanded queries short.

#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "trawl/corpus.hpp"
#include "trawl/errors.hpp"
#include "trawl/llm_client.hpp"
#include "trawl/preprocess.hpp"
#include "trawl/scored_list.hpp"

namespace trawl {

struct ExpansionConfig {
    int rounds = 2;
    int top_k = 5;
    int doc_truncate_tokens = 512;
    double temperature = 0.7;
    std::string separator = "\n";
    int max_output_tokens = 1024;
    std::string model_id = "default";

    void validate() const {
        if (rounds < 0) throw ConfigError("expansion: rounds must be >= 0");
        if (top_k < 1) throw ConfigError("expansion: top_k must be >= 1");
        if (doc_truncate_tokens < 1)
            throw ConfigError("expansion: doc_truncate_tokens must be >= 1");
        if (temperature < 0.0) throw ConfigError("expansion: negative temperature");
        if (max_output_tokens < 1)
            throw ConfigError("expansion: max_output_tokens must be >= 1");
    }
};

struct ExpansionState {
    std::string original_query;
    int round = 0; // rounds completed
    std::optional<std::string> last_expansion;
    std::unordered_set<std::string> seen_doc_ids;
    std::vector<std::vector<std::string>> retrieved_per_round;
};

struct ExpansionResult {
    std::string original;
    std::string expanded;
    ExpansionState state;
};

// Carries however far the loop got when the completion backend gave up.
class ExpansionError : public BackendError {
public:
    ExpansionError(const std::string& message, ExpansionState state)
        : BackendError(message), state(std::move(state)) {}
    ExpansionState state;
};

// Callbacks the expansion loop needs from the retrieval side: a ranked
// search over documents and a document text lookup.
using SearchFn = std::function<ScoredList(const std::string& query_text, int k)>;
using FetchTextFn = std::function<std::string(const std::string& doc_id)>;

namespace detail {

inline std::string number_passages(const std::vector<std::pair<std::string, std::string>>& docs) {
    std::string out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += "[" + std::to_string(i + 1) + "] " + docs[i].second;
    }
    return out;
}

} // namespace detail

inline std::string build_expansion_prompt(int round, const std::string& query,
                                          const std::vector<std::pair<std::string, std::string>>& docs,
                                          const std::optional<std::string>& prior) {
    if (round < 1) throw ConfigError("expansion prompt: round must be >= 1");
    if (round >= 2 && !prior)
        throw ConfigError("expansion prompt: rounds >= 2 require the prior answer");
    std::string prompt;
    if (round == 1) {
        prompt =
            "Given a query and the provided passages (most of which may be incorrect or "
            "irrelevant), identify helpful information from the passages and use it to write "
            "a correct answering passage. Use your own knowledge, not just the example "
            "passages!";
    } else {
        prompt =
            "Given a query, the provided passages (most of which may be incorrect or "
            "irrelevant), and the previous round's answer, identify helpful information from "
            "the passages and refine the prior answer. Ensure the output directly addresses "
            "the original query. Use your own knowledge, not just the example passages!";
    }
    prompt += "\nQuery: " + query;
    prompt += "\nPossible helpful passages:\n" + detail::number_passages(docs);
    if (round >= 2) prompt += "\nPrior generated answer: " + *prior;
    return prompt;
}

// One retrieval and one completion per round. Previously retrieved documents
// are skipped and replaced by the next-ranked unseen ones so each round sees
// fresh evidence.
inline ExpansionResult expand_query(const Query& query, const SearchFn& search,
                                    const FetchTextFn& fetch_text, CompletionClient& llm,
                                    const ExpansionConfig& config = {}) {
    config.validate();
    ExpansionState state;
    state.original_query = query.text;
    if (config.rounds == 0) return {query.text, query.text, state};

    std::string search_text = query.text;
    std::string expansion;
    for (int round = 1; round <= config.rounds; ++round) {
        // Ask for enough extra results to refill past everything seen.
        int want = config.top_k + static_cast<int>(state.seen_doc_ids.size());
        ScoredList ranked = search(search_text, want);
        std::vector<std::pair<std::string, std::string>> docs;
        std::vector<std::string> round_ids;
        for (const auto& entry : ranked.entries()) {
            if (state.seen_doc_ids.count(entry.id)) continue;
            docs.emplace_back(entry.id,
                              truncate_tokens(fetch_text(entry.id), config.doc_truncate_tokens));
            round_ids.push_back(entry.id);
            if (docs.size() == static_cast<std::size_t>(config.top_k)) break;
        }
        for (const auto& id : round_ids) state.seen_doc_ids.insert(id);
        state.retrieved_per_round.push_back(std::move(round_ids));

        std::optional<std::string> prior;
        if (round >= 2) prior = expansion;
        CompletionRequest request;
        request.prompt = build_expansion_prompt(round, query.text, docs, prior);
        request.temperature = config.temperature;
        request.max_output_tokens = config.max_output_tokens;
        request.model_id = config.model_id;
        try {
            expansion = llm.complete(request);
        } catch (const BackendError& err) {
            throw ExpansionError("expansion failed at round " + std::to_string(round) +
                                     " for query '" + query.id + "': " + err.what(),
                                 std::move(state));
        }
        state.last_expansion = expansion;
        state.round = round;
        search_text = query.text + config.separator + expansion;
    }
    return {query.text, query.text + config.separator + expansion, std::move(state)};
}

} // namespace trawl
