#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "test_util.hpp"
#include "trawl/query_expand.hpp"

using namespace trawl;

namespace {

// Fixed document ranking: ids scored in the given order, truncated to k.
struct FixedSearch {
    std::vector<std::string> ranking;
    mutable std::vector<std::pair<std::string, int>> calls;

    ScoredList operator()(const std::string& text, int k) const {
        calls.push_back({text, k});
        std::vector<ScoredEntry> entries;
        double score = 1.0;
        for (const auto& id : ranking) {
            if (static_cast<int>(entries.size()) >= k) break;
            entries.push_back({id, score});
            score -= 0.01;
        }
        return ScoredList::from_entries(std::move(entries), Provenance::Dense);
    }
};

std::vector<std::string> make_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("doc" + std::to_string(i));
    return ids;
}

FetchTextFn simple_fetch = [](const std::string& id) { return "text of " + id; };

} // namespace

TEST_CASE("zero rounds returns the query unchanged") {
    Query query{"q1", "how do rockets work"};
    QueueMockClient llm;
    FixedSearch search{make_ids(10), {}};
    ExpansionConfig config;
    config.rounds = 0;
    auto result = expand_query(
        query, [&](const std::string& t, int k) { return search(t, k); }, simple_fetch, llm,
        config);
    CHECK(result.original == query.text);
    CHECK(result.expanded == query.text);
    CHECK(result.state.round == 0);
    CHECK(llm.call_count() == 0);
    CHECK(search.calls.empty());
}

TEST_CASE("two rounds chain retrieval, generation and requery") {
    Query query{"q1", "how do rockets work"};
    QueueMockClient llm({"EXP1", "EXP2"});
    FixedSearch search{make_ids(12), {}};

    auto result = expand_query(
        query, [&](const std::string& t, int k) { return search(t, k); }, simple_fetch, llm,
        ExpansionConfig{});

    CHECK(result.original == query.text);
    CHECK(result.expanded == query.text + "\nEXP2"); // only the final expansion survives
    CHECK(result.state.round == 2);
    REQUIRE(result.state.last_expansion.has_value());
    CHECK(*result.state.last_expansion == "EXP2");

    // Exactly one completion per round.
    CHECK(llm.call_count() == 2);
    // Round 2 searches with the original query plus the round-1 expansion.
    REQUIRE(search.calls.size() == 2);
    CHECK(search.calls[0].first == query.text);
    CHECK(search.calls[0].second == 5);
    CHECK(search.calls[1].first == query.text + "\nEXP1");
    CHECK(search.calls[1].second == 10); // top_k plus the five already seen

    // Rounds see disjoint evidence: the second round skips and refills.
    REQUIRE(result.state.retrieved_per_round.size() == 2);
    const auto& round1 = result.state.retrieved_per_round[0];
    const auto& round2 = result.state.retrieved_per_round[1];
    CHECK(round1 == std::vector<std::string>{"doc0", "doc1", "doc2", "doc3", "doc4"});
    CHECK(round2 == std::vector<std::string>{"doc5", "doc6", "doc7", "doc8", "doc9"});
    for (const auto& id : round2)
        CHECK(std::find(round1.begin(), round1.end(), id) == round1.end());

    // Prompts: round 1 uses the first-round template, round 2 carries the
    // prior answer.
    auto prompts = llm.prompts();
    REQUIRE(prompts.size() == 2);
    CHECK(prompts[0].find("write a correct answering passage") != std::string::npos);
    CHECK(prompts[0].find("Query: how do rockets work") != std::string::npos);
    CHECK(prompts[0].find("[1] text of doc0") != std::string::npos);
    CHECK(prompts[0].find("[5] text of doc4") != std::string::npos);
    CHECK(prompts[0].find("Prior generated answer") == std::string::npos);
    CHECK(prompts[1].find("refine the prior answer") != std::string::npos);
    CHECK(prompts[1].find("Prior generated answer: EXP1") != std::string::npos);
    CHECK(prompts[1].find("[1] text of doc5") != std::string::npos);

    // The expansion temperature rides along on every request.
    for (double t : llm.temperatures()) CHECK(t == 0.7);
}

TEST_CASE("expanded query always starts with the original plus separator") {
    Query query{"q1", "effects of caffeine"};
    for (int rounds : {1, 2, 3}) {
        QueueMockClient llm;
        for (int i = 0; i < rounds; ++i) llm.push("generated answer " + std::to_string(i));
        FixedSearch search{make_ids(30), {}};
        ExpansionConfig config;
        config.rounds = rounds;
        config.separator = " ## ";
        auto result = expand_query(
            query, [&](const std::string& t, int k) { return search(t, k); }, simple_fetch,
            llm, config);
        std::string prefix = query.text + config.separator;
        CHECK(result.expanded.rfind(prefix, 0) == 0);
        CHECK(result.expanded ==
              prefix + "generated answer " + std::to_string(rounds - 1));
    }
}

TEST_CASE("expansion prompts match the golden files") {
    std::string round1 = build_expansion_prompt(
        1, "how do rockets work",
        {{"d1", "Rockets burn fuel."}, {"d2", "Thrust pushes them up."}}, std::nullopt);
    std::string golden1 =
        testutil::read_file(std::string(TRAWL_TEST_DATA_DIR) + "/expansion_round1.txt");
    CHECK(round1 == golden1);

    std::string round2 = build_expansion_prompt(
        2, "how do rockets work", {{"d3", "Newton's third law applies."}},
        std::optional<std::string>("Rockets produce thrust by burning fuel."));
    std::string golden2 =
        testutil::read_file(std::string(TRAWL_TEST_DATA_DIR) + "/expansion_round2.txt");
    CHECK(round2 == golden2);
}

TEST_CASE("prompt construction validates its inputs") {
    CHECK_THROWS_AS(build_expansion_prompt(0, "q", {}, std::nullopt), ConfigError);
    CHECK_THROWS_AS(build_expansion_prompt(2, "q", {}, std::nullopt), ConfigError);
    CHECK_NOTHROW(build_expansion_prompt(1, "q", {}, std::nullopt));
}

TEST_CASE("document texts are truncated before prompting") {
    Query query{"q1", "anything"};
    QueueMockClient llm({"EXP"});
    FixedSearch search{{"d1"}, {}};
    ExpansionConfig config;
    config.rounds = 1;
    config.doc_truncate_tokens = 3;
    FetchTextFn fetch = [](const std::string&) {
        return std::string("alpha beta gamma delta epsilon");
    };
    expand_query(query, [&](const std::string& t, int k) { return search(t, k); }, fetch, llm,
                 config);
    auto prompt = llm.prompts().front();
    CHECK(prompt.find("[1] alpha beta gamma") != std::string::npos);
    CHECK(prompt.find("delta") == std::string::npos);
}

TEST_CASE("evidence runs dry gracefully when the corpus is small") {
    Query query{"q1", "tiny corpus"};
    QueueMockClient llm({"EXP1", "EXP2"});
    FixedSearch search{make_ids(3), {}};
    auto result = expand_query(
        query, [&](const std::string& t, int k) { return search(t, k); }, simple_fetch, llm,
        ExpansionConfig{});
    REQUIRE(result.state.retrieved_per_round.size() == 2);
    CHECK(result.state.retrieved_per_round[0].size() == 3);
    CHECK(result.state.retrieved_per_round[1].empty()); // everything already seen
    CHECK(llm.call_count() == 2);
}

TEST_CASE("backend failure mid-expansion carries partial state") {
    Query query{"q7", "failure handling"};
    QueueMockClient llm({"EXP1"}); // round 2 hits an exhausted queue
    FixedSearch search{make_ids(12), {}};
    try {
        expand_query(query, [&](const std::string& t, int k) { return search(t, k); },
                     simple_fetch, llm, ExpansionConfig{});
        FAIL("expected ExpansionError");
    } catch (const ExpansionError& err) {
        CHECK(std::string(err.what()).find("round 2") != std::string::npos);
        CHECK(std::string(err.what()).find("q7") != std::string::npos);
        CHECK(err.state.round == 1);
        REQUIRE(err.state.last_expansion.has_value());
        CHECK(*err.state.last_expansion == "EXP1");
        CHECK(err.state.seen_doc_ids.size() == 10);
    }
}

TEST_CASE("expansion configuration is validated") {
    Query query{"q1", "x"};
    QueueMockClient llm;
    FixedSearch search{make_ids(3), {}};
    auto run = [&](ExpansionConfig config) {
        return expand_query(query, [&](const std::string& t, int k) { return search(t, k); },
                            simple_fetch, llm, config);
    };
    ExpansionConfig config;
    config.rounds = -1;
    CHECK_THROWS_AS(run(config), ConfigError);
    config = {};
    config.top_k = 0;
    CHECK_THROWS_AS(run(config), ConfigError);
    config = {};
    config.doc_truncate_tokens = 0;
    CHECK_THROWS_AS(run(config), ConfigError);
}
