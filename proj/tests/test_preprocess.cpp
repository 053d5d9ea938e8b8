#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "test_util.hpp"
#include "trawl/embedding.hpp"
#include "trawl/preprocess.hpp"

using namespace trawl;

TEST_CASE("clean_text normalizes whitespace and merges broken lines") {
    CHECK(clean_text("  hello   world  ") == "hello world");
    CHECK(clean_text("a\n\n\n\nb") == "a\n\nb"); // blank runs collapse to one
    // Mid-sentence break: previous line lacks terminal punctuation and the
    // next starts lowercase.
    CHECK(clean_text("the quick\nbrown fox.") == "the quick brown fox.");
    // Terminal punctuation blocks the merge.
    CHECK(clean_text("End of sentence.\nnext line") == "End of sentence.\nnext line");
    // Uppercase start blocks the merge.
    CHECK(clean_text("a heading\nNew paragraph") == "a heading\nNew paragraph");
    CHECK(clean_text("tabs\tand\r carriage") == "tabs and carriage");
    CHECK(clean_text("") == "");
    CHECK(clean_text("   \n  \t \n ") == "");
}

TEST_CASE("clean_text is idempotent") {
    std::vector<std::string> samples = {
        "  hello   world  ",
        "a\n\n\nb\nc continues\nhere.",
        "Header\n\nBody text that\nwraps onto the next line.\n\n\nFooter.",
        "1. item one\n2. item two",
        "ends with colon:\nthen lowercase",
    };
    for (const auto& sample : samples) {
        auto once = clean_text(sample);
        CHECK(clean_text(once) == once);
    }
}

TEST_CASE("token counting and truncation") {
    CHECK(count_tokens("") == 0);
    CHECK(count_tokens("one") == 1);
    CHECK(count_tokens("  one   two three  ") == 3);
    CHECK(truncate_tokens("one two three four", 2) == "one two");
    CHECK(truncate_tokens("one two", 10) == "one two");
    CHECK(truncate_tokens("one two", 0) == "");
    CHECK(truncate_tokens("  padded   words here  ", 2) == "  padded   words");
}

TEST_CASE("split_sentences honors terminal punctuation") {
    auto sents = split_sentences("First one. Second two! Third three? trailing bit");
    REQUIRE(sents.size() == 4);
    CHECK(sents[0] == "First one.");
    CHECK(sents[1] == "Second two!");
    CHECK(sents[2] == "Third three?");
    CHECK(sents[3] == "trailing bit");

    CHECK(split_sentences("").empty());
    CHECK(split_sentences("   ").empty());
    // Version string: dot not followed by whitespace does not split.
    auto v = split_sentences("release 1.2.3 is out.");
    REQUIRE(v.size() == 1);
}

TEST_CASE("chunking respects the token budget") {
    HashingEmbedder embedder(32);
    Document doc;
    doc.id = "d1";
    // threshold -1 disables the semantic test, so only the budget splits.
    doc.text = "one two three. four five six. seven eight nine. ten eleven twelve.";
    ChunkParams params;
    params.similarity_threshold = -1.0;
    params.max_chunk_tokens = 6;
    params.overlap_fraction = 0.0;
    auto chunks = chunk_document(doc, embedder, params);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text == "one two three. four five six.");
    CHECK(chunks[1].text == "seven eight nine. ten eleven twelve.");
    CHECK(chunks[0].token_count == 6);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(chunks[i].doc_id == "d1");
        CHECK(chunks[i].chunk_index == static_cast<int>(i));
    }
}

TEST_CASE("chunking with threshold -1 and a large budget yields one chunk") {
    HashingEmbedder embedder(32);
    Document doc;
    doc.id = "d1";
    doc.text = "alpha beta. gamma delta. epsilon zeta.";
    ChunkParams params;
    params.similarity_threshold = -1.0;
    auto chunks = chunk_document(doc, embedder, params);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text == doc.text);
}

TEST_CASE("a sentence larger than the budget still forms a chunk") {
    HashingEmbedder embedder(32);
    Document doc;
    doc.id = "d1";
    doc.text = "this single sentence has far too many tokens for the budget.";
    ChunkParams params;
    params.similarity_threshold = -1.0;
    params.max_chunk_tokens = 3;
    auto chunks = chunk_document(doc, embedder, params);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text == doc.text);
}

TEST_CASE("overlap carries a suffix of the previous chunk") {
    HashingEmbedder embedder(32);
    Document doc;
    doc.id = "d1";
    doc.text = "aa bb cc dd. ee ff gg hh.";
    ChunkParams params;
    params.similarity_threshold = 2.0; // force a split after every sentence
    params.overlap_fraction = 0.5;
    CHECK_THROWS(params.validate());
    params.similarity_threshold = 1.0;
    // Distinct sentences are nearly orthogonal under the hashing embedder, so
    // threshold 1.0 splits them.
    auto chunks = chunk_document(doc, embedder, params);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text == "aa bb cc dd.");
    // 50% of "aa bb cc dd." backs up to a word boundary: "cc dd."
    CHECK(chunks[1].text == "cc dd. ee ff gg hh.");
    CHECK(chunks[1].token_count == 4); // overlap excluded from the count

    params.overlap_fraction = 0.0;
    auto plain = chunk_document(doc, embedder, params);
    REQUIRE(plain.size() == 2);
    CHECK(plain[1].text == "ee ff gg hh.");
}

TEST_CASE("zero-overlap chunk cores reconstruct the document") {
    HashingEmbedder embedder(32);
    std::mt19937_64 rng(11);
    std::vector<std::string> words = {"alpha", "beta",  "gamma", "delta", "omega",
                                      "sigma", "theta", "kappa", "probe", "radar"};
    for (int trial = 0; trial < 20; ++trial) {
        std::string text;
        int sentences = 3 + static_cast<int>(rng() % 5);
        for (int s = 0; s < sentences; ++s) {
            int len = 2 + static_cast<int>(rng() % 6);
            for (int w = 0; w < len; ++w) {
                if (!text.empty() && text.back() != ' ') text += " ";
                text += words[rng() % words.size()];
            }
            text += ".";
            if (s + 1 < sentences) text += " ";
        }
        Document doc{"d" + std::to_string(trial), text};
        ChunkParams params;
        params.similarity_threshold = (trial % 2) ? -1.0 : 0.1;
        params.max_chunk_tokens = 4 + static_cast<int>(rng() % 8);
        params.overlap_fraction = 0.0;
        auto chunks = chunk_document(doc, embedder, params);
        REQUIRE(!chunks.empty());
        std::string rebuilt;
        for (const auto& chunk : chunks) {
            if (!rebuilt.empty()) rebuilt += " ";
            rebuilt += chunk.text;
        }
        CHECK(rebuilt == text);
    }
}

TEST_CASE("chunking validates parameters and input") {
    HashingEmbedder embedder(16);
    Document doc{"d1", "some text."};
    ChunkParams params;
    params.max_chunk_tokens = 0;
    CHECK_THROWS_AS(chunk_document(doc, embedder, params), ConfigError);
    params = {};
    params.overlap_fraction = 1.0;
    CHECK_THROWS_AS(chunk_document(doc, embedder, params), ConfigError);
    params = {};
    Document empty{"d2", ""};
    CHECK_THROWS_AS(chunk_document(empty, embedder, params), DataError);
}
