#pragma once

// Rule-based cleaning and semantic-aware chunking with overlap refinement.
//
// clean_text normalizes whitespace, collapses runs of blank lines and merges
// line breaks that split a sentence. chunk_document splits cleaned text into
// sentences and packs them greedily: a sentence joins the current chunk while
// it stays cohesive with the chunk's running mean embedding and the token
// budget holds. Adjacent chunks then share a character-suffix overlap.

#include <cctype>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "trawl/corpus.hpp"
#include "trawl/embedding.hpp"
#include "trawl/errors.hpp"

namespace trawl {

struct ChunkParams {
    int max_chunk_tokens = 4096;
    double similarity_threshold = 0.5; // in [-1, 1]
    double overlap_fraction = 0.20;    // in [0, 1)
    int min_sentences_per_chunk = 1;

    void validate() const {
        if (max_chunk_tokens < 1) throw ConfigError("chunking: max_chunk_tokens must be >= 1");
        if (similarity_threshold < -1.0 || similarity_threshold > 1.0)
            throw ConfigError("chunking: similarity_threshold must be in [-1, 1]");
        if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
            throw ConfigError("chunking: overlap_fraction must be in [0, 1)");
        if (min_sentences_per_chunk < 1)
            throw ConfigError("chunking: min_sentences_per_chunk must be >= 1");
    }
};

namespace detail {

inline bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t") == std::string_view::npos;
}

// Sentence-terminal punctuation or a closing quote/bracket blocks line merging.
inline bool ends_sentence(std::string_view line) {
    if (line.empty()) return true;
    char c = line.back();
    return c == '.' || c == '!' || c == '?' || c == ':' || c == ';' || c == '"' || c == '\'' ||
           c == ')' || c == ']' || c == '}';
}

inline bool starts_continuation(std::string_view line) {
    if (line.empty()) return false;
    unsigned char c = static_cast<unsigned char>(line.front());
    return std::islower(c) || std::isdigit(c);
}

inline std::string normalize_line(std::string_view line) {
    std::string out;
    out.reserve(line.size());
    bool in_space = false;
    for (char ch : line) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(ch);
    }
    return out; // leading and trailing whitespace dropped, interior runs collapsed
}

} // namespace detail

// Idempotent, total. Rules, in order: per-line whitespace normalization, blank
// line runs collapsed to one, then a line break becomes a single space when
// the preceding line does not end a sentence and the next starts with a
// lowercase letter or digit.
inline std::string clean_text(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        lines.push_back(detail::normalize_line(text.substr(start, end - start)));
        if (end == text.size()) break;
        start = end + 1;
    }

    std::vector<std::string> collapsed;
    std::size_t blanks = 0;
    for (auto& line : lines) {
        if (line.empty()) {
            ++blanks;
            continue;
        }
        if (blanks > 0 && !collapsed.empty()) collapsed.emplace_back();
        blanks = 0;
        collapsed.push_back(std::move(line));
    }

    std::vector<std::string> merged;
    for (auto& line : collapsed) {
        if (!merged.empty() && !merged.back().empty() && !detail::ends_sentence(merged.back()) &&
            detail::starts_continuation(line)) {
            merged.back() += " " + line;
        } else {
            merged.push_back(std::move(line));
        }
    }

    std::string out;
    for (std::size_t i = 0; i < merged.size(); ++i) {
        if (i) out.push_back('\n');
        out += merged[i];
    }
    return out;
}

// Token counting is a pluggable contract; the default counts whitespace-
// delimited words.
using TokenCounter = std::function<int(std::string_view)>;

inline int count_tokens(std::string_view text) {
    int count = 0;
    bool in_word = false;
    for (char ch : text) {
        bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

// First max_tokens whitespace-delimited words of text.
inline std::string truncate_tokens(std::string_view text, int max_tokens) {
    if (max_tokens <= 0) return "";
    int count = 0;
    bool in_word = false;
    std::size_t end = text.size();
    for (std::size_t i = 0; i < text.size(); ++i) {
        bool space = std::isspace(static_cast<unsigned char>(text[i])) != 0;
        if (!space && !in_word) {
            ++count;
            if (count > max_tokens) {
                end = i;
                break;
            }
        }
        in_word = !space;
    }
    std::string out(text.substr(0, end));
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
    return out;
}

// Terminal punctuation (. ! ?) followed by whitespace or end of text closes a
// sentence; a trailing fragment without terminal punctuation still counts as
// one. Abbreviation handling is deliberately omitted.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        while (start < end && std::isspace(static_cast<unsigned char>(text[start]))) ++start;
        std::size_t stop = end;
        while (stop > start && std::isspace(static_cast<unsigned char>(text[stop - 1]))) --stop;
        if (stop > start) sentences.emplace_back(text.substr(start, stop - start));
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            flush(i + 1);
        }
    }
    flush(text.size());
    return sentences;
}

namespace detail {

// Trailing overlap_fraction of the previous chunk's characters, with the cut
// point moved back to the nearest whitespace boundary so the prefix starts on
// a whole word.
inline std::string overlap_prefix(const std::string& prev_core, double fraction) {
    if (fraction <= 0.0 || prev_core.empty()) return "";
    auto want = static_cast<std::size_t>(fraction * static_cast<double>(prev_core.size()));
    if (want == 0) return "";
    std::size_t cut = prev_core.size() - want;
    while (cut > 0 && !std::isspace(static_cast<unsigned char>(prev_core[cut - 1]))) --cut;
    return prev_core.substr(cut);
}

} // namespace detail

// Greedy semantic chunking. The caller is responsible for cleaning doc.text
// first. Every chunk holds at least one full sentence and its core content
// (before the overlap prefix) fits the token budget; a single sentence above
// the budget still forms its own chunk since a chunk never splits a sentence.
inline std::vector<Chunk> chunk_document(const Document& doc, Embedder& embedder,
                                         const ChunkParams& params = {},
                                         const TokenCounter& tokens = count_tokens) {
    params.validate();
    if (doc.text.empty()) throw DataError("chunking: document '" + doc.id + "' has empty text");

    auto sentences = split_sentences(doc.text);
    if (sentences.empty())
        throw DataError("chunking: document '" + doc.id + "' has no sentences");

    auto vectors = embedder.embed_batch(sentences);

    struct Group {
        std::string text;
        int token_count = 0;
        int sentence_count = 0;
        std::vector<double> mean; // running mean of sentence embeddings
    };
    std::vector<Group> groups;
    Group current;

    auto close = [&]() {
        if (current.sentence_count > 0) groups.push_back(std::move(current));
        current = Group{};
    };

    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto& sent = sentences[i];
        const auto& vec = vectors[i];
        int sent_tokens = tokens(sent);

        bool join = current.sentence_count == 0;
        if (!join && current.sentence_count < params.min_sentences_per_chunk) join = true;
        if (!join) {
            double norm = l2_norm(std::span<const double>(current.mean));
            double sim = -1.0;
            if (norm > 1e-12) {
                double dot = 0.0;
                for (std::size_t d = 0; d < vec.size(); ++d)
                    dot += current.mean[d] * static_cast<double>(vec[d]);
                sim = dot / norm; // sentence embeddings are unit-norm
            }
            join = sim >= params.similarity_threshold &&
                   current.token_count + sent_tokens <= params.max_chunk_tokens;
        }
        if (!join) close();

        if (current.sentence_count == 0) {
            current.text = sent;
            current.token_count = sent_tokens;
            current.mean.assign(vec.begin(), vec.end());
            current.sentence_count = 1;
        } else {
            current.text += " " + sent;
            current.token_count += sent_tokens;
            double n = static_cast<double>(current.sentence_count);
            for (std::size_t d = 0; d < vec.size(); ++d)
                current.mean[d] = (current.mean[d] * n + static_cast<double>(vec[d])) / (n + 1.0);
            ++current.sentence_count;
        }
    }
    close();

    std::vector<Chunk> chunks;
    chunks.reserve(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        Chunk c;
        c.doc_id = doc.id;
        c.chunk_index = static_cast<int>(i);
        c.token_count = groups[i].token_count; // core content, overlap excluded
        if (i == 0) {
            c.text = groups[i].text;
        } else {
            std::string prefix = detail::overlap_prefix(groups[i - 1].text,
                                                        params.overlap_fraction);
            c.text = prefix.empty() ? groups[i].text : prefix + " " + groups[i].text;
        }
        chunks.push_back(std::move(c));
    }
    return chunks;
}

} // namespace trawl
