#pragma once

// Okapi BM25 inverted index. The analyzer lowercases and splits on
// non-alphanumeric runs; stemming and stopword removal are off by default.
// IDF uses the +1-inside-log smoothing variant so scores stay non-negative:
//
//   score(q, d) = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//   idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trawl/binio.hpp"
#include "trawl/errors.hpp"
#include "trawl/scored_list.hpp"

namespace trawl {

struct AnalyzerOptions {
    bool stem = false;             // S-stemmer (plural suffix stripping)
    bool remove_stopwords = false; // small built-in English list
};

namespace detail {

inline const std::unordered_set<std::string>& stopword_set() {
    static const std::unordered_set<std::string> kStopwords = {
        "a",    "an",  "and", "are", "as",   "at",   "be",   "but", "by",   "for",
        "if",   "in",  "into", "is", "it",   "no",   "not",  "of",  "on",   "or",
        "such", "that", "the", "their", "then", "there", "these", "they", "this",
        "to",   "was", "will", "with"};
    return kStopwords;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Harman's S-stemmer: ies -> y, drop plural s/es with the usual exceptions.
inline std::string s_stem(std::string word) {
    if (word.size() > 3 && ends_with(word, "ies") && !ends_with(word, "eies") &&
        !ends_with(word, "aies")) {
        word.replace(word.size() - 3, 3, "y");
    } else if (word.size() > 2 && ends_with(word, "es") && !ends_with(word, "aes") &&
               !ends_with(word, "ees") && !ends_with(word, "oes")) {
        word.pop_back();
    } else if (word.size() > 2 && ends_with(word, "s") && !ends_with(word, "us") &&
               !ends_with(word, "ss")) {
        word.pop_back();
    }
    return word;
}

} // namespace detail

inline std::vector<std::string> analyze(std::string_view text, const AnalyzerOptions& opts = {}) {
    std::vector<std::string> terms;
    std::string current;
    auto flush = [&]() {
        if (current.empty()) return;
        if (opts.stem) current = detail::s_stem(std::move(current));
        if (!opts.remove_stopwords || !detail::stopword_set().count(current))
            terms.push_back(current);
        current.clear();
    };
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c))
            current.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    return terms;
}

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    void validate() const {
        if (k1 < 0.0) throw ConfigError("bm25: k1 must be >= 0");
        if (b < 0.0 || b > 1.0) throw ConfigError("bm25: b must be in [0, 1]");
    }
};

class Bm25Index {
public:
    struct Posting {
        uint32_t item = 0; // index into ids(); ascending within a postings list
        uint32_t tf = 0;
    };

    static Bm25Index build(const std::vector<std::pair<std::string, std::string>>& items,
                           Bm25Params params = {}, AnalyzerOptions analyzer = {}) {
        params.validate();
        if (items.empty()) throw DataError("bm25 build: empty item list");

        Bm25Index index;
        index.params_ = params;
        index.analyzer_ = analyzer;
        index.ids_.reserve(items.size());
        for (const auto& [id, _] : items) index.ids_.push_back(id);
        std::sort(index.ids_.begin(), index.ids_.end());
        for (std::size_t i = 1; i < index.ids_.size(); ++i)
            if (index.ids_[i] == index.ids_[i - 1])
                throw DataError("bm25 build: duplicate id '" + index.ids_[i] + "'");
        for (uint32_t i = 0; i < index.ids_.size(); ++i) index.id_to_item_[index.ids_[i]] = i;

        index.doc_len_.assign(index.ids_.size(), 0);
        std::unordered_map<std::string, uint32_t> tf;
        uint64_t total_len = 0;
        for (const auto& [id, text] : items) {
            uint32_t item = index.id_to_item_.at(id);
            auto terms = analyze(text, analyzer);
            index.doc_len_[item] = static_cast<uint32_t>(terms.size());
            total_len += terms.size();
            tf.clear();
            for (const auto& t : terms) ++tf[t];
            for (const auto& [term, freq] : tf)
                index.postings_[term].push_back({item, freq});
        }
        for (auto& [_, list] : index.postings_)
            std::sort(list.begin(), list.end(),
                      [](const Posting& a, const Posting& b) { return a.item < b.item; });
        index.avg_doc_length_ =
            static_cast<double>(total_len) / static_cast<double>(index.ids_.size());
        return index;
    }

    double idf(const std::string& term) const {
        auto it = postings_.find(term);
        std::size_t df = it == postings_.end() ? 0 : it->second.size();
        double n = static_cast<double>(ids_.size());
        return std::log(1.0 + (n - static_cast<double>(df) + 0.5) /
                                  (static_cast<double>(df) + 0.5));
    }

    // Additive over query terms; repeated query terms add repeatedly.
    double score(std::span<const std::string> query_terms, const std::string& item_id) const {
        auto it = id_to_item_.find(item_id);
        if (it == id_to_item_.end())
            throw DataError("bm25 score: unknown item id '" + item_id + "'");
        uint32_t item = it->second;
        double total = 0.0;
        for (const auto& term : query_terms) {
            auto pit = postings_.find(term);
            if (pit == postings_.end()) continue;
            const auto& list = pit->second;
            auto found = std::lower_bound(
                list.begin(), list.end(), item,
                [](const Posting& p, uint32_t v) { return p.item < v; });
            if (found == list.end() || found->item != item) continue;
            total += term_score(idf(term), found->tf, doc_len_[item]);
        }
        return total;
    }

    // Top-k by score descending, ties by item id ascending. Zero-score items
    // are omitted unless pad_with_zeros asks for them.
    ScoredList search(std::string_view query_text, int k, bool pad_with_zeros = false) const {
        if (k < 1) throw ConfigError("bm25 search: k must be >= 1");
        auto terms = analyze(query_text, analyzer_);
        std::vector<double> acc(ids_.size(), 0.0);
        for (const auto& term : terms) {
            auto pit = postings_.find(term);
            if (pit == postings_.end()) continue;
            double term_idf = idf(term);
            for (const auto& p : pit->second)
                acc[p.item] += term_score(term_idf, p.tf, doc_len_[p.item]);
        }
        std::vector<uint32_t> items;
        items.reserve(ids_.size());
        for (uint32_t i = 0; i < acc.size(); ++i)
            if (pad_with_zeros || acc[i] > 0.0) items.push_back(i);
        // ids_ is sorted, so item order is id order and the sort is stable
        // on ties.
        std::stable_sort(items.begin(), items.end(),
                         [&](uint32_t a, uint32_t b) { return acc[a] > acc[b]; });
        if (items.size() > static_cast<std::size_t>(k)) items.resize(static_cast<std::size_t>(k));
        std::vector<ScoredEntry> entries;
        entries.reserve(items.size());
        for (uint32_t i : items) entries.push_back({ids_[i], acc[i]});
        return ScoredList::from_entries(std::move(entries), Provenance::Sparse);
    }

    std::size_t item_count() const { return ids_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const Bm25Params& params() const { return params_; }
    const AnalyzerOptions& analyzer_options() const { return analyzer_; }

    uint32_t doc_length(const std::string& item_id) const {
        auto it = id_to_item_.find(item_id);
        if (it == id_to_item_.end())
            throw DataError("bm25: unknown item id '" + item_id + "'");
        return doc_len_[it->second];
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write file: " + path);
        binio::write_magic(out, kMagic, kVersion);
        binio::write_f64(out, params_.k1);
        binio::write_f64(out, params_.b);
        binio::write_u32(out, analyzer_.stem ? 1 : 0);
        binio::write_u32(out, analyzer_.remove_stopwords ? 1 : 0);
        binio::write_u32(out, static_cast<uint32_t>(ids_.size()));
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            binio::write_string(out, ids_[i]);
            binio::write_u32(out, doc_len_[i]);
        }
        binio::write_u32(out, static_cast<uint32_t>(postings_.size()));
        std::vector<std::string> terms;
        terms.reserve(postings_.size());
        for (const auto& [term, _] : postings_) terms.push_back(term);
        std::sort(terms.begin(), terms.end());
        for (const auto& term : terms) {
            const auto& list = postings_.at(term);
            binio::write_string(out, term);
            binio::write_u32(out, static_cast<uint32_t>(list.size()));
            for (const auto& p : list) {
                binio::write_u32(out, p.item);
                binio::write_u32(out, p.tf);
            }
        }
    }

    static Bm25Index load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open file: " + path);
        uint32_t version = binio::read_magic(in, kMagic);
        if (version != kVersion)
            throw DataError("bm25 index: unsupported version " + std::to_string(version));
        Bm25Index index;
        index.params_.k1 = binio::read_f64(in);
        index.params_.b = binio::read_f64(in);
        index.analyzer_.stem = binio::read_u32(in) != 0;
        index.analyzer_.remove_stopwords = binio::read_u32(in) != 0;
        uint32_t n = binio::read_u32(in);
        if (n == 0) throw DataError("bm25 index: empty");
        index.ids_.resize(n);
        index.doc_len_.resize(n);
        uint64_t total_len = 0;
        for (uint32_t i = 0; i < n; ++i) {
            index.ids_[i] = binio::read_string(in);
            index.doc_len_[i] = binio::read_u32(in);
            total_len += index.doc_len_[i];
            index.id_to_item_[index.ids_[i]] = i;
        }
        index.avg_doc_length_ = static_cast<double>(total_len) / static_cast<double>(n);
        uint32_t term_count = binio::read_u32(in);
        for (uint32_t t = 0; t < term_count; ++t) {
            std::string term = binio::read_string(in);
            uint32_t len = binio::read_u32(in);
            auto& list = index.postings_[term];
            list.resize(len);
            for (uint32_t i = 0; i < len; ++i) {
                list[i].item = binio::read_u32(in);
                list[i].tf = binio::read_u32(in);
                if (list[i].item >= n) throw DataError("bm25 index: posting out of range");
            }
        }
        return index;
    }

private:
    static constexpr char kMagic[9] = "TRWLBM25";
    static constexpr uint32_t kVersion = 1;

    double term_score(double term_idf, uint32_t tf, uint32_t dl) const {
        double tfd = static_cast<double>(tf);
        double norm = params_.k1 * (1.0 - params_.b +
                                    params_.b * static_cast<double>(dl) / avg_doc_length_);
        return term_idf * tfd * (params_.k1 + 1.0) / (tfd + norm);
    }

    std::vector<std::string> ids_; // sorted ascending
    std::unordered_map<std::string, uint32_t> id_to_item_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<uint32_t> doc_len_;
    double avg_doc_length_ = 0.0;
    Bm25Params params_;
    AnalyzerOptions analyzer_;
};

} // namespace trawl
