#pragma once

// Ranked (item_id, score) lists flowing between pipeline stages. Entries are
// kept sorted by score descending with ties broken by item id ascending, and
// item ids are unique.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trawl/errors.hpp"

namespace trawl {

enum class Provenance { Sparse, Dense, Hybrid, RerankPoint, RerankList, Final };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Sparse: return "sparse";
        case Provenance::Dense: return "dense";
        case Provenance::Hybrid: return "hybrid";
        case Provenance::RerankPoint: return "rerank_point";
        case Provenance::RerankList: return "rerank_list";
        case Provenance::Final: return "final";
    }
    return "?";
}

struct ScoredEntry {
    std::string id;
    double score = 0.0;
};

inline bool scored_before(const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

class ScoredList {
public:
    ScoredList() = default;
    explicit ScoredList(Provenance p) : provenance_(p) {}

    // Sorts, checks uniqueness and finiteness.
    static ScoredList from_entries(std::vector<ScoredEntry> entries, Provenance p) {
        std::unordered_set<std::string> seen;
        seen.reserve(entries.size());
        for (const auto& e : entries) {
            if (!std::isfinite(e.score))
                throw DataError("scored list: non-finite score for item '" + e.id + "'");
            if (!seen.insert(e.id).second)
                throw DataError("scored list: duplicate item id '" + e.id + "'");
        }
        std::sort(entries.begin(), entries.end(), scored_before);
        ScoredList list(p);
        list.entries_ = std::move(entries);
        return list;
    }

    // Accepts a caller-established order: scores must be non-increasing but
    // equal-score runs keep their given order (reranking breaks ties by the
    // original retrieval score, which the default id tie-break would undo).
    static ScoredList from_ranked_entries(std::vector<ScoredEntry> entries, Provenance p) {
        std::unordered_set<std::string> seen;
        seen.reserve(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            if (!std::isfinite(e.score))
                throw DataError("scored list: non-finite score for item '" + e.id + "'");
            if (!seen.insert(e.id).second)
                throw DataError("scored list: duplicate item id '" + e.id + "'");
            if (i > 0 && e.score > entries[i - 1].score)
                throw DataError("scored list: entries not sorted by score at '" + e.id + "'");
        }
        ScoredList list(p);
        list.entries_ = std::move(entries);
        return list;
    }

    const std::vector<ScoredEntry>& entries() const { return entries_; }
    Provenance provenance() const { return provenance_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    bool contains(const std::string& id) const {
        return std::any_of(entries_.begin(), entries_.end(),
                           [&](const ScoredEntry& e) { return e.id == id; });
    }

    ScoredList top(std::size_t k) const {
        ScoredList out(provenance_);
        out.entries_.assign(entries_.begin(),
                            entries_.begin() + std::min(k, entries_.size()));
        return out;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.id);
        return out;
    }

    std::unordered_map<std::string, double> as_map() const {
        std::unordered_map<std::string, double> m;
        m.reserve(entries_.size());
        for (const auto& e : entries_) m.emplace(e.id, e.score);
        return m;
    }

private:
    std::vector<ScoredEntry> entries_;
    Provenance provenance_ = Provenance::Sparse;
};

// Chunk items are addressed as "<doc_id>#<chunk_index>" so chunk-level scores
// can be folded back to document level. A trailing "#<digits>" is the chunk
// suffix; ids without one are taken to be document ids as-is.
inline std::string make_chunk_item_id(const std::string& doc_id, int chunk_index) {
    return doc_id + "#" + std::to_string(chunk_index);
}

inline std::string doc_id_of_item(const std::string& item_id) {
    auto pos = item_id.rfind('#');
    if (pos == std::string::npos || pos + 1 == item_id.size()) return item_id;
    for (std::size_t i = pos + 1; i < item_id.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(item_id[i]))) return item_id;
    return item_id.substr(0, pos);
}

} // namespace trawl
