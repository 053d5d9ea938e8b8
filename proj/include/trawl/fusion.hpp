#pragma once

// Score normalization, chunk-to-document aggregation, and the weighted
// dense+sparse interpolation that produces the hybrid retriever score.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "trawl/errors.hpp"
#include "trawl/scored_list.hpp"

namespace trawl {

// score' = (s - min) / (max - min); a flat list maps everything to 0.5 so
// downstream weighting treats it as uninformative rather than extreme.
inline ScoredList minmax_normalize(const ScoredList& list) {
    if (list.empty()) throw DataError("minmax_normalize: empty list");
    double lo = list.entries().front().score;
    double hi = lo;
    for (const auto& e : list.entries()) {
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
    }
    std::vector<ScoredEntry> out;
    out.reserve(list.size());
    for (const auto& e : list.entries()) {
        double s = hi == lo ? 0.5 : (e.score - lo) / (hi - lo);
        out.push_back({e.id, s});
    }
    return ScoredList::from_entries(std::move(out), list.provenance());
}

// Collapse chunk-level scores ("doc#idx" ids) to one score per document by
// taking the best chunk.
inline ScoredList max_over_chunks(const ScoredList& chunk_scores) {
    std::unordered_map<std::string, double> best;
    for (const auto& e : chunk_scores.entries()) {
        std::string doc = doc_id_of_item(e.id);
        auto [it, inserted] = best.emplace(doc, e.score);
        if (!inserted) it->second = std::max(it->second, e.score);
    }
    std::vector<ScoredEntry> out;
    out.reserve(best.size());
    for (const auto& [doc, score] : best) out.push_back({doc, score});
    return ScoredList::from_entries(std::move(out), chunk_scores.provenance());
}

// Weighted sum over the union of ids; both inputs must already be
// minmax-normalized. An id missing from one side contributes 0 from it.
inline ScoredList hybrid_fuse(const ScoredList& dense, const ScoredList& sparse,
                              double w_dense = 0.5) {
    if (w_dense < 0.0 || w_dense > 1.0)
        throw ConfigError("hybrid_fuse: w_dense must be in [0, 1]");
    constexpr double kTol = 1e-9;
    auto check = [&](const ScoredList& list, const char* side) {
        for (const auto& e : list.entries())
            if (e.score < -kTol || e.score > 1.0 + kTol)
                throw DataError(std::string("hybrid_fuse: ") + side +
                                " list is not minmax-normalized (score " +
                                std::to_string(e.score) + " for '" + e.id + "')");
    };
    check(dense, "dense");
    check(sparse, "sparse");

    auto clamp01 = [](double s) { return std::min(1.0, std::max(0.0, s)); };
    std::unordered_map<std::string, double> acc;
    for (const auto& e : dense.entries()) acc[e.id] += w_dense * clamp01(e.score);
    for (const auto& e : sparse.entries()) acc[e.id] += (1.0 - w_dense) * clamp01(e.score);
    std::vector<ScoredEntry> out;
    out.reserve(acc.size());
    for (const auto& [id, score] : acc) out.push_back({id, score});
    return ScoredList::from_entries(std::move(out), Provenance::Hybrid);
}

} // namespace trawl
