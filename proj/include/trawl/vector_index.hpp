#pragma once

// In-memory vector store with exhaustive cosine top-k search. No ANN: the
// corpora this targets fit in memory and an exact scan is its own oracle.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "trawl/binio.hpp"
#include "trawl/embedding.hpp"
#include "trawl/errors.hpp"
#include "trawl/scored_list.hpp"

namespace trawl {

class VectorIndex {
public:
    static VectorIndex build(const std::vector<std::pair<std::string, EmbeddingVector>>& items) {
        if (items.empty()) throw DataError("vector index build: empty item list");
        VectorIndex index;
        index.dim_ = items.front().second.size();
        if (index.dim_ == 0) throw DataError("vector index build: zero-dimensional vector");
        index.ids_.reserve(items.size());
        index.data_.reserve(items.size() * index.dim_);
        index.norms_.reserve(items.size());
        for (const auto& [id, vec] : items) index.add(id, vec);
        return index;
    }

    void add(const std::string& id, const EmbeddingVector& vec) {
        if (ids_.empty() && dim_ == 0) dim_ = vec.size();
        if (vec.size() != dim_)
            throw DataError("vector index: dimension mismatch for '" + id + "'");
        if (id_to_item_.count(id))
            throw DataError("vector index: duplicate id '" + id + "'");
        double sq = 0.0;
        for (float v : vec) {
            if (!std::isfinite(v))
                throw DataError("vector index: non-finite entry in '" + id + "'");
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
        double norm = std::sqrt(sq);
        if (norm == 0.0) throw DataError("vector index: zero vector for '" + id + "'");
        id_to_item_[id] = ids_.size();
        ids_.push_back(id);
        data_.insert(data_.end(), vec.begin(), vec.end());
        norms_.push_back(norm);
    }

    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }

    EmbeddingVector vector_of(const std::string& id) const {
        auto it = id_to_item_.find(id);
        if (it == id_to_item_.end())
            throw DataError("vector index: unknown id '" + id + "'");
        const float* base = data_.data() + it->second * dim_;
        return EmbeddingVector(base, base + dim_);
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write file: " + path);
        binio::write_magic(out, kMagic, kVersion);
        binio::write_u32(out, static_cast<uint32_t>(dim_));
        binio::write_u32(out, static_cast<uint32_t>(ids_.size()));
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            binio::write_string(out, ids_[i]);
            for (std::size_t d = 0; d < dim_; ++d)
                binio::write_f32(out, data_[i * dim_ + d]);
        }
    }

    static VectorIndex load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open file: " + path);
        uint32_t version = binio::read_magic(in, kMagic);
        if (version != kVersion)
            throw DataError("vector index: unsupported version " + std::to_string(version));
        uint32_t dim = binio::read_u32(in);
        uint32_t count = binio::read_u32(in);
        if (dim == 0) throw DataError("vector index: zero dimension");
        if (count == 0) throw DataError("vector index: empty");
        VectorIndex index;
        index.dim_ = dim;
        EmbeddingVector vec(dim);
        for (uint32_t i = 0; i < count; ++i) {
            std::string id = binio::read_string(in);
            for (uint32_t d = 0; d < dim; ++d) vec[d] = binio::read_f32(in);
            index.add(id, vec);
        }
        return index;
    }

private:
    friend ScoredList dense_search(const VectorIndex&, const EmbeddingVector&, int);

    static constexpr char kMagic[9] = "TRWLDVEC";
    static constexpr uint32_t kVersion = 1;

    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> data_; // row-major, ids_.size() x dim_
    std::vector<double> norms_;
    std::unordered_map<std::string, std::size_t> id_to_item_;
};

// Exhaustive scan: top-k by cosine descending, ties by item id ascending.
inline ScoredList dense_search(const VectorIndex& index, const EmbeddingVector& query_vec,
                               int k) {
    if (k < 1) throw ConfigError("dense search: k must be >= 1");
    if (index.size() == 0) throw DataError("dense search: empty index");
    if (query_vec.size() != index.dimension())
        throw DataError("dense search: query dimension mismatch");
    double qsq = 0.0;
    for (float v : query_vec) qsq += static_cast<double>(v) * static_cast<double>(v);
    double qnorm = std::sqrt(qsq);
    if (qnorm == 0.0) throw DataError("dense search: zero query vector");

    std::vector<ScoredEntry> entries;
    entries.reserve(index.size());
    for (std::size_t i = 0; i < index.ids_.size(); ++i) {
        const float* row = index.data_.data() + i * index.dim_;
        double dot = 0.0;
        for (std::size_t d = 0; d < index.dim_; ++d)
            dot += static_cast<double>(row[d]) * static_cast<double>(query_vec[d]);
        entries.push_back({index.ids_[i], dot / (index.norms_[i] * qnorm)});
    }
    auto list = ScoredList::from_entries(std::move(entries), Provenance::Dense);
    return list.top(static_cast<std::size_t>(k));
}

} // namespace trawl
