#pragma once

// Embedding contract and the deterministic local test embedder. Embedders
// return L2-normalized vectors; the query and document sides may carry
// distinct instruction prefixes.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trawl/errors.hpp"

namespace trawl {

using EmbeddingVector = std::vector<float>;

template <typename T>
double l2_norm(std::span<const T> v) {
    double sum = 0.0;
    for (T x : v) sum += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sum);
}

template <typename T>
double cosine(std::span<const T> u, std::span<const T> v) {
    if (u.size() != v.size())
        throw DataError("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                        std::to_string(v.size()) + ")");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double a = static_cast<double>(u[i]);
        double b = static_cast<double>(v[i]);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if (nu == 0.0 || nv == 0.0) throw DataError("cosine: zero vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

inline double cosine(const std::vector<float>& u, const std::vector<float>& v) {
    return cosine(std::span<const float>(u), std::span<const float>(v));
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    return cosine(std::span<const double>(u), std::span<const double>(v));
}

inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0) {
    uint64_t h = 14695981039346656037ULL ^ seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Signed character-3-gram counts hashed into `dim` buckets. Raw (unnormalized)
// so it can double as the feature extractor of the toy trainable embedder.
// Texts shorter than three characters contribute the whole text as one feature.
inline std::vector<double> hashed_trigram_features(std::string_view text, int dim,
                                                   uint64_t seed) {
    if (dim < 1) throw ConfigError("feature hashing: dimension must be >= 1");
    std::vector<double> features(static_cast<std::size_t>(dim), 0.0);
    auto bump = [&](std::string_view gram) {
        uint64_t h = fnv1a64(gram, seed);
        double sign = (h >> 63) ? -1.0 : 1.0;
        features[h % static_cast<uint64_t>(dim)] += sign;
    };
    if (text.size() < 3) {
        if (!text.empty()) bump(text);
        return features;
    }
    for (std::size_t i = 0; i + 3 <= text.size(); ++i) bump(text.substr(i, 3));
    return features;
}

class Embedder {
public:
    virtual ~Embedder() = default;

    // L2-normalized, deterministic for a fixed backend and input.
    virtual EmbeddingVector embed(std::string_view text, std::string_view instruction = {}) = 0;

    virtual int dimension() const = 0;

    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                                     std::string_view instruction = {}) {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed(t, instruction));
        return out;
    }
};

inline constexpr uint64_t kDefaultHashSeed = 0x9e3779b97f4a7c15ULL;

// Deterministic local test embedder: feature-hashes character 3-grams into the
// configured dimension and L2-normalizes. Content-sensitive similarity with no
// model dependency.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(int dim = 64, uint64_t seed = kDefaultHashSeed)
        : dim_(dim), seed_(seed) {
        if (dim < 1) throw ConfigError("embedder: dimension must be >= 1");
    }

    EmbeddingVector embed(std::string_view text, std::string_view instruction = {}) override {
        std::string effective = instruction.empty()
                                    ? std::string(text)
                                    : std::string(instruction) + "\n" + std::string(text);
        if (effective.find_first_not_of(" \t\r\n") == std::string::npos)
            throw DataError("embed: empty text");
        auto raw = hashed_trigram_features(effective, dim_, seed_);
        double norm = l2_norm(std::span<const double>(raw));
        if (norm == 0.0) {
            // Signed buckets cancelled out exactly; fall back to hashing the
            // whole string as a single feature so the result stays unit-norm.
            uint64_t h = fnv1a64(effective, seed_);
            raw.assign(static_cast<std::size_t>(dim_), 0.0);
            raw[h % static_cast<uint64_t>(dim_)] = (h >> 63) ? -1.0 : 1.0;
            norm = 1.0;
        }
        EmbeddingVector out(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i)
            out[i] = static_cast<float>(raw[i] / norm);
        return out;
    }

    int dimension() const override { return dim_; }

private:
    int dim_;
    uint64_t seed_;
};

} // namespace trawl
