#pragma once

// Core domain types plus JSON Lines loaders for corpora, queries and
// relevance judgments. One record per line; loading is strict by default
// and a permissive mode skips (and counts) malformed lines instead.

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "trawl/errors.hpp"

namespace trawl {

struct Document {
    std::string id;   // unique within a corpus
    std::string text; // raw or cleaned
};

// A fragment of a document. doc_id is inherited, never reassigned, so one
// doc_id may map to several chunks. chunk_index runs 0..n-1 per doc_id.
// token_count covers the core content only, excluding any overlap prefix.
struct Chunk {
    std::string doc_id;
    int chunk_index = 0;
    std::string text;
    int token_count = 0;
};

struct Query {
    std::string id;
    std::string text;
};

// Ground truth per query: gold ids are the relevant documents, excluded ids
// are dropped from rankings before scoring. The two sets never overlap.
class Judgments {
public:
    void add(const std::string& query_id, std::set<std::string> gold,
             std::set<std::string> excluded = {}) {
        if (gold.empty())
            throw DataError("judgments: query '" + query_id + "' has no gold ids");
        for (const auto& id : excluded)
            if (gold.count(id))
                throw DataError("judgments: query '" + query_id + "': id '" + id +
                                "' is both gold and excluded");
        if (gold_.count(query_id))
            throw DataError("judgments: duplicate query id '" + query_id + "'");
        gold_[query_id] = std::move(gold);
        excluded_[query_id] = std::move(excluded);
    }

    bool has(const std::string& query_id) const { return gold_.count(query_id) > 0; }

    const std::set<std::string>& gold(const std::string& query_id) const {
        auto it = gold_.find(query_id);
        if (it == gold_.end())
            throw DataError("judgments: unknown query id '" + query_id + "'");
        return it->second;
    }

    const std::set<std::string>& excluded(const std::string& query_id) const {
        static const std::set<std::string> kEmpty;
        auto it = excluded_.find(query_id);
        return it == excluded_.end() ? kEmpty : it->second;
    }

    std::vector<std::string> query_ids() const {
        std::vector<std::string> ids;
        ids.reserve(gold_.size());
        for (const auto& [qid, _] : gold_) ids.push_back(qid);
        return ids;
    }

    std::size_t size() const { return gold_.size(); }

private:
    std::map<std::string, std::set<std::string>> gold_;
    std::map<std::string, std::set<std::string>> excluded_;
};

// On-disk field names are configurable; these defaults match the layouts
// used by the bundled fixtures.
struct CorpusFields {
    std::string id = "id";
    std::string content = "content";
};

struct QueryFields {
    std::string id = "id";
    std::string text = "query";
    std::string gold = "gold_ids";
    std::string excluded = "excluded_ids";
};

struct LoadOptions {
    bool permissive = false;       // skip malformed lines instead of failing
    bool allow_empty_text = false; // tolerate placeholder records with no text
};

struct LoadStats {
    std::size_t loaded = 0;
    std::size_t skipped = 0;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return in;
}

// Calls fn(line_no, json) per non-blank line. In strict mode the first
// malformed line aborts the load; permissive mode counts and skips it.
template <typename Fn>
void for_each_jsonl(const std::string& path, const LoadOptions& opts, LoadStats* stats, Fn&& fn) {
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    LoadStats local;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            nlohmann::json record = nlohmann::json::parse(line);
            fn(line_no, record);
            ++local.loaded;
        } catch (const DataError&) {
            if (!opts.permissive) throw;
            ++local.skipped;
        } catch (const nlohmann::json::exception& e) {
            if (!opts.permissive)
                throw DataError(path + ":" + std::to_string(line_no) +
                                ": malformed record: " + e.what());
            ++local.skipped;
        }
    }
    if (stats) *stats = local;
}

inline std::string require_string(const nlohmann::json& record, const std::string& key,
                                  const std::string& path, std::size_t line_no) {
    if (!record.contains(key) || !record[key].is_string())
        throw DataError(path + ":" + std::to_string(line_no) + ": missing string field '" +
                        key + "'");
    return record[key].get<std::string>();
}

} // namespace detail

inline std::vector<Document> load_corpus(const std::string& path, const CorpusFields& fields = {},
                                         const LoadOptions& opts = {},
                                         LoadStats* stats = nullptr) {
    std::vector<Document> docs;
    std::map<std::string, std::size_t> first_line;
    detail::for_each_jsonl(path, opts, stats, [&](std::size_t line_no, const nlohmann::json& rec) {
        Document doc;
        doc.id = detail::require_string(rec, fields.id, path, line_no);
        doc.text = detail::require_string(rec, fields.content, path, line_no);
        if (doc.id.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": empty document id");
        if (doc.text.empty() && !opts.allow_empty_text)
            throw DataError(path + ":" + std::to_string(line_no) + ": document '" + doc.id +
                            "' has empty text");
        auto [it, inserted] = first_line.emplace(doc.id, line_no);
        if (!inserted)
            throw DataError(path + ":" + std::to_string(line_no) + ": duplicate id '" + doc.id +
                            "' (first seen on line " + std::to_string(it->second) + ")");
        docs.push_back(std::move(doc));
    });
    return docs;
}

inline std::vector<Query> load_queries(const std::string& path, const QueryFields& fields = {},
                                       const LoadOptions& opts = {},
                                       LoadStats* stats = nullptr) {
    std::vector<Query> queries;
    std::set<std::string> seen;
    detail::for_each_jsonl(path, opts, stats, [&](std::size_t line_no, const nlohmann::json& rec) {
        Query q;
        q.id = detail::require_string(rec, fields.id, path, line_no);
        q.text = detail::require_string(rec, fields.text, path, line_no);
        if (q.text.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": query '" + q.id +
                            "' has empty text");
        if (!seen.insert(q.id).second)
            throw DataError(path + ":" + std::to_string(line_no) + ": duplicate query id '" +
                            q.id + "'");
        queries.push_back(std::move(q));
    });
    return queries;
}

// Judgment records carry gold_ids and optional excluded_ids. The query id is
// read from "query_id" when present, falling back to the configured id field,
// so a query file doubles as a judgments file.
inline Judgments load_judgments(const std::string& path, const QueryFields& fields = {},
                                const LoadOptions& opts = {}, LoadStats* stats = nullptr) {
    Judgments judgments;
    detail::for_each_jsonl(path, opts, stats, [&](std::size_t line_no, const nlohmann::json& rec) {
        std::string qid;
        if (rec.contains("query_id") && rec["query_id"].is_string())
            qid = rec["query_id"].get<std::string>();
        else
            qid = detail::require_string(rec, fields.id, path, line_no);

        if (!rec.contains(fields.gold) || !rec[fields.gold].is_array())
            throw DataError(path + ":" + std::to_string(line_no) + ": missing array field '" +
                            fields.gold + "'");
        std::set<std::string> gold;
        for (const auto& v : rec[fields.gold]) gold.insert(v.get<std::string>());
        std::set<std::string> excluded;
        if (rec.contains(fields.excluded) && rec[fields.excluded].is_array())
            for (const auto& v : rec[fields.excluded]) excluded.insert(v.get<std::string>());
        try {
            judgments.add(qid, std::move(gold), std::move(excluded));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return judgments;
}

inline void save_corpus(const std::string& path, const std::vector<Document>& docs,
                        const CorpusFields& fields = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& doc : docs) {
        nlohmann::json rec;
        rec[fields.id] = doc.id;
        rec[fields.content] = doc.text;
        out << rec.dump() << "\n";
    }
}

inline void save_chunks(const std::string& path, const std::vector<Chunk>& chunks) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& c : chunks) {
        nlohmann::json rec;
        rec["doc_id"] = c.doc_id;
        rec["chunk_index"] = c.chunk_index;
        rec["text"] = c.text;
        rec["token_count"] = c.token_count;
        out << rec.dump() << "\n";
    }
}

inline std::vector<Chunk> load_chunks(const std::string& path, const LoadOptions& opts = {},
                                      LoadStats* stats = nullptr) {
    std::vector<Chunk> chunks;
    std::set<std::pair<std::string, int>> seen;
    detail::for_each_jsonl(path, opts, stats, [&](std::size_t line_no, const nlohmann::json& rec) {
        Chunk c;
        c.doc_id = detail::require_string(rec, "doc_id", path, line_no);
        if (!rec.contains("chunk_index") || !rec["chunk_index"].is_number_integer())
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": missing integer field 'chunk_index'");
        c.chunk_index = rec["chunk_index"].get<int>();
        c.text = detail::require_string(rec, "text", path, line_no);
        c.token_count = rec.value("token_count", 0);
        if (c.chunk_index < 0 || c.text.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": invalid chunk record");
        if (!seen.insert({c.doc_id, c.chunk_index}).second)
            throw DataError(path + ":" + std::to_string(line_no) + ": duplicate chunk (" +
                            c.doc_id + ", " + std::to_string(c.chunk_index) + ")");
        chunks.push_back(std::move(c));
    });
    return chunks;
}

} // namespace trawl
