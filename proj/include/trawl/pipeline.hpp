#pragma once

// End-to-end pipeline: clean -> chunk -> index (sparse + dense) -> expand ->
// hybrid retrieve -> rerank -> evaluate. Every stage persists its artifact
// under the run directory; a stage failure halts the run with the stage name
// while earlier artifacts stay on disk.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "trawl/bm25.hpp"
#include "trawl/corpus.hpp"
#include "trawl/embedding.hpp"
#include "trawl/errors.hpp"
#include "trawl/evaluation.hpp"
#include "trawl/fusion.hpp"
#include "trawl/llm_client.hpp"
#include "trawl/preprocess.hpp"
#include "trawl/query_expand.hpp"
#include "trawl/rerank.hpp"
#include "trawl/vector_index.hpp"

namespace trawl {

enum class BackendKind { Mock, Remote };

struct PipelineConfig {
    std::string corpus_path;
    std::string queries_path;
    std::string judgments_path; // empty -> evaluation stage skipped
    std::string run_dir = "run";

    bool clean = true;
    ChunkParams chunk;
    Bm25Params bm25;
    AnalyzerOptions analyzer;
    int embed_dim = 64; // hashing embedder width in mock mode
    std::string query_instruction;
    std::string doc_instruction;

    double w_dense = 0.5;
    int candidate_pool = 2000; // normalization pool per retriever

    ExpansionConfig expansion;
    RerankConfig rerank;
    RerankMode rerank_mode = RerankMode::Both;
    int rerank_pool = 100;
    int doc_truncate_tokens = 512; // applied to document text shown to the reranker

    BackendKind backend = BackendKind::Mock;
    uint64_t seed = 7;
    int workers = 1;
    int eval_k = 10;
    std::string tag = "trawl";

    void validate() const {
        if (corpus_path.empty()) throw ConfigError("pipeline: corpus path not set");
        if (queries_path.empty()) throw ConfigError("pipeline: queries path not set");
        if (run_dir.empty()) throw ConfigError("pipeline: run_dir not set");
        chunk.validate();
        bm25.validate();
        expansion.validate();
        rerank.validate();
        if (embed_dim < 1) throw ConfigError("pipeline: embed_dim must be >= 1");
        if (w_dense < 0.0 || w_dense > 1.0)
            throw ConfigError("pipeline: w_dense must be in [0, 1]");
        if (candidate_pool < 1) throw ConfigError("pipeline: candidate_pool must be >= 1");
        if (rerank_pool < 1) throw ConfigError("pipeline: rerank_pool must be >= 1");
        if (doc_truncate_tokens < 1)
            throw ConfigError("pipeline: doc_truncate_tokens must be >= 1");
        if (workers < 1) throw ConfigError("pipeline: workers must be >= 1");
        if (eval_k < 1) throw ConfigError("pipeline: eval_k must be >= 1");
    }
};

namespace detail {

inline bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + value + "'");
}

inline int parse_int(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        int out = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
}

inline double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        double out = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
    }
}

inline std::string trim_copy(const std::string& text) {
    auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    auto end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

} // namespace detail

// Assign one `key = value` line onto the config; shared by the file parser
// and per-flag CLI overrides.
inline void apply_config_entry(PipelineConfig& config, const std::string& key,
                               const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    if (key == "corpus") config.corpus_path = value;
    else if (key == "queries") config.queries_path = value;
    else if (key == "judgments") config.judgments_path = value;
    else if (key == "run_dir") config.run_dir = value;
    else if (key == "clean") config.clean = parse_bool(value, key);
    else if (key == "chunk.max_tokens") config.chunk.max_chunk_tokens = parse_int(value, key);
    else if (key == "chunk.similarity_threshold")
        config.chunk.similarity_threshold = parse_double(value, key);
    else if (key == "chunk.overlap_fraction")
        config.chunk.overlap_fraction = parse_double(value, key);
    else if (key == "bm25.k1") config.bm25.k1 = parse_double(value, key);
    else if (key == "bm25.b") config.bm25.b = parse_double(value, key);
    else if (key == "analyzer.stem") config.analyzer.stem = parse_bool(value, key);
    else if (key == "analyzer.stopwords")
        config.analyzer.remove_stopwords = parse_bool(value, key);
    else if (key == "embed.dim") config.embed_dim = parse_int(value, key);
    else if (key == "embed.query_instruction") config.query_instruction = value;
    else if (key == "embed.doc_instruction") config.doc_instruction = value;
    else if (key == "fusion.w_dense") config.w_dense = parse_double(value, key);
    else if (key == "fusion.pool") config.candidate_pool = parse_int(value, key);
    else if (key == "expand.rounds") config.expansion.rounds = parse_int(value, key);
    else if (key == "expand.top_k") config.expansion.top_k = parse_int(value, key);
    else if (key == "expand.doc_truncate_tokens")
        config.expansion.doc_truncate_tokens = parse_int(value, key);
    else if (key == "expand.temperature")
        config.expansion.temperature = parse_double(value, key);
    else if (key == "rerank.scale_max") config.rerank.scale_max = parse_int(value, key);
    else if (key == "rerank.w_rerank") config.rerank.w_rerank = parse_double(value, key);
    else if (key == "rerank.w_retriever")
        config.rerank.w_retriever = parse_double(value, key);
    else if (key == "rerank.w_point") config.rerank.w_point = parse_double(value, key);
    else if (key == "rerank.w_list") config.rerank.w_list = parse_double(value, key);
    else if (key == "rerank.parse_retries")
        config.rerank.parse_retries = parse_int(value, key);
    else if (key == "rerank.window_size") config.rerank.window_size = parse_int(value, key);
    else if (key == "rerank.window_stride")
        config.rerank.window_stride = parse_int(value, key);
    else if (key == "rerank.mode") config.rerank_mode = rerank_mode_from_string(value);
    else if (key == "rerank.pool") config.rerank_pool = parse_int(value, key);
    else if (key == "rerank.doc_truncate_tokens")
        config.doc_truncate_tokens = parse_int(value, key);
    else if (key == "backend") {
        if (value == "mock") config.backend = BackendKind::Mock;
        else if (value == "remote") config.backend = BackendKind::Remote;
        else throw ConfigError("config: backend must be mock or remote, got '" + value + "'");
    } else if (key == "seed") config.seed = static_cast<uint64_t>(parse_int(value, key));
    else if (key == "workers") config.workers = parse_int(value, key);
    else if (key == "eval.k") config.eval_k = parse_int(value, key);
    else if (key == "tag") config.tag = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

// `key = value` lines, '#' comments, blank lines ignored.
inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    PipelineConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string trimmed = detail::trim_copy(line);
        if (trimmed.empty()) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        std::string key = detail::trim_copy(trimmed.substr(0, eq));
        std::string value = detail::trim_copy(trimmed.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
        try {
            apply_config_entry(config, key, value);
        } catch (const ConfigError& err) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + err.what());
        }
    }
    return config;
}

inline std::string dump_pipeline_config(const PipelineConfig& config) {
    std::ostringstream out;
    out << "corpus = " << config.corpus_path << "\n";
    out << "queries = " << config.queries_path << "\n";
    out << "judgments = " << config.judgments_path << "\n";
    out << "run_dir = " << config.run_dir << "\n";
    out << "clean = " << (config.clean ? "true" : "false") << "\n";
    out << "chunk.max_tokens = " << config.chunk.max_chunk_tokens << "\n";
    out << "chunk.similarity_threshold = " << config.chunk.similarity_threshold << "\n";
    out << "chunk.overlap_fraction = " << config.chunk.overlap_fraction << "\n";
    out << "bm25.k1 = " << config.bm25.k1 << "\n";
    out << "bm25.b = " << config.bm25.b << "\n";
    out << "analyzer.stem = " << (config.analyzer.stem ? "true" : "false") << "\n";
    out << "analyzer.stopwords = " << (config.analyzer.remove_stopwords ? "true" : "false")
        << "\n";
    out << "embed.dim = " << config.embed_dim << "\n";
    out << "embed.query_instruction = " << config.query_instruction << "\n";
    out << "embed.doc_instruction = " << config.doc_instruction << "\n";
    out << "fusion.w_dense = " << config.w_dense << "\n";
    out << "fusion.pool = " << config.candidate_pool << "\n";
    out << "expand.rounds = " << config.expansion.rounds << "\n";
    out << "expand.top_k = " << config.expansion.top_k << "\n";
    out << "expand.doc_truncate_tokens = " << config.expansion.doc_truncate_tokens << "\n";
    out << "expand.temperature = " << config.expansion.temperature << "\n";
    out << "rerank.scale_max = " << config.rerank.scale_max << "\n";
    out << "rerank.w_rerank = " << config.rerank.w_rerank << "\n";
    out << "rerank.w_retriever = " << config.rerank.w_retriever << "\n";
    out << "rerank.w_point = " << config.rerank.w_point << "\n";
    out << "rerank.w_list = " << config.rerank.w_list << "\n";
    out << "rerank.parse_retries = " << config.rerank.parse_retries << "\n";
    out << "rerank.window_size = " << config.rerank.window_size << "\n";
    out << "rerank.window_stride = " << config.rerank.window_stride << "\n";
    out << "rerank.mode = "
        << (config.rerank_mode == RerankMode::Point
                ? "point"
                : config.rerank_mode == RerankMode::List ? "list" : "both")
        << "\n";
    out << "rerank.pool = " << config.rerank_pool << "\n";
    out << "rerank.doc_truncate_tokens = " << config.doc_truncate_tokens << "\n";
    out << "backend = " << (config.backend == BackendKind::Mock ? "mock" : "remote") << "\n";
    out << "seed = " << config.seed << "\n";
    out << "workers = " << config.workers << "\n";
    out << "eval.k = " << config.eval_k << "\n";
    out << "tag = " << config.tag << "\n";
    return out.str();
}

struct PipelineResult {
    RunFile hybrid_run;
    RunFile final_run;
    std::optional<EvalReport> report;
    std::vector<ExpansionResult> expansions;
    int rerank_warnings = 0;
};

namespace detail {

template <typename Fn>
auto run_stage(const std::string& stage, const LogFn& log, Fn&& fn) {
    if (log) log("stage " + stage + ": start");
    try {
        return fn();
    } catch (const TransientBackendError& e) {
        throw TransientBackendError("stage " + stage + ": " + e.what());
    } catch (const AuthError& e) {
        throw AuthError("stage " + stage + ": " + e.what());
    } catch (const ContextLengthError& e) {
        throw ContextLengthError("stage " + stage + ": " + e.what());
    } catch (const BackendError& e) {
        throw BackendError("stage " + stage + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError("stage " + stage + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError("stage " + stage + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error("stage " + stage + ": " + e.what());
    }
}

// Run fn(i) for i in [0, count) on `workers` threads; exceptions surface on
// the caller thread. Results must be written into pre-sized slots by index.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    std::mutex error_mu;
    std::exception_ptr error;
    int n = std::min<int>(workers, static_cast<int>(count));
    threads.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        threads.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next.store(count);
                    return;
                }
            }
        });
    }
    for (auto& thread : threads) thread.join();
    if (error) std::rethrow_exception(error);
}

} // namespace detail

inline PipelineResult run_pipeline(const PipelineConfig& config, Embedder& embedder,
                                   CompletionClient& llm, const LogFn& log = nullptr) {
    config.validate();
    namespace fs = std::filesystem;
    fs::create_directories(config.run_dir);
    auto artifact = [&](const std::string& name) {
        return (fs::path(config.run_dir) / name).string();
    };
    {
        std::ofstream snapshot(artifact("config_snapshot.cfg"));
        if (!snapshot) throw DataError("cannot write config snapshot");
        snapshot << dump_pipeline_config(config);
    }

    // -- clean ---------------------------------------------------------
    auto docs = detail::run_stage("clean", log, [&] {
        auto loaded = load_corpus(config.corpus_path);
        if (config.clean)
            for (auto& doc : loaded) doc.text = clean_text(doc.text);
        save_corpus(artifact("cleaned.jsonl"), loaded);
        return loaded;
    });

    // -- chunk ---------------------------------------------------------
    auto chunks = detail::run_stage("chunk", log, [&] {
        std::vector<Chunk> all;
        for (const auto& doc : docs) {
            auto doc_chunks = chunk_document(doc, embedder, config.chunk);
            all.insert(all.end(), doc_chunks.begin(), doc_chunks.end());
        }
        save_chunks(artifact("chunks.jsonl"), all);
        return all;
    });

    // -- index ---------------------------------------------------------
    struct Indexes {
        Bm25Index sparse;
        VectorIndex dense;
    };
    auto indexes = detail::run_stage("index", log, [&] {
        std::vector<std::pair<std::string, std::string>> items;
        items.reserve(chunks.size());
        std::vector<std::string> texts;
        texts.reserve(chunks.size());
        for (const auto& chunk : chunks) {
            items.emplace_back(make_chunk_item_id(chunk.doc_id, chunk.chunk_index), chunk.text);
            texts.push_back(chunk.text);
        }
        Bm25Index sparse = Bm25Index::build(items, config.bm25, config.analyzer);
        sparse.save(artifact("bm25.idx"));
        auto vectors = embedder.embed_batch(texts, config.doc_instruction);
        std::vector<std::pair<std::string, EmbeddingVector>> entries;
        entries.reserve(chunks.size());
        for (std::size_t i = 0; i < chunks.size(); ++i)
            entries.emplace_back(items[i].first, std::move(vectors[i]));
        VectorIndex dense = VectorIndex::build(entries);
        dense.save(artifact("dense.idx"));
        return Indexes{std::move(sparse), std::move(dense)};
    });

    std::unordered_map<std::string, std::string> doc_text;
    for (const auto& doc : docs) doc_text[doc.id] = doc.text;
    auto fetch_doc = [&](const std::string& id) -> std::string {
        auto it = doc_text.find(id);
        if (it == doc_text.end()) throw DataError("unknown document id '" + id + "'");
        return it->second;
    };

    auto queries = load_queries(config.queries_path);

    // Doc-level dense search used by the expansion loop.
    auto dense_doc_search = [&](const std::string& query_text, int k) {
        auto qvec = embedder.embed(query_text, config.query_instruction);
        auto chunk_hits =
            dense_search(indexes.dense, qvec, static_cast<int>(indexes.dense.size()));
        return max_over_chunks(chunk_hits).top(static_cast<std::size_t>(k));
    };

    // -- expand --------------------------------------------------------
    auto expansions = detail::run_stage("expand", log, [&] {
        std::vector<ExpansionResult> out(queries.size());
        detail::parallel_for(queries.size(), config.workers, [&](std::size_t i) {
            out[i] = expand_query(queries[i], dense_doc_search, fetch_doc, llm,
                                  config.expansion);
        });
        std::ofstream file(artifact("expanded.jsonl"));
        if (!file) throw DataError("cannot write expanded queries");
        for (std::size_t i = 0; i < queries.size(); ++i) {
            nlohmann::json record = {{"id", queries[i].id},
                                     {"original", out[i].original},
                                     {"expanded", out[i].expanded}};
            file << record.dump() << "\n";
        }
        return out;
    });

    // -- retrieve (hybrid) ----------------------------------------------
    auto hybrid_run = detail::run_stage("retrieve", log, [&] {
        RunFile run;
        std::vector<ScoredList> fused(queries.size());
        detail::parallel_for(queries.size(), config.workers, [&](std::size_t i) {
            const std::string& search_text = expansions[i].expanded;
            ScoredList sparse_docs = max_over_chunks(
                indexes.sparse.search(search_text, config.candidate_pool));
            auto qvec = embedder.embed(search_text, config.query_instruction);
            ScoredList dense_docs = max_over_chunks(dense_search(
                indexes.dense, qvec,
                std::min<int>(config.candidate_pool, static_cast<int>(indexes.dense.size()))));
            if (sparse_docs.empty()) {
                // No lexical overlap anywhere: fall back to dense alone.
                fused[i] = minmax_normalize(dense_docs);
                fused[i] = hybrid_fuse(fused[i], ScoredList(Provenance::Sparse),
                                       config.w_dense);
                return;
            }
            fused[i] = hybrid_fuse(minmax_normalize(dense_docs),
                                   minmax_normalize(sparse_docs), config.w_dense);
        });
        for (std::size_t i = 0; i < queries.size(); ++i)
            run.set_ranking(queries[i].id, fused[i]);
        save_trec_run(run, artifact("hybrid.trec"), config.tag + "-hybrid");
        return run;
    });

    // -- rerank ----------------------------------------------------------
    int rerank_warnings = 0;
    auto final_run = detail::run_stage("rerank", log, [&] {
        RunFile run;
        std::vector<ScoredList> finals(queries.size());
        std::atomic<int> warnings{0};
        auto fetch_for_rerank = [&](const std::string& id) {
            return truncate_tokens(fetch_doc(id), config.doc_truncate_tokens);
        };
        detail::parallel_for(queries.size(), config.workers, [&](std::size_t i) {
            const auto& ranking = hybrid_run.ranking(queries[i].id);
            std::size_t take = std::min<std::size_t>(
                ranking.size(), static_cast<std::size_t>(config.rerank_pool));
            std::vector<ScoredEntry> head(ranking.begin(), ranking.begin() + take);
            ScoredList candidates =
                ScoredList::from_ranked_entries(std::move(head), Provenance::Hybrid);
            if (candidates.empty()) {
                finals[i] = candidates;
                return;
            }
            auto outcome = rerank_candidates(queries[i].text, candidates, fetch_for_rerank,
                                             llm, config.rerank_mode, config.rerank,
                                             PromptSet::builtin());
            warnings += outcome.warnings;
            finals[i] = std::move(outcome.final);
        });
        for (std::size_t i = 0; i < queries.size(); ++i)
            run.set_ranking(queries[i].id, finals[i]);
        save_trec_run(run, artifact("final.trec"), config.tag);
        rerank_warnings = warnings.load();
        return run;
    });

    // -- evaluate --------------------------------------------------------
    PipelineResult result;
    result.hybrid_run = std::move(hybrid_run);
    result.final_run = std::move(final_run);
    result.expansions = std::move(expansions);
    result.rerank_warnings = rerank_warnings;
    if (!config.judgments_path.empty()) {
        result.report = detail::run_stage("evaluate", log, [&] {
            auto judgments = load_judgments(config.judgments_path);
            EvalReport report = evaluate_run(result.final_run, judgments, config.eval_k);
            std::ofstream json_file(artifact("report.json"));
            if (!json_file) throw DataError("cannot write report.json");
            json_file << report_to_json(report).dump(2) << "\n";
            std::ofstream text_file(artifact("report.txt"));
            if (!text_file) throw DataError("cannot write report.txt");
            text_file << format_report_table(report);
            return report;
        });
    }
    if (log) log("pipeline complete");
    return result;
}

} // namespace trawl
