// Command-line front end: every pipeline stage as a subcommand plus the
// one-shot end-to-end `run` mode. Exit codes: 0 success, 2 config error,
// 3 backend error, 4 data error.

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "trawl/trawl.hpp"

namespace {

std::shared_ptr<trawl::Embedder> make_embedder(const std::string& backend, int dim) {
    if (backend == "mock") return std::make_shared<trawl::HashingEmbedder>(dim);
    if (backend == "remote") return trawl::RemoteEmbedder::from_env();
    throw trawl::ConfigError("unknown backend '" + backend + "' (expected mock|remote)");
}

std::shared_ptr<trawl::CompletionClient> make_llm(const std::string& backend,
                                                  const std::string& record_path,
                                                  const std::string& replay_path) {
    if (!replay_path.empty()) return std::make_shared<trawl::ReplayClient>(replay_path);
    std::shared_ptr<trawl::CompletionClient> client;
    if (backend == "mock") {
        client = std::make_shared<trawl::OfflineStubClient>();
    } else if (backend == "remote") {
        client = std::make_shared<trawl::RetryingClient>(
            std::make_shared<trawl::ThrottledClient>(trawl::HttpCompletionClient::from_env()));
    } else {
        throw trawl::ConfigError("unknown backend '" + backend + "' (expected mock|remote)");
    }
    if (!record_path.empty())
        client = std::make_shared<trawl::RecordingClient>(client, record_path);
    return client;
}

void add_backend_flags(CLI::App* cmd, std::string& backend, std::string& record,
                       std::string& replay) {
    cmd->add_option("--backend", backend, "completion backend: mock|remote")
        ->default_val("mock");
    cmd->add_option("--record", record, "append request/response pairs to this cassette");
    cmd->add_option("--replay", replay, "serve responses from this cassette (no backend)");
}

trawl::ScoredList doc_level_dense(const trawl::VectorIndex& index, trawl::Embedder& embedder,
                                  const std::string& text, const std::string& instruction,
                                  int pool) {
    auto qvec = embedder.embed(text, instruction);
    int k = static_cast<int>(index.size());
    auto chunk_hits = trawl::dense_search(index, qvec, k);
    return trawl::max_over_chunks(chunk_hits).top(static_cast<std::size_t>(pool));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrieval pipeline: chunking, hybrid retrieval, expansion, reranking"};
    app.require_subcommand(1);

    // ---- clean ----------------------------------------------------------
    struct {
        std::string in, out;
    } clean_opts;
    auto* clean_cmd = app.add_subcommand("clean", "normalize corpus text");
    clean_cmd->add_option("--in", clean_opts.in, "corpus jsonl")->required();
    clean_cmd->add_option("--out", clean_opts.out, "cleaned corpus jsonl")->required();
    clean_cmd->callback([&] {
        auto docs = trawl::load_corpus(clean_opts.in);
        for (auto& doc : docs) doc.text = trawl::clean_text(doc.text);
        trawl::save_corpus(clean_opts.out, docs);
        std::cerr << "cleaned " << docs.size() << " documents\n";
    });

    // ---- chunk ----------------------------------------------------------
    struct {
        std::string in, out;
        trawl::ChunkParams params;
        int dim = 64;
    } chunk_opts;
    auto* chunk_cmd = app.add_subcommand("chunk", "split documents into semantic chunks");
    chunk_cmd->add_option("--in", chunk_opts.in, "corpus jsonl")->required();
    chunk_cmd->add_option("--out", chunk_opts.out, "chunks jsonl")->required();
    chunk_cmd->add_option("--max-tokens", chunk_opts.params.max_chunk_tokens,
                          "token budget per chunk");
    chunk_cmd->add_option("--threshold", chunk_opts.params.similarity_threshold,
                          "cosine threshold for joining sentences");
    chunk_cmd->add_option("--overlap", chunk_opts.params.overlap_fraction,
                          "overlap fraction carried from the previous chunk");
    chunk_cmd->add_option("--dim", chunk_opts.dim, "hashing embedder dimension");
    chunk_cmd->callback([&] {
        trawl::HashingEmbedder embedder(chunk_opts.dim);
        auto docs = trawl::load_corpus(chunk_opts.in);
        std::vector<trawl::Chunk> chunks;
        for (const auto& doc : docs) {
            auto part = trawl::chunk_document(doc, embedder, chunk_opts.params);
            chunks.insert(chunks.end(), part.begin(), part.end());
        }
        trawl::save_chunks(chunk_opts.out, chunks);
        std::cerr << "wrote " << chunks.size() << " chunks from " << docs.size()
                  << " documents\n";
    });

    // ---- index ----------------------------------------------------------
    struct {
        std::string chunks, out_dir, backend = "mock";
        trawl::Bm25Params bm25;
        trawl::AnalyzerOptions analyzer;
        int dim = 64;
        std::string doc_instruction;
    } index_opts;
    auto* index_cmd = app.add_subcommand("index", "build sparse and dense chunk indexes");
    index_cmd->add_option("--chunks", index_opts.chunks, "chunks jsonl")->required();
    index_cmd->add_option("--out-dir", index_opts.out_dir, "directory for bm25.idx + dense.idx")
        ->required();
    index_cmd->add_option("--k1", index_opts.bm25.k1, "bm25 k1");
    index_cmd->add_option("--b", index_opts.bm25.b, "bm25 b");
    index_cmd->add_flag("--stem", index_opts.analyzer.stem, "apply plural stemming");
    index_cmd->add_flag("--stopwords", index_opts.analyzer.remove_stopwords,
                        "drop common stopwords");
    index_cmd->add_option("--dim", index_opts.dim, "embedding dimension (mock backend)");
    index_cmd->add_option("--backend", index_opts.backend, "embedding backend: mock|remote");
    index_cmd->add_option("--doc-instruction", index_opts.doc_instruction,
                          "document-side instruction prefix");
    index_cmd->callback([&] {
        auto chunks = trawl::load_chunks(index_opts.chunks);
        std::vector<std::pair<std::string, std::string>> items;
        std::vector<std::string> texts;
        for (const auto& chunk : chunks) {
            items.emplace_back(trawl::make_chunk_item_id(chunk.doc_id, chunk.chunk_index),
                               chunk.text);
            texts.push_back(chunk.text);
        }
        std::filesystem::create_directories(index_opts.out_dir);
        auto sparse = trawl::Bm25Index::build(items, index_opts.bm25, index_opts.analyzer);
        sparse.save(index_opts.out_dir + "/bm25.idx");
        auto embedder = make_embedder(index_opts.backend, index_opts.dim);
        auto vectors = embedder->embed_batch(texts, index_opts.doc_instruction);
        std::vector<std::pair<std::string, trawl::EmbeddingVector>> entries;
        for (std::size_t i = 0; i < items.size(); ++i)
            entries.emplace_back(items[i].first, std::move(vectors[i]));
        trawl::VectorIndex::build(entries).save(index_opts.out_dir + "/dense.idx");
        std::cerr << "indexed " << items.size() << " chunks\n";
    });

    // ---- search ---------------------------------------------------------
    struct {
        std::string index_dir, queries, out, mode = "hybrid", backend = "mock", tag = "trawl";
        std::string query_instruction;
        std::string query_field = "query";
        int k = 100;
        int pool = 2000;
        double w_dense = 0.5;
    } search_opts;
    auto* search_cmd = app.add_subcommand("search", "rank documents for each query");
    search_cmd->add_option("--index-dir", search_opts.index_dir, "directory with bm25.idx + dense.idx")
        ->required();
    search_cmd->add_option("--queries", search_opts.queries, "queries jsonl")->required();
    search_cmd->add_option("--out", search_opts.out, "TREC run output")->required();
    search_cmd->add_option("--k", search_opts.k, "results per query");
    search_cmd->add_option("--mode", search_opts.mode, "sparse|dense|hybrid");
    search_cmd->add_option("--w-dense", search_opts.w_dense, "dense weight in hybrid fusion");
    search_cmd->add_option("--pool", search_opts.pool, "normalization candidate pool");
    search_cmd->add_option("--backend", search_opts.backend, "embedding backend: mock|remote");
    search_cmd->add_option("--query-instruction", search_opts.query_instruction,
                           "query-side instruction prefix");
    search_cmd->add_option("--query-field", search_opts.query_field,
                           "JSON field holding the query text (use 'expanded' for expand output)");
    search_cmd->add_option("--tag", search_opts.tag, "TREC run tag");
    search_cmd->callback([&] {
        if (search_opts.mode != "sparse" && search_opts.mode != "dense" &&
            search_opts.mode != "hybrid")
            throw trawl::ConfigError("search: mode must be sparse|dense|hybrid");
        if (search_opts.k < 1) throw trawl::ConfigError("search: k must be >= 1");
        auto sparse_index = trawl::Bm25Index::load(search_opts.index_dir + "/bm25.idx");
        trawl::RunFile run;
        trawl::QueryFields query_fields;
        query_fields.text = search_opts.query_field;
        auto queries = trawl::load_queries(search_opts.queries, query_fields);

        std::optional<trawl::VectorIndex> dense_index;
        std::shared_ptr<trawl::Embedder> embedder;
        if (search_opts.mode != "sparse") {
            dense_index = trawl::VectorIndex::load(search_opts.index_dir + "/dense.idx");
            embedder = make_embedder(search_opts.backend,
                                     static_cast<int>(dense_index->dimension()));
        }
        for (const auto& query : queries) {
            trawl::ScoredList ranked;
            if (search_opts.mode == "sparse") {
                ranked = trawl::max_over_chunks(
                    sparse_index.search(query.text, search_opts.pool));
            } else if (search_opts.mode == "dense") {
                ranked = doc_level_dense(*dense_index, *embedder, query.text,
                                         search_opts.query_instruction, search_opts.pool);
            } else {
                auto sparse_docs = trawl::max_over_chunks(
                    sparse_index.search(query.text, search_opts.pool));
                auto dense_docs =
                    doc_level_dense(*dense_index, *embedder, query.text,
                                    search_opts.query_instruction, search_opts.pool);
                if (sparse_docs.empty()) {
                    ranked = trawl::hybrid_fuse(trawl::minmax_normalize(dense_docs),
                                                trawl::ScoredList(trawl::Provenance::Sparse),
                                                search_opts.w_dense);
                } else {
                    ranked = trawl::hybrid_fuse(trawl::minmax_normalize(dense_docs),
                                                trawl::minmax_normalize(sparse_docs),
                                                search_opts.w_dense);
                }
            }
            run.set_ranking(query.id, ranked.top(static_cast<std::size_t>(search_opts.k)));
        }
        trawl::save_trec_run(run, search_opts.out, search_opts.tag);
        std::cerr << "wrote run for " << run.size() << " queries\n";
    });

    // ---- expand ---------------------------------------------------------
    struct {
        std::string queries, corpus, index_dir, out;
        std::string backend = "mock", record, replay, query_instruction;
        trawl::ExpansionConfig config;
    } expand_opts;
    auto* expand_cmd = app.add_subcommand("expand", "iterative query expansion");
    expand_cmd->add_option("--queries", expand_opts.queries, "queries jsonl")->required();
    expand_cmd->add_option("--corpus", expand_opts.corpus, "corpus jsonl (document texts)")
        ->required();
    expand_cmd->add_option("--index-dir", expand_opts.index_dir, "directory with dense.idx")
        ->required();
    expand_cmd->add_option("--out", expand_opts.out, "expanded queries jsonl")->required();
    expand_cmd->add_option("--rounds", expand_opts.config.rounds, "expansion rounds");
    expand_cmd->add_option("--topk", expand_opts.config.top_k, "passages per round");
    expand_cmd->add_option("--truncate", expand_opts.config.doc_truncate_tokens,
                           "token cap per passage");
    expand_cmd->add_option("--temperature", expand_opts.config.temperature,
                           "completion temperature");
    expand_cmd->add_option("--query-instruction", expand_opts.query_instruction,
                           "query-side instruction prefix");
    add_backend_flags(expand_cmd, expand_opts.backend, expand_opts.record, expand_opts.replay);
    expand_cmd->callback([&] {
        auto queries = trawl::load_queries(expand_opts.queries);
        auto docs = trawl::load_corpus(expand_opts.corpus);
        std::unordered_map<std::string, std::string> doc_text;
        for (const auto& doc : docs) doc_text[doc.id] = doc.text;
        auto dense_index = trawl::VectorIndex::load(expand_opts.index_dir + "/dense.idx");
        auto embedder =
            make_embedder("mock", static_cast<int>(dense_index.dimension()));
        auto llm = make_llm(expand_opts.backend, expand_opts.record, expand_opts.replay);

        trawl::SearchFn search = [&](const std::string& text, int k) {
            return doc_level_dense(dense_index, *embedder, text,
                                   expand_opts.query_instruction, k);
        };
        trawl::FetchTextFn fetch = [&](const std::string& id) -> std::string {
            auto it = doc_text.find(id);
            if (it == doc_text.end())
                throw trawl::DataError("unknown document id '" + id + "'");
            return it->second;
        };
        std::ofstream out(expand_opts.out);
        if (!out) throw trawl::DataError("cannot write file: " + expand_opts.out);
        for (const auto& query : queries) {
            auto result = trawl::expand_query(query, search, fetch, *llm, expand_opts.config);
            nlohmann::json record = {{"id", query.id},
                                     {"original", result.original},
                                     {"expanded", result.expanded}};
            out << record.dump() << "\n";
        }
        std::cerr << "expanded " << queries.size() << " queries\n";
    });

    // ---- rerank ---------------------------------------------------------
    struct {
        std::string run, corpus, queries, out, mode = "both";
        std::string prompt_dir, prompt_version = "v1";
        std::string backend = "mock", record, replay, tag = "trawl";
        trawl::RerankConfig config;
        int pool = 100;
        int truncate = 512;
    } rerank_opts;
    auto* rerank_cmd = app.add_subcommand("rerank", "rerank a retrieved run with an LLM");
    rerank_cmd->add_option("--run", rerank_opts.run, "input TREC run (normalized scores)")
        ->required();
    rerank_cmd->add_option("--corpus", rerank_opts.corpus, "corpus jsonl")->required();
    rerank_cmd->add_option("--queries", rerank_opts.queries, "queries jsonl")->required();
    rerank_cmd->add_option("--out", rerank_opts.out, "output TREC run")->required();
    rerank_cmd->add_option("--mode", rerank_opts.mode, "point|list|both");
    rerank_cmd->add_option("--pool", rerank_opts.pool, "candidates reranked per query");
    rerank_cmd->add_option("--truncate", rerank_opts.truncate, "token cap per document");
    rerank_cmd->add_option("--prompt-dir", rerank_opts.prompt_dir,
                           "directory with <version>/pointwise.txt and listwise.txt");
    rerank_cmd->add_option("--prompt-version", rerank_opts.prompt_version, "prompt version");
    rerank_cmd->add_option("--tag", rerank_opts.tag, "TREC run tag");
    add_backend_flags(rerank_cmd, rerank_opts.backend, rerank_opts.record, rerank_opts.replay);
    rerank_cmd->callback([&] {
        auto mode = trawl::rerank_mode_from_string(rerank_opts.mode);
        auto run = trawl::load_trec_run(rerank_opts.run);
        auto queries = trawl::load_queries(rerank_opts.queries);
        auto docs = trawl::load_corpus(rerank_opts.corpus);
        std::unordered_map<std::string, std::string> doc_text;
        for (const auto& doc : docs) doc_text[doc.id] = doc.text;
        auto prompts = rerank_opts.prompt_dir.empty()
                           ? trawl::PromptSet::builtin()
                           : trawl::PromptSet::load(rerank_opts.prompt_dir,
                                                    rerank_opts.prompt_version);
        auto llm = make_llm(rerank_opts.backend, rerank_opts.record, rerank_opts.replay);
        auto fetch = [&](const std::string& id) -> std::string {
            auto it = doc_text.find(id);
            if (it == doc_text.end())
                throw trawl::DataError("unknown document id '" + id + "'");
            return trawl::truncate_tokens(it->second, rerank_opts.truncate);
        };
        trawl::RunFile out_run;
        int warnings = 0;
        for (const auto& query : queries) {
            if (!run.has(query.id)) continue;
            const auto& ranking = run.ranking(query.id);
            std::size_t take =
                std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(rerank_opts.pool));
            std::vector<trawl::ScoredEntry> head(ranking.begin(), ranking.begin() + take);
            auto candidates = trawl::ScoredList::from_ranked_entries(std::move(head),
                                                                     trawl::Provenance::Hybrid);
            auto outcome = trawl::rerank_candidates(query.text, candidates, fetch, *llm, mode,
                                                    rerank_opts.config, prompts);
            warnings += outcome.warnings;
            out_run.set_ranking(query.id, outcome.final);
        }
        trawl::save_trec_run(out_run, rerank_opts.out, rerank_opts.tag);
        std::cerr << "reranked " << out_run.size() << " queries";
        if (warnings > 0) std::cerr << " (" << warnings << " parse warnings)";
        std::cerr << "\n";
    });

    // ---- eval -----------------------------------------------------------
    struct {
        std::string run, judgments, json_out;
        int k = 10;
    } eval_opts;
    auto* eval_cmd = app.add_subcommand("eval", "score a run with nDCG@k");
    eval_cmd->add_option("--run", eval_opts.run, "TREC run file")->required();
    eval_cmd->add_option("--judgments", eval_opts.judgments, "judgments jsonl")->required();
    eval_cmd->add_option("--k", eval_opts.k, "cutoff");
    eval_cmd->add_option("--json", eval_opts.json_out, "also write a JSON report here");
    eval_cmd->callback([&] {
        auto run = trawl::load_trec_run(eval_opts.run);
        auto judgments = trawl::load_judgments(eval_opts.judgments);
        auto report = trawl::evaluate_run(run, judgments, eval_opts.k);
        std::cout << trawl::format_report_table(report);
        for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
        if (!eval_opts.json_out.empty()) {
            std::ofstream out(eval_opts.json_out);
            if (!out) throw trawl::DataError("cannot write file: " + eval_opts.json_out);
            out << trawl::report_to_json(report).dump(2) << "\n";
        }
    });

    // ---- train-toy ------------------------------------------------------
    struct {
        std::string data, out;
        trawl::TrainConfig config;
    } train_opts;
    auto* train_cmd = app.add_subcommand("train-toy", "contrastive-train the toy embedder");
    train_cmd->add_option("--data", train_opts.data, "training examples jsonl")->required();
    train_cmd->add_option("--out", train_opts.out, "trained embedder output path");
    train_cmd->add_option("--dim", train_opts.config.embed_dim, "embedding dimension");
    train_cmd->add_option("--feature-dim", train_opts.config.feature_dim,
                          "hashed feature dimension");
    train_cmd->add_option("--epochs", train_opts.config.epochs, "training epochs");
    train_cmd->add_option("--lr", train_opts.config.lr, "learning rate");
    train_cmd->add_option("--seed", train_opts.config.seed, "init seed");
    train_cmd->add_option("--temperature", train_opts.config.temperature,
                          "similarity temperature");
    train_cmd->callback([&] {
        auto examples = trawl::load_training_examples(train_opts.data);
        auto result = trawl::train_toy(examples, train_opts.config);
        if (!result.loss_trace.empty())
            std::cout << "loss: " << result.loss_trace.front() << " -> "
                      << result.loss_trace.back() << " over " << result.loss_trace.size()
                      << " epochs\n";
        if (!train_opts.out.empty()) {
            result.embedder.save(train_opts.out);
            std::cerr << "saved embedder to " << train_opts.out << "\n";
        }
    });

    // ---- curate ---------------------------------------------------------
    struct {
        std::string pairs, out_dir;
        std::string backend = "mock", record, replay;
    } curate_opts;
    auto* curate_cmd =
        app.add_subcommand("curate", "annotate query-doc pairs and bucket them");
    curate_cmd->add_option("--pairs", curate_opts.pairs, "jsonl with {\"query\",\"doc\"} lines")
        ->required();
    curate_cmd->add_option("--out-dir", curate_opts.out_dir, "output directory")->required();
    add_backend_flags(curate_cmd, curate_opts.backend, curate_opts.record, curate_opts.replay);
    curate_cmd->callback([&] {
        std::vector<std::pair<std::string, std::string>> pairs;
        trawl::detail::for_each_jsonl(
            curate_opts.pairs, {}, nullptr, [&](std::size_t line_no, const nlohmann::json& rec) {
                pairs.emplace_back(
                    trawl::detail::require_string(rec, "query", curate_opts.pairs, line_no),
                    trawl::detail::require_string(rec, "doc", curate_opts.pairs, line_no));
            });
        auto llm = make_llm(curate_opts.backend, curate_opts.record, curate_opts.replay);
        auto annotated = trawl::annotate_pairs(pairs, *llm);
        auto buckets = trawl::curate_pairs(annotated.annotated);
        std::filesystem::create_directories(curate_opts.out_dir);
        {
            std::ofstream out(curate_opts.out_dir + "/annotated.jsonl");
            if (!out) throw trawl::DataError("cannot write annotated.jsonl");
            auto dump = [&](const std::vector<trawl::AnnotatedPair>& list, const char* bucket) {
                for (const auto& pair : list) {
                    nlohmann::json record = {{"query", pair.query},
                                             {"doc", pair.doc},
                                             {"score", pair.score},
                                             {"reason", pair.reason},
                                             {"bucket", bucket}};
                    out << record.dump() << "\n";
                }
            };
            dump(buckets.positives, "positive");
            dump(buckets.negatives, "negative");
            dump(buckets.dropped, "dropped");
        }
        // Training-shaped output: one example per positive doc, negatives
        // shared across the query.
        std::unordered_map<std::string, std::vector<std::string>> negatives_by_query;
        for (const auto& pair : buckets.negatives)
            negatives_by_query[pair.query].push_back(pair.doc);
        std::vector<trawl::TrainingExample> examples;
        for (const auto& pair : buckets.positives) {
            trawl::TrainingExample example;
            example.query = pair.query;
            example.positive = pair.doc;
            auto it = negatives_by_query.find(pair.query);
            if (it != negatives_by_query.end()) example.negatives = it->second;
            examples.push_back(std::move(example));
        }
        trawl::save_training_examples(examples, curate_opts.out_dir + "/training.jsonl");
        std::cerr << "curated " << pairs.size() << " pairs: " << buckets.positives.size()
                  << " positive, " << buckets.negatives.size() << " negative, "
                  << buckets.dropped.size() << " dropped, " << annotated.dropped
                  << " unparsable\n";
    });

    // ---- run ------------------------------------------------------------
    struct {
        std::string config_path;
        std::vector<std::string> sets;
        std::string corpus, queries, judgments, run_dir, backend, record, replay;
        int workers = 0;
        long long seed = -1;
    } run_opts;
    auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline");
    run_cmd->add_option("--config", run_opts.config_path, "key = value config file");
    run_cmd->add_option("--set", run_opts.sets, "override: key=value (repeatable)");
    run_cmd->add_option("--corpus", run_opts.corpus, "corpus jsonl");
    run_cmd->add_option("--queries", run_opts.queries, "queries jsonl");
    run_cmd->add_option("--judgments", run_opts.judgments, "judgments jsonl");
    run_cmd->add_option("--run-dir", run_opts.run_dir, "artifact directory");
    run_cmd->add_option("--backend", run_opts.backend, "mock|remote");
    run_cmd->add_option("--workers", run_opts.workers, "per-query parallelism");
    run_cmd->add_option("--seed", run_opts.seed, "run seed");
    run_cmd->add_option("--record", run_opts.record, "cassette to append completions to");
    run_cmd->add_option("--replay", run_opts.replay, "cassette to replay completions from");
    run_cmd->callback([&] {
        trawl::PipelineConfig config;
        if (!run_opts.config_path.empty())
            config = trawl::load_pipeline_config(run_opts.config_path);
        for (const auto& entry : run_opts.sets) {
            auto eq = entry.find('=');
            if (eq == std::string::npos)
                throw trawl::ConfigError("--set expects key=value, got '" + entry + "'");
            trawl::apply_config_entry(config, entry.substr(0, eq), entry.substr(eq + 1));
        }
        if (!run_opts.corpus.empty()) config.corpus_path = run_opts.corpus;
        if (!run_opts.queries.empty()) config.queries_path = run_opts.queries;
        if (!run_opts.judgments.empty()) config.judgments_path = run_opts.judgments;
        if (!run_opts.run_dir.empty()) config.run_dir = run_opts.run_dir;
        if (!run_opts.backend.empty())
            trawl::apply_config_entry(config, "backend", run_opts.backend);
        if (run_opts.workers > 0) config.workers = run_opts.workers;
        if (run_opts.seed >= 0) config.seed = static_cast<uint64_t>(run_opts.seed);
        config.validate();

        std::shared_ptr<trawl::Embedder> embedder;
        std::shared_ptr<trawl::CompletionClient> llm;
        if (config.backend == trawl::BackendKind::Mock) {
            embedder = std::make_shared<trawl::HashingEmbedder>(config.embed_dim);
            llm = make_llm("mock", run_opts.record, run_opts.replay);
        } else {
            embedder = trawl::RemoteEmbedder::from_env();
            llm = make_llm("remote", run_opts.record, run_opts.replay);
        }
        trawl::LogFn log = [](const std::string& line) { std::cerr << line << "\n"; };
        auto result = trawl::run_pipeline(config, *embedder, *llm, log);
        if (result.report) {
            std::cout << trawl::format_report_table(*result.report);
            for (const auto& warning : result.report->warnings)
                std::cerr << "warning: " << warning << "\n";
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const trawl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const trawl::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const trawl::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
