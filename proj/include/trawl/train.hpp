#pragma once

// Desk-scale contrastive training: InfoNCE over cosine similarities with
// curated hard negatives, an analytically differentiated linear embedder on
// hashed features, and the LLM-driven pair curation prompts.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "trawl/binio.hpp"
#include "trawl/corpus.hpp"
#include "trawl/embedding.hpp"
#include "trawl/errors.hpp"
#include "trawl/llm_client.hpp"

namespace trawl {

struct TrainingExample {
    std::string query;
    std::string positive;
    std::vector<std::string> negatives; // curated hard negatives; may be empty

    void validate() const {
        if (query.empty()) throw DataError("training example: empty query");
        if (positive.empty()) throw DataError("training example: empty positive");
        for (const auto& n : negatives)
            if (n.empty()) throw DataError("training example: empty negative");
    }
};

// L = -ln( exp(s+/T) / (exp(s+/T) + sum exp(s-/T)) ), log-sum-exp stabilized.
// The temperature defaults to 1 to match the plain exp(s) formulation.
inline double infonce_loss(double s_pos, const std::vector<double>& s_negs,
                           double temperature = 1.0) {
    if (!std::isfinite(s_pos)) throw DataError("infonce: non-finite positive similarity");
    for (double s : s_negs)
        if (!std::isfinite(s)) throw DataError("infonce: non-finite negative similarity");
    if (temperature <= 0.0) throw ConfigError("infonce: temperature must be > 0");
    if (s_negs.empty()) return 0.0;

    double pos_logit = s_pos / temperature;
    double max_logit = pos_logit;
    for (double s : s_negs) max_logit = std::max(max_logit, s / temperature);
    double sum = std::exp(pos_logit - max_logit);
    for (double s : s_negs) sum += std::exp(s / temperature - max_logit);
    return max_logit + std::log(sum) - pos_logit;
}

// Linear map on hashed 3-gram counts followed by L2 normalization:
//   embed(x) = normalize(W^T features(x)),  W: feature_dim x embed_dim.
// Double-precision weights so the gradient check has headroom.
class ToyEmbedder : public Embedder {
public:
    ToyEmbedder(int feature_dim, int embed_dim, std::vector<double> weights,
                uint64_t hash_seed = kDefaultHashSeed)
        : feature_dim_(feature_dim), embed_dim_(embed_dim), hash_seed_(hash_seed),
          weights_(std::move(weights)) {
        if (feature_dim_ < 1 || embed_dim_ < 1)
            throw ConfigError("toy embedder: dimensions must be >= 1");
        if (weights_.size() !=
            static_cast<std::size_t>(feature_dim_) * static_cast<std::size_t>(embed_dim_))
            throw ConfigError("toy embedder: weight matrix shape mismatch");
        for (double w : weights_)
            if (!std::isfinite(w)) throw DataError("toy embedder: non-finite weight");
    }

    int feature_dim() const { return feature_dim_; }
    int dimension() const override { return embed_dim_; }
    const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& mutable_weights() { return weights_; }
    uint64_t hash_seed() const { return hash_seed_; }

    std::vector<double> features(std::string_view text) const {
        return hashed_trigram_features(text, feature_dim_, hash_seed_);
    }

    // Pre-normalization projection u = W^T f.
    std::vector<double> project(const std::vector<double>& feats) const {
        std::vector<double> u(static_cast<std::size_t>(embed_dim_), 0.0);
        for (int j = 0; j < feature_dim_; ++j) {
            double f = feats[static_cast<std::size_t>(j)];
            if (f == 0.0) continue;
            const double* row = weights_.data() +
                                static_cast<std::size_t>(j) * static_cast<std::size_t>(embed_dim_);
            for (int d = 0; d < embed_dim_; ++d) u[static_cast<std::size_t>(d)] += f * row[d];
        }
        return u;
    }

    std::vector<double> embed_double(std::string_view text) const {
        auto u = project(features(text));
        double norm = 0.0;
        for (double v : u) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0)
            throw DataError("toy embedder: zero-norm embedding for text '" +
                            std::string(text.substr(0, 40)) + "'");
        for (auto& v : u) v /= norm;
        return u;
    }

    EmbeddingVector embed(std::string_view text, std::string_view instruction = {}) override {
        std::string composed;
        if (!instruction.empty()) {
            composed = std::string(instruction) + "\n" + std::string(text);
            text = composed;
        }
        auto u = embed_double(text);
        EmbeddingVector out(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) out[i] = static_cast<float>(u[i]);
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write file: " + path);
        binio::write_magic(out, kMagic, kVersion);
        binio::write_u32(out, static_cast<uint32_t>(feature_dim_));
        binio::write_u32(out, static_cast<uint32_t>(embed_dim_));
        binio::write_u64(out, hash_seed_);
        for (double w : weights_) binio::write_f64(out, w);
    }

    static ToyEmbedder load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open file: " + path);
        uint32_t version = binio::read_magic(in, kMagic);
        if (version != kVersion)
            throw DataError("toy embedder: unsupported version " + std::to_string(version));
        int feature_dim = static_cast<int>(binio::read_u32(in));
        int embed_dim = static_cast<int>(binio::read_u32(in));
        uint64_t seed = binio::read_u64(in);
        if (feature_dim < 1 || embed_dim < 1)
            throw DataError("toy embedder: bad dimensions in file");
        std::vector<double> weights(static_cast<std::size_t>(feature_dim) *
                                    static_cast<std::size_t>(embed_dim));
        for (auto& w : weights) w = binio::read_f64(in);
        return ToyEmbedder(feature_dim, embed_dim, std::move(weights), seed);
    }

private:
    static constexpr char kMagic[9] = "TRWLTOYE";
    static constexpr uint32_t kVersion = 1;

    int feature_dim_;
    int embed_dim_;
    uint64_t hash_seed_;
    std::vector<double> weights_; // row-major feature_dim x embed_dim
};

// Analytic gradient of the InfoNCE loss with respect to the embedder
// weights, differentiated through both the cosine and the L2 normalization.
inline std::pair<double, std::vector<double>> loss_and_grad(const TrainingExample& example,
                                                            const ToyEmbedder& embedder,
                                                            double temperature = 1.0) {
    example.validate();
    if (temperature <= 0.0) throw ConfigError("infonce: temperature must be > 0");
    const int fd = embedder.feature_dim();
    const int ed = embedder.dimension();

    struct Side {
        std::vector<double> feats;
        std::vector<double> unit; // normalized embedding
        double norm = 0.0;        // pre-normalization norm
    };
    auto prepare = [&](const std::string& text) {
        Side side;
        side.feats = embedder.features(text);
        auto u = embedder.project(side.feats);
        double norm = 0.0;
        for (double v : u) norm += v * v;
        side.norm = std::sqrt(norm);
        if (side.norm == 0.0)
            throw DataError("toy embedder: zero-norm embedding for text '" +
                            text.substr(0, 40) + "'");
        for (auto& v : u) v /= side.norm;
        side.unit = std::move(u);
        return side;
    };

    Side q = prepare(example.query);
    std::vector<Side> docs;
    docs.push_back(prepare(example.positive));
    for (const auto& n : example.negatives) docs.push_back(prepare(n));
    const std::size_t count = docs.size(); // docs[0] is the positive

    std::vector<double> sims(count);
    for (std::size_t i = 0; i < count; ++i) {
        double dot = 0.0;
        for (int d = 0; d < ed; ++d)
            dot += q.unit[static_cast<std::size_t>(d)] * docs[i].unit[static_cast<std::size_t>(d)];
        sims[i] = dot;
    }
    double loss = infonce_loss(sims[0], {sims.begin() + 1, sims.end()}, temperature);

    std::vector<double> grad(static_cast<std::size_t>(fd) * static_cast<std::size_t>(ed), 0.0);
    if (example.negatives.empty()) return {loss, std::move(grad)}; // loss constant 0

    // Softmax over logits s_i / T; dL/ds_0 = (p_0 - 1)/T, dL/ds_i = p_i / T.
    double max_logit = sims[0] / temperature;
    for (std::size_t i = 1; i < count; ++i)
        max_logit = std::max(max_logit, sims[i] / temperature);
    std::vector<double> p(count);
    double z = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        p[i] = std::exp(sims[i] / temperature - max_logit);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    std::vector<double> dl_ds(count);
    dl_ds[0] = (p[0] - 1.0) / temperature;
    for (std::size_t i = 1; i < count; ++i) dl_ds[i] = p[i] / temperature;

    // ds_i/du_q = (e_i - s_i e_q)/|u_q|, ds_i/du_i = (e_q - s_i e_i)/|u_i|.
    std::vector<double> dl_duq(static_cast<std::size_t>(ed), 0.0);
    for (std::size_t i = 0; i < count; ++i)
        for (int d = 0; d < ed; ++d)
            dl_duq[static_cast<std::size_t>(d)] +=
                dl_ds[i] *
                (docs[i].unit[static_cast<std::size_t>(d)] -
                 sims[i] * q.unit[static_cast<std::size_t>(d)]) /
                q.norm;

    auto accumulate = [&](const std::vector<double>& feats, const std::vector<double>& dl_du) {
        for (int j = 0; j < fd; ++j) {
            double f = feats[static_cast<std::size_t>(j)];
            if (f == 0.0) continue;
            double* row =
                grad.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(ed);
            for (int d = 0; d < ed; ++d) row[d] += f * dl_du[static_cast<std::size_t>(d)];
        }
    };
    accumulate(q.feats, dl_duq);

    std::vector<double> dl_du(static_cast<std::size_t>(ed));
    for (std::size_t i = 0; i < count; ++i) {
        for (int d = 0; d < ed; ++d)
            dl_du[static_cast<std::size_t>(d)] =
                dl_ds[i] *
                (q.unit[static_cast<std::size_t>(d)] -
                 sims[i] * docs[i].unit[static_cast<std::size_t>(d)]) /
                docs[i].norm;
        accumulate(docs[i].feats, dl_du);
    }
    return {loss, std::move(grad)};
}

struct TrainConfig {
    int feature_dim = 512;
    int embed_dim = 32;
    int epochs = 200;
    double lr = 0.1;
    uint64_t seed = 7;
    double temperature = 1.0;

    void validate() const {
        if (feature_dim < 1 || embed_dim < 1)
            throw ConfigError("train: dimensions must be >= 1");
        if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
        if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
        if (temperature <= 0.0) throw ConfigError("train: temperature must be > 0");
    }
};

struct TrainResult {
    ToyEmbedder embedder;
    std::vector<double> loss_trace; // mean loss per epoch, before that epoch's step
};

// Full-batch gradient descent with a fixed seed; deterministic end to end.
inline TrainResult train_toy(const std::vector<TrainingExample>& examples,
                             const TrainConfig& config = {}) {
    config.validate();
    if (examples.empty()) throw DataError("train: empty example list");
    for (const auto& e : examples) e.validate();

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(config.feature_dim));
    std::vector<double> weights(static_cast<std::size_t>(config.feature_dim) *
                                static_cast<std::size_t>(config.embed_dim));
    for (auto& w : weights) w = init(rng);
    ToyEmbedder embedder(config.feature_dim, config.embed_dim, std::move(weights));

    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(config.epochs));
    const double scale = 1.0 / static_cast<double>(examples.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<double> grad_sum(embedder.weights().size(), 0.0);
        double loss_sum = 0.0;
        for (const auto& example : examples) {
            auto [loss, grad] = loss_and_grad(example, embedder, config.temperature);
            loss_sum += loss;
            for (std::size_t i = 0; i < grad.size(); ++i) grad_sum[i] += grad[i];
        }
        double mean_loss = loss_sum * scale;
        if (!std::isfinite(mean_loss)) {
            std::string tail;
            std::size_t from = trace.size() > 5 ? trace.size() - 5 : 0;
            for (std::size_t i = from; i < trace.size(); ++i)
                tail += (tail.empty() ? "" : ", ") + std::to_string(trace[i]);
            throw DataError("train: loss diverged at epoch " + std::to_string(epoch) +
                            " (recent losses: " + tail + ")");
        }
        trace.push_back(mean_loss);
        auto& w = embedder.mutable_weights();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config.lr * scale * grad_sum[i];
    }
    return {std::move(embedder), std::move(trace)};
}

// Mean margin s_pos - max s_neg over a probe set; positive means positives
// outscore every negative on average.
inline double probe_margin(const std::vector<TrainingExample>& examples, Embedder& embedder) {
    if (examples.empty()) throw DataError("probe: empty example list");
    double total = 0.0;
    for (const auto& example : examples) {
        example.validate();
        auto q = embedder.embed(example.query);
        double s_pos = cosine(q, embedder.embed(example.positive));
        double best_neg = -1.0;
        for (const auto& n : example.negatives)
            best_neg = std::max(best_neg, static_cast<double>(cosine(q, embedder.embed(n))));
        total += s_pos - best_neg;
    }
    return total / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------
// Pair curation

struct AnnotatedPair {
    std::string query;
    std::string doc;
    int score = 0; // 0..10
    std::string reason;
};

struct CurationResult {
    std::vector<AnnotatedPair> positives; // score > 6
    std::vector<AnnotatedPair> negatives; // score < 4
    std::vector<AnnotatedPair> dropped;   // 4 <= score <= 6
};

inline CurationResult curate_pairs(const std::vector<AnnotatedPair>& pairs) {
    CurationResult result;
    for (const auto& pair : pairs) {
        if (pair.score < 0 || pair.score > 10)
            throw DataError("curate: score " + std::to_string(pair.score) +
                            " outside [0, 10] for query '" + pair.query + "'");
        if (pair.score > 6)
            result.positives.push_back(pair);
        else if (pair.score < 4)
            result.negatives.push_back(pair);
        else
            result.dropped.push_back(pair);
    }
    return result;
}

enum class CurationPromptKind { Annotate, PositiveGen, HardNegativeGen };

struct CurationInputs {
    std::optional<std::string> query;
    std::optional<std::string> doc;
    std::optional<std::string> positive;
};

inline std::string build_curation_prompt(CurationPromptKind kind, const CurationInputs& inputs) {
    auto require = [&](const std::optional<std::string>& field, const char* name) {
        if (!field) throw ConfigError(std::string("curation prompt: missing ") + name);
        return *field;
    };
    switch (kind) {
        case CurationPromptKind::Annotate:
            return "Your task is to judge how useful a piece of Doc is as a reference for "
                   "answering a Query. The Query is the user's question; the Doc includes the "
                   "web page's title and some retrieved snippets from the page.\n"
                   "\n"
                   "Please follow the rules below strictly:\n"
                   "1. Pay attention to whether the time, place, subject, and object in the "
                   "Query match those in the Doc; if they do not match, you must deduct "
                   "points.\n"
                   "2. Pay special attention to whether proper nouns in the Query match those "
                   "in the Doc;\n"
                   "3. Regarding the Doc:\n"
                   "3.1 Identify the main meaning of the Doc. If only a small part of the Doc "
                   "is relevant while the majority discusses other topics, you must deduct "
                   "points;\n"
                   "3.2 Assess the applicability of the Doc; if it is overly one-sided, you "
                   "must deduct points.\n"
                   "4. If the Query is vague and its specific meaning cannot be determined, "
                   "you should deduct points appropriately.\n"
                   "5. Your output must be in JSON format and contain 2 keys: one is score, "
                   "and the other is reason. The score represents the number, and reason "
                   "explains your scoring rationale. Do not output any other unrelated Doc.\n"
                   "\n"
                   "I will now give you a Query and Doc. Please follow the rules above "
                   "strictly and output the score and reason in JSON format. Do not output "
                   "anything else.\n"
                   "\n"
                   "Query: " + require(inputs.query, "query") + "\n"
                   "\n"
                   "Doc: " + require(inputs.doc, "doc") + "\n"
                   "\n"
                   "Response:";
        case CurationPromptKind::PositiveGen:
            return "You are a simulated Google search engine. Your task is to return webpages "
                   "that can answer the given Query. Please follow these guidelines:\n"
                   "\n"
                   "1. Mimic the style of a typical webpage: each result must include both a "
                   "title and content.\n"
                   "2. For multi-hop questions, you only need to generate the document for "
                   "the final hop.\n"
                   "Example: If the Query describes symptoms and asks for treatment, first "
                   "infer the disease yourself, then produce a webpage that discusses "
                   "treatment for that disease only - do not describe the symptoms again.\n"
                   "3. If the user's intent is narrow and could reasonably be satisfied by a "
                   "single webpage, generate just one document. If the Query contains "
                   "multiple sub-questions that would normally require separate sources, "
                   "provide multiple documents, ensuring each covers a distinct, "
                   "non-overlapping topic.\n"
                   "4. Output format:\n"
                   "Document 1:{\"title\":\"xxx\",\"content\":\"xxx\"}\n"
                   "...\n"
                   "Document n:{\"title\":\"xxx\",\"content\":\"xxx\"}\n"
                   "5. Generate no more than three documents in total. The content of each "
                   "document must be 400-800 words, self-contained, and coherent.\n"
                   "6. Remember, you are simulating real Google search results. Your webpages "
                   "should not analyze or directly answer the Query; instead, they should "
                   "present relevant information in a conversational, everyday style, without "
                   "describing specific patient cases.\n"
                   "\n"
                   "Now I will give you a Query; please generate webpage content in the "
                   "required format.\n"
                   "\n"
                   "Query: " + require(inputs.query, "query") + "\n"
                   "\n"
                   "Response:";
        case CurationPromptKind::HardNegativeGen:
            return "You have been assigned a paragraph-generation task:\n"
                   "\n"
                   "You will receive incomplete data containing the following information:\n"
                   "- \"input\": a string consisting of a random prompt specified by the "
                   "task.\n"
                   "- \"positive document\": a string that, according to the task, is "
                   "relevant to the \"input\".\n"
                   "\n"
                   "Your job is to produce a JSON-formatted \"hard negative document\":\n"
                   "- The \"hard negative document\" is a difficult negative sample. While it "
                   "shares some lexical overlap with the input, it does not help solve the "
                   "input's problem and is less relevant to the input than the \"positive "
                   "document\".\n"
                   "\n"
                   "Please observe these guidelines:\n"
                   "1. The \"hard negative document\" should be a long passage (at least 300 "
                   "characters) and should avoid excessive lexical overlap; otherwise, the "
                   "task will be too simple.\n"
                   "2. The \"input\", \"positive document\", and \"hard negative document\" "
                   "must remain independent of one another.\n"
                   "\n"
                   "Your output must always be a single JSON object - provide no explanations "
                   "or additional text. Be creative!\n"
                   "\n"
                   "Now, apply the instructions to the following data:\n"
                   "\n"
                   "'input': " + require(inputs.query, "query") + "\n"
                   "\n"
                   "'positive document': " + require(inputs.positive, "positive") + "\n"
                   "\n"
                   "Your response:";
    }
    throw ConfigError("curation prompt: invalid kind");
}

// Lenient parse of {"score": int, "reason": string}; tolerates code fences
// and prose around the object. Out-of-range or missing score -> no value.
inline std::optional<AnnotatedPair> parse_annotation(const std::string& response) {
    auto try_parse = [](const std::string& text) -> std::optional<AnnotatedPair> {
        nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
        if (!parsed.contains("score") || !parsed["score"].is_number()) return std::nullopt;
        double raw = parsed["score"].get<double>();
        if (raw != std::floor(raw) || raw < 0.0 || raw > 10.0) return std::nullopt;
        AnnotatedPair pair;
        pair.score = static_cast<int>(raw);
        if (parsed.contains("reason") && parsed["reason"].is_string())
            pair.reason = parsed["reason"].get<std::string>();
        return pair;
    };
    if (auto direct = try_parse(response)) return direct;
    auto open = response.find('{');
    auto close = response.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close <= open)
        return std::nullopt;
    return try_parse(response.substr(open, close - open + 1));
}

struct AnnotationOutcome {
    std::vector<AnnotatedPair> annotated;
    int dropped = 0; // unparsable after the retry
    int llm_calls = 0;
};

// Annotate raw (query, doc) pairs with the 0-10 relevance prompt. Replies
// that fail to parse are re-asked once, then the pair is dropped.
inline AnnotationOutcome annotate_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs, CompletionClient& llm,
    int parse_retries = 1, const std::string& model_id = "default") {
    AnnotationOutcome outcome;
    for (const auto& [query, doc] : pairs) {
        CurationInputs inputs;
        inputs.query = query;
        inputs.doc = doc;
        CompletionRequest request;
        request.prompt = build_curation_prompt(CurationPromptKind::Annotate, inputs);
        request.temperature = 0.0;
        request.model_id = model_id;
        bool done = false;
        for (int attempt = 0; attempt <= parse_retries && !done; ++attempt) {
            std::string response = llm.complete(request);
            ++outcome.llm_calls;
            if (auto pair = parse_annotation(response)) {
                pair->query = query;
                pair->doc = doc;
                outcome.annotated.push_back(std::move(*pair));
                done = true;
            }
        }
        if (!done) ++outcome.dropped;
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Training data IO: {"query", "positive", "negatives": [...]} per line.

inline std::vector<TrainingExample> load_training_examples(const std::string& path) {
    std::vector<TrainingExample> examples;
    detail::for_each_jsonl(path, {}, nullptr, [&](std::size_t line_no,
                                                  const nlohmann::json& record) {
        TrainingExample example;
        example.query = detail::require_string(record, "query", path, line_no);
        example.positive = detail::require_string(record, "positive", path, line_no);
        if (record.contains("negatives")) {
            if (!record["negatives"].is_array())
                throw DataError(path + ":" + std::to_string(line_no) +
                                ": 'negatives' must be an array");
            for (const auto& n : record["negatives"]) {
                if (!n.is_string())
                    throw DataError(path + ":" + std::to_string(line_no) +
                                    ": 'negatives' entries must be strings");
                example.negatives.push_back(n.get<std::string>());
            }
        }
        example.validate();
        examples.push_back(std::move(example));
    });
    return examples;
}

inline void save_training_examples(const std::vector<TrainingExample>& examples,
                                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& example : examples) {
        nlohmann::json record = {{"query", example.query},
                                 {"positive", example.positive},
                                 {"negatives", example.negatives}};
        out << record.dump() << "\n";
    }
}

} // namespace trawl
