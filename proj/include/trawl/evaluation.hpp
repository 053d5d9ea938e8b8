#pragma once

// nDCG@10 scoring over TREC-style run files: binary gains, log2 discount,
// excluded ids removed from the ranking before scoring, macro average
// across datasets (dataset = query id prefix before '/').

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "trawl/corpus.hpp"
#include "trawl/errors.hpp"
#include "trawl/scored_list.hpp"

namespace trawl {

// Per query: doc ids unique, scores non-increasing.
class RunFile {
public:
    void set_ranking(const std::string& query_id, std::vector<ScoredEntry> entries) {
        std::unordered_set<std::string> seen;
        seen.reserve(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!seen.insert(entries[i].id).second)
                throw DataError("run file: duplicate doc '" + entries[i].id + "' for query '" +
                                query_id + "'");
            if (!std::isfinite(entries[i].score))
                throw DataError("run file: non-finite score for query '" + query_id + "'");
            if (i > 0 && entries[i].score > entries[i - 1].score)
                throw DataError("run file: scores increase at rank " + std::to_string(i + 1) +
                                " for query '" + query_id + "'");
        }
        rankings_[query_id] = std::move(entries);
    }

    void set_ranking(const std::string& query_id, const ScoredList& list) {
        set_ranking(query_id, list.entries());
    }

    bool has(const std::string& query_id) const { return rankings_.count(query_id) > 0; }

    const std::vector<ScoredEntry>& ranking(const std::string& query_id) const {
        auto it = rankings_.find(query_id);
        if (it == rankings_.end())
            throw DataError("run file: unknown query id '" + query_id + "'");
        return it->second;
    }

    const std::map<std::string, std::vector<ScoredEntry>>& rankings() const {
        return rankings_;
    }
    std::size_t size() const { return rankings_.size(); }

private:
    std::map<std::string, std::vector<ScoredEntry>> rankings_;
};

inline double ndcg_at_k(const std::vector<std::string>& ranking,
                        const std::set<std::string>& gold,
                        const std::set<std::string>& excluded, int k = 10) {
    if (k < 1) throw ConfigError("ndcg: k must be >= 1");
    std::set<std::string> effective_gold;
    for (const auto& id : gold)
        if (!excluded.count(id)) effective_gold.insert(id);
    if (effective_gold.empty()) throw DataError("ndcg: empty gold set after exclusion");

    double dcg = 0.0;
    int rank = 0;
    for (const auto& id : ranking) {
        if (excluded.count(id)) continue; // excluded ids do not occupy a rank
        ++rank;
        if (rank > k) break;
        if (effective_gold.count(id)) dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
    double idcg = 0.0;
    int ideal = std::min<int>(k, static_cast<int>(effective_gold.size()));
    for (int i = 1; i <= ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 1.0);
    return dcg / idcg;
}

struct EvalReport {
    std::map<std::string, double> per_query;
    std::map<std::string, double> per_dataset;
    double macro_avg = 0.0;
    int k = 10;
    std::vector<std::string> warnings;
};

// Dataset key: query id prefix before '/', or "default" when there is none.
inline std::string dataset_of_query(const std::string& query_id) {
    auto pos = query_id.find('/');
    return pos == std::string::npos ? "default" : query_id.substr(0, pos);
}

// Every judged query is scored; a query missing from the run contributes 0
// with a warning. Datasets are averaged, then averaged again (macro).
inline EvalReport evaluate_run(const RunFile& run, const Judgments& judgments, int k = 10) {
    if (k < 1) throw ConfigError("evaluate: k must be >= 1");
    if (judgments.size() == 0) throw DataError("evaluate: no judged queries");
    EvalReport report;
    report.k = k;
    std::map<std::string, std::vector<double>> by_dataset;
    for (const auto& qid : judgments.query_ids()) {
        double score = 0.0;
        if (run.has(qid)) {
            std::vector<std::string> ranking;
            ranking.reserve(run.ranking(qid).size());
            for (const auto& e : run.ranking(qid)) ranking.push_back(e.id);
            score = ndcg_at_k(ranking, judgments.gold(qid), judgments.excluded(qid), k);
        } else {
            report.warnings.push_back("query '" + qid + "' missing from run; scored 0");
        }
        report.per_query[qid] = score;
        by_dataset[dataset_of_query(qid)].push_back(score);
    }
    double total = 0.0;
    for (const auto& [dataset, scores] : by_dataset) {
        double sum = 0.0;
        for (double s : scores) sum += s;
        report.per_dataset[dataset] = sum / static_cast<double>(scores.size());
        total += report.per_dataset[dataset];
    }
    report.macro_avg = total / static_cast<double>(by_dataset.size());
    return report;
}

// ---------------------------------------------------------------------------
// TREC run format: "query_id Q0 doc_id rank score tag"

inline void save_trec_run(const RunFile& run, const std::string& path,
                          const std::string& tag = "trawl") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << std::setprecision(17);
    for (const auto& [qid, entries] : run.rankings()) {
        for (std::size_t i = 0; i < entries.size(); ++i)
            out << qid << " Q0 " << entries[i].id << " " << (i + 1) << " " << entries[i].score
                << " " << tag << "\n";
    }
}

inline RunFile load_trec_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::map<std::string, std::vector<ScoredEntry>> rankings;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string qid, q0, doc_id, tag;
        long rank = 0;
        double score = 0.0;
        if (!(fields >> qid >> q0 >> doc_id >> rank >> score >> tag))
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed TREC line");
        rankings[qid].push_back({doc_id, score});
    }
    RunFile run;
    for (auto& [qid, entries] : rankings) run.set_ranking(qid, std::move(entries));
    return run;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_report_table(const EvalReport& report) {
    std::size_t width = std::string("dataset").size();
    for (const auto& [dataset, _] : report.per_dataset)
        width = std::max(width, dataset.size());
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(static_cast<int>(width)) << "dataset" << "  nDCG@"
        << report.k << "  queries\n";
    for (const auto& [dataset, mean] : report.per_dataset) {
        std::size_t count = 0;
        for (const auto& [qid, _] : report.per_query)
            if (dataset_of_query(qid) == dataset) ++count;
        out << std::left << std::setw(static_cast<int>(width)) << dataset << "  " << mean
            << "   " << count << "\n";
    }
    out << std::left << std::setw(static_cast<int>(width)) << "macro-avg" << "  "
        << report.macro_avg << "\n";
    return out.str();
}

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json out;
    out["k"] = report.k;
    out["macro_avg"] = report.macro_avg;
    out["per_dataset"] = report.per_dataset;
    out["per_query"] = report.per_query;
    out["warnings"] = report.warnings;
    return out;
}

} // namespace trawl
