#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abc/codes.hpp"
#include "abc/errors.hpp"
#include "abc/retrieval.hpp"

namespace abc {

enum class JudgeMode { SingleLabel, MultiLabel };

inline JudgeMode judge_mode_from_string(const std::string& s) {
    if (s == "single" || s == "single-label") return JudgeMode::SingleLabel;
    if (s == "multi" || s == "multi-label") return JudgeMode::MultiLabel;
    throw ConfigError("unknown judge mode '" + s + "' (expected single or multi)");
}

/// Decides relevance between a query item and a database item from their
/// label sets. Single-label compares the (only) label; multi-label asks for a
/// non-empty intersection, which is symmetric in the two items.
struct RelevanceJudge {
    JudgeMode mode = JudgeMode::SingleLabel;
    const std::vector<std::vector<std::uint16_t>>* query_labels = nullptr;
    const std::vector<std::vector<std::uint16_t>>* db_labels = nullptr;
};

inline bool labels_intersect(const std::vector<std::uint16_t>& a, const std::vector<std::uint16_t>& b) {
    for (std::uint16_t x : a) {
        for (std::uint16_t y : b) {
            if (x == y) return true;
        }
    }
    return false;
}

inline bool is_relevant(const RelevanceJudge& judge, int query_id, int db_id) {
    const auto& q = (*judge.query_labels)[static_cast<std::size_t>(query_id)];
    const auto& d = (*judge.db_labels)[static_cast<std::size_t>(db_id)];
    if (q.empty() || d.empty()) return false;
    if (judge.mode == JudgeMode::SingleLabel) return q[0] == d[0];
    return labels_intersect(q, d);
}

/// AP = (1/R) * sum over relevant hits at rank j of (relevant hits <= j) / j,
/// with R the number of relevant items reachable in the ranking. Returns 0
/// when R = 0 (such queries still count toward the mean). When `cutoff` > 0
/// only the first `cutoff` ranks are scored and R is clamped to the cutoff.
inline double average_precision(const std::vector<int>& ranking, const RelevanceJudge& judge, int query_id,
                                int cutoff = 0) {
    // The ranking must be a permutation of a [0, N) id range.
    std::vector<std::uint8_t> seen(ranking.size(), 0);
    for (int id : ranking) {
        if (id < 0 || static_cast<std::size_t>(id) >= ranking.size() || seen[static_cast<std::size_t>(id)]) {
            throw DataError("average_precision: ranking is not a permutation of [0, N)");
        }
        seen[static_cast<std::size_t>(id)] = 1;
    }
    long relevant_total = 0;
    for (int id = 0; id < static_cast<int>(ranking.size()); ++id) {
        if (is_relevant(judge, query_id, id)) ++relevant_total;
    }
    const long limit = cutoff > 0 ? std::min<long>(cutoff, static_cast<long>(ranking.size()))
                                  : static_cast<long>(ranking.size());
    if (cutoff > 0) relevant_total = std::min(relevant_total, limit);
    if (relevant_total == 0) return 0.0;
    double sum = 0.0;
    long hits = 0;
    for (long j = 0; j < limit; ++j) {
        if (is_relevant(judge, query_id, ranking[static_cast<std::size_t>(j)])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(j + 1);
        }
    }
    return sum / static_cast<double>(relevant_total);
}

struct EvalOptions {
    // Drop the database item with the query's id when the two code sets are
    // the same set (detected by byte equality). Matches the usual protocol of
    // querying a database with itself.
    bool exclude_self = true;
    int topn = 0;              // 0 = score the full ranking
    int precision_cutoff = 500;
};

struct EvalReport {
    double map = 0.0;
    double precision_at_cutoff = 0.0;
    int queries = 0;
};

/// Ranks every query against the database (exact Hamming, ties by id) and
/// averages AP and precision@cutoff. All accumulation is in double.
inline EvalReport evaluate_retrieval(const PackedCodeMatrix& db, const PackedCodeMatrix& queries,
                                     JudgeMode mode, const EvalOptions& opts = {}) {
    if (db.bits() != queries.bits()) {
        throw DimensionError("evaluate: database codes have " + std::to_string(db.bits()) +
                             " bits, queries have " + std::to_string(queries.bits()));
    }
    RetrievalIndex index(db);
    RelevanceJudge judge{mode, &queries.all_labels(), &db.all_labels()};
    const bool same_set = opts.exclude_self && db.same_codes(queries);
    double ap_sum = 0.0;
    double prec_sum = 0.0;
    for (int qi = 0; qi < queries.count(); ++qi) {
        std::vector<SearchHit> hits =
            index.rank_all(std::span<const std::uint8_t>(queries.row(qi), static_cast<std::size_t>(queries.row_bytes())));
        std::vector<int> kept_ids;  // ranked db ids, optionally without the query itself
        kept_ids.reserve(hits.size());
        for (const SearchHit& h : hits) {
            if (same_set && h.id == qi) continue;
            kept_ids.push_back(h.id);
        }
        long relevant_total = 0;
        for (int id : kept_ids) {
            if (is_relevant(judge, qi, id)) ++relevant_total;
        }
        const long limit = opts.topn > 0 ? std::min<long>(opts.topn, static_cast<long>(kept_ids.size()))
                                         : static_cast<long>(kept_ids.size());
        long rel_denom = relevant_total;
        if (opts.topn > 0) rel_denom = std::min<long>(rel_denom, limit);
        double ap = 0.0;
        long hits_count = 0;
        long prec_hits = 0;
        const long prec_limit = std::min<long>(opts.precision_cutoff, static_cast<long>(kept_ids.size()));
        for (long j = 0; j < static_cast<long>(kept_ids.size()); ++j) {
            const bool rel = is_relevant(judge, qi, kept_ids[static_cast<std::size_t>(j)]);
            if (rel && j < limit) {
                ++hits_count;
                ap += static_cast<double>(hits_count) / static_cast<double>(j + 1);
            }
            if (rel && j < prec_limit) ++prec_hits;
        }
        ap_sum += rel_denom > 0 ? ap / static_cast<double>(rel_denom) : 0.0;
        prec_sum += prec_limit > 0 ? static_cast<double>(prec_hits) / static_cast<double>(prec_limit) : 0.0;
    }
    EvalReport report;
    report.queries = queries.count();
    report.map = queries.count() > 0 ? ap_sum / queries.count() : 0.0;
    report.precision_at_cutoff = queries.count() > 0 ? prec_sum / queries.count() : 0.0;
    return report;
}

/// Convenience wrapper matching the evaluation contract: mean AP over all
/// queries, full ranking, fixed tie rule.
inline double mean_average_precision(const PackedCodeMatrix& db, const PackedCodeMatrix& queries,
                                     JudgeMode mode, const EvalOptions& opts = {}) {
    return evaluate_retrieval(db, queries, mode, opts).map;
}

}  // namespace abc
