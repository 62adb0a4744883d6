#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "abc/codes.hpp"
#include "abc/errors.hpp"

namespace abc {

/// Number of differing bits between two packed codes of k bits. Both spans
/// must hold ceil(k/8) bytes with clean padding.
inline int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, int k) {
    const std::size_t need = static_cast<std::size_t>((k + 7) / 8);
    if (a.size() != need || b.size() != need) {
        throw DimensionError("hamming_distance: code lengths " + std::to_string(a.size()) + "B / " +
                             std::to_string(b.size()) + "B for k=" + std::to_string(k));
    }
    int dist = 0;
    std::size_t i = 0;
    for (; i + 8 <= need; i += 8) {
        std::uint64_t wa, wb;
        std::memcpy(&wa, a.data() + i, 8);
        std::memcpy(&wb, b.data() + i, 8);
        dist += std::popcount(wa ^ wb);
    }
    for (; i < need; ++i) dist += std::popcount(static_cast<unsigned>(a[i] ^ b[i]));
    return dist;
}

struct SearchHit {
    int id;
    int distance;
};

/// Query-ready view over a PackedCodeMatrix: rows re-packed into 64-bit words
/// for the popcount scan. Immutable after construction; every search path is
/// an exact linear scan, so results always equal a brute-force ranking with
/// ties broken by ascending id.
class RetrievalIndex {
public:
    explicit RetrievalIndex(const PackedCodeMatrix& codes) : codes_(&codes) {
        if (codes.count() < 1) throw DataError("retrieval index: need at least one code");
        codes.validate_padding();
        words_per_row_ = (codes.bits() + 63) / 64;
        words_.assign(static_cast<std::size_t>(codes.count()) * words_per_row_, 0);
        for (int i = 0; i < codes.count(); ++i) {
            std::memcpy(words_.data() + static_cast<std::size_t>(i) * words_per_row_, codes.row(i),
                        static_cast<std::size_t>(codes.row_bytes()));
        }
    }

    int count() const { return codes_->count(); }
    int bits() const { return codes_->bits(); }
    const PackedCodeMatrix& codes() const { return *codes_; }

    /// Hamming distance from a packed query to every database code, in id
    /// order.
    std::vector<int> distances(std::span<const std::uint8_t> query) const {
        check_query(query);
        std::uint64_t q[kMaxWords];
        load_query(query, q);
        std::vector<int> out(static_cast<std::size_t>(count()));
        const std::uint64_t* row = words_.data();
        for (int i = 0; i < count(); ++i, row += words_per_row_) {
            int d = 0;
            for (int w = 0; w < words_per_row_; ++w) d += std::popcount(row[w] ^ q[w]);
            out[static_cast<std::size_t>(i)] = d;
        }
        return out;
    }

    /// Top-k by ascending distance, ties by ascending id.
    std::vector<SearchHit> search_topk(std::span<const std::uint8_t> query, int topk) const {
        if (topk < 1) throw ParameterError("search_topk: topk must be >= 1");
        std::vector<SearchHit> hits = collect(query);
        const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(topk), hits.size());
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), order);
        hits.resize(keep);
        return hits;
    }

    /// The full ranking (a permutation of [0, N)).
    std::vector<SearchHit> rank_all(std::span<const std::uint8_t> query) const {
        std::vector<SearchHit> hits = collect(query);
        std::sort(hits.begin(), hits.end(), order);
        return hits;
    }

private:
    static constexpr int kMaxWords = 1024;

    static bool order(const SearchHit& a, const SearchHit& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    }

    void check_query(std::span<const std::uint8_t> query) const {
        if (query.size() != static_cast<std::size_t>(codes_->row_bytes())) {
            throw DimensionError("query is " + std::to_string(query.size()) + " bytes, index rows are " +
                                 std::to_string(codes_->row_bytes()));
        }
    }

    void load_query(std::span<const std::uint8_t> query, std::uint64_t* q) const {
        if (words_per_row_ > kMaxWords) throw DimensionError("retrieval index: code length too large");
        std::fill(q, q + words_per_row_, 0);
        std::memcpy(q, query.data(), query.size());
    }

    std::vector<SearchHit> collect(std::span<const std::uint8_t> query) const {
        std::vector<int> dist = distances(query);
        std::vector<SearchHit> hits(dist.size());
        for (std::size_t i = 0; i < dist.size(); ++i) hits[i] = {static_cast<int>(i), dist[i]};
        return hits;
    }

    const PackedCodeMatrix* codes_;
    int words_per_row_;
    std::vector<std::uint64_t> words_;
};

inline RetrievalIndex build_index(const PackedCodeMatrix& codes) { return RetrievalIndex(codes); }

}  // namespace abc
