#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "abc/errors.hpp"
#include "abc/evaluation.hpp"
#include "abc/losses.hpp"
#include "abc/random.hpp"
#include "abc/tensor.hpp"

namespace abc {

/// One feature tensor (image C x H x W in [0,1], or a flat vector) with one
/// or more label ids.
struct LabeledExample {
    Tensor<float> features;
    std::vector<std::uint16_t> labels;
};

struct Dataset {
    std::vector<LabeledExample> examples;

    int size() const { return static_cast<int>(examples.size()); }

    std::vector<std::vector<std::uint16_t>> label_sets() const {
        std::vector<std::vector<std::uint16_t>> out(examples.size());
        for (std::size_t i = 0; i < examples.size(); ++i) out[i] = examples[i].labels;
        return out;
    }
};

struct SplitDataset {
    Dataset train;
    Dataset test;
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary batch format: records of 3073 bytes, 1 label byte (0..9)
// followed by 3072 pixel bytes (1024 R, 1024 G, 1024 B, row-major 32x32).
// Pixels are scaled to [0,1] by /255.
// ---------------------------------------------------------------------------

constexpr std::size_t kCifarRecordBytes = 3073;

inline std::vector<LabeledExample> parse_cifar10_binary(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t offset = (bytes.size() / kCifarRecordBytes) * kCifarRecordBytes;
        throw FormatError("cifar10: file length " + std::to_string(bytes.size()) +
                          " is not a multiple of 3073; incomplete record starts at offset " +
                          std::to_string(offset));
    }
    const std::size_t records = bytes.size() / kCifarRecordBytes;
    std::vector<LabeledExample> out;
    out.reserve(records);
    for (std::size_t r = 0; r < records; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
        if (rec[0] > 9) {
            throw FormatError("cifar10: label byte " + std::to_string(int(rec[0])) + " > 9 at offset " +
                              std::to_string(r * kCifarRecordBytes));
        }
        LabeledExample ex;
        ex.labels = {rec[0]};
        ex.features = Tensor<float>({3, 32, 32});
        for (int i = 0; i < 3072; ++i) ex.features[i] = static_cast<float>(rec[1 + i]) / 255.0f;
        out.push_back(std::move(ex));
    }
    return out;
}

/// Inverse of parse_cifar10_binary; valid files round-trip byte-exactly.
inline std::vector<std::uint8_t> serialize_cifar10(const std::vector<LabeledExample>& examples) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(examples.size() * kCifarRecordBytes);
    for (const LabeledExample& ex : examples) {
        if (ex.labels.size() != 1 || ex.labels[0] > 9 || ex.features.size() != 3072) {
            throw DataError("cifar10: example is not a 3x32x32 single-label image");
        }
        bytes.push_back(static_cast<std::uint8_t>(ex.labels[0]));
        for (int i = 0; i < 3072; ++i) {
            const float v = ex.features[i] * 255.0f;
            bytes.push_back(static_cast<std::uint8_t>(v + 0.5f));
        }
    }
    return bytes;
}

inline std::vector<LabeledExample> load_cifar10_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cifar10: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_cifar10_binary(bytes);
}

// ---------------------------------------------------------------------------
// Synthetic clusters: class means on a seeded unit sphere, examples = mean +
// N(0, sigma^2), deterministic per seed, 80/20 train/test split by seeded
// shuffle.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    int classes = 4;
    int per_class = 125;
    int dim = 32;
    double sigma = 0.3;
    double radius = 1.0;  // sphere radius the class means are drawn on
    std::uint64_t seed = 7;
    bool multi_label = false;  // draws 1..3 labels per example when set
};

inline SplitDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.per_class < 1 || spec.dim < 1 || !(spec.sigma > 0.0) ||
        !(spec.radius > 0.0)) {
        throw ParameterError("synthetic: classes, per_class, dim must be >= 1; sigma and radius > 0");
    }
    Rng rng(derive_seed(spec.seed, "synthetic"));
    std::vector<Tensor<float>> means;
    means.reserve(static_cast<std::size_t>(spec.classes));
    for (int c = 0; c < spec.classes; ++c) {
        Tensor<float> m({spec.dim});
        double norm_sq = 0.0;
        for (int d = 0; d < spec.dim; ++d) {
            m[d] = static_cast<float>(rng.gaussian());
            norm_sq += static_cast<double>(m[d]) * m[d];
        }
        const float scale = static_cast<float>(spec.radius / std::sqrt(norm_sq));
        for (int d = 0; d < spec.dim; ++d) m[d] *= scale;
        means.push_back(std::move(m));
    }
    std::vector<LabeledExample> all;
    all.reserve(static_cast<std::size_t>(spec.classes) * spec.per_class);
    for (int c = 0; c < spec.classes; ++c) {
        for (int e = 0; e < spec.per_class; ++e) {
            LabeledExample ex;
            ex.features = Tensor<float>({spec.dim});
            for (int d = 0; d < spec.dim; ++d) {
                ex.features[d] = means[static_cast<std::size_t>(c)][d] +
                                 static_cast<float>(rng.gaussian(0.0, spec.sigma));
            }
            ex.labels = {static_cast<std::uint16_t>(c)};
            if (spec.multi_label && spec.classes > 1) {
                const int extra = static_cast<int>(rng.index(3));  // 0..2 extra labels
                for (int t = 0; t < extra; ++t) {
                    const auto l = static_cast<std::uint16_t>(rng.index(spec.classes));
                    if (std::find(ex.labels.begin(), ex.labels.end(), l) == ex.labels.end()) {
                        ex.labels.push_back(l);
                    }
                }
            }
            all.push_back(std::move(ex));
        }
    }
    std::vector<int> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = all.size(); i > 1; --i) {  // Fisher-Yates with the dataset stream
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.index(static_cast<std::int64_t>(i)))]);
    }
    const std::size_t train_n = (all.size() * 8) / 10;
    SplitDataset split;
    for (std::size_t i = 0; i < all.size(); ++i) {
        (i < train_n ? split.train : split.test).examples.push_back(all[static_cast<std::size_t>(order[i])]);
    }
    return split;
}

// ---------------------------------------------------------------------------
// "BNF1" dataset container: the same layout family as "BNC1" but with a
// float32 feature block instead of packed bits.
// magic "BNF1" | u32 N | u32 rank | rank x u32 dims | N x prod(dims) f32 (LE)
// | per row: varint label count + u16 label ids.
// ---------------------------------------------------------------------------

inline void save_dataset(const Dataset& data, const std::string& path) {
    if (data.size() == 0) throw DataError("dataset save: empty dataset");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("BNF1: cannot open " + path + " for writing");
    os.write("BNF1", 4);
    auto write_u32 = [&os](std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
        os.write(b, 4);
    };
    const std::vector<int>& shape = data.examples[0].features.shape();
    write_u32(static_cast<std::uint32_t>(data.size()));
    write_u32(static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) write_u32(static_cast<std::uint32_t>(d));
    for (const LabeledExample& ex : data.examples) {
        if (ex.features.shape() != shape) throw DataError("dataset save: inhomogeneous feature shapes");
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(ex.features.data()),
                 static_cast<std::streamsize>(ex.features.size() * 4));
    }
    for (const LabeledExample& ex : data.examples) {
        std::uint64_t v = ex.labels.size();
        while (v >= 0x80) {
            os.put(static_cast<char>((v & 0x7F) | 0x80));
            v >>= 7;
        }
        os.put(static_cast<char>(v));
        for (std::uint16_t id : ex.labels) {
            char b[2] = {static_cast<char>(id & 0xFF), static_cast<char>((id >> 8) & 0xFF)};
            os.write(b, 2);
        }
    }
    if (!os) throw IoError("BNF1: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("BNF1: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "BNF1", 4) != 0) throw FormatError("BNF1: bad magic in " + path);
    auto read_u32 = [&is, &path]() {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (!is) throw FormatError("BNF1: truncated header in " + path);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    const std::uint32_t n = read_u32();
    const std::uint32_t rank = read_u32();
    if (n == 0 || rank == 0 || rank > 4) throw FormatError("BNF1: bad N or rank in " + path);
    std::vector<int> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32());
    Dataset data;
    data.examples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        data.examples[i].features = Tensor<float>(shape);
        is.read(reinterpret_cast<char*>(data.examples[i].features.data()),
                static_cast<std::streamsize>(data.examples[i].features.size() * 4));
    }
    if (!is) throw FormatError("BNF1: truncated feature block in " + path);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint64_t cnt = 0;
        int shift = 0;
        while (true) {
            const int c = is.get();
            if (c == EOF) throw FormatError("BNF1: truncated label block in " + path);
            cnt |= static_cast<std::uint64_t>(c & 0x7F) << shift;
            if (!(c & 0x80)) break;
            shift += 7;
        }
        data.examples[i].labels.resize(cnt);
        for (std::uint64_t j = 0; j < cnt; ++j) {
            unsigned char b[2];
            is.read(reinterpret_cast<char*>(b), 2);
            if (!is) throw FormatError("BNF1: truncated label id in " + path);
            data.examples[i].labels[j] =
                static_cast<std::uint16_t>(static_cast<std::uint16_t>(b[0]) | (static_cast<std::uint16_t>(b[1]) << 8));
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Pair sampling.
// ---------------------------------------------------------------------------

/// Index pairs drawn for one training iteration.
struct SampledPairs {
    std::vector<int> left;
    std::vector<int> right;
    std::vector<std::uint8_t> similar;
};

/// Seeded pair sampler: each batch draws half similar, half dissimilar pairs,
/// anchors uniform over examples. Similarity follows the relevance rule of
/// the judge mode.
class PairSampler {
public:
    PairSampler(const Dataset& data, JudgeMode mode, std::uint64_t seed) : data_(&data), rng_(seed) {
        labels_ = data.label_sets();
        judge_ = RelevanceJudge{mode, &labels_, &labels_};
        // Feasibility: at least one similar and one dissimilar partner must
        // exist somewhere.
        bool any_similar = false, any_dissimilar = false;
        for (int i = 0; i < data.size() && !(any_similar && any_dissimilar); ++i) {
            for (int j = i + 1; j < data.size(); ++j) {
                if (is_relevant(judge_, i, j))
                    any_similar = true;
                else
                    any_dissimilar = true;
                if (any_similar && any_dissimilar) break;
            }
        }
        if (!any_similar || !any_dissimilar) {
            throw DataError("pair sampler: dataset has no " +
                            std::string(!any_similar ? "similar" : "dissimilar") + " pair");
        }
    }

    SampledPairs sample(int batch_size) {
        if (batch_size < 2 || batch_size % 2 != 0) {
            throw ParameterError("pair sampler: batch size must be even and >= 2");
        }
        SampledPairs out;
        out.left.reserve(static_cast<std::size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i) {
            const bool want_similar = i < batch_size / 2;
            const auto [a, b] = draw(want_similar);
            out.left.push_back(a);
            out.right.push_back(b);
            out.similar.push_back(want_similar ? 1 : 0);
        }
        return out;
    }

private:
    std::pair<int, int> draw(bool similar) {
        const int n = data_->size();
        // Anchor uniform, partner by bounded rejection on the relevance rule.
        for (int attempt = 0; attempt < 64 * n; ++attempt) {
            const int a = static_cast<int>(rng_.index(n));
            const int b = static_cast<int>(rng_.index(n));
            if (a == b) continue;
            if (is_relevant(judge_, a, b) == similar) return {a, b};
        }
        throw DataError("pair sampler: could not draw a " + std::string(similar ? "similar" : "dissimilar") +
                        " pair");
    }

    const Dataset* data_;
    Rng rng_;
    std::vector<std::vector<std::uint16_t>> labels_;
    RelevanceJudge judge_;
};

/// Assembles feature matrices for the drawn pairs (flattening any image
/// features to rows).
inline PairBatch<float> gather_pairs(const Dataset& data, const SampledPairs& pairs) {
    const int b = static_cast<int>(pairs.left.size());
    const int dim = static_cast<int>(data.examples[0].features.size());
    PairBatch<float> batch;
    batch.left = Tensor<float>({b, dim});
    batch.right = Tensor<float>({b, dim});
    batch.similar = pairs.similar;
    for (int i = 0; i < b; ++i) {
        const Tensor<float>& l = data.examples[static_cast<std::size_t>(pairs.left[i])].features;
        const Tensor<float>& r = data.examples[static_cast<std::size_t>(pairs.right[i])].features;
        for (int d = 0; d < dim; ++d) {
            batch.left(i, d) = l[d];
            batch.right(i, d) = r[d];
        }
    }
    return batch;
}

/// Per-channel (or per-dimension) mean of the training features, for the
/// optional mean-subtraction transform.
inline Tensor<float> feature_mean(const Dataset& data) {
    if (data.size() == 0) throw DataError("feature_mean: empty dataset");
    Tensor<float> mean(data.examples[0].features.shape());
    std::vector<double> acc(static_cast<std::size_t>(mean.size()), 0.0);
    for (const LabeledExample& ex : data.examples) {
        for (std::int64_t i = 0; i < ex.features.size(); ++i) acc[static_cast<std::size_t>(i)] += ex.features[i];
    }
    for (std::int64_t i = 0; i < mean.size(); ++i) {
        mean[i] = static_cast<float>(acc[static_cast<std::size_t>(i)] / data.size());
    }
    return mean;
}

inline void subtract_mean(Dataset& data, const Tensor<float>& mean) {
    for (LabeledExample& ex : data.examples) {
        for (std::int64_t i = 0; i < ex.features.size(); ++i) ex.features[i] -= mean[i];
    }
}

}  // namespace abc
