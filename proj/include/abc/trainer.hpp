#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "abc/codes.hpp"
#include "abc/config.hpp"
#include "abc/dataset.hpp"
#include "abc/evaluation.hpp"
#include "abc/losses.hpp"
#include "abc/network.hpp"
#include "abc/optimizer.hpp"
#include "abc/random.hpp"
#include "abc/schedules.hpp"

namespace abc {

/// One record per completed epoch. r/alpha/lr are the values in effect at the
/// epoch's last iteration; `iteration` is the number of iterations completed.
struct MetricsRow {
    long epoch;
    long iteration;
    double r;
    double alpha;
    double lr;
    double loss;
    double map;
    bool has_map;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;

    static constexpr const char* kHeader = "epoch,iteration,r,alpha,lr,loss,map";

    void write_csv(std::ostream& os) const {
        os << kHeader << "\n";
        for (const MetricsRow& row : rows) {
            os << row.epoch << ',' << row.iteration << ',' << csv_number(row.r) << ',' << csv_number(row.alpha)
               << ',' << csv_number(row.lr) << ',' << csv_number(row.loss) << ',';
            if (row.has_map) os << csv_number(row.map);
            os << "\n";
        }
    }

    void save_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("metrics: cannot open " + path + " for writing");
        write_csv(os);
        if (!os) throw IoError("metrics: write failed for " + path);
    }

    static std::string csv_number(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return buf;
    }
};

/// Materializes the configured dataset (synthetic, CIFAR-10 batches, or BNF1
/// files), applying the optional per-channel mean subtraction computed on the
/// training split.
inline SplitDataset load_experiment_dataset(const ExperimentConfig& cfg) {
    SplitDataset split;
    switch (cfg.dataset_kind) {
        case DatasetKind::Synthetic: split = generate_synthetic(cfg.synthetic); break;
        case DatasetKind::Cifar10: {
            if (cfg.cifar_train_path.empty() || cfg.cifar_test_path.empty()) {
                throw ConfigError("cifar10 dataset needs dataset.cifar_train and dataset.cifar_test paths");
            }
            auto load_list = [](const std::string& paths) {
                std::vector<LabeledExample> out;
                std::istringstream is(paths);
                std::string path;
                while (std::getline(is, path, ',')) {
                    std::vector<LabeledExample> part = load_cifar10_file(path);
                    out.insert(out.end(), part.begin(), part.end());
                }
                return out;
            };
            split.train.examples = load_list(cfg.cifar_train_path);
            split.test.examples = load_list(cfg.cifar_test_path);
            break;
        }
        case DatasetKind::File: {
            if (cfg.dataset_path.empty() || cfg.dataset_test_path.empty()) {
                throw ConfigError("file dataset needs dataset.train_file and dataset.test_file paths");
            }
            split.train = load_dataset(cfg.dataset_path);
            split.test = load_dataset(cfg.dataset_test_path);
            break;
        }
    }
    if (split.train.size() == 0 || split.test.size() == 0) {
        throw DataError("dataset: empty train or test split");
    }
    if (cfg.mean_subtract) {
        const Tensor<float> mean = feature_mean(split.train);
        subtract_mean(split.train, mean);
        subtract_mean(split.test, mean);
    }
    return split;
}

/// Stacks all feature tensors of a dataset into one batch tensor (rank 2 for
/// flat features, rank 4 for images).
inline Tensor<float> feature_matrix(const Dataset& data, int begin = 0, int end = -1) {
    if (end < 0) end = data.size();
    const int n = end - begin;
    const std::vector<int>& fshape = data.examples[0].features.shape();
    std::vector<int> shape;
    shape.push_back(n);
    for (int d : fshape) shape.push_back(d);
    if (shape.size() == 2 || shape.size() == 4) {
        Tensor<float> out(shape);
        const std::int64_t stride = data.examples[0].features.size();
        for (int i = 0; i < n; ++i) {
            const Tensor<float>& f = data.examples[static_cast<std::size_t>(begin + i)].features;
            for (std::int64_t j = 0; j < stride; ++j) out[i * stride + j] = f[j];
        }
        return out;
    }
    throw DimensionError("feature_matrix: unsupported feature rank " + std::to_string(fshape.size()));
}

inline BinarizeMethod binarize_method(Method m) {
    // dsh-reg-only has no activation layer; its codes use the tanh sign rule.
    return m == Method::Abc ? BinarizeMethod::Abc : BinarizeMethod::ScaledTanh;
}

/// Extracts packed codes for a whole dataset with the method's thresholding
/// rule (ABC extraction corresponds to forcing r = 0). Runs in eval mode, in
/// chunks, and attaches the dataset labels.
inline PackedCodeMatrix extract_codes(Network<float>& net, const Dataset& data, Method method) {
    const int n = data.size();
    if (n == 0) throw DataError("extract_codes: empty dataset");
    PackedCodeMatrix codes(n, net.code_bits());
    const int chunk = 512;
    for (int begin = 0; begin < n; begin += chunk) {
        const int end = std::min(n, begin + chunk);
        Tensor<float> acts = net.code_activations(feature_matrix(data, begin, end));
        PackedCodeMatrix part = extract_binary_codes(acts, binarize_method(method));
        for (int i = 0; i < part.count(); ++i) {
            for (int j = 0; j < part.bits(); ++j) {
                if (part.bit(i, j)) codes.set_bit(begin + i, j, true);
            }
        }
    }
    for (int i = 0; i < n; ++i) codes.set_labels(i, data.examples[static_cast<std::size_t>(i)].labels);
    return codes;
}

struct TrainResult {
    Network<float> net;
    MetricsLog log;
    double final_map = 0.0;
};

/// Runs the configured experiment: SGD over pairwise (or classification)
/// batches, schedules queried at every epoch/iteration boundary, retrieval
/// mAP evaluated every eval_every epochs and at the end. Fully reproducible
/// from (config, seed): two runs produce identical logs.
inline TrainResult train(const ExperimentConfig& cfg, const SplitDataset& data) {
    const int input_dim = static_cast<int>(data.train.examples[0].features.size());
    Rng init_rng(derive_seed(cfg.seed, "init"));
    TrainResult result;
    result.net = Network<float>(parse_architecture(cfg.effective_arch(input_dim)), init_rng);
    Network<float>& net = result.net;
    if (!cfg.init_model.empty()) {
        // Fine-tuning: adopt every base parameter whose name and shape match;
        // layers not present in the base (e.g. a freshly appended batchnorm)
        // keep their initialization.
        Network<float> base = Network<float>::load(cfg.init_model);
        int adopted = 0;
        for (Parameter<float>* dst : net.parameters()) {
            for (Parameter<float>* src : base.parameters()) {
                if (src->name == dst->name && src->value.same_shape(dst->value)) {
                    dst->value = src->value;
                    ++adopted;
                }
            }
        }
        if (adopted == 0) {
            throw ConfigError("init_model: no parameter of " + cfg.init_model +
                              " matches the configured architecture");
        }
    }

    const int iters_per_epoch =
        cfg.iterations_per_epoch > 0
            ? cfg.iterations_per_epoch
            : std::max(1, (data.train.size() + cfg.batch_pairs - 1) / cfg.batch_pairs);
    SgdOptimizer<float> optimizer(net.parameters(), cfg.momentum, cfg.weight_decay);

    PairSampler sampler(data.train, cfg.judge, derive_seed(cfg.seed, "pairs"));
    Rng batch_rng(derive_seed(cfg.seed, "batches"));
    const double margin = cfg.effective_margin();
    const double reg = cfg.regularizer_on ? cfg.reg_weight : 0.0;

    long iteration = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        ScheduleState sched;
        for (int it = 0; it < iters_per_epoch; ++it, ++iteration) {
            sched = schedule_at(cfg.schedule, epoch, iteration);
            double loss_value;
            Graph<float> g;
            NodeId loss_node;
            if (cfg.loss_kind == LossKind::Pairwise) {
                SampledPairs pairs = sampler.sample(cfg.batch_pairs);
                PairBatch<float> batch = gather_pairs(data.train, pairs);
                // One forward over [left; right] so BN sees the whole batch.
                const int b = batch.pairs();
                const int dim = batch.left.dim(1);
                Tensor<float> stacked({2 * b, dim});
                for (int i = 0; i < b; ++i) {
                    for (int d = 0; d < dim; ++d) {
                        stacked(i, d) = batch.left(i, d);
                        stacked(b + i, d) = batch.right(i, d);
                    }
                }
                ForwardNodes nodes = net.forward(g, g.leaf(std::move(stacked)), /*train=*/true, sched);
                loss_node = pairwise_loss_op(g, nodes.output, batch.similar, margin, reg);
            } else {
                const int b = cfg.batch_pairs;
                Tensor<float> rows({b, input_dim});
                std::vector<int> labels(static_cast<std::size_t>(b));
                for (int i = 0; i < b; ++i) {
                    const int idx = static_cast<int>(batch_rng.index(data.train.size()));
                    const Tensor<float>& f = data.train.examples[static_cast<std::size_t>(idx)].features;
                    for (int d = 0; d < input_dim; ++d) rows(i, d) = f[d];
                    labels[static_cast<std::size_t>(i)] =
                        static_cast<int>(data.train.examples[static_cast<std::size_t>(idx)].labels.at(0));
                }
                ForwardNodes nodes = net.forward(g, g.leaf(std::move(rows)), /*train=*/true, sched);
                loss_node = softmax_cross_entropy_op(g, nodes.output, labels);
            }
            loss_value = static_cast<double>(g.value(loss_node)[0]);
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("training diverged: non-finite loss at iteration " +
                                          std::to_string(iteration) + " (r=" + std::to_string(sched.r) +
                                          ", alpha=" + std::to_string(sched.alpha) + ")",
                                      iteration, sched.r, sched.alpha);
            }
            optimizer.zero_grad();
            g.backward(loss_node);
            optimizer.step(sched.lr);
            loss_sum += loss_value;
        }
        MetricsRow row;
        row.epoch = epoch;
        row.iteration = iteration;
        row.r = sched.r;
        row.alpha = sched.alpha;
        row.lr = sched.lr;
        row.loss = loss_sum / iters_per_epoch;
        row.has_map = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
        row.map = 0.0;
        if (row.has_map) {
            PackedCodeMatrix db = extract_codes(net, data.train, cfg.method);
            PackedCodeMatrix queries = extract_codes(net, data.test, cfg.method);
            row.map = mean_average_precision(db, queries, cfg.judge);
            result.final_map = row.map;
        }
        result.log.rows.push_back(row);
    }
    return result;
}

}  // namespace abc
