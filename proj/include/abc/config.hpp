#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "abc/dataset.hpp"
#include "abc/errors.hpp"
#include "abc/network.hpp"
#include "abc/schedules.hpp"

namespace abc {

struct ExperimentConfig;
inline void validate_into(const ExperimentConfig& cfg, std::vector<std::string>& errors);

enum class Method { Abc, ScaledTanh, DshRegOnly };

inline Method method_from_string(const std::string& s) {
    if (s == "abc") return Method::Abc;
    if (s == "scaled-tanh") return Method::ScaledTanh;
    if (s == "dsh-reg-only") return Method::DshRegOnly;
    throw ConfigError("unknown method '" + s + "' (expected abc, scaled-tanh or dsh-reg-only)");
}

inline std::string to_string(Method m) {
    switch (m) {
        case Method::Abc: return "abc";
        case Method::ScaledTanh: return "scaled-tanh";
        case Method::DshRegOnly: return "dsh-reg-only";
    }
    throw ConfigError("unknown method");
}

enum class LossKind { Pairwise, Classification };

enum class DatasetKind { Synthetic, Cifar10, File };

/// Full declarative description of one train/extract/evaluate run. Every
/// field has the published default where one exists.
struct ExperimentConfig {
    Method method = Method::Abc;
    int bits = 12;
    std::string arch;  // defaulted from bits/dataset when empty
    std::uint64_t seed = 1;
    // Warm start: copy parameters (matched by name and shape) from this model
    // before training, the usual fine-tuning workflow.
    std::string init_model;

    // dataset
    DatasetKind dataset_kind = DatasetKind::Synthetic;
    SyntheticSpec synthetic;
    std::string cifar_train_path;
    std::string cifar_test_path;
    std::string dataset_path;        // BNF1 train file for DatasetKind::File
    std::string dataset_test_path;   // BNF1 test file
    bool mean_subtract = false;      // default on for cifar, off otherwise
    bool mean_subtract_set = false;

    // loss
    LossKind loss_kind = LossKind::Pairwise;
    double margin = 0.0;  // 0 = default 2 * bits
    double reg_weight = 0.01;
    bool regularizer_on = true;
    int classes = 0;  // classification head width; 0 = infer from dataset

    // optimizer
    double momentum = 0.9;
    double weight_decay = 0.004;

    // schedule
    SchedulePolicy schedule = make_policy(PolicyKind::AbcRetrievalCifar);

    // loop
    int epochs = 50;
    int batch_pairs = 200;       // pairs per iteration (pairwise) or rows (classification)
    int iterations_per_epoch = 0;  // 0 = one nominal pass: ceil(train size / batch)
    int eval_every = 4;          // epochs between retrieval evaluations
    JudgeMode judge = JudgeMode::SingleLabel;

    std::string out_dir = "out";

    /// Default architecture: the desk-scale MLP head for flat features, with
    /// the binarizing tail implied by the method.
    std::string effective_arch(int input_dim) const {
        if (!arch.empty()) return arch;
        std::ostringstream os;
        os << "input:" << input_dim << " linear:64 relu linear:" << bits;
        if (method == Method::Abc) os << " batchnorm abc";
        if (method == Method::ScaledTanh) os << " batchnorm tanh";
        return os.str();
    }

    double effective_margin() const { return margin > 0.0 ? margin : 2.0 * bits; }
};

// ---------------------------------------------------------------------------
// The config file is plain "key = value" lines with '#' comments and dotted
// keys, e.g.
//
//   method = abc
//   schedule.kind = abc-retrieval-cifar
//   schedule.r.factor = 0.95
// ---------------------------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& is) {
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(KeyValues kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) {
        touch(key);
        return kv_.count(key) > 0;
    }

    std::string str(const std::string& key, const std::string& fallback) {
        touch(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    double num(const std::string& key, double fallback) {
        touch(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            bad_.push_back(key + " = '" + it->second + "' (not a number)");
            return fallback;
        }
    }

    long integer(const std::string& key, long fallback) {
        touch(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            bad_.push_back(key + " = '" + it->second + "' (not an integer)");
            return fallback;
        }
    }

    bool flag(const std::string& key, bool fallback) {
        touch(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true" || it->second == "on" || it->second == "1") return true;
        if (it->second == "false" || it->second == "off" || it->second == "0") return false;
        bad_.push_back(key + " = '" + it->second + "' (not a boolean)");
        return fallback;
    }

    /// Keys present in the file but never requested.
    std::vector<std::string> unknown() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : kv_) {
            if (!seen_.count(k)) out.push_back(k);
        }
        return out;
    }

    std::vector<std::string>& bad() { return bad_; }

private:
    void touch(const std::string& key) { seen_.insert(key); }

    KeyValues kv_;
    std::set<std::string> seen_;
    std::vector<std::string> bad_;
};

inline void read_geometric(ConfigReader& r, const std::string& prefix, GeometricRule& rule) {
    rule.initial = r.num(prefix + ".initial", rule.initial);
    rule.factor = r.num(prefix + ".factor", rule.factor);
    rule.interval = static_cast<int>(r.integer(prefix + ".interval", rule.interval));
    rule.floor = r.num(prefix + ".floor", rule.floor);
    if (r.has(prefix + ".override_value") || r.has(prefix + ".override_start")) {
        rule.has_override = true;
        rule.override_value = r.num(prefix + ".override_value", rule.override_value);
        rule.override_start = static_cast<int>(r.integer(prefix + ".override_start", rule.override_start));
    }
    const std::string unit = r.str(prefix + ".unit", "");
    if (unit == "epoch") rule.unit = StepUnit::Epoch;
    else if (unit == "iteration") rule.unit = StepUnit::Iteration;
    else if (!unit.empty()) r.bad().push_back(prefix + ".unit = '" + unit + "'");
}

inline void read_power(ConfigReader& r, const std::string& prefix, PowerGrowthRule& rule) {
    rule.scale = r.num(prefix + ".scale", rule.scale);
    rule.gamma = r.num(prefix + ".gamma", rule.gamma);
    rule.power = r.num(prefix + ".power", rule.power);
    rule.window = static_cast<int>(r.integer(prefix + ".window", rule.window));
    rule.cap = r.num(prefix + ".cap", rule.cap);
    const std::string unit = r.str(prefix + ".unit", "");
    if (unit == "epoch") rule.unit = StepUnit::Epoch;
    else if (unit == "iteration") rule.unit = StepUnit::Iteration;
    else if (!unit.empty()) r.bad().push_back(prefix + ".unit = '" + unit + "'");
}

}  // namespace detail

/// Parses and validates a config. All offending fields are collected and
/// reported in one ConfigError.
inline ExperimentConfig parse_config(std::istream& is) {
    detail::ConfigReader r(parse_key_values(is));
    ExperimentConfig cfg;
    std::vector<std::string> errors;

    try {
        cfg.method = method_from_string(r.str("method", "abc"));
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    cfg.bits = static_cast<int>(r.integer("bits", cfg.bits));
    cfg.arch = r.str("arch", "");
    cfg.seed = static_cast<std::uint64_t>(r.integer("seed", 1));
    cfg.init_model = r.str("init_model", "");

    const std::string ds = r.str("dataset.kind", "synthetic");
    if (ds == "synthetic") cfg.dataset_kind = DatasetKind::Synthetic;
    else if (ds == "cifar10") cfg.dataset_kind = DatasetKind::Cifar10;
    else if (ds == "file") cfg.dataset_kind = DatasetKind::File;
    else errors.push_back("dataset.kind = '" + ds + "'");
    cfg.synthetic.classes = static_cast<int>(r.integer("dataset.classes", cfg.synthetic.classes));
    cfg.synthetic.per_class = static_cast<int>(r.integer("dataset.per_class", cfg.synthetic.per_class));
    cfg.synthetic.dim = static_cast<int>(r.integer("dataset.dim", cfg.synthetic.dim));
    cfg.synthetic.sigma = r.num("dataset.sigma", cfg.synthetic.sigma);
    cfg.synthetic.radius = r.num("dataset.radius", cfg.synthetic.radius);
    cfg.synthetic.seed = static_cast<std::uint64_t>(r.integer("dataset.seed", 7));
    cfg.synthetic.multi_label = r.flag("dataset.multi_label", false);
    cfg.cifar_train_path = r.str("dataset.cifar_train", "");
    cfg.cifar_test_path = r.str("dataset.cifar_test", "");
    cfg.dataset_path = r.str("dataset.train_file", "");
    cfg.dataset_test_path = r.str("dataset.test_file", "");
    cfg.mean_subtract_set = r.has("dataset.mean_subtract");
    cfg.mean_subtract = r.flag("dataset.mean_subtract", cfg.dataset_kind == DatasetKind::Cifar10);

    const std::string loss = r.str("loss.kind", "pairwise");
    if (loss == "pairwise") cfg.loss_kind = LossKind::Pairwise;
    else if (loss == "classification") cfg.loss_kind = LossKind::Classification;
    else errors.push_back("loss.kind = '" + loss + "'");
    cfg.margin = r.num("loss.m", 0.0);
    cfg.reg_weight = r.num("loss.reg_weight", cfg.reg_weight);
    cfg.regularizer_on = r.flag("loss.regularizer", true);
    cfg.classes = static_cast<int>(r.integer("loss.classes", 0));

    cfg.momentum = r.num("optimizer.momentum", cfg.momentum);
    cfg.weight_decay = r.num("optimizer.weight_decay", cfg.weight_decay);

    std::string kind = r.str("schedule.kind", "");
    if (kind.empty()) {
        kind = cfg.method == Method::ScaledTanh ? "tanh-retrieval" : "abc-retrieval-cifar";
    }
    try {
        cfg.schedule = make_policy(kind);
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    detail::read_geometric(r, "schedule.r", cfg.schedule.r);
    detail::read_power(r, "schedule.alpha", cfg.schedule.alpha);
    detail::read_geometric(r, "schedule.lr", cfg.schedule.lr);
    cfg.schedule.r_epoch_iterations = r.integer("schedule.r_epoch_iterations", cfg.schedule.r_epoch_iterations);

    cfg.epochs = static_cast<int>(r.integer("epochs", cfg.epochs));
    cfg.batch_pairs = static_cast<int>(r.integer("batch", cfg.batch_pairs));
    cfg.iterations_per_epoch = static_cast<int>(r.integer("iterations_per_epoch", 0));
    cfg.eval_every = static_cast<int>(r.integer("eval_every", cfg.eval_every));
    try {
        cfg.judge = judge_mode_from_string(r.str("judge", "single"));
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    cfg.out_dir = r.str("out.dir", cfg.out_dir);

    for (const std::string& key : r.unknown()) errors.push_back("unknown key '" + key + "'");
    for (const std::string& msg : r.bad()) errors.push_back(msg);
    validate_into(cfg, errors);
    if (!errors.empty()) {
        std::string what = "invalid config:";
        for (const std::string& e : errors) what += "\n  - " + e;
        throw ConfigError(what);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path);
    return parse_config(is);
}

/// Structural validation beyond per-field parsing. Appends findings.
inline void validate_into(const ExperimentConfig& cfg, std::vector<std::string>& errors) {
    if (cfg.bits < 1 || cfg.bits > 4096) errors.push_back("bits must be in [1, 4096]");
    if (cfg.epochs < 0) errors.push_back("epochs must be >= 0");
    if (cfg.batch_pairs < 2 || cfg.batch_pairs % 2 != 0) errors.push_back("batch must be even and >= 2");
    if (cfg.eval_every < 1) errors.push_back("eval_every must be >= 1");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) errors.push_back("optimizer.momentum must be in [0, 1)");
    if (cfg.weight_decay < 0.0) errors.push_back("optimizer.weight_decay must be >= 0");
    if (cfg.margin < 0.0) errors.push_back("loss.m must be > 0 (or unset for the 2k default)");
    if (cfg.reg_weight < 0.0) errors.push_back("loss.reg_weight must be >= 0");
    // The architecture must end in the method's binarizing tail, with BN
    // immediately before an abc layer.
    std::vector<LayerSpec> specs;
    try {
        const int dim = cfg.dataset_kind == DatasetKind::Cifar10 ? 0 : cfg.synthetic.dim;
        std::string arch = cfg.arch;
        if (arch.empty() && cfg.dataset_kind == DatasetKind::Cifar10) {
            errors.push_back("arch must be given explicitly for cifar10 runs");
            return;
        }
        specs = parse_architecture(cfg.effective_arch(dim));
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
        return;
    }
    int abc_at = -1, tanh_at = -1;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].kind == LayerKind::Abc) abc_at = static_cast<int>(i);
        if (specs[i].kind == LayerKind::ScaledTanh) tanh_at = static_cast<int>(i);
    }
    if (cfg.method == Method::Abc) {
        if (abc_at < 0) {
            errors.push_back("method abc requires an abc layer in the architecture");
        } else if (specs[static_cast<std::size_t>(abc_at) - 1].kind != LayerKind::BatchNorm) {
            errors.push_back("method abc requires a batchnorm layer immediately before the abc layer");
        }
    }
    if (cfg.method == Method::ScaledTanh && tanh_at < 0) {
        errors.push_back("method scaled-tanh requires a tanh layer in the architecture");
    }
    if (cfg.method == Method::DshRegOnly && (abc_at >= 0 || tanh_at >= 0)) {
        errors.push_back("method dsh-reg-only must not contain a binarizing activation layer");
    }
    // Build (without initialization) to run the full shape-propagation checks
    // and confirm the code width matches `bits`.
    if (cfg.dataset_kind != DatasetKind::Cifar10 || !cfg.arch.empty()) {
        try {
            Network<float> probe = Network<float>::probe(specs);
            if (probe.has_binarizer() && probe.code_bits() != cfg.bits) {
                errors.push_back("architecture emits " + std::to_string(probe.code_bits()) +
                                 "-bit codes but bits = " + std::to_string(cfg.bits));
            }
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes the fully-defaulted effective config; parsing the echo reproduces
/// the run.
inline void echo_config(const ExperimentConfig& cfg, int input_dim, std::ostream& os) {
    os << "# effective configuration (threads = 1)\n";
    os << "method = " << to_string(cfg.method) << "\n";
    os << "bits = " << cfg.bits << "\n";
    os << "arch = " << cfg.effective_arch(input_dim) << "\n";
    os << "seed = " << cfg.seed << "\n";
    if (!cfg.init_model.empty()) os << "init_model = " << cfg.init_model << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "batch = " << cfg.batch_pairs << "\n";
    os << "iterations_per_epoch = " << cfg.iterations_per_epoch << "\n";
    os << "eval_every = " << cfg.eval_every << "\n";
    os << "judge = " << (cfg.judge == JudgeMode::SingleLabel ? "single" : "multi") << "\n";
    os << "out.dir = " << cfg.out_dir << "\n";
    switch (cfg.dataset_kind) {
        case DatasetKind::Synthetic:
            os << "dataset.kind = synthetic\n";
            os << "dataset.classes = " << cfg.synthetic.classes << "\n";
            os << "dataset.per_class = " << cfg.synthetic.per_class << "\n";
            os << "dataset.dim = " << cfg.synthetic.dim << "\n";
            os << "dataset.sigma = " << format_number(cfg.synthetic.sigma) << "\n";
            os << "dataset.radius = " << format_number(cfg.synthetic.radius) << "\n";
            os << "dataset.seed = " << cfg.synthetic.seed << "\n";
            os << "dataset.multi_label = " << (cfg.synthetic.multi_label ? "true" : "false") << "\n";
            break;
        case DatasetKind::Cifar10:
            os << "dataset.kind = cifar10\n";
            os << "dataset.cifar_train = " << cfg.cifar_train_path << "\n";
            os << "dataset.cifar_test = " << cfg.cifar_test_path << "\n";
            break;
        case DatasetKind::File:
            os << "dataset.kind = file\n";
            os << "dataset.train_file = " << cfg.dataset_path << "\n";
            os << "dataset.test_file = " << cfg.dataset_test_path << "\n";
            break;
    }
    os << "dataset.mean_subtract = " << (cfg.mean_subtract ? "true" : "false") << "\n";
    os << "loss.kind = " << (cfg.loss_kind == LossKind::Pairwise ? "pairwise" : "classification") << "\n";
    os << "loss.m = " << format_number(cfg.effective_margin()) << "\n";
    os << "loss.reg_weight = " << format_number(cfg.reg_weight) << "\n";
    os << "loss.regularizer = " << (cfg.regularizer_on ? "on" : "off") << "\n";
    if (cfg.classes > 0) os << "loss.classes = " << cfg.classes << "\n";
    os << "optimizer.momentum = " << format_number(cfg.momentum) << "\n";
    os << "optimizer.weight_decay = " << format_number(cfg.weight_decay) << "\n";
    os << "schedule.kind = " << to_string(cfg.schedule.kind) << "\n";
    const auto unit_name = [](StepUnit u) { return u == StepUnit::Epoch ? "epoch" : "iteration"; };
    os << "schedule.r.initial = " << format_number(cfg.schedule.r.initial) << "\n";
    os << "schedule.r.factor = " << format_number(cfg.schedule.r.factor) << "\n";
    os << "schedule.r.interval = " << cfg.schedule.r.interval << "\n";
    os << "schedule.r.floor = " << format_number(cfg.schedule.r.floor) << "\n";
    os << "schedule.r.unit = " << unit_name(cfg.schedule.r.unit) << "\n";
    if (cfg.schedule.r.has_override) {
        os << "schedule.r.override_value = " << format_number(cfg.schedule.r.override_value) << "\n";
        os << "schedule.r.override_start = " << cfg.schedule.r.override_start << "\n";
    }
    os << "schedule.alpha.scale = " << format_number(cfg.schedule.alpha.scale) << "\n";
    os << "schedule.alpha.gamma = " << format_number(cfg.schedule.alpha.gamma) << "\n";
    os << "schedule.alpha.power = " << format_number(cfg.schedule.alpha.power) << "\n";
    os << "schedule.alpha.window = " << cfg.schedule.alpha.window << "\n";
    if (std::isfinite(cfg.schedule.alpha.cap)) {
        os << "schedule.alpha.cap = " << format_number(cfg.schedule.alpha.cap) << "\n";
    }
    os << "schedule.alpha.unit = " << unit_name(cfg.schedule.alpha.unit) << "\n";
    os << "schedule.lr.initial = " << format_number(cfg.schedule.lr.initial) << "\n";
    os << "schedule.lr.factor = " << format_number(cfg.schedule.lr.factor) << "\n";
    os << "schedule.lr.interval = " << cfg.schedule.lr.interval << "\n";
    os << "schedule.lr.floor = " << format_number(cfg.schedule.lr.floor) << "\n";
    os << "schedule.lr.unit = " << unit_name(cfg.schedule.lr.unit) << "\n";
    if (cfg.schedule.r_epoch_iterations > 0) {
        os << "schedule.r_epoch_iterations = " << cfg.schedule.r_epoch_iterations << "\n";
    }
}

}  // namespace abc
