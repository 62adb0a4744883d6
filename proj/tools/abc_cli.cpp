// Command-line driver: train / extract / eval / curves.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "abc/abc.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct TrainArgs {
    std::string config_path;
    std::string out_dir;
    std::string method;
    int bits = 0;
    long seed = -1;
    std::string sweep_seeds;
    int jobs = 1;
};

abc::ExperimentConfig configure(const TrainArgs& args) {
    abc::ExperimentConfig cfg = abc::load_config(args.config_path);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.method.empty()) cfg.method = abc::method_from_string(args.method);
    if (args.bits > 0) cfg.bits = args.bits;
    std::vector<std::string> errors;
    abc::validate_into(cfg, errors);
    if (!errors.empty()) {
        std::string what = "invalid config after overrides:";
        for (const std::string& e : errors) what += "\n  - " + e;
        throw abc::ConfigError(what);
    }
    return cfg;
}

void run_one_training(const abc::ExperimentConfig& cfg) {
    abc::SplitDataset data = abc::load_experiment_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    const int input_dim = static_cast<int>(data.train.examples[0].features.size());
    {
        std::ofstream os(fs::path(cfg.out_dir) / "config.txt");
        if (!os) throw abc::IoError("cannot write config echo in " + cfg.out_dir);
        abc::echo_config(cfg, input_dim, os);
    }
    abc::TrainResult result = abc::train(cfg, data);
    result.log.save_csv((fs::path(cfg.out_dir) / "metrics.csv").string());
    result.net.save((fs::path(cfg.out_dir) / "model.bnm").string());
    std::cout << "final map = " << abc::MetricsLog::csv_number(result.final_map) << " ("
              << abc::to_string(cfg.method) << ", " << cfg.bits << " bits, seed " << cfg.seed << ")\n";
}

int cmd_train(const TrainArgs& args) {
    abc::ExperimentConfig base = configure(args);
    if (args.sweep_seeds.empty()) {
        run_one_training(base);
        return 0;
    }
    std::vector<std::uint64_t> seeds;
    std::istringstream is(args.sweep_seeds);
    std::string tok;
    while (std::getline(is, tok, ',')) seeds.push_back(std::stoull(tok));
    if (seeds.empty()) throw abc::ConfigError("--sweep-seeds: no seeds given");
    const int jobs = std::max(1, args.jobs);
    std::mutex failures_mutex;
    std::vector<std::string> failures;
    for (std::size_t begin = 0; begin < seeds.size(); begin += static_cast<std::size_t>(jobs)) {
        std::vector<std::thread> pool;
        const std::size_t end = std::min(seeds.size(), begin + static_cast<std::size_t>(jobs));
        for (std::size_t i = begin; i < end; ++i) {
            abc::ExperimentConfig cfg = base;
            cfg.seed = seeds[i];
            cfg.out_dir = (fs::path(base.out_dir) / ("seed_" + std::to_string(seeds[i]))).string();
            pool.emplace_back([cfg, &failures, &failures_mutex]() {
                try {
                    run_one_training(cfg);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(failures_mutex);
                    failures.push_back("seed " + std::to_string(cfg.seed) + ": " + e.what());
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }
    for (const std::string& f : failures) std::cerr << "error: " << f << "\n";
    return failures.empty() ? 0 : 1;
}

bool file_has_magic(const std::string& path, const char* magic) {
    std::ifstream is(path, std::ios::binary);
    char buf[4] = {};
    is.read(buf, 4);
    return is && std::memcmp(buf, magic, 4) == 0;
}

int cmd_extract(const std::string& model_path, const std::string& data_path, const std::string& split,
                const std::string& out_path) {
    abc::Network<float> net = abc::Network<float>::load(model_path);
    abc::Method method = abc::Method::DshRegOnly;
    for (const abc::LayerSpec& s : net.specs()) {
        if (s.kind == abc::LayerKind::Abc) method = abc::Method::Abc;
        if (s.kind == abc::LayerKind::ScaledTanh) method = abc::Method::ScaledTanh;
    }
    abc::Dataset data;
    if (file_has_magic(data_path, "BNF1")) {
        data = abc::load_dataset(data_path);
    } else {
        abc::ExperimentConfig cfg = abc::load_config(data_path);
        abc::SplitDataset dataset = abc::load_experiment_dataset(cfg);
        data = split == "test" ? std::move(dataset.test) : std::move(dataset.train);
    }
    const int model_dim = [&net]() {
        int d = 1;
        for (int v : net.input_shape()) d *= v;
        return d;
    }();
    if (static_cast<int>(data.examples.at(0).features.size()) != model_dim) {
        throw abc::DimensionError("extract: model expects " + std::to_string(model_dim) +
                                  " input features, dataset has " +
                                  std::to_string(data.examples[0].features.size()));
    }
    abc::PackedCodeMatrix codes = abc::extract_codes(net, data, method);
    codes.save(out_path);
    std::cout << "wrote " << codes.count() << " codes x " << codes.bits() << " bits to " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& db_path, const std::string& query_path, const std::string& judge,
             const std::string& out_path, int topn, bool include_self, const std::string& method_label) {
    abc::PackedCodeMatrix db = abc::PackedCodeMatrix::load(db_path);
    abc::PackedCodeMatrix queries = abc::PackedCodeMatrix::load(query_path);
    abc::EvalOptions opts;
    opts.topn = topn;
    opts.exclude_self = !include_self;
    abc::EvalReport report = abc::evaluate_retrieval(db, queries, abc::judge_mode_from_string(judge), opts);
    std::cout << "map = " << abc::MetricsLog::csv_number(report.map)
              << "  precision@500 = " << abc::MetricsLog::csv_number(report.precision_at_cutoff) << "  ("
              << report.queries << " queries, " << db.count() << " database codes)\n";
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw abc::IoError("eval: cannot open " + out_path + " for writing");
        os << "bits,method,map,precision_at_500\n";
        os << db.bits() << ',' << method_label << ',' << abc::MetricsLog::csv_number(report.map) << ','
           << abc::MetricsLog::csv_number(report.precision_at_cutoff) << "\n";
    }
    return 0;
}

struct CurveFile {
    std::string name;
    std::map<long, std::string> map_by_epoch;  // verbatim map fields
};

CurveFile read_metrics_csv(const std::string& path, const std::string& name) {
    std::ifstream is(path);
    if (!is) throw abc::IoError("curves: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != abc::MetricsLog::kHeader) {
        throw abc::FormatError("curves: " + path + " line 1: expected header '" +
                               abc::MetricsLog::kHeader + "'");
    }
    CurveFile out;
    out.name = name;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.push_back("");
        if (fields.size() != 7) {
            throw abc::FormatError("curves: " + path + " line " + std::to_string(lineno) + ": expected 7 fields, got " +
                                   std::to_string(fields.size()));
        }
        long epoch;
        try {
            epoch = std::stol(fields[0]);
        } catch (const std::exception&) {
            throw abc::FormatError("curves: " + path + " line " + std::to_string(lineno) + ": bad epoch '" +
                                   fields[0] + "'");
        }
        if (!fields[6].empty()) out.map_by_epoch[epoch] = fields[6];
    }
    return out;
}

int cmd_curves(const std::vector<std::string>& paths, const std::string& names_csv,
               const std::string& out_path) {
    std::vector<std::string> names;
    if (!names_csv.empty()) {
        std::istringstream is(names_csv);
        std::string tok;
        while (std::getline(is, tok, ',')) names.push_back(tok);
        if (names.size() != paths.size()) {
            throw abc::ConfigError("curves: --names must list one name per metrics file");
        }
    } else {
        for (const std::string& p : paths) names.push_back(fs::path(p).stem().string());
    }
    std::vector<CurveFile> curves;
    std::set<long> epochs;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        curves.push_back(read_metrics_csv(paths[i], names[i]));
        for (const auto& [e, v] : curves.back().map_by_epoch) epochs.insert(e);
    }
    std::ostringstream os;
    os << "epoch";
    for (const CurveFile& c : curves) os << ',' << c.name;
    os << "\n";
    for (long e : epochs) {
        os << e;
        for (const CurveFile& c : curves) {
            os << ',';
            if (auto it = c.map_by_epoch.find(e); it != c.map_by_epoch.end()) os << it->second;
        }
        os << "\n";
    }
    if (out_path.empty()) {
        std::cout << os.str();
    } else {
        std::ofstream f(out_path);
        if (!f) throw abc::IoError("curves: cannot open " + out_path + " for writing");
        f << os.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"binary-code training, extraction and Hamming retrieval"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("config", train_args.config_path, "experiment config file")->required();
    train->add_option("--seed", train_args.seed, "override the config seed");
    train->add_option("--out", train_args.out_dir, "override the output directory");
    train->add_option("--method", train_args.method, "override the method (abc | scaled-tanh | dsh-reg-only)");
    train->add_option("--bits", train_args.bits, "override the code length");
    train->add_option("--sweep-seeds", train_args.sweep_seeds, "comma-separated seeds, one run each");
    train->add_option("--jobs", train_args.jobs, "parallel runs for --sweep-seeds");

    std::string model_path, data_path, split = "train", out_path;
    CLI::App* extract = app.add_subcommand("extract", "extract packed binary codes from a trained model");
    extract->add_option("model", model_path, "model file (BNM1)")->required();
    extract->add_option("--data", data_path, "dataset: a BNF1 file or an experiment config")->required();
    extract->add_option("--split", split, "train | test (config datasets only)")
        ->check(CLI::IsMember({"train", "test"}));
    extract->add_option("--out", out_path, "output codes file (BNC1)")->required();

    std::string db_path, query_path, judge = "single", report_path, method_label = "-";
    int topn = 0;
    bool include_self = false;
    CLI::App* eval = app.add_subcommand("eval", "rank query codes against database codes and report mAP");
    eval->add_option("db", db_path, "database codes (BNC1)")->required();
    eval->add_option("queries", query_path, "query codes (BNC1)")->required();
    eval->add_option("--judge", judge, "single | multi label relevance");
    eval->add_option("--out", report_path, "also write a CSV report");
    eval->add_option("--topn", topn, "score only the first N ranks (0 = full ranking)");
    eval->add_option("--method", method_label, "method label for the report row");
    eval->add_flag("--include-self", include_self,
                   "keep the query itself in its ranking when db = query set");

    std::vector<std::string> metrics_paths;
    std::string names_csv, curves_out;
    CLI::App* curves = app.add_subcommand("curves", "merge metrics files into one epoch-indexed table");
    curves->add_option("metrics", metrics_paths, "metrics.csv files")->required()->expected(-1);
    curves->add_option("--names", names_csv, "comma-separated column names");
    curves->add_option("--out", curves_out, "output file (default: stdout)");

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(train_args);
        if (extract->parsed()) return cmd_extract(model_path, data_path, split, out_path);
        if (eval->parsed()) return cmd_eval(db_path, query_path, judge, report_path, topn, include_self, method_label);
        if (curves->parsed()) return cmd_curves(metrics_paths, names_csv, curves_out);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const abc::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const abc::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const abc::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const abc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
