// forestgen command-line interface: train / generate / evaluate / bench /
// estimate-mem. stdout carries machine-readable JSON or CSV only; diagnostics
// go to stderr. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "forestgen/metrics.hpp"
#include "forestgen/resource.hpp"
#include "forestgen/sampler.hpp"
#include "forestgen/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace forestgen;

namespace {

// Flags beat config-file values (CLI11 default); the environment variable is
// the lowest-priority seed source.
void apply_seed_env(const CLI::Option* seed_opt, std::uint64_t& seed) {
    if (seed_opt->count() > 0) return;
    if (const char* env = std::getenv("FORESTGEN_SEED")) {
        try {
            seed = std::stoull(env);
        } catch (const std::exception&) {
            throw errors::bad_param(std::string("FORESTGEN_SEED is not an integer: ") + env);
        }
    }
}

struct TrainArgs {
    std::string data;
    std::string label;
    bool no_header = false;
    std::string out;
    std::string method = "flow";
    std::string trees = "so";
    std::string scaler = "per-class";
    std::string labels = "empirical";
    double eps = -1.0;  // auto: 0.001 for diffusion, 0 for flow
    HyperParams hp;
};

HyperParams resolve_hyperparams(TrainArgs& args) {
    HyperParams hp = args.hp;
    hp.method = method_from_name(args.method);
    hp.tree_mode = tree_mode_from_name(args.trees);
    hp.scaler_mode = scaler_mode_from_name(args.scaler);
    hp.label_mode = label_mode_from_name(args.labels);
    hp.min_time = args.eps >= 0.0 ? args.eps
                                  : (hp.method == Method::Diffusion ? 0.001 : 0.0);
    return hp;
}

void add_gbdt_options(CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("--n-t", args.hp.n_t, "Number of timesteps")->capture_default_str();
    cmd->add_option("--k", args.hp.duplication, "Duplication factor K")->capture_default_str();
    cmd->add_option("--eps", args.eps,
                    "Minimum time (default 0.001 for diffusion, 0 for flow)");
    cmd->add_option("--n-tree", args.hp.gbdt.n_tree, "Trees per sequence")
        ->capture_default_str();
    cmd->add_option("--depth", args.hp.gbdt.max_depth, "Maximum tree depth")
        ->capture_default_str();
    cmd->add_option("--eta", args.hp.gbdt.learning_rate, "Learning rate")
        ->capture_default_str();
    cmd->add_option("--lambda", args.hp.gbdt.l2_reg, "L2 leaf regularization")
        ->capture_default_str();
    cmd->add_option("--gamma", args.hp.gbdt.min_split_gain, "Minimum split gain")
        ->capture_default_str();
    cmd->add_option("--max-bins", args.hp.gbdt.max_bins, "Histogram bins per feature")
        ->capture_default_str();
    cmd->add_option("--n-es", args.hp.gbdt.early_stop_rounds,
                    "Early-stopping rounds (0 disables)")
        ->capture_default_str();
    cmd->add_option("--method", args.method, "flow or diffusion")->capture_default_str();
    cmd->add_option("--trees", args.trees, "Tree mode: so or mo")->capture_default_str();
    cmd->add_option("--jobs", args.hp.n_jobs, "Worker count (0 = all CPUs)")
        ->capture_default_str();
}

int cmd_train(TrainArgs& args, const CLI::Option* seed_opt) {
    apply_seed_env(seed_opt, args.hp.seed);
    const HyperParams hp = resolve_hyperparams(args);

    const auto label =
        args.label.empty() ? std::nullopt : std::optional<std::string>(args.label);
    const Dataset ds = load_csv(args.data, label, !args.no_header);
    std::cerr << "loaded " << args.data << ": n=" << ds.n << " p=" << ds.p
              << " n_y=" << ds.n_y << "\n";

    const ResourceReport report = monitor_run([&] { train_all(ds, hp, args.out); });
    std::cout << report.to_json_text() << std::endl;
    return 0;
}

struct GenerateArgs {
    std::string store;
    std::string out;
    std::string labels;  // empty = manifest default
    std::size_t batch_size = 0;
    GenConfig cfg;
};

int cmd_generate(GenerateArgs& args, const CLI::Option* seed_opt) {
    apply_seed_env(seed_opt, args.cfg.seed);
    const ModelStore store(args.store);
    if (args.labels.empty()) {
        args.cfg.label_mode = store.read_manifest().hp.label_mode;
    } else {
        args.cfg.label_mode = label_mode_from_name(args.labels);
    }

    GenStats stats;
    const auto start = std::chrono::steady_clock::now();
    if (args.batch_size > 0) {
        // Stream class-aligned blocks to the CSV to bound memory.
        std::ofstream out(args.out, std::ios::trunc);
        if (!out) throw errors::io_error("cannot open " + args.out);
        const std::string tmp = args.out + ".part";
        bool first = true;
        generate_batched(store, args.cfg, args.batch_size, [&](const Dataset& block) {
            write_csv(tmp, block);
            std::ifstream in(tmp);
            std::string line;
            bool header_line = true;
            while (std::getline(in, line)) {
                if (header_line) {
                    header_line = false;
                    if (!first) continue;
                }
                out << line << '\n';
            }
            first = false;
        });
        fs::remove(tmp);
    } else {
        const Dataset out = generate(store, args.cfg, &stats);
        write_csv(args.out, out);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    json j;
    j["n"] = args.cfg.n_samples;
    j["seconds"] = seconds;
    j["per_datapoint_ms"] = 1000.0 * seconds / static_cast<double>(args.cfg.n_samples);
    j["predict_calls_per_class"] = stats.predict_calls_per_class;
    j["booster_loads"] = stats.booster_loads;
    j["out"] = args.out;
    std::cout << j.dump(2) << std::endl;
    return 0;
}

struct EvaluateArgs {
    std::string gen, train, test;
    std::string label;
    bool no_header = false;
    std::size_t bins = 50;
};

int cmd_evaluate(const EvaluateArgs& args) {
    const auto label =
        args.label.empty() ? std::nullopt : std::optional<std::string>(args.label);
    const Dataset gen = load_csv(args.gen, label, !args.no_header);
    const Dataset train = load_csv(args.train, label, !args.no_header);
    const Dataset test = load_csv(args.test, label, !args.no_header);

    const auto report = evaluate_metrics(gen.features.view(), train.features.view(),
                                         test.features.view(), args.bins);
    std::cout << report.to_json_text() << std::endl;
    return 0;
}

struct BenchArgs {
    std::string out;
    std::string work_dir;
    std::size_t max_n = 300000;
    bool naive = false;
    std::uint64_t mem_limit = 8ull << 30;
    TrainArgs train;  // hyperparameter knobs shared with cmd_train
};

int cmd_bench(BenchArgs& args, const CLI::Option* seed_opt) {
    apply_seed_env(seed_opt, args.train.hp.seed);
    const HyperParams base_hp = resolve_hyperparams(args.train);

    const std::size_t base_n = 1000, base_p = 10, base_ny = 10;
    const std::size_t n_sweep[] = {100, 300, 1000, 3000, 10000, 30000, 100000, 300000};
    const std::size_t p_sweep[] = {3, 10, 30, 100, 300};
    const std::size_t ny_sweep[] = {1, 3, 10, 30, 100};

    struct Row {
        std::string scenario;
        std::size_t n, p, n_y;
        double seconds;
        std::int64_t peak_bytes;
    };
    std::vector<Row> rows;

    const std::string work =
        args.work_dir.empty() ? fs::temp_directory_path().string() : args.work_dir;

    auto run_one = [&](std::size_t n, std::size_t p, std::size_t n_y, bool naive) {
        HyperParams hp = base_hp;
        hp.naive_mode = naive;
        if (naive) {
            MemParams pm;
            pm.n = n;
            pm.p = p;
            pm.n_y = n_y;
            pm.n_t = hp.n_t;
            pm.k = hp.duplication;
            pm.width = 4;
            const auto need = estimate(MemScenario::NaiveXt, pm);
            if (need.bytes > args.mem_limit) {
                std::cerr << "skip naive n=" << n << " p=" << p << " n_y=" << n_y
                          << ": needs " << need.iec << " > --mem-limit\n";
                return;
            }
        }
        const Dataset ds = synth_dataset(n, p, n_y, hp.seed);
        const std::string store =
            (fs::path(work) / ("fg_bench_" + std::to_string(::getpid()) + "_" +
                               std::to_string(rows.size())))
                .string();
        std::cerr << (naive ? "naive" : "optimized") << " n=" << n << " p=" << p
                  << " n_y=" << n_y << " ..." << std::flush;
        const ResourceReport report = monitor_run([&] { train_all(ds, hp, store); });
        std::cerr << " " << report.wall_seconds << "s, peak " << report.peak_bytes()
                  << " B\n";
        rows.push_back({naive ? "naive" : "optimized", n, p, n_y, report.wall_seconds,
                        report.peak_bytes()});
        fs::remove_all(store);
    };

    auto sweep = [&](bool naive) {
        for (std::size_t n : n_sweep) {
            if (n > args.max_n) break;
            run_one(n, base_p, base_ny, naive);
        }
        for (std::size_t p : p_sweep) {
            if (base_n > args.max_n) break;
            run_one(base_n, p, base_ny, naive);
        }
        for (std::size_t n_y : ny_sweep) {
            if (base_n > args.max_n) break;
            run_one(base_n, base_p, n_y, naive);
        }
    };
    sweep(false);
    if (args.naive) sweep(true);

    std::ostringstream csv;
    csv << "scenario,n,p,n_y,seconds,peak_bytes\n";
    for (const auto& row : rows) {
        csv << row.scenario << ',' << row.n << ',' << row.p << ',' << row.n_y << ','
            << row.seconds << ',' << row.peak_bytes << '\n';
    }
    if (args.out.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream out(args.out, std::ios::trunc);
        if (!out) throw errors::io_error("cannot open " + args.out);
        out << csv.str();
        std::cerr << "wrote " << args.out << "\n";
    }
    return 0;
}

struct EstimateArgs {
    MemParams pm;
};

int cmd_estimate_mem(const EstimateArgs& args) {
    json out = json::array();
    for (const auto& e : estimate_all(args.pm)) {
        out.push_back({{"scenario", e.scenario}, {"bytes", e.bytes}, {"iec", e.iec}});
    }
    std::cout << out.dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular generative modeling with gradient-boosted tree vector fields"};
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model store from a CSV dataset");
    train_cmd->set_config("--config", "", "Config file with key=value lines");
    train_cmd->add_option("--data", train_args.data, "Input CSV")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--label", train_args.label, "Label column name");
    train_cmd->add_flag("--no-header", train_args.no_header, "CSV has no header row");
    train_cmd->add_option("--out", train_args.out, "Model store directory")->required();
    add_gbdt_options(train_cmd, train_args);
    train_cmd->add_option("--scaler", train_args.scaler, "per-class or global")
        ->capture_default_str();
    train_cmd->add_option("--labels", train_args.labels, "multinomial or empirical")
        ->capture_default_str();
    auto* train_seed = train_cmd->add_option("--seed", train_args.hp.seed, "Random seed");
    train_cmd->add_flag("--naive", train_args.hp.naive_mode,
                        "Reference pipeline (materializes all timesteps)");
    train_cmd->add_flag("--mmap-buffers", train_args.hp.mmap_buffers,
                        "Back shared buffers with memory-mapped files");

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand("generate", "Sample new rows from a trained store");
    gen_cmd->set_config("--config", "", "Config file with key=value lines");
    gen_cmd->add_option("--store", gen_args.store, "Model store directory")->required();
    gen_cmd->add_option("--n", gen_args.cfg.n_samples, "Rows to generate")->required();
    gen_cmd->add_option("--out", gen_args.out, "Output CSV path")->required();
    gen_cmd->add_option("--n-t-gen", gen_args.cfg.n_t_gen,
                        "Generation timesteps (must match the trained grid)");
    gen_cmd->add_option("--labels", gen_args.labels, "multinomial or empirical");
    auto* gen_seed = gen_cmd->add_option("--seed", gen_args.cfg.seed, "Random seed");
    gen_cmd->add_option("--jobs", gen_args.cfg.n_jobs, "Worker count (0 = all CPUs)");
    gen_cmd->add_option("--batch-size", gen_args.batch_size,
                        "Emit class-aligned blocks of at most this many rows");
    gen_cmd->add_flag("--strict-time", gen_args.cfg.strict_time,
                      "Integrate exactly unit time (n_t - 1 Euler steps)");

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "Distribution metrics for generated data");
    eval_cmd->add_option("--gen", eval_args.gen, "Generated CSV")->required();
    eval_cmd->add_option("--train", eval_args.train, "Training CSV")->required();
    eval_cmd->add_option("--test", eval_args.test, "Test CSV")->required();
    eval_cmd->add_option("--label", eval_args.label, "Label column to drop from features");
    eval_cmd->add_flag("--no-header", eval_args.no_header, "CSVs have no header row");
    eval_cmd->add_option("--bins", eval_args.bins, "Histogram bins for chi2")
        ->capture_default_str();

    BenchArgs bench_args;
    bench_args.train.hp.gbdt.n_tree = 100;
    auto* bench_cmd =
        app.add_subcommand("bench", "Resource-scaling sweep over synthetic datasets");
    add_gbdt_options(bench_cmd, bench_args.train);
    bench_cmd->add_option("--out", bench_args.out, "CSV output path (default stdout)");
    bench_cmd->add_option("--max-n", bench_args.max_n, "Truncate the n sweep")
        ->capture_default_str();
    bench_cmd->add_flag("--naive", bench_args.naive, "Also run the naive reference");
    bench_cmd->add_option("--mem-limit", bench_args.mem_limit,
                          "Naive-mode guard on the full-tensor bytes")
        ->capture_default_str();
    bench_cmd->add_option("--work-dir", bench_args.work_dir, "Scratch directory for stores");
    auto* bench_seed = bench_cmd->add_option("--seed", bench_args.train.hp.seed, "Random seed");

    EstimateArgs est_args;
    auto* est_cmd = app.add_subcommand("estimate-mem", "Closed-form memory estimates");
    est_cmd->add_option("--n", est_args.pm.n, "Rows")->required();
    est_cmd->add_option("--p", est_args.pm.p, "Features")->required();
    est_cmd->add_option("--n-y", est_args.pm.n_y, "Classes")->capture_default_str();
    est_cmd->add_option("--n-t", est_args.pm.n_t, "Timesteps")->capture_default_str();
    est_cmd->add_option("--k", est_args.pm.k, "Duplication factor")->capture_default_str();
    est_cmd->add_option("--n-jobs", est_args.pm.n_jobs, "Parallel jobs")
        ->capture_default_str();
    est_cmd->add_option("--n-tree", est_args.pm.n_tree, "Trees per ensemble")
        ->capture_default_str();
    est_cmd->add_option("--depth", est_args.pm.depth, "Tree depth")->capture_default_str();
    est_cmd->add_option("--width", est_args.pm.width, "Bytes per element (4 or 8)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_args, train_seed);
        if (gen_cmd->parsed()) return cmd_generate(gen_args, gen_seed);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_args);
        if (bench_cmd->parsed()) return cmd_bench(bench_args, bench_seed);
        if (est_cmd->parsed()) return cmd_estimate_mem(est_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
