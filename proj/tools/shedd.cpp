// Command-line entry point: generate, train, evaluate, ablate, report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shedd/checkpoint.hpp"
#include "shedd/errors.hpp"
#include "shedd/experiment.hpp"
#include "shedd/kernels.hpp"
#include "shedd/trainer.hpp"

namespace fs = std::filesystem;
using namespace shedd;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kRuntime = 4 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

int threads_from_env() {
    const char* env = std::getenv("SHEDD_THREADS");
    if (!env || !*env) return 1;
    const std::string text(env);
    if (text.find_first_not_of("0123456789") != std::string::npos || std::stoi(text) < 1)
        throw UsageError("SHEDD_THREADS must be a positive integer, got '" + text + "'");
    return std::stoi(text);
}

struct Common {
    std::string config;
    std::string seeds;
    std::string out;
    bool force = false;
    std::optional<std::size_t> budget;
    std::string ablation;
};

ExperimentConfig load_or_default(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    return load_config(path);
}

ExperimentConfig prepared_config(const Common& c) {
    auto cfg = load_or_default(c.config);
    if (c.budget) cfg.train.label_budget = *c.budget;
    if (!c.ablation.empty()) cfg = apply_ablation(cfg, c.ablation);
    cfg.validate();
    return cfg;
}

std::vector<std::uint64_t> seeds_of(const Common& c, const ExperimentConfig& cfg) {
    if (c.seeds.empty()) return cfg.seeds;
    try {
        return parse_seed_list(c.seeds);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
}

void require_out(const Common& c) {
    if (c.out.empty()) throw UsageError("--out DIR is required");
}

void print_aggregate(const std::vector<AggregateRow>& rows) {
    for (const auto& r : rows) {
        std::cout << r.config << "  n_t=" << r.n_t << "  runs=" << r.runs << "  F1=" << 100 * r.mean_f1;
        if (r.runs >= 2) std::cout << " ± " << 100 * r.std_f1;
        std::cout << '\n';
    }
}

int cmd_generate(const Common& c, bool print_defaults) {
    if (print_defaults) {
        std::cout << config_to_json(ExperimentConfig{}).dump(2) << '\n';
        return kOk;
    }
    require_out(c);
    const auto cfg = load_or_default(c.config);
    cfg.validate();
    generate_benchmark_dir(cfg, c.out, c.force);
    std::cout << "wrote " << (fs::path(c.out) / "source.json").string() << " and "
              << (fs::path(c.out) / "target.json").string() << '\n';
    return kOk;
}

int cmd_train(const Common& c, bool all_budgets, std::size_t stop_after, bool resume) {
    require_out(c);
    const auto cfg = prepared_config(c);
    const auto seeds = seeds_of(c, cfg);
    const auto data = obtain_datasets(cfg);
    const RunOptions options{stop_after, resume};

    std::vector<AggregateRow> rows;
    auto body = [&](const fs::path& dir) {
        if (!all_budgets) {
            train_seeds(cfg, data, seeds, dir, options);
            if (fs::exists(dir / "aggregate.csv")) rows = collect_runs({dir}, {});
            return;
        }
        for (auto budget : cfg.train.label_budgets) {
            auto budget_cfg = cfg;
            budget_cfg.train.label_budget = budget;
            train_seeds(budget_cfg, data, seeds, dir / ("n_t_" + std::to_string(budget)), options);
        }
        rows = collect_runs({dir}, cfg.train.label_budgets);
        write_aggregate_csv(dir / "aggregate.csv", rows);
    };
    if (resume) {
        if (!fs::is_directory(c.out)) throw UsageError("--resume needs an existing output directory");
        body(c.out);
    } else {
        write_atomically(c.out, c.force, body);
    }
    if (rows.empty())
        std::cout << "stopped early; continue with --resume\n";
    else
        print_aggregate(rows);
    return kOk;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint_dir, std::size_t embeddings_per_class) {
    if (checkpoint_dir.empty()) throw UsageError("--checkpoint DIR is required");
    const auto cfg = prepared_config(c);
    const auto cp = load_checkpoint(checkpoint_dir);
    const auto model = load_inference_model(cp);
    const auto data = obtain_datasets(cfg);
    const auto seed = cp.metadata.at("seed").get<std::uint64_t>();
    const auto budget = cp.metadata.at("label_budget").get<std::size_t>();
    const auto split = run_split(data.target, budget, seed);
    const auto report = evaluate(model.target_encoder, model.task_classifier, data.target, split.unlabelled);

    const nlohmann::json metrics{{"checkpoint", checkpoint_dir},
                                 {"variant", cp.variant},
                                 {"seed", seed},
                                 {"n_t", budget},
                                 {"weighted_f1", report.weighted_f1},
                                 {"accuracy", report.accuracy},
                                 {"per_class_f1", report.per_class_f1},
                                 {"per_class_support", report.per_class_support}};
    std::cout << metrics.dump(2) << '\n';
    if (!c.out.empty()) {
        write_atomically(c.out, c.force, [&](const fs::path& dir) {
            std::ofstream(dir / "metrics.json") << metrics.dump(2) << '\n';
            if (embeddings_per_class > 0)
                export_embeddings(model.target_encoder, data.target, split.unlabelled, embeddings_per_class, seed,
                                  dir / "embeddings.csv");
        });
    }
    return kOk;
}

int cmd_ablate(const Common& c) {
    require_out(c);
    auto cfg = load_or_default(c.config);
    if (c.budget) cfg.train.label_budget = *c.budget;
    cfg.validate();
    const auto seeds = seeds_of(c, cfg);
    const auto data = obtain_datasets(cfg);
    const std::vector<std::string> rows = c.ablation.empty() ? ablation_rows() : std::vector{c.ablation};
    for (const auto& r : rows) ablation_toggles(r);

    std::vector<AggregateRow> table;
    write_atomically(c.out, c.force, [&](const fs::path& dir) { table = ablate(cfg, data, seeds, rows, dir); });
    std::ifstream md(fs::path(c.out) / "ablation.md");
    std::cout << md.rdbuf();
    return kOk;
}

int cmd_report(const Common& c, const std::vector<std::string>& runs) {
    if (runs.empty()) throw UsageError("report needs at least one run directory");
    std::vector<std::size_t> order;
    if (!c.config.empty()) order = load_config(c.config).train.label_budgets;
    std::vector<fs::path> dirs(runs.begin(), runs.end());
    const auto rows = collect_runs(dirs, order);
    const auto md = report_markdown(rows);
    std::cout << md;
    if (!c.out.empty()) {
        write_atomically(c.out, c.force, [&](const fs::path& dir) {
            std::ofstream(dir / "report.md") << md;
            write_aggregate_csv(dir / "report.csv", rows);
        });
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised heterogeneous domain adaptation with disentangled encoders"};
    app.require_subcommand(1);
    Common c;

    auto add_common = [&](CLI::App* sub, bool with_seeds) {
        sub->add_option("--config", c.config, "Experiment config JSON (defaults when omitted)");
        sub->add_option("--out", c.out, "Output directory");
        sub->add_flag("--force", c.force, "Replace an existing output directory");
        if (with_seeds) sub->add_option("--seeds", c.seeds, "Comma-separated run seeds, e.g. 1,2,3");
    };

    bool print_defaults = false;
    auto* gen = app.add_subcommand("generate", "Write the synthetic two-modality benchmark");
    add_common(gen, false);
    gen->add_flag("--print-defaults", print_defaults, "Print the default config and exit");

    bool all_budgets = false, resume = false;
    std::size_t stop_after = 0;
    auto* train = app.add_subcommand("train", "Train one run per seed");
    add_common(train, true);
    train->add_option("--budget", c.budget, "Labelled target samples per class");
    train->add_option("--ablation", c.ablation, "Loss configuration: Abla1..Abla6 or full");
    train->add_flag("--all-budgets", all_budgets, "Sweep train.label_budgets");
    train->add_option("--stop-after", stop_after, "Stop after this many epochs (resumable)");
    train->add_flag("--resume", resume, "Continue interrupted runs in --out");

    std::string checkpoint_dir;
    std::size_t embeddings = 0;
    auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the unlabelled/test split");
    add_common(eval, false);
    eval->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory (full or inference)");
    eval->add_option("--embeddings", embeddings, "Export this many z_inv rows per class");

    auto* abl = app.add_subcommand("ablate", "Run the ablation rows for every seed");
    add_common(abl, true);
    abl->add_option("--budget", c.budget, "Labelled target samples per class");
    abl->add_option("--ablation", c.ablation, "Run a single row instead of all seven");

    std::vector<std::string> runs;
    auto* rep = app.add_subcommand("report", "Summarize completed runs (mean ± std per budget)");
    add_common(rep, false);
    rep->add_option("runs", runs, "Run directories or parents of run directories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        kernels::set_num_threads(threads_from_env());
        if (gen->parsed()) return cmd_generate(c, print_defaults);
        if (train->parsed()) return cmd_train(c, all_budgets, stop_after, resume);
        if (eval->parsed()) return cmd_evaluate(c, checkpoint_dir, embeddings);
        if (abl->parsed()) return cmd_ablate(c);
        return cmd_report(c, runs);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const OutputExistsError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ManifestError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const CorruptDatasetError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const InsufficientDataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
