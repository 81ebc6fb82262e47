#include "shedd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "shedd/errors.hpp"
#include "shedd/trainer.hpp"

namespace shedd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return json::parse(in);
}

json metrics_json(const MetricsReport& m, const ExperimentConfig& cfg, std::uint64_t seed) {
    return {{"config", cfg.label},
            {"n_t", cfg.train.label_budget},
            {"seed", seed},
            {"weighted_f1", m.weighted_f1},
            {"accuracy", m.accuracy},
            {"per_class_f1", m.per_class_f1},
            {"per_class_support", m.per_class_support}};
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string mean_std_text(const AggregateRow& r) {
    if (std::isnan(r.std_f1)) return fixed(100 * r.mean_f1, 2);
    return fixed(100 * r.mean_f1, 2) + " ± " + fixed(100 * r.std_f1, 2);
}

AggregateRow summarize(const std::string& config, std::size_t n_t, const std::vector<double>& f1) {
    AggregateRow row{config, n_t, f1.size(), 0, std::nan("")};
    if (f1.size() >= 2) {
        const auto agg = aggregate(f1);
        row.mean_f1 = agg.mean;
        row.std_f1 = agg.std;
    } else if (f1.size() == 1) {
        row.mean_f1 = f1.front();
    }
    return row;
}

}  // namespace

DatasetPair obtain_datasets(const ExperimentConfig& cfg) {
    if (cfg.data_dir.empty()) {
        auto [s, t] = generate_synthetic_benchmark(cfg.benchmark);
        return {std::move(s), std::move(t)};
    }
    const fs::path dir(cfg.data_dir);
    try {
        return {load_dataset(dir / "source.json"), load_dataset(dir / "target.json")};
    } catch (const ManifestError& e) {
        throw ManifestError("dataset directory " + dir.string() + ": " + e.what());
    } catch (const CorruptDatasetError& e) {
        throw CorruptDatasetError("dataset directory " + dir.string() + ": " + e.what());
    }
}

void write_atomically(const fs::path& out, bool force, const std::function<void(const fs::path&)>& fill) {
    const bool exists_nonempty = fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out));
    if (exists_nonempty && !force)
        throw OutputExistsError("output " + out.string() + " already exists and is not empty (use --force)");
    const auto parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
    fs::create_directories(parent);
    fs::path staging;
    for (unsigned attempt = 0;; ++attempt) {
        staging = parent / ("." + out.filename().string() + ".tmp" + std::to_string(attempt));
        if (fs::create_directory(staging)) break;
    }
    try {
        fill(staging);
    } catch (...) {
        fs::remove_all(staging);
        throw;
    }
    if (fs::exists(out)) fs::remove_all(out);
    fs::rename(staging, out);
}

json provenance(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& command) {
    const auto sub = derive_run_seeds(seed);
    return {{"code_version", kCodeVersion},
            {"command", command},
            {"config_hash", config_hash(cfg)},
            {"seed", seed},
            {"derived_seeds", {{"init", sub.init}, {"data", sub.data}, {"augment", sub.augment}}},
            {"config", config_to_json(cfg)}};
}

void generate_benchmark_dir(const ExperimentConfig& cfg, const fs::path& out, bool force) {
    auto [source, target] = generate_synthetic_benchmark(cfg.benchmark);
    write_atomically(out, force, [&](const fs::path& dir) {
        write_dataset(source, dir, "source");
        write_dataset(target, dir, "target");
        auto prov = provenance(cfg, cfg.benchmark.seed, "generate");
        prov["checksums"] = {{"source", source.manifest.checksum}, {"target", target.manifest.checksum}};
        write_json(dir / "provenance.json", prov);
    });
}

RunOutcome run_training(const ExperimentConfig& cfg, const DatasetPair& data, std::uint64_t seed,
                        const fs::path& run_dir, const RunOptions& options) {
    fs::create_directories(run_dir);
    Trainer trainer(cfg, data.source, data.target, seed);
    const auto state_dir = run_dir / "state";
    if (options.resume && fs::exists(state_dir / "state.json")) trainer.load_state(state_dir);
    write_json(run_dir / "config.json", config_to_json(cfg));
    write_json(run_dir / "provenance.json", provenance(cfg, seed, "train"));

    trainer.run(options.stop_after);
    write_log_csv(run_dir / "log.csv", trainer.log());

    RunOutcome outcome;
    if (trainer.epoch() < cfg.train.epochs) {
        if (fs::exists(state_dir)) fs::remove_all(state_dir);
        trainer.save_state(state_dir);
        return outcome;
    }
    outcome.completed = true;
    outcome.metrics = trainer.evaluate_ema();
    for (const char* variant : {"full", "inference"}) {
        const auto dir = run_dir / "checkpoints" / variant;
        if (fs::exists(dir)) fs::remove_all(dir);
        save_checkpoint(dir, trainer.checkpoint(variant));
    }
    write_json(run_dir / "metrics.json", metrics_json(outcome.metrics, cfg, seed));
    if (fs::exists(state_dir)) fs::remove_all(state_dir);
    return outcome;
}

void write_aggregate_csv(const fs::path& path, const std::vector<AggregateRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "config,n_t,mean_f1,std_f1\n";
    for (const auto& r : rows) {
        out << r.config << ',' << r.n_t << ',' << fixed(r.mean_f1, 6) << ',';
        if (!std::isnan(r.std_f1)) out << fixed(r.std_f1, 6);
        out << '\n';
    }
}

std::vector<MetricsReport> train_seeds(const ExperimentConfig& cfg, const DatasetPair& data,
                                       const std::vector<std::uint64_t>& seeds, const fs::path& out,
                                       const RunOptions& options) {
    std::vector<MetricsReport> reports;
    std::vector<double> f1;
    for (auto seed : seeds) {
        const auto outcome = run_training(cfg, data, seed, out / ("seed_" + std::to_string(seed)), options);
        if (!outcome.completed) continue;
        reports.push_back(outcome.metrics);
        f1.push_back(outcome.metrics.weighted_f1);
    }
    if (reports.size() == seeds.size())
        write_aggregate_csv(out / "aggregate.csv", {summarize(cfg.label, cfg.train.label_budget, f1)});
    return reports;
}

std::vector<AggregateRow> ablate(const ExperimentConfig& cfg, const DatasetPair& data,
                                 const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& rows,
                                 const fs::path& out) {
    std::vector<AggregateRow> table;
    std::ostringstream md;
    md << "| Config | cl_ST | orth_ST | dom_ST | orth_UÛ | dom_UÛ | pl_Û | F1 |\n";
    md << "|---|:-:|:-:|:-:|:-:|:-:|:-:|---|\n";
    for (const auto& row : rows) {
        const auto row_cfg = apply_ablation(cfg, row);
        std::vector<double> f1;
        for (const auto& r : train_seeds(row_cfg, data, seeds, out / row_cfg.label)) f1.push_back(r.weighted_f1);
        table.push_back(summarize(row_cfg.label, row_cfg.train.label_budget, f1));
        const auto& t = row_cfg.train.toggles;
        auto mark = [](bool on) { return on ? "✓" : " "; };
        md << "| " << row_cfg.label << " | " << mark(t.cl_st) << " | " << mark(t.orth_st) << " | " << mark(t.dom_st)
           << " | " << mark(t.orth_uu) << " | " << mark(t.dom_uu) << " | " << mark(t.pl_u) << " | "
           << mean_std_text(table.back()) << " |\n";
    }
    write_aggregate_csv(out / "ablation.csv", table);
    std::ofstream(out / "ablation.md", std::ios::trunc) << md.str();
    return table;
}

std::vector<AggregateRow> collect_runs(const std::vector<fs::path>& dirs, const std::vector<std::size_t>& budget_order) {
    std::vector<fs::path> metric_files;
    for (const auto& dir : dirs) {
        if (!fs::is_directory(dir)) throw std::runtime_error("report: " + dir.string() + " is not a directory");
        if (fs::exists(dir / "metrics.json")) {
            metric_files.push_back(dir / "metrics.json");
            continue;
        }
        if (fs::exists(dir / "log.csv") || fs::exists(dir / "state"))
            throw std::runtime_error("report: run directory " + dir.string() +
                                     " is incomplete (no metrics.json; resume the run first)");
        std::vector<fs::path> found;
        for (const auto& e : fs::recursive_directory_iterator(dir)) {
            if (e.path().filename() != "metrics.json") continue;
            found.push_back(e.path());
        }
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_directory() && fs::exists(e.path() / "log.csv") && !fs::exists(e.path() / "metrics.json"))
                throw std::runtime_error("report: run directory " + e.path().string() +
                                         " is incomplete (no metrics.json; resume the run first)");
        if (found.empty()) throw std::runtime_error("report: no completed runs under " + dir.string());
        std::sort(found.begin(), found.end());
        metric_files.insert(metric_files.end(), found.begin(), found.end());
    }

    std::map<std::pair<std::string, std::size_t>, std::vector<double>> groups;
    std::vector<std::string> config_order;
    for (const auto& path : metric_files) {
        const auto j = read_json(path);
        const auto config = j.at("config").get<std::string>();
        if (std::find(config_order.begin(), config_order.end(), config) == config_order.end())
            config_order.push_back(config);
        groups[{config, j.at("n_t").get<std::size_t>()}].push_back(j.at("weighted_f1").get<double>());
    }

    auto budget_rank = [&](std::size_t b) {
        const auto it = std::find(budget_order.begin(), budget_order.end(), b);
        return std::pair{it == budget_order.end() ? 1 : 0,
                         it == budget_order.end() ? b : static_cast<std::size_t>(it - budget_order.begin())};
    };
    std::vector<AggregateRow> rows;
    for (const auto& [key, f1] : groups) rows.push_back(summarize(key.first, key.second, f1));
    std::stable_sort(rows.begin(), rows.end(), [&](const AggregateRow& a, const AggregateRow& b) {
        const auto ca = std::find(config_order.begin(), config_order.end(), a.config) - config_order.begin();
        const auto cb = std::find(config_order.begin(), config_order.end(), b.config) - config_order.begin();
        if (ca != cb) return ca < cb;
        return budget_rank(a.n_t) < budget_rank(b.n_t);
    });
    return rows;
}

std::string report_markdown(const std::vector<AggregateRow>& rows) {
    std::vector<std::size_t> budgets;
    std::vector<std::string> configs;
    for (const auto& r : rows) {
        if (std::find(budgets.begin(), budgets.end(), r.n_t) == budgets.end()) budgets.push_back(r.n_t);
        if (std::find(configs.begin(), configs.end(), r.config) == configs.end()) configs.push_back(r.config);
    }
    std::ostringstream md;
    md << "| Config |";
    for (auto b : budgets) md << ' ' << b << " labels/class |";
    md << "\n|---|";
    for (std::size_t i = 0; i < budgets.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& c : configs) {
        md << "| " << c << " |";
        for (auto b : budgets) {
            const auto it = std::find_if(rows.begin(), rows.end(),
                                         [&](const AggregateRow& r) { return r.config == c && r.n_t == b; });
            md << ' ' << (it == rows.end() ? std::string("-") : mean_std_text(*it)) << " |";
        }
        md << '\n';
    }
    return md.str();
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("--seeds expects a comma-separated list of nonnegative integers, got '" + text + "'");
        seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw ConfigError("--seeds must name at least one seed");
    return seeds;
}

}  // namespace shedd
