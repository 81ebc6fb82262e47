#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shedd/config.hpp"
#include "shedd/data.hpp"
#include "shedd/eval.hpp"

namespace shedd {

inline constexpr const char* kCodeVersion = "shedd 1.0.0";

/// The output directory already exists and is not empty (and no --force).
class OutputExistsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetPair {
    Dataset source;
    Dataset target;
};

/// Loads `<data_dir>/source.json` and `<data_dir>/target.json`, or
/// regenerates the benchmark in memory when `data_dir` is empty.
DatasetPair obtain_datasets(const ExperimentConfig& cfg);

/// Builds a directory next to `out` and renames it into place when `fill`
/// succeeds. Refuses an existing non-empty `out` unless `force`.
void write_atomically(const std::filesystem::path& out, bool force,
                      const std::function<void(const std::filesystem::path&)>& fill);

nlohmann::json provenance(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& command);

/// Writes source/target manifests and payloads plus `provenance.json`.
void generate_benchmark_dir(const ExperimentConfig& cfg, const std::filesystem::path& out, bool force);

struct RunOptions {
    std::size_t stop_after = 0;  // epochs to run in this invocation; 0 = to completion
    bool resume = false;         // continue from `<run_dir>/state`
};

struct RunOutcome {
    bool completed = false;
    MetricsReport metrics;
};

/// One seed: log.csv, checkpoints/{full,inference}, metrics.json,
/// config.json and provenance.json under `run_dir`; `state/` holds the
/// resumable training state until the run completes.
RunOutcome run_training(const ExperimentConfig& cfg, const DatasetPair& data, std::uint64_t seed,
                        const std::filesystem::path& run_dir, const RunOptions& options = {});

struct AggregateRow {
    std::string config;
    std::size_t n_t = 0;
    std::size_t runs = 0;
    double mean_f1 = 0;
    double std_f1 = 0;  // NaN with a single run
};

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);

/// Runs every seed into `<out>/seed_<s>` and writes `aggregate.csv`.
std::vector<MetricsReport> train_seeds(const ExperimentConfig& cfg, const DatasetPair& data,
                                       const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out,
                                       const RunOptions& options = {});

/// Ablation rows x seeds into `<out>/<row>/seed_<s>`; writes
/// `ablation.csv` and `ablation.md` (toggle checkmarks + mean +- std F1).
std::vector<AggregateRow> ablate(const ExperimentConfig& cfg, const DatasetPair& data,
                                 const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& rows,
                                 const std::filesystem::path& out);

/// Collects `metrics.json` files under the given directories and groups them
/// by (config label, n_t). Budgets follow `budget_order` where listed, then
/// ascending. Throws for a run directory without metrics.
std::vector<AggregateRow> collect_runs(const std::vector<std::filesystem::path>& dirs,
                                       const std::vector<std::size_t>& budget_order);

/// Markdown table: one row per config, one column per budget (mean +- std).
std::string report_markdown(const std::vector<AggregateRow>& rows);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace shedd
