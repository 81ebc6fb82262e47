#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "shedd/augment.hpp"
#include "shedd/data.hpp"
#include "shedd/losses.hpp"
#include "shedd/model.hpp"

namespace shedd {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-2;
    double tau = 0.95;
    double ema_momentum = 0.95;
    std::size_t label_budget = 10;                      // labelled target samples per class
    std::vector<std::size_t> label_budgets{5, 10, 20, 40};  // budget sweep for `report`
    LossToggles toggles;
};

/// Every tunable of an experiment. JSON (de)serialization is strict: all
/// fields are required and unknown fields are rejected.
struct ExperimentConfig {
    std::string label = "full";
    SyntheticBenchConfig benchmark;
    ArchitectureConfig model;
    AugmentConfig augment;
    TrainConfig train;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string data_dir;  // output of `generate`; empty: regenerate in memory

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON dump, hex.
std::string config_hash(const ExperimentConfig& cfg);

/// Ablation rows in table order: Abla1..Abla6, full.
const std::vector<std::string>& ablation_rows();
LossToggles ablation_toggles(const std::string& row);
/// Copy of `cfg` with the row's toggles and label. Throws ConfigError for an
/// unknown row.
ExperimentConfig apply_ablation(const ExperimentConfig& cfg, const std::string& row);

/// Sub-seeds of one run seed.
struct RunSeeds {
    std::uint64_t init;
    std::uint64_t data;
    std::uint64_t augment;
};

RunSeeds derive_run_seeds(std::uint64_t seed);

}  // namespace shedd
