#pragma once

#include "shedd/config.hpp"
#include "shedd/experiment.hpp"

namespace shedd::testing {

/// A few-second experiment: 3 classes, 8x8 source / 6x6 target images.
inline ExperimentConfig tiny_experiment() {
    ExperimentConfig cfg;
    cfg.benchmark.num_classes = 3;
    cfg.benchmark.latent_dim = 8;
    cfg.benchmark.source.channels = 3;
    cfg.benchmark.source.size = 8;
    cfg.benchmark.source.samples_per_class = 16;
    cfg.benchmark.target.channels = 2;
    cfg.benchmark.target.size = 6;
    cfg.benchmark.target.samples_per_class = 12;
    cfg.model.block_channels = {4};
    cfg.model.embedding_dim = 8;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 8;
    cfg.train.label_budget = 2;
    cfg.train.label_budgets = {1, 2};
    cfg.seeds = {1, 2};
    return cfg;
}

}  // namespace shedd::testing
