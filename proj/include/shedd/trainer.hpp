#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "shedd/checkpoint.hpp"
#include "shedd/config.hpp"
#include "shedd/data.hpp"
#include "shedd/eval.hpp"
#include "shedd/losses.hpp"
#include "shedd/model.hpp"
#include "shedd/nn.hpp"

namespace shedd {

/// One row of the training log: epoch means of the loss terms (disabled
/// terms are 0), the fraction of pseudo-labels above the threshold, and the
/// weighted F1 on the unlabelled/test set under EMA weights.
struct EpochLog {
    std::size_t epoch = 0;
    double cl_st = 0;
    double dom_st = 0;
    double dom_uu = 0;
    double orth_st = 0;
    double orth_uu = 0;
    double pl_u = 0;
    double total = 0;
    double retained_fraction = 0;
    double test_weighted_f1 = 0;
};

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& rows);
std::vector<EpochLog> read_log_csv(const std::filesystem::path& path);

/// Three aligned batches; the augmented view of x_u is made inside the step.
struct StepBatch {
    Tensor x_s;
    std::vector<std::size_t> y_s;
    Tensor x_t;
    std::vector<std::size_t> y_t;
    Tensor x_u;
};

struct StepSettings {
    LossToggles toggles;
    double tau = 0.95;
    AugmentConfig augment;
    ValueRange value_range;
    std::uint64_t augment_seed = 0;
};

/// Augment x_u, four encoder passes, the enabled loss terms, backward,
/// AdamW and EMA update. Parameters unreachable from the enabled terms get
/// a zero gradient (so only weight decay moves them).
LossBundle train_step(SheddModel<float>& model, AdamW& optimizer, Ema& ema, const StepBatch& batch,
                      const StepSettings& settings);

/// The labelled/unlabelled target split a run with `seed` uses.
TargetSplit run_split(const Dataset& target, std::size_t label_budget, std::uint64_t seed);

/// Owns the mutable state of one training run.
class Trainer {
public:
    /// `source` and `target` must outlive the trainer.
    Trainer(const ExperimentConfig& cfg, const Dataset& source, const Dataset& target, std::uint64_t seed);

    /// One pass over the source set followed by an EMA evaluation on U.
    EpochLog run_epoch();
    /// Runs epochs until `epoch() == cfg.train.epochs` (or `stop_after`
    /// epochs in this call, when nonzero).
    void run(std::size_t stop_after = 0, const std::function<void(const EpochLog&)>& on_epoch = {});

    /// Weighted F1 etc. on U using EMA weights; raw weights are restored.
    MetricsReport evaluate_ema();

    /// `full`: all parameters, EMA shadows and AdamW moments.
    /// `inference`: target encoder + task classifier, EMA shadows included.
    Checkpoint checkpoint(const std::string& variant) const;

    /// Full checkpoint plus `state.json` (epoch, log) for exact resumption.
    void save_state(const std::filesystem::path& dir) const;
    void load_state(const std::filesystem::path& dir);

    std::size_t epoch() const { return epoch_; }
    const std::vector<EpochLog>& log() const { return log_; }
    const TargetSplit& split() const { return split_; }
    SheddModel<float>& model() { return model_; }
    const SheddModel<float>& model() const { return model_; }
    AdamW& optimizer() { return *optimizer_; }
    Ema& ema() { return *ema_; }
    const ExperimentConfig& config() const { return cfg_; }

private:
    ExperimentConfig cfg_;
    const Dataset& source_;
    const Dataset& target_;
    std::uint64_t seed_;
    RunSeeds seeds_;
    TargetSplit split_;
    std::unique_ptr<BatchSampler> sampler_;
    SheddModel<float> model_;
    ParameterList<float> params_;
    std::unique_ptr<AdamW> optimizer_;
    std::unique_ptr<Ema> ema_;
    std::size_t epoch_ = 0;
    std::vector<EpochLog> log_;
};

/// Rebuilds the deployable model from either checkpoint variant. Only
/// target-encoder and task-classifier entries are read.
InferenceModel load_inference_model(const Checkpoint& checkpoint, bool use_ema = true);

}  // namespace shedd
