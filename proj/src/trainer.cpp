#include "shedd/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shedd/augment.hpp"
#include "shedd/errors.hpp"
#include "shedd/rng.hpp"

namespace shedd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kLogHeader =
    "epoch,l_cl_ST,l_dom_ST,l_dom_U\xC3\x9B,l_orth_ST,l_orth_U\xC3\x9B,l_pl_\xC3\x9B,total,retained_fraction,"
    "test_weighted_f1";

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

json architecture_json(const ArchitectureConfig& a) {
    return {{"block_channels", a.block_channels},
            {"kernel_size", a.kernel_size},
            {"stride", a.stride},
            {"padding", a.padding},
            {"embedding_dim", a.embedding_dim}};
}

ArchitectureConfig architecture_from_json(const json& j) {
    ArchitectureConfig a;
    a.block_channels = j.at("block_channels").get<std::vector<std::size_t>>();
    a.kernel_size = j.at("kernel_size").get<std::size_t>();
    a.stride = j.at("stride").get<std::size_t>();
    a.padding = j.at("padding").get<std::size_t>();
    a.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    return a;
}

json geometry_json(const ModalityGeometry& g) { return {g.channels, g.height, g.width}; }

ModalityGeometry geometry_from_json(const json& j) {
    const auto v = j.get<std::vector<std::size_t>>();
    if (v.size() != 3) throw std::runtime_error("checkpoint metadata: geometry must have three entries");
    return {v[0], v[1], v[2]};
}

json log_row_json(const EpochLog& r) {
    return {r.epoch, r.cl_st, r.dom_st, r.dom_uu, r.orth_st, r.orth_uu, r.pl_u, r.total, r.retained_fraction,
            r.test_weighted_f1};
}

EpochLog log_row_from_json(const json& j) {
    EpochLog r;
    r.epoch = j.at(0).get<std::size_t>();
    r.cl_st = j.at(1).get<double>();
    r.dom_st = j.at(2).get<double>();
    r.dom_uu = j.at(3).get<double>();
    r.orth_st = j.at(4).get<double>();
    r.orth_uu = j.at(5).get<double>();
    r.pl_u = j.at(6).get<double>();
    r.total = j.at(7).get<double>();
    r.retained_fraction = j.at(8).get<double>();
    r.test_weighted_f1 = j.at(9).get<double>();
    return r;
}

void load_values(const Checkpoint& cp, const ParameterList<float>& params, bool use_ema) {
    for (const auto& p : params) {
        const auto* e = cp.find(p.name);
        if (!e) throw std::runtime_error("checkpoint lacks parameter '" + p.name + "'");
        if (e->shape != p.tensor.shape())
            throw ShapeError("checkpoint parameter '" + p.name + "' has shape " + shape_to_string(e->shape) +
                             ", model expects " + shape_to_string(p.tensor.shape()));
        const auto& src = use_ema && e->ema ? *e->ema : e->values;
        Tensor handle = p.tensor;
        std::copy(src.begin(), src.end(), handle.mutable_data().begin());
    }
}

}  // namespace

void write_log_csv(const fs::path& path, const std::vector<EpochLog>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kLogHeader << '\n';
    for (const auto& r : rows) {
        out << r.epoch;
        for (double v : {r.cl_st, r.dom_st, r.dom_uu, r.orth_st, r.orth_uu, r.pl_u, r.total, r.retained_fraction,
                         r.test_weighted_f1})
            out << ',' << format_double(v);
        out << '\n';
    }
}

std::vector<EpochLog> read_log_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != kLogHeader) throw std::runtime_error(path.string() + " is not a training log");
    std::vector<EpochLog> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() != 10) throw std::runtime_error(path.string() + ": malformed log row");
        rows.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]});
    }
    return rows;
}

LossBundle train_step(SheddModel<float>& model, AdamW& optimizer, Ema& ema, const StepBatch& batch,
                      const StepSettings& s) {
    const std::size_t b = batch.x_s.extent(0);
    if (batch.x_t.extent(0) != b || batch.x_u.extent(0) != b || batch.y_s.size() != b || batch.y_t.size() != b)
        throw ShapeError("train_step: the three batches must have equal size");

    StepInputs<float> in{batch.x_s, batch.y_s, batch.x_t, batch.y_t, batch.x_u, {}};
    in.x_uhat = augment_batch(batch.x_u, s.augment_seed, s.augment, s.value_range);
    auto step = compute_step_loss(model, in, s.toggles, s.tau);

    optimizer.zero_grad();
    step.total.backward();
    for (const auto& p : optimizer.parameters()) p.tensor.impl()->grad_sink();
    optimizer.step();
    ema.update(optimizer.parameters());
    return step.bundle;
}

TargetSplit run_split(const Dataset& target, std::size_t label_budget, std::uint64_t seed) {
    return make_splits(target, label_budget, derive_seed(derive_run_seeds(seed).data, {0}));
}

Trainer::Trainer(const ExperimentConfig& cfg, const Dataset& source, const Dataset& target, std::uint64_t seed)
    : cfg_(cfg), source_(source), target_(target), seed_(seed), seeds_(derive_run_seeds(seed)) {
    cfg_.validate();
    if (source.manifest.num_classes != target.manifest.num_classes)
        throw ShapeError("source and target datasets disagree on the class count");
    split_ = run_split(target_, cfg_.train.label_budget, seed);
    sampler_ = std::make_unique<BatchSampler>(source_.size(), split_.labelled, split_.unlabelled,
                                              cfg_.train.batch_size, derive_seed(seeds_.data, {1}));
    model_ = SheddModel<float>(cfg_.model, source_.geometry(), target_.geometry(), target_.manifest.num_classes,
                               seeds_.init);
    params_ = model_.parameters();
    optimizer_ = std::make_unique<AdamW>(params_, AdamWOptions{cfg_.train.learning_rate, cfg_.train.beta1,
                                                               cfg_.train.beta2, cfg_.train.adam_eps,
                                                               cfg_.train.weight_decay});
    ema_ = std::make_unique<Ema>(params_, cfg_.train.ema_momentum);
}

EpochLog Trainer::run_epoch() {
    const auto batches = sampler_->epoch(epoch_);
    StepSettings settings{cfg_.train.toggles, cfg_.train.tau, cfg_.augment, target_.manifest.value_range, 0};

    EpochLog row;
    row.epoch = epoch_ + 1;
    std::size_t retained = 0, seen = 0;
    for (std::size_t it = 0; it < batches.size(); ++it) {
        const auto& idx = batches[it];
        StepBatch batch{source_.gather(idx.source), source_.gather_labels(idx.source), target_.gather(idx.labelled),
                        target_.gather_labels(idx.labelled), target_.gather(idx.unlabelled)};
        settings.augment_seed = derive_seed(seeds_.augment, {epoch_, it});
        const auto bundle = train_step(model_, *optimizer_, *ema_, batch, settings);
        row.cl_st += bundle.cl_st;
        row.dom_st += bundle.dom_st;
        row.dom_uu += bundle.dom_uu;
        row.orth_st += bundle.orth_st;
        row.orth_uu += bundle.orth_uu;
        row.pl_u += bundle.pl_u;
        row.total += bundle.total;
        retained += bundle.retained_count;
        seen += bundle.unlabelled_count;
    }
    const auto n = static_cast<double>(batches.size());
    for (double* v : {&row.cl_st, &row.dom_st, &row.dom_uu, &row.orth_st, &row.orth_uu, &row.pl_u, &row.total})
        *v /= n;
    row.retained_fraction = seen == 0 ? 0.0 : static_cast<double>(retained) / static_cast<double>(seen);
    row.test_weighted_f1 = evaluate_ema().weighted_f1;
    ++epoch_;
    log_.push_back(row);
    return row;
}

void Trainer::run(std::size_t stop_after, const std::function<void(const EpochLog&)>& on_epoch) {
    std::size_t done = 0;
    while (epoch_ < cfg_.train.epochs && (stop_after == 0 || done < stop_after)) {
        const auto row = run_epoch();
        ++done;
        if (on_epoch) on_epoch(row);
    }
}

MetricsReport Trainer::evaluate_ema() {
    auto swap = ema_->swap_in(params_);
    return evaluate(model_.target_encoder, model_.task_classifier, target_, split_.unlabelled);
}

Checkpoint Trainer::checkpoint(const std::string& variant) const {
    if (variant != "full" && variant != "inference")
        throw ContractError("checkpoint variant must be 'full' or 'inference'");
    Checkpoint cp;
    cp.variant = variant;
    cp.metadata = {{"architecture", architecture_json(cfg_.model)},
                   {"source_geometry", geometry_json(source_.geometry())},
                   {"target_geometry", geometry_json(target_.geometry())},
                   {"num_classes", target_.manifest.num_classes},
                   {"epoch", epoch_},
                   {"step_count", optimizer_->step_count()},
                   {"seed", seed_},
                   {"label_budget", cfg_.train.label_budget},
                   {"config_hash", config_hash(cfg_)}};
    const auto& shadow = ema_->shadow();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& p = params_[i];
        const bool deployable =
            p.name.starts_with(kTargetEncoderPrefix) || p.name.starts_with(kTaskClassifierPrefix);
        if (variant == "inference" && !deployable) continue;
        cp.parameters.push_back({p.name, p.tensor.shape(), p.tensor.values(), shadow[i]});
        if (variant == "full") {
            cp.optimizer_state.push_back({p.name + ".adam_m", p.tensor.shape(), optimizer_->first_moments()[i], {}});
            cp.optimizer_state.push_back({p.name + ".adam_v", p.tensor.shape(), optimizer_->second_moments()[i], {}});
        }
    }
    return cp;
}

void Trainer::save_state(const fs::path& dir) const {
    save_checkpoint(dir, checkpoint("full"));
    json state{{"epoch", epoch_}, {"step_count", optimizer_->step_count()}, {"seed", seed_},
               {"config_hash", config_hash(cfg_)}, {"log", json::array()}};
    for (const auto& r : log_) state["log"].push_back(log_row_json(r));
    std::ofstream out(dir / "state.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "state.json").string());
    out << state.dump(2) << '\n';
}

void Trainer::load_state(const fs::path& dir) {
    std::ifstream in(dir / "state.json");
    if (!in) throw std::runtime_error("no training state in " + dir.string());
    const auto state = json::parse(in);
    if (state.at("config_hash").get<std::string>() != config_hash(cfg_))
        throw ConfigError("resume: the saved state was produced by a different config");
    if (state.at("seed").get<std::uint64_t>() != seed_) throw ConfigError("resume: the saved state has another seed");

    const auto cp = load_checkpoint(dir);
    if (cp.variant != "full" || !cp.ema_included())
        throw std::runtime_error("resume needs a full checkpoint with EMA shadows");
    load_values(cp, params_, false);
    auto& shadow = ema_->shadow();
    auto& m = optimizer_->first_moments();
    auto& v = optimizer_->second_moments();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        shadow[i] = *cp.find(params_[i].name)->ema;
        for (const auto& e : cp.optimizer_state) {
            if (e.name == params_[i].name + ".adam_m") m[i] = e.values;
            if (e.name == params_[i].name + ".adam_v") v[i] = e.values;
        }
        if (m[i].size() != shadow[i].size() || v[i].size() != shadow[i].size())
            throw std::runtime_error("resume: optimizer state for '" + params_[i].name + "' is missing");
    }
    optimizer_->set_step_count(state.at("step_count").get<std::uint64_t>());
    epoch_ = state.at("epoch").get<std::size_t>();
    log_.clear();
    for (const auto& r : state.at("log")) log_.push_back(log_row_from_json(r));
}

InferenceModel load_inference_model(const Checkpoint& cp, bool use_ema) {
    const auto& meta = cp.metadata;
    InferenceModel model;
    try {
        const auto arch = architecture_from_json(meta.at("architecture"));
        model.target_encoder = Encoder<float>(Domain::Target, geometry_from_json(meta.at("target_geometry")), arch, 0);
        model.task_classifier =
            TaskClassifier<float>(arch.embedding_dim / 2, meta.at("num_classes").get<std::size_t>(), 0);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint metadata incomplete: ") + e.what());
    }
    load_values(cp, model.parameters(), use_ema);
    return model;
}

}  // namespace shedd
