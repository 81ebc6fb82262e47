#include "shedd/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "shedd/errors.hpp"
#include "shedd/rng.hpp"

namespace shedd {

using nlohmann::json;

namespace {

// Reads one JSON object, tracking consumed keys so leftovers can be
// reported as unknown fields.
class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: '" + display() + "' must be an object");
    }

    template <class V>
    V get(const std::string& key) {
        const auto full = qualified(key);
        if (!j_.contains(key)) throw ConfigError("config: missing field '" + full + "'");
        seen_.insert(key);
        const auto& value = j_.at(key);
        if constexpr (std::is_integral_v<V> && !std::is_same_v<V, bool>) {
            const bool ok = std::is_unsigned_v<V> ? value.is_number_unsigned() : value.is_number_integer();
            if (!ok) throw ConfigError("config: field '" + full + "' must be a" +
                                       (std::is_unsigned_v<V> ? " nonnegative" : "n") + " integer");
        }
        if constexpr (std::is_same_v<V, std::vector<std::size_t>>) {
            if (!value.is_array() || !std::all_of(value.begin(), value.end(), [](const json& e) { return e.is_number_unsigned(); }))
                throw ConfigError("config: field '" + full + "' must be a list of nonnegative integers");
        }
        try {
            return value.get<V>();
        } catch (const json::exception&) {
            throw ConfigError("config: field '" + full + "' has the wrong type");
        }
    }

    StrictObject child(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError("config: missing field '" + qualified(key) + "'");
        seen_.insert(key);
        return StrictObject(j_.at(key), qualified(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.contains(key)) throw ConfigError("config: unknown field '" + qualified(key) + "'");
    }

private:
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string display() const { return path_.empty() ? "<root>" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json modality_json(const ModalityConfig& m) {
    return {{"name", m.name},         {"channels", m.channels}, {"size", m.size},
            {"nuisance", m.nuisance}, {"noise", m.noise},       {"samples_per_class", m.samples_per_class}};
}

ModalityConfig read_modality(StrictObject o) {
    ModalityConfig m;
    m.name = o.get<std::string>("name");
    m.channels = o.get<std::size_t>("channels");
    m.size = o.get<std::size_t>("size");
    m.nuisance = o.get<double>("nuisance");
    m.noise = o.get<double>("noise");
    m.samples_per_class = o.get<std::size_t>("samples_per_class");
    o.finish();
    return m;
}

json toggles_json(const LossToggles& t) {
    return {{"cl_st", t.cl_st},     {"orth_st", t.orth_st}, {"dom_st", t.dom_st},
            {"orth_uu", t.orth_uu}, {"dom_uu", t.dom_uu},   {"pl_u", t.pl_u}};
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

void ExperimentConfig::validate() const {
    benchmark.validate();
    augment.validate();
    if (model.block_channels.empty()) throw ConfigError("config: model.block_channels must not be empty");
    for (auto c : model.block_channels)
        if (c == 0) throw ConfigError("config: model.block_channels entries must be positive");
    if (model.kernel_size == 0 || model.stride == 0) throw ConfigError("config: model.kernel_size and model.stride must be positive");
    if (model.embedding_dim < 2 || model.embedding_dim % 2 != 0)
        throw ConfigError("config: model.embedding_dim must be even and at least 2");
    if (train.batch_size == 0) throw ConfigError("config: train.batch_size must be at least 1");
    if (!(train.tau >= 0.0 && train.tau <= 1.0)) throw ConfigError("config: train.tau must lie in [0, 1]");
    if (!(train.ema_momentum >= 0.0 && train.ema_momentum < 1.0))
        throw ConfigError("config: train.ema_momentum must lie in [0, 1)");
    if (!(train.learning_rate > 0)) throw ConfigError("config: train.learning_rate must be positive");
    if (!(train.beta1 >= 0 && train.beta1 < 1) || !(train.beta2 >= 0 && train.beta2 < 1))
        throw ConfigError("config: train.beta1 and train.beta2 must lie in [0, 1)");
    if (!(train.adam_eps > 0)) throw ConfigError("config: train.adam_eps must be positive");
    if (!(train.weight_decay >= 0)) throw ConfigError("config: train.weight_decay must be nonnegative");
    if (train.label_budget == 0) throw ConfigError("config: train.label_budget must be at least 1");
    for (auto b : train.label_budgets)
        if (b == 0) throw ConfigError("config: train.label_budgets entries must be at least 1");
    if (!train.toggles.cl_st) throw ConfigError("config: train.toggles.cl_st must be on");
    if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
}

json config_to_json(const ExperimentConfig& cfg) {
    const auto& b = cfg.benchmark;
    const auto& a = cfg.augment;
    const auto& t = cfg.train;
    return {{"label", cfg.label},
            {"benchmark",
             {{"num_classes", b.num_classes},
              {"latent_dim", b.latent_dim},
              {"source", modality_json(b.source)},
              {"target", modality_json(b.target)},
              {"label_noise", b.label_noise},
              {"seed", b.seed}}},
            {"model",
             {{"block_channels", cfg.model.block_channels},
              {"kernel_size", cfg.model.kernel_size},
              {"stride", cfg.model.stride},
              {"padding", cfg.model.padding},
              {"embedding_dim", cfg.model.embedding_dim}}},
            {"augment",
             {{"probability", a.probability},
              {"hflip", a.hflip},
              {"vflip", a.vflip},
              {"rotate", a.rotate},
              {"color_jitter", a.color_jitter},
              {"brightness", a.brightness},
              {"contrast", a.contrast},
              {"saturation", a.saturation},
              {"hue", a.hue}}},
            {"train",
             {{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_eps", t.adam_eps},
              {"weight_decay", t.weight_decay},
              {"tau", t.tau},
              {"ema_momentum", t.ema_momentum},
              {"label_budget", t.label_budget},
              {"label_budgets", t.label_budgets},
              {"toggles", toggles_json(t.toggles)}}},
            {"seeds", cfg.seeds},
            {"data_dir", cfg.data_dir}};
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    StrictObject root(j, "");
    cfg.label = root.get<std::string>("label");

    auto b = root.child("benchmark");
    cfg.benchmark.num_classes = b.get<std::size_t>("num_classes");
    cfg.benchmark.latent_dim = b.get<std::size_t>("latent_dim");
    cfg.benchmark.source = read_modality(b.child("source"));
    cfg.benchmark.target = read_modality(b.child("target"));
    cfg.benchmark.label_noise = b.get<double>("label_noise");
    cfg.benchmark.seed = b.get<std::uint64_t>("seed");
    b.finish();

    auto m = root.child("model");
    cfg.model.block_channels = m.get<std::vector<std::size_t>>("block_channels");
    cfg.model.kernel_size = m.get<std::size_t>("kernel_size");
    cfg.model.stride = m.get<std::size_t>("stride");
    cfg.model.padding = m.get<std::size_t>("padding");
    cfg.model.embedding_dim = m.get<std::size_t>("embedding_dim");
    m.finish();

    auto a = root.child("augment");
    cfg.augment.probability = a.get<double>("probability");
    cfg.augment.hflip = a.get<bool>("hflip");
    cfg.augment.vflip = a.get<bool>("vflip");
    cfg.augment.rotate = a.get<bool>("rotate");
    cfg.augment.color_jitter = a.get<bool>("color_jitter");
    cfg.augment.brightness = a.get<double>("brightness");
    cfg.augment.contrast = a.get<double>("contrast");
    cfg.augment.saturation = a.get<double>("saturation");
    cfg.augment.hue = a.get<double>("hue");
    a.finish();

    auto t = root.child("train");
    cfg.train.epochs = t.get<std::size_t>("epochs");
    cfg.train.batch_size = t.get<std::size_t>("batch_size");
    cfg.train.learning_rate = t.get<double>("learning_rate");
    cfg.train.beta1 = t.get<double>("beta1");
    cfg.train.beta2 = t.get<double>("beta2");
    cfg.train.adam_eps = t.get<double>("adam_eps");
    cfg.train.weight_decay = t.get<double>("weight_decay");
    cfg.train.tau = t.get<double>("tau");
    cfg.train.ema_momentum = t.get<double>("ema_momentum");
    cfg.train.label_budget = t.get<std::size_t>("label_budget");
    cfg.train.label_budgets = t.get<std::vector<std::size_t>>("label_budgets");
    auto tg = t.child("toggles");
    cfg.train.toggles.cl_st = tg.get<bool>("cl_st");
    cfg.train.toggles.orth_st = tg.get<bool>("orth_st");
    cfg.train.toggles.dom_st = tg.get<bool>("dom_st");
    cfg.train.toggles.orth_uu = tg.get<bool>("orth_uu");
    cfg.train.toggles.dom_uu = tg.get<bool>("dom_uu");
    cfg.train.toggles.pl_u = tg.get<bool>("pl_u");
    tg.finish();
    t.finish();

    cfg.seeds = root.get<std::vector<std::uint64_t>>("seeds");
    cfg.data_dir = root.get<std::string>("data_dir");
    root.finish();

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config_to_json(cfg).dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::vector<std::string>& ablation_rows() {
    static const std::vector<std::string> rows{"Abla1", "Abla2", "Abla3", "Abla4", "Abla5", "Abla6", "full"};
    return rows;
}

LossToggles ablation_toggles(const std::string& row) {
    LossToggles t = LossToggles::none();
    t.cl_st = true;
    const auto r = lower(row);
    if (r == "abla1") return t;
    if (r == "abla2") {
        t.orth_st = t.dom_st = true;
        return t;
    }
    if (r == "abla3") {
        t.orth_st = t.dom_st = t.orth_uu = t.dom_uu = true;
        return t;
    }
    if (r == "abla4") {
        t.orth_st = t.dom_st = t.pl_u = true;
        return t;
    }
    if (r == "abla5") {
        t.dom_st = t.dom_uu = t.pl_u = true;
        return t;
    }
    if (r == "abla6") {
        t.orth_st = t.orth_uu = t.pl_u = true;
        return t;
    }
    if (r == "full") return LossToggles::all();
    throw ConfigError("unknown ablation row '" + row + "' (expected Abla1..Abla6 or full)");
}

ExperimentConfig apply_ablation(const ExperimentConfig& cfg, const std::string& row) {
    ExperimentConfig out = cfg;
    out.train.toggles = ablation_toggles(row);
    const auto r = lower(row);
    out.label = r == "full" ? "full" : "Abla" + r.substr(4);
    return out;
}

RunSeeds derive_run_seeds(std::uint64_t seed) {
    return {derive_seed(seed, {1}), derive_seed(seed, {2}), derive_seed(seed, {3})};
}

}  // namespace shedd
