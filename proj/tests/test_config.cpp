#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "shedd/config.hpp"
#include "shedd/errors.hpp"

using namespace shedd;

namespace {

template <class F>
std::string config_error_of(F&& mutate) {
    auto j = config_to_json(ExperimentConfig{});
    mutate(j);
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("defaults carry the published hyperparameters") {
    const ExperimentConfig cfg;
    CHECK(cfg.train.learning_rate == 1e-4);
    CHECK(cfg.train.tau == 0.95);
    CHECK(cfg.train.ema_momentum == 0.95);
    CHECK(cfg.train.weight_decay == 1e-2);
    CHECK(cfg.train.batch_size == 32);
    CHECK(cfg.train.epochs == 100);
    CHECK(cfg.augment.probability == 0.5);
    CHECK(cfg.benchmark.num_classes == 6);
    CHECK(cfg.benchmark.source.channels == 8);
    CHECK(cfg.benchmark.target.channels == 2);
    CHECK(cfg.model.block_channels == std::vector<std::size_t>{16, 32, 64});
    CHECK(cfg.model.embedding_dim == 128);
    CHECK(cfg.train.toggles == LossToggles::all());
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("json round trip preserves every field") {
    ExperimentConfig cfg;
    cfg.label = "Abla3";
    cfg.train.tau = 0.8;
    cfg.train.toggles.pl_u = false;
    cfg.model.block_channels = {4, 8};
    cfg.benchmark.target.nuisance = 0.123;
    cfg.seeds = {9, 11};
    cfg.data_dir = "some/dir";
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(config_hash(ExperimentConfig{}) != config_hash(cfg));
}

TEST_CASE("unknown, missing and mistyped fields name their path") {
    CHECK(config_error_of([](auto& j) { j["train"]["bogus"] = 1; }).find("train.bogus") != std::string::npos);
    CHECK(config_error_of([](auto& j) { j["model"].erase("kernel_size"); }).find("model.kernel_size") !=
          std::string::npos);
    CHECK(config_error_of([](auto& j) { j["train"]["tau"] = "high"; }).find("train.tau") != std::string::npos);
    CHECK(config_error_of([](auto& j) { j["benchmark"]["source"]["channels"] = -1; }).find("benchmark.source") !=
          std::string::npos);
}

TEST_CASE("semantic validation") {
    CHECK_FALSE(config_error_of([](auto& j) { j["train"]["tau"] = 1.5; }).empty());
    CHECK_FALSE(config_error_of([](auto& j) { j["train"]["toggles"]["cl_st"] = false; }).empty());
    CHECK_FALSE(config_error_of([](auto& j) { j["train"]["batch_size"] = 0; }).empty());
    CHECK_FALSE(config_error_of([](auto& j) { j["model"]["embedding_dim"] = 7; }).empty());
    CHECK_FALSE(config_error_of([](auto& j) { j["seeds"] = nlohmann::json::array(); }).empty());
    CHECK_FALSE(config_error_of([](auto& j) { j["augment"]["probability"] = -0.5; }).empty());
    CHECK(config_error_of([](auto&) {}).empty());
}

TEST_CASE("config files load and report bad input") {
    const auto path = std::filesystem::temp_directory_path() / "shedd_test_config.json";
    std::ofstream(path) << config_to_json(ExperimentConfig{}).dump(2);
    CHECK(config_hash(load_config(path)) == config_hash(ExperimentConfig{}));
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(load_config(path), ConfigError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_config(path), ConfigError);
}

TEST_CASE("ablation rows and their toggles") {
    CHECK(ablation_rows() == std::vector<std::string>{"Abla1", "Abla2", "Abla3", "Abla4", "Abla5", "Abla6", "full"});
    auto t = [](bool cl, bool orth_st, bool dom_st, bool orth_uu, bool dom_uu, bool pl) {
        return LossToggles{cl, orth_st, dom_st, orth_uu, dom_uu, pl};
    };
    CHECK(ablation_toggles("Abla1") == t(1, 0, 0, 0, 0, 0));
    CHECK(ablation_toggles("Abla2") == t(1, 1, 1, 0, 0, 0));
    CHECK(ablation_toggles("Abla3") == t(1, 1, 1, 1, 1, 0));
    CHECK(ablation_toggles("Abla4") == t(1, 1, 1, 0, 0, 1));
    CHECK(ablation_toggles("Abla5") == t(1, 0, 1, 0, 1, 1));
    CHECK(ablation_toggles("Abla6") == t(1, 1, 0, 1, 0, 1));
    CHECK(ablation_toggles("full") == LossToggles::all());
    CHECK(ablation_toggles("abla4") == ablation_toggles("Abla4"));
    CHECK(ablation_toggles("FULL") == LossToggles::all());
    CHECK_THROWS_AS(ablation_toggles("Abla7"), ConfigError);

    const auto cfg = apply_ablation(ExperimentConfig{}, "abla2");
    CHECK(cfg.label == "Abla2");
    CHECK(cfg.train.toggles == ablation_toggles("Abla2"));
    std::set<unsigned> masks;
    for (const auto& r : ablation_rows()) masks.insert(ablation_toggles(r).mask());
    CHECK(masks.size() == 7);
}

TEST_CASE("run sub-seeds are distinct and stable") {
    const auto a = derive_run_seeds(1);
    const auto b = derive_run_seeds(1);
    const auto c = derive_run_seeds(2);
    CHECK(a.init == b.init);
    CHECK(a.data == b.data);
    CHECK(a.augment == b.augment);
    CHECK(a.init != a.data);
    CHECK(a.data != a.augment);
    CHECK(a.init != c.init);
}
