#include "shedd/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace shedd {

namespace fs = std::filesystem;

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

nlohmann::json entry_json(const CheckpointEntry& e, const std::string& file, bool with_ema) {
    nlohmann::json j{{"name", e.name}, {"shape", e.shape}, {"file", file}};
    if (with_ema && e.ema) j["ema_file"] = e.name + ".ema.bin";
    return j;
}

CheckpointEntry read_entry(const fs::path& dir, const nlohmann::json& j) {
    CheckpointEntry e;
    e.name = j.at("name").get<std::string>();
    e.shape = j.at("shape").get<Shape>();
    e.values = read_f32_file(dir / j.at("file").get<std::string>());
    if (e.values.size() != shape_numel(e.shape))
        throw std::runtime_error("checkpoint entry '" + e.name + "' has wrong length");
    if (j.contains("ema_file")) {
        e.ema = read_f32_file(dir / j.at("ema_file").get<std::string>());
        if (e.ema->size() != e.values.size())
            throw std::runtime_error("checkpoint EMA entry '" + e.name + "' has wrong length");
    }
    return e;
}

}  // namespace

bool Checkpoint::ema_included() const {
    return !parameters.empty() &&
           std::all_of(parameters.begin(), parameters.end(), [](const CheckpointEntry& e) { return e.ema.has_value(); });
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : parameters)
        if (e.name == name) return &e;
    return nullptr;
}

void Checkpoint::remove_prefix(const std::string& prefix) {
    std::erase_if(parameters, [&](const CheckpointEntry& e) { return e.name.starts_with(prefix); });
    std::erase_if(optimizer_state, [&](const CheckpointEntry& e) { return e.name.starts_with(prefix); });
}

void write_f32_file(const fs::path& path, const std::vector<float>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::vector<std::uint32_t> words(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        words[i] = to_little_endian(std::bit_cast<std::uint32_t>(values[i]));
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<float> read_f32_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % 4 != 0) throw std::runtime_error(path.string() + " is not a float32 blob");
    in.seekg(0);
    std::vector<std::uint32_t> words(bytes / 4);
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
    std::vector<float> values(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) values[i] = std::bit_cast<float>(to_little_endian(words[i]));
    return values;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& checkpoint) {
    fs::create_directories(dir / "optim");
    const bool with_ema = checkpoint.ema_included();
    nlohmann::json index{{"format", "shedd-checkpoint"},
                         {"version", 1},
                         {"variant", checkpoint.variant},
                         {"ema_included", with_ema},
                         {"metadata", checkpoint.metadata}};
    index["parameters"] = nlohmann::json::array();
    for (const auto& e : checkpoint.parameters) {
        write_f32_file(dir / (e.name + ".bin"), e.values);
        if (with_ema) write_f32_file(dir / (e.name + ".ema.bin"), *e.ema);
        index["parameters"].push_back(entry_json(e, e.name + ".bin", with_ema));
    }
    index["optimizer"] = nlohmann::json::array();
    for (const auto& e : checkpoint.optimizer_state) {
        const std::string file = "optim/" + e.name + ".bin";
        write_f32_file(dir / file, e.values);
        index["optimizer"].push_back(entry_json(e, file, false));
    }
    std::ofstream out(dir / "index.json", std::ios::trunc);
    out << index.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write checkpoint index in " + dir.string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "index.json");
    if (!in) throw std::runtime_error("no checkpoint index in " + dir.string());
    const auto index = nlohmann::json::parse(in);
    if (index.value("format", "") != "shedd-checkpoint")
        throw std::runtime_error(dir.string() + " is not a checkpoint directory");
    Checkpoint cp;
    cp.variant = index.at("variant").get<std::string>();
    cp.metadata = index.value("metadata", nlohmann::json::object());
    for (const auto& j : index.at("parameters")) cp.parameters.push_back(read_entry(dir, j));
    for (const auto& j : index.value("optimizer", nlohmann::json::array())) cp.optimizer_state.push_back(read_entry(dir, j));
    return cp;
}

}  // namespace shedd
