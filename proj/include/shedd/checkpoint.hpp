#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shedd/tensor.hpp"

namespace shedd {

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
    std::optional<std::vector<float>> ema;  // EMA shadow, when included
};

/// On-disk layout: `index.json` plus one little-endian float32 blob per
/// entry (`<name>.bin`, `<name>.ema.bin`, `optim/<name>.bin`).
struct Checkpoint {
    std::string variant = "full";  // "full" or "inference"
    std::vector<CheckpointEntry> parameters;
    std::vector<CheckpointEntry> optimizer_state;
    nlohmann::json metadata = nlohmann::json::object();

    bool ema_included() const;
    const CheckpointEntry* find(const std::string& name) const;
    /// Drops every parameter whose name starts with `prefix`.
    void remove_prefix(const std::string& prefix);
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Little-endian float32 blob I/O.
void write_f32_file(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<float> read_f32_file(const std::filesystem::path& path);

}  // namespace shedd
