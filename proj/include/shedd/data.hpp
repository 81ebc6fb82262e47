#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shedd/augment.hpp"
#include "shedd/model.hpp"
#include "shedd/tensor.hpp"

namespace shedd {

struct DatasetManifest {
    std::string modality;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;
    std::size_t num_samples = 0;
    ValueRange value_range;
    std::string data_file;    // relative to the manifest's directory
    std::string labels_file;  // relative to the manifest's directory
    std::string checksum;     // FNV-1a 64 of data then labels payload, hex
};

/// Images stored samples-major, row-major [N, c, h, w].
struct Dataset {
    DatasetManifest manifest;
    std::vector<float> images;
    std::vector<std::int32_t> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_numel() const { return manifest.channels * manifest.height * manifest.width; }
    ModalityGeometry geometry() const { return {manifest.channels, manifest.height, manifest.width}; }

    /// Stacks the given samples into [n, c, h, w].
    Tensor gather(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> gather_labels(std::span<const std::size_t> indices) const;
    /// Sample i as [c, h, w].
    Tensor sample(std::size_t index) const;
    std::vector<std::size_t> indices_of_class(std::size_t cls) const;
};

struct ModalityConfig {
    std::string name;
    std::size_t channels = 1;
    std::size_t size = 32;  // square images
    double nuisance = 0.5;  // latent jitter, channel offsets, structured noise
    double noise = 0.1;     // i.i.d. pixel noise std (before value scaling)
    std::size_t samples_per_class = 100;
};

struct SyntheticBenchConfig {
    std::size_t num_classes = 6;
    std::size_t latent_dim = 16;
    ModalityConfig source{"optical", 8, 32, 0.6, 0.6, 320};
    ModalityConfig target{"radar", 2, 32, 0.5, 0.5, 100};
    double label_noise = 0.0;
    std::uint64_t seed = 2024;

    void validate() const;
};

/// Renders one class-prototype latent per class into two unpaired
/// modalities with different channel counts, resolutions and nuisance.
std::pair<Dataset, Dataset> generate_synthetic_benchmark(const SyntheticBenchConfig& cfg);

/// Writes `<stem>.json`, `<stem>.data.bin` (float32 LE) and
/// `<stem>.labels.bin` (int32 LE) under `dir`; fills in the manifest's
/// file names and checksum. Returns the manifest path.
std::filesystem::path write_dataset(Dataset& dataset, const std::filesystem::path& dir, const std::string& stem);

/// Throws ManifestError for malformed manifests or labels outside [0,C),
/// CorruptDatasetError for truncated payloads or checksum mismatches.
/// Values are clamped into the declared value range.
Dataset load_dataset(const std::filesystem::path& manifest_path);

std::string dataset_checksum(const Dataset& dataset);

/// Labelled target subset T (class-balanced) and its complement U, which is
/// also the evaluation set.
struct TargetSplit {
    std::vector<std::size_t> labelled;
    std::vector<std::size_t> unlabelled;
};

TargetSplit make_splits(const Dataset& target, std::size_t per_class, std::uint64_t seed);

/// Dataset indices for one training iteration.
struct BatchIndices {
    std::vector<std::size_t> source;
    std::vector<std::size_t> labelled;
    std::vector<std::size_t> unlabelled;
};

/// Per epoch the source set is shuffled once and consumed sequentially
/// (incomplete last batch dropped); labelled and unlabelled target batches of
/// the same size are drawn uniformly with replacement.
class BatchSampler {
public:
    BatchSampler(std::size_t source_count, std::vector<std::size_t> labelled, std::vector<std::size_t> unlabelled,
                 std::size_t batch_size, std::uint64_t seed);

    std::size_t iterations_per_epoch() const { return source_count_ / batch_size_; }
    std::size_t batch_size() const { return batch_size_; }
    std::vector<BatchIndices> epoch(std::size_t epoch_index) const;

private:
    std::size_t source_count_;
    std::vector<std::size_t> labelled_;
    std::vector<std::size_t> unlabelled_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

}  // namespace shedd
