#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shedd/data.hpp"
#include "shedd/model.hpp"

namespace shedd {

/// counts[true][predicted].
struct ConfusionMatrix {
    std::size_t num_classes = 0;
    std::vector<std::size_t> counts;

    explicit ConfusionMatrix(std::size_t classes) : num_classes(classes), counts(classes * classes, 0) {}

    std::size_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * num_classes + predicted]; }
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * num_classes + predicted]; }
    std::size_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t num_classes);

struct MetricsReport {
    double weighted_f1 = 0;
    double accuracy = 0;
    std::vector<double> per_class_f1;
    std::vector<std::size_t> per_class_support;
};

/// Per-class F1 (0 when precision + recall is 0) averaged with true-class
/// support as weights. Throws std::invalid_argument on empty input and
/// ShapeError on out-of-range labels.
MetricsReport weighted_f1(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t num_classes);

/// Predicts every sample of `dataset` listed in `indices` (all when empty).
MetricsReport evaluate(const Encoder<float>& target_encoder, const TaskClassifier<float>& classifier,
                       const Dataset& dataset, std::span<const std::size_t> indices = {});

/// Writes `sample_id,true_class,z0..z{D-1}` with the invariant embedding of
/// k samples per class drawn (without replacement) from `indices`.
/// Returns the number of rows written.
std::size_t export_embeddings(const Encoder<float>& target_encoder, const Dataset& dataset,
                              std::span<const std::size_t> indices, std::size_t per_class, std::uint64_t seed,
                              const std::filesystem::path& csv_path);

struct MeanStd {
    double mean = 0;
    double std = 0;  // sample standard deviation (n - 1)
};

/// Throws std::invalid_argument for fewer than two values.
MeanStd aggregate(std::span<const double> values);

struct AggregateReport {
    MeanStd weighted_f1;
    MeanStd accuracy;
};

AggregateReport aggregate_runs(std::span<const MetricsReport> reports);

}  // namespace shedd
