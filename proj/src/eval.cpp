#include "shedd/eval.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "shedd/errors.hpp"
#include "shedd/rng.hpp"

namespace shedd {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t num_classes) {
    if (truth.size() != predicted.size()) throw ShapeError("confusion_matrix: label vectors differ in length");
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= num_classes || predicted[i] >= num_classes)
            throw ShapeError("confusion_matrix: label outside [0," + std::to_string(num_classes) + ")");
        ++cm.at(truth[i], predicted[i]);
    }
    return cm;
}

MetricsReport weighted_f1(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t num_classes) {
    if (truth.empty()) throw std::invalid_argument("weighted_f1: empty input");
    const auto cm = confusion_matrix(truth, predicted, num_classes);

    MetricsReport r;
    r.per_class_f1.assign(num_classes, 0.0);
    r.per_class_support.assign(num_classes, 0);
    std::size_t correct = 0;
    double weighted = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t support = 0, predicted_c = 0;
        for (std::size_t k = 0; k < num_classes; ++k) {
            support += cm.at(c, k);
            predicted_c += cm.at(k, c);
        }
        const std::size_t tp = cm.at(c, c);
        correct += tp;
        r.per_class_support[c] = support;
        // F1 = 2TP / (2TP + FP + FN), which is 0 exactly when P + R = 0.
        const std::size_t denom = support + predicted_c;
        r.per_class_f1[c] = tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
        weighted += static_cast<double>(support) * r.per_class_f1[c];
    }
    const auto n = static_cast<double>(truth.size());
    r.weighted_f1 = weighted / n;
    r.accuracy = static_cast<double>(correct) / n;
    return r;
}

MetricsReport evaluate(const Encoder<float>& target_encoder, const TaskClassifier<float>& classifier,
                       const Dataset& dataset, std::span<const std::size_t> indices) {
    if (dataset.geometry() != target_encoder.geometry())
        throw ShapeError("evaluate: dataset modality '" + dataset.manifest.modality +
                         "' does not match the target encoder geometry");
    std::vector<std::size_t> all;
    if (indices.empty()) {
        all.resize(dataset.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        indices = all;
    }
    const auto predicted = infer_batched(target_encoder, classifier, dataset.gather(indices));
    return weighted_f1(dataset.gather_labels(indices), predicted, dataset.manifest.num_classes);
}

std::size_t export_embeddings(const Encoder<float>& target_encoder, const Dataset& dataset,
                              std::span<const std::size_t> indices, std::size_t per_class, std::uint64_t seed,
                              const std::filesystem::path& csv_path) {
    const std::size_t classes = dataset.manifest.num_classes;
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (auto i : indices) by_class.at(static_cast<std::size_t>(dataset.labels.at(i))).push_back(i);

    std::vector<std::size_t> selected;
    for (std::size_t c = 0; c < classes; ++c) {
        if (by_class[c].size() < per_class)
            throw InsufficientDataError("export_embeddings: class " + std::to_string(c) + " has " +
                                        std::to_string(by_class[c].size()) + " samples, need " +
                                        std::to_string(per_class));
        Rng rng(derive_seed(seed, {c}));
        rng.shuffle(by_class[c]);
        selected.insert(selected.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(per_class));
    }

    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    const std::size_t d = target_encoder.half_dim();
    out << "sample_id,true_class";
    for (std::size_t k = 0; k < d; ++k) out << ",z" << k;
    out << '\n';
    out.precision(9);
    if (selected.empty()) return 0;

    NoGradGuard no_grad;
    const auto z = target_encoder.encode(dataset.gather(selected)).invariant;
    for (std::size_t r = 0; r < selected.size(); ++r) {
        out << selected[r] << ',' << dataset.labels[selected[r]];
        for (std::size_t k = 0; k < d; ++k) out << ',' << z.at(r * d + k);
        out << '\n';
    }
    return selected.size();
}

MeanStd aggregate(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("aggregate: standard deviation needs at least two runs");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1))};
}

AggregateReport aggregate_runs(std::span<const MetricsReport> reports) {
    std::vector<double> f1, acc;
    for (const auto& r : reports) {
        f1.push_back(r.weighted_f1);
        acc.push_back(r.accuracy);
    }
    return {aggregate(f1), aggregate(acc)};
}

}  // namespace shedd
