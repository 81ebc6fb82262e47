#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shedd/nn.hpp"
#include "shedd/tensor.hpp"

namespace shedd {

/// Which branch a sample or encoder belongs to. The value doubles as the
/// domain-classifier class index.
enum class Domain : std::size_t { Source = 0, Target = 1 };

const char* domain_name(Domain d);

/// Input geometry accepted by one modality's encoder.
struct ModalityGeometry {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    bool operator==(const ModalityGeometry&) const = default;
};

/// Encoder architecture shared by both branches.
struct ArchitectureConfig {
    std::vector<std::size_t> block_channels{16, 32, 64};
    std::size_t kernel_size = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
    std::size_t embedding_dim = 128;  // 2D; each half has D = embedding_dim / 2
};

template <class T>
struct EmbeddingPair {
    BasicTensor<T> invariant;  // z_inv [b, D]
    BasicTensor<T> specific;   // z_spe [b, D]
};

/// Conv blocks -> global average pool -> linear projection to 2D. The first
/// half of the output is the domain-invariant embedding, the second half the
/// domain-specific one.
template <class T>
class Encoder {
public:
    Encoder() = default;
    Encoder(Domain domain, ModalityGeometry geometry, const ArchitectureConfig& arch, std::uint64_t seed);

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    EmbeddingPair<T> encode(const BasicTensor<T>& x) const;

    Domain domain() const { return domain_; }
    const ModalityGeometry& geometry() const { return geometry_; }
    std::size_t half_dim() const { return head_.out_features() / 2; }

    void collect(const std::string& prefix, ParameterList<T>& out) const;

private:
    Domain domain_ = Domain::Target;
    ModalityGeometry geometry_;
    std::vector<ConvBlock<T>> blocks_;
    LinearLayer<T> head_;
};

/// Single linear layer + softmax over C classes (or over {source, target}).
template <class T>
class SoftmaxClassifier {
public:
    SoftmaxClassifier() = default;
    SoftmaxClassifier(std::size_t in_features, std::size_t classes, std::uint64_t seed);

    BasicTensor<T> logits(const BasicTensor<T>& z) const;
    BasicTensor<T> probabilities(const BasicTensor<T>& z) const;
    std::size_t classes() const { return linear_.out_features(); }

    void collect(const std::string& prefix, ParameterList<T>& out) const;
    LinearLayer<T>& linear() { return linear_; }

private:
    LinearLayer<T> linear_;
};

template <class T>
using TaskClassifier = SoftmaxClassifier<T>;
template <class T>
using DomainClassifier = SoftmaxClassifier<T>;

/// Parameter-name prefixes, also used by the checkpoint variants.
inline constexpr const char* kSourceEncoderPrefix = "source_encoder";
inline constexpr const char* kTargetEncoderPrefix = "target_encoder";
inline constexpr const char* kTaskClassifierPrefix = "task_classifier";
inline constexpr const char* kDomainClassifierPrefix = "domain_classifier";

/// The full training-time network: two encoders, task and domain heads.
template <class T>
struct SheddModel {
    Encoder<T> source_encoder;
    Encoder<T> target_encoder;
    TaskClassifier<T> task_classifier;
    DomainClassifier<T> domain_classifier;

    SheddModel() = default;
    SheddModel(const ArchitectureConfig& arch, ModalityGeometry source, ModalityGeometry target, std::size_t classes,
               std::uint64_t seed);

    /// Fixed order: source encoder, target encoder, task head, domain head.
    ParameterList<T> parameters() const;
    /// Target encoder + task head only (what inference needs).
    ParameterList<T> inference_parameters() const;
};

/// The deployable part of the model.
struct InferenceModel {
    Encoder<float> target_encoder;
    TaskClassifier<float> task_classifier;

    ParameterList<float> parameters() const;
};

/// Predicted class per row: argmax of the task probabilities on z_inv.
/// Touches only the target encoder and the task classifier.
std::vector<std::size_t> infer(const Encoder<float>& target_encoder, const TaskClassifier<float>& classifier,
                               const Tensor& x);

/// Runs `infer` in chunks of `chunk` samples without building a graph.
std::vector<std::size_t> infer_batched(const Encoder<float>& target_encoder, const TaskClassifier<float>& classifier,
                                       const Tensor& x, std::size_t chunk = 256);

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class SoftmaxClassifier<float>;
extern template class SoftmaxClassifier<double>;
extern template struct SheddModel<float>;
extern template struct SheddModel<double>;

}  // namespace shedd
