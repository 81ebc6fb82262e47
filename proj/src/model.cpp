#include "shedd/model.hpp"

#include "shedd/ops.hpp"
#include "shedd/rng.hpp"

namespace shedd {

const char* domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

template <class T>
Encoder<T>::Encoder(Domain domain, ModalityGeometry geometry, const ArchitectureConfig& arch, std::uint64_t seed)
    : domain_(domain), geometry_(geometry) {
    if (arch.embedding_dim == 0 || arch.embedding_dim % 2 != 0)
        throw ShapeError("encoder: embedding_dim must be positive and even");
    if (arch.block_channels.empty()) throw ShapeError("encoder: at least one conv block is required");
    std::size_t in_c = geometry.channels, h = geometry.height, w = geometry.width;
    for (std::size_t i = 0; i < arch.block_channels.size(); ++i) {
        ConvBlock<T> block(in_c, arch.block_channels[i], arch.kernel_size, arch.stride, arch.padding,
                           derive_seed(seed, {i, 0}));
        h = block.output_extent(h);
        w = block.output_extent(w);
        if (h == 0 || w == 0)
            throw ShapeError("encoder: input " + std::to_string(geometry.height) + "x" +
                             std::to_string(geometry.width) + " too small for " +
                             std::to_string(arch.block_channels.size()) + " pooled blocks");
        blocks_.push_back(std::move(block));
        in_c = arch.block_channels[i];
    }
    head_ = LinearLayer<T>(in_c, arch.embedding_dim, derive_seed(seed, {arch.block_channels.size(), 1}));
}

template <class T>
BasicTensor<T> Encoder<T>::forward(const BasicTensor<T>& x) const {
    if (x.rank() != 4 || x.extent(1) != geometry_.channels || x.extent(2) != geometry_.height ||
        x.extent(3) != geometry_.width) {
        throw ShapeError(std::string(domain_name(domain_)) + " encoder expects [b," +
                         std::to_string(geometry_.channels) + "," + std::to_string(geometry_.height) + "," +
                         std::to_string(geometry_.width) + "], got " + shape_to_string(x.shape()));
    }
    BasicTensor<T> h = x;
    for (const auto& block : blocks_) h = block.forward(h);
    return head_.forward(global_avg_pool(h));
}

template <class T>
EmbeddingPair<T> Encoder<T>::encode(const BasicTensor<T>& x) const {
    const auto z = forward(x);
    const std::size_t d = half_dim();
    return {slice_columns(z, 0, d), slice_columns(z, d, 2 * d)};
}

template <class T>
void Encoder<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
    head_.collect(prefix + ".head", out);
}

template <class T>
SoftmaxClassifier<T>::SoftmaxClassifier(std::size_t in_features, std::size_t classes, std::uint64_t seed)
    : linear_(in_features, classes, seed) {}

template <class T>
BasicTensor<T> SoftmaxClassifier<T>::logits(const BasicTensor<T>& z) const {
    return linear_.forward(z);
}

template <class T>
BasicTensor<T> SoftmaxClassifier<T>::probabilities(const BasicTensor<T>& z) const {
    return softmax(linear_.forward(z));
}

template <class T>
void SoftmaxClassifier<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    linear_.collect(prefix, out);
}

template <class T>
SheddModel<T>::SheddModel(const ArchitectureConfig& arch, ModalityGeometry source, ModalityGeometry target,
                          std::size_t classes, std::uint64_t seed)
    : source_encoder(Domain::Source, source, arch, derive_seed(seed, {1})),
      target_encoder(Domain::Target, target, arch, derive_seed(seed, {2})),
      task_classifier(arch.embedding_dim / 2, classes, derive_seed(seed, {3})),
      domain_classifier(arch.embedding_dim / 2, 2, derive_seed(seed, {4})) {
    if (classes < 2) throw ShapeError("model: at least two classes are required");
}

template <class T>
ParameterList<T> SheddModel<T>::parameters() const {
    ParameterList<T> out;
    source_encoder.collect(kSourceEncoderPrefix, out);
    target_encoder.collect(kTargetEncoderPrefix, out);
    task_classifier.collect(kTaskClassifierPrefix, out);
    domain_classifier.collect(kDomainClassifierPrefix, out);
    return out;
}

template <class T>
ParameterList<T> SheddModel<T>::inference_parameters() const {
    ParameterList<T> out;
    target_encoder.collect(kTargetEncoderPrefix, out);
    task_classifier.collect(kTaskClassifierPrefix, out);
    return out;
}

ParameterList<float> InferenceModel::parameters() const {
    ParameterList<float> out;
    target_encoder.collect(kTargetEncoderPrefix, out);
    task_classifier.collect(kTaskClassifierPrefix, out);
    return out;
}

std::vector<std::size_t> infer(const Encoder<float>& target_encoder, const TaskClassifier<float>& classifier,
                               const Tensor& x) {
    if (target_encoder.domain() != Domain::Target)
        throw ShapeError("infer: only the target encoder is used at inference time");
    return argmax_rows(classifier.probabilities(target_encoder.encode(x).invariant));
}

std::vector<std::size_t> infer_batched(const Encoder<float>& target_encoder, const TaskClassifier<float>& classifier,
                                       const Tensor& x, std::size_t chunk) {
    NoGradGuard no_grad;
    const std::size_t n = x.extent(0);
    const std::size_t per_sample = x.numel() / n;
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t count = std::min(chunk, n - begin);
        std::vector<float> values(x.data().begin() + static_cast<std::ptrdiff_t>(begin * per_sample),
                                  x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * per_sample));
        Shape shape = x.shape();
        shape[0] = count;
        const auto part = infer(target_encoder, classifier, Tensor::from_data(shape, std::move(values)));
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

template class Encoder<float>;
template class Encoder<double>;
template class SoftmaxClassifier<float>;
template class SoftmaxClassifier<double>;
template struct SheddModel<float>;
template struct SheddModel<double>;

}  // namespace shedd
