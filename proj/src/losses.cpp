#include "shedd/losses.hpp"

#include "shedd/ops.hpp"

namespace shedd {

LossToggles LossToggles::from_mask(unsigned mask) {
    return {(mask & 1u) != 0, (mask & 2u) != 0, (mask & 4u) != 0, (mask & 8u) != 0, (mask & 16u) != 0,
            (mask & 32u) != 0};
}

unsigned LossToggles::mask() const {
    return (cl_st ? 1u : 0u) | (orth_st ? 2u : 0u) | (dom_st ? 4u : 0u) | (orth_uu ? 8u : 0u) |
           (dom_uu ? 16u : 0u) | (pl_u ? 32u : 0u);
}

template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, const std::vector<std::size_t>& labels) {
    if (probs.rank() != 2) throw ShapeError("cross_entropy: expected [b,C] probabilities");
    for (auto y : labels)
        if (y >= probs.extent(1))
            throw ShapeError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                             std::to_string(probs.extent(1)) + ")");
    return scale(mean(log(pick(probs, labels))), T{-1});
}

template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, std::size_t label) {
    return cross_entropy(probs, std::vector<std::size_t>(probs.extent(0), label));
}

template <class T>
BasicTensor<T> classification_loss(const TaskClassifier<T>& clf, const BasicTensor<T>& z_inv_s,
                                   const std::vector<std::size_t>& y_s, const BasicTensor<T>& z_inv_t,
                                   const std::vector<std::size_t>& y_t) {
    if (y_s.empty() || y_t.empty()) throw ContractError("classification_loss: both batches need labels");
    const auto ce_s = cross_entropy(clf.probabilities(z_inv_s), y_s);
    const auto ce_t = cross_entropy(clf.probabilities(z_inv_t), y_t);
    return scale(add(ce_s, ce_t), T{0.5});
}

template <class T>
BasicTensor<T> domain_loss_labelled(const DomainClassifier<T>& clf, const BasicTensor<T>& z_spe_s,
                                    const BasicTensor<T>& z_spe_t) {
    const auto ce_s = cross_entropy(clf.probabilities(z_spe_s), static_cast<std::size_t>(Domain::Source));
    const auto ce_t = cross_entropy(clf.probabilities(z_spe_t), static_cast<std::size_t>(Domain::Target));
    return scale(add(ce_s, ce_t), T{0.5});
}

template <class T>
BasicTensor<T> domain_loss_unlabelled(const DomainClassifier<T>& clf, const BasicTensor<T>& z_spe_u,
                                      const BasicTensor<T>& z_spe_uhat) {
    constexpr auto target = static_cast<std::size_t>(Domain::Target);
    const auto ce_u = cross_entropy(clf.probabilities(z_spe_u), target);
    const auto ce_uhat = cross_entropy(clf.probabilities(z_spe_uhat), target);
    return scale(add(ce_u, ce_uhat), T{0.5});
}

template <class T>
BasicTensor<T> orthogonality_loss(const BasicTensor<T>& z_inv, const BasicTensor<T>& z_spe) {
    return mean(row_cosine(z_inv, z_spe, static_cast<T>(kCosineEps)));
}

template <class T>
BasicTensor<T> paired_orthogonality_loss(const EmbeddingPair<T>& a, const EmbeddingPair<T>& b) {
    return scale(add(orthogonality_loss(a.invariant, a.specific), orthogonality_loss(b.invariant, b.specific)),
                 T{0.5});
}

template <class T>
PseudoLabelResult<T> pseudo_label_loss(const BasicTensor<T>& probs_u, const BasicTensor<T>& probs_uhat, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ContractError("pseudo_label_loss: tau must lie in [0, 1]");
    if (probs_u.shape() != probs_uhat.shape() || probs_u.rank() != 2)
        throw ShapeError("pseudo_label_loss: probability batches must share shape [b,C]");
    if (probs_u.requires_grad()) throw ContractError("pseudo_label_loss: pseudo-label source must be detached");

    const std::size_t b = probs_u.extent(0);
    const auto peak = max(probs_u, std::size_t{1});
    PseudoLabelResult<T> result;
    result.labels = peak.indices;
    result.mask.resize(b);
    std::vector<T> weights(b);
    for (std::size_t i = 0; i < b; ++i) {
        result.mask[i] = static_cast<double>(peak.values.at(i)) > tau;
        weights[i] = result.mask[i] ? T{1} : T{0};
        result.retained_count += result.mask[i] ? 1 : 0;
    }
    if (result.retained_count == 0) {
        result.loss = BasicTensor<T>::scalar(T{0});
        return result;
    }
    const auto masked = mul(log(pick(probs_uhat, result.labels)), BasicTensor<T>::from_data({b}, std::move(weights)));
    result.loss = scale(sum(masked), static_cast<T>(-1.0 / static_cast<double>(b)));
    return result;
}

template <class T>
StepLoss<T> compute_step_loss(const SheddModel<T>& model, const StepInputs<T>& in, const LossToggles& toggles,
                              double tau) {
    const std::size_t b = in.x_s.extent(0);
    if (in.x_t.extent(0) != b || in.y_s.size() != b || in.y_t.size() != b)
        throw ShapeError("train step: source and labelled target batches must be aligned");
    if (toggles.any_unlabelled() && (in.x_u.extent(0) != b || in.x_uhat.extent(0) != b))
        throw ShapeError("train step: unlabelled batches must match the labelled batch size");

    StepLoss<T> out;
    std::vector<BasicTensor<T>> terms;
    auto record = [&](const BasicTensor<T>& term, double& slot) {
        slot = static_cast<double>(term.item());
        terms.push_back(term);
    };

    const bool need_st = toggles.cl_st || toggles.orth_st || toggles.dom_st;
    EmbeddingPair<T> s, t, u, uhat;
    if (need_st) {
        s = model.source_encoder.encode(in.x_s);
        t = model.target_encoder.encode(in.x_t);
    }
    if (toggles.any_unlabelled()) {
        u = model.target_encoder.encode(in.x_u);
        uhat = model.target_encoder.encode(in.x_uhat);
    }

    if (toggles.cl_st)
        record(classification_loss(model.task_classifier, s.invariant, in.y_s, t.invariant, in.y_t), out.bundle.cl_st);
    if (toggles.dom_st) record(domain_loss_labelled(model.domain_classifier, s.specific, t.specific), out.bundle.dom_st);
    if (toggles.dom_uu)
        record(domain_loss_unlabelled(model.domain_classifier, u.specific, uhat.specific), out.bundle.dom_uu);
    if (toggles.orth_st) record(paired_orthogonality_loss(s, t), out.bundle.orth_st);
    if (toggles.orth_uu) record(paired_orthogonality_loss(u, uhat), out.bundle.orth_uu);
    if (toggles.pl_u) {
        BasicTensor<T> probs_u;
        {
            NoGradGuard no_grad;
            probs_u = model.task_classifier.probabilities(u.invariant);
        }
        auto pl = pseudo_label_loss(probs_u, model.task_classifier.probabilities(uhat.invariant), tau);
        record(pl.loss, out.bundle.pl_u);
        out.bundle.retained_count = pl.retained_count;
        out.bundle.unlabelled_count = b;
    }

    if (terms.empty()) {
        out.total = BasicTensor<T>::scalar(T{0});
    } else {
        out.total = terms.front();
        for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
    }
    out.bundle.total = static_cast<double>(out.total.item());
    return out;
}

#define SHEDD_INSTANTIATE_LOSSES(T)                                                                            \
    template BasicTensor<T> cross_entropy(const BasicTensor<T>&, const std::vector<std::size_t>&);             \
    template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::size_t);                                 \
    template BasicTensor<T> classification_loss(const TaskClassifier<T>&, const BasicTensor<T>&,               \
                                                const std::vector<std::size_t>&, const BasicTensor<T>&,        \
                                                const std::vector<std::size_t>&);                              \
    template BasicTensor<T> domain_loss_labelled(const DomainClassifier<T>&, const BasicTensor<T>&,            \
                                                 const BasicTensor<T>&);                                       \
    template BasicTensor<T> domain_loss_unlabelled(const DomainClassifier<T>&, const BasicTensor<T>&,          \
                                                   const BasicTensor<T>&);                                     \
    template BasicTensor<T> orthogonality_loss(const BasicTensor<T>&, const BasicTensor<T>&);                  \
    template BasicTensor<T> paired_orthogonality_loss(const EmbeddingPair<T>&, const EmbeddingPair<T>&);       \
    template PseudoLabelResult<T> pseudo_label_loss(const BasicTensor<T>&, const BasicTensor<T>&, double);     \
    template StepLoss<T> compute_step_loss(const SheddModel<T>&, const StepInputs<T>&, const LossToggles&, double);

SHEDD_INSTANTIATE_LOSSES(float)
SHEDD_INSTANTIATE_LOSSES(double)
#undef SHEDD_INSTANTIATE_LOSSES

}  // namespace shedd
