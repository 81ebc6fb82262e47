#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "shedd/model.hpp"
#include "shedd/tensor.hpp"

namespace shedd {

/// Denominator guard of the cosine similarity.
inline constexpr double kCosineEps = 1e-8;

/// Which of the six loss terms take part in the total.
struct LossToggles {
    bool cl_st = true;    // classification on S and T
    bool orth_st = true;  // orthogonality on S and T
    bool dom_st = true;   // domain classification on S and T
    bool orth_uu = true;  // orthogonality on U and augmented U
    bool dom_uu = true;   // domain classification on U and augmented U
    bool pl_u = true;     // pseudo-label consistency on augmented U

    static LossToggles all() { return {}; }
    static LossToggles none() { return {false, false, false, false, false, false}; }
    /// Bit i set <=> i-th toggle (in declaration order) on.
    static LossToggles from_mask(unsigned mask);
    unsigned mask() const;
    bool any_unlabelled() const { return orth_uu || dom_uu || pl_u; }

    bool operator==(const LossToggles&) const = default;
};

/// Scalar values of every loss term for one step (disabled terms are 0).
struct LossBundle {
    double cl_st = 0;
    double dom_st = 0;
    double dom_uu = 0;
    double orth_st = 0;
    double orth_uu = 0;
    double pl_u = 0;
    double total = 0;
    std::size_t retained_count = 0;  // pseudo-labels passing the threshold
    std::size_t unlabelled_count = 0;

    double component_sum() const { return cl_st + dom_st + dom_uu + orth_st + orth_uu + pl_u; }
};

/// Mean over rows of -log(probs[i, labels[i]]) (log clamped at 1e-12).
template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, const std::vector<std::size_t>& labels);

/// Cross-entropy against one class shared by every row (domain labels).
template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, std::size_t label);

/// 1/2 [CE(f(z_inv_s), y_s) + CE(f(z_inv_t), y_t)].
template <class T>
BasicTensor<T> classification_loss(const TaskClassifier<T>& clf, const BasicTensor<T>& z_inv_s,
                                   const std::vector<std::size_t>& y_s, const BasicTensor<T>& z_inv_t,
                                   const std::vector<std::size_t>& y_t);

/// 1/2 [CE(f_dom(z_spe_s), source) + CE(f_dom(z_spe_t), target)].
template <class T>
BasicTensor<T> domain_loss_labelled(const DomainClassifier<T>& clf, const BasicTensor<T>& z_spe_s,
                                    const BasicTensor<T>& z_spe_t);

/// 1/2 [CE(f_dom(z_spe_u), target) + CE(f_dom(z_spe_uhat), target)].
template <class T>
BasicTensor<T> domain_loss_unlabelled(const DomainClassifier<T>& clf, const BasicTensor<T>& z_spe_u,
                                      const BasicTensor<T>& z_spe_uhat);

/// Batch mean of <z_inv, z_spe> / (|z_inv| |z_spe| + eps).
template <class T>
BasicTensor<T> orthogonality_loss(const BasicTensor<T>& z_inv, const BasicTensor<T>& z_spe);

/// 1/2 [orthogonality(a) + orthogonality(b)] over two datasets.
template <class T>
BasicTensor<T> paired_orthogonality_loss(const EmbeddingPair<T>& a, const EmbeddingPair<T>& b);

template <class T>
struct PseudoLabelResult {
    BasicTensor<T> loss;
    std::vector<std::size_t> labels;  // argmax of probs_u
    std::vector<bool> mask;           // max(probs_u) > tau
    std::size_t retained_count = 0;
};

/// (1/b) sum_i m_i CE(probs_uhat[i], argmax probs_u[i]) with
/// m_i = [max probs_u[i] > tau]. `probs_u` must not carry a graph.
/// When no row is retained the loss is a constant 0 with no graph.
template <class T>
PseudoLabelResult<T> pseudo_label_loss(const BasicTensor<T>& probs_u, const BasicTensor<T>& probs_uhat, double tau);

/// Loss values and the summed graph for one training step.
template <class T>
struct StepLoss {
    BasicTensor<T> total;
    LossBundle bundle;
};

/// Inputs of one step; x_uhat is the augmented view of x_u.
template <class T>
struct StepInputs {
    BasicTensor<T> x_s;
    std::vector<std::size_t> y_s;
    BasicTensor<T> x_t;
    std::vector<std::size_t> y_t;
    BasicTensor<T> x_u;
    BasicTensor<T> x_uhat;
};

/// Forward passes and the six loss terms of one step; only enabled terms
/// are computed and summed (unweighted). The pseudo-label source
/// f(z_inv_u) is evaluated without a graph.
template <class T>
StepLoss<T> compute_step_loss(const SheddModel<T>& model, const StepInputs<T>& in, const LossToggles& toggles,
                              double tau);

}  // namespace shedd
