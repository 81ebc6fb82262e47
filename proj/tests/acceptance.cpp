// Acceptance gate: one PASS/FAIL line per criterion.
//
//   shedd_acceptance            run every criterion
//   shedd_acceptance 2 3 9      run a subset
//
// Criteria 4-6 train the desk-scale benchmark for several configurations and
// dominate the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shedd/checkpoint.hpp"
#include "shedd/config.hpp"
#include "shedd/eval.hpp"
#include "shedd/experiment.hpp"
#include "shedd/kernels.hpp"
#include "shedd/losses.hpp"
#include "shedd/nn.hpp"
#include "shedd/ops.hpp"
#include "shedd/rng.hpp"
#include "shedd/trainer.hpp"
#include "test_util.hpp"

using namespace shedd;
namespace fs = std::filesystem;
using shedd::testing::weighted_sum;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path work_root() {
    static const fs::path root = [] {
        auto p = fs::temp_directory_path() / "shedd_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

// The desk-scale benchmark shared by criteria 4-8. Benchmark geometry and
// label budget are the library defaults; the encoder is narrower than the
// default so that one configuration (five seeds) fits the runtime budget.
ExperimentConfig desk_config() {
    ExperimentConfig cfg;
    cfg.model.block_channels = {8, 16, 32};
    cfg.model.embedding_dim = 64;
    cfg.train.epochs = 30;
    cfg.train.learning_rate = 1e-3;
    cfg.train.label_budget = 10;
    cfg.seeds = {1, 2, 3, 4, 5};
    return cfg;
}

// ---------------------------------------------------------------- 1

constexpr double kGradStep = 1e-3;
constexpr double kGradTol = 1e-3;

double grad_error(const std::function<Tensor64(const Tensor64&)>& loss, const Tensor64& x) {
    auto leaf = x.detach();
    leaf.set_requires_grad(true);
    loss(leaf).backward();
    const auto analytic = leaf.grad();
    const auto numeric = finite_diff_grad<double>(
        [&](const Tensor64& probe) {
            NoGradGuard guard;
            return loss(probe).item();
        },
        x, kGradStep);
    return max_gradient_error(analytic, numeric.values());
}

// Pushes entries out of [-margin, margin] so that kinks (relu, clamps) are
// farther than the finite-difference step.
Tensor64 away_from_zero(Tensor64 t, double margin = 0.05) {
    for (auto& v : t.mutable_data()) v += v >= 0 ? margin : -margin;
    return t;
}

Tensor64 positive(const Shape& shape, std::uint64_t seed) { return Tensor64::uniform(shape, 0.5, 2.0, seed); }

// Distinct entries at least 0.1 apart in random order: no ties for max.
Tensor64 separated(const Shape& shape, std::uint64_t seed) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = 0.1 * static_cast<double>(i) - 0.05 * static_cast<double>(n);
    Rng rng(seed);
    rng.shuffle(v);
    return Tensor64::from_data(shape, std::move(v));
}

using GradCase = std::function<double(std::uint64_t)>;

std::vector<std::pair<std::string, GradCase>> gradient_cases() {
    using T = Tensor64;
    auto u = [](const Shape& s, std::uint64_t seed) { return T::uniform(s, -1.0, 1.0, seed); };
    std::vector<std::pair<std::string, GradCase>> cases;
    auto def = [&](std::string name, GradCase c) { cases.emplace_back(std::move(name), std::move(c)); };

    def("matmul/a", [=](std::uint64_t s) {
        const auto b = u({4, 5}, s + 1);
        return grad_error([&](const T& a) { return weighted_sum(matmul(a, b)); }, u({3, 4}, s));
    });
    def("matmul/b", [=](std::uint64_t s) {
        const auto a = u({3, 4}, s + 1);
        return grad_error([&](const T& b) { return weighted_sum(matmul(a, b)); }, u({4, 5}, s));
    });
    def("transpose", [=](std::uint64_t s) {
        return grad_error([&](const T& a) { return weighted_sum(transpose(a)); }, u({3, 5}, s));
    });
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 0}, {2, 1}}) {
        def(fmt("conv2d/x s%zu p%zu", stride, pad), [=](std::uint64_t s) {
            const auto k = u({3, 2, 3, 3}, s + 1);
            return grad_error([&](const T& x) { return weighted_sum(conv2d(x, k, stride, pad)); }, u({2, 2, 5, 5}, s));
        });
        def(fmt("conv2d/kernel s%zu p%zu", stride, pad), [=](std::uint64_t s) {
            const auto x = u({2, 2, 5, 5}, s + 1);
            return grad_error([&](const T& k) { return weighted_sum(conv2d(x, k, stride, pad)); },
                              u({3, 2, 3, 3}, s));
        });
    }
    def("relu", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(relu(x)); }, away_from_zero(u({4, 6}, s)));
    });
    def("add", [=](std::uint64_t s) {
        const auto b = u({3, 4}, s + 1);
        return grad_error([&](const T& a) { return weighted_sum(add(a, b)); }, u({3, 4}, s));
    });
    def("sub", [=](std::uint64_t s) {
        const auto a = u({3, 4}, s + 1);
        return grad_error([&](const T& b) { return weighted_sum(sub(a, b)); }, u({3, 4}, s));
    });
    def("mul", [=](std::uint64_t s) {
        const auto b = u({3, 4}, s + 1);
        return grad_error([&](const T& a) { return weighted_sum(mul(a, b)); }, u({3, 4}, s));
    });
    def("div/num", [=](std::uint64_t s) {
        const auto b = positive({3, 4}, s + 1);
        return grad_error([&](const T& a) { return weighted_sum(div(a, b)); }, u({3, 4}, s));
    });
    def("div/den", [=](std::uint64_t s) {
        const auto a = u({3, 4}, s + 1);
        return grad_error([&](const T& b) { return weighted_sum(div(a, b)); }, positive({3, 4}, s));
    });
    def("scale", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(scale(x, -1.7)); }, u({3, 4}, s));
    });
    def("add_scalar", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(add_scalar(x, 0.3)); }, u({3, 4}, s));
    });
    def("log", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(log(x)); }, positive({3, 4}, s));
    });
    def("exp", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(exp(x)); }, u({3, 4}, s));
    });
    def("sqrt", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(sqrt(x)); }, positive({3, 4}, s));
    });
    def("sum", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return add(sum(x), weighted_sum(sum(x, 0))); }, u({3, 4}, s));
    });
    def("sum/axis1", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(sum(x, 1)); }, u({3, 4}, s));
    });
    def("mean", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return add(mean(x), weighted_sum(mean(x, 1))); }, u({3, 4}, s));
    });
    def("max", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return add(max(x).values, weighted_sum(max(x, 1).values)); },
                          separated({3, 4}, s));
    });
    def("softmax", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(softmax(x)); }, u({3, 5}, s));
    });
    def("add_row_bias", [=](std::uint64_t s) {
        const auto x = u({3, 4}, s + 1);
        return grad_error([&](const T& b) { return weighted_sum(add_row_bias(x, b)); }, u({4}, s));
    });
    def("add_channel_bias", [=](std::uint64_t s) {
        const auto x = u({2, 3, 2, 2}, s + 1);
        return grad_error([&](const T& b) { return weighted_sum(add_channel_bias(x, b)); }, u({3}, s));
    });
    def("avg_pool2d", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(avg_pool2d(x, 2)); }, u({2, 2, 5, 4}, s));
    });
    def("global_avg_pool", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(global_avg_pool(x)); }, u({2, 3, 3, 2}, s));
    });
    def("slice_columns", [=](std::uint64_t s) {
        return grad_error([&](const T& x) { return weighted_sum(slice_columns(x, 1, 4)); }, u({3, 5}, s));
    });
    def("concat_columns", [=](std::uint64_t s) {
        const auto b = u({3, 2}, s + 1);
        return grad_error([&](const T& a) { return weighted_sum(concat_columns(b, a)); }, u({3, 4}, s));
    });
    def("pick", [=](std::uint64_t s) {
        const std::vector<std::size_t> idx{2, 0, 3};
        return grad_error([&](const T& x) { return weighted_sum(pick(x, idx)); }, u({3, 4}, s));
    });
    def("row_cosine", [=](std::uint64_t s) {
        const auto b = u({4, 5}, s + 1);
        return grad_error([&](const T& a) { return weighted_sum(row_cosine(a, b, 1e-8)); }, u({4, 5}, s));
    });

    def("loss/cross_entropy", [=](std::uint64_t s) {
        const std::vector<std::size_t> y{0, 2, 1, 2};
        return grad_error([&](const T& z) { return cross_entropy(softmax(z), y); }, u({4, 3}, s));
    });
    def("loss/cross_entropy(domain)", [=](std::uint64_t s) {
        return grad_error([&](const T& z) { return cross_entropy(softmax(z), std::size_t{1}); }, u({4, 2}, s));
    });
    def("loss/classification", [=](std::uint64_t s) {
        const SoftmaxClassifier<double> clf(4, 3, s + 7);
        const auto zt = u({3, 4}, s + 1);
        return grad_error(
            [&](const T& zs) { return classification_loss(clf, zs, {0, 1, 2}, zt, {2, 2, 0}); }, u({3, 4}, s));
    });
    def("loss/domain(S,T)", [=](std::uint64_t s) {
        const SoftmaxClassifier<double> clf(4, 2, s + 7);
        const auto zs = u({3, 4}, s + 1);
        return grad_error([&](const T& zt) { return domain_loss_labelled(clf, zs, zt); }, u({3, 4}, s));
    });
    def("loss/domain(U,U^)", [=](std::uint64_t s) {
        const SoftmaxClassifier<double> clf(4, 2, s + 7);
        const auto zu = u({3, 4}, s + 1);
        return grad_error([&](const T& zh) { return domain_loss_unlabelled(clf, zu, zh); }, u({3, 4}, s));
    });
    def("loss/orthogonality", [=](std::uint64_t s) {
        const auto spe = u({4, 5}, s + 1);
        return grad_error([&](const T& inv) { return orthogonality_loss(inv, spe); }, u({4, 5}, s));
    });
    def("loss/paired_orthogonality", [=](std::uint64_t s) {
        const auto a_spe = u({3, 4}, s + 1), b_inv = u({3, 4}, s + 2), b_spe = u({3, 4}, s + 3);
        return grad_error(
            [&](const T& a_inv) {
                return paired_orthogonality_loss(EmbeddingPair<double>{a_inv, a_spe}, EmbeddingPair<double>{b_inv, b_spe});
            },
            u({3, 4}, s));
    });
    def("loss/pseudo_label", [=](std::uint64_t s) {
        const auto pu = T::from_data({3, 3}, {0.98, 0.01, 0.01, 0.2, 0.3, 0.5, 0.005, 0.99, 0.005});
        return grad_error([&](const T& z) { return pseudo_label_loss(pu, softmax(z), 0.95).loss; }, u({3, 3}, s));
    });
    // Whole step objective with respect to head parameters (downstream of
    // every relu, so the finite differences stay smooth).
    for (const char* which : {"task_classifier.weight", "domain_classifier.weight", "target_encoder.head.weight"}) {
        def(std::string("loss/step total wrt ") + which, [=](std::uint64_t s) {
            ArchitectureConfig arch;
            arch.block_channels = {3};
            arch.embedding_dim = 6;
            SheddModel<double> model(arch, {2, 4, 4}, {1, 4, 4}, 3, s);
            StepInputs<double> in{u({3, 2, 4, 4}, s + 1), {0, 1, 2}, u({3, 1, 4, 4}, s + 2), {2, 1, 0},
                                  u({3, 1, 4, 4}, s + 3), u({3, 1, 4, 4}, s + 4)};
            auto params = model.parameters();
            auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.name == which; });
            auto param = it->tensor;
            const auto original = param.detach();
            auto loss = [&](const T& value) {
                std::ranges::copy(value.data(), param.mutable_data().begin());
                return compute_step_loss(model, in, LossToggles::all(), 0.0).total;
            };
            param.set_requires_grad(true);
            for (auto& p : params) p.tensor.set_requires_grad(true);
            compute_step_loss(model, in, LossToggles::all(), 0.0).total.backward();
            const auto analytic = param.grad();
            const auto numeric = finite_diff_grad<double>(
                [&](const T& probe) {
                    NoGradGuard guard;
                    return loss(probe).item();
                },
                original, kGradStep);
            std::ranges::copy(original.data(), param.mutable_data().begin());
            return max_gradient_error(analytic, numeric.values());
        });
    }
    return cases;
}

Verdict criterion_gradients() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string worst_name;
    std::size_t checks = 0;
    for (const auto& [name, run] : gradient_cases()) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const double e = run(seed * 1000);
            ++checks;
            if (!(e <= worst)) {
                worst = e;
                worst_name = name;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst < kGradTol && secs < 60.0,
            fmt("%zu checks (5 seeds each), max rel err %.2e at %s (< %.0e), %.1f s (< 60 s)", checks, worst,
                worst_name.c_str(), kGradTol, secs)};
}

// ---------------------------------------------------------------- 2

Verdict criterion_loss_values() {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };

    const std::vector<std::size_t> labels{0, 3, 5, 7};
    const double ce32 = cross_entropy(Tensor::constant({4, 8}, 0.125f), labels).item();
    const double ce64 = cross_entropy(Tensor64::constant({4, 8}, 0.125), labels).item();
    expect(std::abs(ce32 - std::log(8.0)) <= 1e-5 && std::abs(ce64 - std::log(8.0)) <= 1e-5, "ce(uniform, C=8)");

    const auto e1 = Tensor64::from_data({1, 2}, {1, 0});
    const double par = orthogonality_loss(e1, e1).item();
    const double ort = orthogonality_loss(e1, Tensor64::from_data({1, 2}, {0, 1})).item();
    const double anti = orthogonality_loss(e1, Tensor64::from_data({1, 2}, {-1, 0})).item();
    expect(std::abs(par - 1) <= 1e-6 && std::abs(ort) <= 1e-6 && std::abs(anti + 1) <= 1e-6, "orth {1,0,-1}");

    const auto pu = Tensor64::from_data({2, 2}, {0.96, 0.04, 0.60, 0.40});
    const auto puh = Tensor64::from_data({2, 2}, {0.5, 0.5, 0.9, 0.1});
    const double pl = pseudo_label_loss(pu, puh, 0.95).loss.item();
    expect(std::abs(pl - 0.34657) <= 1e-5, "pseudo-label hand case");

    std::size_t mismatches = 0;
    const auto probs = softmax(Tensor64::uniform({1000, 6}, -4, 4, 17));
    for (double tau : {0.0, 0.5, 0.8, 0.95}) {
        const auto r = pseudo_label_loss(probs, probs, tau);
        std::size_t retained = 0;
        for (std::size_t i = 0; i < 1000; ++i) {
            double best = -1;
            for (std::size_t j = 0; j < 6; ++j) best = std::max(best, probs.at(i * 6 + j));
            const bool keep = best > tau;
            retained += keep;
            mismatches += r.mask[i] != keep;
        }
        mismatches += r.retained_count != retained;
    }
    expect(mismatches == 0, "mask brute force");

    return {failures.empty(), fmt("ln8 err %.1e, orth (%.7f, %.1e, %.7f), pl %.6f, mask mismatches %zu",
                                  std::abs(ce32 - std::log(8.0)), par, ort, anti, pl, mismatches)};
}

// ---------------------------------------------------------------- 3

// Independent double-precision evaluation of the step objective for an
// encoder with one conv block (kernel 3, padding 1, 2x2 pool) on 2x2 images.
struct ToyOracle {
    std::map<std::string, std::vector<double>> p;

    std::vector<double> embed(const std::string& enc, const std::vector<float>& x, std::size_t n,
                              std::size_t cin) const {
        const auto& k = p.at(enc + ".block0.kernel");
        const auto& kb = p.at(enc + ".block0.bias");
        const auto& w = p.at(enc + ".head.weight");
        const auto& hb = p.at(enc + ".head.bias");
        const std::size_t cout = kb.size(), emb = hb.size();
        std::vector<double> z(n * emb);
        for (std::size_t s = 0; s < n; ++s) {
            std::vector<double> pooled(cout, 0.0);
            for (std::size_t o = 0; o < cout; ++o) {
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        double acc = kb[o];
                        for (std::size_t c = 0; c < cin; ++c)
                            for (int a = 0; a < 3; ++a)
                                for (int b = 0; b < 3; ++b) {
                                    const int yy = i + a - 1, xx = j + b - 1;
                                    if (yy < 0 || yy > 1 || xx < 0 || xx > 1) continue;
                                    acc += k[((o * cin + c) * 3 + a) * 3 + b] * x[((s * cin + c) * 2 + yy) * 2 + xx];
                                }
                        pooled[o] += std::max(acc, 0.0) / 4.0;
                    }
            }
            for (std::size_t r = 0; r < emb; ++r) {
                double v = hb[r];
                for (std::size_t o = 0; o < cout; ++o) v += w[r * cout + o] * pooled[o];
                z[s * emb + r] = v;
            }
        }
        return z;
    }

    std::vector<double> probs(const std::string& head, const std::vector<double>& z, std::size_t n, std::size_t off,
                              std::size_t emb) const {
        const auto& w = p.at(head + ".weight");
        const auto& b = p.at(head + ".bias");
        const std::size_t classes = b.size(), d = emb / 2;
        std::vector<double> out(n * classes);
        for (std::size_t s = 0; s < n; ++s) {
            double mx = -1e300;
            std::vector<double> logit(classes);
            for (std::size_t c = 0; c < classes; ++c) {
                logit[c] = b[c];
                for (std::size_t j = 0; j < d; ++j) logit[c] += w[c * d + j] * z[s * emb + off + j];
                mx = std::max(mx, logit[c]);
            }
            double total = 0;
            for (std::size_t c = 0; c < classes; ++c) total += std::exp(logit[c] - mx);
            for (std::size_t c = 0; c < classes; ++c) out[s * classes + c] = std::exp(logit[c] - mx) / total;
        }
        return out;
    }
};

double ce_rows(const std::vector<double>& pr, std::size_t classes, const std::vector<std::size_t>& y) {
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) total -= std::log(std::max(pr[i * classes + y[i]], 1e-12));
    return total / static_cast<double>(y.size());
}

double mean_cosine(const std::vector<double>& z, std::size_t n, std::size_t emb) {
    const std::size_t d = emb / 2;
    double total = 0;
    for (std::size_t s = 0; s < n; ++s) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double a = z[s * emb + j], b = z[s * emb + d + j];
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        total += dot / (std::sqrt(na) * std::sqrt(nb) + 1e-8);
    }
    return total / static_cast<double>(n);
}

Verdict criterion_step_oracle() {
    constexpr std::size_t n = 2, classes = 3, emb = 4;
    ArchitectureConfig arch;
    arch.block_channels = {2};
    arch.embedding_dim = emb;
    const ModalityGeometry gs{2, 2, 2}, gt{1, 2, 2};

    auto fresh_model = [&] {
        SheddModel<float> model(arch, gs, gt, classes, 3);
        std::size_t k = 0;
        for (auto& param : model.parameters())
            for (auto& v : param.tensor.mutable_data())
                v = static_cast<float>(0.6 * std::sin(0.9 * static_cast<double>(k++) + 0.4));
        return model;
    };
    const auto x_s = Tensor::uniform({n, 2, 2, 2}, -1, 1, 11);
    const auto x_t = Tensor::uniform({n, 1, 2, 2}, -1, 1, 12);
    const auto x_u = Tensor::uniform({n, 1, 2, 2}, -1, 1, 13);
    const std::vector<std::size_t> y_s{0, 2}, y_t{1, 0};

    ToyOracle oracle;
    {
        const auto model = fresh_model();
        for (const auto& param : model.parameters())
            oracle.p[param.name] = std::vector<double>(param.tensor.data().begin(), param.tensor.data().end());
    }
    // The augmented view is a horizontal flip of every unlabelled image.
    std::vector<float> x_uh(x_u.data().begin(), x_u.data().end());
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t r = 0; r < 2; ++r) std::swap(x_uh[s * 4 + r * 2], x_uh[s * 4 + r * 2 + 1]);

    const auto zs = oracle.embed("source_encoder", x_s.values(), n, 2);
    const auto zt = oracle.embed("target_encoder", x_t.values(), n, 1);
    const auto zu = oracle.embed("target_encoder", x_u.values(), n, 1);
    const auto zh = oracle.embed("target_encoder", x_uh, n, 1);
    const auto task = [&](const auto& z) { return oracle.probs("task_classifier", z, n, 0, emb); };
    const auto dom = [&](const auto& z) { return oracle.probs("domain_classifier", z, n, emb / 2, emb); };

    LossBundle want;
    want.cl_st = 0.5 * (ce_rows(task(zs), classes, y_s) + ce_rows(task(zt), classes, y_t));
    want.dom_st = 0.5 * (ce_rows(dom(zs), 2, {0, 0}) + ce_rows(dom(zt), 2, {1, 1}));
    want.dom_uu = 0.5 * (ce_rows(dom(zu), 2, {1, 1}) + ce_rows(dom(zh), 2, {1, 1}));
    want.orth_st = 0.5 * (mean_cosine(zs, n, emb) + mean_cosine(zt, n, emb));
    want.orth_uu = 0.5 * (mean_cosine(zu, n, emb) + mean_cosine(zh, n, emb));
    // Threshold halfway between the two confidences keeps exactly one row.
    const auto pu = task(zu), ph = task(zh);
    double conf[n];
    std::size_t arg[n];
    for (std::size_t s = 0; s < n; ++s) {
        arg[s] = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (pu[s * classes + c] > pu[s * classes + arg[s]]) arg[s] = c;
        conf[s] = pu[s * classes + arg[s]];
    }
    const double tau = 0.5 * (conf[0] + conf[1]);
    for (std::size_t s = 0; s < n; ++s)
        if (conf[s] > tau) want.pl_u -= std::log(std::max(ph[s * classes + arg[s]], 1e-12)) / static_cast<double>(n);
    want.total = want.component_sum();

    StepBatch batch{x_s, y_s, x_t, y_t, x_u};
    StepSettings settings;
    settings.tau = tau;
    settings.augment = AugmentConfig{1.0, true, false, false, false};
    settings.value_range = {-1.0f, 1.0f};

    auto model = fresh_model();
    AdamW adam(model.parameters(), {});
    Ema ema(model.parameters(), 0.95);
    const auto got = train_step(model, adam, ema, batch, settings);
    const double err = std::max({std::abs(got.total - want.total), std::abs(got.cl_st - want.cl_st),
                                 std::abs(got.dom_st - want.dom_st), std::abs(got.dom_uu - want.dom_uu),
                                 std::abs(got.orth_st - want.orth_st), std::abs(got.orth_uu - want.orth_uu),
                                 std::abs(got.pl_u - want.pl_u)});

    double sum_err = 0;
    for (unsigned mask = 0; mask < 64; ++mask) {
        auto m = fresh_model();
        AdamW opt(m.parameters(), {});
        Ema shadow(m.parameters(), 0.95);
        settings.toggles = LossToggles::from_mask(mask);
        const auto b = train_step(m, opt, shadow, batch, settings);
        sum_err = std::max(sum_err, std::abs(b.total - b.component_sum()));
    }
    return {err <= 1e-5 && sum_err <= 1e-6 && got.retained_count == 1,
            fmt("total %.6f vs hand %.6f (max term err %.1e <= 1e-5, retained %zu of 2); "
                "64 toggle sets: |total - sum| <= %.1e (<= 1e-6)",
                got.total, want.total, err, got.retained_count, sum_err)};
}

// ---------------------------------------------------------------- 4-6

struct RunSet {
    std::vector<double> f1;
    std::vector<std::vector<EpochLog>> logs;
    double seconds = 0;
    MeanStd stats() const { return f1.size() >= 2 ? aggregate(f1) : MeanStd{f1.empty() ? 0 : f1[0], 0}; }
};

const DatasetPair& desk_data() {
    static const DatasetPair data = obtain_datasets(desk_config());
    return data;
}

RunSet train_config(const std::string& row, std::size_t budget) {
    auto cfg = apply_ablation(desk_config(), row);
    cfg.train.label_budget = budget;
    const auto dir = work_root() / fmt("%s_nt%zu", cfg.label.c_str(), budget);
    RunSet out;
    const auto t0 = Clock::now();
    const auto reports = train_seeds(cfg, desk_data(), cfg.seeds, dir);
    out.seconds = seconds_since(t0);
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out.f1.push_back(100.0 * reports[i].weighted_f1);
        out.logs.push_back(read_log_csv(dir / fmt("seed_%llu", static_cast<unsigned long long>(cfg.seeds[i])) / "log.csv"));
    }
    const auto s = out.stats();
    std::printf("    trained %-5s n_t=%-2zu  F1 %.2f +- %.2f  (%.0f s)\n", row.c_str(), budget, s.mean, s.std, out.seconds);
    std::fflush(stdout);
    return out;
}

std::map<std::string, RunSet>& ablation_runs() {
    static std::map<std::string, RunSet> runs;
    return runs;
}

const RunSet& run_for(const std::string& row, std::size_t budget) {
    const auto key = row + "/" + std::to_string(budget);
    auto& runs = ablation_runs();
    if (!runs.contains(key)) runs.emplace(key, train_config(row, budget));
    return runs.at(key);
}

Verdict criterion_ablation_trend() {
    const auto& full = run_for("full", 10);
    const auto& a4 = run_for("Abla4", 10);
    const auto& a3 = run_for("Abla3", 10);
    const auto& a1 = run_for("Abla1", 10);
    const auto f = full.stats(), s4 = a4.stats(), s3 = a3.stats(), s1 = a1.stats();

    std::vector<std::string> notes;
    bool ok = true;
    auto compare = [&](const char* name, const MeanStd& other) {
        if (f.mean >= other.mean) return;
        const double pooled = std::sqrt(0.5 * (f.std * f.std + other.std * other.std));
        notes.push_back(fmt("inversion vs %s by %.2f (1 std = %.2f)", name, other.mean - f.mean, pooled));
        if (other.mean - f.mean > pooled) ok = false;
    };
    compare("Abla4", s4);
    compare("Abla3", s3);
    const double gain = f.mean - s1.mean;
    ok = ok && gain >= 2.0;
    const double slowest = std::max({full.seconds, a4.seconds, a3.seconds, a1.seconds});
    ok = ok && slowest < 600.0;

    std::string detail = fmt("full %.2f+-%.2f, Abla4 %.2f+-%.2f, Abla3 %.2f+-%.2f, Abla1 %.2f+-%.2f; "
                             "full-Abla1 = %+.2f (>= 2.0); slowest config %.0f s (< 600 s)",
                             f.mean, f.std, s4.mean, s4.std, s3.mean, s3.std, s1.mean, s1.std, gain, slowest);
    for (const auto& n : notes) detail += "; " + n;
    return {ok, detail};
}

Verdict criterion_budget_monotone() {
    const std::vector<std::size_t> budgets{5, 10, 20, 40};
    std::vector<MeanStd> stats;
    for (auto b : budgets) stats.push_back(run_for("full", b).stats());
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        detail += fmt("%s%zu: %.2f+-%.2f", i ? ", " : "", budgets[i], stats[i].mean, stats[i].std);
        if (i == 0) continue;
        const double drop = stats[i - 1].mean - stats[i].mean;
        const double pooled = std::sqrt(0.5 * (stats[i].std * stats[i].std + stats[i - 1].std * stats[i - 1].std));
        if (drop > 0) {
            detail += fmt(" (drop %.2f vs pooled std %.2f)", drop, pooled);
            if (drop > pooled) ok = false;
        }
    }
    return {ok, detail};
}

Verdict criterion_pseudo_label_dynamics() {
    const auto& full = run_for("full", 10);
    const std::size_t epochs = full.logs.front().size();
    std::vector<double> mean(epochs, 0.0);
    for (const auto& log : full.logs)
        for (std::size_t e = 0; e < epochs; ++e) mean[e] += log[e].retained_fraction / static_cast<double>(full.logs.size());

    constexpr std::size_t window = 5;
    std::vector<double> smooth;
    for (std::size_t e = window; e <= epochs; ++e) {
        double s = 0;
        for (std::size_t k = e - window; k < e; ++k) s += mean[k];
        smooth.push_back(s / window);
    }
    std::size_t dips = 0;
    double worst = 0;
    for (std::size_t i = 1; i < smooth.size(); ++i)
        if (smooth[i] < smooth[i - 1]) {
            ++dips;
            worst = std::max(worst, smooth[i - 1] - smooth[i]);
        }
    double first_max = 0;
    for (const auto& log : full.logs) first_max = std::max(first_max, log.front().retained_fraction);
    return {dips == 0 && first_max < 0.5,
            fmt("seed-mean retained fraction: epoch 1 %.4f (max over seeds %.4f < 0.5), epoch %zu %.4f; "
                "5-epoch moving average decreases %zu times (largest %.4f)",
                mean.front(), first_max, epochs, mean.back(), dips, worst)};
}

// ---------------------------------------------------------------- 7-8

int run_cli(const std::string& args) {
    const std::string cmd = "SHEDD_THREADS=1 \"" SHEDD_CLI_PATH "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

ExperimentConfig short_config() {
    auto cfg = desk_config();
    cfg.train.epochs = 3;
    cfg.seeds = {7};
    return cfg;
}

fs::path determinism_run(const std::string& name) {
    const auto cfg_path = work_root() / "short.json";
    if (!fs::exists(cfg_path)) std::ofstream(cfg_path) << config_to_json(short_config()).dump(2);
    const auto out = work_root() / name;
    if (run_cli("train --config " + cfg_path.string() + " --seeds 7 --force --out " + out.string()) != 0)
        throw std::runtime_error("cli train failed for " + name);
    return out / "seed_7";
}

Verdict criterion_determinism() {
    const auto a = determinism_run("det_a");
    const auto b = determinism_run("det_b");
    std::size_t files = 0, differing = 0;
    std::string first_diff;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a);
        ++files;
        if (slurp(entry.path()) != slurp(b / rel)) {
            if (differing++ == 0) first_diff = rel.string();
        }
    }
    std::size_t files_b = 0;
    for (const auto& entry : fs::recursive_directory_iterator(b)) files_b += entry.is_regular_file();
    const bool has_log = fs::exists(a / "log.csv") && fs::exists(a / "checkpoints" / "full" / "index.json");
    return {has_log && differing == 0 && files == files_b,
            fmt("%zu files (log.csv, metrics, full and inference checkpoints) compared byte-for-byte: %zu differ%s",
                files, differing, first_diff.empty() ? "" : (" (first: " + first_diff + ")").c_str())};
}

Verdict criterion_inference_isolation() {
    const auto run_dir = fs::exists(work_root() / "det_a" / "seed_7") ? work_root() / "det_a" / "seed_7"
                                                                      : determinism_run("det_a");
    const auto full = load_checkpoint(run_dir / "checkpoints" / "full");
    auto pruned = full;
    pruned.remove_prefix(kSourceEncoderPrefix);
    pruned.remove_prefix(kDomainClassifierPrefix);
    pruned.optimizer_state.clear();
    const auto pruned_dir = work_root() / "pruned_checkpoint";
    fs::remove_all(pruned_dir);
    save_checkpoint(pruned_dir, pruned);
    const auto reloaded = load_checkpoint(pruned_dir);

    auto bench = short_config().benchmark;
    bench.target.samples_per_class = 1000 / bench.num_classes + 1;
    bench.seed += 1;
    const auto target = generate_synthetic_benchmark(bench).second;
    std::vector<std::size_t> idx(1000);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto x = target.gather(idx);

    std::size_t changed = 0;
    std::set<std::size_t> classes_seen;
    for (bool use_ema : {true, false}) {
        const auto a = load_inference_model(full, use_ema);
        const auto b = load_inference_model(reloaded, use_ema);
        const auto pa = infer_batched(a.target_encoder, a.task_classifier, x);
        const auto pb = infer_batched(b.target_encoder, b.task_classifier, x);
        for (std::size_t i = 0; i < idx.size(); ++i) changed += pa[i] != pb[i];
        classes_seen.insert(pa.begin(), pa.end());
    }
    bool source_gone = true;
    for (const auto& e : reloaded.parameters)
        if (e.name.starts_with(kSourceEncoderPrefix) || e.name.starts_with(kDomainClassifierPrefix)) source_gone = false;
    return {changed == 0 && source_gone,
            fmt("1000 samples x {EMA, raw} weights: %zu predictions changed after deleting %zu source-encoder and "
                "domain-classifier tensors (%zu distinct classes predicted)",
                changed, full.parameters.size() - reloaded.parameters.size(), classes_seen.size())};
}

// ---------------------------------------------------------------- 9-10

Verdict criterion_weighted_f1() {
    Rng rng(2025);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t classes = 2 + rng.below(9);
        const std::size_t n = 1 + rng.below(300);
        std::vector<std::size_t> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = rng.below(classes);
            pred[i] = rng.bernoulli(0.5) ? truth[i] : rng.below(classes);
        }
        // Counts from the raw pairs; F1 = 2TP / (2TP + FP + FN).
        double weighted = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                tp += truth[i] == c && pred[i] == c;
                fp += truth[i] != c && pred[i] == c;
                fn += truth[i] == c && pred[i] != c;
            }
            const double f1 = tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
            weighted += static_cast<double>(tp + fn) * f1;
        }
        const double expected = weighted / static_cast<double>(n);
        mismatches += weighted_f1(truth, pred, classes).weighted_f1 != expected;
    }
    return {mismatches == 0, fmt("100 random cases, C in 2..10: %zu mismatches (exact comparison)", mismatches)};
}

Verdict criterion_ema() {
    double worst = 0;
    for (int k : {1, 10, 100}) {
        auto w = Tensor::from_data({3}, {0.25f, -1.0f, 2.0f});
        const ParameterList<float> params{{"w", w}};
        const std::vector<double> start{0.25, -1.0, 2.0}, theta{1.5, 0.5, -0.75};
        Ema ema(params, 0.95);
        for (std::size_t i = 0; i < 3; ++i) w.mutable_data()[i] = static_cast<float>(theta[i]);
        for (int step = 0; step < k; ++step) ema.update(params);
        const double mk = std::pow(0.95, k);
        for (std::size_t i = 0; i < 3; ++i)
            worst = std::max(worst, std::abs(ema.shadow()[0][i] - (mk * start[i] + (1 - mk) * theta[i])));
    }
    return {worst <= 1e-6, fmt("k in {1,10,100}, momentum 0.95: max |shadow - closed form| = %.2e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    kernels::set_num_threads(1);
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient oracle suite", criterion_gradients},
        {"loss value oracles", criterion_loss_values},
        {"training step oracle", criterion_step_oracle},
        {"ablation trend (full vs Abla1/3/4)", criterion_ablation_trend},
        {"label-budget monotonicity", criterion_budget_monotone},
        {"pseudo-label dynamics", criterion_pseudo_label_dynamics},
        {"determinism", criterion_determinism},
        {"inference isolation", criterion_inference_isolation},
        {"weighted F1 oracle", criterion_weighted_f1},
        {"EMA closed form", criterion_ema},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const std::size_t id = i + 1;
        if (!selected.empty() && !selected.contains(id)) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("[%s] %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
