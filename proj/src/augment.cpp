#include "shedd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace shedd {

namespace {

struct ImageDims {
    std::size_t c, h, w;
};

ImageDims dims_of(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("augment: expected an image [c,h,w], got " + shape_to_string(image.shape()));
    return {image.extent(0), image.extent(1), image.extent(2)};
}

// Remaps pixels: out(ch, y, x) = in(ch, src(y, x)).
template <class SourceIndex>
Tensor permute_pixels(const Tensor& image, std::size_t out_h, std::size_t out_w, SourceIndex src) {
    const auto d = dims_of(image);
    std::vector<float> out(d.c * out_h * out_w);
    const auto in = image.data();
    for (std::size_t ch = 0; ch < d.c; ++ch)
        for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto [sy, sx] = src(y, x);
                out[(ch * out_h + y) * out_w + x] = in[(ch * d.h + sy) * d.w + sx];
            }
    return Tensor::from_data({d.c, out_h, out_w}, std::move(out));
}

}  // namespace

void AugmentConfig::validate() const {
    if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("augment.probability must lie in [0, 1]");
    if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0)
        throw ConfigError("augment jitter ranges must be nonnegative");
    if (hue > 0.5) throw ConfigError("augment.hue must not exceed 0.5");
}

AugmentDecision sample_augment(const AugmentConfig& cfg, Rng& rng) {
    // Every coin is drawn even for disabled transforms so the stream layout
    // does not depend on the enable flags.
    AugmentDecision d;
    d.hflip = rng.bernoulli(cfg.probability) && cfg.hflip;
    d.vflip = rng.bernoulli(cfg.probability) && cfg.vflip;
    const bool rotate = rng.bernoulli(cfg.probability) && cfg.rotate;
    const auto quarter_turns = static_cast<int>(rng.below(4));
    d.rotation = rotate ? quarter_turns : 0;
    d.jitter = rng.bernoulli(cfg.probability) && cfg.color_jitter;
    JitterFactors f;
    f.brightness = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness);
    f.contrast = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
    f.saturation = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation);
    f.hue = rng.uniform(-cfg.hue, cfg.hue);
    if (d.jitter) d.factors = f;
    return d;
}

Tensor hflip(const Tensor& image) {
    const auto d = dims_of(image);
    return permute_pixels(image, d.h, d.w, [&](std::size_t y, std::size_t x) { return std::pair{y, d.w - 1 - x}; });
}

Tensor vflip(const Tensor& image) {
    const auto d = dims_of(image);
    return permute_pixels(image, d.h, d.w, [&](std::size_t y, std::size_t x) { return std::pair{d.h - 1 - y, x}; });
}

Tensor rot90(const Tensor& image, int k) {
    const auto d = dims_of(image);
    k = ((k % 4) + 4) % 4;
    if (k == 0) return image.detach();
    if (d.h != d.w) throw ShapeError("rot90: rotation requires a square image, got " + shape_to_string(image.shape()));
    const std::size_t n = d.h;
    switch (k) {
        case 1: return permute_pixels(image, n, n, [n](std::size_t y, std::size_t x) { return std::pair{x, n - 1 - y}; });
        case 2:
            return permute_pixels(image, n, n,
                                  [n](std::size_t y, std::size_t x) { return std::pair{n - 1 - y, n - 1 - x}; });
        default: return permute_pixels(image, n, n, [n](std::size_t y, std::size_t x) { return std::pair{n - 1 - x, y}; });
    }
}

Tensor color_jitter(const Tensor& image, const JitterFactors& f, ValueRange range) {
    const auto d = dims_of(image);
    const std::size_t plane = d.h * d.w;
    std::vector<double> v(image.data().begin(), image.data().end());

    for (auto& x : v) x *= f.brightness;

    for (std::size_t ch = 0; ch < d.c; ++ch) {
        double* p = v.data() + ch * plane;
        double mean = 0;
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
        mean /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i) p[i] = mean + (p[i] - mean) * f.contrast;
    }

    if (d.c == 3) {
        double* r = v.data();
        double* g = r + plane;
        double* b = g + plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const double gray = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
            r[i] = gray + (r[i] - gray) * f.saturation;
            g[i] = gray + (g[i] - gray) * f.saturation;
            b[i] = gray + (b[i] - gray) * f.saturation;
        }
        if (f.hue != 0.0) {
            // Rotate chroma in YIQ space.
            const double angle = 2.0 * std::numbers::pi * f.hue;
            const double cs = std::cos(angle), sn = std::sin(angle);
            for (std::size_t i = 0; i < plane; ++i) {
                const double y = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
                const double ci = 0.596 * r[i] - 0.274 * g[i] - 0.322 * b[i];
                const double cq = 0.211 * r[i] - 0.523 * g[i] + 0.312 * b[i];
                const double i2 = cs * ci - sn * cq;
                const double q2 = sn * ci + cs * cq;
                r[i] = y + 0.956 * i2 + 0.621 * q2;
                g[i] = y - 0.272 * i2 - 0.647 * q2;
                b[i] = y - 1.106 * i2 + 1.703 * q2;
            }
        }
    }

    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = std::clamp(static_cast<float>(v[i]), range.lo, range.hi);
    return Tensor::from_data(image.shape(), std::move(out));
}

Tensor apply_augment(const Tensor& image, const AugmentDecision& decision, ValueRange range) {
    const auto d = dims_of(image);
    if (decision.rotation % 4 != 0 && d.h != d.w)
        throw ShapeError("augment: rotation requires a square image, got " + shape_to_string(image.shape()));
    Tensor out = image.detach();
    if (decision.hflip) out = hflip(out);
    if (decision.vflip) out = vflip(out);
    if (decision.rotation % 4 != 0) out = rot90(out, decision.rotation);
    if (decision.jitter) out = color_jitter(out, decision.factors, range);
    return out;
}

Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& cfg, ValueRange range) {
    const auto d = dims_of(image);
    if (cfg.rotate && d.h != d.w)
        throw ShapeError("augment: rotation is enabled but the image is not square: " + shape_to_string(image.shape()));
    return apply_augment(image, sample_augment(cfg, rng), range);
}

Tensor augment_batch(const Tensor& batch, std::uint64_t seed, const AugmentConfig& cfg, ValueRange range) {
    if (batch.rank() != 4) throw ShapeError("augment_batch: expected [b,c,h,w]");
    const std::size_t n = batch.extent(0), per = batch.numel() / n;
    const Shape image_shape{batch.extent(1), batch.extent(2), batch.extent(3)};
    std::vector<float> out(batch.numel());
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> one(batch.data().begin() + static_cast<std::ptrdiff_t>(i * per),
                               batch.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
        Rng rng(derive_seed(seed, {i}));
        const auto aug = augment(Tensor::from_data(image_shape, std::move(one)), rng, cfg, range);
        std::copy(aug.data().begin(), aug.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return Tensor::from_data(batch.shape(), std::move(out));
}

}  // namespace shedd
