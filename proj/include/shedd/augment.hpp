#pragma once

#include <cstdint>

#include "shedd/rng.hpp"
#include "shedd/tensor.hpp"

namespace shedd {

/// Strong augmentation: each transform fires independently with
/// probability `probability`; jitter factors are drawn around 1.
struct AugmentConfig {
    double probability = 0.5;
    bool hflip = true;
    bool vflip = true;
    bool rotate = true;
    bool color_jitter = true;
    double brightness = 0.2;  // factor ~ U[1-r, 1+r]
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.1;  // shift ~ U[-r, r], fraction of the hue circle

    void validate() const;
};

struct ValueRange {
    float lo = 0.0f;
    float hi = 1.0f;
};

/// Jitter factors; identity by default.
struct JitterFactors {
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue = 0.0;
};

/// The random choices of one augmentation draw.
struct AugmentDecision {
    bool hflip = false;
    bool vflip = false;
    int rotation = 0;  // counter-clockwise quarter turns, 0..3
    bool jitter = false;
    JitterFactors factors;
};

AugmentDecision sample_augment(const AugmentConfig& cfg, Rng& rng);

/// Applies a decision to one image x[c,h,w]: hflip, vflip, rotation, then
/// jitter. Rotation requires h == w.
Tensor apply_augment(const Tensor& image, const AugmentDecision& decision, ValueRange range);

/// One random draw applied to x[c,h,w].
Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& cfg, ValueRange range);

/// Augments every sample of x[b,c,h,w]; sample i uses the stream
/// derived from (seed, i).
Tensor augment_batch(const Tensor& batch, std::uint64_t seed, const AugmentConfig& cfg, ValueRange range);

Tensor hflip(const Tensor& image);
Tensor vflip(const Tensor& image);
/// k counter-clockwise quarter turns (k taken mod 4).
Tensor rot90(const Tensor& image, int k);

/// brightness -> contrast -> saturation -> hue, then clamp to `range`.
/// Saturation and hue only act on 3-channel images.
Tensor color_jitter(const Tensor& image, const JitterFactors& factors, ValueRange range);

}  // namespace shedd
