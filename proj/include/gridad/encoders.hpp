#pragma once

#include <cstddef>

#include "gridad/layers.hpp"
#include "gridad/rng.hpp"

namespace gridad {

/// Per-pixel coordinates: 1x1 conv (C -> C/2), relu, 1x1 conv (C/2 -> C_l),
/// tanh. Purely pointwise across space.
template <typename T>
class LocalEncoder {
public:
    LocalEncoder(std::size_t channels, std::size_t coord_dims, Rng& rng);

    /// (N, C, H, W) -> (N, C_l, H, W), every component in (-1, 1).
    Var<T> operator()(const Var<T>& x);
    void collect(ParamList<T>& out);

    [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
    [[nodiscard]] std::size_t coord_dims() const noexcept { return coord_dims_; }

    Conv2d<T> hidden;
    Conv2d<T> out;

private:
    std::size_t channels_;
    std::size_t coord_dims_;
};

/// Per-image coordinate: global average pool, linear (C -> C/2), relu,
/// linear (C/2 -> C_g), tanh.
template <typename T>
class GlobalEncoder {
public:
    GlobalEncoder(std::size_t channels, std::size_t coord_dims, Rng& rng);

    /// (N, C, H, W) -> (N, C_g), every component in (-1, 1).
    Var<T> operator()(const Var<T>& x);
    void collect(ParamList<T>& out);

    [[nodiscard]] std::size_t coord_dims() const noexcept { return coord_dims_; }

    Linear<T> hidden;
    Linear<T> out;

private:
    std::size_t channels_;
    std::size_t coord_dims_;
};

struct JitterConfig {
    double fraction = 0.5;
    double scale = 0.05;
    bool enabled = true;
};

void validate(const JitterConfig& cfg);

/// Additive noise for a (N, D, H, W) coordinate field: each pixel is chosen
/// independently with probability `fraction`, and chosen pixels get
/// scale * N(0, 1) on every component.
template <typename T>
Tensor<T> jitter_offsets(const Shape& coord_shape, const JitterConfig& cfg, Rng& rng);

/// Training-time coordinate jitter followed by clamping to [-1, 1]. Identity
/// when not training, when disabled, or when the scale is zero.
template <typename T>
Var<T> jitter(const Var<T>& coords, const JitterConfig& cfg, Rng& rng, bool training);

}  // namespace gridad
