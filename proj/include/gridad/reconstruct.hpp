#pragma once

#include <cstddef>
#include <vector>

#include "gridad/layers.hpp"

namespace gridad {

/// The fusion network: a 1x1 entry projection to C channels followed by
/// residual blocks (3x3 conv, relu, 3x3 conv, identity skip, relu). Channel
/// count and spatial size are preserved through the blocks.
template <typename T>
class FusionNet {
public:
    FusionNet(std::size_t in_channels, std::size_t channels, std::size_t blocks, Rng& rng);

    Var<T> operator()(const Var<T>& x);
    void collect(ParamList<T>& out);

    [[nodiscard]] std::size_t in_channels() const noexcept { return in_channels_; }
    [[nodiscard]] std::size_t channels() const noexcept { return channels_; }

    struct Block {
        Conv2d<T> first;
        Conv2d<T> second;
    };
    Conv2d<T> entry;
    std::vector<Block> blocks;

private:
    std::size_t in_channels_;
    std::size_t channels_;
};

/// Concatenates the sampled representations along channels (local first) and
/// runs them through the fusion network.
template <typename T>
Var<T> fuse(FusionNet<T>& net, const std::vector<Var<T>>& representations);

struct RefineConfig {
    double lambda1 = 0.3;   // weight of the thresholded MSE term
    double lambda2 = 0.7;   // weight of the cosine term
    double threshold = 10;  // MSE threshold k
    bool enabled = true;
};

/// Per-pixel blend weights S for (N, C, H, W) inputs, returned as
/// (N, 1, H, W):
///   S = clamp(l1 * [mse(x, f) < k] + l2 * cos(x, f), 0, 1)
/// where mse and cos are taken over the channel vector at each pixel. A
/// zero-norm channel vector has cosine 0.
template <typename T>
Tensor<T> similarity_map(const Tensor<T>& x, const Tensor<T>& normal, const RefineConfig& cfg);

/// x_hat = S * x + (1 - S) * normal, pixelwise.
template <typename T>
Tensor<T> refine(const Tensor<T>& x, const Tensor<T>& normal, const Tensor<T>& similarity);

}  // namespace gridad
