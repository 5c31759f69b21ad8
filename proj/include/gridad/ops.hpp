#pragma once

#include <cstddef>
#include <vector>

#include "gridad/autodiff.hpp"
#include "gridad/tensor.hpp"

// Differentiable kernels. Feature maps are batched as (N, C, H, W); a single
// feature map is the N = 1 case. Every op checks shapes and throws
// ConfigError on mismatch.
namespace gridad::ops {

/// 2-D convolution with "same" zero padding. weight (C_out, C_in, k, k) with
/// k in {1, 3}; bias (C_out).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

/// Row-wise affine map: input (N, in), weight (out, in), bias (out).
template <typename T>
Var<T> affine(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> tanh(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);

/// (N, C, H, W) -> (N, C) spatial mean.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Concatenation along the channel axis of (N, C_i, H, W) maps, in order.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// (N, C, H, W) -> (N*H*W, C): one row per pixel.
template <typename T>
Var<T> to_rows(const Var<T>& x);
/// Inverse of to_rows.
template <typename T>
Var<T> from_rows(const Var<T>& rows, std::size_t n, std::size_t h, std::size_t w);

/// Mean of squared differences over all elements; a scalar.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b);

/// Pixelwise convex blend out = S*a + (1-S)*b. weights is a constant
/// (N, 1, H, W) map; no gradient flows into it.
template <typename T>
Var<T> blend(const Var<T>& a, const Var<T>& b, const Tensor<T>& weights);

/// clamp(x + offset, -1, 1). The offset is a constant; the gradient is the
/// identity where the result was not clamped and zero where it was.
template <typename T>
Var<T> offset_clamp(const Var<T>& x, const Tensor<T>& offset);

/// Copy with the gradient path cut.
template <typename T>
Var<T> detach(const Var<T>& x);

/// Forward value of `target`, gradient routed to `source` unchanged.
template <typename T>
Var<T> straight_through(const Var<T>& source, const Var<T>& target);

/// Selects rows of table (K, D) by index; gradients scatter-add back.
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::size_t>& index);

/// softmax(q E^T / sqrt(D)) E for queries (M, D) and entries (K, D).
template <typename T>
Var<T> attention(const Var<T>& queries, const Var<T>& entries);

/// Softmax weights used by attention(), exposed for inspection.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& queries, const Tensor<T>& entries);

}  // namespace gridad::ops
