#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gridad/autodiff.hpp"
#include "gridad/rng.hpp"
#include "gridad/tensor.hpp"

namespace gridad {

/// Maps a coordinate in [-1, 1] to a fractional lattice index in [0, R-1].
/// Throws std::domain_error outside [-1, 1].
double normalize_to_index(double v, std::size_t resolution);

/// The 2^D lattice rows surrounding a coordinate together with their
/// multilinear weights. Corner b uses the upper node on axis a iff bit a of
/// b is set.
struct CellStencil {
    std::vector<std::size_t> rows;
    std::vector<double> weights;
    std::vector<std::size_t> lower;   // per-axis lower node index
    std::vector<double> frac;         // per-axis offset from the lower node, in [0, 1]
};

/// A D-dimensional lattice of learnable vectors sampled by multilinear
/// interpolation. Values are stored as an (R^D, out_channels) matrix; node
/// (i_0, ..., i_{D-1}) lives in row sum_a i_a * R^(D-1-a).
///
/// Per axis the enclosing cell is [m, m+1] with m = min(floor(idx), R-2), so
/// a coordinate on a node reproduces that node exactly and the top edge needs
/// no special case.
template <typename T>
class ContinuousGrid {
public:
    ContinuousGrid(std::size_t dims, std::size_t resolution, std::size_t out_channels, std::string name = "grid");

    [[nodiscard]] std::size_t dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t resolution() const noexcept { return resolution_; }
    [[nodiscard]] std::size_t out_channels() const noexcept { return out_channels_; }
    [[nodiscard]] std::size_t node_count() const noexcept { return values_.value.dim(0); }

    [[nodiscard]] Parameter<T>& values() noexcept { return values_; }
    [[nodiscard]] const Parameter<T>& values() const noexcept { return values_; }

    [[nodiscard]] std::size_t node_row(std::span<const std::size_t> index) const;
    [[nodiscard]] CellStencil stencil(std::span<const T> coord) const;

    [[nodiscard]] std::vector<T> sample(std::span<const T> coord) const;

    struct Backward {
        std::vector<std::size_t> rows;   // touched rows, one per corner
        std::vector<T> row_grads;        // corners x out_channels
        std::vector<T> coord_grad;       // D
    };
    [[nodiscard]] Backward sample_backward(std::span<const T> coord, std::span<const T> upstream) const;

    /// values ~ N(0, 2 / (R^D + out_channels)).
    void init_xavier_normal(Rng& rng);

private:
    std::size_t dims_;
    std::size_t resolution_;
    std::size_t out_channels_;
    Parameter<T> values_;
};

namespace ops {

/// Samples one grid row-vector per coordinate row: coords (M, D) in [-1,1],
/// values (R^D, K) -> (M, K). Differentiable in both arguments.
template <typename T>
Var<T> grid_sample(const Var<T>& coords, const Var<T>& values, std::size_t dims, std::size_t resolution);

}  // namespace ops

}  // namespace gridad
