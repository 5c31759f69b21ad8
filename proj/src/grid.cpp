#include "gridad/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace gridad {

double normalize_to_index(double v, std::size_t resolution) {
    if (!(v >= -1.0 && v <= 1.0)) {
        throw std::domain_error("grid coordinate " + std::to_string(v) + " outside [-1, 1]");
    }
    return (v + 1.0) * 0.5 * static_cast<double>(resolution - 1);
}

namespace {

std::size_t int_pow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) r *= base;
    return r;
}

template <typename T>
CellStencil make_stencil(std::span<const T> coord, std::size_t dims, std::size_t resolution) {
    if (coord.size() != dims) {
        throw ConfigError("grid sample: coordinate has " + std::to_string(coord.size()) + " components, grid has " +
                          std::to_string(dims) + " axes");
    }
    CellStencil s;
    s.lower.resize(dims);
    s.frac.resize(dims);
    for (std::size_t a = 0; a < dims; ++a) {
        const double idx = normalize_to_index(static_cast<double>(coord[a]), resolution);
        auto m = static_cast<std::size_t>(std::floor(idx));
        if (m > resolution - 2) m = resolution - 2;
        s.lower[a] = m;
        s.frac[a] = idx - static_cast<double>(m);
    }
    const std::size_t corners = std::size_t{1} << dims;
    s.rows.resize(corners);
    s.weights.resize(corners);
    for (std::size_t b = 0; b < corners; ++b) {
        std::size_t row = 0;
        double w = 1.0;
        for (std::size_t a = 0; a < dims; ++a) {
            const bool upper = (b >> a) & 1U;
            row = row * resolution + s.lower[a] + (upper ? 1 : 0);
            w *= upper ? s.frac[a] : 1.0 - s.frac[a];
        }
        s.rows[b] = row;
        s.weights[b] = w;
    }
    return s;
}

// d(weight of corner b)/d(coord a), including the index scaling (R-1)/2.
double weight_derivative(const CellStencil& s, std::size_t b, std::size_t a, std::size_t resolution) {
    double d = 1.0;
    for (std::size_t k = 0; k < s.lower.size(); ++k) {
        const bool upper = (b >> k) & 1U;
        if (k == a) {
            d *= upper ? 1.0 : -1.0;
        } else {
            d *= upper ? s.frac[k] : 1.0 - s.frac[k];
        }
    }
    return d * 0.5 * static_cast<double>(resolution - 1);
}

}  // namespace

template <typename T>
ContinuousGrid<T>::ContinuousGrid(std::size_t dims, std::size_t resolution, std::size_t out_channels,
                                  std::string name)
    : dims_(dims), resolution_(resolution), out_channels_(out_channels) {
    if (dims == 0 || dims > 16) throw ConfigError("grid dims must be in [1, 16]");
    if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
    if (out_channels == 0) throw ConfigError("grid out_channels must be positive");
    values_ = Parameter<T>(std::move(name), Tensor<T>({int_pow(resolution, dims), out_channels}), ParamGroup::grid);
}

template <typename T>
std::size_t ContinuousGrid<T>::node_row(std::span<const std::size_t> index) const {
    if (index.size() != dims_) throw ConfigError("grid node index has wrong arity");
    std::size_t row = 0;
    for (auto i : index) {
        if (i >= resolution_) throw ConfigError("grid node index out of range");
        row = row * resolution_ + i;
    }
    return row;
}

template <typename T>
CellStencil ContinuousGrid<T>::stencil(std::span<const T> coord) const {
    return make_stencil(coord, dims_, resolution_);
}

template <typename T>
std::vector<T> ContinuousGrid<T>::sample(std::span<const T> coord) const {
    const auto s = stencil(coord);
    std::vector<T> out(out_channels_, T(0));
    for (std::size_t b = 0; b < s.rows.size(); ++b) {
        const T w = static_cast<T>(s.weights[b]);
        const T* row = values_.value.data() + s.rows[b] * out_channels_;
        for (std::size_t c = 0; c < out_channels_; ++c) out[c] += w * row[c];
    }
    return out;
}

template <typename T>
typename ContinuousGrid<T>::Backward ContinuousGrid<T>::sample_backward(std::span<const T> coord,
                                                                        std::span<const T> upstream) const {
    if (upstream.size() != out_channels_) throw ConfigError("grid sample_backward: upstream has wrong length");
    const auto s = stencil(coord);
    Backward g;
    g.rows = s.rows;
    g.row_grads.resize(s.rows.size() * out_channels_);
    g.coord_grad.assign(dims_, T(0));
    for (std::size_t b = 0; b < s.rows.size(); ++b) {
        const T* row = values_.value.data() + s.rows[b] * out_channels_;
        T dot = 0;
        for (std::size_t c = 0; c < out_channels_; ++c) {
            g.row_grads[b * out_channels_ + c] = static_cast<T>(s.weights[b]) * upstream[c];
            dot += row[c] * upstream[c];
        }
        for (std::size_t a = 0; a < dims_; ++a) {
            g.coord_grad[a] += static_cast<T>(weight_derivative(s, b, a, resolution_)) * dot;
        }
    }
    return g;
}

template <typename T>
void ContinuousGrid<T>::init_xavier_normal(Rng& rng) {
    const double fan = static_cast<double>(node_count() + out_channels_);
    const double std = std::sqrt(2.0 / fan);
    for (auto& v : values_.value.vec()) v = static_cast<T>(std * rng.normal());
}

namespace ops {

template <typename T>
Var<T> grid_sample(const Var<T>& coords, const Var<T>& values, std::size_t dims, std::size_t resolution) {
    auto& tape = same_tape({coords, values});
    const auto& cv = coords.value();
    const auto& gv = values.value();
    if (cv.rank() != 2 || cv.dim(1) != dims) {
        throw ConfigError("grid_sample: coords must be (M, " + std::to_string(dims) + "), got " +
                          shape_string(cv.shape()));
    }
    if (gv.rank() != 2 || gv.dim(0) != int_pow(resolution, dims)) {
        throw ConfigError("grid_sample: values must have R^D rows, got " + shape_string(gv.shape()));
    }
    const std::size_t m = cv.dim(0), k = gv.dim(1);
    Tensor<T> out({m, k});
    for (std::size_t r = 0; r < m; ++r) {
        const auto s = make_stencil<T>(std::span<const T>(cv.data() + r * dims, dims), dims, resolution);
        T* dst = out.data() + r * k;
        for (std::size_t b = 0; b < s.rows.size(); ++b) {
            const T w = static_cast<T>(s.weights[b]);
            if (w == T(0)) continue;
            const T* src = gv.data() + s.rows[b] * k;
            for (std::size_t c = 0; c < k; ++c) dst[c] += w * src[c];
        }
    }
    const std::size_t ci = coords.id, vi = values.id;
    return tape.push(std::move(out), {coords, values},
        [ci, vi, m, k, dims, resolution](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            const auto& cv = t.value(ci);
            const auto& gv = t.value(vi);
            const bool need_c = t.requires_grad(ci), need_v = t.requires_grad(vi);
            for (std::size_t r = 0; r < m; ++r) {
                const auto s = make_stencil<T>(std::span<const T>(cv.data() + r * dims, dims), dims, resolution);
                const T* up = gy.data() + r * k;
                for (std::size_t b = 0; b < s.rows.size(); ++b) {
                    if (need_v) {
                        const T w = static_cast<T>(s.weights[b]);
                        T* dst = t.grad(vi).data() + s.rows[b] * k;
                        for (std::size_t c = 0; c < k; ++c) dst[c] += w * up[c];
                    }
                    if (need_c) {
                        const T* row = gv.data() + s.rows[b] * k;
                        T dot = 0;
                        for (std::size_t c = 0; c < k; ++c) dot += row[c] * up[c];
                        T* gc = t.grad(ci).data() + r * dims;
                        for (std::size_t a = 0; a < dims; ++a) {
                            gc[a] += static_cast<T>(weight_derivative(s, b, a, resolution)) * dot;
                        }
                    }
                }
            }
        },
        "grid_sample");
}

template Var<float> grid_sample(const Var<float>&, const Var<float>&, std::size_t, std::size_t);
template Var<double> grid_sample(const Var<double>&, const Var<double>&, std::size_t, std::size_t);

}  // namespace ops

template class ContinuousGrid<float>;
template class ContinuousGrid<double>;

}  // namespace gridad
