#include "gridad/encoders.hpp"

#include <algorithm>
#include <string>

namespace gridad {

namespace {
std::size_t hidden_width(std::size_t channels) { return std::max<std::size_t>(1, channels / 2); }
}  // namespace

template <typename T>
LocalEncoder<T>::LocalEncoder(std::size_t channels, std::size_t coord_dims, Rng& rng)
    : hidden("local_encoder.hidden", channels, hidden_width(channels), 1, rng),
      out("local_encoder.out", hidden_width(channels), coord_dims, 1, rng),
      channels_(channels),
      coord_dims_(coord_dims) {
    if (channels == 0 || coord_dims == 0) throw ConfigError("local encoder needs positive widths");
}

template <typename T>
Var<T> LocalEncoder<T>::operator()(const Var<T>& x) {
    if (x.value().rank() != 4 || x.value().dim(1) != channels_) {
        throw ConfigError("local encoder expects " + std::to_string(channels_) + " channels, got " +
                          shape_string(x.value().shape()));
    }
    return ops::tanh(out(ops::relu(hidden(x))));
}

template <typename T>
void LocalEncoder<T>::collect(ParamList<T>& list) {
    hidden.collect(list);
    out.collect(list);
}

template <typename T>
GlobalEncoder<T>::GlobalEncoder(std::size_t channels, std::size_t coord_dims, Rng& rng)
    : hidden("global_encoder.hidden", channels, hidden_width(channels), rng),
      out("global_encoder.out", hidden_width(channels), coord_dims, rng),
      channels_(channels),
      coord_dims_(coord_dims) {
    if (channels == 0 || coord_dims == 0) throw ConfigError("global encoder needs positive widths");
}

template <typename T>
Var<T> GlobalEncoder<T>::operator()(const Var<T>& x) {
    if (x.value().rank() != 4 || x.value().dim(1) != channels_) {
        throw ConfigError("global encoder expects " + std::to_string(channels_) + " channels, got " +
                          shape_string(x.value().shape()));
    }
    return ops::tanh(out(ops::relu(hidden(ops::global_avg_pool(x)))));
}

template <typename T>
void GlobalEncoder<T>::collect(ParamList<T>& list) {
    hidden.collect(list);
    out.collect(list);
}

void validate(const JitterConfig& cfg) {
    if (!(cfg.fraction >= 0.0 && cfg.fraction <= 1.0)) throw ConfigError("jitter fraction must lie in [0, 1]");
    if (!(cfg.scale >= 0.0)) throw ConfigError("jitter scale must be non-negative");
}

template <typename T>
Tensor<T> jitter_offsets(const Shape& coord_shape, const JitterConfig& cfg, Rng& rng) {
    validate(cfg);
    if (coord_shape.size() != 4) throw ConfigError("jitter expects (N, D, H, W) coordinates");
    const std::size_t n = coord_shape[0], d = coord_shape[1], hw = coord_shape[2] * coord_shape[3];
    Tensor<T> noise(coord_shape);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < hw; ++p) {
            if (!(rng.uniform() < cfg.fraction)) continue;
            for (std::size_t a = 0; a < d; ++a) noise[(i * d + a) * hw + p] = static_cast<T>(cfg.scale * rng.normal());
        }
    }
    return noise;
}

template <typename T>
Var<T> jitter(const Var<T>& coords, const JitterConfig& cfg, Rng& rng, bool training) {
    if (!training || !cfg.enabled || cfg.scale == 0.0 || cfg.fraction == 0.0) return coords;
    return ops::offset_clamp(coords, jitter_offsets<T>(coords.value().shape(), cfg, rng));
}

template class LocalEncoder<float>;
template class LocalEncoder<double>;
template class GlobalEncoder<float>;
template class GlobalEncoder<double>;
template Tensor<float> jitter_offsets<float>(const Shape&, const JitterConfig&, Rng&);
template Tensor<double> jitter_offsets<double>(const Shape&, const JitterConfig&, Rng&);
template Var<float> jitter(const Var<float>&, const JitterConfig&, Rng&, bool);
template Var<double> jitter(const Var<double>&, const JitterConfig&, Rng&, bool);

}  // namespace gridad
