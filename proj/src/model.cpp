#include "gridad/model.hpp"

#include <algorithm>
#include <cmath>

namespace gridad {

std::string to_string(Perspective p) { return p == Perspective::local ? "local" : "global"; }

std::string to_string(RepresentationKind k) {
    switch (k) {
        case RepresentationKind::grid: return "grad";
        case RepresentationKind::vq: return "vq";
        case RepresentationKind::attention: return "attention";
    }
    return "unknown";
}

RepresentationKind parse_representation_kind(const std::string& s) {
    if (s == "grad" || s == "grid") return RepresentationKind::grid;
    if (s == "vq") return RepresentationKind::vq;
    if (s == "attention") return RepresentationKind::attention;
    throw ConfigError("unknown method '" + s + "' (expected grad, vq or attention)");
}

void validate(const ModelConfig& cfg) {
    if (cfg.channels == 0 || cfg.height == 0 || cfg.width == 0) throw ConfigError("feature shape must be positive");
    if (!cfg.use_local && !cfg.use_global) throw ConfigError("at least one of local/global must be enabled");
    if (cfg.local_dims == 0 || cfg.global_dims == 0) throw ConfigError("coordinate dimensions must be positive");
    if (cfg.local_resolution < 2 || cfg.global_resolution < 2) throw ConfigError("grid resolution must be >= 2");
    if (!(cfg.refine.threshold >= 0.0)) throw ConfigError("refine threshold k must be non-negative");
    validate(cfg.jitter);
}

template <typename T>
LocalGridRepresentation<T>::LocalGridRepresentation(const ModelConfig& cfg, Rng& rng)
    : encoder(cfg.channels, cfg.local_dims, rng),
      grid(cfg.local_dims, cfg.local_resolution, cfg.channels, "local.grid"),
      jitter_cfg(cfg.jitter) {
    grid.init_xavier_normal(rng);
}

template <typename T>
typename Representation<T>::Result LocalGridRepresentation<T>::operator()(const Var<T>& x, bool training,
                                                                          Rng& rng) {
    auto& tape = *x.tape;
    const auto& s = x.value().shape();
    Var<T> coords = jitter(encoder(x), jitter_cfg, rng, training);
    Var<T> sampled = ops::grid_sample(ops::to_rows(coords), tape.param(grid.values()), grid.dims(), grid.resolution());
    return {ops::from_rows(sampled, s[0], s[2], s[3]), coords, std::nullopt};
}

template <typename T>
void LocalGridRepresentation<T>::collect(ParamList<T>& out) {
    encoder.collect(out);
    out.push_back(&grid.values());
}

template <typename T>
GlobalGridRepresentation<T>::GlobalGridRepresentation(const ModelConfig& cfg, Rng& rng)
    : encoder(cfg.channels, cfg.global_dims, rng),
      grid(cfg.global_dims, cfg.global_resolution, cfg.channels * cfg.height * cfg.width, "global.grid"),
      feature_shape{cfg.channels, cfg.height, cfg.width} {
    grid.init_xavier_normal(rng);
}

template <typename T>
typename Representation<T>::Result GlobalGridRepresentation<T>::operator()(const Var<T>& x, bool, Rng&) {
    auto& tape = *x.tape;
    const std::size_t n = x.value().dim(0);
    if (x.value().dim(2) != feature_shape[1] || x.value().dim(3) != feature_shape[2]) {
        throw ConfigError("global representation was built for a different spatial size");
    }
    Var<T> coords = encoder(x);
    Var<T> sampled = ops::grid_sample(coords, tape.param(grid.values()), grid.dims(), grid.resolution());
    return {ops::reshape(sampled, {n, feature_shape[0], feature_shape[1], feature_shape[2]}), coords, std::nullopt};
}

template <typename T>
void GlobalGridRepresentation<T>::collect(ParamList<T>& out) {
    encoder.collect(out);
    out.push_back(&grid.values());
}

template <typename T>
AnomalyModel<T>::AnomalyModel(ModelConfig cfg, std::unique_ptr<Representation<T>> local,
                              std::unique_ptr<Representation<T>> global, Rng& rng)
    : cfg_(cfg),
      local_(std::move(local)),
      global_(std::move(global)),
      fusion_(cfg.channels * ((local_ ? 1 : 0) + (global_ ? 1 : 0)), cfg.channels, cfg.psi_blocks, rng) {
    if (!local_ && !global_) throw ConfigError("model needs at least one representation");
    if (local_ && local_->perspective() != Perspective::local) throw ConfigError("local slot holds a global representation");
    if (global_ && global_->perspective() != Perspective::global) {
        throw ConfigError("global slot holds a local representation");
    }
}

template <typename T>
typename AnomalyModel<T>::Forward AnomalyModel<T>::forward(const Var<T>& x, bool training, Rng& rng) {
    const auto& shape = x.value().shape();
    if (shape.size() != 4 || shape[1] != cfg_.channels || shape[2] != cfg_.height || shape[3] != cfg_.width) {
        throw ConfigError("model expects (N, " + std::to_string(cfg_.channels) + ", " + std::to_string(cfg_.height) +
                          ", " + std::to_string(cfg_.width) + ") features, got " + shape_string(shape));
    }
    Forward out{};
    std::vector<Var<T>> parts;
    auto add_aux = [&](const std::optional<Var<T>>& aux) {
        if (!aux) return;
        out.aux_loss = out.aux_loss ? ops::add(*out.aux_loss, *aux) : *aux;
    };
    if (local_) {
        auto r = (*local_)(x, training, rng);
        out.local = r.features;
        out.local_coords = r.coords;
        add_aux(r.aux_loss);
        parts.push_back(r.features);
    }
    if (global_) {
        auto r = (*global_)(x, training, rng);
        out.global = r.features;
        out.global_coords = r.coords;
        add_aux(r.aux_loss);
        parts.push_back(r.features);
    }
    out.normal = fuse(fusion_, parts);
    if (cfg_.refine.enabled) {
        out.similarity = similarity_map(x.value(), out.normal.value(), cfg_.refine);
        out.reconstruction = ops::blend(x, out.normal, out.similarity);
    } else {
        out.reconstruction = out.normal;
    }
    return out;
}

template <typename T>
Var<T> AnomalyModel<T>::training_loss(const Var<T>& x, const Forward& out) const {
    Var<T> loss = reconstruction_loss(x, out.reconstruction);
    if (out.aux_loss) loss = ops::add(loss, *out.aux_loss);
    return loss;
}

template <typename T>
ParamList<T> AnomalyModel<T>::parameters() {
    ParamList<T> list;
    if (local_) local_->collect(list);
    if (global_) global_->collect(list);
    fusion_.collect(list);
    return list;
}

template <typename T>
RepresentationKind AnomalyModel<T>::kind() const {
    return local_ ? local_->kind() : global_->kind();
}

template <typename T>
AnomalyModel<T> make_grad_model(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Rng rng(seed);
    std::unique_ptr<Representation<T>> local, global;
    if (cfg.use_local) local = std::make_unique<LocalGridRepresentation<T>>(cfg, rng);
    if (cfg.use_global) global = std::make_unique<GlobalGridRepresentation<T>>(cfg, rng);
    return AnomalyModel<T>(cfg, std::move(local), std::move(global), rng);
}

template <typename T>
Var<T> reconstruction_loss(const Var<T>& x, const Var<T>& x_hat) {
    return ops::mse(x, x_hat);
}

template <typename T>
Tensor<T> feature_distance(const Tensor<T>& x, const Tensor<T>& x_hat) {
    if (x.rank() != 4) throw ConfigError("feature_distance expects (N, C, H, W)");
    require_shape(x_hat.shape(), x.shape(), "feature_distance");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> d({n, x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < hw; ++p) {
            double s = 0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double diff = static_cast<double>(x[(i * c + ch) * hw + p]) - x_hat[(i * c + ch) * hw + p];
                s += diff * diff;
            }
            d[i * hw + p] = static_cast<T>(std::sqrt(s));
        }
    return d;
}

std::vector<float> upsample_bilinear(std::span<const float> map, std::size_t h, std::size_t w, std::size_t out_h,
                                     std::size_t out_w) {
    if (map.size() != h * w || h == 0 || w == 0) throw ConfigError("upsample_bilinear: bad map size");
    std::vector<float> out(out_h * out_w);
    auto source = [](std::size_t dst, std::size_t in, std::size_t outn, std::size_t& lo, std::size_t& hi,
                     double& t) {
        double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        lo = static_cast<std::size_t>(std::floor(s));
        hi = std::min(lo + 1, in - 1);
        t = s - static_cast<double>(lo);
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        std::size_t y0, y1;
        double ty;
        source(y, h, out_h, y0, y1, ty);
        for (std::size_t x = 0; x < out_w; ++x) {
            std::size_t x0, x1;
            double tx;
            source(x, w, out_w, x0, x1, tx);
            const double top = (1 - tx) * map[y0 * w + x0] + tx * map[y0 * w + x1];
            const double bottom = (1 - tx) * map[y1 * w + x0] + tx * map[y1 * w + x1];
            out[y * out_w + x] = static_cast<float>((1 - ty) * top + ty * bottom);
        }
    }
    return out;
}

template <typename T>
Tensor<float> anomaly_maps(const Tensor<T>& x, const Tensor<T>& x_hat, std::size_t image_size) {
    const Tensor<T> d = feature_distance(x, x_hat);
    const std::size_t n = d.dim(0), h = d.dim(1), w = d.dim(2);
    Tensor<float> maps({n, image_size, image_size});
    std::vector<float> small(h * w);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < h * w; ++p) small[p] = static_cast<float>(d[i * h * w + p]);
        const auto big = upsample_bilinear(small, h, w, image_size, image_size);
        std::copy(big.begin(), big.end(), maps.data() + i * image_size * image_size);
    }
    return maps;
}

double image_score(std::span<const float> map, std::size_t h, std::size_t w, std::size_t kernel) {
    if (map.size() != h * w || h == 0 || w == 0) throw ConfigError("image_score: bad map size");
    if (kernel == 0 || kernel % 2 == 0) throw ConfigError("image_score: pool kernel must be odd");
    if (kernel > std::min(h, w)) throw ConfigError("image_score: pool kernel larger than the map");
    const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    double best = -1.0;
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double s = 0;
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + dy, 0, H - 1);
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + dx, 0, W - 1);
                    s += map[static_cast<std::size_t>(yy * W + xx)];
                }
            }
            best = std::max(best, s / static_cast<double>(kernel * kernel));
        }
    }
    return best;
}

template class LocalGridRepresentation<float>;
template class LocalGridRepresentation<double>;
template class GlobalGridRepresentation<float>;
template class GlobalGridRepresentation<double>;
template class AnomalyModel<float>;
template class AnomalyModel<double>;
template AnomalyModel<float> make_grad_model<float>(const ModelConfig&, std::uint64_t);
template AnomalyModel<double> make_grad_model<double>(const ModelConfig&, std::uint64_t);
template Var<float> reconstruction_loss(const Var<float>&, const Var<float>&);
template Var<double> reconstruction_loss(const Var<double>&, const Var<double>&);
template Tensor<float> feature_distance(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> feature_distance(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> anomaly_maps(const Tensor<float>&, const Tensor<float>&, std::size_t);
template Tensor<float> anomaly_maps(const Tensor<double>&, const Tensor<double>&, std::size_t);

}  // namespace gridad
