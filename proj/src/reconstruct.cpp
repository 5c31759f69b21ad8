#include "gridad/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gridad {

template <typename T>
FusionNet<T>::FusionNet(std::size_t in_channels, std::size_t channels, std::size_t num_blocks, Rng& rng)
    : entry("fusion.entry", in_channels, channels, 1, rng), in_channels_(in_channels), channels_(channels) {
    blocks.reserve(num_blocks);
    for (std::size_t i = 0; i < num_blocks; ++i) {
        const std::string prefix = "fusion.block" + std::to_string(i);
        Conv2d<T> first(prefix + ".conv1", channels, channels, 3, rng);
        Conv2d<T> second(prefix + ".conv2", channels, channels, 3, rng);
        blocks.push_back(Block{std::move(first), std::move(second)});
    }
}

template <typename T>
Var<T> FusionNet<T>::operator()(const Var<T>& x) {
    if (x.value().rank() != 4 || x.value().dim(1) != in_channels_) {
        throw ConfigError("fusion net expects " + std::to_string(in_channels_) + " input channels, got " +
                          shape_string(x.value().shape()));
    }
    Var<T> h = entry(x);
    for (auto& block : blocks) {
        Var<T> y = block.second(ops::relu(block.first(h)));
        h = ops::relu(ops::add(h, y));
    }
    return h;
}

template <typename T>
void FusionNet<T>::collect(ParamList<T>& list) {
    entry.collect(list);
    for (auto& block : blocks) {
        block.first.collect(list);
        block.second.collect(list);
    }
}

template <typename T>
Var<T> fuse(FusionNet<T>& net, const std::vector<Var<T>>& representations) {
    if (representations.empty()) throw ConfigError("fuse: at least one representation is required");
    const auto& shape = representations.front().value().shape();
    for (const auto& r : representations) require_shape(r.value().shape(), shape, "fuse");
    if (representations.size() == 1) return net(representations.front());
    return net(ops::concat_channels(representations));
}

template <typename T>
Tensor<T> similarity_map(const Tensor<T>& x, const Tensor<T>& normal, const RefineConfig& cfg) {
    if (x.rank() != 4) throw ConfigError("similarity_map expects (N, C, H, W) inputs");
    require_shape(normal.shape(), x.shape(), "similarity_map");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> s({n, 1, x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < hw; ++p) {
            double sq = 0, dot = 0, nx = 0, nf = 0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double a = x[(i * c + ch) * hw + p];
                const double b = normal[(i * c + ch) * hw + p];
                sq += (a - b) * (a - b);
                dot += a * b;
                nx += a * a;
                nf += b * b;
            }
            const double mse = sq / static_cast<double>(c);
            const double denom = std::sqrt(nx) * std::sqrt(nf);
            const double cosim = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
            const double raw = cfg.lambda1 * (mse < cfg.threshold ? 1.0 : 0.0) + cfg.lambda2 * cosim;
            s[i * hw + p] = static_cast<T>(std::clamp(raw, 0.0, 1.0));
        }
    }
    return s;
}

template <typename T>
Tensor<T> refine(const Tensor<T>& x, const Tensor<T>& normal, const Tensor<T>& similarity) {
    if (x.rank() != 4) throw ConfigError("refine expects (N, C, H, W) inputs");
    require_shape(normal.shape(), x.shape(), "refine");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require_shape(similarity.shape(), {n, 1, x.dim(2), x.dim(3)}, "refine weights");
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) {
                const std::size_t k = (i * c + ch) * hw + p;
                const T s = similarity[i * hw + p];
                out[k] = s * x[k] + (T(1) - s) * normal[k];
            }
    return out;
}

template class FusionNet<float>;
template class FusionNet<double>;
template Var<float> fuse(FusionNet<float>&, const std::vector<Var<float>>&);
template Var<double> fuse(FusionNet<double>&, const std::vector<Var<double>>&);
template Tensor<float> similarity_map(const Tensor<float>&, const Tensor<float>&, const RefineConfig&);
template Tensor<double> similarity_map(const Tensor<double>&, const Tensor<double>&, const RefineConfig&);
template Tensor<float> refine(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> refine(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace gridad
