#include "gridad/baselines.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace gridad {

template <typename T>
std::vector<std::size_t> nearest_rows(const Tensor<T>& queries, const Tensor<T>& codebook) {
    if (queries.rank() != 2 || codebook.rank() != 2 || queries.dim(1) != codebook.dim(1)) {
        throw ConfigError("vq: query dim does not match codebook dim");
    }
    const std::size_t m = queries.dim(0), d = queries.dim(1), k = codebook.dim(0);
    if (k == 0) throw ConfigError("vq: empty codebook");
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> q(queries.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    Eigen::Map<const Mat> e(codebook.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    const Mat dots = q * e.transpose();
    std::vector<T> enorm(k);
    for (std::size_t j = 0; j < k; ++j) enorm[j] = e.row(static_cast<Eigen::Index>(j)).squaredNorm();
    std::vector<std::size_t> index(m);
    for (std::size_t r = 0; r < m; ++r) {
        T best = std::numeric_limits<T>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < k; ++j) {
            // ||q||^2 is common to every entry, so it is left out.
            const T dist = enorm[j] - T(2) * dots(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
            if (dist < best) {
                best = dist;
                arg = j;
            }
        }
        index[r] = arg;
    }
    return index;
}

template <typename T>
VQResult<T> vq_replace(const Var<T>& queries, VQMemory<T>& memory) {
    auto& tape = *queries.tape;
    Var<T> book = tape.param(memory.codebook);
    VQResult<T> r;
    r.index = nearest_rows(queries.value(), book.value());
    Var<T> chosen = ops::gather_rows(book, r.index);
    r.quantized = ops::straight_through(queries, chosen);
    r.codebook_loss = ops::mse(ops::detach(queries), chosen);
    r.commitment_loss = ops::scale(ops::mse(queries, ops::detach(chosen)), static_cast<T>(memory.commitment));
    return r;
}

template <typename T>
Var<T> attention_read(const Var<T>& queries, AttentionMemory<T>& memory) {
    auto& tape = *queries.tape;
    return ops::attention(queries, tape.param(memory.entries));
}

template <typename T>
QueryEncoder<T>::QueryEncoder(const std::string& prefix, std::size_t channels, Rng& rng)
    : hidden(prefix + ".hidden", channels, std::max<std::size_t>(1, channels / 2), 1, rng),
      out(prefix + ".out", std::max<std::size_t>(1, channels / 2), channels, 1, rng) {}

template <typename T>
Var<T> QueryEncoder<T>::operator()(const Var<T>& x) {
    return out(ops::relu(hidden(x)));
}

template <typename T>
void QueryEncoder<T>::collect(ParamList<T>& list) {
    hidden.collect(list);
    out.collect(list);
}

template <typename T>
MemoryRepresentation<T>::MemoryRepresentation(RepresentationKind kind, Perspective perspective, std::size_t entries,
                                              const ModelConfig& cfg, double commitment, Rng& rng)
    : kind_(kind), perspective_(perspective), query_(to_string(perspective) + ".query", cfg.channels, rng) {
    if (kind == RepresentationKind::grid) throw ConfigError("memory representation must be vq or attention");
    if (entries == 0) throw ConfigError("memory needs at least one entry");
    const std::size_t dim = perspective == Perspective::local ? cfg.channels : cfg.channels * cfg.height * cfg.width;
    const std::string name = to_string(perspective) + (kind == RepresentationKind::vq ? ".codebook" : ".memory");
    Parameter<T> table(name, Tensor<T>({entries, dim}), ParamGroup::grid);
    const double std = std::sqrt(2.0 / static_cast<double>(entries + dim));
    for (auto& v : table.value.vec()) v = static_cast<T>(std * rng.normal());
    if (kind == RepresentationKind::vq) {
        vq_.codebook = std::move(table);
        vq_.commitment = commitment;
    } else {
        attn_.entries = std::move(table);
    }
}

template <typename T>
typename Representation<T>::Result MemoryRepresentation<T>::operator()(const Var<T>& x, bool, Rng&) {
    const auto& s = x.value().shape();
    Var<T> q = query_(x);
    Var<T> rows = perspective_ == Perspective::local ? ops::to_rows(q) : ops::reshape(q, {s[0], s[1] * s[2] * s[3]});
    typename Representation<T>::Result result{};
    Var<T> read;
    if (kind_ == RepresentationKind::vq) {
        auto r = vq_replace(rows, vq_);
        read = r.quantized;
        result.aux_loss = ops::add(r.codebook_loss, r.commitment_loss);
    } else {
        read = attention_read(rows, attn_);
    }
    result.features = perspective_ == Perspective::local ? ops::from_rows(read, s[0], s[2], s[3])
                                                         : ops::reshape(read, {s[0], s[1], s[2], s[3]});
    return result;
}

template <typename T>
void MemoryRepresentation<T>::collect(ParamList<T>& list) {
    query_.collect(list);
    list.push_back(&memory());
}

template <typename T>
AnomalyModel<T> build_baseline(RepresentationKind kind, Perspective perspective, std::size_t entries,
                               const ModelConfig& cfg_in, std::uint64_t seed, double commitment) {
    if (kind == RepresentationKind::grid) throw ConfigError("build_baseline: kind must be vq or attention");
    ModelConfig cfg = cfg_in;
    cfg.use_local = perspective == Perspective::local;
    cfg.use_global = perspective == Perspective::global;
    validate(cfg);
    Rng rng(seed);
    auto rep = std::make_unique<MemoryRepresentation<T>>(kind, perspective, entries, cfg, commitment, rng);
    if (perspective == Perspective::local) return AnomalyModel<T>(cfg, std::move(rep), nullptr, rng);
    return AnomalyModel<T>(cfg, nullptr, std::move(rep), rng);
}

template std::vector<std::size_t> nearest_rows(const Tensor<float>&, const Tensor<float>&);
template std::vector<std::size_t> nearest_rows(const Tensor<double>&, const Tensor<double>&);
template VQResult<float> vq_replace(const Var<float>&, VQMemory<float>&);
template VQResult<double> vq_replace(const Var<double>&, VQMemory<double>&);
template Var<float> attention_read(const Var<float>&, AttentionMemory<float>&);
template Var<double> attention_read(const Var<double>&, AttentionMemory<double>&);
template class QueryEncoder<float>;
template class QueryEncoder<double>;
template class MemoryRepresentation<float>;
template class MemoryRepresentation<double>;
template AnomalyModel<float> build_baseline<float>(RepresentationKind, Perspective, std::size_t, const ModelConfig&,
                                                   std::uint64_t, double);
template AnomalyModel<double> build_baseline<double>(RepresentationKind, Perspective, std::size_t,
                                                     const ModelConfig&, std::uint64_t, double);

}  // namespace gridad
