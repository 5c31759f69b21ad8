#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gridad/model.hpp"

// Discrete feature-space baselines. They reuse the detector pipeline
// (fusion, refinement, scoring) and replace the grid lookup with a
// codebook (nearest entry) or an attention memory (softmax mixture).
namespace gridad {

/// Learnable codebook of N entries; queries are replaced by their nearest
/// entry in Euclidean distance.
template <typename T>
struct VQMemory {
    Parameter<T> codebook;   // (N, dim)
    double commitment = 0.25;
};

/// Learnable memory read by scaled dot-product attention; entries serve as
/// both keys and values.
template <typename T>
struct AttentionMemory {
    Parameter<T> entries;    // (N, dim)
};

template <typename T>
struct VQResult {
    Var<T> quantized;        // forward value = codebook rows, gradient straight through to the queries
    Var<T> codebook_loss;    // mean (sg(q) - e)^2
    Var<T> commitment_loss;  // commitment * mean (q - sg(e))^2
    std::vector<std::size_t> index;
};

/// Index of the nearest codebook row for each query row (ties -> lowest index).
template <typename T>
std::vector<std::size_t> nearest_rows(const Tensor<T>& queries, const Tensor<T>& codebook);

template <typename T>
VQResult<T> vq_replace(const Var<T>& queries, VQMemory<T>& memory);

template <typename T>
Var<T> attention_read(const Var<T>& queries, AttentionMemory<T>& memory);

/// 1x1 conv (C -> C/2), relu, 1x1 conv (C/2 -> C): maps features to memory
/// queries, pixel by pixel.
template <typename T>
class QueryEncoder {
public:
    QueryEncoder(const std::string& prefix, std::size_t channels, Rng& rng);
    Var<T> operator()(const Var<T>& x);
    void collect(ParamList<T>& out);

    Conv2d<T> hidden;
    Conv2d<T> out;
};

/// A VQ or attention memory standing in for one perspective's grid. Local
/// memories hold C-dim entries and are queried per pixel; global memories
/// hold C*H*W entries and are queried once per image.
template <typename T>
class MemoryRepresentation final : public Representation<T> {
public:
    MemoryRepresentation(RepresentationKind kind, Perspective perspective, std::size_t entries,
                         const ModelConfig& cfg, double commitment, Rng& rng);

    typename Representation<T>::Result operator()(const Var<T>& x, bool training, Rng& rng) override;
    void collect(ParamList<T>& out) override;
    [[nodiscard]] Perspective perspective() const override { return perspective_; }
    [[nodiscard]] RepresentationKind kind() const override { return kind_; }
    [[nodiscard]] Parameter<T>& memory() noexcept { return kind_ == RepresentationKind::vq ? vq_.codebook : attn_.entries; }

private:
    RepresentationKind kind_;
    Perspective perspective_;
    QueryEncoder<T> query_;
    VQMemory<T> vq_;
    AttentionMemory<T> attn_;
};

/// The detector with one perspective backed by a discrete memory of
/// `entries` rows. `kind` must be vq or attention.
template <typename T>
AnomalyModel<T> build_baseline(RepresentationKind kind, Perspective perspective, std::size_t entries,
                               const ModelConfig& cfg, std::uint64_t seed, double commitment = 0.25);

}  // namespace gridad
