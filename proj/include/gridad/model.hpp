#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridad/encoders.hpp"
#include "gridad/grid.hpp"
#include "gridad/reconstruct.hpp"

namespace gridad {

enum class Perspective { local, global };
enum class RepresentationKind { grid, vq, attention };

std::string to_string(Perspective p);
std::string to_string(RepresentationKind k);
RepresentationKind parse_representation_kind(const std::string& s);

/// Shape and hyperparameters of the detector; shared by the grid model and
/// the discrete-memory baselines.
struct ModelConfig {
    std::size_t channels = 32;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t local_dims = 2;        // C_l
    std::size_t global_dims = 2;       // C_g
    std::size_t local_resolution = 8;  // R_l
    std::size_t global_resolution = 4; // R_g
    std::size_t psi_blocks = 7;
    bool use_local = true;
    bool use_global = true;
    RefineConfig refine;
    JitterConfig jitter;
};

void validate(const ModelConfig& cfg);

/// Maps an input feature batch to a normal feature batch of the same shape
/// from one perspective.
template <typename T>
class Representation {
public:
    struct Result {
        Var<T> features;                 // (N, C, H, W)
        std::optional<Var<T>> coords;    // grid coordinates, when the representation has them
        std::optional<Var<T>> aux_loss;  // extra training loss (VQ)
    };

    virtual ~Representation() = default;
    virtual Result operator()(const Var<T>& x, bool training, Rng& rng) = 0;
    virtual void collect(ParamList<T>& out) = 0;
    [[nodiscard]] virtual Perspective perspective() const = 0;
    [[nodiscard]] virtual RepresentationKind kind() const = 0;
};

/// Local grid representation: per-pixel coordinates (jittered in training)
/// sample a C_l-dimensional grid of C-vectors.
template <typename T>
class LocalGridRepresentation final : public Representation<T> {
public:
    LocalGridRepresentation(const ModelConfig& cfg, Rng& rng);
    typename Representation<T>::Result operator()(const Var<T>& x, bool training, Rng& rng) override;
    void collect(ParamList<T>& out) override;
    [[nodiscard]] Perspective perspective() const override { return Perspective::local; }
    [[nodiscard]] RepresentationKind kind() const override { return RepresentationKind::grid; }

    LocalEncoder<T> encoder;
    ContinuousGrid<T> grid;
    JitterConfig jitter_cfg;
};

/// Global grid representation: one coordinate per image samples a
/// C_g-dimensional grid whose nodes hold whole C*H*W feature maps.
template <typename T>
class GlobalGridRepresentation final : public Representation<T> {
public:
    GlobalGridRepresentation(const ModelConfig& cfg, Rng& rng);
    typename Representation<T>::Result operator()(const Var<T>& x, bool training, Rng& rng) override;
    void collect(ParamList<T>& out) override;
    [[nodiscard]] Perspective perspective() const override { return Perspective::global; }
    [[nodiscard]] RepresentationKind kind() const override { return RepresentationKind::grid; }

    GlobalEncoder<T> encoder;
    ContinuousGrid<T> grid;
    Shape feature_shape;  // (C, H, W)
};

/// Representations -> fusion -> refinement. Owns its parameters.
template <typename T>
class AnomalyModel {
public:
    struct Forward {
        Var<T> reconstruction;  // x_hat
        Var<T> normal;          // f_n
        std::optional<Var<T>> local;
        std::optional<Var<T>> global;
        std::optional<Var<T>> local_coords;
        std::optional<Var<T>> global_coords;
        std::optional<Var<T>> aux_loss;
        Tensor<T> similarity;   // S, empty when refinement is disabled
    };

    AnomalyModel(ModelConfig cfg, std::unique_ptr<Representation<T>> local,
                 std::unique_ptr<Representation<T>> global, Rng& rng);

    /// x is an (N, C, H, W) batch recorded on a tape.
    Forward forward(const Var<T>& x, bool training, Rng& rng);

    /// Reconstruction MSE plus any auxiliary representation losses.
    Var<T> training_loss(const Var<T>& x, const Forward& out) const;

    ParamList<T> parameters();
    [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] Representation<T>* local() noexcept { return local_.get(); }
    [[nodiscard]] Representation<T>* global() noexcept { return global_.get(); }
    [[nodiscard]] FusionNet<T>& fusion() noexcept { return fusion_; }
    [[nodiscard]] RepresentationKind kind() const;

private:
    ModelConfig cfg_;
    std::unique_ptr<Representation<T>> local_;
    std::unique_ptr<Representation<T>> global_;
    FusionNet<T> fusion_;
};

/// The grid model; which perspectives exist follows cfg.use_local /
/// cfg.use_global. Grids get Xavier-normal init, layers PyTorch-style init,
/// all drawn from one stream seeded by `seed`.
template <typename T>
AnomalyModel<T> make_grad_model(const ModelConfig& cfg, std::uint64_t seed);

/// Mean squared error (1/CHW) * ||x - x_hat||^2, averaged over the batch.
template <typename T>
Var<T> reconstruction_loss(const Var<T>& x, const Var<T>& x_hat);

/// Channel-wise L2 distance per pixel: (N, C, H, W) pair -> (N, H, W).
template <typename T>
Tensor<T> feature_distance(const Tensor<T>& x, const Tensor<T>& x_hat);

/// Bilinear resize (half-pixel centres, edge clamped) of one h x w map.
std::vector<float> upsample_bilinear(std::span<const float> map, std::size_t h, std::size_t w, std::size_t out_h,
                                     std::size_t out_w);

/// Per-image anomaly maps at image resolution: (N, size, size), all >= 0.
template <typename T>
Tensor<float> anomaly_maps(const Tensor<T>& x, const Tensor<T>& x_hat, std::size_t image_size);

/// Max of the kernel x kernel average-pooled map (edge-replicated borders).
double image_score(std::span<const float> map, std::size_t h, std::size_t w, std::size_t kernel = 3);

}  // namespace gridad
