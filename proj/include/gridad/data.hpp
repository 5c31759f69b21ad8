#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gridad/rng.hpp"
#include "gridad/tensor.hpp"

namespace gridad::data {

inline constexpr int kDatasetFormatVersion = 1;

/// Texture families the generator knows. Each has a preferred orientation,
/// so a 90-degree rotation is off the normal manifold.
const std::vector<std::string>& known_classes();

enum class Split { train, test };
enum class AnomalyKind { none, patch, scratch, structural };

std::string to_string(Split s);
std::string to_string(AnomalyKind k);
AnomalyKind parse_anomaly_kind(const std::string& s);

/// Relative frequency of each anomaly kind in the anomalous test images.
struct AnomalyMix {
    double patch = 0.4;
    double scratch = 0.4;
    double structural = 0.2;
};

struct DataConfig {
    std::vector<std::string> classes{"stripes", "checker", "blobs", "rings"};
    std::size_t train_per_class = 200;
    std::size_t test_normal_per_class = 50;
    std::size_t test_anomalous_per_class = 50;
    std::size_t image_size = 64;
    std::size_t patch = 4;       // feature extractor patch size
    std::size_t channels = 32;   // feature channels
    std::uint64_t seed = 0;
    AnomalyMix mix;
    double patch_area_min = 0.02;  // patch anomaly area, fraction of the image
    double patch_area_max = 0.10;
};

void validate(const DataConfig& cfg);

struct Sample {
    Split split = Split::train;
    std::size_t class_id = 0;
    bool anomalous = false;
    AnomalyKind kind = AnomalyKind::none;
    std::vector<float> image;          // size x size, values in [0, 1]
    std::vector<std::uint8_t> mask;    // size x size, 0/1
};

struct Dataset {
    DataConfig config;
    std::vector<Sample> samples;       // train split first, then test

    [[nodiscard]] std::vector<std::size_t> indices(Split split) const;
    [[nodiscard]] std::vector<std::size_t> indices(Split split, std::size_t class_id) const;
};

/// Renders one normal image of the named class.
std::vector<float> render_normal(const std::string& cls, std::size_t size, Rng& rng);

/// Injects an anomaly in place; returns the ground-truth mask. `foreign`
/// lists classes outside the dataset that a structural anomaly may swap in.
std::vector<std::uint8_t> inject_anomaly(std::vector<float>& image, std::size_t size, AnomalyKind kind, Rng& rng,
                                         const std::vector<std::string>& foreign = {}, double area_min = 0.02,
                                         double area_max = 0.10);

/// Deterministic in (cfg, cfg.seed): every image draws from its own stream
/// derived from (seed, split, class, index).
Dataset generate_dataset(const DataConfig& cfg);

/// manifest.json + images.bin (float32 LE, row-major) + masks.bin (uint8).
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Frozen patch embedding standing in for a pretrained backbone. A p x p
/// patch, shifted to zero mean level (pixel - 0.5), is projected on C/2
/// orthonormal directions u; the feature is [relu(u), relu(-u)], so it is
/// non-negative and the projection is recoverable as the difference of the
/// two halves. Feature pixel (h, w) sees exactly image patch (h, w).
class FeatureExtractor {
public:
    FeatureExtractor(std::size_t patch, std::size_t channels, std::uint64_t seed);

    [[nodiscard]] std::size_t patch() const noexcept { return patch_; }
    [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
    /// (C/2, p*p) projection; rows orthonormal when C/2 <= p*p, otherwise
    /// columns.
    [[nodiscard]] const Tensor<double>& projection() const noexcept { return projection_; }

    /// One image (size x size) -> (C, size/p, size/p).
    [[nodiscard]] Tensor<float> extract(std::span<const float> image, std::size_t size) const;
    /// Selected samples -> (N, C, size/p, size/p).
    [[nodiscard]] Tensor<float> extract(const Dataset& ds, std::span<const std::size_t> indices) const;

private:
    std::size_t patch_;
    std::size_t channels_;
    Tensor<double> projection_;
};

FeatureExtractor make_extractor(const DataConfig& cfg);

}  // namespace gridad::data
