#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridad/data.hpp"
#include "gridad/model.hpp"
#include "json.hpp"

namespace gridad::eval {

inline constexpr int kReportFormatVersion = 1;

/// Mann-Whitney AUROC from average ranks: P(s+ > s-) + P(s+ == s-) / 2.
/// Throws std::invalid_argument when either class is absent and
/// NumericalError on NaN scores.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels);

/// AUROC over every pixel of every map, pooled (not averaged per image).
/// maps is (N, S, S); masks holds N*S*S labels in the same order.
double pixel_auroc(const Tensor<float>& maps, std::span<const std::uint8_t> masks);

/// Scores for a list of test samples, in the order given.
struct Scores {
    std::vector<std::size_t> indices;  // dataset sample indices
    std::vector<double> image;         // one per sample
    Tensor<float> maps;                // (N, S, S)
};

Scores score_samples(AnomalyModel<float>& model, const data::Dataset& ds, const data::FeatureExtractor& fx,
                     std::span<const std::size_t> indices, std::size_t pool_kernel, std::size_t batch = 32);

struct ClassMetrics {
    std::string name;
    double image_auroc = 0.0;
    double pixel_auroc = 0.0;
    std::size_t normal = 0;
    std::size_t anomalous = 0;
};

struct EvalReport {
    std::string method;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::size_t pool_kernel = 3;
    std::vector<ClassMetrics> classes;
    double mean_image_auroc = 0.0;  // unweighted over classes
    double mean_pixel_auroc = 0.0;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// Per-class metrics from precomputed scores. `classes` restricts the report
/// (empty = all dataset classes); every listed class must have both normal
/// and anomalous test samples.
EvalReport report_from_scores(const data::Dataset& ds, const Scores& scores,
                              const std::vector<std::string>& classes = {});

/// Scores the test split and aggregates per class.
EvalReport evaluate(AnomalyModel<float>& model, const data::Dataset& ds, std::size_t pool_kernel,
                    const std::vector<std::string>& classes = {});

/// Test-split indices of the requested classes (empty = all), validated.
std::vector<std::size_t> test_indices(const data::Dataset& ds, const std::vector<std::string>& classes);

}  // namespace gridad::eval
