#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "gridad/data.hpp"
#include "gridad/model.hpp"
#include "gridad/trainer.hpp"
#include "json.hpp"

namespace gridad {

/// Which representation backs the detector. Grid models use the model
/// section's local/global flags; memory baselines use one perspective.
struct MethodConfig {
    RepresentationKind kind = RepresentationKind::grid;
    Perspective perspective = Perspective::local;  // memory baselines only
    std::size_t entries = 64;                      // memory baselines only
    double commitment = 0.25;                      // vq only
};

/// Everything one run needs. Model feature shape (C, H, W) follows from the
/// data section: C = data.channels, H = W = image_size / patch.
struct RunConfig {
    data::DataConfig data;
    ModelConfig model;
    TrainConfig train;
    std::size_t pool_kernel = 3;
    MethodConfig method;
    bool data_seed_explicit = false;
    std::optional<std::uint64_t> train_seed;
};

/// Parses a JSON run configuration. Missing keys take defaults, unknown keys
/// and wrong types raise ConfigError naming the dotted key.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& p);

/// Fully resolved, canonical form (every field present, fixed key order).
nlohmann::ordered_json to_json(const RunConfig& cfg);
/// FNV-1a 64 of the canonical compact dump, as 16 hex digits.
std::string config_digest(const RunConfig& cfg);

/// First of: command-line value, explicit config value, GRAD_SEED, fallback.
std::uint64_t resolve_seed(std::optional<std::uint64_t> cli, std::optional<std::uint64_t> config,
                           std::uint64_t fallback = 0);

/// Builds the configured detector with freshly initialized parameters.
AnomalyModel<float> build_model(const RunConfig& cfg, std::uint64_t seed);

}  // namespace gridad
