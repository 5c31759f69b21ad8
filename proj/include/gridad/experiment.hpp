#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gridad/config.hpp"
#include "gridad/eval.hpp"

namespace gridad {

/// Training-split features, limited to the first `samples_per_class` images
/// of each class when that is non-zero.
Tensor<float> training_features(const data::Dataset& ds, const TrainConfig& cfg);

/// The run configuration adjusted to a dataset on disk: data section and the
/// model feature shape follow the dataset manifest.
RunConfig bind_to_dataset(RunConfig cfg, const data::Dataset& ds);

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<EpochLog> log;
    eval::EvalReport report;
};

/// Builds, trains and evaluates one model; `keep` (when set) receives the
/// trained model before it is destroyed.
RunResult run_once(const RunConfig& cfg, const data::Dataset& ds, const Tensor<float>& train_features,
                   std::uint64_t seed, const EpochCallback& on_epoch = {},
                   const std::function<void(AnomalyModel<float>&)>& keep = {});

struct SeedStats {
    std::vector<double> values;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation over seeds
};

SeedStats seed_stats(std::vector<double> values);

/// One row of a comparison table: a labelled configuration run over seeds.
struct CellResult {
    std::string label;
    std::string method;
    std::string perspective;  // "local", "global" or "local+global"
    std::size_t entries = 0;  // 0 for grid models
    SeedStats image;
    SeedStats pixel;
};

CellResult run_cell(const std::string& label, const RunConfig& cfg, const data::Dataset& ds,
                    const Tensor<float>& train_features, const std::vector<std::uint64_t>& seeds,
                    const std::function<void(const std::string&)>& progress = {});

std::string perspective_label(const RunConfig& cfg);

}  // namespace gridad
