#include "gridad/experiment.hpp"

#include <cmath>
#include <numeric>

namespace gridad {

Tensor<float> training_features(const data::Dataset& ds, const TrainConfig& cfg) {
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < ds.config.classes.size(); ++c) {
        auto rows = ds.indices(data::Split::train, c);
        if (cfg.samples_per_class > 0 && rows.size() > cfg.samples_per_class) rows.resize(cfg.samples_per_class);
        idx.insert(idx.end(), rows.begin(), rows.end());
    }
    return data::make_extractor(ds.config).extract(ds, idx);
}

RunConfig bind_to_dataset(RunConfig cfg, const data::Dataset& ds) {
    cfg.data = ds.config;
    cfg.data_seed_explicit = true;
    cfg.model.channels = ds.config.channels;
    cfg.model.height = cfg.model.width = ds.config.image_size / ds.config.patch;
    if (cfg.pool_kernel > ds.config.image_size) throw ConfigError("eval.pool_kernel exceeds the image size");
    return cfg;
}

RunResult run_once(const RunConfig& cfg, const data::Dataset& ds, const Tensor<float>& train_features,
                   std::uint64_t seed, const EpochCallback& on_epoch,
                   const std::function<void(AnomalyModel<float>&)>& keep) {
    RunResult r;
    r.seed = seed;
    auto model = build_model(cfg, seed);
    AdamW<float> opt(model.parameters(), AdamWConfig{.weight_decay = cfg.train.weight_decay});
    r.log = train(model, opt, train_features, cfg.train, seed, on_epoch);
    r.report = eval::evaluate(model, ds, cfg.pool_kernel);
    r.report.seed = seed;
    RunConfig recorded = cfg;
    recorded.train_seed = seed;
    r.report.config_digest = config_digest(recorded);
    if (keep) keep(model);
    return r;
}

SeedStats seed_stats(std::vector<double> values) {
    SeedStats s;
    s.values = std::move(values);
    if (s.values.empty()) return s;
    const double n = static_cast<double>(s.values.size());
    s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / n);
    return s;
}

std::string perspective_label(const RunConfig& cfg) {
    if (cfg.method.kind != RepresentationKind::grid) return to_string(cfg.method.perspective);
    if (cfg.model.use_local && cfg.model.use_global) return "local+global";
    return cfg.model.use_local ? "local" : "global";
}

CellResult run_cell(const std::string& label, const RunConfig& cfg, const data::Dataset& ds,
                    const Tensor<float>& train_features, const std::vector<std::uint64_t>& seeds,
                    const std::function<void(const std::string&)>& progress) {
    CellResult cell;
    cell.label = label;
    cell.method = to_string(cfg.method.kind);
    cell.perspective = perspective_label(cfg);
    cell.entries = cfg.method.kind == RepresentationKind::grid ? 0 : cfg.method.entries;
    std::vector<double> img, px;
    for (auto seed : seeds) {
        const auto r = run_once(cfg, ds, train_features, seed);
        img.push_back(r.report.mean_image_auroc);
        px.push_back(r.report.mean_pixel_auroc);
        if (progress) {
            progress(label + " seed " + std::to_string(seed) + ": image " + std::to_string(r.report.mean_image_auroc) +
                     " pixel " + std::to_string(r.report.mean_pixel_auroc));
        }
    }
    cell.image = seed_stats(std::move(img));
    cell.pixel = seed_stats(std::move(px));
    return cell;
}

}  // namespace gridad
