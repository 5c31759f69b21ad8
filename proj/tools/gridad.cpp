// Command-line entry point: gen-data, train, eval, compare, ablate, export-coords.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridad/config.hpp"
#include "gridad/data.hpp"
#include "gridad/eval.hpp"
#include "gridad/experiment.hpp"
#include "gridad/io.hpp"
#include "gridad/trainer.hpp"

namespace fs = std::filesystem;
using namespace gridad;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitNumerical = 3;
constexpr int kOutputFormatVersion = 1;

// Usage problems detected after argument parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

RunConfig config_or_default(const std::string& path) {
    return path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(path);
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

void print_digest(const std::string& digest) { std::cout << "config digest: " << digest << '\n'; }

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const char* what) {
    std::vector<std::size_t> out;
    for (const auto& t : split(s, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": '" + t + "' is not a non-negative integer");
        }
    }
    return out;
}

void require_empty_dir(const fs::path& out, bool force) {
    if (fs::exists(out) && !fs::is_directory(out)) throw UsageError(out.string() + " exists and is not a directory");
    if (fs::exists(out) && !fs::is_empty(out) && !force)
        throw UsageError(out.string() + " is not empty (use --force to overwrite)");
}

struct LoadedModel {
    CheckpointMeta meta;
    RunConfig cfg;
    std::unique_ptr<AnomalyModel<float>> model;
};

LoadedModel load_model(const fs::path& ckpt) {
    LoadedModel lm;
    lm.meta = read_checkpoint_meta(ckpt);
    lm.cfg = parse_run_config(nlohmann::json::parse(lm.meta.config.dump()));
    lm.model = std::make_unique<AnomalyModel<float>>(build_model(lm.cfg, lm.meta.seed));
    auto params = lm.model->parameters();
    load_checkpoint(ckpt, params);
    return lm;
}

void check_compatible(const RunConfig& cfg, const data::Dataset& ds) {
    const auto& a = cfg.data;
    const auto& b = ds.config;
    if (a.image_size != b.image_size || a.patch != b.patch || a.channels != b.channels || a.seed != b.seed)
        throw UsageError("dataset geometry or feature seed differs from the one the checkpoint was trained on");
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const std::string& config, const std::string& out, bool force, std::optional<std::uint64_t> seed) {
    auto cfg = config_or_default(config);
    cfg.data.seed = resolve_seed(seed, cfg.data_seed_explicit ? std::optional(cfg.data.seed) : std::nullopt);
    require_empty_dir(out, force);
    const auto ds = data::generate_dataset(cfg.data);
    data::write_dataset(ds, out);
    print_digest(config_digest(cfg));
    log("wrote " + std::to_string(ds.samples.size()) + " samples to " + out);
    return kExitOk;
}

int cmd_train(const std::string& config, const std::string& data_dir, const std::string& out,
              std::optional<std::uint64_t> seed_flag) {
    auto cfg = config_or_default(config);
    const auto ds = data::read_dataset(data_dir);
    cfg = bind_to_dataset(cfg, ds);
    const auto seed = resolve_seed(seed_flag, cfg.train_seed);
    cfg.train_seed = seed;
    const auto digest = config_digest(cfg);
    print_digest(digest);

    const auto feats = training_features(ds, cfg.train);
    auto model = build_model(cfg, seed);
    AdamW<float> opt(model.parameters(), AdamWConfig{.weight_decay = cfg.train.weight_decay});
    std::string csv = "# format_version: " + std::to_string(kOutputFormatVersion) + "\nepoch,mean_loss,lr_net,lr_grid\n";
    train(model, opt, feats, cfg.train, seed, [&](const EpochLog& e) {
        char line[160];
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", e.epoch, e.mean_loss, e.lr_network, e.lr_grid);
        csv += line;
        log("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
    });
    CheckpointMeta meta{to_json(cfg), digest, to_string(cfg.method.kind), seed, cfg.train.epochs};
    save_checkpoint(out, meta, model.parameters(), &opt);
    io::write_file(fs::path(out) / "train_log.csv", csv);
    log("checkpoint written to " + out);
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& report_path,
             const std::string& classes) {
    auto lm = load_model(ckpt);
    print_digest(lm.meta.config_digest);
    const auto ds = data::read_dataset(data_dir);
    check_compatible(lm.cfg, ds);
    auto rep = eval::evaluate(*lm.model, ds, lm.cfg.pool_kernel, split(classes, ','));
    rep.seed = lm.meta.seed;
    rep.config_digest = lm.meta.config_digest;
    const auto text = rep.to_json().dump(2) + "\n";
    if (report_path.empty() || report_path == "-") {
        std::cout << text;
    } else {
        io::write_file(report_path, text);
    }
    log("mean image AUROC " + std::to_string(rep.mean_image_auroc) + ", mean pixel AUROC " +
        std::to_string(rep.mean_pixel_auroc));
    return kExitOk;
}

void write_table(const fs::path& out, const std::string& kind, const RunConfig& base,
                 const std::vector<CellResult>& cells) {
    fs::create_directories(out);
    ojson rows = ojson::array();
    std::string csv = "# format_version: " + std::to_string(kOutputFormatVersion) +
                      "\nlabel,method,perspective,entries,image_auroc_mean,image_auroc_std,pixel_auroc_mean,pixel_auroc_std\n";
    for (const auto& c : cells) {
        rows.push_back({{"label", c.label},
                        {"method", c.method},
                        {"perspective", c.perspective},
                        {"entries", c.entries},
                        {"image_auroc", {{"mean", c.image.mean}, {"std", c.image.std}, {"per_seed", c.image.values}}},
                        {"pixel_auroc", {{"mean", c.pixel.mean}, {"std", c.pixel.std}, {"per_seed", c.pixel.values}}}});
        char line[512];
        std::snprintf(line, sizeof line, "%s,%s,%s,%zu,%.6f,%.6f,%.6f,%.6f\n", c.label.c_str(), c.method.c_str(),
                      c.perspective.c_str(), c.entries, c.image.mean, c.image.std, c.pixel.mean, c.pixel.std);
        csv += line;
    }
    ojson j;
    j["format_version"] = kOutputFormatVersion;
    j["kind"] = kind;
    j["config_digest"] = config_digest(base);
    j["seeds"] = base.train.seeds;
    j["std"] = "population";
    j["rows"] = rows;
    io::write_file(out / (kind + ".json"), j.dump(2) + "\n");
    io::write_file(out / (kind + ".csv"), csv);
}

int cmd_compare(const std::string& config, const std::string& data_dir, const std::string& methods,
                const std::string& perspectives, const std::string& local_entries, const std::string& global_entries,
                const std::string& out) {
    auto base = config_or_default(config);
    const auto ds = data::read_dataset(data_dir);
    base = bind_to_dataset(base, ds);
    print_digest(config_digest(base));
    const auto feats = training_features(ds, base.train);

    std::vector<CellResult> cells;
    for (const auto& p : split(perspectives, ',')) {
        if (p != "local" && p != "global") throw UsageError("--perspectives: expected local and/or global, got '" + p + "'");
        const bool local = p == "local";
        for (const auto& m : split(methods, ',')) {
            const auto kind = parse_representation_kind(m);
            RunConfig cfg = base;
            cfg.method.kind = kind;
            if (kind == RepresentationKind::grid) {
                cfg.model.use_local = local;
                cfg.model.use_global = !local;
                cells.push_back(run_cell("grad-" + p, cfg, ds, feats, base.train.seeds, log));
                continue;
            }
            cfg.method.perspective = local ? Perspective::local : Perspective::global;
            for (auto e : parse_sizes(local ? local_entries : global_entries, "--entries")) {
                cfg.method.entries = e;
                cells.push_back(run_cell(m + "-" + p + "-" + std::to_string(e), cfg, ds, feats, base.train.seeds, log));
            }
        }
    }
    write_table(out, "compare", base, cells);
    log("comparison written to " + out);
    return kExitOk;
}

int cmd_ablate(const std::string& config, const std::string& data_dir, const std::string& out) {
    auto base = config_or_default(config);
    const auto ds = data::read_dataset(data_dir);
    base = bind_to_dataset(base, ds);
    base.method.kind = RepresentationKind::grid;
    base.model.use_local = base.model.use_global = true;
    print_digest(config_digest(base));
    const auto feats = training_features(ds, base.train);

    struct Row {
        const char* label;
        bool local, global, refine, jitter;
    };
    const Row rows[] = {{"local_only", true, false, true, true},
                        {"global_only", false, true, true, true},
                        {"local_global_no_refine", true, true, false, true},
                        {"local_global_no_jitter", true, true, true, false},
                        {"full", true, true, true, true}};
    std::vector<CellResult> cells;
    for (const auto& r : rows) {
        RunConfig cfg = base;
        cfg.model.use_local = r.local;
        cfg.model.use_global = r.global;
        cfg.model.refine.enabled = r.refine;
        cfg.model.jitter.enabled = r.jitter;
        cells.push_back(run_cell(r.label, cfg, ds, feats, base.train.seeds, log));
    }
    write_table(out, "ablation", base, cells);
    log("ablation written to " + out);
    return kExitOk;
}

std::vector<std::vector<double>> parse_coords(const std::string& s, std::size_t dims) {
    std::vector<std::vector<double>> out;
    for (const auto& item : split(s, ';')) {
        std::vector<double> c;
        for (const auto& t : split(item, ',')) {
            try {
                std::size_t used = 0;
                c.push_back(std::stod(t, &used));
                if (used != t.size()) throw std::invalid_argument(t);
            } catch (const std::exception&) {
                throw UsageError("--global-coords: '" + t + "' is not a number");
            }
        }
        if (c.size() != dims)
            throw UsageError("--global-coords: each coordinate needs " + std::to_string(dims) + " components");
        for (double v : c)
            if (v < -1.0 || v > 1.0) throw UsageError("--global-coords: components must lie in [-1, 1]");
        out.push_back(std::move(c));
    }
    return out;
}

int cmd_export_coords(const std::string& ckpt, const std::string& data_dir, const std::string& out,
                      const std::string& split_name, const std::string& global_coords) {
    auto lm = load_model(ckpt);
    print_digest(lm.meta.config_digest);
    if (lm.model->kind() != RepresentationKind::grid) throw UsageError("export-coords needs a grid (grad) checkpoint");
    const auto ds = data::read_dataset(data_dir);
    check_compatible(lm.cfg, ds);
    if (split_name != "train" && split_name != "test") throw UsageError("--split: expected train or test");
    const auto indices = ds.indices(split_name == "train" ? data::Split::train : data::Split::test);
    const auto& mc = lm.cfg.model;
    const std::size_t H = mc.height, W = mc.width, p = ds.config.patch, S = ds.config.image_size;
    const auto fx = data::make_extractor(ds.config);
    fs::create_directories(out);

    const std::string header = "# format_version: " + std::to_string(kOutputFormatVersion) + "\n";
    std::string local_csv = header + "image,class_id,label,pixel,h,w,abnormal";
    for (std::size_t d = 0; d < mc.local_dims; ++d) local_csv += ",l" + std::to_string(d);
    local_csv += "\n";
    std::string global_csv = header + "image,class_id,label";
    for (std::size_t d = 0; d < mc.global_dims; ++d) global_csv += ",g" + std::to_string(d);
    global_csv += "\n";

    Rng unused(0);
    const std::size_t batch = 32;
    char buf[64];
    for (std::size_t start = 0; start < indices.size(); start += batch) {
        const std::size_t n = std::min(batch, indices.size() - start);
        const std::span<const std::size_t> sel(indices.data() + start, n);
        Tape<float> tape(false);
        const auto fwd = lm.model->forward(tape.constant(fx.extract(ds, sel)), false, unused);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = ds.samples[sel[i]];
            const std::string prefix = std::to_string(sel[i]) + "," + std::to_string(s.class_id) + "," +
                                       (s.anomalous ? "1" : "0");
            if (fwd.local_coords) {
                const auto& lc = fwd.local_coords->value();
                for (std::size_t h = 0; h < H; ++h) {
                    for (std::size_t w = 0; w < W; ++w) {
                        bool abnormal = false;
                        for (std::size_t dy = 0; dy < p; ++dy)
                            for (std::size_t dx = 0; dx < p; ++dx) abnormal |= s.mask[(h * p + dy) * S + w * p + dx] != 0;
                        local_csv += prefix + "," + std::to_string(h * W + w) + "," + std::to_string(h) + "," +
                                     std::to_string(w) + "," + (abnormal ? "1" : "0");
                        for (std::size_t d = 0; d < mc.local_dims; ++d) {
                            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(lc.at(i, d, h, w)));
                            local_csv += buf;
                        }
                        local_csv += "\n";
                    }
                }
            }
            if (fwd.global_coords) {
                const auto& gc = fwd.global_coords->value();
                global_csv += prefix;
                for (std::size_t d = 0; d < mc.global_dims; ++d) {
                    std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(gc[i * mc.global_dims + d]));
                    global_csv += buf;
                }
                global_csv += "\n";
            }
        }
    }
    if (mc.use_local) io::write_file(fs::path(out) / "local_coords.csv", local_csv);
    if (mc.use_global) io::write_file(fs::path(out) / "global_coords.csv", global_csv);

    if (!global_coords.empty()) {
        auto* rep = dynamic_cast<GlobalGridRepresentation<float>*>(lm.model->global());
        if (rep == nullptr) throw UsageError("--global-coords needs a checkpoint with a global grid");
        ojson samples = ojson::array();
        for (const auto& c : parse_coords(global_coords, mc.global_dims)) {
            const std::vector<float> coord(c.begin(), c.end());
            samples.push_back({{"coord", c}, {"values", rep->grid.sample(coord)}});
        }
        ojson j;
        j["format_version"] = kOutputFormatVersion;
        j["config_digest"] = lm.meta.config_digest;
        j["shape"] = {mc.channels, H, W};
        j["samples"] = samples;
        io::write_file(fs::path(out) / "global_samples.json", j.dump() + "\n");
    }
    log("coordinates written to " + out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    io::keep_heap_resident();
    CLI::App app{"Continuous-grid anomaly detection: data generation, training, evaluation and analysis"};
    app.require_subcommand(1);

    std::string config, out, data_dir, ckpt, report, classes, methods = "grad,vq,attention",
                perspectives = "local,global", local_entries = "64", global_entries = "16", split_name = "test",
                global_coords;
    std::optional<std::uint64_t> seed;
    bool force = false;

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
    gen->add_option("--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--seed", seed, "Dataset seed");
    gen->add_flag("--force", force, "Overwrite a non-empty output directory");

    auto* tr = app.add_subcommand("train", "Train one model and write a checkpoint");
    tr->add_option("--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    tr->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", out, "Checkpoint directory")->required();
    tr->add_option("--seed", seed, "Training seed");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--report", report, "Report path (JSON); '-' or omitted prints to stdout");
    ev->add_option("--classes", classes, "Comma-separated class filter");

    auto* cmp = app.add_subcommand("compare", "Grid vs discrete-memory comparison over seeds");
    cmp->add_option("--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    cmp->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    cmp->add_option("--methods", methods, "Comma-separated subset of grad,vq,attention");
    cmp->add_option("--perspectives", perspectives, "Comma-separated subset of local,global");
    cmp->add_option("--entries,--local-entries", local_entries, "Memory sizes for local baselines");
    cmp->add_option("--global-entries", global_entries, "Memory sizes for global baselines");
    cmp->add_option("--out", out, "Output directory")->required();

    auto* abl = app.add_subcommand("ablate", "Local/global/refinement/jitter ablation over seeds");
    abl->add_option("--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    abl->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    abl->add_option("--out", out, "Output directory")->required();

    auto* exp = app.add_subcommand("export-coords", "Export coordinates and global-grid samples for plotting");
    exp->add_option("--ckpt", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    exp->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    exp->add_option("--out", out, "Output directory")->required();
    exp->add_option("--split", split_name, "train or test");
    exp->add_option("--global-coords", global_coords, "Global coordinates to sample, e.g. \"0,0;0.5,-1\"");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) return cmd_gen_data(config, out, force, seed);
        if (*tr) return cmd_train(config, data_dir, out, seed);
        if (*ev) return cmd_eval(ckpt, data_dir, report, classes);
        if (*cmp) return cmd_compare(config, data_dir, methods, perspectives, local_entries, global_entries, out);
        if (*abl) return cmd_ablate(config, data_dir, out);
        if (*exp) return cmd_export_coords(ckpt, data_dir, out, split_name, global_coords);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
