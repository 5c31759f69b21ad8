#include "gridad/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "gridad/baselines.hpp"
#include "gridad/io.hpp"

namespace gridad {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads optional keys of one JSON object and rejects the rest.
class Section {
public:
    Section(const json& parent, const std::string& key, const std::string& prefix)
        : path_(prefix.empty() ? key : prefix + "." + key) {
        if (!parent.contains(key)) return;
        node_ = &parent.at(key);
        if (!node_->is_object()) throw ConfigError(path_ + ": expected an object");
    }
    explicit Section(const json& root) : node_(&root) {
        if (!root.is_object()) throw ConfigError("config: expected a JSON object");
    }

    [[nodiscard]] bool present() const { return node_ != nullptr; }
    [[nodiscard]] const json* node() const { return node_; }
    [[nodiscard]] std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    template <typename T>
    bool get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!node_ || !node_->contains(key)) return false;
        const auto& v = node_->at(key);
        try {
            check_type<T>(v, key);
            out = v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path(key) + ": " + e.what());
        }
        return true;
    }

    void allow(const std::string& key) { seen_.insert(key); }

    void finish() const {
        if (!node_) return;
        for (const auto& [k, v] : node_->items())
            if (!seen_.count(k)) throw ConfigError("unknown config key '" + path(k) + "'");
    }

private:
    template <typename T>
    void check_type(const json& v, const std::string& key) const {
        bool ok = true;
        if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
        else if constexpr (std::is_integral_v<T>) ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
        else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
        else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
        if (!ok) throw ConfigError(path(key) + ": unexpected value " + v.dump());
    }

    const json* node_ = nullptr;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename T>
std::vector<T> get_list(Section& s, const std::string& key, std::vector<T> fallback) {
    json arr;
    if (!s.get(key, arr)) return fallback;
    if (!arr.is_array()) throw ConfigError(s.path(key) + ": expected an array");
    std::vector<T> out;
    for (const auto& v : arr) {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(s.path(key) + ": expected strings");
        } else {
            if (!v.is_number_unsigned()) throw ConfigError(s.path(key) + ": expected non-negative integers");
        }
        out.push_back(v.get<T>());
    }
    return out;
}

Perspective parse_perspective(const std::string& s) {
    if (s == "local") return Perspective::local;
    if (s == "global") return Perspective::global;
    throw ConfigError("method.perspective: expected local or global, got '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    Section root(j);

    {
        root.allow("data");
        Section s(j, "data", "");
        auto& d = cfg.data;
        d.classes = get_list<std::string>(s, "classes", d.classes);
        if (s.present() && s.node()->contains("counts")) {
            s.allow("counts");
            Section c(*s.node(), "counts", "data");
            c.get("train_per_class", d.train_per_class);
            c.get("test_normal_per_class", d.test_normal_per_class);
            c.get("test_anomalous_per_class", d.test_anomalous_per_class);
            c.finish();
        } else {
            s.allow("counts");
        }
        s.get("image_size", d.image_size);
        s.get("patch", d.patch);
        s.get("channels", d.channels);
        cfg.data_seed_explicit = s.get("seed", d.seed);
        if (s.present() && s.node()->contains("anomaly_mix")) {
            Section m(*s.node(), "anomaly_mix", "data");
            m.get("patch", d.mix.patch);
            m.get("scratch", d.mix.scratch);
            m.get("structural", d.mix.structural);
            m.finish();
        }
        s.allow("anomaly_mix");
        if (s.present() && s.node()->contains("patch_area")) {
            Section a(*s.node(), "patch_area", "data");
            a.get("min", d.patch_area_min);
            a.get("max", d.patch_area_max);
            a.finish();
        }
        s.allow("patch_area");
        s.finish();
    }
    {
        root.allow("model");
        Section s(j, "model", "");
        auto& m = cfg.model;
        s.get("c_l", m.local_dims);
        s.get("c_g", m.global_dims);
        s.get("r_l", m.local_resolution);
        s.get("r_g", m.global_resolution);
        s.get("psi_blocks", m.psi_blocks);
        bool local_only = false, global_only = false;
        s.get("local_only", local_only);
        s.get("global_only", global_only);
        if (local_only && global_only) throw ConfigError("model.local_only and model.global_only are exclusive");
        m.use_local = !global_only;
        m.use_global = !local_only;
        s.finish();
    }
    {
        root.allow("refine");
        Section s(j, "refine", "");
        auto& r = cfg.model.refine;
        s.get("lambda1", r.lambda1);
        s.get("lambda2", r.lambda2);
        s.get("k", r.threshold);
        s.get("enabled", r.enabled);
        s.finish();
    }
    {
        root.allow("jitter");
        Section s(j, "jitter", "");
        auto& r = cfg.model.jitter;
        s.get("fraction", r.fraction);
        s.get("scale", r.scale);
        s.get("enabled", r.enabled);
        s.finish();
    }
    {
        root.allow("train");
        Section s(j, "train", "");
        std::string profile = "desk";
        s.get("profile", profile);
        cfg.train = train_profile(profile);
        auto& t = cfg.train;
        s.get("epochs", t.epochs);
        s.get("batch_size", t.batch_size);
        s.get("lr_net", t.lr_net);
        s.get("lr_grid", t.lr_grid);
        s.get("weight_decay", t.weight_decay);
        t.milestones = get_list<std::size_t>(s, "milestones", t.milestones);
        s.get("gamma", t.gamma);
        t.seeds = get_list<std::uint64_t>(s, "seeds", t.seeds);
        s.get("samples_per_class", t.samples_per_class);
        std::uint64_t seed = 0;
        if (s.get("seed", seed)) cfg.train_seed = seed;
        s.finish();
    }
    {
        root.allow("eval");
        Section s(j, "eval", "");
        s.get("pool_kernel", cfg.pool_kernel);
        s.finish();
    }
    {
        root.allow("method");
        Section s(j, "method", "");
        std::string name = "grad", perspective = "local";
        s.get("name", name);
        cfg.method.kind = parse_representation_kind(name);
        if (s.get("perspective", perspective)) cfg.method.perspective = parse_perspective(perspective);
        s.get("entries", cfg.method.entries);
        s.get("commitment", cfg.method.commitment);
        s.finish();
    }
    root.allow("format_version");
    root.finish();

    data::validate(cfg.data);
    cfg.model.channels = cfg.data.channels;
    cfg.model.height = cfg.model.width = cfg.data.image_size / cfg.data.patch;
    validate(cfg.model);
    validate(cfg.train);
    if (cfg.pool_kernel == 0 || cfg.pool_kernel % 2 == 0 || cfg.pool_kernel > cfg.data.image_size)
        throw ConfigError("eval.pool_kernel must be odd and at most data.image_size");
    if (cfg.method.kind != RepresentationKind::grid && cfg.method.entries == 0)
        throw ConfigError("method.entries must be positive");
    if (!(cfg.method.commitment >= 0)) throw ConfigError("method.commitment must be non-negative");
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw ConfigError("cannot open config " + p.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config " + p.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

ojson to_json(const RunConfig& cfg) {
    const auto& d = cfg.data;
    const auto& m = cfg.model;
    const auto& t = cfg.train;
    ojson j;
    j["data"] = {{"classes", d.classes},
                 {"counts",
                  {{"train_per_class", d.train_per_class},
                   {"test_normal_per_class", d.test_normal_per_class},
                   {"test_anomalous_per_class", d.test_anomalous_per_class}}},
                 {"image_size", d.image_size},
                 {"patch", d.patch},
                 {"channels", d.channels},
                 {"seed", d.seed},
                 {"anomaly_mix", {{"patch", d.mix.patch}, {"scratch", d.mix.scratch}, {"structural", d.mix.structural}}},
                 {"patch_area", {{"min", d.patch_area_min}, {"max", d.patch_area_max}}}};
    j["model"] = {{"c_l", m.local_dims},
                  {"c_g", m.global_dims},
                  {"r_l", m.local_resolution},
                  {"r_g", m.global_resolution},
                  {"psi_blocks", m.psi_blocks},
                  {"local_only", m.use_local && !m.use_global},
                  {"global_only", m.use_global && !m.use_local}};
    j["refine"] = {{"lambda1", m.refine.lambda1},
                   {"lambda2", m.refine.lambda2},
                   {"k", m.refine.threshold},
                   {"enabled", m.refine.enabled}};
    j["jitter"] = {{"fraction", m.jitter.fraction}, {"scale", m.jitter.scale}, {"enabled", m.jitter.enabled}};
    j["train"] = {{"profile", t.profile},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"lr_net", t.lr_net},
                  {"lr_grid", t.lr_grid},
                  {"weight_decay", t.weight_decay},
                  {"milestones", t.milestones},
                  {"gamma", t.gamma},
                  {"seeds", t.seeds},
                  {"samples_per_class", t.samples_per_class}};
    if (cfg.train_seed) j["train"]["seed"] = *cfg.train_seed;
    j["eval"] = {{"pool_kernel", cfg.pool_kernel}};
    j["method"] = {{"name", to_string(cfg.method.kind)},
                   {"perspective", to_string(cfg.method.perspective)},
                   {"entries", cfg.method.entries},
                   {"commitment", cfg.method.commitment}};
    return j;
}

std::string config_digest(const RunConfig& cfg) { return io::hex64(io::fnv1a64(to_json(cfg).dump())); }

std::uint64_t resolve_seed(std::optional<std::uint64_t> cli, std::optional<std::uint64_t> config,
                           std::uint64_t fallback) {
    if (cli) return *cli;
    if (config) return *config;
    if (const char* env = std::getenv("GRAD_SEED"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0' || env[0] == '-') throw ConfigError("GRAD_SEED must be a non-negative integer, got '" + std::string(env) + "'");
        return v;
    }
    return fallback;
}

AnomalyModel<float> build_model(const RunConfig& cfg, std::uint64_t seed) {
    if (cfg.method.kind == RepresentationKind::grid) return make_grad_model<float>(cfg.model, seed);
    return build_baseline<float>(cfg.method.kind, cfg.method.perspective, cfg.method.entries, cfg.model, seed,
                                 cfg.method.commitment);
}

}  // namespace gridad
