#include "gridad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridad/io.hpp"
#include "gridad/rng.hpp"

namespace gridad {

TrainConfig train_profile(const std::string& name) {
    TrainConfig c;
    if (name == "desk") return c;
    if (name == "full") {
        c.profile = "full";
        c.epochs = 100;
        c.batch_size = 64;
        c.milestones = {40, 80};
        return c;
    }
    throw ConfigError("train.profile: unknown profile '" + name + "' (expected desk or full)");
}

void validate(const TrainConfig& cfg) {
    if (cfg.epochs == 0) throw ConfigError("train.epochs must be positive");
    if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(cfg.lr_net > 0) || !(cfg.lr_grid > 0)) throw ConfigError("train learning rates must be positive");
    if (!(cfg.weight_decay >= 0)) throw ConfigError("train.weight_decay must be non-negative");
    if (!(cfg.gamma > 0)) throw ConfigError("train.gamma must be positive");
    // Milestones at or past the last epoch are allowed; they never fire.
    for (std::size_t i = 1; i < cfg.milestones.size(); ++i)
        if (cfg.milestones[i] <= cfg.milestones[i - 1]) throw ConfigError("train.milestones must be strictly increasing");
    if (cfg.seeds.empty()) throw ConfigError("train.seeds must not be empty");
}

double lr_at_epoch(double base_lr, std::size_t epoch, std::span<const std::size_t> milestones, double gamma) {
    double lr = base_lr;
    for (auto m : milestones)
        if (m <= epoch) lr *= gamma;
    return lr;
}

template <typename T>
AdamW<T>::AdamW(ParamList<T> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
        m.emplace_back(p->value.shape());
        v.emplace_back(p->value.shape());
    }
}

template <typename T>
void AdamW<T>::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

template <typename T>
void AdamW<T>::step(double lr_network, double lr_grid) {
    ++step_;
    last_net_ = lr_network;
    last_grid_ = lr_grid;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        if (!p.learnable) continue;
        if (p.grad.shape() != p.value.shape()) throw ConfigError("adamw: gradient shape mismatch for " + p.name);
        const double lr = p.group == ParamGroup::grid ? lr_grid : lr_network;
        const double shrink = 1.0 - lr * cfg_.weight_decay;
        T* w = p.value.data();
        const T* g = p.grad.data();
        T* mk = m[k].data();
        T* vk = v[k].data();
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * mk[i] + (1.0 - b1) * gi;
            const double vi = b2 * vk[i] + (1.0 - b2) * gi * gi;
            mk[i] = static_cast<T>(mi);
            vk[i] = static_cast<T>(vi);
            const double mhat = mi / c1, vhat = vi / c2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) * shrink - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

template class AdamW<float>;
template class AdamW<double>;

Tensor<float> gather_batch(const Tensor<float>& all, std::span<const std::size_t> rows) {
    Shape s = all.shape();
    const std::size_t per = all.size() / s.at(0);
    s[0] = rows.size();
    Tensor<float> out(s);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(all.data() + rows[i] * per, per, out.data() + i * per);
    return out;
}

std::vector<EpochLog> train(AnomalyModel<float>& model, AdamW<float>& opt, const Tensor<float>& features,
                            const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch,
                            std::size_t first_epoch) {
    validate(cfg);
    const std::size_t n = features.dim(0);
    if (n == 0) throw ConfigError("training split is empty");
    std::vector<EpochLog> log;
    std::vector<std::size_t> order(n);
    for (std::size_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng perm(derive_seed(seed, {epoch, 0}));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[perm.below(i + 1)]);
        Rng noise(derive_seed(seed, {epoch, 1}));

        const double lr_net = lr_at_epoch(cfg.lr_net, epoch, cfg.milestones, cfg.gamma);
        const double lr_grid = lr_at_epoch(cfg.lr_grid, epoch, cfg.milestones, cfg.gamma);
        double loss_sum = 0.0;
        std::size_t step = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++step) {
            const std::size_t b = std::min(cfg.batch_size, n - start);
            const auto batch = gather_batch(features, std::span<const std::size_t>(order).subspan(start, b));
            opt.zero_grad();
            Tape<float> tape;
            const auto x = tape.constant(batch);
            double loss = 0.0;
            try {
                const auto fwd = model.forward(x, true, noise);
                const auto l = model.training_loss(x, fwd);
                loss = l.value()[0];
                if (!std::isfinite(loss)) throw NumericalError("loss is " + std::to_string(loss));
                tape.backward(l);
            } catch (const NumericalError& e) {
                throw NumericalError("training aborted at epoch " + std::to_string(epoch) + " step " +
                                     std::to_string(step) + ": " + e.what());
            }
            opt.step(lr_net, lr_grid);
            loss_sum += loss * static_cast<double>(b);
        }
        EpochLog e{epoch, loss_sum / static_cast<double>(n), lr_net, lr_grid};
        log.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    return log;
}

namespace {

using ojson = nlohmann::ordered_json;

struct Entry {
    std::string name;
    Shape shape;
    const Tensor<float>* src;
};

std::vector<Entry> entries(const ParamList<float>& params, const AdamW<float>* opt) {
    std::vector<Entry> out;
    for (const auto* p : params) out.push_back({p->name, p->value.shape(), &p->value});
    if (opt) {
        for (std::size_t k = 0; k < opt->params().size(); ++k)
            out.push_back({"adam.m/" + opt->params()[k]->name, opt->m[k].shape(), &opt->m[k]});
        for (std::size_t k = 0; k < opt->params().size(); ++k)
            out.push_back({"adam.v/" + opt->params()[k]->name, opt->v[k].shape(), &opt->v[k]});
    }
    return out;
}

ojson read_manifest(const std::filesystem::path& dir) {
    const auto bytes = io::read_file(dir / "ckpt.json");
    ojson j;
    try {
        j = ojson::parse(bytes.begin(), bytes.end());
    } catch (const ojson::exception& e) {
        throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint manifest: " + std::string(e.what()));
    }
    const int version = j.value("format_version", -1);
    if (version != kCheckpointFormatVersion)
        throw CheckpointError(CheckpointError::Kind::version,
                              "checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointFormatVersion) + ")");
    return j;
}

std::vector<unsigned char> read_payload(const std::filesystem::path& dir, const ojson& j) {
    const auto bin = io::read_file(dir / "ckpt.bin");
    try {
        if (bin.size() != j.at("bin_bytes").get<std::size_t>())
            throw CheckpointError(CheckpointError::Kind::corrupt,
                                  "corrupt checkpoint: ckpt.bin has " + std::to_string(bin.size()) + " bytes, expected " +
                                      std::to_string(j.at("bin_bytes").get<std::size_t>()));
        if (io::hex64(io::fnv1a64(bin)) != j.at("bin_digest").get<std::string>())
            throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint: ckpt.bin digest mismatch");
    } catch (const ojson::exception& e) {
        throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint manifest: " + std::string(e.what()));
    }
    return bin;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const CheckpointMeta& meta, const ParamList<float>& params,
                     const AdamW<float>* opt) {
    std::filesystem::create_directories(dir);
    std::vector<unsigned char> bin;
    ojson tensors = ojson::array();
    for (const auto& e : entries(params, opt)) {
        const std::size_t offset = bin.size();
        io::append_f32le(bin, e.src->span());
        tensors.push_back({{"name", e.name},
                           {"shape", e.shape},
                           {"dtype", "float32"},
                           {"offset", offset},
                           {"nbytes", bin.size() - offset}});
    }
    ojson j;
    j["format_version"] = kCheckpointFormatVersion;
    j["config_digest"] = meta.config_digest;
    j["method"] = meta.method;
    j["seed"] = meta.seed;
    j["epoch"] = meta.epoch;
    j["optimizer"] = opt ? ojson{{"name", "adamw"}, {"step", opt->steps()}} : ojson(nullptr);
    j["bin_bytes"] = bin.size();
    j["bin_digest"] = io::hex64(io::fnv1a64(bin));
    j["tensors"] = tensors;
    j["config"] = meta.config;
    io::write_file(dir / "ckpt.bin", bin);
    io::write_file(dir / "ckpt.json", j.dump(2) + "\n");
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
    const auto j = read_manifest(dir);
    read_payload(dir, j);
    try {
        CheckpointMeta m;
        m.config = j.at("config");
        m.config_digest = j.at("config_digest").get<std::string>();
        m.method = j.at("method").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.epoch = j.at("epoch").get<std::size_t>();
        return m;
    } catch (const ojson::exception& e) {
        throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint manifest: " + std::string(e.what()));
    }
}

void load_checkpoint(const std::filesystem::path& dir, ParamList<float>& params, AdamW<float>* opt) {
    const auto j = read_manifest(dir);
    const auto bin = read_payload(dir, j);
    const auto& recs = j.at("tensors");

    auto find = [&](const std::string& name) -> const ojson& {
        for (const auto& r : recs)
            if (r.at("name").get<std::string>() == name) return r;
        throw CheckpointError(CheckpointError::Kind::schema, "checkpoint has no tensor '" + name + "'");
    };
    auto load = [&](const std::string& name, Tensor<float>& dst) {
        const auto& r = find(name);
        const auto shape = r.at("shape").get<Shape>();
        if (shape != dst.shape())
            throw CheckpointError(CheckpointError::Kind::schema, "checkpoint tensor '" + name + "' has shape " +
                                                                     shape_string(shape) + ", model expects " +
                                                                     shape_string(dst.shape()));
        if (r.at("dtype").get<std::string>() != "float32")
            throw CheckpointError(CheckpointError::Kind::schema, "checkpoint tensor '" + name + "' is not float32");
        const auto off = r.at("offset").get<std::size_t>();
        const auto nbytes = r.at("nbytes").get<std::size_t>();
        if (nbytes != 4 * dst.size() || off + nbytes > bin.size())
            throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint tensor '" + name + "' is out of range");
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = io::read_f32le(&bin[off + 4 * i]);
    };

    const std::size_t stored_params = std::count_if(recs.begin(), recs.end(), [](const ojson& r) {
        return r.at("name").get<std::string>().rfind("adam.", 0) != 0;
    });
    if (stored_params != params.size())
        throw CheckpointError(CheckpointError::Kind::schema, "checkpoint holds " + std::to_string(stored_params) +
                                                                 " parameters, model has " + std::to_string(params.size()));
    for (auto* p : params) load(p->name, p->value);
    if (opt) {
        if (j.at("optimizer").is_null())
            throw CheckpointError(CheckpointError::Kind::schema, "checkpoint holds no optimizer state");
        for (std::size_t k = 0; k < opt->params().size(); ++k) {
            load("adam.m/" + opt->params()[k]->name, opt->m[k]);
            load("adam.v/" + opt->params()[k]->name, opt->v[k]);
        }
        opt->set_steps(j.at("optimizer").at("step").get<std::uint64_t>());
    }
}

}  // namespace gridad
