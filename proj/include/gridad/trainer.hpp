#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridad/autodiff.hpp"
#include "gridad/layers.hpp"
#include "gridad/model.hpp"
#include "json.hpp"

namespace gridad {

struct TrainConfig {
    std::string profile = "desk";
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr_net = 1e-3;
    double lr_grid = 1e-1;
    double weight_decay = 1e-2;
    std::vector<std::size_t> milestones{12, 24};
    double gamma = 0.1;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t samples_per_class = 0;  // 0 = whole training split
};

/// "desk": 30 epochs, batch 32, decay at 12 and 24.
/// "full": 100 epochs, batch 64, decay at 40 and 80.
TrainConfig train_profile(const std::string& name);
void validate(const TrainConfig& cfg);

/// base * gamma^(number of milestones <= epoch).
double lr_at_epoch(double base_lr, std::size_t epoch, std::span<const std::size_t> milestones, double gamma = 0.1);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

/// AdamW with decoupled weight decay and one learning rate per ParamGroup.
/// Non-learnable parameters are skipped.
template <typename T>
class AdamW {
public:
    AdamW(ParamList<T> params, AdamWConfig cfg = {});

    /// One update from the gradients currently stored in the parameters.
    void step(double lr_network, double lr_grid);
    void zero_grad();

    [[nodiscard]] std::uint64_t steps() const noexcept { return step_; }
    /// Learning rate applied to a group in the last step (0 before any step).
    [[nodiscard]] double last_lr(ParamGroup g) const noexcept { return g == ParamGroup::grid ? last_grid_ : last_net_; }
    [[nodiscard]] const ParamList<T>& params() const noexcept { return params_; }
    [[nodiscard]] const AdamWConfig& config() const noexcept { return cfg_; }

    // Moment buffers, aligned with params(); exposed for checkpointing.
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    void set_steps(std::uint64_t s) noexcept { step_ = s; }

private:
    ParamList<T> params_;
    AdamWConfig cfg_;
    std::uint64_t step_ = 0;
    double last_net_ = 0.0;
    double last_grid_ = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double lr_network = 0.0;
    double lr_grid = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on precomputed (N, C, H, W) normal features. Batches follow a
/// permutation drawn per epoch from `seed`; the last batch may be short.
/// Throws NumericalError (with epoch and step) on a non-finite loss.
std::vector<EpochLog> train(AnomalyModel<float>& model, AdamW<float>& opt, const Tensor<float>& features,
                            const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch = {},
                            std::size_t first_epoch = 0);

/// Rows of one batch gathered from an (N, ...) tensor.
Tensor<float> gather_batch(const Tensor<float>& all, std::span<const std::size_t> rows);

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { version, corrupt, schema };
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

struct CheckpointMeta {
    nlohmann::ordered_json config;  // the run configuration the model was built from
    std::string config_digest;
    std::string method;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;          // completed epochs
};

/// Writes dir/ckpt.json and dir/ckpt.bin (parameters, then optimizer moments
/// when opt is given; float32 little-endian in manifest order).
void save_checkpoint(const std::filesystem::path& dir, const CheckpointMeta& meta, const ParamList<float>& params,
                     const AdamW<float>* opt = nullptr);
/// Reads and validates ckpt.json only (version, digest of ckpt.bin).
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);
/// Loads values (and moments when opt is given) into existing parameters.
/// Names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& dir, ParamList<float>& params, AdamW<float>* opt = nullptr);

}  // namespace gridad
