#include "gridad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gridad/autodiff.hpp"

namespace gridad::eval {

namespace {

template <typename S>
double auroc_impl(std::span<const S> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: scores and labels differ in length");
    std::uint64_t n_pos = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw NumericalError("auroc: NaN score");
        n_pos += labels[i] != 0;
    }
    const std::uint64_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: needs both positive and negative samples");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the positive rank sum; a tie group [i, j) has average 1-based rank (i + j + 1) / 2.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        std::uint64_t pos_in_group = 0;
        for (std::size_t k = i; k < j; ++k) pos_in_group += labels[order[k]] != 0;
        twice_rank_sum += pos_in_group * (i + j + 1);
        i = j;
    }
    const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    return auroc_impl(scores, labels);
}

double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
    return auroc_impl(scores, labels);
}

double pixel_auroc(const Tensor<float>& maps, std::span<const std::uint8_t> masks) {
    if (maps.size() != masks.size())
        throw std::invalid_argument("pixel_auroc: maps " + shape_string(maps.shape()) + " and masks (" +
                                    std::to_string(masks.size()) + " pixels) differ");
    return auroc(maps.span(), masks);
}

std::vector<std::size_t> test_indices(const data::Dataset& ds, const std::vector<std::string>& classes) {
    const auto& names = ds.config.classes;
    std::vector<std::string> wanted = classes.empty() ? names : classes;
    std::vector<std::size_t> out;
    for (const auto& w : wanted) {
        const auto it = std::find(names.begin(), names.end(), w);
        if (it == names.end()) throw ConfigError("class '" + w + "' is not in the dataset");
        const auto idx = ds.indices(data::Split::test, static_cast<std::size_t>(it - names.begin()));
        if (idx.empty()) throw ConfigError("class '" + w + "' has no test samples");
        out.insert(out.end(), idx.begin(), idx.end());
    }
    return out;
}

Scores score_samples(AnomalyModel<float>& model, const data::Dataset& ds, const data::FeatureExtractor& fx,
                     std::span<const std::size_t> indices, std::size_t pool_kernel, std::size_t batch) {
    const std::size_t S = ds.config.image_size;
    Scores out;
    out.indices.assign(indices.begin(), indices.end());
    out.image.reserve(indices.size());
    out.maps = Tensor<float>({indices.size(), S, S});
    Rng unused(0);
    for (std::size_t start = 0; start < indices.size(); start += batch) {
        const std::size_t n = std::min(batch, indices.size() - start);
        const auto feats = fx.extract(ds, indices.subspan(start, n));
        Tape<float> tape(false);
        const auto x = tape.constant(feats);
        const auto fwd = model.forward(x, false, unused);
        const auto maps = anomaly_maps(feats, fwd.reconstruction.value(), S);
        for (std::size_t i = 0; i < n; ++i) {
            const std::span<const float> m(maps.data() + i * S * S, S * S);
            out.image.push_back(image_score(m, S, S, pool_kernel));
        }
        std::copy(maps.vec().begin(), maps.vec().end(), out.maps.vec().begin() + static_cast<std::ptrdiff_t>(start * S * S));
    }
    return out;
}

EvalReport report_from_scores(const data::Dataset& ds, const Scores& scores, const std::vector<std::string>& classes) {
    const std::size_t S = ds.config.image_size;
    const auto& names = ds.config.classes;
    const std::vector<std::string> wanted = classes.empty() ? names : classes;

    EvalReport rep;
    for (const auto& w : wanted) {
        const auto it = std::find(names.begin(), names.end(), w);
        if (it == names.end()) throw ConfigError("class '" + w + "' is not in the dataset");
        const auto cid = static_cast<std::size_t>(it - names.begin());

        ClassMetrics cm;
        cm.name = w;
        std::vector<double> img;
        std::vector<std::uint8_t> img_labels;
        std::vector<float> px;
        std::vector<std::uint8_t> px_labels;
        for (std::size_t k = 0; k < scores.indices.size(); ++k) {
            const auto& s = ds.samples.at(scores.indices[k]);
            if (s.class_id != cid || s.split != data::Split::test) continue;
            (s.anomalous ? cm.anomalous : cm.normal)++;
            img.push_back(scores.image[k]);
            img_labels.push_back(s.anomalous ? 1 : 0);
            px.insert(px.end(), scores.maps.data() + k * S * S, scores.maps.data() + (k + 1) * S * S);
            px_labels.insert(px_labels.end(), s.mask.begin(), s.mask.end());
        }
        if (cm.normal == 0 || cm.anomalous == 0)
            throw ConfigError("class '" + w + "' needs normal and anomalous test samples");
        cm.image_auroc = auroc(std::span<const double>(img), img_labels);
        cm.pixel_auroc = auroc(std::span<const float>(px), px_labels);
        rep.classes.push_back(cm);
    }
    for (const auto& c : rep.classes) {
        rep.mean_image_auroc += c.image_auroc;
        rep.mean_pixel_auroc += c.pixel_auroc;
    }
    rep.mean_image_auroc /= static_cast<double>(rep.classes.size());
    rep.mean_pixel_auroc /= static_cast<double>(rep.classes.size());
    return rep;
}

EvalReport evaluate(AnomalyModel<float>& model, const data::Dataset& ds, std::size_t pool_kernel,
                    const std::vector<std::string>& classes) {
    const auto idx = test_indices(ds, classes);
    const auto fx = data::make_extractor(ds.config);
    const auto scores = score_samples(model, ds, fx, idx, pool_kernel);
    auto rep = report_from_scores(ds, scores, classes);
    rep.pool_kernel = pool_kernel;
    rep.method = to_string(model.kind());
    return rep;
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["format_version"] = kReportFormatVersion;
    j["method"] = method;
    j["config_digest"] = config_digest;
    j["seed"] = seed;
    j["pool_kernel"] = pool_kernel;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : classes) {
        arr.push_back({{"class", c.name},
                       {"image_auroc", c.image_auroc},
                       {"pixel_auroc", c.pixel_auroc},
                       {"normal", c.normal},
                       {"anomalous", c.anomalous}});
    }
    j["classes"] = arr;
    j["mean_image_auroc"] = mean_image_auroc;
    j["mean_pixel_auroc"] = mean_pixel_auroc;
    return j;
}

}  // namespace gridad::eval
