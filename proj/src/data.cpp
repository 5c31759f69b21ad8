#include "gridad/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "gridad/io.hpp"
#include "json.hpp"

namespace gridad::data {

namespace {

using json = nlohmann::json;
constexpr double kPi = std::numbers::pi;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

// Vertical soft square wave: two intensity plateaus, so the histogram is bimodal.
std::vector<float> render_stripes(std::size_t S, Rng& rng) {
    const double period = rng.uniform(8.0, 12.0);
    const double phase = rng.uniform(0.0, period);
    const double lo = 0.2 + rng.uniform(-0.05, 0.05);
    const double hi = 0.8 + rng.uniform(-0.05, 0.05);
    const double bright = rng.uniform(-0.04, 0.04);
    std::vector<double> img(S * S);
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
            const double s = std::sin(2.0 * kPi * (static_cast<double>(x) + phase) / period);
            const double t = 0.5 + 0.5 * std::tanh(4.0 * s);
            img[y * S + x] = clamp01(lo + (hi - lo) * t + bright + 0.02 * rng.normal());
        }
    }
    return to_float(img);
}

// Cells twice as wide as tall.
std::vector<float> render_checker(std::size_t S, Rng& rng) {
    const double cw = rng.uniform(10.0, 14.0);
    const double ch = cw / 2.0;
    const double ox = rng.uniform(0.0, 2.0 * cw);
    const double oy = rng.uniform(0.0, 2.0 * ch);
    const double a = 0.3 + rng.uniform(-0.05, 0.05);
    const double b = 0.7 + rng.uniform(-0.05, 0.05);
    std::vector<double> img(S * S);
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
            const auto cx = static_cast<long>(std::floor((static_cast<double>(x) + ox) / cw));
            const auto cy = static_cast<long>(std::floor((static_cast<double>(y) + oy) / ch));
            const double v = ((cx + cy) % 2 == 0) ? a : b;
            img[y * S + x] = clamp01(v + 0.02 * rng.normal());
        }
    }
    return to_float(img);
}

// Horizontally elongated Gaussian bumps on a dark background.
std::vector<float> render_blobs(std::size_t S, Rng& rng) {
    const double bg = 0.25 + rng.uniform(-0.05, 0.05);
    const std::size_t count = 4 + rng.below(3);
    struct Blob { double cx, cy, sx, sy, amp; };
    std::vector<Blob> blobs(count);
    for (auto& bl : blobs) {
        bl.cx = rng.uniform(0.0, static_cast<double>(S));
        bl.cy = rng.uniform(0.0, static_cast<double>(S));
        bl.sx = rng.uniform(5.0, 7.0);
        bl.sy = rng.uniform(1.5, 2.5);
        bl.amp = rng.uniform(0.45, 0.6);
    }
    std::vector<double> img(S * S);
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
            double v = bg;
            for (const auto& bl : blobs) {
                const double dx = (static_cast<double>(x) - bl.cx) / bl.sx;
                const double dy = (static_cast<double>(y) - bl.cy) / bl.sy;
                v += bl.amp * std::exp(-0.5 * (dx * dx + dy * dy));
            }
            img[y * S + x] = clamp01(v + 0.02 * rng.normal());
        }
    }
    return to_float(img);
}

// Concentric ellipses, wider than tall.
std::vector<float> render_rings(std::size_t S, Rng& rng) {
    const double half = static_cast<double>(S) / 2.0;
    const double cx = half + rng.uniform(-4.0, 4.0);
    const double cy = half + rng.uniform(-4.0, 4.0);
    const double period = rng.uniform(7.0, 10.0);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double bright = rng.uniform(-0.04, 0.04);
    std::vector<double> img(S * S);
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
            const double dx = (static_cast<double>(x) - cx) / 1.6;
            const double dy = static_cast<double>(y) - cy;
            const double r = std::sqrt(dx * dx + dy * dy);
            img[y * S + x] = clamp01(0.5 + 0.3 * std::cos(2.0 * kPi * r / period + phase) + bright + 0.02 * rng.normal());
        }
    }
    return to_float(img);
}

// Counter-clockwise quarter turn.
std::vector<float> rotate90(const std::vector<float>& img, std::size_t S) {
    std::vector<float> out(S * S);
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) out[y * S + x] = img[x * S + (S - 1 - y)];
    return out;
}

std::vector<std::uint8_t> inject_patch(std::vector<float>& image, std::size_t S, Rng& rng, double amin, double amax) {
    const double total = static_cast<double>(S * S);
    const double area = rng.uniform(amin, amax) * total;
    const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
    const bool ellipse = rng.below(2) == 1;
    const auto lo_count = static_cast<std::size_t>(std::ceil(amin * total));
    const auto hi_count = static_cast<std::size_t>(std::floor(amax * total));

    std::vector<std::uint8_t> mask(S * S, 0);
    auto count = [&] { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); };

    if (ellipse) {
        const double a = std::sqrt(area * aspect / kPi);
        const double b = area / (kPi * a);
        const double cx = rng.uniform(a, static_cast<double>(S) - a);
        const double cy = rng.uniform(b, static_cast<double>(S) - b);
        for (std::size_t y = 0; y < S; ++y) {
            for (std::size_t x = 0; x < S; ++x) {
                const double dx = (static_cast<double>(x) + 0.5 - cx) / a;
                const double dy = (static_cast<double>(y) + 0.5 - cy) / b;
                if (dx * dx + dy * dy <= 1.0) mask[y * S + x] = 1;
            }
        }
    }
    if (!ellipse || count() < lo_count || count() > hi_count) {
        std::fill(mask.begin(), mask.end(), 0);
        const auto w = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area * aspect))), 3, S - 1);
        const auto hmin = static_cast<std::size_t>(std::ceil(static_cast<double>(lo_count) / static_cast<double>(w)));
        const auto hmax = std::min<std::size_t>(hi_count / w, S);
        const auto h = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(area / static_cast<double>(w))), hmin, hmax);
        const std::size_t x0 = rng.below(S - w + 1);
        const std::size_t y0 = rng.below(S - h + 1);
        for (std::size_t y = y0; y < y0 + h; ++y)
            for (std::size_t x = x0; x < x0 + w; ++x) mask[y * S + x] = 1;
    }

    double region_mean = 0.0;
    for (std::size_t i = 0; i < S * S; ++i) region_mean += mask[i] * image[i];
    region_mean /= static_cast<double>(count());

    const std::uint64_t texture = rng.below(3);
    const double flat = region_mean < 0.5 ? rng.uniform(0.9, 1.0) : rng.uniform(0.0, 0.1);
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
            const std::size_t i = y * S + x;
            double v = 0.0;
            switch (texture) {
                case 0: v = rng.uniform(); break;                                  // white noise
                case 1: v = flat; break;                                           // flat fill
                default: v = ((x + y) / 2) % 2 == 0 ? 0.95 : 0.05; break;          // fine diagonal hatch
            }
            if (mask[i]) image[i] = static_cast<float>(v);
        }
    }
    return mask;
}

std::vector<std::uint8_t> inject_scratch(std::vector<float>& image, std::size_t S, Rng& rng) {
    const std::size_t width = 1 + rng.below(2);
    const double length = rng.uniform(16.0, 40.0);
    const double theta = rng.uniform(0.0, kPi);
    const double x0 = rng.uniform(0.0, static_cast<double>(S));
    const double y0 = rng.uniform(0.0, static_cast<double>(S));
    const double c = std::cos(theta), s = std::sin(theta);
    const long nx = std::lround(-s), ny = std::lround(c);

    std::vector<std::uint8_t> mask(S * S, 0);
    auto mark = [&](long x, long y) {
        if (x >= 0 && y >= 0 && x < static_cast<long>(S) && y < static_cast<long>(S))
            mask[static_cast<std::size_t>(y) * S + static_cast<std::size_t>(x)] = 1;
    };
    for (double t = 0.0; t <= length; t += 0.25) {
        const long px = static_cast<long>(std::floor(x0 + t * c));
        const long py = static_cast<long>(std::floor(y0 + t * s));
        mark(px, py);
        if (width == 2) mark(px + nx, py + ny);
    }
    // Contrasting ink: each pixel flips to the far end of the range.
    for (std::size_t i = 0; i < S * S; ++i)
        if (mask[i]) image[i] = image[i] < 0.5f ? 1.0f : 0.0f;
    return mask;
}

AnomalyKind draw_kind(const AnomalyMix& mix, Rng& rng) {
    const double total = mix.patch + mix.scratch + mix.structural;
    const double u = rng.uniform() * total;
    if (u < mix.patch) return AnomalyKind::patch;
    if (u < mix.patch + mix.scratch) return AnomalyKind::scratch;
    return AnomalyKind::structural;
}

std::size_t class_index(const std::vector<std::string>& classes, const std::string& name) {
    const auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end()) throw std::runtime_error("manifest names unknown class '" + name + "'");
    return static_cast<std::size_t>(it - classes.begin());
}

}  // namespace

const std::vector<std::string>& known_classes() {
    static const std::vector<std::string> k{"stripes", "checker", "blobs", "rings"};
    return k;
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string to_string(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::none: return "none";
        case AnomalyKind::patch: return "patch";
        case AnomalyKind::scratch: return "scratch";
        case AnomalyKind::structural: return "structural";
    }
    return "none";
}

AnomalyKind parse_anomaly_kind(const std::string& s) {
    if (s == "none") return AnomalyKind::none;
    if (s == "patch") return AnomalyKind::patch;
    if (s == "scratch") return AnomalyKind::scratch;
    if (s == "structural") return AnomalyKind::structural;
    throw ConfigError("unknown anomaly kind '" + s + "'");
}

void validate(const DataConfig& cfg) {
    if (cfg.classes.empty()) throw ConfigError("data.classes: at least one class is required");
    for (const auto& c : cfg.classes) {
        const auto& k = known_classes();
        if (std::find(k.begin(), k.end(), c) == k.end())
            throw ConfigError("data.classes: unknown class '" + c + "' (expected stripes, checker, blobs or rings)");
        if (std::count(cfg.classes.begin(), cfg.classes.end(), c) > 1)
            throw ConfigError("data.classes: duplicate class '" + c + "'");
    }
    if (cfg.image_size < 8) throw ConfigError("data.image_size must be >= 8");
    if (cfg.patch == 0 || cfg.image_size % cfg.patch != 0)
        throw ConfigError("data.patch must divide data.image_size");
    if (cfg.channels < 2 || cfg.channels % 2 != 0) throw ConfigError("data.channels must be even and >= 2");
    if (cfg.train_per_class == 0) throw ConfigError("data.train_per_class must be positive");
    const auto& m = cfg.mix;
    if (m.patch < 0 || m.scratch < 0 || m.structural < 0 || m.patch + m.scratch + m.structural <= 0)
        throw ConfigError("data.anomaly_mix weights must be non-negative with a positive sum");
    if (!(cfg.patch_area_min > 0 && cfg.patch_area_min <= cfg.patch_area_max && cfg.patch_area_max < 0.5))
        throw ConfigError("data.patch_area bounds must satisfy 0 < min <= max < 0.5");
}

std::vector<std::size_t> Dataset::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == split) out.push_back(i);
    return out;
}

std::vector<std::size_t> Dataset::indices(Split split, std::size_t class_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == split && samples[i].class_id == class_id) out.push_back(i);
    return out;
}

std::vector<float> render_normal(const std::string& cls, std::size_t size, Rng& rng) {
    if (cls == "stripes") return render_stripes(size, rng);
    if (cls == "checker") return render_checker(size, rng);
    if (cls == "blobs") return render_blobs(size, rng);
    if (cls == "rings") return render_rings(size, rng);
    throw ConfigError("unknown class '" + cls + "'");
}

std::vector<std::uint8_t> inject_anomaly(std::vector<float>& image, std::size_t size, AnomalyKind kind, Rng& rng,
                                         const std::vector<std::string>& foreign, double area_min,
                                         double area_max) {
    if (image.size() != size * size) throw ConfigError("inject_anomaly: image is not size x size");
    switch (kind) {
        case AnomalyKind::patch: return inject_patch(image, size, rng, area_min, area_max);
        case AnomalyKind::scratch: return inject_scratch(image, size, rng);
        case AnomalyKind::structural: {
            if (!foreign.empty() && rng.below(2) == 1) {
                image = render_normal(foreign[rng.below(foreign.size())], size, rng);
            } else {
                image = rotate90(image, size);
            }
            return std::vector<std::uint8_t>(size * size, 1);
        }
        case AnomalyKind::none: break;
    }
    throw ConfigError("inject_anomaly: kind must be patch, scratch or structural");
}

Dataset generate_dataset(const DataConfig& cfg) {
    validate(cfg);
    std::vector<std::string> foreign;
    for (const auto& k : known_classes())
        if (std::find(cfg.classes.begin(), cfg.classes.end(), k) == cfg.classes.end()) foreign.push_back(k);

    Dataset ds;
    ds.config = cfg;
    const std::size_t S = cfg.image_size;
    for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
        for (std::size_t i = 0; i < cfg.train_per_class; ++i) {
            Rng rng(derive_seed(cfg.seed, {0, c, i}));
            Sample s;
            s.split = Split::train;
            s.class_id = c;
            s.image = render_normal(cfg.classes[c], S, rng);
            s.mask.assign(S * S, 0);
            ds.samples.push_back(std::move(s));
        }
    }
    for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
        const std::size_t total = cfg.test_normal_per_class + cfg.test_anomalous_per_class;
        for (std::size_t i = 0; i < total; ++i) {
            Rng rng(derive_seed(cfg.seed, {1, c, i}));
            Sample s;
            s.split = Split::test;
            s.class_id = c;
            s.image = render_normal(cfg.classes[c], S, rng);
            if (i < cfg.test_normal_per_class) {
                s.mask.assign(S * S, 0);
            } else {
                s.anomalous = true;
                s.kind = draw_kind(cfg.mix, rng);
                s.mask = inject_anomaly(s.image, S, s.kind, rng, foreign, cfg.patch_area_min, cfg.patch_area_max);
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    const auto& cfg = ds.config;
    const std::size_t S = cfg.image_size;
    std::filesystem::create_directories(dir);

    json samples = json::array();
    std::size_t n_train = 0, n_test = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        (s.split == Split::train ? n_train : n_test)++;
        samples.push_back({{"index", i},
                           {"split", to_string(s.split)},
                           {"class", cfg.classes.at(s.class_id)},
                           {"class_id", s.class_id},
                           {"label", s.anomalous ? 1 : 0},
                           {"anomaly", to_string(s.kind)},
                           {"image_offset", i * S * S * 4},
                           {"mask_offset", i * S * S}});
    }
    json manifest = {
        {"format_version", kDatasetFormatVersion},
        {"seed", cfg.seed},
        {"classes", cfg.classes},
        {"image_size", S},
        {"image_channels", 1},
        {"patch", cfg.patch},
        {"channels", cfg.channels},
        {"counts",
         {{"train_per_class", cfg.train_per_class},
          {"test_normal_per_class", cfg.test_normal_per_class},
          {"test_anomalous_per_class", cfg.test_anomalous_per_class},
          {"train", n_train},
          {"test", n_test}}},
        {"anomaly_mix", {{"patch", cfg.mix.patch}, {"scratch", cfg.mix.scratch}, {"structural", cfg.mix.structural}}},
        {"patch_area", {{"min", cfg.patch_area_min}, {"max", cfg.patch_area_max}}},
        {"images_file", "images.bin"},
        {"images_bytes", ds.samples.size() * S * S * 4},
        {"masks_file", "masks.bin"},
        {"masks_bytes", ds.samples.size() * S * S},
        {"samples", samples},
    };

    std::vector<unsigned char> images, masks;
    images.reserve(ds.samples.size() * S * S * 4);
    masks.reserve(ds.samples.size() * S * S);
    for (const auto& s : ds.samples) {
        io::append_f32le(images, s.image);
        masks.insert(masks.end(), s.mask.begin(), s.mask.end());
    }
    io::write_file(dir / "images.bin", images);
    io::write_file(dir / "masks.bin", masks);
    io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
    json m;
    try {
        m = json::parse(is);
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt dataset manifest: " + std::string(e.what()));
    }
    const int version = m.value("format_version", -1);
    if (version != kDatasetFormatVersion)
        throw std::runtime_error("dataset format_version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kDatasetFormatVersion) + ")");

    Dataset ds;
    try {
        auto& cfg = ds.config;
        cfg.seed = m.at("seed").get<std::uint64_t>();
        cfg.classes = m.at("classes").get<std::vector<std::string>>();
        cfg.image_size = m.at("image_size").get<std::size_t>();
        cfg.patch = m.at("patch").get<std::size_t>();
        cfg.channels = m.at("channels").get<std::size_t>();
        const auto& counts = m.at("counts");
        cfg.train_per_class = counts.at("train_per_class").get<std::size_t>();
        cfg.test_normal_per_class = counts.at("test_normal_per_class").get<std::size_t>();
        cfg.test_anomalous_per_class = counts.at("test_anomalous_per_class").get<std::size_t>();
        const auto& mix = m.at("anomaly_mix");
        cfg.mix = {mix.at("patch").get<double>(), mix.at("scratch").get<double>(), mix.at("structural").get<double>()};
        cfg.patch_area_min = m.at("patch_area").at("min").get<double>();
        cfg.patch_area_max = m.at("patch_area").at("max").get<double>();
        validate(cfg);

        const std::size_t S = cfg.image_size;
        const auto& recs = m.at("samples");
        const auto images = io::read_file(dir / m.at("images_file").get<std::string>());
        const auto masks = io::read_file(dir / m.at("masks_file").get<std::string>());
        if (images.size() != m.at("images_bytes").get<std::size_t>() || images.size() != recs.size() * S * S * 4)
            throw std::runtime_error("corrupt dataset: images.bin has " + std::to_string(images.size()) + " bytes");
        if (masks.size() != m.at("masks_bytes").get<std::size_t>() || masks.size() != recs.size() * S * S)
            throw std::runtime_error("corrupt dataset: masks.bin has " + std::to_string(masks.size()) + " bytes");

        for (const auto& r : recs) {
            Sample s;
            s.split = r.at("split").get<std::string>() == "train" ? Split::train : Split::test;
            s.class_id = class_index(cfg.classes, r.at("class").get<std::string>());
            s.anomalous = r.at("label").get<int>() == 1;
            s.kind = parse_anomaly_kind(r.at("anomaly").get<std::string>());
            const auto img_off = r.at("image_offset").get<std::size_t>();
            const auto mo = r.at("mask_offset").get<std::size_t>();
            if (img_off + S * S * 4 > images.size() || mo + S * S > masks.size())
                throw std::runtime_error("corrupt dataset: sample offset out of range");
            s.image.resize(S * S);
            for (std::size_t k = 0; k < S * S; ++k) s.image[k] = io::read_f32le(&images[img_off + 4 * k]);
            s.mask.assign(masks.begin() + static_cast<std::ptrdiff_t>(mo), masks.begin() + static_cast<std::ptrdiff_t>(mo + S * S));
            const bool any = std::any_of(s.mask.begin(), s.mask.end(), [](std::uint8_t v) { return v != 0; });
            if (any != s.anomalous) throw std::runtime_error("corrupt dataset: label disagrees with mask");
            if (s.split == Split::train && s.anomalous) throw std::runtime_error("corrupt dataset: anomalous training sample");
            ds.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt dataset manifest: " + std::string(e.what()));
    }
    return ds;
}

FeatureExtractor::FeatureExtractor(std::size_t patch, std::size_t channels, std::uint64_t seed)
    : patch_(patch), channels_(channels) {
    if (patch == 0) throw ConfigError("feature patch must be positive");
    if (channels < 2 || channels % 2 != 0) throw ConfigError("feature channels must be even and >= 2");
    const std::size_t k = channels / 2;
    const std::size_t d = patch * patch;
    Rng rng(seed);
    std::vector<double> m(k * d);
    for (auto& v : m) v = rng.normal();

    // Modified Gram-Schmidt, two passes, over rows (k <= d) or columns.
    const bool rows = k <= d;
    const std::size_t nvec = rows ? k : d, len = rows ? d : k;
    auto at = [&](std::size_t v, std::size_t j) -> double& { return rows ? m[v * d + j] : m[j * d + v]; };
    for (std::size_t v = 0; v < nvec; ++v) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t u = 0; u < v; ++u) {
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += at(v, j) * at(u, j);
                for (std::size_t j = 0; j < len; ++j) at(v, j) -= dot * at(u, j);
            }
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < len; ++j) norm += at(v, j) * at(v, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw NumericalError("degenerate feature projection");
        for (std::size_t j = 0; j < len; ++j) at(v, j) /= norm;
    }
    projection_ = Tensor<double>({k, d}, std::move(m));
}

Tensor<float> FeatureExtractor::extract(std::span<const float> image, std::size_t size) const {
    if (size % patch_ != 0) throw ConfigError("image size " + std::to_string(size) + " is not divisible by patch " + std::to_string(patch_));
    if (image.size() != size * size) throw ConfigError("image buffer is not size x size");
    const std::size_t g = size / patch_, k = channels_ / 2, d = patch_ * patch_;
    Tensor<float> out({channels_, g, g});
    std::vector<double> z(d);
    for (std::size_t h = 0; h < g; ++h) {
        for (std::size_t w = 0; w < g; ++w) {
            for (std::size_t dy = 0; dy < patch_; ++dy)
                for (std::size_t dx = 0; dx < patch_; ++dx)
                    z[dy * patch_ + dx] = static_cast<double>(image[(h * patch_ + dy) * size + w * patch_ + dx]) - 0.5;
            for (std::size_t c = 0; c < k; ++c) {
                double u = 0.0;
                for (std::size_t j = 0; j < d; ++j) u += projection_[c * d + j] * z[j];
                out[(c * g + h) * g + w] = static_cast<float>(std::max(u, 0.0));
                out[((c + k) * g + h) * g + w] = static_cast<float>(std::max(-u, 0.0));
            }
        }
    }
    return out;
}

Tensor<float> FeatureExtractor::extract(const Dataset& ds, std::span<const std::size_t> indices) const {
    const std::size_t S = ds.config.image_size;
    if (S % patch_ != 0) throw ConfigError("image size is not divisible by the feature patch");
    const std::size_t g = S / patch_, per = channels_ * g * g;
    Tensor<float> out({indices.size(), channels_, g, g});
    for (std::size_t n = 0; n < indices.size(); ++n) {
        const auto f = extract(ds.samples.at(indices[n]).image, S);
        std::copy(f.vec().begin(), f.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(n * per));
    }
    return out;
}

FeatureExtractor make_extractor(const DataConfig& cfg) {
    return FeatureExtractor(cfg.patch, cfg.channels, derive_seed(cfg.seed, {0xfea7}));
}

}  // namespace gridad::data
