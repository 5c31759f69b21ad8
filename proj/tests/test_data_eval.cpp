#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gridad/data.hpp"
#include "gridad/eval.hpp"
#include "gridad/io.hpp"
#include "oracles.hpp"
#include "suites.hpp"
#include "testdirs.hpp"

using namespace gridad;
using namespace gridad::data;

namespace {

DataConfig small_data() {
    DataConfig cfg;
    cfg.train_per_class = 5;
    cfg.test_normal_per_class = 3;
    cfg.test_anomalous_per_class = 4;
    cfg.image_size = 32;
    cfg.seed = 17;
    return cfg;
}

double inside_mad(const std::vector<float>& a, const std::vector<float>& b, const std::vector<std::uint8_t>& mask,
                  bool inside) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.size(); ++p)
        if (static_cast<bool>(mask[p]) == inside) {
            s += std::abs(a[p] - b[p]);
            ++n;
        }
    return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

TEST_CASE("dataset: deterministic bytes and exact counts") {
    const auto dir = testdirs::fresh("data_det");
    DataConfig cfg;  // 4 classes x 200 train / (50 + 50) test
    const auto a = generate_dataset(cfg);
    CHECK(a.indices(Split::train).size() == 800);
    CHECK(a.indices(Split::test).size() == 400);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(a.indices(Split::train, c).size() == 200);
        const auto test = a.indices(Split::test, c);
        CHECK(test.size() == 100);
        CHECK(std::count_if(test.begin(), test.end(), [&](std::size_t i) { return a.samples[i].anomalous; }) == 50);
    }
    write_dataset(a, dir / "a");
    write_dataset(generate_dataset(cfg), dir / "b");
    for (const char* f : {"manifest.json", "images.bin", "masks.bin"})
        CHECK(io::read_file(dir / "a" / f) == io::read_file(dir / "b" / f));
}

TEST_CASE("dataset: different seeds give different images") {
    auto cfg = small_data();
    const auto a = generate_dataset(cfg);
    cfg.seed = 18;
    const auto b = generate_dataset(cfg);
    CHECK(a.samples[0].image != b.samples[0].image);
}

TEST_CASE("dataset: training split is normal-only and masks agree with labels") {
    const auto ds = generate_dataset(small_data());
    for (const auto& s : ds.samples) {
        const bool any = std::any_of(s.mask.begin(), s.mask.end(), [](auto m) { return m != 0; });
        CHECK(any == s.anomalous);
        if (s.split == Split::train) CHECK_FALSE(s.anomalous);
        for (float v : s.image) CHECK((v >= 0.0f && v <= 1.0f));
    }
}

TEST_CASE("stripes render with two well-separated intensity modes") {
    Rng rng(5);
    const auto img = render_normal("stripes", 64, rng);
    std::size_t lo = 0, mid = 0, hi = 0;
    for (float v : img) (v < 0.35f ? lo : v > 0.65f ? hi : mid)++;
    CHECK(lo > 4 * mid);
    CHECK(hi > 4 * mid);
}

TEST_CASE("patch anomaly area stays within bounds") {
    for (std::uint64_t i = 0; i < 200; ++i) {
        Rng rng(derive_seed(3, {i}));
        auto img = render_normal(known_classes()[i % 4], 64, rng);
        const auto mask = inject_anomaly(img, 64, AnomalyKind::patch, rng);
        const double area = static_cast<double>(std::count(mask.begin(), mask.end(), 1)) / (64.0 * 64.0);
        CHECK(area >= 0.02);
        CHECK(area <= 0.10);
    }
}

TEST_CASE("structural anomaly marks the whole image") {
    for (std::uint64_t i = 0; i < 20; ++i) {
        Rng rng(derive_seed(4, {i}));
        auto img = render_normal(known_classes()[i % 4], 32, rng);
        const auto before = img;
        const auto mask = inject_anomaly(img, 32, AnomalyKind::structural, rng, i % 2 ? std::vector<std::string>{"rings"}
                                                                                       : std::vector<std::string>{});
        CHECK(std::all_of(mask.begin(), mask.end(), [](auto m) { return m == 1; }));
        CHECK(img != before);
    }
}

TEST_CASE("local anomalies deviate strongly inside the mask only") {
    for (auto kind : {AnomalyKind::patch, AnomalyKind::scratch}) {
        for (std::uint64_t i = 0; i < 100; ++i) {
            Rng rng(derive_seed(6, {i, static_cast<std::uint64_t>(kind)}));
            auto img = render_normal(known_classes()[i % 4], 64, rng);
            const auto before = img;
            const auto mask = inject_anomaly(img, 64, kind, rng);
            const double in = inside_mad(img, before, mask, true);
            const double out = inside_mad(img, before, mask, false);
            CHECK(in >= 3.0 * out);
            CHECK(in >= 0.15);  // about ten times the rendering noise
        }
    }
}

TEST_CASE("data config errors") {
    auto cfg = small_data();
    cfg.classes = {"stripes", "plaid"};
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
    cfg = small_data();
    cfg.patch = 5;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    FeatureExtractor fx(4, 8, 1);
    CHECK_THROWS_AS((void)fx.extract(std::vector<float>(30 * 30), 30), ConfigError);
}

TEST_CASE("features: deterministic, local and orthonormal") {
    const FeatureExtractor fx(4, 32, 9);
    const auto& q = fx.projection();
    REQUIRE(q.shape() == Shape{16, 16});
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
            double g = 0.0;
            for (std::size_t k = 0; k < 16; ++k) g += q[i * 16 + k] * q[j * 16 + k];
            CHECK(std::abs(g - (i == j ? 1.0 : 0.0)) < 1e-8);
        }

    Rng rng(10);
    auto img = render_normal("blobs", 32, rng);
    const auto a = fx.extract(img, 32);
    CHECK(a == fx.extract(img, 32));
    CHECK(a.shape() == Shape{32, 8, 8});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] >= 0.0f);

    img[(2 * 4 + 1) * 32 + (5 * 4 + 3)] += 0.5f;  // inside patch (2, 5)
    const auto b = fx.extract(img, 32);
    for (std::size_t c = 0; c < 32; ++c)
        for (std::size_t h = 0; h < 8; ++h)
            for (std::size_t w = 0; w < 8; ++w) {
                const bool same = a[(c * 8 + h) * 8 + w] == b[(c * 8 + h) * 8 + w];
                if (h != 2 || w != 5) CHECK(same);
            }
    bool changed = false;
    for (std::size_t c = 0; c < 32; ++c) changed = changed || a[(c * 8 + 2) * 8 + 5] != b[(c * 8 + 2) * 8 + 5];
    CHECK(changed);
}

TEST_CASE("features: the two halves recover the projection") {
    const FeatureExtractor fx(2, 4, 3);
    std::vector<float> img(16);
    Rng rng(4);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    const auto f = fx.extract(img, 4);  // (4, 2, 2)
    const auto& q = fx.projection();    // (2, 4)
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t w = 0; w < 2; ++w) {
                double u = 0.0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx)
                        u += q[k * 4 + dy * 2 + dx] * (img[(2 * h + dy) * 4 + 2 * w + dx] - 0.5);
                const double got = f[(k * 2 + h) * 2 + w] - f[((k + 2) * 2 + h) * 2 + w];
                CHECK(got == doctest::Approx(u).epsilon(1e-6));
            }
}

TEST_CASE("dataset files: round trip and corruption detection") {
    const auto dir = testdirs::fresh("data_io");
    const auto ds = generate_dataset(small_data());
    write_dataset(ds, dir / "d");
    const auto back = read_dataset(dir / "d");
    REQUIRE(back.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].image == ds.samples[i].image);
        CHECK(back.samples[i].mask == ds.samples[i].mask);
        CHECK(back.samples[i].kind == ds.samples[i].kind);
        CHECK(back.samples[i].class_id == ds.samples[i].class_id);
    }
    CHECK(back.config.seed == ds.config.seed);

    std::filesystem::copy(dir / "d", dir / "t");
    std::filesystem::resize_file(dir / "t" / "images.bin", std::filesystem::file_size(dir / "t" / "images.bin") - 4);
    CHECK_THROWS_WITH_AS(read_dataset(dir / "t"), doctest::Contains("corrupt"), std::runtime_error);

    std::filesystem::copy(dir / "d", dir / "v");
    auto text = io::read_file(dir / "v" / "manifest.json");
    std::string s(text.begin(), text.end());
    const std::string key = "\"format_version\": 1";
    REQUIRE(s.find(key) != std::string::npos);
    s.replace(s.find(key), key.size(), "\"format_version\": 7");
    io::write_file(dir / "v" / "manifest.json", s);
    CHECK_THROWS_WITH_AS(read_dataset(dir / "v"), doctest::Contains("format_version"), std::runtime_error);
}

TEST_CASE("auroc examples") {
    const std::vector<std::uint8_t> l01{0, 1};
    CHECK(eval::auroc(std::vector<double>{0.1, 0.9}, l01) == 1.0);
    CHECK(eval::auroc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<std::uint8_t>{0, 1, 1}) == 0.5);
    CHECK(eval::auroc(std::vector<double>{0.2, 0.8, 0.6, 0.9}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 0.75);
    CHECK_THROWS_AS(eval::auroc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(eval::auroc(std::vector<double>{0.1, std::nan("")}, l01), NumericalError);
}

TEST_CASE("auroc: monotone invariance and complement") {
    Rng rng(20);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 10 + rng.below(80);
        std::vector<double> s(n), t(n), neg(n);
        std::vector<std::uint8_t> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.normal();
            t[i] = std::exp(3.0 * s[i]) + 7.0;
            neg[i] = -s[i];
            l[i] = rng.below(2);
        }
        l[0] = 0;
        l[1] = 1;
        const double a = eval::auroc(s, l);
        CHECK(eval::auroc(t, l) == a);
        CHECK(a + eval::auroc(neg, l) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("auroc oracle suite") {
    for (const auto& r : suites::auroc_suite()) {
        INFO(r.name << ": " << r.detail);
        CHECK(r.pass);
    }
}

TEST_CASE("pixel auroc examples") {
    const std::vector<std::uint8_t> mask{0, 1, 1, 0, 0, 0, 1, 0};
    Tensor<float> exact({2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) exact[i] = mask[i];
    CHECK(eval::pixel_auroc(exact, mask) == 1.0);
    CHECK(eval::pixel_auroc(Tensor<float>({2, 2, 2}, 0.3f), mask) == 0.5);

    const Tensor<float> one({1, 2, 2}, std::vector<float>{0.5f, 0.1f, 0.7f, 0.3f});
    const std::vector<std::uint8_t> m1{1, 0, 0, 1};
    CHECK(eval::pixel_auroc(one, m1) == oracle::auroc_pairwise({0.5, 0.1, 0.7, 0.3}, m1));
    CHECK(eval::pixel_auroc(one, m1) == 0.5);
    CHECK_THROWS(eval::pixel_auroc(one, mask));
}
