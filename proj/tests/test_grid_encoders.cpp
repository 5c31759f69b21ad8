#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "gridad/encoders.hpp"
#include "gridad/grid.hpp"
#include "gridad/reconstruct.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace gridad;

TEST_CASE("normalize_to_index endpoints and midpoint") {
    CHECK(normalize_to_index(-1.0, 8) == 0.0);
    CHECK(normalize_to_index(1.0, 8) == 7.0);
    CHECK(normalize_to_index(0.0, 8) == 3.5);
    CHECK_THROWS_AS(normalize_to_index(1.0001, 8), std::domain_error);
    CHECK_THROWS_AS(normalize_to_index(-1.5, 8), std::domain_error);
}

TEST_CASE("1-D grid [0,1,4,9]: endpoints and midpoint") {
    ContinuousGrid<double> g(1, 4, 1);
    g.values().value.vec() = {0, 1, 4, 9};
    auto at = [&](double v) { return g.sample(std::vector<double>{v})[0]; };
    CHECK(at(-1.0) == 0.0);
    CHECK(at(1.0) == 9.0);
    CHECK(at(0.0) == 2.5);
}

TEST_CASE("2-D grid R=2: cell centre is the corner mean") {
    ContinuousGrid<double> g(2, 2, 1);
    g.values().value.vec() = {1.0, -3.0, 7.5, 2.25};
    CHECK(g.sample(std::vector<double>{0.0, 0.0})[0] == doctest::Approx((1.0 - 3.0 + 7.5 + 2.25) / 4.0).epsilon(1e-15));
}

TEST_CASE("sample_backward: node coordinate puts all mass on that node") {
    ContinuousGrid<double> g(2, 4, 3);
    const std::vector<double> up{1.0, -2.0, 0.5};
    for (const auto& node : {std::vector<std::size_t>{1, 2}, {3, 3}, {0, 0}, {3, 0}}) {
        const std::vector<double> coord{2.0 * node[0] / 3.0 - 1.0, 2.0 * node[1] / 3.0 - 1.0};
        const auto b = g.sample_backward(coord, up);
        const std::size_t row = g.node_row(node);
        for (std::size_t k = 0; k < b.rows.size(); ++k)
            for (std::size_t c = 0; c < 3; ++c) {
                const double expect = b.rows[k] == row ? up[c] : 0.0;
                CHECK(b.row_grads[k * 3 + c] == expect);
            }
    }
}

TEST_CASE("sample_backward: 1-D midpoint splits the gradient evenly") {
    ContinuousGrid<double> g(1, 3, 1);
    const auto b = g.sample_backward(std::vector<double>{-0.5}, std::vector<double>{1.0});
    REQUIRE(b.rows.size() == 2);
    CHECK(b.rows[0] == 0);
    CHECK(b.rows[1] == 1);
    CHECK(b.row_grads[0] == 0.5);
    CHECK(b.row_grads[1] == 0.5);
}

TEST_CASE("Xavier-normal grid init: variance, mean and determinism") {
    ContinuousGrid<double> g(2, 32, 16);  // 16384 values
    Rng rng(11);
    g.init_xavier_normal(rng);
    const auto& v = g.values().value;
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) mean += v[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) var += (v[i] - mean) * (v[i] - mean);
    var /= n - 1.0;
    const double target = 2.0 / (1024.0 + 16.0);
    CHECK(std::abs(var / target - 1.0) < 0.10);
    CHECK(std::abs(mean) < 3.0 * std::sqrt(target / n));

    ContinuousGrid<double> h(2, 32, 16);
    Rng again(11);
    h.init_xavier_normal(again);
    CHECK(h.values().value == v);
}

TEST_CASE("grid property suite") {
    for (const auto& r : suites::grid_suite()) {
        INFO(r.name << ": " << r.detail);
        CHECK(r.pass);
    }
}

TEST_CASE("local encoder: pointwise, zero head and open range") {
    Rng init(21);
    LocalEncoder<double> enc(6, 2, init);
    Rng rng(22);
    auto x = oracle::random_tensor({2, 6, 3, 4}, rng, -3.0, 3.0);
    for (std::size_t c = 0; c < 6; ++c) x.at(1, c, 2, 3) = x.at(0, c, 1, 0);  // same channel vector
    Tape<double> t(false);
    const auto v = enc(t.constant(x)).value();
    REQUIRE(v.shape() == Shape{2, 2, 3, 4});
    for (std::size_t d = 0; d < 2; ++d) CHECK(v.at(1, d, 2, 3) == v.at(0, d, 1, 0));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i]) < 1.0);

    enc.out.weight.value.fill(0.0);
    enc.out.bias.value.fill(0.0);
    const auto z = enc(t.constant(x)).value();
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("local encoder commutes with spatial permutation") {
    Rng init(23);
    LocalEncoder<double> enc(4, 3, init);
    Rng rng(24);
    const auto x = oracle::random_tensor({1, 4, 2, 3}, rng);
    Tensor<double> flipped(x.shape());
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t w = 0; w < 3; ++w) flipped.at(0, c, h, w) = x.at(0, c, 1 - h, 2 - w);
    Tape<double> t(false);
    const auto a = enc(t.constant(x)).value();
    const auto b = enc(t.constant(flipped)).value();
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t w = 0; w < 3; ++w)
                CHECK(b.at(0, d, h, w) == doctest::Approx(a.at(0, d, 1 - h, 2 - w)).epsilon(1e-14));
}

TEST_CASE("global encoder: permutation invariant, zero head and open range") {
    Rng init(25);
    GlobalEncoder<double> enc(4, 2, init);
    Rng rng(26);
    const auto x = oracle::random_tensor({3, 4, 3, 3}, rng, -4.0, 4.0);
    Tensor<double> perm(x.shape());
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < 9; ++i) perm[(n * 4 + c) * 9 + i] = x[(n * 4 + c) * 9 + (i * 2) % 9];
    Tape<double> t(false);
    const auto a = enc(t.constant(x)).value();
    const auto b = enc(t.constant(perm)).value();
    REQUIRE(a.shape() == Shape{3, 2});
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
        CHECK(std::abs(a[i]) < 1.0);
    }
    enc.out.weight.value.fill(0.0);
    enc.out.bias.value.fill(0.0);
    const auto z = enc(t.constant(x)).value();
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("jitter: identity outside training or with zero scale") {
    Rng rng(31);
    const auto c = oracle::random_tensor({2, 2, 3, 3}, rng);
    Tape<double> t(false);
    const auto v = t.constant(c);
    JitterConfig cfg;
    CHECK(jitter(v, cfg, rng, false).value() == c);
    cfg.scale = 0.0;
    CHECK(jitter(v, cfg, rng, true).value() == c);
    cfg = JitterConfig{};
    cfg.enabled = false;
    CHECK(jitter(v, cfg, rng, true).value() == c);
}

TEST_CASE("jitter: Monte-Carlo fraction and displacement scale") {
    // 10^5 pixels at the origin, so the 0.05-scale noise never reaches the clamp.
    const Tensor<double> zero({1, 2, 250, 400});
    Tape<double> t(false);
    Rng rng(32);
    const auto out = jitter(t.constant(zero), JitterConfig{}, rng, true).value();
    const std::size_t hw = 250 * 400;
    std::size_t moved = 0;
    double sq = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
        const double a = out[p], b = out[hw + p];
        if (a != 0.0 || b != 0.0) {
            ++moved;
            sq += a * a + b * b;
        }
    }
    const double frac = static_cast<double>(moved) / static_cast<double>(hw);
    const double sd = std::sqrt(sq / (2.0 * static_cast<double>(moved)));
    CHECK(std::abs(frac - 0.5) <= 0.01);
    CHECK(std::abs(sd / 0.05 - 1.0) <= 0.05);
}

TEST_CASE("jitter clamps to [-1, 1]") {
    const Tensor<double> edge({1, 1, 10, 10}, 1.0);
    Tape<double> t(false);
    Rng rng(33);
    JitterConfig cfg;
    cfg.fraction = 1.0;
    cfg.scale = 1.0;
    const auto out = jitter(t.constant(edge), cfg, rng, true).value();
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i]) <= 1.0);
}

TEST_CASE("fusion: zero weights reduce to relu(bias)") {
    Rng init(41);
    FusionNet<double> net(4, 2, 7, init);
    net.entry.weight.value.fill(0.0);
    net.entry.bias.value.vec() = {0.75, -0.5};
    for (auto& b : net.blocks) {
        for (auto* conv : {&b.first, &b.second}) {
            conv->weight.value.fill(0.0);
            conv->bias.value.fill(0.0);
        }
    }
    Rng rng(42);
    Tape<double> t(false);
    const auto fl = t.constant(oracle::random_tensor({1, 2, 3, 3}, rng));
    const auto fg = t.constant(oracle::random_tensor({1, 2, 3, 3}, rng));
    const auto y = fuse(net, {fl, fg}).value();
    REQUIRE(y.shape() == Shape{1, 2, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(y[i] == 0.75);
        CHECK(y[9 + i] == 0.0);
    }
}

TEST_CASE("fusion: seven residual blocks preserving shape") {
    Rng init(43);
    FusionNet<double> net(8, 4, 7, init);
    CHECK(net.blocks.size() == 7);
    Rng rng(44);
    Tape<double> t(false);
    const auto y = net(t.constant(oracle::random_tensor({2, 8, 5, 5}, rng))).value();
    CHECK(y.shape() == Shape{2, 4, 5, 5});
}

TEST_CASE("refinement suite") {
    for (const auto& r : suites::refinement_suite()) {
        INFO(r.name << ": " << r.detail);
        CHECK(r.pass);
    }
}
