#include "suites.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "gridad/baselines.hpp"
#include "gridad/encoders.hpp"
#include "gridad/eval.hpp"
#include "gridad/grid.hpp"
#include "gridad/model.hpp"
#include "gridad/ops.hpp"
#include "gridad/reconstruct.hpp"
#include "oracles.hpp"

namespace suites {

namespace {

using gridad::Parameter;
using gridad::ParamGroup;
using gridad::Rng;
using gridad::Shape;
using gridad::Tape;
using gridad::Tensor;
using gridad::Var;
namespace ops = gridad::ops;

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;
constexpr double kGridTol = 1e-12;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

CaseResult from_check(const std::string& name, const oracle::GradCheck& g) {
    return {name, g.max_error <= kFdTol && g.checked > 0,
            "max rel err " + fmt(g.max_error) + " over " + std::to_string(g.checked) + " entries (worst " + g.worst + ")"};
}

// Values bounded away from zero so relu/abs kinks are never straddled.
Tensor<double> away_from_zero(Shape s, Rng& rng) {
    Tensor<double> t(std::move(s));
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double m = rng.uniform(0.1, 1.0);
        t[i] = rng.below(2) ? m : -m;
    }
    return t;
}

// Grid coordinates whose lattice index stays >= margin away from integers.
Tensor<double> interior_coords(std::size_t m, std::size_t dims, std::size_t R, Rng& rng, double margin = 0.1) {
    Tensor<double> t({m, dims});
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double cell = static_cast<double>(rng.below(R - 1));
        const double idx = cell + rng.uniform(margin, 1.0 - margin);
        t[i] = idx / static_cast<double>(R - 1) * 2.0 - 1.0;
    }
    return t;
}

// Loss against a fixed random target so every output element matters.
Var<double> probe_loss(const Var<double>& out, const Tensor<double>& target) {
    return ops::mse(out, out.tape->constant(target));
}

Tensor<double> target_like(const Shape& s, std::uint64_t seed) {
    Rng rng(seed);
    return oracle::random_tensor(s, rng);
}

}  // namespace

std::vector<CaseResult> grid_suite() {
    std::vector<CaseResult> out;
    Rng rng(101);

    // Node exactness at every lattice point.
    {
        double worst = 0.0;
        std::size_t nodes = 0;
        for (std::size_t D = 1; D <= 3; ++D) {
            for (std::size_t R : {2u, 3u, 4u, 8u}) {
                gridad::ContinuousGrid<double> g(D, R, 3);
                g.init_xavier_normal(rng);
                const std::size_t count = g.node_count();
                for (std::size_t node = 0; node < count; ++node) {
                    std::vector<double> coord(D);
                    std::size_t rem = node;
                    for (std::size_t a = D; a-- > 0;) {
                        coord[a] = 2.0 * static_cast<double>(rem % R) / static_cast<double>(R - 1) - 1.0;
                        rem /= R;
                    }
                    const auto v = g.sample(coord);
                    for (std::size_t c = 0; c < 3; ++c)
                        worst = std::max(worst, std::abs(v[c] - g.values().value[node * 3 + c]));
                    ++nodes;
                }
            }
        }
        out.push_back({"node exactness", worst <= kGridTol,
                       std::to_string(nodes) + " lattice points, max deviation " + fmt(worst)});
    }

    // Partition of unity on 10^4 random queries.
    {
        double worst_sum = 0.0, most_negative = 0.0;
        for (std::size_t q = 0; q < 10000; ++q) {
            const std::size_t D = 1 + q % 3;
            const std::size_t R = 2 + rng.below(7);
            gridad::ContinuousGrid<double> g(D, R, 1);
            std::vector<double> coord(D);
            for (auto& c : coord) c = rng.uniform(-1.0, 1.0);
            const auto st = g.stencil(coord);
            double sum = 0.0;
            for (double w : st.weights) {
                sum += w;
                most_negative = std::min(most_negative, w);
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        }
        out.push_back({"partition of unity", worst_sum <= kGridTol && most_negative >= 0.0,
                       "10000 queries, max |sum - 1| " + fmt(worst_sum) + ", min weight " + fmt(most_negative)});
    }

    // 1-D two-neighbour formula off the lattice.
    {
        double worst = 0.0;
        for (std::size_t R : {2u, 4u, 8u, 16u}) {
            gridad::ContinuousGrid<double> g(1, R, 4);
            g.init_xavier_normal(rng);
            for (int q = 0; q < 1000; ++q) {
                const double v = rng.uniform(-1.0, 1.0);
                const std::vector<double> c{v};
                const auto got = g.sample(c);
                const auto want = oracle::grid_sample_1d(g.values().value.vec(), R, 4, v);
                for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
            }
        }
        out.push_back({"1-D interpolation formula", worst <= kGridTol, "4000 queries, max deviation " + fmt(worst)});
    }

    // Tensor-product brute force in 2-D and 3-D.
    for (std::size_t D : {2u, 3u}) {
        double worst = 0.0;
        for (std::size_t R : {2u, 3u, 5u, 8u}) {
            gridad::ContinuousGrid<double> g(D, R, 5);
            g.init_xavier_normal(rng);
            for (int q = 0; q < 1000; ++q) {
                std::vector<double> coord(D);
                for (auto& c : coord) c = rng.uniform(-1.0, 1.0);
                if (q % 10 == 0) coord[q % D] = rng.below(2) ? 1.0 : -1.0;  // faces and edges
                const auto got = g.sample(coord);
                const auto want = oracle::grid_sample(g.values().value.vec(), D, R, 5, coord);
                for (std::size_t k = 0; k < 5; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
            }
        }
        out.push_back({std::to_string(D) + "-D tensor-product oracle", worst <= kGridTol,
                       "4000 queries, max deviation " + fmt(worst)});
    }
    return out;
}

std::vector<CaseResult> gradient_suite() {
    std::vector<CaseResult> out;
    Rng rng(202);
    auto leaf = [](const std::string& name, Tensor<double> t) { return Parameter<double>(name, std::move(t)); };

    {
        for (std::size_t k : {1u, 3u}) {
            auto x = leaf("x", oracle::random_tensor({2, 3, 4, 5}, rng));
            auto w = leaf("w", oracle::random_tensor({2, 3, k, k}, rng));
            auto b = leaf("b", oracle::random_tensor({2}, rng));
            const auto target = target_like({2, 2, 4, 5}, 1);
            out.push_back(from_check("conv2d " + std::to_string(k) + "x" + std::to_string(k),
                                     oracle::grad_check({&x, &w, &b}, [&](Tape<double>& t) {
                                         return probe_loss(ops::conv2d(t.param(x), t.param(w), t.param(b)), target);
                                     })));
        }
    }
    {
        auto x = leaf("x", oracle::random_tensor({4, 3}, rng));
        auto w = leaf("w", oracle::random_tensor({2, 3}, rng));
        auto b = leaf("b", oracle::random_tensor({2}, rng));
        const auto target = target_like({4, 2}, 2);
        out.push_back(from_check("affine", oracle::grad_check({&x, &w, &b}, [&](Tape<double>& t) {
                                     return probe_loss(ops::affine(t.param(x), t.param(w), t.param(b)), target);
                                 })));
    }
    {
        auto x = leaf("x", away_from_zero({2, 3, 2, 2}, rng));
        const auto target = target_like({2, 3, 2, 2}, 3);
        out.push_back(from_check("relu", oracle::grad_check({&x}, [&](Tape<double>& t) {
                                     return probe_loss(ops::relu(t.param(x)), target);
                                 })));
        out.push_back(from_check("tanh", oracle::grad_check({&x}, [&](Tape<double>& t) {
                                     return probe_loss(ops::tanh(t.param(x)), target);
                                 })));
        auto y = leaf("y", oracle::random_tensor({2, 3, 2, 2}, rng));
        out.push_back(from_check("add and scale", oracle::grad_check({&x, &y}, [&](Tape<double>& t) {
                                     return probe_loss(ops::scale(ops::add(t.param(x), t.param(y)), 0.7), target);
                                 })));
        out.push_back(from_check("mse", oracle::grad_check({&x, &y}, [&](Tape<double>& t) {
                                     return ops::mse(t.param(x), t.param(y));
                                 })));
        out.push_back(from_check("global average pool", oracle::grad_check({&x}, [&](Tape<double>& t) {
                                     return probe_loss(ops::global_avg_pool(t.param(x)), target_like({2, 3}, 4));
                                 })));
        auto z = leaf("z", oracle::random_tensor({2, 1, 2, 2}, rng));
        out.push_back(from_check("channel concat", oracle::grad_check({&x, &z}, [&](Tape<double>& t) {
                                     return probe_loss(ops::concat_channels<double>({t.param(x), t.param(z)}),
                                                       target_like({2, 4, 2, 2}, 5));
                                 })));
        out.push_back(from_check("reshape, to_rows, from_rows", oracle::grad_check({&x}, [&](Tape<double>& t) {
                                     auto rows = ops::to_rows(t.param(x));
                                     auto back = ops::from_rows(ops::tanh(rows), 2, 2, 2);
                                     return probe_loss(ops::reshape(back, {2, 12}), target_like({2, 12}, 6));
                                 })));
        Tensor<double> weights({2, 1, 2, 2});
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = rng.uniform();
        out.push_back(from_check("blend", oracle::grad_check({&x, &y}, [&](Tape<double>& t) {
                                     return probe_loss(ops::blend(t.param(x), t.param(y), weights), target);
                                 })));
    }
    {
        Tensor<double> base({3, 2});
        for (std::size_t i = 0; i < base.size(); ++i) base[i] = rng.uniform(-0.5, 0.5);
        auto x = leaf("x", base);
        Tensor<double> off({3, 2});
        for (std::size_t i = 0; i < off.size(); ++i) off[i] = rng.uniform(-0.2, 0.2);
        off[0] = 2.0;  // clamped entry: zero gradient on both sides
        out.push_back(from_check("offset clamp", oracle::grad_check({&x}, [&](Tape<double>& t) {
                                     return probe_loss(ops::offset_clamp(t.param(x), off), target_like({3, 2}, 7));
                                 })));
    }
    {
        auto table = leaf("table", oracle::random_tensor({4, 3}, rng));
        const std::vector<std::size_t> index{2, 0, 2, 3, 1};
        out.push_back(from_check("gather rows", oracle::grad_check({&table}, [&](Tape<double>& t) {
                                     return probe_loss(ops::gather_rows(t.param(table), index), target_like({5, 3}, 8));
                                 })));
        auto q = leaf("q", oracle::random_tensor({5, 3}, rng));
        auto e = leaf("e", oracle::random_tensor({4, 3}, rng));
        out.push_back(from_check("attention", oracle::grad_check({&q, &e}, [&](Tape<double>& t) {
                                     return probe_loss(ops::attention(t.param(q), t.param(e)), target_like({5, 3}, 9));
                                 })));
    }

    // Grids: values and coordinates at interior points.
    for (std::size_t D : {1u, 2u, 3u}) {
        const std::size_t R = D == 3 ? 3 : 4;
        gridad::ContinuousGrid<double> g(D, R, 3);
        g.init_xavier_normal(rng);
        auto coords = leaf("coords", interior_coords(6, D, R, rng));
        out.push_back(from_check(std::to_string(D) + "-D grid values and coordinates",
                                 oracle::grad_check({&coords, &g.values()}, [&](Tape<double>& t) {
                                     return probe_loss(ops::grid_sample(t.param(coords), t.param(g.values()), D, R),
                                                       target_like({6, 3}, 10 + D));
                                 })));
    }
    {
        // Global grid: one C*H*W vector per image, reshaped.
        gridad::ContinuousGrid<double> g(2, 3, 4 * 3 * 3);
        g.init_xavier_normal(rng);
        auto coords = leaf("coords", interior_coords(2, 2, 3, rng));
        out.push_back(from_check("global grid sample and reshape",
                                 oracle::grad_check({&coords, &g.values()}, [&](Tape<double>& t) {
                                     auto s = ops::grid_sample(t.param(coords), t.param(g.values()), 2, 3);
                                     return probe_loss(ops::reshape(s, {2, 4, 3, 3}), target_like({2, 4, 3, 3}, 20));
                                 })));
    }

    // Encoders, fusion and refinement.
    {
        Rng init(303);
        gridad::LocalEncoder<double> enc(4, 2, init);
        auto x = leaf("x", oracle::random_tensor({2, 4, 3, 3}, rng, 0.0, 1.0));
        gridad::ParamList<double> ps{&x};
        enc.collect(ps);
        out.push_back(from_check("local encoder", oracle::grad_check(ps, [&](Tape<double>& t) {
                                     return probe_loss(enc(t.param(x)), target_like({2, 2, 3, 3}, 21));
                                 })));
        gridad::GlobalEncoder<double> genc(4, 2, init);
        gridad::ParamList<double> gs{&x};
        genc.collect(gs);
        out.push_back(from_check("global encoder", oracle::grad_check(gs, [&](Tape<double>& t) {
                                     return probe_loss(genc(t.param(x)), target_like({2, 2}, 22));
                                 })));
        gridad::FusionNet<double> net(8, 4, 2, init);
        auto fl = leaf("f_l", oracle::random_tensor({2, 4, 3, 3}, rng));
        auto fg = leaf("f_g", oracle::random_tensor({2, 4, 3, 3}, rng));
        gridad::ParamList<double> fs{&fl, &fg};
        net.collect(fs);
        out.push_back(from_check("fusion network", oracle::grad_check(fs, [&](Tape<double>& t) {
                                     return probe_loss(gridad::fuse(net, {t.param(fl), t.param(fg)}),
                                                       target_like({2, 4, 3, 3}, 23));
                                 })));
        // Refinement: S is a constant weight map, computed once at the base point.
        auto xin = leaf("x", oracle::random_tensor({2, 4, 3, 3}, rng));
        auto fn = leaf("f_n", oracle::random_tensor({2, 4, 3, 3}, rng));
        const auto S = gridad::similarity_map(xin.value, fn.value, gridad::RefineConfig{});
        out.push_back(from_check("refinement path", oracle::grad_check({&xin, &fn}, [&](Tape<double>& t) {
                                     auto xv = t.param(xin);
                                     return ops::mse(xv, ops::blend(xv, t.param(fn), S));
                                 })));
    }

    // Tiny end-to-end models.
    {
        gridad::ModelConfig cfg;
        cfg.channels = 4;
        cfg.height = cfg.width = 3;
        cfg.local_resolution = 4;
        cfg.global_resolution = 3;
        cfg.refine.enabled = false;  // S is stop-gradient; its path is checked above
        cfg.jitter.enabled = false;
        Rng data(404);
        const auto x = oracle::random_tensor({2, 4, 3, 3}, data, 0.0, 1.0);
        auto check_model = [&](const std::string& name, gridad::AnomalyModel<double>& model) {
            auto params = model.parameters();
            out.push_back(from_check(name, oracle::grad_check(params, [&](Tape<double>& t) {
                                         Rng r(0);
                                         auto xv = t.constant(x);
                                         return model.training_loss(xv, model.forward(xv, false, r));
                                     })));
        };
        auto grad_model = gridad::make_grad_model<double>(cfg, 7);
        check_model("full grid model (C=4, H=W=3, R_l=4, R_g=3)", grad_model);
        auto attn_local = gridad::build_baseline<double>(gridad::RepresentationKind::attention, gridad::Perspective::local, 5, cfg, 8);
        check_model("attention baseline, local", attn_local);
        auto attn_global = gridad::build_baseline<double>(gridad::RepresentationKind::attention, gridad::Perspective::global, 3, cfg, 9);
        check_model("attention baseline, global", attn_global);
    }
    return out;
}

std::vector<CaseResult> refinement_suite(std::size_t pixels) {
    std::vector<CaseResult> out;
    const gridad::RefineConfig cfg;  // lambda1 0.3, lambda2 0.7, k 10
    auto one_pixel = [](std::vector<double> v) {
        const std::size_t c = v.size();
        return Tensor<double>({1, c, 1, 1}, std::move(v));
    };
    auto s_of = [&](std::vector<double> x, std::vector<double> f) {
        return gridad::similarity_map(one_pixel(std::move(x)), one_pixel(std::move(f)), cfg)[0];
    };

    {
        const double s = s_of({0.4, -1.2, 2.0}, {0.4, -1.2, 2.0});
        out.push_back({"identical vectors give S = 1", s == 1.0, "S = " + fmt(s)});
    }
    {
        // 2 channels: cos 0.5 and mean squared difference 4.
        const double a = 2.0 * std::sqrt(2.0);
        const double s = s_of({a, 0.0}, {a / 2.0, a * std::sqrt(3.0) / 2.0});
        out.push_back({"mse 4, cos 0.5 gives S = 0.65", std::abs(s - 0.65) <= 1e-12, "S = " + fmt(s)});
    }
    {
        const double s = s_of({2.5}, {-2.5});
        out.push_back({"mse 25, cos -1 clamps to S = 0", s == 0.0, "S = " + fmt(s)});
    }
    {
        const double s = s_of({0.0, 0.0}, {1.0, 2.0});
        out.push_back({"zero-norm vector uses cos 0", std::abs(s - 0.3) <= 1e-15, "S = " + fmt(s)});
    }
    {
        Rng rng(505);
        const auto x = oracle::random_tensor({1, 3, 2, 2}, rng);
        const auto f = oracle::random_tensor({1, 3, 2, 2}, rng);
        const auto ones = Tensor<double>({1, 1, 2, 2}, 1.0);
        const auto zeros = Tensor<double>({1, 1, 2, 2}, 0.0);
        out.push_back({"S = 1 reproduces x", gridad::refine(x, f, ones) == x, "exact"});
        out.push_back({"S = 0 reproduces f_n", gridad::refine(x, f, zeros) == f, "exact"});
        const auto same = gridad::refine(x, x, gridad::similarity_map(x, x, cfg));
        out.push_back({"x = f_n is a fixed point", same == x, "exact"});
    }
    {
        const auto r = gridad::refine(one_pixel({2.0}), one_pixel({0.0}), Tensor<double>({1, 1, 1, 1}, 0.65));
        out.push_back({"S = 0.65, x = 2, f_n = 0 gives 1.3", std::abs(r[0] - 1.3) <= 1e-15, "x_hat = " + fmt(r[0])});
    }
    {
        // Convexity of x_hat between x and f_n, with S from the similarity map.
        Rng rng(606);
        const std::size_t C = 4;
        const auto x = oracle::random_tensor({pixels, C, 1, 1}, rng, -3.0, 3.0);
        auto f = oracle::random_tensor({pixels, C, 1, 1}, rng, -3.0, 3.0);
        for (std::size_t i = 0; i < pixels; i += 3)  // some near-identical pairs so S spans [0, 1]
            for (std::size_t c = 0; c < C; ++c) f[i * C + c] = x[i * C + c] + rng.uniform(-0.1, 0.1);
        const auto S = gridad::similarity_map(x, f, cfg);
        const auto xh = gridad::refine(x, f, S);
        std::size_t violations = 0;
        double smin = 1.0, smax = 0.0;
        for (std::size_t i = 0; i < pixels; ++i) {
            smin = std::min(smin, S[i]);
            smax = std::max(smax, S[i]);
            if (S[i] < 0.0 || S[i] > 1.0) ++violations;
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t k = i * C + c;
                if (xh[k] < std::min(x[k], f[k]) || xh[k] > std::max(x[k], f[k])) ++violations;
            }
        }
        out.push_back({"convexity on random pixels", violations == 0,
                       std::to_string(pixels) + " pixels, " + std::to_string(violations) + " violations, S in [" +
                           fmt(smin) + ", " + fmt(smax) + "]"});
    }
    return out;
}

std::vector<CaseResult> auroc_suite(std::size_t instances) {
    Rng rng(707);
    std::size_t mismatches = 0, with_ties = 0;
    std::string first_mismatch;
    for (std::size_t n = 0; n < instances; ++n) {
        const std::size_t size = 2 + rng.below(199);
        std::vector<double> scores(size);
        std::vector<std::uint8_t> labels(size);
        const std::uint64_t levels = (n % 3 == 0) ? 1 + rng.below(6) : 0;  // coarse scores force ties
        for (std::size_t i = 0; i < size; ++i) {
            scores[i] = levels ? static_cast<double>(rng.below(levels)) : rng.normal();
            labels[i] = rng.below(2);
        }
        labels[0] = 0;
        labels[1] = 1;
        const double fast = gridad::eval::auroc(std::span<const double>(scores), labels);
        const double slow = oracle::auroc_pairwise(scores, labels);
        if (levels) ++with_ties;
        if (fast != slow) {
            if (mismatches++ == 0) first_mismatch = "; first mismatch at instance " + std::to_string(n);
        }
    }
    return {{"rank-sum equals pairwise oracle", mismatches == 0,
             std::to_string(instances) + " instances (" + std::to_string(with_ties) + " tie-heavy), " +
                 std::to_string(mismatches) + " mismatches" + first_mismatch}};
}

}  // namespace suites
