#include "gridad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <cmath>

namespace gridad::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* col) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = x + c * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx, ++row) {
                T* out = col + row * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + dy;
                    T* orow = out + y * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(orow, orow + W, T(0));
                        continue;
                    }
                    const T* irow = plane + sy * W;
                    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx);
                    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(W, W - dx);
                    std::fill(orow, orow + lo, T(0));
                    std::copy(irow + lo + dx, irow + hi + dx, orow + lo);
                    std::fill(orow + hi, orow + W, T(0));
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* x) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        T* plane = x + c * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx, ++row) {
                const T* in = col + row * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    T* prow = plane + sy * W;
                    const T* irow = in + y * W;
                    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx);
                    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(W, W - dx);
                    for (std::ptrdiff_t xx = lo; xx < hi; ++xx) prow[xx + dx] += irow[xx];
                }
            }
        }
    }
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                          shape_string(t.shape()));
    }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
    auto& tape = same_tape({input, weight, bias});
    const auto& x = input.value();
    const auto& wt = weight.value();
    require_rank(x, 4, "conv2d input");
    require_rank(wt, 4, "conv2d weight");
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t cout = wt.dim(0), k = wt.dim(2);
    if (wt.dim(1) != cin) {
        throw ConfigError("conv2d: weight expects " + std::to_string(wt.dim(1)) + " input channels, got " +
                          std::to_string(cin));
    }
    if (wt.dim(3) != k || (k != 1 && k != 3)) throw ConfigError("conv2d: kernel must be 1x1 or 3x3");
    require_shape(bias.value().shape(), {cout}, "conv2d bias");

    const std::size_t hw = h * w, kdim = cin * k * k;
    Tensor<T> out({n, cout, h, w});
    CMapMat<T> wmat(wt.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kdim));
    // Patch matrices of every image, kept for the weight gradient.
    auto cols = std::make_shared<std::vector<T>>(k == 1 ? 0 : n * kdim * hw);
    for (std::size_t i = 0; i < n; ++i) {
        const T* src = x.data() + i * cin * hw;
        if (k != 1) {
            T* col = cols->data() + i * kdim * hw;
            im2col(src, cin, h, w, k, col);
            src = col;
        }
        CMapMat<T> cmat(src, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
        MapMat<T> ymat(out.data() + i * cout * hw, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw));
        ymat.noalias() = wmat * cmat;
        for (std::size_t c = 0; c < cout; ++c) {
            const T b = bias.value()[c];
            T* row = out.data() + (i * cout + c) * hw;
            for (std::size_t p = 0; p < hw; ++p) row[p] += b;
        }
    }

    const std::size_t xi = input.id, wi = weight.id, bi = bias.id;
    return tape.push(std::move(out), {input, weight, bias},
        [xi, wi, bi, n, cin, cout, h, w, k, hw, kdim, cols](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            const auto& x = t.value(xi);
            const auto& wt = t.value(wi);
            const bool need_x = t.requires_grad(xi), need_w = t.requires_grad(wi), need_b = t.requires_grad(bi);
            CMapMat<T> wmat(wt.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kdim));
            std::vector<T> dcol(k == 1 ? 0 : kdim * hw);
            for (std::size_t i = 0; i < n; ++i) {
                CMapMat<T> gmat(gy.data() + i * cout * hw, static_cast<Eigen::Index>(cout),
                                static_cast<Eigen::Index>(hw));
                if (need_w) {
                    const T* src = k == 1 ? x.data() + i * cin * hw : cols->data() + i * kdim * hw;
                    CMapMat<T> cmat(src, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
                    MapMat<T> gw(t.grad(wi).data(), static_cast<Eigen::Index>(cout),
                                 static_cast<Eigen::Index>(kdim));
                    gw.noalias() += gmat * cmat.transpose();
                }
                if (need_b) {
                    auto& gb = t.grad(bi);
                    for (std::size_t c = 0; c < cout; ++c) {
                        const T* row = gy.data() + (i * cout + c) * hw;
                        T s = 0;
                        for (std::size_t p = 0; p < hw; ++p) s += row[p];
                        gb[c] += s;
                    }
                }
                if (need_x) {
                    T* gx = t.grad(xi).data() + i * cin * hw;
                    if (k == 1) {
                        MapMat<T> gxm(gx, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(hw));
                        gxm.noalias() += wmat.transpose() * gmat;
                    } else {
                        MapMat<T> dc(dcol.data(), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
                        dc.noalias() = wmat.transpose() * gmat;
                        col2im_add(dcol.data(), cin, h, w, k, gx);
                    }
                }
            }
        },
        "conv2d");
}

template <typename T>
Var<T> affine(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
    auto& tape = same_tape({input, weight, bias});
    const auto& x = input.value();
    const auto& wt = weight.value();
    require_rank(x, 2, "affine input");
    require_rank(wt, 2, "affine weight");
    const std::size_t n = x.dim(0), in = x.dim(1), out_dim = wt.dim(0);
    if (wt.dim(1) != in) {
        throw ConfigError("affine: weight expects " + std::to_string(wt.dim(1)) + " inputs, got " +
                          std::to_string(in));
    }
    require_shape(bias.value().shape(), {out_dim}, "affine bias");
    Tensor<T> out({n, out_dim});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            T s = bias.value()[o];
            const T* wr = wt.data() + o * in;
            const T* xr = x.data() + r * in;
            for (std::size_t j = 0; j < in; ++j) s += wr[j] * xr[j];
            out[r * out_dim + o] = s;
        }
    }
    const std::size_t xi = input.id, wi = weight.id, bi = bias.id;
    return tape.push(std::move(out), {input, weight, bias},
        [xi, wi, bi, n, in, out_dim](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            const auto& x = t.value(xi);
            const auto& wt = t.value(wi);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const T g = gy[r * out_dim + o];
                    if (t.requires_grad(bi)) t.grad(bi)[o] += g;
                    if (t.requires_grad(wi)) {
                        T* gw = t.grad(wi).data() + o * in;
                        const T* xr = x.data() + r * in;
                        for (std::size_t j = 0; j < in; ++j) gw[j] += g * xr[j];
                    }
                    if (t.requires_grad(xi)) {
                        T* gx = t.grad(xi).data() + r * in;
                        const T* wr = wt.data() + o * in;
                        for (std::size_t j = 0; j < in; ++j) gx[j] += g * wr[j];
                    }
                }
            }
        },
        "affine");
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    auto& tape = same_tape({x});
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v = v > T(0) ? v : T(0);
    const std::size_t xi = x.id;
    return tape.push(std::move(out), {x},
        [xi](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            const auto& in = t.value(xi);
            auto& gx = t.grad(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if (in[i] > T(0)) gx[i] += gy[i];
            }
        },
        "relu");
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
    auto& tape = same_tape({x});
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v = std::tanh(v);
    const std::size_t xi = x.id;
    return tape.push(std::move(out), {x},
        [xi](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            const auto& y = t.value(self);
            auto& gx = t.grad(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (T(1) - y[i] * y[i]);
        },
        "tanh");
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    auto& tape = same_tape({a, b});
    require_shape(b.value().shape(), a.value().shape(), "add");
    Tensor<T> out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const std::size_t ai = a.id, bi = b.id;
    return tape.push(std::move(out), {a, b},
        [ai, bi](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            for (std::size_t id : {ai, bi}) {
                if (!t.requires_grad(id)) continue;
                auto& g = t.grad(id);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
            }
        },
        "add");
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    auto& tape = same_tape({a});
    Tensor<T> out = a.value();
    for (auto& v : out.vec()) v *= factor;
    const std::size_t ai = a.id;
    return tape.push(std::move(out), {a},
        [ai, factor](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& g = t.grad(ai);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * gy[i];
        },
        "scale");
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    auto& tape = same_tape({x});
    const auto& v = x.value();
    require_rank(v, 4, "global_avg_pool");
    const std::size_t n = v.dim(0), c = v.dim(1), hw = v.dim(2) * v.dim(3);
    if (hw == 0) throw ConfigError("global_avg_pool: empty spatial extent");
    Tensor<T> out({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        const T* p = v.data() + i * hw;
        T s = 0;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
        out[i] = s / static_cast<T>(hw);
    }
    const std::size_t xi = x.id;
    return tape.push(std::move(out), {x},
        [xi, n, c, hw](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& gx = t.grad(xi);
            for (std::size_t i = 0; i < n * c; ++i) {
                const T g = gy[i] / static_cast<T>(hw);
                T* p = gx.data() + i * hw;
                for (std::size_t j = 0; j < hw; ++j) p[j] += g;
            }
        },
        "global_avg_pool");
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ConfigError("concat_channels: no inputs");
    auto& tape = *parts.front().tape;
    const auto& first = parts.front().value();
    require_rank(first, 4, "concat_channels");
    const std::size_t n = first.dim(0), h = first.dim(2), w = first.dim(3), hw = h * w;
    std::vector<std::size_t> ids, chans;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.tape != &tape) throw std::logic_error("concat_channels: inputs from different tapes");
        const auto& v = p.value();
        require_rank(v, 4, "concat_channels");
        if (v.dim(0) != n || v.dim(2) != h || v.dim(3) != w) {
            throw ConfigError("concat_channels: batch/spatial extents differ");
        }
        ids.push_back(p.id);
        chans.push_back(v.dim(1));
        total += v.dim(1);
    }
    Tensor<T> out({n, total, h, w});
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const T* src = parts[k].value().data() + i * chans[k] * hw;
            std::copy(src, src + chans[k] * hw, out.data() + (i * total + offset) * hw);
            offset += chans[k];
        }
    }
    auto fn = [ids, chans, n, total, hw](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.requires_grad(ids[k])) {
                    const T* src = gy.data() + (i * total + offset) * hw;
                    T* dst = t.grad(ids[k]).data() + i * chans[k] * hw;
                    for (std::size_t j = 0; j < chans[k] * hw; ++j) dst[j] += src[j];
                }
                offset += chans[k];
            }
        }
    };
    return tape.push(std::move(out), parts, std::move(fn), "concat_channels");
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    auto& tape = same_tape({x});
    if (shape_size(shape) != x.value().size()) {
        throw ConfigError("reshape: cannot view " + shape_string(x.value().shape()) + " as " + shape_string(shape));
    }
    Tensor<T> out = x.value().reshaped(std::move(shape));
    const std::size_t xi = x.id;
    return tape.push(std::move(out), {x},
        [xi](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& gx = t.grad(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
        },
        "reshape");
}

template <typename T>
Var<T> to_rows(const Var<T>& x) {
    auto& tape = same_tape({x});
    const auto& v = x.value();
    require_rank(v, 4, "to_rows");
    const std::size_t n = v.dim(0), c = v.dim(1), hw = v.dim(2) * v.dim(3);
    Tensor<T> out({n * hw, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) out[(i * hw + p) * c + ch] = v[(i * c + ch) * hw + p];
    const std::size_t xi = x.id;
    return tape.push(std::move(out), {x},
        [xi, n, c, hw](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& gx = t.grad(xi);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < hw; ++p) gx[(i * c + ch) * hw + p] += gy[(i * hw + p) * c + ch];
        },
        "to_rows");
}

template <typename T>
Var<T> from_rows(const Var<T>& rows, std::size_t n, std::size_t h, std::size_t w) {
    auto& tape = same_tape({rows});
    const auto& v = rows.value();
    require_rank(v, 2, "from_rows");
    const std::size_t hw = h * w, c = v.dim(1);
    if (v.dim(0) != n * hw) throw ConfigError("from_rows: row count does not match N*H*W");
    Tensor<T> out({n, c, h, w});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) out[(i * c + ch) * hw + p] = v[(i * hw + p) * c + ch];
    const std::size_t ri = rows.id;
    return tape.push(std::move(out), {rows},
        [ri, n, c, hw](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& gr = t.grad(ri);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < hw; ++p) gr[(i * hw + p) * c + ch] += gy[(i * c + ch) * hw + p];
        },
        "from_rows");
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
    auto& tape = same_tape({a, b});
    require_shape(b.value().shape(), a.value().shape(), "mse");
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.empty()) throw ConfigError("mse: empty input");
    T s = 0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const T d = av[i] - bv[i];
        s += d * d;
    }
    const T count = static_cast<T>(av.size());
    Tensor<T> out({1}, s / count);
    const std::size_t ai = a.id, bi = b.id;
    return tape.push(std::move(out), {a, b},
        [ai, bi, count](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * T(2) / count;
            const auto& av = t.value(ai);
            const auto& bv = t.value(bi);
            if (t.requires_grad(ai)) {
                auto& ga = t.grad(ai);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (av[i] - bv[i]);
            }
            if (t.requires_grad(bi)) {
                auto& gb = t.grad(bi);
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (av[i] - bv[i]);
            }
        },
        "mse");
}

template <typename T>
Var<T> blend(const Var<T>& a, const Var<T>& b, const Tensor<T>& weights) {
    auto& tape = same_tape({a, b});
    const auto& av = a.value();
    const auto& bv = b.value();
    require_rank(av, 4, "blend");
    require_shape(bv.shape(), av.shape(), "blend");
    const std::size_t n = av.dim(0), c = av.dim(1), hw = av.dim(2) * av.dim(3);
    require_shape(weights.shape(), {n, 1, av.dim(2), av.dim(3)}, "blend weights");
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) {
                const std::size_t k = (i * c + ch) * hw + p;
                const T s = weights[i * hw + p];
                out[k] = s * av[k] + (T(1) - s) * bv[k];
            }
    const std::size_t ai = a.id, bi = b.id;
    return tape.push(std::move(out), {a, b},
        [ai, bi, weights, n, c, hw](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            const bool need_a = t.requires_grad(ai), need_b = t.requires_grad(bi);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < hw; ++p) {
                        const std::size_t k = (i * c + ch) * hw + p;
                        const T s = weights[i * hw + p];
                        if (need_a) t.grad(ai)[k] += s * gy[k];
                        if (need_b) t.grad(bi)[k] += (T(1) - s) * gy[k];
                    }
        },
        "blend");
}

template <typename T>
Var<T> offset_clamp(const Var<T>& x, const Tensor<T>& offset) {
    auto& tape = same_tape({x});
    require_shape(offset.shape(), x.value().shape(), "offset_clamp");
    Tensor<T> out = x.value();
    std::vector<char> pass(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = out[i] + offset[i];
        pass[i] = (v > T(-1) && v < T(1)) ? 1 : 0;
        out[i] = std::clamp(v, T(-1), T(1));
    }
    const std::size_t xi = x.id;
    return tape.push(std::move(out), {x},
        [xi, pass = std::move(pass)](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& gx = t.grad(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if (pass[i]) gx[i] += gy[i];
            }
        },
        "offset_clamp");
}

template <typename T>
Var<T> detach(const Var<T>& x) {
    auto& tape = same_tape({x});
    return tape.constant(x.value());
}

template <typename T>
Var<T> straight_through(const Var<T>& source, const Var<T>& target) {
    auto& tape = same_tape({source, target});
    require_shape(target.value().shape(), source.value().shape(), "straight_through");
    Tensor<T> out = target.value();
    const std::size_t si = source.id;
    // Only the source is a dependency for gradient purposes.
    return tape.push(std::move(out), {source},
        [si](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& gs = t.grad(si);
            for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += gy[i];
        },
        "straight_through");
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::size_t>& index) {
    auto& tape = same_tape({table});
    const auto& tv = table.value();
    require_rank(tv, 2, "gather_rows");
    const std::size_t rows = tv.dim(0), d = tv.dim(1);
    Tensor<T> out({index.size(), d});
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= rows) throw ConfigError("gather_rows: index out of range");
        std::copy(tv.data() + index[r] * d, tv.data() + (index[r] + 1) * d, out.data() + r * d);
    }
    const std::size_t ti = table.id;
    return tape.push(std::move(out), {table},
        [ti, index, d](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            auto& gt = t.grad(ti);
            for (std::size_t r = 0; r < index.size(); ++r) {
                T* dst = gt.data() + index[r] * d;
                const T* src = gy.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        },
        "gather_rows");
}

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& e) {
    require_rank(q, 2, "attention queries");
    require_rank(e, 2, "attention entries");
    const std::size_t m = q.dim(0), d = q.dim(1), k = e.dim(0);
    if (e.dim(1) != d) throw ConfigError("attention: query and entry dimensions differ");
    if (k == 0) throw ConfigError("attention: empty memory");
    CMapMat<T> qm(q.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    CMapMat<T> em(e.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    Tensor<T> a({m, k});
    MapMat<T> am(a.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    am.noalias() = qm * em.transpose();
    const T inv_temp = T(1) / std::sqrt(static_cast<T>(d));
    for (std::size_t r = 0; r < m; ++r) {
        T* row = a.data() + r * k;
        T mx = row[0] * inv_temp;
        for (std::size_t j = 0; j < k; ++j) {
            row[j] *= inv_temp;
            mx = std::max(mx, row[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return a;
}

template <typename T>
Var<T> attention(const Var<T>& queries, const Var<T>& entries) {
    auto& tape = same_tape({queries, entries});
    const auto& q = queries.value();
    const auto& e = entries.value();
    Tensor<T> a = attention_weights(q, e);
    const std::size_t m = q.dim(0), d = q.dim(1), k = e.dim(0);
    Tensor<T> out({m, d});
    {
        CMapMat<T> am(a.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        CMapMat<T> em(e.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
        MapMat<T> om(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
        om.noalias() = am * em;
    }
    const std::size_t qi = queries.id, ei = entries.id;
    return tape.push(std::move(out), {queries, entries},
        [qi, ei, a = std::move(a), m, d, k](Tape<T>& t, std::size_t self) {
            const auto& gy = t.grad(self);
            const auto& q = t.value(qi);
            const auto& e = t.value(ei);
            const auto M = static_cast<Eigen::Index>(m), D = static_cast<Eigen::Index>(d),
                       K = static_cast<Eigen::Index>(k);
            CMapMat<T> am(a.data(), M, K);
            CMapMat<T> em(e.data(), K, D);
            CMapMat<T> gm(gy.data(), M, D);
            // dA = dY E^T; dS = A * (dA - rowsum(A*dA)); logits are q e^T / sqrt(d).
            RowMat<T> da = gm * em.transpose();
            RowMat<T> ds(M, K);
            for (Eigen::Index r = 0; r < M; ++r) {
                T dot = 0;
                for (Eigen::Index j = 0; j < K; ++j) dot += am(r, j) * da(r, j);
                for (Eigen::Index j = 0; j < K; ++j) ds(r, j) = am(r, j) * (da(r, j) - dot);
            }
            ds *= T(1) / std::sqrt(static_cast<T>(d));
            if (t.requires_grad(qi)) {
                MapMat<T> gq(t.grad(qi).data(), M, D);
                gq.noalias() += ds * em;
            }
            if (t.requires_grad(ei)) {
                MapMat<T> ge(t.grad(ei).data(), K, D);
                CMapMat<T> qm(q.data(), M, D);
                ge.noalias() += am.transpose() * gm;
                ge.noalias() += ds.transpose() * qm;
            }
        },
        "attention");
}

#define GRIDAD_INSTANTIATE_OPS(T)                                                       \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&);                \
    template Var<T> affine(const Var<T>&, const Var<T>&, const Var<T>&);                \
    template Var<T> relu(const Var<T>&);                                                \
    template Var<T> tanh(const Var<T>&);                                                \
    template Var<T> add(const Var<T>&, const Var<T>&);                                  \
    template Var<T> scale(const Var<T>&, T);                                            \
    template Var<T> global_avg_pool(const Var<T>&);                                     \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                        \
    template Var<T> reshape(const Var<T>&, Shape);                                      \
    template Var<T> to_rows(const Var<T>&);                                             \
    template Var<T> from_rows(const Var<T>&, std::size_t, std::size_t, std::size_t);    \
    template Var<T> mse(const Var<T>&, const Var<T>&);                                  \
    template Var<T> blend(const Var<T>&, const Var<T>&, const Tensor<T>&);              \
    template Var<T> offset_clamp(const Var<T>&, const Tensor<T>&);                      \
    template Var<T> detach(const Var<T>&);                                              \
    template Var<T> straight_through(const Var<T>&, const Var<T>&);                     \
    template Var<T> gather_rows(const Var<T>&, const std::vector<std::size_t>&);        \
    template Var<T> attention(const Var<T>&, const Var<T>&);                            \
    template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&);

GRIDAD_INSTANTIATE_OPS(float)
GRIDAD_INSTANTIATE_OPS(double)

}  // namespace gridad::ops
