#include "hcpn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace hcpn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
ConstMap<T> as_matrix(const T* data, std::size_t rows, std::size_t cols) {
    return ConstMap<T>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MutMap<T> as_matrix(T* data, std::size_t rows, std::size_t cols) {
    return MutMap<T>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
    if (s.size() != rank) {
        throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " + shape_str(s));
    }
}

// dst {n,m} = src {m,n}^T, tiled to stay in cache.
template <typename T>
void transpose_into(const T* src, T* dst, std::size_t m, std::size_t n) {
    constexpr std::size_t kTile = 32;
    for (std::size_t i0 = 0; i0 < m; i0 += kTile) {
        const std::size_t i1 = std::min(m, i0 + kTile);
        for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
            const std::size_t j1 = std::min(n, j0 + kTile);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) dst[j * m + i] = src[i * n + j];
        }
    }
}

// ---- broadcasting ---------------------------------------------------------

constexpr std::size_t kMaxRank = 4;

struct Broadcast {
    std::array<std::size_t, kMaxRank> out{};
    std::array<std::size_t, kMaxRank> stride_a{};
    std::array<std::size_t, kMaxRank> stride_b{};
    Shape out_shape;
    bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    Broadcast p;
    if (a == b) {
        p.same = true;
        p.out_shape = a;
        return p;
    }
    if (a.size() != b.size() || a.size() > kMaxRank) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
    }
    const std::size_t pad = kMaxRank - a.size();
    std::array<std::size_t, kMaxRank> ea{}, eb{};
    for (std::size_t i = 0; i < kMaxRank; ++i) {
        ea[i] = i < pad ? 1 : a[i - pad];
        eb[i] = i < pad ? 1 : b[i - pad];
        if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1) {
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                 " are not broadcastable");
        }
        p.out[i] = std::max(ea[i], eb[i]);
    }
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = kMaxRank; i-- > 0;) {
        p.stride_a[i] = ea[i] == 1 ? 0 : sa;
        p.stride_b[i] = eb[i] == 1 ? 0 : sb;
        sa *= ea[i];
        sb *= eb[i];
    }
    for (std::size_t i = pad; i < kMaxRank; ++i) p.out_shape.push_back(p.out[i]);
    return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& p, std::size_t numel, F&& f) {
    if (p.same) {
        for (std::size_t i = 0; i < numel; ++i) f(i, i, i);
        return;
    }
    std::size_t o = 0;
    for (std::size_t i0 = 0; i0 < p.out[0]; ++i0)
        for (std::size_t i1 = 0; i1 < p.out[1]; ++i1)
            for (std::size_t i2 = 0; i2 < p.out[2]; ++i2) {
                const std::size_t ba = i0 * p.stride_a[0] + i1 * p.stride_a[1] + i2 * p.stride_a[2];
                const std::size_t bb = i0 * p.stride_b[0] + i1 * p.stride_b[1] + i2 * p.stride_b[2];
                for (std::size_t i3 = 0; i3 < p.out[3]; ++i3, ++o) {
                    f(o, ba + i3 * p.stride_a[3], bb + i3 * p.stride_b[3]);
                }
            }
}

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
    const Broadcast plan = plan_broadcast(a.shape(), b.shape(), name);
    const std::size_t n = shape_numel(plan.out_shape);
    std::vector<T> out(n);
    const T* pa = a.data();
    const T* pb = b.data();
    switch (kind) {
        case BinaryKind::Add:
            for_each_broadcast(plan, n, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] + pb[j]; });
            break;
        case BinaryKind::Sub:
            for_each_broadcast(plan, n, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] - pb[j]; });
            break;
        case BinaryKind::Mul:
            for_each_broadcast(plan, n, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] * pb[j]; });
            break;
    }
    Tensor<T> result(plan.out_shape, std::move(out));
    Tape<T>* tape = common_tape({&a, &b});
    if (tape == nullptr) return result;

    return tape->record(name, std::move(result), {&a, &b},
                        [plan, n, kind, a = a.detached(), b = b.detached()](std::span<const T> g,
                                                                            std::span<std::vector<T>*> gin) {
                            T* ga = gin[0] ? gin[0]->data() : nullptr;
                            T* gb = gin[1] ? gin[1]->data() : nullptr;
                            const T* pa = a.data();
                            const T* pb = b.data();
                            for_each_broadcast(plan, n, [&](std::size_t o, std::size_t i, std::size_t j) {
                                switch (kind) {
                                    case BinaryKind::Add:
                                        if (ga) ga[i] += g[o];
                                        if (gb) gb[j] += g[o];
                                        break;
                                    case BinaryKind::Sub:
                                        if (ga) ga[i] += g[o];
                                        if (gb) gb[j] -= g[o];
                                        break;
                                    case BinaryKind::Mul:
                                        if (ga) ga[i] += g[o] * pb[j];
                                        if (gb) gb[j] += g[o] * pa[i];
                                        break;
                                }
                            });
                        });
}

// Pointwise op whose derivative is expressible through (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, const char* name, Fwd fwd, Deriv deriv) {
    std::vector<T> out(a.numel());
    const T* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(pa[i]);
    Tensor<T> result(a.shape(), std::move(out));
    Tape<T>* tape = common_tape({&a});
    if (tape == nullptr) return result;
    return tape->record(name, result, {&a},
                        [a = a.detached(), y = result.detached(), deriv](std::span<const T> g,
                                                                         std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            T* ga = gin[0]->data();
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(a[i], y[i]);
                        });
}

// ---- convolution helpers --------------------------------------------------

struct ConvGeometry {
    std::size_t cin, h, w, cout, k, stride, dilation, pad, ho, wo;
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
    std::size_t col_rows() const { return cin * k * k; }
    std::size_t col_cols() const { return ho * wo; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
    const long pad = static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                T* row = cols + ((c * g.k + ky) * g.k + kx) * g.col_cols();
                const T* plane = x + c * g.h * g.w;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - pad;
                    T* dst = row + oy * g.wo;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        std::fill(dst, dst + g.wo, T(0));
                        continue;
                    }
                    const T* src = plane + iy * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - pad;
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
                    }
                }
            }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
    const long pad = static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const T* row = cols + ((c * g.k + ky) * g.k + kx) * g.col_cols();
                T* plane = dx + c * g.h * g.w;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - pad;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    const T* src = row + oy * g.wo;
                    T* dst = plane + iy * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - pad;
                        if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
                    }
                }
            }
}

struct ResizeAxis {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;
};

ResizeAxis resize_axis(std::size_t in, std::size_t out) {
    ResizeAxis r;
    r.lo.resize(out);
    r.hi.resize(out);
    r.frac.resize(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double pos = out > 1 ? static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
        std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        if (lo > in - 1) lo = in - 1;
        r.lo[i] = lo;
        r.hi[i] = std::min(lo + 1, in - 1);
        r.frac[i] = pos - static_cast<double>(lo);
    }
    return r;
}

}  // namespace

// ---- matrix ops -----------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<T> out(m * n);
    as_matrix(out.data(), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
    Tensor<T> result({m, n}, std::move(out));
    Tape<T>* tape = common_tape({&a, &b});
    if (tape == nullptr) return result;
    return tape->record("matmul", std::move(result), {&a, &b},
                        [a = a.detached(), b = b.detached(), m, k, n](std::span<const T> g,
                                                                      std::span<std::vector<T>*> gin) {
                            const auto G = as_matrix(g.data(), m, n);
                            if (gin[0]) as_matrix(gin[0]->data(), m, k).noalias() += G * as_matrix(b.data(), k, n).transpose();
                            if (gin[1]) as_matrix(gin[1]->data(), k, n).noalias() += as_matrix(a.data(), m, k).transpose() * G;
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_rank(a.shape(), 2, "transpose");
    const std::size_t m = a.extent(0), n = a.extent(1);
    std::vector<T> out(m * n);
    transpose_into(a.data(), out.data(), m, n);
    Tensor<T> result({n, m}, std::move(out));
    Tape<T>* tape = common_tape({&a});
    if (tape == nullptr) return result;
    return tape->record("transpose", std::move(result), {&a},
                        [m, n](std::span<const T> g, std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            std::vector<T> gt(m * n);
                            transpose_into(g.data(), gt.data(), n, m);
                            as_matrix(gin[0]->data(), m, n) += as_matrix(gt.data(), m, n);
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& s, Axis axis) {
    require_rank(s.shape(), 2, "softmax");
    const std::size_t m = s.extent(0), n = s.extent(1);
    std::vector<T> out(m * n);
    using Vec = Eigen::Array<T, 1, Eigen::Dynamic>;
    auto row_in = [&](std::size_t r) { return Eigen::Map<const Vec>(s.data() + r * n, static_cast<Eigen::Index>(n)); };
    auto row_out = [&](std::size_t r) { return Eigen::Map<Vec>(out.data() + r * n, static_cast<Eigen::Index>(n)); };
    // Row-major storage: every pass walks contiguous rows.
    if (axis == Axis::Row) {
        for (std::size_t r = 0; r < m; ++r) {
            auto y = row_out(r);
            y = (row_in(r) - row_in(r).maxCoeff()).exp();
            y *= T(1) / y.sum();
        }
    } else {
        Vec mx = row_in(0);
        for (std::size_t r = 1; r < m; ++r) mx = mx.max(row_in(r));
        Vec sum = Vec::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t r = 0; r < m; ++r) {
            auto y = row_out(r);
            y = (row_in(r) - mx).exp();
            sum += y;
        }
        const Vec inv = sum.inverse();
        for (std::size_t r = 0; r < m; ++r) row_out(r) *= inv;
    }
    Tensor<T> result({m, n}, std::move(out));
    Tape<T>* tape = common_tape({&s});
    if (tape == nullptr) return result;
    return tape->record(axis == Axis::Row ? "softmax_row" : "softmax_col", result, {&s},
                        [y = result.detached(), m, n, axis](std::span<const T> g, std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            const auto ga = as_matrix(g.data(), m, n).array();
                            const auto ya = as_matrix(y.data(), m, n).array();
                            auto gs = as_matrix(gin[0]->data(), m, n).array();
                            if (axis == Axis::Row) {
                                const auto dot = (ga * ya).rowwise().sum().eval();
                                gs += ya * (ga.colwise() - dot);
                            } else {
                                const auto dot = (ga * ya).colwise().sum().eval();
                                gs += ya * (ga.rowwise() - dot);
                            }
                        });
}

// ---- convolution ----------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias, Conv2dOptions opts) {
    require_rank(input.shape(), 3, "conv2d input");
    require_rank(kernel.shape(), 4, "conv2d kernel");
    if (kernel.extent(1) != input.extent(0)) {
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " expects " +
                             std::to_string(kernel.extent(1)) + " input channels, input is " + shape_str(input.shape()));
    }
    if (kernel.extent(2) != kernel.extent(3) || kernel.extent(2) % 2 == 0) {
        throw DimensionError("conv2d: kernel must be square with odd size, got " + shape_str(kernel.shape()));
    }
    if (opts.stride < 1 || opts.dilation < 1) throw DimensionError("conv2d: stride and dilation must be >= 1");
    if (bias != nullptr && (bias->rank() != 1 || bias->extent(0) != kernel.extent(0))) {
        throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " does not match kernel " +
                             shape_str(kernel.shape()));
    }

    ConvGeometry geo{};
    geo.cin = input.extent(0);
    geo.h = input.extent(1);
    geo.w = input.extent(2);
    geo.cout = kernel.extent(0);
    geo.k = kernel.extent(2);
    geo.stride = opts.stride;
    geo.dilation = opts.dilation;
    const std::size_t span = opts.dilation * (geo.k - 1);
    if (opts.padding == Padding::Same) {
        geo.pad = span / 2;
    } else {
        geo.pad = 0;
        if (span >= geo.h || span >= geo.w) {
            throw DimensionError("conv2d: dilated kernel extent " + std::to_string(span + 1) +
                                 " does not fit valid-padded input " + shape_str(input.shape()));
        }
    }
    geo.ho = (geo.h + 2 * geo.pad - span - 1) / geo.stride + 1;
    geo.wo = (geo.w + 2 * geo.pad - span - 1) / geo.stride + 1;

    const std::size_t rows = geo.col_rows(), cols_n = geo.col_cols();
    std::shared_ptr<std::vector<T>> cols;
    const T* col_data = input.data();
    if (!geo.pointwise()) {
        cols = std::make_shared<std::vector<T>>(rows * cols_n);
        im2col(geo, input.data(), cols->data());
        col_data = cols->data();
    }

    std::vector<T> out(geo.cout * cols_n);
    auto O = as_matrix(out.data(), geo.cout, cols_n);
    O.noalias() = as_matrix(kernel.data(), geo.cout, rows) * as_matrix(col_data, rows, cols_n);
    if (bias != nullptr) {
        for (std::size_t c = 0; c < geo.cout; ++c) O.row(static_cast<Eigen::Index>(c)).array() += (*bias)[c];
    }
    Tensor<T> result({geo.cout, geo.ho, geo.wo}, std::move(out));

    Tape<T>* tape = bias ? common_tape({&input, &kernel, bias}) : common_tape({&input, &kernel});
    if (tape == nullptr) return result;

    std::vector<const Tensor<T>*> ins{&input, &kernel};
    if (bias) ins.push_back(bias);
    return tape->record("conv2d", std::move(result), ins,
                        [geo, cols, x = input.detached(), w = kernel.detached()](std::span<const T> g,
                                                                                 std::span<std::vector<T>*> gin) {
                            const std::size_t rows = geo.col_rows(), cols_n = geo.col_cols();
                            const auto G = as_matrix(g.data(), geo.cout, cols_n);
                            const T* col_data = cols ? cols->data() : x.data();
                            if (gin[1]) {
                                as_matrix(gin[1]->data(), geo.cout, rows).noalias() +=
                                    G * as_matrix(col_data, rows, cols_n).transpose();
                            }
                            if (gin.size() > 2 && gin[2]) {
                                T* gb = gin[2]->data();
                                for (std::size_t c = 0; c < geo.cout; ++c) gb[c] += G.row(static_cast<Eigen::Index>(c)).sum();
                            }
                            if (gin[0]) {
                                const auto Wm = as_matrix(w.data(), geo.cout, rows);
                                if (geo.pointwise()) {
                                    as_matrix(gin[0]->data(), rows, cols_n).noalias() += Wm.transpose() * G;
                                } else {
                                    std::vector<T> dcols(rows * cols_n);
                                    as_matrix(dcols.data(), rows, cols_n).noalias() = Wm.transpose() * G;
                                    col2im_add(geo, dcols.data(), gin[0]->data());
                                }
                            }
                        });
}

// ---- pooling / resizing / normalization -----------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& v) {
    require_rank(v.shape(), 3, "global_avg_pool");
    const std::size_t c = v.extent(0), hw = v.extent(1) * v.extent(2);
    if (hw == 0) throw DimensionError("global_avg_pool: empty spatial extent in " + shape_str(v.shape()));
    std::vector<T> out(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        T s = 0;
        const T* p = v.data() + ch * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
        out[ch] = s / static_cast<T>(hw);
    }
    Tensor<T> result({c, 1, 1}, std::move(out));
    Tape<T>* tape = common_tape({&v});
    if (tape == nullptr) return result;
    return tape->record("global_avg_pool", std::move(result), {&v},
                        [c, hw](std::span<const T> g, std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            T* gv = gin[0]->data();
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                const T share = g[ch] / static_cast<T>(hw);
                                for (std::size_t i = 0; i < hw; ++i) gv[ch * hw + i] += share;
                            }
                        });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& v, std::size_t height, std::size_t width) {
    require_rank(v.shape(), 3, "resize_bilinear");
    if (height == 0 || width == 0) {
        throw DimensionError("resize_bilinear: zero-sized target " + std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t c = v.extent(0), h = v.extent(1), w = v.extent(2);
    if (h == 0 || w == 0) throw DimensionError("resize_bilinear: empty input " + shape_str(v.shape()));
    if (h == height && w == width) return v;

    const ResizeAxis ry = resize_axis(h, height), rx = resize_axis(w, width);
    std::vector<T> out(c * height * width);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = v.data() + ch * h * w;
        T* o = out.data() + ch * height * width;
        for (std::size_t y = 0; y < height; ++y) {
            const T fy = static_cast<T>(ry.frac[y]);
            const T* r0 = p + ry.lo[y] * w;
            const T* r1 = p + ry.hi[y] * w;
            for (std::size_t x = 0; x < width; ++x) {
                const T fx = static_cast<T>(rx.frac[x]);
                const T top = r0[rx.lo[x]] * (1 - fx) + r0[rx.hi[x]] * fx;
                const T bot = r1[rx.lo[x]] * (1 - fx) + r1[rx.hi[x]] * fx;
                o[y * width + x] = top * (1 - fy) + bot * fy;
            }
        }
    }
    Tensor<T> result({c, height, width}, std::move(out));
    Tape<T>* tape = common_tape({&v});
    if (tape == nullptr) return result;
    return tape->record("resize_bilinear", std::move(result), {&v},
                        [c, h, w, height, width, ry, rx](std::span<const T> g, std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                T* gp = gin[0]->data() + ch * h * w;
                                const T* go = g.data() + ch * height * width;
                                for (std::size_t y = 0; y < height; ++y) {
                                    const T fy = static_cast<T>(ry.frac[y]);
                                    T* r0 = gp + ry.lo[y] * w;
                                    T* r1 = gp + ry.hi[y] * w;
                                    for (std::size_t x = 0; x < width; ++x) {
                                        const T fx = static_cast<T>(rx.frac[x]);
                                        const T gv = go[y * width + x];
                                        r0[rx.lo[x]] += gv * (1 - fy) * (1 - fx);
                                        r0[rx.hi[x]] += gv * (1 - fy) * fx;
                                        r1[rx.lo[x]] += gv * fy * (1 - fx);
                                        r1[rx.hi[x]] += gv * fy * fx;
                                    }
                                }
                            }
                        });
}

template <typename T>
Tensor<T> normalize(const Tensor<T>& v, NormMode mode) {
    require_rank(v.shape(), 3, "normalize");
    const std::size_t c = v.extent(0), hw = v.extent(1) * v.extent(2);
    // A "group" is the set of elements sharing one norm.
    const std::size_t groups = mode == NormMode::L2Channel ? c : hw;
    const std::size_t len = mode == NormMode::L2Channel ? hw : c;
    const std::size_t group_stride = mode == NormMode::L2Channel ? hw : 1;
    const std::size_t elem_stride = mode == NormMode::L2Channel ? 1 : hw;
    const T eps = static_cast<T>(kNormEpsilon);

    std::vector<T> norms(groups);
    std::vector<T> out(v.numel());
    const T* pv = v.data();
    for (std::size_t gi = 0; gi < groups; ++gi) {
        T ss = 0;
        for (std::size_t i = 0; i < len; ++i) {
            const T x = pv[gi * group_stride + i * elem_stride];
            ss += x * x;
        }
        norms[gi] = std::sqrt(ss);
        const T inv = T(1) / (norms[gi] + eps);
        for (std::size_t i = 0; i < len; ++i) {
            const std::size_t idx = gi * group_stride + i * elem_stride;
            out[idx] = pv[idx] * inv;
        }
    }
    Tensor<T> result(v.shape(), std::move(out));
    Tape<T>* tape = common_tape({&v});
    if (tape == nullptr) return result;
    return tape->record(mode == NormMode::L2Channel ? "normalize_l2_channel" : "normalize_channel_pos",
                        std::move(result), {&v},
                        [x = v.detached(), norms = std::move(norms), groups, len, group_stride, elem_stride, eps](
                            std::span<const T> g, std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            T* gv = gin[0]->data();
                            const T* px = x.data();
                            for (std::size_t gi = 0; gi < groups; ++gi) {
                                const T n = norms[gi];
                                const T d = n + eps;
                                T dot = 0;
                                for (std::size_t i = 0; i < len; ++i) {
                                    const std::size_t idx = gi * group_stride + i * elem_stride;
                                    dot += g[idx] * px[idx];
                                }
                                const T coupling = n > 0 ? dot / (n * d * d) : T(0);
                                for (std::size_t i = 0; i < len; ++i) {
                                    const std::size_t idx = gi * group_stride + i * elem_stride;
                                    gv[idx] += g[idx] / d - px[idx] * coupling;
                                }
                            }
                        });
}

// ---- pointwise ------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::Add, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::Sub, "sub");
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::Mul, "hadamard");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary(
        a, "scale", [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
    return unary(
        a, "add_scalar", [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary(
        a, "sigmoid",
        [](T x) {
            if (x >= 0) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
    return unary(
        a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary(
        a, "relu", [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> max_with_constant(const Tensor<T>& a, const Tensor<T>& floor) {
    if (a.shape() != floor.shape()) {
        throw DimensionError("max_with_constant: shapes " + shape_str(a.shape()) + " and " + shape_str(floor.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], floor[i]);
    Tensor<T> result(a.shape(), std::move(out));
    Tape<T>* tape = common_tape({&a});
    if (tape == nullptr) return result;
    return tape->record("max_with_constant", std::move(result), {&a},
                        [a = a.detached(), f = floor.detached()](std::span<const T> g, std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            T* ga = gin[0]->data();
                            for (std::size_t i = 0; i < g.size(); ++i) {
                                if (a[i] >= f[i]) ga[i] += g[i];
                            }
                        });
}

// ---- structural -----------------------------------------------------------

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t lead = 0;
    for (const auto& p : parts) {
        if (p.rank() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
            throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " + shape_str(parts[0].shape()));
        }
        lead += p.extent(0);
    }
    std::vector<T> out;
    out.reserve(lead * shape_numel(tail));
    std::vector<std::size_t> sizes;
    std::vector<const Tensor<T>*> ins;
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        sizes.push_back(p.numel());
        ins.push_back(&p);
    }
    Shape shape{lead};
    shape.insert(shape.end(), tail.begin(), tail.end());
    Tensor<T> result(std::move(shape), std::move(out));
    Tape<T>* tape = common_tape(ins);
    if (tape == nullptr) return result;
    return tape->record("concat", std::move(result), ins,
                        [sizes](std::span<const T> g, std::span<std::vector<T>*> gin) {
                            std::size_t off = 0;
                            for (std::size_t i = 0; i < sizes.size(); ++i) {
                                if (gin[i]) {
                                    T* d = gin[i]->data();
                                    for (std::size_t j = 0; j < sizes[i]; ++j) d[j] += g[off + j];
                                }
                                off += sizes[i];
                            }
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    if (a.rank() == 0 || begin >= end || end > a.extent(0)) {
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                             shape_str(a.shape()));
    }
    const std::size_t inner = a.numel() / a.extent(0);
    std::vector<T> out(a.data() + begin * inner, a.data() + end * inner);
    Shape shape = a.shape();
    shape[0] = end - begin;
    Tensor<T> result(std::move(shape), std::move(out));
    Tape<T>* tape = common_tape({&a});
    if (tape == nullptr) return result;
    return tape->record("slice", std::move(result), {&a},
                        [off = begin * inner](std::span<const T> g, std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            T* d = gin[0]->data() + off;
                            for (std::size_t j = 0; j < g.size(); ++j) d[j] += g[j];
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T s = 0;
    for (T x : a.values()) s += x;
    Tensor<T> result = Tensor<T>::scalar(s);
    Tape<T>* tape = common_tape({&a});
    if (tape == nullptr) return result;
    return tape->record("sum", std::move(result), {&a}, [](std::span<const T> g, std::span<std::vector<T>*> gin) {
        if (!gin[0]) return;
        for (T& d : *gin[0]) d += g[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.numel() == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("binary_cross_entropy: prediction " + shape_str(pred.shape()) + " vs target " +
                             shape_str(target.shape()));
    }
    if (pred.numel() == 0) throw DimensionError("binary_cross_entropy of empty tensor");
    const T lo = static_cast<T>(kBceClamp), hi = T(1) - static_cast<T>(kBceClamp);
    const std::size_t n = pred.numel();
    // Accumulate in double so the float path agrees with the scalar oracle.
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(pred[i], lo, hi);
        const double g = target[i];
        total -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
    }
    Tensor<T> result = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
    Tape<T>* tape = common_tape({&pred});
    if (tape == nullptr) return result;
    return tape->record("binary_cross_entropy", std::move(result), {&pred},
                        [p = pred.detached(), t = target.detached(), lo, hi, n](std::span<const T> g,
                                                                                std::span<std::vector<T>*> gin) {
                            if (!gin[0]) return;
                            T* gp = gin[0]->data();
                            const T scale = g[0] / static_cast<T>(n);
                            for (std::size_t i = 0; i < n; ++i) {
                                const T x = p[i];
                                if (x < lo || x > hi) continue;
                                gp[i] += scale * ((T(1) - t[i]) / (T(1) - x) - t[i] / x);
                            }
                        });
}

#define HCPN_INSTANTIATE_OPS(T)                                                                         \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> transpose(const Tensor<T>&);                                                     \
    template Tensor<T> softmax(const Tensor<T>&, Axis);                                                 \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, Conv2dOptions);      \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                               \
    template Tensor<T> resize_bilinear(const Tensor<T>&, std::size_t, std::size_t);                     \
    template Tensor<T> normalize(const Tensor<T>&, NormMode);                                           \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> scale(const Tensor<T>&, T);                                                      \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
    template Tensor<T> tanh(const Tensor<T>&);                                                          \
    template Tensor<T> relu(const Tensor<T>&);                                                          \
    template Tensor<T> max_with_constant(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> concat(const std::vector<Tensor<T>>&);                                           \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t);                               \
    template Tensor<T> sum(const Tensor<T>&);                                                           \
    template Tensor<T> mean(const Tensor<T>&);                                                          \
    template Tensor<T> binary_cross_entropy(const Tensor<T>&, const Tensor<T>&);

HCPN_INSTANTIATE_OPS(float)
HCPN_INSTANTIATE_OPS(double)

}  // namespace hcpn
