#include "cxgrad/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>

namespace cxgrad::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Graph* rec(std::initializer_list<const Tensor*> inputs) {
    Graph* g = common_graph(inputs);
    return (g && g->recording()) ? g : nullptr;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class F>
Tensor map1(const Tensor& x, F f) {
    std::vector<double> out(x.data().size());
    const auto& xd = x.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
    return Tensor(x.shape(), std::move(out));
}

template <class F>
Tensor map2(const char* op, const Tensor& a, const Tensor& b, F f) {
    check_same_shape(op, a, b);
    std::vector<double> out(a.data().size());
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i], bd[i]);
    return Tensor(a.shape(), std::move(out));
}

// im2col for 3x3 / stride 1 / pad 1: (C,H,W) image -> (C*9, H*W) matrix.
void im2col_3x3(const double* img, int C, int H, int W, double* col) {
    const int HW = H * W;
    for (int c = 0; c < C; ++c) {
        const double* src = img + static_cast<size_t>(c) * HW;
        for (int ku = 0; ku < 3; ++ku) {
            for (int kv = 0; kv < 3; ++kv) {
                double* dst = col + (static_cast<size_t>(c) * 9 + ku * 3 + kv) * HW;
                for (int h = 0; h < H; ++h) {
                    const int sh = h + ku - 1;
                    if (sh < 0 || sh >= H) {
                        std::fill(dst + h * W, dst + (h + 1) * W, 0.0);
                        continue;
                    }
                    for (int w = 0; w < W; ++w) {
                        const int sw = w + kv - 1;
                        dst[h * W + w] = (sw < 0 || sw >= W) ? 0.0 : src[sh * W + sw];
                    }
                }
            }
        }
    }
}

void check_conv_shapes(const char* op, const Tensor& x, const Tensor& w) {
    if (x.ndim() != 4)
        throw ShapeError(std::string(op) + ": input must be 4-D NCHW, got " + shape_str(x.shape()));
    if (w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
        throw ShapeError(std::string(op) + ": weight must be (out,in,3,3), got " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw ShapeError(std::string(op) + ": channel mismatch, input " + shape_str(x.shape()) +
                         " vs weight " + shape_str(w.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = map2("add", a, b, [](double x, double y) { return x + y; });
    if (Graph* g = rec({&a, &b}))
        return g->record("add", out, {a, b},
                         [](const Tensor& up) { return std::vector<Tensor>{up, up}; });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out = map2("sub", a, b, [](double x, double y) { return x - y; });
    if (Graph* g = rec({&a, &b}))
        return g->record("sub", out, {a, b},
                         [](const Tensor& up) { return std::vector<Tensor>{up, neg(up)}; });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out = map2("mul", a, b, [](double x, double y) { return x * y; });
    if (Graph* g = rec({&a, &b}))
        return g->record("mul", out, {a, b}, [a, b](const Tensor& up) {
            return std::vector<Tensor>{mul(up, b), mul(up, a)};
        });
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    Tensor out = map2("div", a, b, [](double x, double y) { return x / y; });
    if (Graph* g = rec({&a, &b})) {
        auto out_h = std::make_shared<Tensor>();
        Tensor r = g->record("div", out, {a, b}, [b, out_h](const Tensor& up) {
            // d/db (a/b) = -(a/b)/b
            return std::vector<Tensor>{div(up, b), neg(div(mul(up, *out_h), b))};
        });
        *out_h = r;
        return r;
    }
    return out;
}

Tensor neg(const Tensor& x) {
    Tensor out = map1(x, [](double v) { return -v; });
    if (Graph* g = rec({&x}))
        return g->record("neg", out, {x},
                         [](const Tensor& up) { return std::vector<Tensor>{neg(up)}; });
    return out;
}

Tensor scale(const Tensor& x, double c) {
    Tensor out = map1(x, [c](double v) { return v * c; });
    if (Graph* g = rec({&x}))
        return g->record("scale", out, {x},
                         [c](const Tensor& up) { return std::vector<Tensor>{scale(up, c)}; });
    return out;
}

Tensor add_scalar(const Tensor& x, double c) {
    Tensor out = map1(x, [c](double v) { return v + c; });
    if (Graph* g = rec({&x}))
        return g->record("add_scalar", out, {x},
                         [](const Tensor& up) { return std::vector<Tensor>{up}; });
    return out;
}

Tensor exp(const Tensor& x) {
    Tensor out = map1(x, [](double v) { return std::exp(v); });
    if (Graph* g = rec({&x})) {
        auto out_h = std::make_shared<Tensor>();
        Tensor r = g->record("exp", out, {x}, [out_h](const Tensor& up) {
            return std::vector<Tensor>{mul(up, *out_h)};
        });
        *out_h = r;
        return r;
    }
    return out;
}

Tensor log(const Tensor& x) {
    Tensor out = map1(x, [](double v) { return std::log(v); });
    if (Graph* g = rec({&x}))
        return g->record("log", out, {x}, [x](const Tensor& up) {
            return std::vector<Tensor>{div(up, x)};
        });
    return out;
}

Tensor sqrt(const Tensor& x) {
    Tensor out = map1(x, [](double v) { return std::sqrt(v); });
    if (Graph* g = rec({&x})) {
        auto out_h = std::make_shared<Tensor>();
        Tensor r = g->record("sqrt", out, {x}, [out_h](const Tensor& up) {
            return std::vector<Tensor>{scale(div(up, *out_h), 0.5)};
        });
        *out_h = r;
        return r;
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = map1(x, [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    if (Graph* g = rec({&x})) {
        auto out_h = std::make_shared<Tensor>();
        Tensor r = g->record("sigmoid", out, {x}, [out_h](const Tensor& up) {
            const Tensor& y = *out_h;
            return std::vector<Tensor>{mul(up, mul(y, add_scalar(neg(y), 1.0)))};
        });
        *out_h = r;
        return r;
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = map1(x, [](double v) { return v > 0.0 ? v : 0.0; });
    if (Graph* g = rec({&x})) {
        Tensor mask = map1(x, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
        return g->record("relu", out, {x}, [mask](const Tensor& up) {
            return std::vector<Tensor>{mul(up, mask)};
        });
    }
    return out;
}

Tensor softplus(const Tensor& x) {
    Tensor out = map1(x, [](double v) {
        return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    });
    if (Graph* g = rec({&x}))
        return g->record("softplus", out, {x}, [x](const Tensor& up) {
            return std::vector<Tensor>{mul(up, sigmoid(x))};
        });
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    Tensor out(shape, x.storage());
    if (Graph* g = rec({&x})) {
        Shape orig = x.shape();
        return g->record("reshape", out, {x}, [orig](const Tensor& up) {
            return std::vector<Tensor>{reshape(up, orig)};
        });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("transpose: expected 2-D, got " + shape_str(x.shape()));
    const int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    const auto& xd = x.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = xd[static_cast<size_t>(i) * n + j];
    Tensor t({n, m}, std::move(out));
    if (Graph* g = rec({&x}))
        return g->record("transpose", t, {x},
                         [](const Tensor& up) { return std::vector<Tensor>{transpose(up)}; });
    return t;
}

Tensor expand(const Tensor& x, Shape shape) {
    if (static_cast<int>(shape.size()) != x.ndim())
        throw ShapeError("expand: rank mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<int> bcast_axes;
    for (int i = 0; i < x.ndim(); ++i) {
        if (x.dim(i) == shape[static_cast<size_t>(i)]) continue;
        if (x.dim(i) != 1)
            throw ShapeError("expand: cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
        bcast_axes.push_back(i);
    }
    // Row-major expansion by repeated index mapping.
    const int nd = x.ndim();
    std::vector<long long> xstride(static_cast<size_t>(nd)), ostride(static_cast<size_t>(nd));
    long long xs = 1, os = 1;
    for (int i = nd - 1; i >= 0; --i) {
        xstride[static_cast<size_t>(i)] = (x.dim(i) == 1) ? 0 : xs;
        ostride[static_cast<size_t>(i)] = os;
        xs *= x.dim(i);
        os *= shape[static_cast<size_t>(i)];
    }
    std::vector<double> out(static_cast<size_t>(numel(shape)));
    const auto& xd = x.data();
    for (long long oi = 0; oi < static_cast<long long>(out.size()); ++oi) {
        long long rem = oi, xi = 0;
        for (int i = 0; i < nd; ++i) {
            long long idx = rem / ostride[static_cast<size_t>(i)];
            rem %= ostride[static_cast<size_t>(i)];
            xi += idx * xstride[static_cast<size_t>(i)];
        }
        out[static_cast<size_t>(oi)] = xd[static_cast<size_t>(xi)];
    }
    Tensor t(shape, std::move(out));
    if (Graph* g = rec({&x}))
        return g->record("expand", t, {x}, [bcast_axes](const Tensor& up) {
            return std::vector<Tensor>{sum_axes(up, bcast_axes)};
        });
    return t;
}

Tensor sum_axes(const Tensor& x, const std::vector<int>& axes) {
    Shape oshape = x.shape();
    for (int a : axes) {
        if (a < 0 || a >= x.ndim())
            throw ShapeError("sum_axes: axis " + std::to_string(a) + " out of range for " +
                             shape_str(x.shape()));
        oshape[static_cast<size_t>(a)] = 1;
    }
    const int nd = x.ndim();
    std::vector<long long> xstride(static_cast<size_t>(nd)), ostride(static_cast<size_t>(nd));
    long long xs = 1, os = 1;
    for (int i = nd - 1; i >= 0; --i) {
        xstride[static_cast<size_t>(i)] = xs;
        ostride[static_cast<size_t>(i)] = (oshape[static_cast<size_t>(i)] == 1) ? 0 : os;
        xs *= x.dim(i);
        os *= oshape[static_cast<size_t>(i)];
    }
    std::vector<double> out(static_cast<size_t>(numel(oshape)), 0.0);
    const auto& xd = x.data();
    for (long long xi = 0; xi < static_cast<long long>(xd.size()); ++xi) {
        long long rem = xi, oi = 0;
        for (int i = 0; i < nd; ++i) {
            long long idx = rem / xstride[static_cast<size_t>(i)];
            rem %= xstride[static_cast<size_t>(i)];
            oi += idx * ostride[static_cast<size_t>(i)] * (oshape[static_cast<size_t>(i)] == 1 ? 0 : 1);
        }
        out[static_cast<size_t>(oi)] += xd[static_cast<size_t>(xi)];
    }
    Tensor t(oshape, std::move(out));
    if (Graph* g = rec({&x})) {
        Shape orig = x.shape();
        return g->record("sum_axes", t, {x}, [orig](const Tensor& up) {
            return std::vector<Tensor>{expand(up, orig)};
        });
    }
    return t;
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor t({1}, std::vector<double>{s});
    if (Graph* g = rec({&x})) {
        Shape orig = x.shape();
        return g->record("sum_all", t, {x}, [orig](const Tensor& up) {
            Shape ones(orig.size(), 1);
            return std::vector<Tensor>{expand(reshape(up, ones), orig)};
        });
    }
    return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    {
        CMapRM A(a.data().data(), m, k);
        CMapRM B(b.data().data(), k, n);
        MapRM C(out.data(), m, n);
        C.noalias() = A * B;
    }
    Tensor t({m, n}, std::move(out));
    if (Graph* g = rec({&a, &b}))
        return g->record("matmul", t, {a, b}, [a, b](const Tensor& up) {
            return std::vector<Tensor>{matmul(up, transpose(b)), matmul(transpose(a), up)};
        });
    return t;
}

Tensor conv2d(const Tensor& x, const Tensor& w) {
    check_conv_shapes("conv2d", x, w);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), HW = H * W;
    std::vector<double> out(static_cast<size_t>(N) * O * HW);
    std::vector<double> col(static_cast<size_t>(C) * 9 * HW);
    CMapRM Wm(w.data().data(), O, C * 9);
    for (int n = 0; n < N; ++n) {
        im2col_3x3(x.data().data() + static_cast<size_t>(n) * C * HW, C, H, W, col.data());
        CMapRM Col(col.data(), C * 9, HW);
        MapRM Out(out.data() + static_cast<size_t>(n) * O * HW, O, HW);
        Out.noalias() = Wm * Col;
    }
    Tensor t({N, O, H, W}, std::move(out));
    if (Graph* g = rec({&x, &w}))
        return g->record("conv2d", t, {x, w}, [x, w](const Tensor& up) {
            return std::vector<Tensor>{conv2d(up, kernel_flip(w)), conv2d_dw(x, up)};
        });
    return t;
}

Tensor conv2d_dw(const Tensor& x, const Tensor& gy) {
    if (x.ndim() != 4 || gy.ndim() != 4 || x.dim(0) != gy.dim(0) || x.dim(2) != gy.dim(2) ||
        x.dim(3) != gy.dim(3))
        throw ShapeError("conv2d_dw: incompatible shapes " + shape_str(x.shape()) + " vs " +
                         shape_str(gy.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = gy.dim(1), HW = H * W;
    std::vector<double> out(static_cast<size_t>(O) * C * 9, 0.0);
    std::vector<double> col(static_cast<size_t>(C) * 9 * HW);
    MapRM Dw(out.data(), O, C * 9);
    for (int n = 0; n < N; ++n) {
        im2col_3x3(x.data().data() + static_cast<size_t>(n) * C * HW, C, H, W, col.data());
        CMapRM Col(col.data(), C * 9, HW);
        CMapRM Gy(gy.data().data() + static_cast<size_t>(n) * O * HW, O, HW);
        Dw.noalias() += Gy * Col.transpose();
    }
    Tensor t({O, C, 3, 3}, std::move(out));
    if (Graph* g = rec({&x, &gy}))
        return g->record("conv2d_dw", t, {x, gy}, [x, gy](const Tensor& up) {
            return std::vector<Tensor>{conv2d(gy, kernel_flip(up)), conv2d(x, up)};
        });
    return t;
}

Tensor kernel_flip(const Tensor& w) {
    if (w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
        throw ShapeError("kernel_flip: expected (out,in,3,3), got " + shape_str(w.shape()));
    const int O = w.dim(0), C = w.dim(1);
    std::vector<double> out(w.data().size());
    const auto& wd = w.data();
    for (int o = 0; o < O; ++o)
        for (int c = 0; c < C; ++c)
            for (int u = 0; u < 3; ++u)
                for (int v = 0; v < 3; ++v)
                    out[((static_cast<size_t>(c) * O + o) * 3 + u) * 3 + v] =
                        wd[((static_cast<size_t>(o) * C + c) * 3 + (2 - u)) * 3 + (2 - v)];
    Tensor t({C, O, 3, 3}, std::move(out));
    if (Graph* g = rec({&w}))
        return g->record("kernel_flip", t, {w},
                         [](const Tensor& up) { return std::vector<Tensor>{kernel_flip(up)}; });
    return t;
}

namespace {

using IndexVec = std::shared_ptr<std::vector<int64_t>>;

Tensor unpool(const Tensor& g, const IndexVec& idx, const Shape& in_shape);

// Gathers x at the pooled argmax positions; inverse scatter of unpool.
Tensor pool_gather(const Tensor& x, const IndexVec& idx, const Shape& out_shape) {
    std::vector<double> out(idx->size());
    const auto& xd = x.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = xd[static_cast<size_t>((*idx)[i])];
    Tensor t(out_shape, std::move(out));
    if (Graph* g = rec({&x})) {
        Shape in_shape = x.shape();
        return g->record("pool_gather", t, {x}, [idx, in_shape](const Tensor& up) {
            return std::vector<Tensor>{unpool(up, idx, in_shape)};
        });
    }
    return t;
}

Tensor unpool(const Tensor& gin, const IndexVec& idx, const Shape& in_shape) {
    std::vector<double> out(static_cast<size_t>(numel(in_shape)), 0.0);
    const auto& gd = gin.data();
    for (size_t i = 0; i < idx->size(); ++i) out[static_cast<size_t>((*idx)[i])] += gd[i];
    Tensor t(in_shape, std::move(out));
    if (Graph* g = rec({&gin})) {
        Shape out_shape = gin.shape();
        return g->record("unpool", t, {gin}, [idx, out_shape](const Tensor& up) {
            return std::vector<Tensor>{pool_gather(up, idx, out_shape)};
        });
    }
    return t;
}

}  // namespace

Tensor maxpool2d(const Tensor& x) {
    if (x.ndim() != 4)
        throw ShapeError("maxpool2d: input must be 4-D NCHW, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < 2 || W < 2)
        throw ShapeError("maxpool2d: spatial dims must be >= 2, got " + shape_str(x.shape()));
    // Odd trailing rows/columns are dropped (floor semantics).
    const int Ho = H / 2, Wo = W / 2;
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N) * C * Ho * Wo);
    std::vector<double> out(idx->size());
    const auto& xd = x.data();
    size_t oi = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const size_t base = (static_cast<size_t>(n) * C + c) * H * W;
            for (int h = 0; h < Ho; ++h) {
                for (int w = 0; w < Wo; ++w, ++oi) {
                    int64_t best = static_cast<int64_t>(base + (2 * h) * W + 2 * w);
                    double bv = xd[static_cast<size_t>(best)];
                    const int64_t cand[3] = {best + 1, best + W, best + W + 1};
                    for (int64_t ci : cand) {
                        double v = xd[static_cast<size_t>(ci)];
                        if (v > bv) {
                            bv = v;
                            best = ci;
                        }
                    }
                    (*idx)[oi] = best;
                    out[oi] = bv;
                }
            }
        }
    }
    Tensor t({N, C, Ho, Wo}, std::move(out));
    if (Graph* g = rec({&x})) {
        Shape in_shape = x.shape();
        return g->record("maxpool2d", t, {x}, [idx, in_shape](const Tensor& up) {
            return std::vector<Tensor>{unpool(up, idx, in_shape)};
        });
    }
    return t;
}

Tensor mean_axes(const Tensor& x, const std::vector<int>& axes) {
    long long m = 1;
    for (int a : axes) m *= x.dim(a);
    return scale(sum_axes(x, axes), 1.0 / static_cast<double>(m));
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Tensor variance_axes(const Tensor& x, const std::vector<int>& axes) {
    Tensor mu = expand(mean_axes(x, axes), x.shape());
    Tensor d = sub(x, mu);
    return mean_axes(mul(d, d), axes);
}

Tensor variance_all(const Tensor& x) {
    Tensor mu = expand(reshape(mean_all(x), Shape(x.shape().size(), 1)), x.shape());
    Tensor d = sub(x, mu);
    return mean_all(mul(d, d));
}

Tensor l2_norm(const Tensor& x) { return sqrt(sum_all(mul(x, x))); }

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    std::vector<int> axes;
    int features = 0;
    if (x.ndim() == 2) {
        axes = {0};
        features = x.dim(1);
    } else if (x.ndim() == 4) {
        axes = {0, 2, 3};
        features = x.dim(1);
    } else {
        throw ShapeError("batchnorm: input must be 2-D or 4-D, got " + shape_str(x.shape()));
    }
    if (x.dim(0) < 2)
        throw ShapeError("batchnorm: batch dimension must be >= 2, got " + shape_str(x.shape()));
    if (gamma.size() != features || beta.size() != features)
        throw ShapeError("batchnorm: affine params must have length " + std::to_string(features) +
                         ", got gamma " + shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));

    Tensor mu = expand(mean_axes(x, axes), x.shape());
    Tensor var = variance_axes(x, axes);
    Tensor denom = expand(sqrt(add_scalar(var, eps)), x.shape());
    Tensor xhat = div(sub(x, mu), denom);

    Shape fshape(x.shape().size(), 1);
    fshape[1] = features;
    Tensor gb = expand(reshape(gamma, fshape), x.shape());
    Tensor bb = expand(reshape(beta, fshape), x.shape());
    return add(mul(xhat, gb), bb);
}

Tensor softmax(const Tensor& logits) {
    if (logits.ndim() != 2)
        throw ShapeError("softmax: expected (batch,classes), got " + shape_str(logits.shape()));
    const int B = logits.dim(0), N = logits.dim(1);
    // Row max as a detached constant; softmax is shift-invariant per row.
    std::vector<double> mx(static_cast<size_t>(B) * N);
    for (int b = 0; b < B; ++b) {
        double m = logits[static_cast<size_t>(b) * N];
        for (int j = 1; j < N; ++j) m = std::max(m, logits[static_cast<size_t>(b) * N + j]);
        for (int j = 0; j < N; ++j) mx[static_cast<size_t>(b) * N + j] = m;
    }
    Tensor shifted = sub(logits, Tensor(logits.shape(), std::move(mx)));
    Tensor e = exp(shifted);
    return div(e, expand(sum_axes(e, {1}), e.shape()));
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2)
        throw ShapeError("softmax_cross_entropy: expected (batch,classes), got " +
                         shape_str(logits.shape()));
    const int B = logits.dim(0), N = logits.dim(1);
    if (static_cast<int>(labels.size()) != B)
        throw ShapeError("softmax_cross_entropy: got " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
    std::vector<double> onehot(static_cast<size_t>(B) * N, 0.0);
    std::vector<double> mx(static_cast<size_t>(B) * N);
    for (int b = 0; b < B; ++b) {
        if (labels[static_cast<size_t>(b)] < 0 || labels[static_cast<size_t>(b)] >= N)
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[static_cast<size_t>(b)]) +
                             " out of range [0," + std::to_string(N) + ")");
        onehot[static_cast<size_t>(b) * N + labels[static_cast<size_t>(b)]] = 1.0;
        double m = logits[static_cast<size_t>(b) * N];
        for (int j = 1; j < N; ++j) m = std::max(m, logits[static_cast<size_t>(b) * N + j]);
        for (int j = 0; j < N; ++j) mx[static_cast<size_t>(b) * N + j] = m;
    }
    Tensor shifted = sub(logits, Tensor(logits.shape(), std::move(mx)));
    Tensor lse = log(sum_axes(exp(shifted), {1}));                         // (B,1)
    Tensor picked = sum_axes(mul(shifted, Tensor(logits.shape(), std::move(onehot))), {1});
    return scale(sum_all(sub(lse, picked)), 1.0 / static_cast<double>(B));
}

Tensor slice_scalar(const Tensor& x, int i) {
    if (x.ndim() != 1)
        throw ShapeError("slice_scalar: expected 1-D, got " + shape_str(x.shape()));
    if (i < 0 || i >= x.dim(0))
        throw ShapeError("slice_scalar: index " + std::to_string(i) + " out of range for " +
                         shape_str(x.shape()));
    std::vector<double> onehot(static_cast<size_t>(x.dim(0)), 0.0);
    onehot[static_cast<size_t>(i)] = 1.0;
    return sum_all(mul(x, Tensor(x.shape(), std::move(onehot))));
}

}  // namespace cxgrad::ops
