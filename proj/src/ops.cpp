#include "chainhoi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "chainhoi/rng.hpp"

namespace chainhoi {
namespace ops {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<int64_t>(i) * k;
        double* crow = c + static_cast<int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T
void mm_nt(const double* a, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<int64_t>(i) * n;
        double* crow = c + static_cast<int64_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<int64_t>(j) * n;
            double s = 0.0;
            for (int p = 0; p < n; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<int64_t>(i) * k;
        const double* brow = b + static_cast<int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename F, typename G>
Tensor unary_op(const Tensor& a, F&& f, G&& dfdx) {
    std::vector<double> out(a.values().size());
    const double* x = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    Tensor res = Tensor::from_op(a.shape(), std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode* an = a.node();
        TensorNode* rn = res.node();
        res.set_backward([an, rn, dfdx]() {
            an->ensure_grad();
            for (size_t i = 0; i < an->grad.size(); ++i)
                an->grad[i] += rn->grad[i] * dfdx(an->value[i], rn->value[i]);
        });
    }
    return res;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Tensor res = Tensor::from_op(a.shape(), std::move(out), {a, b});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *bn = b.node(), *rn = res.node();
        res.set_backward([an, bn, rn]() {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += rn->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += rn->grad[i];
            }
        });
    }
    return res;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Tensor res = Tensor::from_op(a.shape(), std::move(out), {a, b});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *bn = b.node(), *rn = res.node();
        res.set_backward([an, bn, rn]() {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += rn->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] -= rn->grad[i];
            }
        });
    }
    return res;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Tensor res = Tensor::from_op(a.shape(), std::move(out), {a, b});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *bn = b.node(), *rn = res.node();
        res.set_backward([an, bn, rn]() {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < an->grad.size(); ++i)
                    an->grad[i] += rn->grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < bn->grad.size(); ++i)
                    bn->grad[i] += rn->grad[i] * an->value[i];
            }
        });
    }
    return res;
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(
        a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(
        a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp_op(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sin_op(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos_op(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    // exact erf form; smooth everywhere which keeps finite-difference checks clean
    return unary_op(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    require(b.ndim() == 1, "add_bias: bias must be 1-d");
    int d = b.dim(0);
    require(x.dim(x.ndim() - 1) == d, "add_bias: trailing dim mismatch");
    std::vector<double> out(x.values().size());
    const double* xp = x.data();
    const double* bp = b.data();
    int64_t rows = x.numel() / d;
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) out[r * d + j] = xp[r * d + j] + bp[j];
    Tensor res = Tensor::from_op(x.shape(), std::move(out), {x, b});
    if (res.requires_grad()) {
        TensorNode *xn = x.node(), *bn = b.node(), *rn = res.node();
        res.set_backward([xn, bn, rn, rows, d]() {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += rn->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int j = 0; j < d; ++j) bn->grad[j] += rn->grad[r * d + j];
            }
        });
    }
    return res;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() == 2 && b.ndim() == 2) {
        int m = a.dim(0), k = a.dim(1);
        require(b.dim(0) == k, "matmul: inner dims disagree");
        int n = b.dim(1);
        std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
        mm_nn(a.data(), b.data(), out.data(), m, k, n);
        Tensor res = Tensor::from_op({m, n}, std::move(out), {a, b});
        if (res.requires_grad()) {
            TensorNode *an = a.node(), *bn = b.node(), *rn = res.node();
            res.set_backward([an, bn, rn, m, k, n]() {
                if (an->requires_grad) {
                    an->ensure_grad();
                    mm_nt(rn->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    mm_tn(an->value.data(), rn->grad.data(), bn->grad.data(), m, k, n);
                }
            });
        }
        return res;
    }
    if (a.ndim() == 3 && b.ndim() == 2) {
        int bs = a.dim(0), m = a.dim(1), k = a.dim(2);
        require(b.dim(0) == k, "matmul: inner dims disagree");
        int n = b.dim(1);
        std::vector<double> out(static_cast<size_t>(bs) * m * n, 0.0);
        for (int s = 0; s < bs; ++s)
            mm_nn(a.data() + static_cast<int64_t>(s) * m * k, b.data(),
                  out.data() + static_cast<int64_t>(s) * m * n, m, k, n);
        Tensor res = Tensor::from_op({bs, m, n}, std::move(out), {a, b});
        if (res.requires_grad()) {
            TensorNode *an = a.node(), *bn = b.node(), *rn = res.node();
            res.set_backward([an, bn, rn, bs, m, k, n]() {
                for (int s = 0; s < bs; ++s) {
                    const double* g = rn->grad.data() + static_cast<int64_t>(s) * m * n;
                    if (an->requires_grad) {
                        an->ensure_grad();
                        mm_nt(g, bn->value.data(),
                              an->grad.data() + static_cast<int64_t>(s) * m * k, m, n, k);
                    }
                    if (bn->requires_grad) {
                        bn->ensure_grad();
                        mm_tn(an->value.data() + static_cast<int64_t>(s) * m * k, g,
                              bn->grad.data(), m, k, n);
                    }
                }
            });
        }
        return res;
    }
    if (a.ndim() == 3 && b.ndim() == 3) {
        int bs = a.dim(0), m = a.dim(1), k = a.dim(2);
        require(b.dim(0) == bs && b.dim(1) == k, "matmul: batch dims disagree");
        int n = b.dim(2);
        std::vector<double> out(static_cast<size_t>(bs) * m * n, 0.0);
        for (int s = 0; s < bs; ++s)
            mm_nn(a.data() + static_cast<int64_t>(s) * m * k,
                  b.data() + static_cast<int64_t>(s) * k * n,
                  out.data() + static_cast<int64_t>(s) * m * n, m, k, n);
        Tensor res = Tensor::from_op({bs, m, n}, std::move(out), {a, b});
        if (res.requires_grad()) {
            TensorNode *an = a.node(), *bn = b.node(), *rn = res.node();
            res.set_backward([an, bn, rn, bs, m, k, n]() {
                for (int s = 0; s < bs; ++s) {
                    const double* g = rn->grad.data() + static_cast<int64_t>(s) * m * n;
                    if (an->requires_grad) {
                        an->ensure_grad();
                        mm_nt(g, bn->value.data() + static_cast<int64_t>(s) * k * n,
                              an->grad.data() + static_cast<int64_t>(s) * m * k, m, n, k);
                    }
                    if (bn->requires_grad) {
                        bn->ensure_grad();
                        mm_tn(an->value.data() + static_cast<int64_t>(s) * m * k, g,
                              bn->grad.data() + static_cast<int64_t>(s) * k * n, m, k, n);
                    }
                }
            });
        }
        return res;
    }
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(w.ndim() == 2, "linear: weight must be 2-d");
    int d_in = w.dim(0);
    require(x.dim(x.ndim() - 1) == d_in, "linear: input width mismatch");
    if (x.ndim() == 2 || x.ndim() == 3) return add_bias(matmul(x, w), b);
    if (x.ndim() == 1) {
        Tensor x2 = reshape(x, {1, d_in});
        return reshape(add_bias(matmul(x2, w), b), {w.dim(1)});
    }
    throw ShapeError("linear: unsupported input rank");
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor res = Tensor::from_op({1}, {s}, {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn]() {
            an->ensure_grad();
            for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += rn->grad[0];
        });
    }
    return res;
}

Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_axis1(const Tensor& a) {
    require(a.ndim() == 3, "mean_axis1: expects [L, n, d]");
    int L = a.dim(0), n = a.dim(1), d = a.dim(2);
    std::vector<double> out(static_cast<size_t>(L) * d, 0.0);
    const double* x = a.data();
    for (int t = 0; t < L; ++t)
        for (int v = 0; v < n; ++v)
            for (int c = 0; c < d; ++c)
                out[static_cast<size_t>(t) * d + c] +=
                    x[(static_cast<int64_t>(t) * n + v) * d + c];
    double inv = 1.0 / n;
    for (auto& v : out) v *= inv;
    Tensor res = Tensor::from_op({L, d}, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, L, n, d, inv]() {
            an->ensure_grad();
            for (int t = 0; t < L; ++t)
                for (int v = 0; v < n; ++v)
                    for (int c = 0; c < d; ++c)
                        an->grad[(static_cast<int64_t>(t) * n + v) * d + c] +=
                            rn->grad[static_cast<size_t>(t) * d + c] * inv;
        });
    }
    return res;
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    return mean_all(square(sub(a, b)));
}

Tensor weighted_sum(const Tensor& a, const std::vector<double>& w) {
    require(static_cast<size_t>(a.numel()) == w.size(), "weighted_sum: weight count mismatch");
    double s = 0.0;
    for (size_t i = 0; i < w.size(); ++i) s += a.data()[i] * w[i];
    Tensor res = Tensor::from_op({1}, {s}, {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        std::vector<double> wc = w;
        res.set_backward([an, rn, wc = std::move(wc)]() {
            an->ensure_grad();
            for (size_t i = 0; i < wc.size(); ++i) an->grad[i] += rn->grad[0] * wc[i];
        });
    }
    return res;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    require(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
    Tensor res = Tensor::from_op(shape, a.values(), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn]() {
            an->ensure_grad();
            for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += rn->grad[i];
        });
    }
    return res;
}

Tensor transpose_last2(const Tensor& a) {
    require(a.ndim() >= 2, "transpose_last2: rank < 2");
    Shape s = a.shape();
    int n = s[s.size() - 2], m = s[s.size() - 1];
    Shape so = s;
    so[so.size() - 2] = m;
    so[so.size() - 1] = n;
    int64_t batch = a.numel() / (static_cast<int64_t>(n) * m);
    std::vector<double> out(a.values().size());
    const double* x = a.data();
    for (int64_t bidx = 0; bidx < batch; ++bidx) {
        const double* xi = x + bidx * n * m;
        double* yo = out.data() + bidx * n * m;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) yo[static_cast<int64_t>(j) * n + i] = xi[static_cast<int64_t>(i) * m + j];
    }
    Tensor res = Tensor::from_op(so, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, batch, n, m]() {
            an->ensure_grad();
            for (int64_t bidx = 0; bidx < batch; ++bidx) {
                const double* g = rn->grad.data() + bidx * n * m;
                double* ag = an->grad.data() + bidx * n * m;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < m; ++j)
                        ag[static_cast<int64_t>(i) * m + j] += g[static_cast<int64_t>(j) * n + i];
            }
        });
    }
    return res;
}

namespace {
// generic strided copy helpers for narrow/concat on rank <= 3 tensors,
// normalized to an (outer, axis, inner) view
struct AxisView {
    int64_t outer, axis, inner;
};

AxisView axis_view(const Shape& s, int axis) {
    AxisView v{1, s[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}
}  // namespace

Tensor narrow(const Tensor& a, int axis, int start, int len) {
    require(axis >= 0 && axis < a.ndim(), "narrow: axis out of range");
    require(start >= 0 && len >= 0 && start + len <= a.dim(axis), "narrow: slice out of range");
    AxisView v = axis_view(a.shape(), axis);
    Shape so = a.shape();
    so[static_cast<size_t>(axis)] = len;
    std::vector<double> out(static_cast<size_t>(v.outer) * len * v.inner);
    const double* x = a.data();
    for (int64_t o = 0; o < v.outer; ++o)
        std::memcpy(out.data() + o * len * v.inner,
                    x + (o * v.axis + start) * v.inner,
                    static_cast<size_t>(len) * v.inner * sizeof(double));
    Tensor res = Tensor::from_op(so, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, v, start, len]() {
            an->ensure_grad();
            for (int64_t o = 0; o < v.outer; ++o) {
                const double* g = rn->grad.data() + o * len * v.inner;
                double* ag = an->grad.data() + (o * v.axis + start) * v.inner;
                for (int64_t i = 0; i < len * v.inner; ++i) ag[i] += g[i];
            }
        });
    }
    return res;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    require(a.ndim() == b.ndim(), "concat: rank mismatch");
    require(axis >= 0 && axis < a.ndim(), "concat: axis out of range");
    for (int i = 0; i < a.ndim(); ++i)
        if (i != axis) require(a.dim(i) == b.dim(i), "concat: non-axis dims must match");
    AxisView va = axis_view(a.shape(), axis);
    AxisView vb = axis_view(b.shape(), axis);
    Shape so = a.shape();
    so[static_cast<size_t>(axis)] = a.dim(axis) + b.dim(axis);
    std::vector<double> out(a.values().size() + b.values().size());
    int64_t stride_out = (va.axis + vb.axis) * va.inner;
    for (int64_t o = 0; o < va.outer; ++o) {
        std::memcpy(out.data() + o * stride_out, a.data() + o * va.axis * va.inner,
                    static_cast<size_t>(va.axis) * va.inner * sizeof(double));
        std::memcpy(out.data() + o * stride_out + va.axis * va.inner,
                    b.data() + o * vb.axis * vb.inner,
                    static_cast<size_t>(vb.axis) * vb.inner * sizeof(double));
    }
    Tensor res = Tensor::from_op(so, std::move(out), {a, b});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *bn = b.node(), *rn = res.node();
        res.set_backward([an, bn, rn, va, vb, stride_out]() {
            for (int64_t o = 0; o < va.outer; ++o) {
                const double* g = rn->grad.data() + o * stride_out;
                if (an->requires_grad) {
                    an->ensure_grad();
                    double* ag = an->grad.data() + o * va.axis * va.inner;
                    for (int64_t i = 0; i < va.axis * va.inner; ++i) ag[i] += g[i];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    double* bg = bn->grad.data() + o * vb.axis * vb.inner;
                    const double* gb = g + va.axis * va.inner;
                    for (int64_t i = 0; i < vb.axis * vb.inner; ++i) bg[i] += gb[i];
                }
            }
        });
    }
    return res;
}

Tensor stack0(const std::vector<Tensor>& xs) {
    require(!xs.empty(), "stack0: empty list");
    const Shape& s0 = xs[0].shape();
    int64_t chunk = xs[0].numel();
    for (const auto& x : xs) require(x.shape() == s0, "stack0: shapes must match");
    Shape so;
    so.push_back(static_cast<int>(xs.size()));
    for (int d : s0) so.push_back(d);
    std::vector<double> out(static_cast<size_t>(chunk) * xs.size());
    for (size_t i = 0; i < xs.size(); ++i)
        std::memcpy(out.data() + static_cast<int64_t>(i) * chunk, xs[i].data(),
                    static_cast<size_t>(chunk) * sizeof(double));
    Tensor res = Tensor::from_op(so, std::move(out), xs);
    if (res.requires_grad()) {
        std::vector<TensorNode*> pn;
        pn.reserve(xs.size());
        for (const auto& x : xs) pn.push_back(x.node());
        TensorNode* rn = res.node();
        res.set_backward([pn, rn, chunk]() {
            for (size_t i = 0; i < pn.size(); ++i) {
                if (!pn[i]->requires_grad) continue;
                pn[i]->ensure_grad();
                const double* g = rn->grad.data() + static_cast<int64_t>(i) * chunk;
                for (int64_t j = 0; j < chunk; ++j) pn[i]->grad[j] += g[j];
            }
        });
    }
    return res;
}

Tensor split_heads(const Tensor& a, int heads) {
    require(a.ndim() == 2, "split_heads: expects [n, d]");
    int n = a.dim(0), d = a.dim(1);
    require(heads > 0 && d % heads == 0, "split_heads: d not divisible by heads");
    int dh = d / heads;
    std::vector<double> out(a.values().size());
    const double* x = a.data();
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < dh; ++c)
                out[(static_cast<int64_t>(h) * n + i) * dh + c] =
                    x[static_cast<int64_t>(i) * d + h * dh + c];
    Tensor res = Tensor::from_op({heads, n, dh}, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, heads, n, d, dh]() {
            an->ensure_grad();
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < n; ++i)
                    for (int c = 0; c < dh; ++c)
                        an->grad[static_cast<int64_t>(i) * d + h * dh + c] +=
                            rn->grad[(static_cast<int64_t>(h) * n + i) * dh + c];
        });
    }
    return res;
}

Tensor merge_heads(const Tensor& a) {
    require(a.ndim() == 3, "merge_heads: expects [h, n, dh]");
    int heads = a.dim(0), n = a.dim(1), dh = a.dim(2);
    int d = heads * dh;
    std::vector<double> out(a.values().size());
    const double* x = a.data();
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < dh; ++c)
                out[static_cast<int64_t>(i) * d + h * dh + c] =
                    x[(static_cast<int64_t>(h) * n + i) * dh + c];
    Tensor res = Tensor::from_op({n, d}, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, heads, n, d, dh]() {
            an->ensure_grad();
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < n; ++i)
                    for (int c = 0; c < dh; ++c)
                        an->grad[(static_cast<int64_t>(h) * n + i) * dh + c] +=
                            rn->grad[static_cast<int64_t>(i) * d + h * dh + c];
        });
    }
    return res;
}

Tensor repeat_middle(const Tensor& a, int n) {
    require(a.ndim() == 2, "repeat_middle: expects [L, d]");
    int L = a.dim(0), d = a.dim(1);
    std::vector<double> out(static_cast<size_t>(L) * n * d);
    const double* x = a.data();
    for (int t = 0; t < L; ++t)
        for (int v = 0; v < n; ++v)
            std::memcpy(out.data() + (static_cast<int64_t>(t) * n + v) * d,
                        x + static_cast<int64_t>(t) * d, static_cast<size_t>(d) * sizeof(double));
    Tensor res = Tensor::from_op({L, n, d}, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, L, n, d]() {
            an->ensure_grad();
            for (int t = 0; t < L; ++t)
                for (int v = 0; v < n; ++v)
                    for (int c = 0; c < d; ++c)
                        an->grad[static_cast<int64_t>(t) * d + c] +=
                            rn->grad[(static_cast<int64_t>(t) * n + v) * d + c];
        });
    }
    return res;
}

namespace {
Tensor softmax_impl(const Tensor& a, const uint8_t* mask, int mask_rows, int mask_cols) {
    require(a.ndim() >= 1, "softmax: rank 0");
    int cols = a.dim(a.ndim() - 1);
    int rows_in_block = a.ndim() >= 2 ? a.dim(a.ndim() - 2) : 1;
    int64_t n_rows = a.numel() / cols;
    if (mask) {
        require(mask_cols == cols, "masked_softmax: mask cols mismatch");
        require(mask_rows == rows_in_block, "masked_softmax: mask rows mismatch");
    }
    std::vector<double> out(a.values().size());
    const double* x = a.data();
    for (int64_t r = 0; r < n_rows; ++r) {
        const uint8_t* mrow = mask ? mask + (r % rows_in_block) * cols : nullptr;
        const double* xi = x + r * cols;
        double* yo = out.data() + r * cols;
        double mx = -1e300;
        int allowed = 0;
        for (int j = 0; j < cols; ++j) {
            if (mrow && !mrow[j]) continue;
            ++allowed;
            mx = std::max(mx, xi[j]);
        }
        if (mask && allowed == 0) throw MaskError("masked_softmax: fully masked row");
        double z = 0.0;
        for (int j = 0; j < cols; ++j) {
            if (mrow && !mrow[j]) {
                yo[j] = 0.0;
                continue;
            }
            yo[j] = std::exp(xi[j] - mx);
            z += yo[j];
        }
        double inv = 1.0 / z;
        for (int j = 0; j < cols; ++j) yo[j] *= inv;
    }
    Tensor res = Tensor::from_op(a.shape(), std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, n_rows, cols]() {
            an->ensure_grad();
            for (int64_t r = 0; r < n_rows; ++r) {
                const double* w = rn->value.data() + r * cols;
                const double* g = rn->grad.data() + r * cols;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += w[j] * g[j];
                double* ag = an->grad.data() + r * cols;
                for (int j = 0; j < cols; ++j) ag[j] += w[j] * (g[j] - dot);
            }
        });
    }
    return res;
}
}  // namespace

Tensor softmax_lastdim(const Tensor& a) { return softmax_impl(a, nullptr, 0, 0); }

Tensor masked_softmax_lastdim(const Tensor& a, const std::vector<uint8_t>& mask, int mask_rows,
                              int mask_cols) {
    require(static_cast<int64_t>(mask.size()) == static_cast<int64_t>(mask_rows) * mask_cols,
            "masked_softmax: bad mask size");
    return softmax_impl(a, mask.data(), mask_rows, mask_cols);
}

Tensor log_softmax_lastdim(const Tensor& a) {
    int cols = a.dim(a.ndim() - 1);
    int64_t n_rows = a.numel() / cols;
    std::vector<double> out(a.values().size());
    const double* x = a.data();
    for (int64_t r = 0; r < n_rows; ++r) {
        const double* xi = x + r * cols;
        double* yo = out.data() + r * cols;
        double mx = xi[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) z += std::exp(xi[j] - mx);
        double lz = std::log(z) + mx;
        for (int j = 0; j < cols; ++j) yo[j] = xi[j] - lz;
    }
    Tensor res = Tensor::from_op(a.shape(), std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, n_rows, cols]() {
            an->ensure_grad();
            for (int64_t r = 0; r < n_rows; ++r) {
                const double* lp = rn->value.data() + r * cols;
                const double* g = rn->grad.data() + r * cols;
                double gs = 0.0;
                for (int j = 0; j < cols; ++j) gs += g[j];
                double* ag = an->grad.data() + r * cols;
                for (int j = 0; j < cols; ++j) ag[j] += g[j] - std::exp(lp[j]) * gs;
            }
        });
    }
    return res;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    int d = x.dim(x.ndim() - 1);
    require(gamma.ndim() == 1 && gamma.dim(0) == d, "layer_norm: gamma size");
    require(beta.ndim() == 1 && beta.dim(0) == d, "layer_norm: beta size");
    int64_t rows = x.numel() / d;
    std::vector<double> out(x.values().size());
    std::vector<double> xhat(x.values().size());
    std::vector<double> inv_std(static_cast<size_t>(rows));
    const double* xp = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xi = xp + r * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xi[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = xi[j] - mu;
            var += c * c;
        }
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = is;
        for (int j = 0; j < d; ++j) {
            double h = (xi[j] - mu) * is;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gamma.data()[j] + beta.data()[j];
        }
    }
    Tensor res = Tensor::from_op(x.shape(), std::move(out), {x, gamma, beta});
    if (res.requires_grad()) {
        TensorNode *xn = x.node(), *gn = gamma.node(), *bn = beta.node(), *rn = res.node();
        res.set_backward([xn, gn, bn, rn, rows, d, xhat = std::move(xhat),
                          inv_std = std::move(inv_std)]() {
            for (int64_t r = 0; r < rows; ++r) {
                const double* g = rn->grad.data() + r * d;
                const double* h = xhat.data() + r * d;
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int j = 0; j < d; ++j) gn->grad[j] += g[j] * h[j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int j = 0; j < d; ++j) bn->grad[j] += g[j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        double gg = g[j] * gn->value[j];
                        m1 += gg;
                        m2 += gg * h[j];
                    }
                    m1 /= d;
                    m2 /= d;
                    double is = inv_std[static_cast<size_t>(r)];
                    double* xg = xn->grad.data() + r * d;
                    for (int j = 0; j < d; ++j) {
                        double gg = g[j] * gn->value[j];
                        xg[j] += (gg - m1 - h[j] * m2) * is;
                    }
                }
            }
        });
    }
    return res;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    require(table.ndim() == 2, "embedding: table must be [V, d]");
    int V = table.dim(0), d = table.dim(1);
    for (int id : ids) require(id >= 0 && id < V, "embedding: id out of range");
    std::vector<double> out(ids.size() * static_cast<size_t>(d));
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.data() + i * d, table.data() + static_cast<int64_t>(ids[i]) * d,
                    static_cast<size_t>(d) * sizeof(double));
    Tensor res =
        Tensor::from_op({static_cast<int>(ids.size()), d}, std::move(out), {table});
    if (res.requires_grad()) {
        TensorNode *tn = table.node(), *rn = res.node();
        std::vector<int> idc = ids;
        res.set_backward([tn, rn, idc = std::move(idc), d]() {
            tn->ensure_grad();
            for (size_t i = 0; i < idc.size(); ++i) {
                const double* g = rn->grad.data() + i * d;
                double* tg = tn->grad.data() + static_cast<int64_t>(idc[i]) * d;
                for (int j = 0; j < d; ++j) tg[j] += g[j];
            }
        });
    }
    return res;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) { return embedding(a, rows); }

Tensor diag_rows(const Tensor& a) {
    require(a.ndim() == 2 && a.dim(0) == a.dim(1), "diag_rows: expects square [n, n]");
    int n = a.dim(0);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a.data()[static_cast<int64_t>(i) * n + i];
    Tensor res = Tensor::from_op({n}, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, n]() {
            an->ensure_grad();
            for (int i = 0; i < n; ++i)
                an->grad[static_cast<int64_t>(i) * n + i] += rn->grad[static_cast<size_t>(i)];
        });
    }
    return res;
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
    require(a.ndim() == 2, "l2_normalize_rows: expects [n, d]");
    int n = a.dim(0), d = a.dim(1);
    std::vector<double> out(a.values().size());
    std::vector<double> inv_norm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* xi = a.data() + static_cast<int64_t>(i) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += xi[j] * xi[j];
        double inv = 1.0 / std::sqrt(s + eps);
        inv_norm[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < d; ++j) out[static_cast<int64_t>(i) * d + j] = xi[j] * inv;
    }
    Tensor res = Tensor::from_op(a.shape(), std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, n, d, inv_norm = std::move(inv_norm)]() {
            an->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const double* y = rn->value.data() + static_cast<int64_t>(i) * d;
                const double* g = rn->grad.data() + static_cast<int64_t>(i) * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += y[j] * g[j];
                double inv = inv_norm[static_cast<size_t>(i)];
                double* ag = an->grad.data() + static_cast<int64_t>(i) * d;
                for (int j = 0; j < d; ++j) ag[j] += inv * (g[j] - y[j] * dot);
            }
        });
    }
    return res;
}

Tensor cumsum_exclusive(const Tensor& a) {
    require(a.ndim() == 1, "cumsum_exclusive: expects 1-d");
    int n = a.dim(0);
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (int i = 1; i < n; ++i) out[static_cast<size_t>(i)] = out[static_cast<size_t>(i - 1)] + a.data()[i - 1];
    Tensor res = Tensor::from_op({n}, std::move(out), {a});
    if (res.requires_grad()) {
        TensorNode *an = a.node(), *rn = res.node();
        res.set_backward([an, rn, n]() {
            an->ensure_grad();
            double suffix = 0.0;
            for (int i = n - 1; i >= 1; --i) {
                suffix += rn->grad[static_cast<size_t>(i)];
                an->grad[static_cast<size_t>(i - 1)] += suffix;
            }
        });
    }
    return res;
}

Tensor conv1d_time(const Tensor& x, const Tensor& w, const Tensor& b, int dilation) {
    require(x.ndim() == 3, "conv1d_time: expects [L, n, c]");
    require(w.ndim() == 3, "conv1d_time: kernel [k, c_in, c_out]");
    int L = x.dim(0), n = x.dim(1), cin = x.dim(2);
    int k = w.dim(0), cout = w.dim(2);
    require(w.dim(1) == cin, "conv1d_time: channel mismatch");
    require(b.ndim() == 1 && b.dim(0) == cout, "conv1d_time: bias size");
    require(k % 2 == 1, "conv1d_time: odd kernel only");
    require(dilation >= 1, "conv1d_time: dilation >= 1");
    int half = (k - 1) / 2;
    std::vector<double> out(static_cast<size_t>(L) * n * cout);
    const double* xp = x.data();
    const double* wp = w.data();
    for (int t = 0; t < L; ++t)
        for (int v = 0; v < n; ++v) {
            double* yo = out.data() + (static_cast<int64_t>(t) * n + v) * cout;
            for (int o = 0; o < cout; ++o) yo[o] = b.data()[o];
            for (int tap = 0; tap < k; ++tap) {
                int ts = t + (tap - half) * dilation;
                if (ts < 0 || ts >= L) continue;  // symmetric zero padding
                const double* xi = xp + (static_cast<int64_t>(ts) * n + v) * cin;
                const double* wt = wp + static_cast<int64_t>(tap) * cin * cout;
                for (int c = 0; c < cin; ++c) {
                    double xv = xi[c];
                    if (xv == 0.0) continue;
                    const double* wr = wt + static_cast<int64_t>(c) * cout;
                    for (int o = 0; o < cout; ++o) yo[o] += xv * wr[o];
                }
            }
        }
    Tensor res = Tensor::from_op({L, n, cout}, std::move(out), {x, w, b});
    if (res.requires_grad()) {
        TensorNode *xn = x.node(), *wn = w.node(), *bn = b.node(), *rn = res.node();
        res.set_backward([xn, wn, bn, rn, L, n, cin, cout, k, half, dilation]() {
            for (int t = 0; t < L; ++t)
                for (int v = 0; v < n; ++v) {
                    const double* g = rn->grad.data() + (static_cast<int64_t>(t) * n + v) * cout;
                    if (bn->requires_grad) {
                        bn->ensure_grad();
                        for (int o = 0; o < cout; ++o) bn->grad[o] += g[o];
                    }
                    for (int tap = 0; tap < k; ++tap) {
                        int ts = t + (tap - half) * dilation;
                        if (ts < 0 || ts >= L) continue;
                        int64_t xoff = (static_cast<int64_t>(ts) * n + v) * cin;
                        int64_t woff = static_cast<int64_t>(tap) * cin * cout;
                        if (xn->requires_grad) {
                            xn->ensure_grad();
                            for (int c = 0; c < cin; ++c) {
                                const double* wr = wn->value.data() + woff + static_cast<int64_t>(c) * cout;
                                double s = 0.0;
                                for (int o = 0; o < cout; ++o) s += g[o] * wr[o];
                                xn->grad[xoff + c] += s;
                            }
                        }
                        if (wn->requires_grad) {
                            wn->ensure_grad();
                            for (int c = 0; c < cin; ++c) {
                                double xv = xn->value[xoff + c];
                                if (xv == 0.0) continue;
                                double* wg = wn->grad.data() + woff + static_cast<int64_t>(c) * cout;
                                for (int o = 0; o < cout; ++o) wg[o] += xv * g[o];
                            }
                        }
                    }
                }
        });
    }
    return res;
}

Tensor maxpool_time(const Tensor& x, int k) {
    require(x.ndim() == 3, "maxpool_time: expects [L, n, c]");
    require(k % 2 == 1 && k >= 1, "maxpool_time: odd window");
    int L = x.dim(0), n = x.dim(1), c = x.dim(2);
    int half = (k - 1) / 2;
    std::vector<double> out(x.values().size());
    std::vector<int> arg(x.values().size());
    const double* xp = x.data();
    for (int t = 0; t < L; ++t)
        for (int v = 0; v < n; ++v)
            for (int ch = 0; ch < c; ++ch) {
                double best = -1e300;
                int bt = t;
                for (int tap = -half; tap <= half; ++tap) {
                    int ts = t + tap;
                    if (ts < 0 || ts >= L) continue;  // valid-window max
                    double cand = xp[(static_cast<int64_t>(ts) * n + v) * c + ch];
                    if (cand > best) {
                        best = cand;
                        bt = ts;
                    }
                }
                int64_t idx = (static_cast<int64_t>(t) * n + v) * c + ch;
                out[idx] = best;
                arg[idx] = bt;
            }
    Tensor res = Tensor::from_op(x.shape(), std::move(out), {x});
    if (res.requires_grad()) {
        TensorNode *xn = x.node(), *rn = res.node();
        res.set_backward([xn, rn, L, n, c, arg = std::move(arg)]() {
            xn->ensure_grad();
            for (int t = 0; t < L; ++t)
                for (int v = 0; v < n; ++v)
                    for (int ch = 0; ch < c; ++ch) {
                        int64_t idx = (static_cast<int64_t>(t) * n + v) * c + ch;
                        int64_t src = (static_cast<int64_t>(arg[idx]) * n + v) * c + ch;
                        xn->grad[src] += rn->grad[idx];
                    }
        });
    }
    return res;
}

Tensor segment_max(const Tensor& x, const std::vector<int>& seg, int n_seg) {
    require(x.ndim() == 2, "segment_max: expects [P, d]");
    int P = x.dim(0), d = x.dim(1);
    require(static_cast<int>(seg.size()) == P, "segment_max: seg size mismatch");
    std::vector<double> out(static_cast<size_t>(n_seg) * d, -1e300);
    std::vector<int> arg(static_cast<size_t>(n_seg) * d, -1);
    for (int p = 0; p < P; ++p) {
        int s = seg[static_cast<size_t>(p)];
        require(s >= 0 && s < n_seg, "segment_max: segment id out of range");
        const double* xi = x.data() + static_cast<int64_t>(p) * d;
        double* yo = out.data() + static_cast<int64_t>(s) * d;
        int* ao = arg.data() + static_cast<int64_t>(s) * d;
        for (int j = 0; j < d; ++j)
            if (xi[j] > yo[j]) {
                yo[j] = xi[j];
                ao[j] = p;
            }
    }
    for (int s = 0; s < n_seg; ++s)
        require(arg[static_cast<int64_t>(s) * d] >= 0, "segment_max: empty segment");
    Tensor res = Tensor::from_op({n_seg, d}, std::move(out), {x});
    if (res.requires_grad()) {
        TensorNode *xn = x.node(), *rn = res.node();
        res.set_backward([xn, rn, n_seg, d, arg = std::move(arg)]() {
            xn->ensure_grad();
            for (int s = 0; s < n_seg; ++s)
                for (int j = 0; j < d; ++j) {
                    int64_t idx = static_cast<int64_t>(s) * d + j;
                    xn->grad[static_cast<int64_t>(arg[idx]) * d + j] += rn->grad[idx];
                }
        });
    }
    return res;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    require(rate < 1.0, "dropout: rate must be < 1");
    double keep = 1.0 - rate;
    std::vector<double> mask(x.values().size());
    for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    Tensor res = Tensor::from_op(x.shape(), std::move(out), {x});
    if (res.requires_grad()) {
        TensorNode *xn = x.node(), *rn = res.node();
        res.set_backward([xn, rn, mask = std::move(mask)]() {
            xn->ensure_grad();
            for (size_t i = 0; i < mask.size(); ++i) xn->grad[i] += rn->grad[i] * mask[i];
        });
    }
    return res;
}

}  // namespace ops
}  // namespace chainhoi
