#include "vitscope/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vitscope/error.hpp"

namespace vitscope {

struct Tensor::Node {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> value;
    std::vector<double> grad;  // empty until needed, then numel() zeros
    bool requires_grad = false;
    bool on_tape = false;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(static_cast<size_t>(numel()), 0.0);
    }
};

std::string shape_string(std::span<const int> shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

namespace {

int64_t product(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void check_shape(const std::vector<int>& shape) {
    for (int d : shape)
        if (d <= 0)
            raise(ErrorCategory::Dimension,
                  "non-positive dimension in shape " + shape_string(shape));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    check_shape(shape);
    auto n = std::make_shared<Node>();
    n->value = std::make_shared<std::vector<double>>(
        static_cast<size_t>(product(shape)), 0.0);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.n_->value->begin(), t.n_->value->end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
    check_shape(shape);
    if (static_cast<int64_t>(data.size()) != product(shape))
        raise(ErrorCategory::Dimension,
              "data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_string(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::make_shared<std::vector<double>>(std::move(data));
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

const std::vector<int>& Tensor::shape() const { return n_->shape; }
int Tensor::rank() const { return static_cast<int>(n_->shape.size()); }
int Tensor::dim(int axis) const { return n_->shape.at(axis); }
int64_t Tensor::numel() const { return n_->numel(); }
const double* Tensor::data() const { return n_->value->data(); }
double* Tensor::mutable_data() { return n_->value->data(); }

double Tensor::item() const {
    if (numel() != 1)
        raise(ErrorCategory::Contract, "item() requires a one-element tensor");
    return (*n_->value)[0];
}

bool Tensor::requires_grad() const { return n_ && n_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    n_->requires_grad = v;
    if (v) n_->ensure_grad();
    return *this;
}

bool Tensor::has_grad() const { return n_ && !n_->grad.empty(); }

const double* Tensor::grad() const {
    if (!has_grad())
        raise(ErrorCategory::State, "tensor has no gradient buffer");
    return n_->grad.data();
}

std::vector<double> Tensor::grad_vector() const {
    if (!has_grad())
        raise(ErrorCategory::State, "tensor has no gradient buffer");
    return n_->grad;
}

void Tensor::zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

Tensor Tensor::alias() const {
    auto n = std::make_shared<Node>();
    n->shape = n_->shape;
    n->value = n_->value;
    return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<Node>();
    n->shape = n_->shape;
    n->value = std::make_shared<std::vector<double>>(*n_->value);
    return Tensor(std::move(n));
}

// --- tape -------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

void Tape::reset() {
    entries_.clear();
    used_ = false;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        raise(ErrorCategory::Contract, "backward requires a scalar loss tensor");
    if (used_)
        raise(ErrorCategory::Contract,
              "tape already consumed by a backward pass; call reset()");
    if (!loss.n_->on_tape)
        raise(ErrorCategory::Tape,
              "backward on a detached graph: loss was not recorded on this tape");
    used_ = true;
    loss.n_->ensure_grad();
    loss.n_->grad[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

// --- op plumbing ------------------------------------------------------------

struct OpKit {
    using Node = Tensor::Node;

    static bool needs(const Tensor& t) {
        return t.n_ && (t.n_->requires_grad || t.n_->on_tape);
    }
    static std::shared_ptr<Node> node(const Tensor& t) { return t.n_; }
    // Marks `out` as a tape product and registers the backward fn. Inputs the
    // fn will write into must have had ensure_grad() called before recording.
    static void track(Tensor& out, std::function<void()> fn) {
        out.n_->on_tape = true;
        out.n_->ensure_grad();
        Tape::active()->record(std::move(fn));
    }
    static bool tracking() { return Tape::active() != nullptr; }
};

namespace {

using Node = Tensor::Node;

void check_defined(const Tensor& t, const char* op) {
    if (!t.defined())
        raise(ErrorCategory::Contract, std::string(op) + ": undefined tensor");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        raise(ErrorCategory::Dimension,
              std::string(op) + ": shape mismatch, lhs " +
                  shape_string(a.shape()) + " rhs " + shape_string(b.shape()));
}

// C (n,m) += A (n,k) * B (k,m); per output element the k-sum runs ascending.
// Broadcast-axpy form: no reductions, so the inner loop vectorizes without
// touching the summation order.
void mm_nn_acc(const double* __restrict A, const double* __restrict B,
               double* __restrict C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * m;
        for (int kk = 0; kk < k; ++kk) {
            const double av = a[kk];
            const double* b = B + static_cast<size_t>(kk) * m;
            for (int j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

// dA (n,k) += dC (n,m) * B^T; B is materialized transposed so the update is
// the same axpy form. Per dA element the j-sum runs ascending.
void mm_nt_acc(const double* __restrict dC, const double* B,
               double* __restrict dA, int n, int m, int k) {
    std::vector<double> bt(static_cast<size_t>(m) * k);
    for (int kk = 0; kk < k; ++kk)
        for (int j = 0; j < m; ++j)
            bt[static_cast<size_t>(j) * k + kk] = B[static_cast<size_t>(kk) * m + j];
    const double* __restrict btp = bt.data();
    for (int i = 0; i < n; ++i) {
        const double* dc = dC + static_cast<size_t>(i) * m;
        double* da = dA + static_cast<size_t>(i) * k;
        for (int j = 0; j < m; ++j) {
            const double dv = dc[j];
            const double* b = btp + static_cast<size_t>(j) * k;
            for (int kk = 0; kk < k; ++kk) da[kk] += dv * b[kk];
        }
    }
}

// dB (k,m) += A^T (k,n) * dC (n,m); i-sum ascending (outer loop).
void mm_tn_acc(const double* __restrict A, const double* __restrict dC,
               double* __restrict dB, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        const double* dc = dC + static_cast<size_t>(i) * m;
        for (int kk = 0; kk < k; ++kk) {
            const double av = a[kk];
            double* db = dB + static_cast<size_t>(kk) * m;
            for (int j = 0; j < m; ++j) db[j] += av * dc[j];
        }
    }
}

struct AxisSplit {
    int64_t outer, len, inner;
};

AxisSplit axis_split(const std::vector<int>& shape, int axis) {
    AxisSplit s{1, shape[axis], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[i];
    for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

int check_axis(const Tensor& t, int axis, const char* op) {
    int r = t.rank();
    if (axis < -r || axis >= r)
        raise(ErrorCategory::Dimension,
              std::string(op) + ": axis " + std::to_string(axis) +
                  " out of range for shape " + shape_string(t.shape()));
    return axis < 0 ? axis + r : axis;
}

}  // namespace

// --- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        raise(ErrorCategory::Dimension,
              "matmul: incompatible shapes, lhs " + shape_string(a.shape()) +
                  " rhs " + shape_string(b.shape()));
    const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor out = Tensor::zeros({n, m});
    mm_nn_acc(a.data(), b.data(), out.mutable_data(), n, k, m);

    if (OpKit::tracking() && (OpKit::needs(a) || OpKit::needs(b))) {
        auto an = OpKit::node(a), bn = OpKit::node(b), on = OpKit::node(out);
        const bool ga = OpKit::needs(a), gb = OpKit::needs(b);
        if (ga) an->ensure_grad();
        if (gb) bn->ensure_grad();
        OpKit::track(out, [an, bn, on, ga, gb, n, k, m] {
            if (ga) mm_nt_acc(on->grad.data(), bn->value->data(), an->grad.data(), n, m, k);
            if (gb) mm_tn_acc(an->value->data(), on->grad.data(), bn->grad.data(), n, k, m);
        });
    }
    return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op,
                          Fwd fwd, Bwd bwd) {
    check_defined(a, op);
    check_defined(b, op);
    check_same_shape(a, b, op);
    const int64_t n = a.numel();
    Tensor out = Tensor::zeros(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);

    if (OpKit::tracking() && (OpKit::needs(a) || OpKit::needs(b))) {
        auto an = OpKit::node(a), bn = OpKit::node(b), on = OpKit::node(out);
        const bool ga = OpKit::needs(a), gb = OpKit::needs(b);
        if (ga) an->ensure_grad();
        if (gb) bn->ensure_grad();
        OpKit::track(out, [an, bn, on, ga, gb, n, bwd] {
            for (int64_t i = 0; i < n; ++i) {
                double da = 0, db = 0;
                bwd((*an->value)[i], (*bn->value)[i], on->grad[i], &da, &db);
                if (ga) an->grad[i] += da;
                if (gb) bn->grad[i] += db;
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double* da, double* db) {
            *da = g;
            *db = g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double* da, double* db) {
            *da = g;
            *db = -g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double* da, double* db) {
            *da = g * y;
            *db = g * x;
        });
}

Tensor scale(const Tensor& a, double s) {
    check_defined(a, "scale");
    const int64_t n = a.numel();
    Tensor out = Tensor::zeros(a.shape());
    const double* av = a.data();
    double* ov = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * s;

    if (OpKit::tracking() && OpKit::needs(a)) {
        auto an = OpKit::node(a);
        auto on = OpKit::node(out);
        an->ensure_grad();
        OpKit::track(out, [an, on, s, n] {
            for (int64_t i = 0; i < n; ++i) an->grad[i] += s * on->grad[i];
        });
    }
    return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& row) {
    check_defined(x, "add_rowwise");
    check_defined(row, "add_rowwise");
    if (x.rank() != 2 || row.rank() != 1 || x.dim(1) != row.dim(0))
        raise(ErrorCategory::Dimension,
              "add_rowwise: expected (n,d) + (d), got " +
                  shape_string(x.shape()) + " + " + shape_string(row.shape()));
    const int n = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    const double* rv = row.data();
    double* ov = out.mutable_data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            ov[static_cast<size_t>(i) * d + j] = xv[static_cast<size_t>(i) * d + j] + rv[j];

    if (OpKit::tracking() && (OpKit::needs(x) || OpKit::needs(row))) {
        auto xn = OpKit::node(x), rn = OpKit::node(row), on = OpKit::node(out);
        const bool gx = OpKit::needs(x), gr = OpKit::needs(row);
        if (gx) xn->ensure_grad();
        if (gr) rn->ensure_grad();
        OpKit::track(out, [xn, rn, on, gx, gr, n, d] {
            if (gx)
                for (int64_t i = 0; i < static_cast<int64_t>(n) * d; ++i)
                    xn->grad[i] += on->grad[i];
            if (gr)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j)
                        rn->grad[j] += on->grad[static_cast<size_t>(i) * d + j];
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    check_defined(a, "transpose");
    if (a.rank() != 2)
        raise(ErrorCategory::Dimension,
              "transpose: expected rank 2, got " + shape_string(a.shape()));
    const int n = a.dim(0), m = a.dim(1);
    Tensor out = Tensor::zeros({m, n});
    const double* av = a.data();
    double* ov = out.mutable_data();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            ov[static_cast<size_t>(j) * n + i] = av[static_cast<size_t>(i) * m + j];

    if (OpKit::tracking() && OpKit::needs(a)) {
        auto an = OpKit::node(a);
        auto on = OpKit::node(out);
        an->ensure_grad();
        OpKit::track(out, [an, on, n, m] {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    an->grad[static_cast<size_t>(i) * m + j] +=
                        on->grad[static_cast<size_t>(j) * n + i];
        });
    }
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    check_defined(a, "reshape");
    check_shape(shape);
    if (product(shape) != a.numel())
        raise(ErrorCategory::Dimension,
              "reshape: cannot view " + shape_string(a.shape()) + " as " +
                  shape_string(shape));
    Tensor out = Tensor::from_data(std::move(shape), *OpKit::node(a)->value);

    if (OpKit::tracking() && OpKit::needs(a)) {
        auto an = OpKit::node(a);
        auto on = OpKit::node(out);
        an->ensure_grad();
        const int64_t n = a.numel();
        OpKit::track(out, [an, on, n] {
            for (int64_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int begin, int end) {
    check_defined(a, "slice");
    axis = check_axis(a, axis, "slice");
    if (begin < 0 || end > a.dim(axis) || begin >= end)
        raise(ErrorCategory::Dimension,
              "slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                  ") invalid for axis " + std::to_string(axis) + " of " +
                  shape_string(a.shape()));
    std::vector<int> out_shape = a.shape();
    out_shape[axis] = end - begin;
    const AxisSplit s = axis_split(a.shape(), axis);
    const int64_t out_len = end - begin;
    Tensor out = Tensor::zeros(out_shape);
    const double* av = a.data();
    double* ov = out.mutable_data();
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t l = 0; l < out_len; ++l)
            std::copy_n(av + (o * s.len + begin + l) * s.inner, s.inner,
                        ov + (o * out_len + l) * s.inner);

    if (OpKit::tracking() && OpKit::needs(a)) {
        auto an = OpKit::node(a);
        auto on = OpKit::node(out);
        an->ensure_grad();
        OpKit::track(out, [an, on, s, out_len, begin] {
            for (int64_t o = 0; o < s.outer; ++o)
                for (int64_t l = 0; l < out_len; ++l) {
                    const double* src = on->grad.data() + (o * out_len + l) * s.inner;
                    double* dst = an->grad.data() + (o * s.len + begin + l) * s.inner;
                    for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
                }
        });
    }
    return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
    if (parts.empty())
        raise(ErrorCategory::Contract, "concat: no inputs");
    for (const auto& p : parts) check_defined(p, "concat");
    const Tensor& first = parts[0];
    axis = check_axis(first, axis, "concat");
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != first.rank())
            raise(ErrorCategory::Dimension, "concat: rank mismatch");
        for (int d = 0; d < first.rank(); ++d)
            if (d != axis && p.dim(d) != first.dim(d))
                raise(ErrorCategory::Dimension,
                      "concat: shape mismatch, " + shape_string(first.shape()) +
                          " vs " + shape_string(p.shape()));
        total += p.dim(axis);
    }
    std::vector<int> out_shape = first.shape();
    out_shape[axis] = total;
    Tensor out = Tensor::zeros(out_shape);
    const AxisSplit os = axis_split(out_shape, axis);
    double* ov = out.mutable_data();

    int64_t offset = 0;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const int64_t len = p.dim(axis);
        const double* pv = p.data();
        for (int64_t o = 0; o < os.outer; ++o)
            std::copy_n(pv + o * len * os.inner, len * os.inner,
                        ov + (o * os.len + offset) * os.inner);
        offset += len;
    }

    bool any = false;
    for (const auto& p : parts) any = any || OpKit::needs(p);
    if (OpKit::tracking() && any) {
        auto on = OpKit::node(out);
        std::vector<std::shared_ptr<Node>> nodes;
        std::vector<bool> need;
        std::vector<int64_t> lens;
        for (const auto& p : parts) {
            nodes.push_back(OpKit::node(p));
            need.push_back(OpKit::needs(p));
            lens.push_back(p.dim(axis));
            if (need.back()) nodes.back()->ensure_grad();
        }
        OpKit::track(out, [on, nodes, need, lens, offsets, os] {
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                if (!need[pi]) continue;
                double* dst = nodes[pi]->grad.data();
                for (int64_t o = 0; o < os.outer; ++o) {
                    const double* src =
                        on->grad.data() + (o * os.len + offsets[pi]) * os.inner;
                    double* d = dst + o * lens[pi] * os.inner;
                    for (int64_t i = 0; i < lens[pi] * os.inner; ++i) d[i] += src[i];
                }
            }
        });
    }
    return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
    check_defined(x, "layernorm");
    check_defined(gain, "layernorm");
    check_defined(bias, "layernorm");
    if (x.rank() < 1)
        raise(ErrorCategory::Dimension, "layernorm: input must have rank >= 1");
    const int d = x.dim(x.rank() - 1);
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
        raise(ErrorCategory::Dimension,
              "layernorm: gain/bias must be (" + std::to_string(d) + "), got " +
                  shape_string(gain.shape()) + " and " + shape_string(bias.shape()));
    const int64_t rows = x.numel() / d;
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    const double* gv = gain.data();
    const double* bv = bias.data();
    double* ov = out.mutable_data();

    std::vector<double> xhat(static_cast<size_t>(x.numel()));
    std::vector<double> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xv + r * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += row[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = row[j] - mu;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        for (int j = 0; j < d; ++j) {
            const double xh = (row[j] - mu) * inv;
            xhat[static_cast<size_t>(r * d + j)] = xh;
            ov[r * d + j] = gv[j] * xh + bv[j];
        }
    }

    if (OpKit::tracking() &&
        (OpKit::needs(x) || OpKit::needs(gain) || OpKit::needs(bias))) {
        auto xn = OpKit::node(x), gn = OpKit::node(gain), bn = OpKit::node(bias);
        auto on = OpKit::node(out);
        const bool gx = OpKit::needs(x), gg = OpKit::needs(gain), gb = OpKit::needs(bias);
        if (gx) xn->ensure_grad();
        if (gg) gn->ensure_grad();
        if (gb) bn->ensure_grad();
        OpKit::track(out, [xn, gn, bn, on, gx, gg, gb, rows, d,
                           xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            for (int64_t r = 0; r < rows; ++r) {
                const double* dy = on->grad.data() + r * d;
                const double* xh = xhat.data() + r * d;
                if (gg)
                    for (int j = 0; j < d; ++j) gn->grad[j] += dy[j] * xh[j];
                if (gb)
                    for (int j = 0; j < d; ++j) bn->grad[j] += dy[j];
                if (gx) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dxh = dy[j] * (*gn->value)[j];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= d;
                    m2 /= d;
                    const double inv = inv_std[static_cast<size_t>(r)];
                    for (int j = 0; j < d; ++j) {
                        const double dxh = dy[j] * (*gn->value)[j];
                        xn->grad[r * d + j] += inv * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        });
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    check_defined(x, "gelu");
    const int64_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* ov = out.mutable_data();
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    for (int64_t i = 0; i < n; ++i)
        ov[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));

    if (OpKit::tracking() && OpKit::needs(x)) {
        auto xn = OpKit::node(x);
        auto on = OpKit::node(out);
        xn->ensure_grad();
        OpKit::track(out, [xn, on, n] {
            constexpr double inv_sqrt_2pi = 0.39894228040143267794;
            for (int64_t i = 0; i < n; ++i) {
                const double v = (*xn->value)[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                xn->grad[i] += on->grad[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    check_defined(x, "relu");
    const int64_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* ov = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;

    if (OpKit::tracking() && OpKit::needs(x)) {
        auto xn = OpKit::node(x);
        auto on = OpKit::node(out);
        xn->ensure_grad();
        // Subgradient at exactly 0 is 0.
        OpKit::track(out, [xn, on, n] {
            for (int64_t i = 0; i < n; ++i)
                if ((*xn->value)[i] > 0.0) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    check_defined(x, "softmax");
    axis = check_axis(x, axis, "softmax");
    const AxisSplit s = axis_split(x.shape(), axis);
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* ov = out.mutable_data();
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t inn = 0; inn < s.inner; ++inn) {
            const int64_t base = o * s.len * s.inner + inn;
            double mx = xv[base];
            for (int64_t l = 1; l < s.len; ++l)
                mx = std::max(mx, xv[base + l * s.inner]);
            double total = 0.0;
            for (int64_t l = 0; l < s.len; ++l) {
                const double e = std::exp(xv[base + l * s.inner] - mx);
                ov[base + l * s.inner] = e;
                total += e;
            }
            for (int64_t l = 0; l < s.len; ++l) ov[base + l * s.inner] /= total;
        }

    if (OpKit::tracking() && OpKit::needs(x)) {
        auto xn = OpKit::node(x);
        auto on = OpKit::node(out);
        xn->ensure_grad();
        OpKit::track(out, [xn, on, s] {
            for (int64_t o = 0; o < s.outer; ++o)
                for (int64_t inn = 0; inn < s.inner; ++inn) {
                    const int64_t base = o * s.len * s.inner + inn;
                    double dot = 0.0;
                    for (int64_t l = 0; l < s.len; ++l) {
                        const int64_t idx = base + l * s.inner;
                        dot += on->grad[idx] * (*on->value)[idx];
                    }
                    for (int64_t l = 0; l < s.len; ++l) {
                        const int64_t idx = base + l * s.inner;
                        xn->grad[idx] += (*on->value)[idx] * (on->grad[idx] - dot);
                    }
                }
        });
    }
    return out;
}

namespace {

// Output linear index for every input element when `axes` are reduced away.
std::vector<int64_t> reduce_index_map(const std::vector<int>& shape,
                                      const std::vector<int>& axes) {
    const int r = static_cast<int>(shape.size());
    std::vector<bool> reduced(r, false);
    for (int a : axes) reduced[a] = true;
    std::vector<int64_t> out_stride(r, 0);
    int64_t stride = 1;
    for (int d = r - 1; d >= 0; --d) {
        if (!reduced[d]) {
            out_stride[d] = stride;
            stride *= shape[d];
        }
    }
    int64_t numel = 1;
    for (int d : shape) numel *= d;
    std::vector<int64_t> map(static_cast<size_t>(numel));
    std::vector<int> idx(r, 0);
    for (int64_t i = 0; i < numel; ++i) {
        int64_t o = 0;
        for (int d = 0; d < r; ++d)
            if (!reduced[d]) o += idx[d] * out_stride[d];
        map[static_cast<size_t>(i)] = o;
        for (int d = r - 1; d >= 0; --d) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    return map;
}

Tensor reduce_impl(const Tensor& x, std::span<const int> axes_in, bool take_mean,
                   const char* op) {
    check_defined(x, op);
    std::vector<int> axes;
    for (int a : axes_in) axes.push_back(check_axis(x, a, op));
    std::sort(axes.begin(), axes.end());
    if (std::adjacent_find(axes.begin(), axes.end()) != axes.end())
        raise(ErrorCategory::Dimension, std::string(op) + ": repeated axis");

    std::vector<int> out_shape;
    int64_t count = 1;
    {
        std::vector<bool> reduced(x.rank(), false);
        for (int a : axes) {
            reduced[a] = true;
            count *= x.dim(a);
        }
        for (int d = 0; d < x.rank(); ++d)
            if (!reduced[d]) out_shape.push_back(x.dim(d));
    }

    auto map = reduce_index_map(x.shape(), axes);
    Tensor out = Tensor::zeros(out_shape);
    const double* xv = x.data();
    double* ov = out.mutable_data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) ov[map[static_cast<size_t>(i)]] += xv[i];
    if (take_mean)
        for (int64_t i = 0; i < out.numel(); ++i) ov[i] /= static_cast<double>(count);

    if (OpKit::tracking() && OpKit::needs(x)) {
        auto xn = OpKit::node(x);
        auto on = OpKit::node(out);
        xn->ensure_grad();
        const double w = take_mean ? 1.0 / static_cast<double>(count) : 1.0;
        OpKit::track(out, [xn, on, map = std::move(map), w, n] {
            for (int64_t i = 0; i < n; ++i)
                xn->grad[i] += w * on->grad[map[static_cast<size_t>(i)]];
        });
    }
    return out;
}

}  // namespace

Tensor mean(const Tensor& x, std::span<const int> axes) {
    return reduce_impl(x, axes, true, "mean");
}

Tensor sum(const Tensor& x, std::span<const int> axes) {
    return reduce_impl(x, axes, false, "sum");
}

Tensor sum_all(const Tensor& x) {
    check_defined(x, "sum");
    std::vector<int> axes(x.rank());
    for (int i = 0; i < x.rank(); ++i) axes[i] = i;
    return reduce_impl(x, axes, false, "sum");
}

Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& targets) {
    check_defined(logits, "cross_entropy_with_logits");
    check_defined(targets, "cross_entropy_with_logits");
    check_same_shape(logits, targets, "cross_entropy_with_logits");
    if (logits.rank() != 2)
        raise(ErrorCategory::Dimension,
              "cross_entropy_with_logits: expected (rows, classes), got " +
                  shape_string(logits.shape()));
    const int n = logits.dim(0), c = logits.dim(1);
    const double* zv = logits.data();
    const double* tv = targets.data();
    std::vector<double> probs(static_cast<size_t>(n) * c);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* z = zv + static_cast<size_t>(i) * c;
        double mx = z[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, z[j]);
        double total = 0.0;
        for (int j = 0; j < c; ++j) total += std::exp(z[j] - mx);
        const double lse = mx + std::log(total);
        for (int j = 0; j < c; ++j) {
            probs[static_cast<size_t>(i) * c + j] = std::exp(z[j] - lse);
            loss -= tv[static_cast<size_t>(i) * c + j] * (z[j] - lse);
        }
    }
    Tensor out = Tensor::scalar(loss / n);

    if (OpKit::tracking() && OpKit::needs(logits)) {
        auto zn = OpKit::node(logits);
        auto tn = OpKit::node(targets);
        auto on = OpKit::node(out);
        zn->ensure_grad();
        OpKit::track(out, [zn, tn, on, probs = std::move(probs), n, c] {
            const double g = on->grad[0] / n;
            for (int i = 0; i < n; ++i) {
                double tsum = 0.0;
                for (int j = 0; j < c; ++j) tsum += (*tn->value)[static_cast<size_t>(i) * c + j];
                for (int j = 0; j < c; ++j) {
                    const size_t idx = static_cast<size_t>(i) * c + j;
                    zn->grad[idx] += g * (tsum * probs[idx] - (*tn->value)[idx]);
                }
            }
        });
    }
    return out;
}

Tensor sigmoid_bce(const Tensor& logits, const Tensor& targets) {
    check_defined(logits, "sigmoid_bce");
    check_defined(targets, "sigmoid_bce");
    check_same_shape(logits, targets, "sigmoid_bce");
    const int64_t n = logits.numel();
    const double* zv = logits.data();
    const double* tv = targets.data();
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double z = zv[i];
        loss += std::max(z, 0.0) - z * tv[i] + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(n));

    if (OpKit::tracking() && OpKit::needs(logits)) {
        auto zn = OpKit::node(logits);
        auto tn = OpKit::node(targets);
        auto on = OpKit::node(out);
        zn->ensure_grad();
        OpKit::track(out, [zn, tn, on, n] {
            const double g = on->grad[0] / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i) {
                const double z = (*zn->value)[i];
                const double sig = 1.0 / (1.0 + std::exp(-z));
                zn->grad[i] += g * (sig - (*tn->value)[i]);
            }
        });
    }
    return out;
}

Tensor extract_patches(const Tensor& image_hwc, int patch) {
    check_defined(image_hwc, "extract_patches");
    if (image_hwc.rank() != 3)
        raise(ErrorCategory::Dimension,
              "extract_patches: expected (H,W,C), got " +
                  shape_string(image_hwc.shape()));
    const int h = image_hwc.dim(0), w = image_hwc.dim(1), c = image_hwc.dim(2);
    if (patch <= 0 || h % patch != 0 || w % patch != 0)
        raise(ErrorCategory::Dimension,
              "extract_patches: " + shape_string(image_hwc.shape()) +
                  " not divisible into " + std::to_string(patch) + "x" +
                  std::to_string(patch) + " patches");
    const int gh = h / patch, gw = w / patch;
    const int pd = patch * patch * c;
    Tensor out = Tensor::zeros({gh * gw, pd});
    const double* iv = image_hwc.data();
    double* ov = out.mutable_data();
    for (int pr = 0; pr < gh; ++pr)
        for (int pc = 0; pc < gw; ++pc) {
            double* row = ov + (static_cast<size_t>(pr) * gw + pc) * pd;
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int ch = 0; ch < c; ++ch)
                        row[(dy * patch + dx) * c + ch] =
                            iv[((static_cast<size_t>(pr) * patch + dy) * w +
                                (static_cast<size_t>(pc) * patch + dx)) * c + ch];
        }

    if (OpKit::tracking() && OpKit::needs(image_hwc)) {
        auto xn = OpKit::node(image_hwc);
        auto on = OpKit::node(out);
        xn->ensure_grad();
        OpKit::track(out, [xn, on, gh, gw, patch, c, w, pd] {
            for (int pr = 0; pr < gh; ++pr)
                for (int pc = 0; pc < gw; ++pc) {
                    const double* row =
                        on->grad.data() + (static_cast<size_t>(pr) * gw + pc) * pd;
                    for (int dy = 0; dy < patch; ++dy)
                        for (int dx = 0; dx < patch; ++dx)
                            for (int ch = 0; ch < c; ++ch)
                                xn->grad[((static_cast<size_t>(pr) * patch + dy) * w +
                                          (static_cast<size_t>(pc) * patch + dx)) * c + ch] +=
                                    row[(dy * patch + dx) * c + ch];
                }
        });
    }
    return out;
}

}  // namespace vitscope
