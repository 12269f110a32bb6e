#include "strokecast/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "strokecast/errors.hpp"

namespace strokecast {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
    if (shape_.size() > kMaxRank) throw InputError("array rank above 3: " + shape_string(shape_));
    data_.assign(shape_size(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_.size() > kMaxRank) throw InputError("array rank above 3: " + shape_string(shape_));
    if (shape_size(shape_) != data_.size()) {
        throw InputError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
    }
}

Array Array::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Array(Shape{n}, std::move(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Array(Shape{rows, cols}, std::move(values));
}

double Array::item() const {
    if (data_.size() != 1) throw InputError("item() on array of shape " + shape_string(shape_));
    return data_[0];
}

bool Array::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const Array& Var::value() const { return tape_->value(id_); }
const Array& Var::grad() const { return tape_->grad(id_); }

Var Tape::input(Array value) {
    if (!value.all_finite()) throw NumericError("input array has non-finite values");
    nodes_.push_back(Node{std::move(value), nullptr, Array(), false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::push(const char* op, Array value, BackwardFn backward) {
    if (!value.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
    nodes_.push_back(Node{std::move(value), record_ ? std::move(backward) : nullptr, Array(), false});
    return Var(this, nodes_.size() - 1);
}

Array& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Array(n.value.shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

const Array& Tape::grad(std::size_t id) { return grad_buffer(id); }

void Tape::backward(Var loss) {
    if (!record_) throw InputError("backward() on a tape that does not record gradients");
    if (&loss.tape() != this) throw InputError("loss belongs to another tape");
    if (loss.value().size() != 1) throw InputError("backward() needs a scalar loss, got " + shape_string(loss.shape()));
    for (Node& n : nodes_) {
        n.grad = Array();
        n.has_grad = false;
    }
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        if (nodes_[id].has_grad && nodes_[id].backward) nodes_[id].backward(*this, id);
    }
    for (const Node& n : nodes_) {
        if (n.has_grad && !n.grad.all_finite()) throw NumericError("non-finite gradient");
    }
}

namespace ad {

namespace {

void require_same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw InputError("operands live on different tapes");
}

// b broadcasts against a when b's shape (leading ones dropped) is a suffix of a's.
bool suffix_broadcastable(const Shape& a, const Shape& b) {
    std::size_t skip = 0;
    while (skip < b.size() && b[skip] == 1) ++skip;
    const std::size_t nb = b.size() - skip;
    if (nb > a.size()) return false;
    return std::equal(b.begin() + static_cast<std::ptrdiff_t>(skip), b.end(),
                      a.end() - static_cast<std::ptrdiff_t>(nb));
}

template <class F, class DA, class DB>
Var binary(const char* op, Var a, Var b, F f, DA dfa, DB dfb) {
    require_same_tape(a, b);
    const Array& av = a.value();
    const Array& bv = b.value();
    if (!suffix_broadcastable(av.shape(), bv.shape())) {
        throw InputError(std::string(op) + ": shape mismatch " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
    }
    const std::size_t nb = bv.size();
    Array out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i % nb]);
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().push(op, std::move(out), [ia, ib, nb, dfa, dfb](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        const Array& x = t.value(ia);
        const Array& y = t.value(ib);
        {
            Array& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfa(x[i], y[i % nb]);
        }
        Array& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * dfb(x[i], y[i % nb]);
    });
}

// dfy receives (input, output).
template <class F, class D>
Var unary(const char* op, Var x, F f, D dfy) {
    const Array& xv = x.value();
    Array out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const std::size_t ix = x.id();
    return x.tape().push(op, std::move(out), [ix, dfy](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        const Array& in = t.value(ix);
        const Array& y = t.value(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfy(in[i], y[i]);
    });
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t n = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        throw InputError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// C[m,n] += A[m,k] * B[k,n] with optional transposes of the stored operands.
void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, bool ta, const double* b, bool tb,
              double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ta ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            if (tb) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
            } else {
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

}  // namespace

Var add(Var a, Var b) {
    return binary("add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
                  [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary("sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
                  [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary("mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
                  [](double x, double) { return x; });
}

Var div(Var a, Var b) {
    return binary("div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
                  [](double x, double y) { return -x / (y * y); });
}

Var scale(Var x, double factor) {
    return unary("scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double c) {
    return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var square(Var x) {
    return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sigmoid(Var x) {
    return unary(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
    return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
    return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
    return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
    return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    const Array& av = a.value();
    const Array& bv = b.value();
    const auto bad = [&] {
        return InputError("matmul: shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    };
    std::size_t batch = 1, m = 0, k = 0, n = 0;
    bool shared_rhs = true;
    Shape out_shape;
    if (av.rank() == 2 && bv.rank() == 2) {
        m = av.dim(0);
        k = av.dim(1);
        n = bv.dim(1);
        if (bv.dim(0) != k) throw bad();
        out_shape = {m, n};
    } else if (av.rank() == 3 && bv.rank() == 2) {
        // Same as a [batch*m, k] x [k, n] product.
        m = av.dim(0) * av.dim(1);
        k = av.dim(2);
        n = bv.dim(1);
        if (bv.dim(0) != k) throw bad();
        out_shape = {av.dim(0), av.dim(1), n};
    } else if (av.rank() == 3 && bv.rank() == 3) {
        batch = av.dim(0);
        m = av.dim(1);
        k = av.dim(2);
        n = bv.dim(2);
        if (bv.dim(0) != batch || bv.dim(1) != k) throw bad();
        shared_rhs = false;
        out_shape = {batch, m, n};
    } else {
        throw bad();
    }
    Array out(out_shape, 0.0);
    const std::size_t b_stride = shared_rhs ? 0 : k * n;
    for (std::size_t s = 0; s < batch; ++s) {
        gemm_acc(m, k, n, av.data() + s * m * k, false, bv.data() + s * b_stride, false, out.data() + s * m * n);
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().push("matmul", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        const Array& x = t.value(ia);
        const Array& y = t.value(ib);
        Array& ga = t.grad_buffer(ia);
        for (std::size_t s = 0; s < batch; ++s) {
            // dA = G B^T
            gemm_acc(m, n, k, g.data() + s * m * n, false, y.data() + s * b_stride, true, ga.data() + s * m * k);
        }
        Array& gb = t.grad_buffer(ib);
        for (std::size_t s = 0; s < batch; ++s) {
            // dB = A^T G
            gemm_acc(k, m, n, x.data() + s * m * k, true, g.data() + s * m * n, false, gb.data() + s * b_stride);
        }
    });
}

Var transpose(Var x) {
    const Array& xv = x.value();
    if (xv.rank() < 2) throw InputError("transpose needs rank >= 2, got " + shape_string(xv.shape()));
    const std::size_t r = xv.rank();
    const std::size_t rows = xv.dim(r - 2);
    const std::size_t cols = xv.dim(r - 1);
    const std::size_t batch = xv.size() / (rows * cols);
    Shape shape = xv.shape();
    std::swap(shape[r - 2], shape[r - 1]);
    Array out(shape);
    for (std::size_t s = 0; s < batch; ++s) {
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) out[s * rows * cols + j * rows + i] = xv[s * rows * cols + i * cols + j];
        }
    }
    const std::size_t ix = x.id();
    return x.tape().push("transpose", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) gx[s * rows * cols + i * cols + j] += g[s * rows * cols + j * rows + i];
            }
        }
    });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw InputError("concat of nothing");
    const Shape& first = parts[0].shape();
    Shape out_shape = first;
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_same_tape(parts[0], p);
        const Shape& s = p.shape();
        if (s.size() != first.size()) throw InputError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != axis && s[d] != first[d]) {
                throw InputError("concat: shape mismatch " + shape_string(first) + " vs " + shape_string(s));
            }
        }
        const AxisSplit sp = split_axis(s, axis, "concat");
        widths.push_back(sp.n);
        total += sp.n;
    }
    out_shape[axis] = total;
    const AxisSplit os = split_axis(out_shape, axis, "concat");
    Array out(out_shape);
    std::size_t offset = 0;
    std::vector<std::size_t> ids;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const Array& v = parts[pi].value();
        const std::size_t w = widths[pi];
        for (std::size_t o = 0; o < os.outer; ++o) {
            std::copy_n(v.data() + o * w * os.inner, w * os.inner, out.data() + (o * total + offset) * os.inner);
        }
        offset += w;
        ids.push_back(parts[pi].id());
    }
    return parts[0].tape().push("concat", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
            Array& gp = t.grad_buffer(ids[pi]);
            const std::size_t w = widths[pi];
            for (std::size_t o = 0; o < os.outer; ++o) {
                const double* src = g.data() + (o * total + off) * os.inner;
                double* dst = gp.data() + o * w * os.inner;
                for (std::size_t i = 0; i < w * os.inner; ++i) dst[i] += src[i];
            }
            off += w;
        }
    });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
    const Array& xv = x.value();
    const AxisSplit s = split_axis(xv.shape(), axis, "slice");
    if (begin > end || end > s.n) {
        throw InputError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                         shape_string(xv.shape()));
    }
    Shape shape = xv.shape();
    const std::size_t w = end - begin;
    shape[axis] = w;
    Array out(shape);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(xv.data() + (o * s.n + begin) * s.inner, w * s.inner, out.data() + o * w * s.inner);
    }
    const std::size_t ix = x.id();
    return x.tape().push("slice", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t o = 0; o < s.outer; ++o) {
            const double* src = g.data() + o * w * s.inner;
            double* dst = gx.data() + (o * s.n + begin) * s.inner;
            for (std::size_t i = 0; i < w * s.inner; ++i) dst[i] += src[i];
        }
    });
}

Var embedding_lookup(Var table, std::span<const int> ids) {
    const Array& tv = table.value();
    if (tv.rank() != 2) throw InputError("embedding table must be rank 2");
    const std::size_t rows = tv.dim(0);
    const std::size_t d = tv.dim(1);
    std::vector<int> idx(ids.begin(), ids.end());
    Array out(Shape{idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
            throw InputError("embedding id " + std::to_string(idx[i]) + " out of range [0," + std::to_string(rows) + ")");
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
    }
    const std::size_t it = table.id();
    return table.tape().push("embedding_lookup", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        Array& gt = t.grad_buffer(it);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double* dst = gt.data() + static_cast<std::size_t>(idx[i]) * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
        }
    });
}

Var pick(Var x, std::span<const int> index) {
    const Array& xv = x.value();
    if (xv.rank() != 2 || index.size() != xv.dim(0)) {
        throw InputError("pick: need rank-2 input with one index per row, got " + shape_string(xv.shape()));
    }
    const std::size_t n = xv.dim(1);
    std::vector<int> idx(index.begin(), index.end());
    Array out(Shape{idx.size()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) throw InputError("pick: index out of range");
        out[i] = xv.at(i, static_cast<std::size_t>(idx[i]));
    }
    const std::size_t ix = x.id();
    return x.tape().push("pick", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < idx.size(); ++i) gx.at(i, static_cast<std::size_t>(idx[i])) += g[i];
    });
}

Var softmax(Var x, std::size_t axis) {
    const Array& xv = x.value();
    const AxisSplit s = split_axis(xv.shape(), axis, "softmax");
    Array out(xv.shape());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            double mx = -INFINITY;
            for (std::size_t j = 0; j < s.n; ++j) mx = std::max(mx, xv[base + j * s.inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < s.n; ++j) {
                const double e = std::exp(xv[base + j * s.inner] - mx);
                out[base + j * s.inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= total;
        }
    }
    const std::size_t ix = x.id();
    return x.tape().push("softmax", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        const Array& y = t.value(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.n * s.inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < s.n; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
                for (std::size_t j = 0; j < s.n; ++j) {
                    const std::size_t e = base + j * s.inner;
                    gx[e] += y[e] * (g[e] - dot);
                }
            }
        }
    });
}

Var log_softmax(Var x, std::size_t axis) {
    const Array& xv = x.value();
    const AxisSplit s = split_axis(xv.shape(), axis, "log_softmax");
    Array out(xv.shape());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            double mx = -INFINITY;
            for (std::size_t j = 0; j < s.n; ++j) mx = std::max(mx, xv[base + j * s.inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < s.n; ++j) total += std::exp(xv[base + j * s.inner] - mx);
            const double lse = mx + std::log(total);
            for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] = xv[base + j * s.inner] - lse;
        }
    }
    const std::size_t ix = x.id();
    return x.tape().push("log_softmax", std::move(out), [=](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        const Array& y = t.value(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.n * s.inner + in;
                double gsum = 0.0;
                for (std::size_t j = 0; j < s.n; ++j) gsum += g[base + j * s.inner];
                for (std::size_t j = 0; j < s.n; ++j) {
                    const std::size_t e = base + j * s.inner;
                    gx[e] += g[e] - std::exp(y[e]) * gsum;
                }
            }
        }
    });
}

Var sum(Var x) {
    const Array& xv = x.value();
    double total = 0.0;
    for (double v : xv.values()) total += v;
    const std::size_t ix = x.id();
    return x.tape().push("sum", Array::scalar(total), [ix](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        Array& gx = t.grad_buffer(ix);
        for (double& v : gx.values()) v += g;
    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    if (n == 0) throw InputError("mean of an empty array");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    require_same_tape(x, gain);
    require_same_tape(x, bias);
    const Array& xv = x.value();
    if (xv.rank() == 0) throw InputError("layer_norm of a scalar");
    const std::size_t n = xv.shape().back();
    if (gain.value().size() != n || bias.value().size() != n) {
        throw InputError("layer_norm: gain/bias must have length " + std::to_string(n));
    }
    const std::size_t rows = xv.size() / n;
    Array xhat(xv.shape());
    std::vector<double> rstd(rows);
    Array out(xv.shape());
    const Array& gv = gain.value();
    const Array& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * rstd[r];
            xhat[r * n + j] = h;
            out[r * n + j] = h * gv[j] + bv[j];
        }
    }
    const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
    return x.tape().push("layer_norm", std::move(out), [=, xhat = std::move(xhat), rstd = std::move(rstd)](
                                                           Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        const Array& gv2 = t.value(ig);
        {
            Array& gg = t.grad_buffer(ig);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < n; ++j) gg[j] += g[r * n + j] * xhat[r * n + j];
            }
        }
        {
            Array& gb = t.grad_buffer(ib);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
            }
        }
        Array& gx = t.grad_buffer(ix);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dxhat[j] = g[r * n + j] * gv2[j];
                mean_d += dxhat[j];
                mean_dx += dxhat[j] * xhat[r * n + j];
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
                gx[r * n + j] += rstd[r] * (dxhat[j] - mean_d - xhat[r * n + j] * mean_dx);
            }
        }
    });
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) return x;
    const Array& xv = x.value();
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(xv.size());
    Array out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out[i] = xv[i] * mask[i];
    }
    const std::size_t ix = x.id();
    return x.tape().push("dropout", std::move(out), [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

Var masked_fill(Var x, std::span<const std::uint8_t> mask, double value) {
    const Array& xv = x.value();
    if (mask.size() != xv.size()) throw InputError("masked_fill: mask size mismatch");
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    Array out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = m[i] ? value : xv[i];
    const std::size_t ix = x.id();
    return x.tape().push("masked_fill", std::move(out), [ix, m = std::move(m)](Tape& t, std::size_t self) {
        const Array& g = t.grad(self);
        Array& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!m[i]) gx[i] += g[i];
        }
    });
}

}  // namespace ad

}  // namespace strokecast
