#include "gtem/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace gtem {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

namespace detail {

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Tensor make_tensor(Shape s, std::vector<double> v) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(s);
    n->value = std::move(v);
    if (shape_numel(n->shape) != static_cast<int64_t>(n->value.size()))
        throw std::invalid_argument("tensor: shape/data size mismatch");
    return Tensor(std::move(n));
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.node->value) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite value produced by ") + op);
    }
}

std::vector<double>& grad_buf(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->node->requires_grad) return true;
    return false;
}

void attach(Tensor& out, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(const Node&)> fn) {
    out.node->requires_grad = true;
    out.node->parents = std::move(parents);
    out.node->backward = std::move(fn);
}

} // namespace detail

using detail::attach;
using detail::check;
using detail::check_finite;
using detail::grad_buf;
using detail::make_tensor;
using detail::wants_grad;

Tensor Tensor::zeros(Shape s) {
    auto n = shape_numel(s);
    return make_tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double v) {
    auto n = shape_numel(s);
    return make_tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::from(Shape s, std::vector<double> values) {
    return make_tensor(std::move(s), std::move(values));
}

Tensor Tensor::scalar(double v) { return make_tensor({1}, {v}); }

const Shape& Tensor::shape() const {
    check(defined(), "undefined tensor");
    return node->shape;
}

int64_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const& {
    check(defined(), "undefined tensor");
    return {node->value.data(), node->value.size()};
}

std::span<double> Tensor::raw() & {
    check(defined(), "undefined tensor");
    return {node->value.data(), node->value.size()};
}

double Tensor::item() const {
    check(numel() == 1, "item() on non-scalar tensor");
    return node->value[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    const Shape& s = shape();
    check(idx.size() == s.size(), "at(): rank mismatch");
    auto st = row_major_strides(s);
    int64_t off = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        check(i >= 0 && i < s[k], "at(): index out of range");
        off += i * st[k];
        ++k;
    }
    return node->value[static_cast<size_t>(off)];
}

bool Tensor::requires_grad() const { return defined() && node->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    check(defined(), "undefined tensor");
    node->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return defined() && !node->grad.empty(); }

std::span<const double> Tensor::grad() const {
    check(has_grad(), "tensor has no gradient");
    return {node->grad.data(), node->grad.size()};
}

std::span<double> Tensor::grad_raw() {
    grad_buf(*node);
    return {node->grad.data(), node->grad.size()};
}

void Tensor::clear_grad() {
    if (defined()) node->grad.clear();
}

Tensor Tensor::detach() const {
    check(defined(), "undefined tensor");
    return make_tensor(node->shape, node->value);
}

void backward(const Tensor& loss, bool release_graph) {
    check(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar");
    if (!loss.node->requires_grad)
        throw std::invalid_argument("backward: loss does not require grad");

    // iterative DFS post-order; children appear after all their parents
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
        Node* n;
        size_t next;
    };
    std::vector<Frame> stack{{loss.node.get(), 0}};
    seen.insert(loss.node.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    grad_buf(*loss.node)[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }

    if (release_graph) {
        for (Node* n : order) {
            n->backward = nullptr;
            n->parents.clear();
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    check(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + b.data()[i];
    Tensor out = make_tensor(a.shape(), std::move(v));
    if (wants_grad({&a, &b})) {
        Node* an = a.node.get();
        Node* bn = b.node.get();
        attach(out, {a.node, b.node}, [an, bn](const Node& o) {
            if (an->requires_grad) {
                auto& g = grad_buf(*an);
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
            if (bn->requires_grad) {
                auto& g = grad_buf(*bn);
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
        });
    }
    check_finite(out, "add");
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] - b.data()[i];
    Tensor out = make_tensor(a.shape(), std::move(v));
    if (wants_grad({&a, &b})) {
        Node* an = a.node.get();
        Node* bn = b.node.get();
        attach(out, {a.node, b.node}, [an, bn](const Node& o) {
            if (an->requires_grad) {
                auto& g = grad_buf(*an);
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
            if (bn->requires_grad) {
                auto& g = grad_buf(*bn);
                for (size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
            }
        });
    }
    check_finite(out, "sub");
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * b.data()[i];
    Tensor out = make_tensor(a.shape(), std::move(v));
    if (wants_grad({&a, &b})) {
        Node* an = a.node.get();
        Node* bn = b.node.get();
        attach(out, {a.node, b.node}, [an, bn](const Node& o) {
            if (an->requires_grad) {
                auto& g = grad_buf(*an);
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                auto& g = grad_buf(*bn);
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
            }
        });
    }
    check_finite(out, "mul");
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    std::vector<double> v(a.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] / b.data()[i];
    Tensor out = make_tensor(a.shape(), std::move(v));
    if (wants_grad({&a, &b})) {
        Node* an = a.node.get();
        Node* bn = b.node.get();
        attach(out, {a.node, b.node}, [an, bn](const Node& o) {
            if (an->requires_grad) {
                auto& g = grad_buf(*an);
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / bn->value[i];
            }
            if (bn->requires_grad) {
                auto& g = grad_buf(*bn);
                for (size_t i = 0; i < g.size(); ++i)
                    g[i] -= o.grad[i] * an->value[i] / (bn->value[i] * bn->value[i]);
            }
        });
    }
    check_finite(out, "div");
    return out;
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor add_scalar(const Tensor& x, double s) {
    std::vector<double> v(x.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = x.data()[i] + s;
    Tensor out = make_tensor(x.shape(), std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn](const Node& o) {
            auto& g = grad_buf(*xn);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        });
    }
    check_finite(out, "add_scalar");
    return out;
}

Tensor mul_scalar(const Tensor& x, double s) {
    std::vector<double> v(x.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = x.data()[i] * s;
    Tensor out = make_tensor(x.shape(), std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn, s](const Node& o) {
            auto& g = grad_buf(*xn);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
        });
    }
    check_finite(out, "mul_scalar");
    return out;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn](const Node& o) {
            auto& g = grad_buf(*xn);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0];
        });
    }
    check_finite(out, "sum");
    return out;
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

// ---------------------------------------------------------------------------
// structural ops

Tensor reshape(const Tensor& x, Shape s) {
    check(shape_numel(s) == x.numel(),
          "reshape: element count mismatch " + shape_str(x.shape()) + " -> " + shape_str(s));
    Tensor out = make_tensor(std::move(s), std::vector<double>(x.data().begin(), x.data().end()));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn](const Node& o) {
            auto& g = grad_buf(*xn);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        });
    }
    return out;
}

namespace {

// forward index map out[i] = in[map[i]]
Tensor gather_op(const Tensor& x, Shape out_shape, std::vector<int64_t> map, const char* op) {
    std::vector<double> v(map.size());
    auto xd = x.data();
    for (size_t i = 0; i < map.size(); ++i) v[i] = xd[static_cast<size_t>(map[i])];
    Tensor out = make_tensor(std::move(out_shape), std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn, map = std::move(map)](const Node& o) {
            auto& g = grad_buf(*xn);
            for (size_t i = 0; i < map.size(); ++i) g[static_cast<size_t>(map[i])] += o.grad[i];
        });
    }
    (void)op;
    return out;
}

} // namespace

Tensor permute(const Tensor& x, const std::vector<size_t>& axes) {
    const Shape& s = x.shape();
    check(axes.size() == s.size(), "permute: axes rank mismatch");
    std::vector<bool> used(s.size(), false);
    Shape os(s.size());
    for (size_t i = 0; i < axes.size(); ++i) {
        check(axes[i] < s.size() && !used[axes[i]], "permute: invalid axis list");
        used[axes[i]] = true;
        os[i] = s[axes[i]];
    }
    auto ist = row_major_strides(s);
    auto ost = row_major_strides(os);
    int64_t n = x.numel();
    std::vector<int64_t> map(static_cast<size_t>(n));
    std::vector<int64_t> idx(s.size(), 0);
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o;
        int64_t src = 0;
        for (size_t k = 0; k < os.size(); ++k) {
            int64_t c = rem / ost[k];
            rem -= c * ost[k];
            src += c * ist[axes[k]];
        }
        map[static_cast<size_t>(o)] = src;
    }
    (void)idx;
    return gather_op(x, std::move(os), std::move(map), "permute");
}

Tensor flip(const Tensor& x, const std::vector<size_t>& axes) {
    const Shape& s = x.shape();
    for (size_t a : axes) check(a < s.size(), "flip: invalid axis");
    auto st = row_major_strides(s);
    int64_t n = x.numel();
    std::vector<int64_t> map(static_cast<size_t>(n));
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o;
        int64_t src = 0;
        for (size_t k = 0; k < s.size(); ++k) {
            int64_t c = rem / st[k];
            rem -= c * st[k];
            bool flipped = std::find(axes.begin(), axes.end(), k) != axes.end();
            src += (flipped ? s[k] - 1 - c : c) * st[k];
        }
        map[static_cast<size_t>(o)] = src;
    }
    return gather_op(x, s, std::move(map), "flip");
}

Tensor narrow(const Tensor& x, size_t axis, int64_t start, int64_t len) {
    const Shape& s = x.shape();
    check(axis < s.size(), "narrow: invalid axis");
    check(start >= 0 && len >= 0 && start + len <= s[axis], "narrow: range out of bounds");
    Shape os = s;
    os[axis] = len;
    auto ist = row_major_strides(s);
    auto ost = row_major_strides(os);
    int64_t n = shape_numel(os);
    std::vector<int64_t> map(static_cast<size_t>(n));
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o;
        int64_t src = 0;
        for (size_t k = 0; k < os.size(); ++k) {
            int64_t c = rem / ost[k];
            rem -= c * ost[k];
            src += (k == axis ? c + start : c) * ist[k];
        }
        map[static_cast<size_t>(o)] = src;
    }
    return gather_op(x, std::move(os), std::move(map), "narrow");
}

Tensor concat(const std::vector<Tensor>& xs, size_t axis) {
    check(!xs.empty(), "concat: empty input list");
    const Shape& s0 = xs[0].shape();
    check(axis < s0.size(), "concat: invalid axis");
    int64_t total = 0;
    for (const Tensor& t : xs) {
        const Shape& s = t.shape();
        check(s.size() == s0.size(), "concat: rank mismatch");
        for (size_t k = 0; k < s.size(); ++k)
            if (k != axis) check(s[k] == s0[k], "concat: shape mismatch off-axis");
        total += s[axis];
    }
    Shape os = s0;
    os[axis] = total;
    int64_t outer = 1, inner = 1;
    for (size_t k = 0; k < axis; ++k) outer *= s0[k];
    for (size_t k = axis + 1; k < s0.size(); ++k) inner *= s0[k];

    std::vector<double> v(static_cast<size_t>(shape_numel(os)));
    int64_t off_axis = 0;
    for (const Tensor& t : xs) {
        int64_t ax = t.shape()[axis];
        auto td = t.data();
        for (int64_t ou = 0; ou < outer; ++ou)
            for (int64_t a = 0; a < ax; ++a) {
                const double* src = td.data() + (ou * ax + a) * inner;
                double* dst = v.data() + (ou * total + off_axis + a) * inner;
                std::copy(src, src + inner, dst);
            }
        off_axis += ax;
    }
    Tensor out = make_tensor(std::move(os), std::move(v));

    bool any = false;
    for (const Tensor& t : xs)
        if (grad_enabled() && t.requires_grad()) any = true;
    if (any) {
        std::vector<std::shared_ptr<Node>> parents;
        std::vector<Node*> raw;
        std::vector<int64_t> axes_sizes;
        for (const Tensor& t : xs) {
            parents.push_back(t.node);
            raw.push_back(t.node.get());
            axes_sizes.push_back(t.shape()[axis]);
        }
        attach(out, std::move(parents),
               [raw, axes_sizes, outer, inner, total](const Node& o) {
                   int64_t off = 0;
                   for (size_t p = 0; p < raw.size(); ++p) {
                       int64_t ax = axes_sizes[p];
                       if (raw[p]->requires_grad) {
                           auto& g = grad_buf(*raw[p]);
                           for (int64_t ou = 0; ou < outer; ++ou)
                               for (int64_t a = 0; a < ax; ++a) {
                                   const double* src = o.grad.data() + (ou * total + off + a) * inner;
                                   double* dst = g.data() + (ou * ax + a) * inner;
                                   for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                               }
                       }
                       off += ax;
                   }
               });
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& x, int64_t n) {
    check(x.rank() >= 2, "split_channels: need a channel axis");
    int64_t c = x.dim(1);
    check(n > 0 && c % n == 0,
          "split_channels: channel count " + std::to_string(c) + " not divisible by " + std::to_string(n));
    int64_t w = c / n;
    std::vector<Tensor> parts;
    parts.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) parts.push_back(narrow(x, 1, i * w, w));
    return parts;
}

Tensor concat_channels(const std::vector<Tensor>& xs) { return concat(xs, 1); }

Tensor broadcast_channels(const Tensor& vec, const Shape& target) {
    check(vec.rank() == 1, "broadcast_channels: vector must be rank 1");
    check(target.size() >= 2 && target[1] == vec.dim(0),
          "broadcast_channels: channel mismatch");
    int64_t outer = target[0];
    int64_t c = target[1];
    int64_t inner = 1;
    for (size_t k = 2; k < target.size(); ++k) inner *= target[k];
    std::vector<double> v(static_cast<size_t>(shape_numel(target)));
    auto vd = vec.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t ch = 0; ch < c; ++ch)
            std::fill_n(v.data() + (o * c + ch) * inner, inner, vd[static_cast<size_t>(ch)]);
    Tensor out = make_tensor(target, std::move(v));
    if (wants_grad({&vec})) {
        Node* vn = vec.node.get();
        attach(out, {vec.node}, [vn, outer, c, inner](const Node& o) {
            auto& g = grad_buf(*vn);
            for (int64_t ou = 0; ou < outer; ++ou)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double* src = o.grad.data() + (ou * c + ch) * inner;
                    double acc = 0.0;
                    for (int64_t i = 0; i < inner; ++i) acc += src[i];
                    g[static_cast<size_t>(ch)] += acc;
                }
        });
    }
    return out;
}

} // namespace gtem
