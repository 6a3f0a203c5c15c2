#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gtem {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::vector<int64_t> row_major_strides(const Shape& s);
std::string shape_str(const Shape& s);

// One value in the autodiff graph. Children own their parents; leaves
// (parameters) have no parents and keep their grad across steps until cleared.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Node&)> backward;
};

// Reverse-mode recording is thread-local so read-only inference clones can run
// on separate threads.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }

private:
    bool prev_;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node(std::move(n)) {}

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor from(Shape s, std::vector<double> values);
    static Tensor scalar(double v);

    bool defined() const { return node != nullptr; }
    const Shape& shape() const;
    size_t rank() const { return shape().size(); }
    int64_t dim(size_t i) const { return shape().at(i); }
    int64_t numel() const;

    // Views into the node's storage; deleted on rvalues so a temporary's
    // buffer cannot dangle into a range-for.
    std::span<const double> data() const&;
    std::span<const double> data() const&& = delete;
    // Mutable view. Only meaningful on leaves (parameter updates, test setup);
    // graph intermediates are immutable once produced.
    std::span<double> raw() &;
    std::span<double> raw() && = delete;

    double item() const;
    double at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad_raw();
    void clear_grad();

    // Value copy with no graph attachment.
    Tensor detach() const;

    std::shared_ptr<Node> node;
};

// Accumulates gradients of `loss` (a scalar) into every reachable node that
// requires grad. release_graph drops tape edges afterwards so teardown is
// iterative and intermediates free early.
void backward(const Tensor& loss, bool release_graph = true);

namespace detail {
Tensor make_tensor(Shape s, std::vector<double> v);
void check(bool cond, const std::string& msg);
void check_finite(const Tensor& t, const char* op);
std::vector<double>& grad_buf(Node& n);
bool wants_grad(std::initializer_list<const Tensor*> inputs);
void attach(Tensor& out, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(const Node&)> fn);
} // namespace detail

// ---- elementwise arithmetic (shapes must match exactly; no broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- structural ops: exact bijections on elements, grads route exactly ----
Tensor reshape(const Tensor& x, Shape s);
Tensor permute(const Tensor& x, const std::vector<size_t>& axes);
Tensor flip(const Tensor& x, const std::vector<size_t>& axes);
Tensor narrow(const Tensor& x, size_t axis, int64_t start, int64_t len);
Tensor concat(const std::vector<Tensor>& xs, size_t axis);
std::vector<Tensor> split_channels(const Tensor& x, int64_t n);
Tensor concat_channels(const std::vector<Tensor>& xs);

// vec of C values replicated over (N, C, H, W)
Tensor broadcast_channels(const Tensor& vec, const Shape& target);

} // namespace gtem
