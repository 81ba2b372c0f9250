#include "chainhoi/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "chainhoi/rng.hpp"

namespace chainhoi {

namespace {
std::atomic<uint64_t> g_node_seq{0};

std::shared_ptr<TensorNode> new_node(const Shape& shape, std::vector<double> data) {
    int64_t n = shape_numel(shape);
    if (static_cast<int64_t>(data.size()) != n)
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = shape;
    node->value = std::move(data);
    node->seq = g_node_seq.fetch_add(1, std::memory_order_relaxed);
    return node;
}
}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(const Shape& shape) {
    return Tensor(new_node(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0)));
}

Tensor Tensor::full(const Shape& shape, double v) {
    return Tensor(new_node(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), v)));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> data) {
    return Tensor(new_node(shape, std::move(data)));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : d) x = rng.normal() * stddev;
    return from(shape, std::move(d));
}

Tensor Tensor::rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : d) x = rng.uniform(lo, hi);
    return from(shape, std::move(d));
}

Tensor Tensor::from_op(const Shape& shape, std::vector<double> data,
                       const std::vector<Tensor>& parents) {
    Tensor out(new_node(shape, std::move(data)));
    bool rg = false;
    out.node_->parents.reserve(parents.size());
    for (const auto& p : parents) {
        if (!p.defined()) throw ShapeError("undefined tensor passed to op");
        out.node_->parents.push_back(p.node_);
        rg = rg || p.node_->requires_grad;
    }
    out.node_->requires_grad = rg;
    return out;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size()) throw ShapeError("index rank mismatch");
    int64_t flat = 0;
    size_t i = 0;
    for (int v : idx) {
        if (v < 0 || v >= s[i]) throw ShapeError("index out of range");
        flat = flat * s[i] + v;
        ++i;
    }
    return node_->value[static_cast<size_t>(flat)];
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::backward() {
    if (numel() != 1) throw ShapeError("backward() requires a scalar output");
    // collect reachable grad-requiring nodes, iteratively
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back(p.get());
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (TensorNode* n : order) {
        if (n->backward_fn) n->backward_fn();
    }
}

Tensor Tensor::detached_copy() const {
    return Tensor::from(shape(), node_->value);
}

bool Tensor::all_finite() const {
    for (double v : node_->value)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace chainhoi
