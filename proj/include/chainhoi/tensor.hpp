#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "chainhoi/errors.hpp"

namespace chainhoi {

class Rng;

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward_fn;  // accumulates into parents' grad
    uint64_t seq = 0;                   // creation order, used for topo sort

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Dense n-d array of doubles with reverse-mode differentiation. Value
// semantics over a shared node; ops in ops.hpp build the tape.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double v);
    static Tensor from(const Shape& shape, std::vector<double> data);
    static Tensor scalar(double v);
    static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
    static Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi);

    // Graph node for a derived value; requires_grad is inherited from parents.
    static Tensor from_op(const Shape& shape, std::vector<double> data,
                          const std::vector<Tensor>& parents);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    double* data() { return node_->value.data(); }
    const double* data() const { return node_->value.data(); }
    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }

    double item() const;
    double at(std::initializer_list<int> idx) const;

    Tensor& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& grad() const;
    void zero_grad() {
        if (node_) node_->grad.assign(node_->value.size(), 0.0);
    }

    // Reverse sweep from a scalar output.
    void backward();

    void set_backward(std::function<void()> fn) { node_->backward_fn = std::move(fn); }
    TensorNode* node() const { return node_.get(); }

    // Deep copy with no tape history.
    Tensor detached_copy() const;

    bool all_finite() const;

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode> node_;
};

}  // namespace chainhoi
