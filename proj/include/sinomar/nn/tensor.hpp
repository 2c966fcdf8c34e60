#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace sinomar::nn {

struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    size_t numel() const {
        return static_cast<size_t>(n) * c * static_cast<size_t>(h) * w;
    }
    size_t plane() const { return static_cast<size_t>(h) * w; }
    bool operator==(const Shape& o) const = default;
};

/// Batched NCHW value holder with an optional gradient buffer of the same
/// shape. Gradients are accumulated, never overwritten, so a tensor feeding
/// several ops receives the sum of its cotangents.
class TensorImpl {
  public:
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;

    TensorImpl(Shape s, bool rg) : shape(s), value(s.numel(), 0.0), requires_grad(rg) {}

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

using Tensor = std::shared_ptr<TensorImpl>;

inline Tensor make_tensor(Shape s, bool requires_grad = false) {
    return std::make_shared<TensorImpl>(s, requires_grad);
}

inline Tensor make_like(const Tensor& t, bool requires_grad) {
    return make_tensor(t->shape, requires_grad);
}

/// Records one backward closure per op in execution order; reverse traversal
/// is then a valid topological order of the graph.
class Tape {
  public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    /// Seeds the scalar loss with cotangent 1 and runs the recorded closures
    /// in reverse.
    void backward(const Tensor& loss) {
        if (loss->shape.numel() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
        loss->ensure_grad();
        loss->grad[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

  private:
    std::vector<std::function<void()>> nodes_;
};

}  // namespace sinomar::nn
