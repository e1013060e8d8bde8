#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "darf/error.hpp"
#include "darf/nnkit/tensor.hpp"

namespace darf::nn {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Reverse-mode gradient tape over a fixed vocabulary of ops (see ops.hpp).
///
/// Every op pushes one node holding its output value and, when recording, a
/// closure that maps the node's output gradient to input gradients. A tape is
/// single-use: after backward() it refuses a second propagation, and a new
/// forward pass needs a fresh tape.
template <class T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor<T>&)>;

    explicit Tape(bool record = true) : record_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    Var constant(Tensor<T> value) {
        nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
        return Var{nodes_.size() - 1};
    }

    Var parameter(Parameter<T>& p) {
        nodes_.push_back(Node{p.value, {}, &p, record_, {}});
        return Var{nodes_.size() - 1};
    }

    /// Records an op output. `back` runs only if some input needs a gradient.
    Var push(Tensor<T> value, std::initializer_list<Var> inputs, Backward back) {
        bool needs = false;
        if (record_)
            for (Var v : inputs) needs = needs || node(v).needs_grad;
        nodes_.push_back(Node{std::move(value), {}, nullptr, needs, needs ? std::move(back) : Backward{}});
        return Var{nodes_.size() - 1};
    }

    const Tensor<T>& value(Var v) const { return node(v).value; }
    const Shape& shape(Var v) const { return node(v).value.shape(); }
    bool needs_grad(Var v) const { return node(v).needs_grad; }

    /// Gradient accumulator for v, allocated on first use.
    Tensor<T>& grad(Var v) {
        Node& n = node(v);
        if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    void backward(Var loss) {
        if (consumed_) throw StaleGraphError("backward() called twice on the same tape; re-run the forward pass");
        if (!record_) throw StaleGraphError("backward() on a tape created without recording");
        if (node(loss).value.size() != 1)
            throw DimensionError("backward() needs a scalar loss, got shape " + to_string(node(loss).value.shape()));
        consumed_ = true;
        grad(loss)[0] = T{1};
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.empty()) continue;
            if (n.back) n.back(*this, n.grad);
            if (n.param) n.param->grad += n.grad;
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        Parameter<T>* param;
        bool needs_grad;
        Backward back;
    };

    Node& node(Var v) {
        if (!v.valid() || v.id >= nodes_.size()) throw Error("invalid tape variable");
        return nodes_[v.id];
    }
    const Node& node(Var v) const {
        if (!v.valid() || v.id >= nodes_.size()) throw Error("invalid tape variable");
        return nodes_[v.id];
    }

    std::deque<Node> nodes_;
    bool record_;
    bool consumed_ = false;
};

}  // namespace darf::nn
