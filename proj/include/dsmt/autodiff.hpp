#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "dsmt/tensor.hpp"

namespace dsmt {

class Tape;

// Handle to a tensor flowing through the computation. When `tape` is null
// the value is a plain constant: the same op functions run forward-only,
// which is how evaluation-mode scoring avoids recording entirely.
struct Var {
    std::shared_ptr<const Tensor> value;
    Tape* tape = nullptr;
    int node = -1;

    const Tensor& val() const { return *value; }
    bool recorded() const { return tape != nullptr && node >= 0; }
};

// Reverse-mode tape. Ops append nodes in execution order; backward replays
// adjoints in reverse. Single-writer: one training step owns one tape.
class Tape {
public:
    using BackwardFn = std::function<void(const Tensor& upstream, Tape& tape)>;

    // Registers a leaf referencing external parameter storage. Non-owning:
    // the parameter must outlive the tape.
    Var leaf(const Tensor& parameter) {
        Var v;
        v.value = std::shared_ptr<const Tensor>(&parameter, [](const Tensor*) {});
        v.tape = this;
        v.node = record(parameter.shape(), {}, nullptr);
        return v;
    }

    int record(Shape shape, std::vector<int> parents, BackwardFn fn) {
        nodes_.push_back(Node{std::move(shape), std::move(parents), std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Replays adjoints from `loss` (scalar) back to every reachable node.
    // Resets gradients first, so repeated calls give identical results.
    void backward(const Var& loss) {
        if (loss.tape != this || loss.node < 0)
            throw ContractError("backward: loss was not recorded on this tape");
        if (loss.val().size() != 1)
            throw ContractError("backward: loss must be scalar, got shape " +
                                shape_str(loss.val().shape()));
        grads_.assign(nodes_.size(), std::nullopt);
        grads_[static_cast<std::size_t>(loss.node)] = Tensor::scalar(1.0);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (!grads_[i].has_value() || !nodes_[i].backward) continue;
            nodes_[i].backward(*grads_[i], *this);
        }
        ran_backward_ = true;
    }

    void accumulate(int node, const Tensor& g) {
        if (node < 0) return;
        auto& slot = grads_[static_cast<std::size_t>(node)];
        if (!slot.has_value()) {
            slot = g;
            return;
        }
        Tensor& acc = *slot;
        const double* src = g.data();
        double* dst = acc.data();
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += src[i];
    }

    // Gradient of the last backward() w.r.t. `v`. Unreached nodes get zeros.
    const Tensor& grad(const Var& v) {
        if (v.tape != this || v.node < 0)
            throw ContractError("grad: variable does not belong to this tape");
        if (!ran_backward_) throw ContractError("grad: backward() has not run");
        auto& slot = grads_[static_cast<std::size_t>(v.node)];
        if (!slot.has_value()) slot = Tensor(nodes_[static_cast<std::size_t>(v.node)].shape);
        return *slot;
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Shape shape;
        std::vector<int> parents;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor>> grads_;
    bool ran_backward_ = false;
};

inline Var constant(Tensor t) {
    Var v;
    v.value = std::make_shared<const Tensor>(std::move(t));
    return v;
}

// Non-owning constant view; caller keeps the tensor alive.
inline Var constant_view(const Tensor& t) {
    Var v;
    v.value = std::shared_ptr<const Tensor>(&t, [](const Tensor*) {});
    return v;
}

// When on, every op output is scanned for NaN/Inf (debug default).
// Off, the training loop still checks the loss once per step.
void set_strict_finite_checks(bool on);
bool strict_finite_checks();

}  // namespace dsmt
