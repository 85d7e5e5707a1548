#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mts/rng.hpp"
#include "mts/tensor.hpp"

// Reverse-mode automatic differentiation over Tensor. A forward pass builds a
// DAG of Node objects; backward() walks reachable nodes in reverse creation
// order and accumulates gradients. Parameter nodes persist across iterations;
// everything else is garbage-collected with the Vars that reference it.
//
// Graph construction only reads parent values, so concurrent forward passes
// over shared (frozen) parameters are safe as long as no backward runs.

namespace mts::ad {

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    uint64_t order = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    // Var is a shallow handle: node mutation through a const Var is allowed
    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& ensure_grad() const { return node_->ensure_grad(); }
    const Shape& shape() const { return node_->value.shape; }
    int64_t dim(int i) const { return node_->value.dim(i); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    double item() const;
    void zero_grad() const;

    std::shared_ptr<Node> node_;
};

// Runs the chain rule from a scalar root. Existing grad buffers on reachable
// nodes are accumulated into (parameters are zeroed by the optimizer).
void backward(const Var& root);

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& a, double scale, double shift);  // scale*a + shift
inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }
Var relu(const Var& a);
Var softplus(const Var& a);  // smooth ReLU: log(1 + e^x)
Var sigmoid(const Var& a);

// shape / selection
Var concat_axis1(const std::vector<Var>& parts);
Var slice_axis1(const Var& a, int64_t begin, int64_t end);
Var reshape(const Var& a, Shape target);
Var detach(const Var& a);

// reductions and broadcasts over (B, C, D, H, W)
Var gap(const Var& a);                                    // -> (B, C)
Var channel_max(const Var& a);                            // -> (B, 1, D, H, W)
Var channel_mean(const Var& a);                           // -> (B, 1, D, H, W)
Var mul_channel_broadcast(const Var& a, const Var& attn); // attn: (B, 1, D, H, W)
Var softmax_axis1(const Var& a);

// layers
Var conv3d(const Var& input, const Var& weight, const Var& bias, int stride, int pad);
Var upsample2(const Var& a);
Var linear(const Var& input, const Var& weight, const Var& bias);  // in (B,N), w (M,N), b (M)
Var dropout(const Var& a, double rate, bool training, Rng& rng);

// losses (scalar outputs)
// probs: (B, C, D, H, W) softmax output; target: integer labels (B*D*H*W) in [0, C)
Var soft_dice_loss(const Var& probs, const std::vector<int>& target, double eps);
Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels);
Var weighted_sum(const Var& a, double wa, const Var& b, double wb);

}  // namespace mts::ad
