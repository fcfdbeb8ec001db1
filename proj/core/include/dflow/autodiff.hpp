#pragma once

// Reverse-mode differentiation over dense tensors. A Tape records one
// forward computation; backward() walks it once in reverse creation order.
// Tapes are single-threaded and cheap to build per step.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dflow/modular.hpp"
#include "dflow/tensor.hpp"

namespace dflow {

// Finite stand-in for -inf on masked logits: unreachable under argmax and
// softmax while keeping all arithmetic finite.
inline constexpr double kMaskedLogit = -1e9;

class Tape;

// Trainable tensor with a gradient accumulator of identical shape.
class Parameter {
public:
    Parameter(std::string name, Tensor value)
        : name_(std::move(name)), value_(std::move(value)),
          grad_(Tensor::zeros(value_.shape)) {}

    const std::string& name() const { return name_; }
    Tensor& value() { return value_; }
    const Tensor& value() const { return value_; }
    Tensor& grad() { return grad_; }
    const Tensor& grad() const { return grad_; }
    void zero_grad() { std::fill(grad_.data.begin(), grad_.data.end(), 0.0); }

private:
    std::string name_;
    Tensor value_;
    Tensor grad_;
};

// Handle to a node on some tape. Valid while the tape is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    const Tensor& value() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var param(Parameter& p);

    // Fills every reachable Parameter's gradient accumulator with
    // d(loss)/d(value). Throws NonScalarLoss unless loss has one element.
    void backward(Var loss);

    // Node access for op implementations.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;
    Var emplace(Tensor value, std::vector<std::size_t> parents, BackwardFn bw);
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    Tensor& grad(std::size_t id) { return nodes_[id].grad; }
    std::span<const std::size_t> parents(std::size_t id) const { return nodes_[id].parents; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;
    std::vector<std::pair<Parameter*, std::size_t>> param_nodes_;
};

// --- core op suite ------------------------------------------------------

Var add(Var a, Var b);                    // elementwise, same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                    // elementwise (Hadamard)
Var scale(Var a, double c);
Var neg(Var a);
Var add_rowwise(Var a, Var bias);         // bias [n] broadcast over rows of [..., n]
Var matmul(Var a, Var b);                 // [m,k] x [k,n] -> [m,n]
Var tanh(Var a);
Var softmax(Var a);                       // last axis
Var log_softmax(Var a);                   // last axis
Var reduce_sum(Var a);                    // -> scalar
Var mean_all(Var a);                      // -> scalar
Var sum_per_batch(Var a);                 // [B, ...] -> [B]
Var sum_middle(Var a);                    // [B, P, C] -> [B, C]
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat_last(std::span<const Var> parts);
Var slice_last(Var a, std::size_t start, std::size_t len);
Var select_positions(Var a, std::vector<std::size_t> positions);   // [B,D,K] -> [B,P,K]
Var scatter_positions(Var v, std::vector<std::size_t> positions, std::size_t D); // [B,P,K] -> [B,D,K]
Var broadcast_to_batch(Var a, std::size_t batch);  // [S...] -> [B,S...]
Var gather_rows(Var table, std::vector<std::size_t> indices);      // [R,C] -> [n,C]

// Modular one-hot algebra along the last axis, batched over leading dims.
// Backward distributes gradients to both operands per the bilinear forms.
Var mod_add(Var a, Var b, Modulus K);
Var mod_sub(Var a, Var b, Modulus K);
Var mod_mul(Var s, Var a, Modulus K, const SigmaMask* mask = nullptr);
Var mod_div(Var s, Var a, Modulus K, const SigmaMask* mask = nullptr);
inline Var circular_convolution(Var a, Var b, Modulus K) { return mod_add(a, b, K); }

// Hard one-hot of the argmax on the forward pass (ties break to the lowest
// index); Jacobian of softmax(theta/tau) on the backward pass.
Var st_one_hot_argmax(Var theta, double tau);

// Disallowed logits pinned to kMaskedLogit; gradient zero there.
Var masked_fill(Var theta, const SigmaMask& mask);

// Max over parameters of |analytic - central difference| / (|analytic| + 1e-8)
// for the scalar loss built by `build_loss` on a fresh tape.
double finite_difference_check(const std::function<Var(Tape&)>& build_loss,
                               std::span<Parameter* const> params, double eps);

} // namespace dflow
