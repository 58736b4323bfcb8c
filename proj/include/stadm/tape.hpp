#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "stadm/array.hpp"

namespace stadm {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Array& val() const;
    const Array& grad() const;
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

enum class NormMode { train, eval };

/// Reverse-mode tape. Nodes are created in topological order by construction;
/// backward() walks them once in reverse. Forward values are eager, so every
/// Var's value is available immediately after the call that created it.
class Tape {
public:
    struct Node {
        Array value;
        Array grad;  // empty until first touched in backward
        std::vector<int> parents;
        std::function<void(Tape&, int)> backward;  // may be empty (leaves/constants)
        bool needs_grad = false;
        bool reachable = false;
    };

    Var leaf(Array value);       // gradient-tracked input (parameters)
    Var constant(Array value);   // data input; no gradient is ever computed

    /// Seeds d(root)/d(root) = 1 and accumulates gradients into every
    /// reachable node with needs_grad. Root must be scalar (numel 1).
    void backward(Var root);

    const Array& value(int id) const { return nodes_[id].value; }
    Array& grad_buffer(int id);  // zero-allocates on first use
    const Array& grad(int id) const;
    Node& node(int id) { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    Var make_node(Array value, std::vector<int> parents, std::function<void(Tape&, int)> backward);

private:
    std::deque<Node> nodes_;  // deque: node references stay valid as the tape grows
    Array empty_;
};

// --- differentiable operations -------------------------------------------

Var add(Var a, Var b);                 // elementwise, same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise (Hadamard)
Var scale(Var a, double c);
Var add_rowvec(Var x, Var row);        // (m x n) + broadcast (n)
Var matmul(Var a, Var b);
Var transpose(Var x);
Var relu(Var x);
Var gelu(Var x);                       // exact erf form
Var softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gain, Var shift, double eps = 1e-5);
Var conv1d_same(Var x, Var kernel, Var bias);  // x: C x N, kernel: F x C x k (odd k)
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t offset, std::size_t count);
Var slice_cols(Var x, std::size_t offset, std::size_t count);
Var rows_select(Var x, std::vector<std::size_t> indices);  // gather / embedding lookup
Var mse(Var a, Var b);                 // mean((a-b)^2) over all elements -> 1x1

/// Batch normalization over the row axis of a B x F matrix, one statistic per
/// feature. Train mode uses batch statistics (biased variance) and updates
/// running_mean / running_var in place (unbiased variance, momentum mix).
/// Eval mode normalizes with the running statistics.
Var batch_norm_feature(Var x, Var gain, Var shift, NormMode mode, Array& running_mean,
                       Array& running_var, double momentum = 0.1, double eps = 1e-5);

}  // namespace stadm
