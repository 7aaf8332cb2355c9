#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tsde/tensor.hpp"

namespace tsde::ad {

// Reverse-mode autodiff over Tensor. Each op builds a graph node holding the
// forward value and a closure that scatters the node's gradient into its
// parents. Graphs are per-step DAGs; parameter leaves outlive them.
struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(val.shape());
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.vec().begin(), grad.vec().end(), 0.0);
  }
};

using Var = std::shared_ptr<Node>;

// Leaves.
Var param(Tensor value);     // trainable leaf
Var constant(Tensor value);  // non-trainable leaf

// Elementwise, shapes must match.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var cmul(const Var& a, const Tensor& mask);  // elementwise by a constant tensor

// Adds a length-c vector to every row of an [n, c] matrix (bias / broadcast).
Var add_rowvec(const Var& x, const Var& v);

// [n, m] x [m, p] -> [n, p]
Var matmul(const Var& x, const Var& w);
// [B, n, m] x [B, m, p] -> [B, n, p]
Var bmm(const Var& a, const Var& b);
// [B, n, m] -> [B, m, n]
Var transpose12(const Var& a);
// General axis permutation (rank <= 4 is all we use).
Var permute(const Var& a, const std::vector<int>& perm);
Var reshape(const Var& a, std::vector<int64_t> shape);

Var relu(const Var& a);
Var gelu(const Var& a);  // exact erf form
Var silu(const Var& a);
Var tanh_op(const Var& a);
Var sigmoid(const Var& a);
Var exp_op(const Var& a);
Var log_op(const Var& a);

// Softmax over the last dimension.
Var softmax_last(const Var& a);

// Layer norm over the last dimension of an [n, d] matrix, with affine params.
Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var concat_last(const std::vector<Var>& parts);
Var slice_last(const Var& a, int64_t from, int64_t to);

// Gathers rows of a [N, d] table; gradient scatter-adds back (embedding lookup).
Var rows(const Var& table, std::vector<int64_t> indices);

// Full reduction to a [1] scalar.
Var sum_all(const Var& a);

// Runs the backward pass from a scalar root, accumulating into .grad of every
// node with requires_grad. Deterministic order (topological, single thread).
void backward(const Var& root);

}  // namespace tsde::ad
