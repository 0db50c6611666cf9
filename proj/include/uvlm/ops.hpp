#pragma once

#include <functional>
#include <vector>

#include "uvlm/tensor.hpp"

namespace uvlm {

// Differentiable tensor ops. Every op records its backward closure on the
// active Tape when one exists and any input requires grad.

// Standard matrix product a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Affine layer: x[T x d_i] * W[d_o x d_i]^T + bias[d_o].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // broadcast over rows

Tensor gelu(const Tensor& x);

// Per-row normalization with affine gamma/beta of width cols().
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// out[t] = table[ids[t]]; gradient scatter-adds into the selected rows.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, size_t start, size_t len);
Tensor gather_rows(const Tensor& x, const std::vector<size_t>& indices);

// out[i] = x[coords[i].first, coords[i].second], as a length-n vector.
Tensor gather_elems(const Tensor& x,
                    const std::vector<std::pair<size_t, size_t>>& coords);

// Place rows of x at the given indices of a zero [total_rows x cols] tensor.
Tensor scatter_rows(const Tensor& x, const std::vector<size_t>& indices,
                    size_t total_rows);

// Numerically stabilized softmax over the last dimension.
Tensor softmax(const Tensor& x);

// Mean over positions of -log softmax(logits)[t, targets[t]].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Elementwise log(sigmoid(x)), stable for large |x|.
Tensor log_sigmoid(const Tensor& x);

// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& x);

// Straight-through gate for routed experts: forward returns delta unchanged
// (the gate ratio is exactly 1 at the recorded point); backward routes
// d(out[t,:]) . delta[t,:] / gate[t] into the gate tensor so the router
// receives a training signal despite the hard routing decision.
Tensor ste_gate(const Tensor& delta, const Tensor& gates);

// Max relative error between analytic gradients of f w.r.t. x and central
// finite differences. f must evaluate to a scalar using x. When max_coords
// is nonzero, at most that many coordinates are sampled (seeded).
double finite_diff_check(const std::function<Tensor()>& f, Tensor x,
                         double step, size_t max_coords = 0,
                         uint64_t seed = 0);

}  // namespace uvlm
