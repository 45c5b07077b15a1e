#pragma once

#include <functional>
#include <vector>

#include "natpn/tensor.hpp"

namespace natpn {

/// Error thrown when a caller violates an API contract (as opposed to a
/// numeric domain violation).
class contract_error : public std::runtime_error {
 public:
  explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace ad {

class Tape;

/// Handle to a value recorded on a tape.
struct Node {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
};

/// Append-only record of a forward pass. One tape per training step;
/// a tape and its nodes are confined to a single thread.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Node leaf(const Tensor& v);

  const Tensor& value(Node n) const { return records_[n.idx].value; }

  /// Gradient accumulated by the last backward pass; zeros if the node
  /// was not on a path to the root.
  Tensor grad(Node n) const;

  /// Reverse pass from a scalar root. Populates gradients of every
  /// reachable node.
  void backward(Node root);

  size_t size() const { return records_.size(); }

  // Used by op implementations.
  Node emit(Tensor value, BackFn back);
  void accum(int idx, const Tensor& g);

 private:
  struct Record {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    BackFn back;  // null for leaves
  };
  std::vector<Record> records_;
};

// Element-wise binary ops with limited broadcasting: equal shapes,
// scalar [1,1] vs any, row vector [1,C] vs [R,C], column vector [R,1]
// vs [R,C]. Division by zero and similar domain violations throw.
Node add(Node a, Node b);
Node sub(Node a, Node b);
Node mul(Node a, Node b);
Node div(Node a, Node b);

// out = k * a + m, element-wise with scalar constants.
Node affine_const(Node a, double k, double m);
inline Node neg(Node a) { return affine_const(a, -1.0, 0.0); }
inline Node add_const(Node a, double m) { return affine_const(a, 1.0, m); }
inline Node mul_const(Node a, double k) { return affine_const(a, k, 0.0); }

// Element-wise unary ops.
Node exp(Node a);
Node log(Node a);        // domain error if any element <= 0
Node sqrt(Node a);       // domain error if any element < 0
Node square(Node a);
Node tanh(Node a);
Node softplus(Node a);
Node leaky_relu(Node a);  // slope 0.01
Node lgamma(Node a);      // domain error if any element <= 0
Node digamma(Node a);     // domain error if any element <= 0

// min(a, c) element-wise against a constant; subgradient 1 where a < c.
Node min_const(Node a, double c);
// max(a, c) element-wise; subgradient 1 where a > c.
Node max_const(Node a, double c);

// Element-wise select: mask[i] != 0 ? a[i] : b[i]. The mask is a plain
// tensor; no gradient flows through the condition.
Node where(const Tensor& mask, Node a, Node b);

// C[M,N] = A[M,K] B[K,N]
Node matmul(Node a, Node b);

// Reductions.
Node sum(Node a);            // -> [1,1]
Node mean(Node a);           // -> [1,1]
Node rowsum(Node a);         // [R,C] -> [R,1]

// Row-wise softmax.
Node softmax(Node a);

// Column concatenation / slicing.
Node concat_cols(Node a, Node b);
Node slice_cols(Node a, int64_t c0, int64_t c1);  // [c0, c1)

}  // namespace ad
}  // namespace natpn
