// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over row-major float
// matrices. Operations record their inputs and a backward closure whenever an
// input requires a gradient and recording is enabled; `Tensor::backward()`
// walks the recorded graph in reverse topological order.

#ifndef LMC_TENSOR_HPP_
#define LMC_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a computation meets NaN or infinity in its inputs.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

namespace detail {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> value;
  std::vector<float> grad;  // empty until first accumulated into
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::span<float> ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, float value,
                     bool requires_grad = false);
  static Tensor from(std::vector<float> values, std::size_t rows,
                     std::size_t cols, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<std::size_t> shape() const { return {rows(), cols()}; }

  std::span<const float> values() const { return node_->value; }
  std::span<float> mutable_values() { return node_->value; }
  float item() const;
  float at(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->cols + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient accumulated by backward(); zeros if none was accumulated.
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();

  // Seeds d(this)/d(this) = 1 for a 1x1 tensor and propagates.
  void backward();
  // Propagates an arbitrary upstream gradient of this tensor's shape.
  void backward(std::span<const float> upstream);

  // A copy of the values that is cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds a result node. The backward closure is attached only when recording
// is enabled and some input requires a gradient. Inside the closure the
// inputs are `self.parents[i]`; use `self.grad` for the upstream gradient.
Tensor make_result(std::size_t rows, std::size_t cols, std::vector<float> value,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

// True when any input would make a new node differentiable.
bool any_requires_grad(std::initializer_list<const Tensor*> inputs);

// -- Differentiable operations ------------------------------------------------
// Shapes are validated; mismatches throw lmc::Error.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
// x[r, :] + row[0, :] for every r
Tensor add_row(const Tensor& x, const Tensor& row);
// x[r, :] * row[0, :] for every r
Tensor mul_row(const Tensor& x, const Tensor& row);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor square(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
// max(x, floor); gradient passes only where x > floor.
Tensor clamp_min(const Tensor& x, float floor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift);

// Multi-head causal attention over `seq_len`-row sequences stacked in rows.
// q, k: [rows x heads*dk], v: [rows x heads*dv].
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t seq_len, std::size_t heads);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
// Stacks tensors with equal column counts on top of each other.
Tensor concat_rows(const std::vector<Tensor>& parts);

// Row gather: out[r, :] = table[ids[r], :]
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Within each `seq_len`-row sequence: out[0] = start[0, :], out[t] = x[t-1].
Tensor shift_rows(const Tensor& x, const Tensor& start, std::size_t seq_len);

// Mean next-token cross-entropy in nats: logits [rows x vocab].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

// -- Gradient checking ----------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rounding_allowance = 0.0;  // at the worst coordinate
  bool passed = false;
};

// Compares the reverse-mode gradient of `fn` at `point` against central
// differences. `fn` must build a 1x1 tensor from its argument. Relative error
// per coordinate is max(0, |a - n| - r) / max(|a|, |n|, 1e-8), where
// r = 3 * FLT_EPSILON * max|f| / epsilon bounds the float32 rounding of f
// carried into the difference quotient. The numeric derivative
// combines central differences at steps epsilon and epsilon/2 (Richardson),
// which removes the O(epsilon^2) truncation term so that a step large enough
// to swamp float32 rounding can be used. Throws lmc::Error naming the
// coordinate if `fn` returns a non-finite value.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn,
                           const Tensor& point, double epsilon = 1e-2,
                           double tolerance = 1e-3);

}  // namespace lmc

#endif  // LMC_TENSOR_HPP_
