// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "lmc/kernels.hpp"

namespace lmc {

namespace detail {

std::span<float> Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  return grad;
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(std::size_t rows, std::size_t cols,
                                       std::vector<float> value) {
  auto node = std::make_shared<detail::Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  return node;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch " +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
}

// Elementwise unary op helper: forward f(x), backward uses df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  std::vector<float> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.rows(), x.cols(), std::move(out), {x},
                     [df](detail::Node& self) {
                       auto& in = *self.parents[0];
                       if (!in.requires_grad) return;
                       auto g = in.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * df(in.value[i], self.value[i]);
                     });
}

}  // namespace

// -- Tensor -------------------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return full(rows, cols, 0.0f, requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, float value,
                    bool requires_grad) {
  auto node = new_node(rows, cols, std::vector<float>(rows * cols, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(std::vector<float> values, std::size_t rows,
                    std::size_t cols, bool requires_grad) {
  require(values.size() == rows * cols, "Tensor::from: size mismatch");
  auto node = new_node(rows, cols, std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return full(1, 1, value, requires_grad);
}

float Tensor::item() const {
  require(size() == 1, "Tensor::item: tensor is not 1x1");
  return node_->value[0];
}

std::span<float> Tensor::grad() { return node_->ensure_grad(); }

std::span<const float> Tensor::grad() const { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

void Tensor::backward() {
  require(size() == 1, "backward(): tensor is not a scalar");
  const float one = 1.0f;
  backward(std::span<const float>(&one, 1));
}

void Tensor::backward(std::span<const float> upstream) {
  require(upstream.size() == size(), "backward(): upstream size mismatch");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS for a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  auto g = node_->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  return Tensor(new_node(rows(), cols(), node_->value));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_result(std::size_t rows, std::size_t cols, std::vector<float> value,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  auto node = new_node(rows, cols, std::move(value));
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

// -- Linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw Error("matmul: inner dimension mismatch " + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()));
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<float> out(n * m);
  kernels::matmul(a.values(), b.values(), out, n, k, m);
  return make_result(n, m, std::move(out), {a, b},
                     [n, k, m](detail::Node& self) {
                       auto& an = *self.parents[0];
                       auto& bn = *self.parents[1];
                       if (an.requires_grad)
                         kernels::matmul_grad_a(self.grad, bn.value,
                                                an.ensure_grad(), n, k, m);
                       if (bn.requires_grad)
                         kernels::matmul_grad_b(an.value, self.grad,
                                                bn.ensure_grad(), n, k, m);
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b},
                     [](detail::Node& self) {
                       for (auto& p : self.parents) {
                         if (!p->requires_grad) continue;
                         auto g = p->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b},
                     [](detail::Node& self) {
                       for (std::size_t k = 0; k < 2; ++k) {
                         auto& p = *self.parents[k];
                         if (!p.requires_grad) continue;
                         const float sign = k == 0 ? 1.0f : -1.0f;
                         auto g = p.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += sign * self.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b},
                     [](detail::Node& self) {
                       auto& an = *self.parents[0];
                       auto& bn = *self.parents[1];
                       if (an.requires_grad) {
                         auto g = an.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i] * bn.value[i];
                       }
                       if (bn.requires_grad) {
                         auto g = bn.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i] * an.value[i];
                       }
                     });
}

Tensor scale(const Tensor& a, float s) {
  return unary(
      a, [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Tensor add_scalar(const Tensor& a, float s) {
  return unary(
      a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row: bad row shape");
  const std::size_t cols = x.cols();
  std::vector<float> out(x.size());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = x.values()[r * cols + c] + row.values()[c];
  return make_result(x.rows(), cols, std::move(out), {x, row},
                     [cols](detail::Node& self) {
                       auto& xn = *self.parents[0];
                       auto& rn = *self.parents[1];
                       if (xn.requires_grad) {
                         auto g = xn.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                       if (rn.requires_grad) {
                         auto g = rn.ensure_grad();
                         for (std::size_t r = 0; r < self.rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c)
                             g[c] += self.grad[r * cols + c];
                       }
                     });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == x.cols(), "mul_row: bad row shape");
  const std::size_t cols = x.cols();
  std::vector<float> out(x.size());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = x.values()[r * cols + c] * row.values()[c];
  return make_result(x.rows(), cols, std::move(out), {x, row},
                     [cols](detail::Node& self) {
                       auto& xn = *self.parents[0];
                       auto& rn = *self.parents[1];
                       if (xn.requires_grad) {
                         auto g = xn.ensure_grad();
                         for (std::size_t r = 0; r < self.rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c)
                             g[r * cols + c] +=
                                 self.grad[r * cols + c] * rn.value[c];
                       }
                       if (rn.requires_grad) {
                         auto g = rn.ensure_grad();
                         for (std::size_t r = 0; r < self.rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c)
                             g[c] += self.grad[r * cols + c] *
                                     xn.value[r * cols + c];
                       }
                     });
}

// -- Elementwise nonlinearities ---------------------------------------------

Tensor exp(const Tensor& x) {
  return unary(
      x, [](float v) { return std::exp(v); },
      [](float, float y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](float v) { return std::log(v); },
      [](float v, float) { return 1.0f / v; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x,
      [](float v) {
        return v > 20.0f ? v : std::log1p(std::exp(v));
      },
      [](float v, float) { return 1.0f / (1.0f + std::exp(-v)); });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](float v) { return v * v; },
      [](float v, float) { return 2.0f * v; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](float v) { return kernels::gelu(v); },
      [](float v, float) { return kernels::gelu_derivative(v); });
}

Tensor clamp_min(const Tensor& x, float floor) {
  return unary(
      x, [floor](float v) { return v > floor ? v : floor; },
      [floor](float v, float) { return v > floor ? 1.0f : 0.0f; });
}

// -- Reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (float v : x.values()) total += v;
  return make_result(1, 1, {static_cast<float>(total)}, {x},
                     [](detail::Node& self) {
                       auto& in = *self.parents[0];
                       if (!in.requires_grad) return;
                       auto g = in.ensure_grad();
                       for (auto& v : g) v += self.grad[0];
                     });
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(x.size()));
}

// -- Layers -------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift) {
  const std::size_t rows = x.rows(), width = x.cols();
  require(gain.size() == width && shift.size() == width,
          "layer_norm: gain/shift width mismatch");
  std::vector<float> out(rows * width);
  auto xhat = std::make_shared<std::vector<float>>(rows * width);
  auto rstd = std::make_shared<std::vector<float>>(rows);
  kernels::layer_norm(x.values(), gain.values(), shift.values(), out, *xhat,
                      *rstd, rows, width);
  return make_result(
      rows, width, std::move(out), {x, gain, shift},
      [xhat, rstd, rows, width](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& sn = *self.parents[2];
        std::vector<float> dx_scratch;
        std::span<float> dx;
        if (xn.requires_grad) {
          dx = xn.ensure_grad();
        } else {
          dx_scratch.assign(rows * width, 0.0f);
          dx = dx_scratch;
        }
        std::vector<float> dg_scratch, ds_scratch;
        std::span<float> dg, ds;
        if (gn.requires_grad) {
          dg = gn.ensure_grad();
        } else {
          dg_scratch.assign(width, 0.0f);
          dg = dg_scratch;
        }
        if (sn.requires_grad) {
          ds = sn.ensure_grad();
        } else {
          ds_scratch.assign(width, 0.0f);
          ds = ds_scratch;
        }
        kernels::layer_norm_grad(self.grad, *xhat, *rstd, gn.value, dx, dg, ds,
                                 rows, width);
      });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t seq_len, std::size_t heads) {
  require(seq_len > 0 && heads > 0, "causal_attention: zero seq_len/heads");
  require(q.rows() == k.rows() && q.rows() == v.rows(),
          "causal_attention: row mismatch");
  require(q.cols() == k.cols(), "causal_attention: q/k width mismatch");
  require(q.rows() % seq_len == 0,
          "causal_attention: rows not a multiple of seq_len");
  require(q.cols() % heads == 0 && v.cols() % heads == 0,
          "causal_attention: width not divisible by heads");
  kernels::AttentionShape shape;
  shape.batch = q.rows() / seq_len;
  shape.seq_len = seq_len;
  shape.heads = heads;
  shape.head_dim_qk = q.cols() / heads;
  shape.head_dim_v = v.cols() / heads;
  std::vector<float> out(q.rows() * v.cols());
  auto probs = std::make_shared<std::vector<float>>(shape.batch * heads *
                                                    seq_len * seq_len);
  kernels::attention(q.values(), k.values(), v.values(), out, *probs, shape);
  return make_result(
      q.rows(), v.cols(), std::move(out), {q, k, v},
      [probs, shape](detail::Node& self) {
        auto& qn = *self.parents[0];
        auto& kn = *self.parents[1];
        auto& vn = *self.parents[2];
        std::vector<float> dq(qn.value.size()), dk(kn.value.size()),
            dv(vn.value.size());
        kernels::attention_grad(qn.value, kn.value, vn.value, *probs,
                                self.grad, dq, dk, dv, shape);
        auto accumulate = [](detail::Node& n, const std::vector<float>& d) {
          if (!n.requires_grad) return;
          auto g = n.ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
        };
        accumulate(qn, dq);
        accumulate(kn, dk);
        accumulate(vn, dv);
      });
}

// -- Reshaping ----------------------------------------------------------------

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows(), "concat_cols: row mismatch");
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<float> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.values().data() + r * cb, cb,
                out.data() + r * (ca + cb) + ca);
  }
  return make_result(rows, ca + cb, std::move(out), {a, b},
                     [ca, cb](detail::Node& self) {
                       auto& an = *self.parents[0];
                       auto& bn = *self.parents[1];
                       for (std::size_t r = 0; r < self.rows; ++r) {
                         const float* g = self.grad.data() + r * (ca + cb);
                         if (an.requires_grad) {
                           auto ga = an.ensure_grad();
                           for (std::size_t c = 0; c < ca; ++c)
                             ga[r * ca + c] += g[c];
                         }
                         if (bn.requires_grad) {
                           auto gb = bn.ensure_grad();
                           for (std::size_t c = 0; c < cb; ++c)
                             gb[r * cb + c] += g[ca + c];
                         }
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require(begin + count <= x.cols(), "slice_cols: out of range");
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<float> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.values().data() + r * cols + begin, count,
                out.data() + r * count);
  return make_result(rows, count, std::move(out), {x},
                     [begin, count, cols](detail::Node& self) {
                       auto& in = *self.parents[0];
                       if (!in.requires_grad) return;
                       auto g = in.ensure_grad();
                       for (std::size_t r = 0; r < self.rows; ++r)
                         for (std::size_t c = 0; c < count; ++c)
                           g[r * cols + begin + c] += self.grad[r * count + c];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require(begin + count <= x.rows(), "slice_rows: out of range");
  const std::size_t cols = x.cols();
  std::vector<float> out(x.values().begin() + begin * cols,
                         x.values().begin() + (begin + count) * cols);
  return make_result(count, cols, std::move(out), {x},
                     [begin, cols](detail::Node& self) {
                       auto& in = *self.parents[0];
                       if (!in.requires_grad) return;
                       auto g = in.ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         g[begin * cols + i] += self.grad[i];
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  std::vector<float> out;
  out.reserve(rows * cols);
  for (const auto& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result(rows, cols, std::move(out), parts,
                     [](detail::Node& self) {
                       std::size_t offset = 0;
                       for (auto& p : self.parents) {
                         if (p->requires_grad) {
                           auto g = p->ensure_grad();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             g[i] += self.grad[offset + i];
                         }
                         offset += p->value.size();
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const std::size_t cols = table.cols();
  std::vector<float> out(ids.size() * cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= table.rows())
      throw Error("embedding: id " + std::to_string(ids[r]) + " out of range");
    std::copy_n(table.values().data() + ids[r] * cols, cols,
                out.data() + r * cols);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return make_result(ids.size(), cols, std::move(out), {table},
                     [saved = std::move(saved), cols](detail::Node& self) {
                       auto& tn = *self.parents[0];
                       if (!tn.requires_grad) return;
                       auto g = tn.ensure_grad();
                       for (std::size_t r = 0; r < saved.size(); ++r)
                         for (std::size_t c = 0; c < cols; ++c)
                           g[saved[r] * cols + c] += self.grad[r * cols + c];
                     });
}

Tensor shift_rows(const Tensor& x, const Tensor& start, std::size_t seq_len) {
  require(start.rows() == 1 && start.cols() == x.cols(),
          "shift_rows: bad start token shape");
  require(seq_len > 0 && x.rows() % seq_len == 0,
          "shift_rows: rows not a multiple of seq_len");
  const std::size_t cols = x.cols();
  std::vector<float> out(x.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const float* src = r % seq_len == 0 ? start.values().data()
                                        : x.values().data() + (r - 1) * cols;
    std::copy_n(src, cols, out.data() + r * cols);
  }
  return make_result(
      x.rows(), cols, std::move(out), {x, start},
      [seq_len, cols](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& sn = *self.parents[1];
        for (std::size_t r = 0; r < self.rows; ++r) {
          const float* g = self.grad.data() + r * cols;
          if (r % seq_len == 0) {
            if (sn.requires_grad) {
              auto gs = sn.ensure_grad();
              for (std::size_t c = 0; c < cols; ++c) gs[c] += g[c];
            }
          } else if (xn.requires_grad) {
            auto gx = xn.ensure_grad();
            for (std::size_t c = 0; c < cols; ++c)
              gx[(r - 1) * cols + c] += g[c];
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t rows = logits.rows(), vocab = logits.cols();
  require(targets.size() == rows, "cross_entropy: target count mismatch");
  auto probs = std::make_shared<std::vector<float>>(rows * vocab);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* z = logits.values().data() + r * vocab;
    float* p = probs->data() + r * vocab;
    const float zmax = *std::max_element(z, z + vocab);
    double denom = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) {
      p[c] = std::exp(z[c] - zmax);
      denom += p[c];
    }
    for (std::size_t c = 0; c < vocab; ++c)
      p[c] = static_cast<float>(p[c] / denom);
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab)
      throw Error("cross_entropy: target out of range");
    total += -(z[targets[r]] - zmax - std::log(denom));
  }
  std::vector<int> saved(targets.begin(), targets.end());
  return make_result(
      1, 1, {static_cast<float>(total / static_cast<double>(rows))}, {logits},
      [probs, saved = std::move(saved), rows, vocab](detail::Node& self) {
        auto& ln = *self.parents[0];
        if (!ln.requires_grad) return;
        auto g = ln.ensure_grad();
        const float s = self.grad[0] / static_cast<float>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < vocab; ++c)
            g[r * vocab + c] += s * (*probs)[r * vocab + c];
          g[r * vocab + saved[r]] -= s;
        }
      });
}

// -- Gradient check -------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn,
                           const Tensor& point, double epsilon,
                           double tolerance) {
  if (!(epsilon > 0.0)) throw Error("grad_check: epsilon must be positive");
  Tensor x = Tensor::from(std::vector<float>(point.values().begin(),
                                             point.values().end()),
                          point.rows(), point.cols(), true);
  Tensor y = fn(x);
  if (!std::isfinite(y.item()))
    throw Error("grad_check: non-finite value at the base point");
  y.backward();
  std::vector<float> analytic(x.grad().begin(), x.grad().end());

  const double base = std::abs(static_cast<double>(y.item()));
  auto eval = [&](std::size_t i, double delta) {
    NoGradGuard guard;
    std::vector<float> v(point.values().begin(), point.values().end());
    v[i] = static_cast<float>(static_cast<double>(v[i]) + delta);
    const double out =
        fn(Tensor::from(std::move(v), point.rows(), point.cols())).item();
    if (!std::isfinite(out))
      throw Error("grad_check: non-finite value at coordinate " +
                  std::to_string(i));
    return out;
  };
  // Perturb by the float-representable step actually applied.
  auto applied = [&](std::size_t i, double delta) {
    const float base_value = point.values()[i];
    return static_cast<double>(static_cast<float>(base_value + delta)) -
           base_value;
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double h1 = epsilon, h2 = epsilon / 2;
    const double f1p = eval(i, h1), f1m = eval(i, -h1);
    const double f2p = eval(i, h2), f2m = eval(i, -h2);
    const double d1 = (f1p - f1m) / (applied(i, h1) - applied(i, -h1));
    const double d2 = (f2p - f2m) / (applied(i, h2) - applied(i, -h2));
    const double numeric = (4.0 * d2 - d1) / 3.0;
    const double scale = std::max({base, std::abs(f1p), std::abs(f1m),
                                   std::abs(f2p), std::abs(f2m)});
    const double allowance =
        3.0 * std::numeric_limits<float>::epsilon() * scale / epsilon;
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::max(0.0, std::abs(a - numeric) - allowance) / denom;
    if (i == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic = a;
      report.numeric = numeric;
      report.rounding_allowance = allowance;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace lmc
