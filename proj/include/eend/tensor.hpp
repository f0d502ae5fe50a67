// Copyright 2026 The eend-attractors Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEND_TENSOR_HPP_
#define EEND_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eend {

using Shape = std::vector<std::size_t>;

std::string ShapeString(const Shape& shape);
std::size_t NumElements(const Shape& shape);

/// Thrown by any op whose operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major fp64 array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Parameters live
/// for the whole run; intermediates are created by ops and released when the
/// Tape that recorded them goes away.
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Filled(Shape shape, double value, bool requires_grad = false);
  static Tensor FromValues(Shape shape, std::vector<double> values,
                           bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Matrix view: a rank-1 tensor of length n is a 1 x n row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad() const;  // allocates a zero buffer on first use
  void zero_grad();

  // Deep copy of values, detached from any graph.
  Tensor Clone() const;
  bool SameStorage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;

  friend class Tape;
};

/// Records differentiable ops executed while it is the active tape on this
/// thread. Constructing a Tape activates it; destruction restores the
/// previously active tape. Records are appended in execution order, which is a
/// topological order of the graph.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure once
  // in reverse order. A second call on the same tape throws std::logic_error.
  void Backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* Active();

  // Used by op implementations.
  void Record(std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Entry> records_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Ops below are differentiable when a Tape is active and any input requires
/// grad. Shapes are checked eagerly.

Tensor matmul(const Tensor& a, const Tensor& b);     // a . b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a . b^T
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[T x D] + bias[D] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor swish(const Tensor& x);
// Splits columns into halves [a | b] and returns a * sigmoid(b).
Tensor glu(const Tensor& x);

// Row-wise softmax. With causal=true, row i only sees columns j <= i.
Tensor softmax(const Tensor& x, bool causal = false);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// x[T x C], kernel[C x K] with K odd, zero "same" padding.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);

// Fused LSTM step. gates_x is the 1 x 4H input projection (bias included),
// state is [h | c] as 1 x 2H, w_hh is H x 4H. Gate order i, f, g, o.
// Returns the next [h | c].
Tensor lstm_cell(const Tensor& gates_x, const Tensor& state, const Tensor& w_hh);

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

// Fused multi-head scaled dot-product attention. q is Tq x D, k and v are
// Tk x D, and head h owns columns [h*D/heads, (h+1)*D/heads). With
// causal=true query i sees keys j <= i. Dropout with probability dropout_p is
// applied to the attention probabilities when rng is non-null. If probs is
// given it receives each head's Tq x Tk probabilities (before dropout).
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads, bool causal, double dropout_p,
                            std::mt19937_64* rng, std::vector<Tensor>* probs = nullptr);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean binary cross-entropy of probabilities against constant targets.
// Probabilities are clamped to [kProbClamp, 1 - kProbClamp].
Tensor bce(const Tensor& probs, const Tensor& targets);
// Mean binary cross-entropy computed from logits (stable form).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Asks the C allocator to keep large freed blocks for reuse instead of
// returning them to the OS. Graphs allocate and free many T x T buffers per
// step; without this every step pays fresh page faults. No-op off glibc.
void RetainFreedMemory();

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kLayerNormEps = 1e-5;

}  // namespace eend

#endif  // EEND_TENSOR_HPP_
