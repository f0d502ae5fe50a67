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

#include "eend/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace eend {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local Tape* g_active_tape = nullptr;

double StableSigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

[[noreturn]] void ThrowDims(const std::string& op, const Tensor& a, const Tensor& b) {
  throw DimensionError(op + ": incompatible shapes " + ShapeString(a.shape()) + " and " +
                       ShapeString(b.shape()));
}

bool Tracks(std::initializer_list<const Tensor*> inputs) {
  if (Tape::Active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

ConstMap View(const Tensor& t) {
  return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap GradView(const Tensor& t) {
  auto g = t.mutable_grad();
  return MutMap(g.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

ConstMap GradOf(const Tensor& t) {
  return ConstMap(t.grad().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Column block [offset, offset + width) of a row-major buffer with `stride`
// columns.
Strided Block(const double* data, std::size_t rows, std::size_t stride, std::size_t offset,
              std::size_t width) {
  return Strided(data + offset, static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(width),
                 Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
}

StridedMut MutBlock(double* data, std::size_t rows, std::size_t stride, std::size_t offset,
                    std::size_t width) {
  return StridedMut(data + offset, static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(width),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
}

// Fills `keep` with 0/1 flags, each 0 with probability p (resolved to 1/65536).
void DropoutFlags(std::vector<std::uint8_t>& keep, double p, std::mt19937_64& rng) {
  const auto cutoff = static_cast<std::uint64_t>(std::llround(p * 65536.0));
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (i % 4 == 0) bits = rng();
    keep[i] = (bits & 0xffff) >= cutoff ? 1 : 0;
    bits >>= 16;
  }
}

// Evaluates a matrix expression directly into a fresh tensor's storage.
template <typename Expr>
Tensor Materialize(std::size_t rows, std::size_t cols, const Expr& expr, bool track) {
  Tensor y = Tensor::Zeros({rows, cols}, track);
  MutMap(y.mutable_values().data(), static_cast<Eigen::Index>(rows),
         static_cast<Eigen::Index>(cols)).noalias() = expr;
  return y;
}

void CheckSameMatrix(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) ThrowDims(op, a, b);
}

// Applies an elementwise unary function with derivative expressed through
// (input, output).
template <typename Fwd, typename Deriv>
Tensor Unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  const bool track = Tracks({&x});
  Tensor y = Tensor::FromValues(x.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record({x}, y, [x, y, deriv]() mutable {
      auto g = y.grad();
      auto yv = y.values();
      auto xv = x.values();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  }
  return y;
}

}  // namespace

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

struct Tensor::Impl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
};

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = NumElements(shape);
  return FromValues(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::FromValues(Shape shape, std::vector<double> values, bool requires_grad) {
  if (NumElements(shape) != values.size()) {
    throw DimensionError("tensor shape " + ShapeString(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromValues({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->values.size(); }

std::size_t Tensor::rows() const {
  return impl_->shape.size() >= 2 ? impl_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (impl_->shape.empty()) return 1;
  if (impl_->shape.size() == 1) return impl_->shape[0];
  std::size_t c = 1;
  for (std::size_t i = 1; i < impl_->shape.size(); ++i) c *= impl_->shape[i];
  return c;
}

std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + ShapeString(shape()));
  return impl_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }
double& Tensor::at(std::size_t r, std::size_t c) { return impl_->values[r * cols() + c]; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::Clone() const {
  return FromValues(impl_->shape, impl_->values, impl_->requires_grad);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::Active() { return g_active_tape; }

void Tape::Record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
  records_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::Backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("Tape::Backward called twice on the same graph");
  if (loss.numel() != 1) {
    throw DimensionError("Backward needs a scalar loss, got " + ShapeString(loss.shape()));
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
  records_.clear();
  records_.shrink_to_fit();
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) ThrowDims("matmul", a, b);
  const bool track = Tracks({&a, &b});
  Tensor y = Materialize(a.rows(), b.cols(), View(a) * View(b), track);
  if (track) {
    Tape::Active()->Record({a, b}, y, [a, b, y]() mutable {
      auto g = GradOf(y);
      if (a.requires_grad()) GradView(a).noalias() += g * View(b).transpose();
      if (b.requires_grad()) GradView(b).noalias() += View(a).transpose() * g;
    });
  }
  return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) ThrowDims("matmul_nt", a, b);
  const bool track = Tracks({&a, &b});
  Tensor y = Materialize(a.rows(), b.rows(), View(a) * View(b).transpose(), track);
  if (track) {
    Tape::Active()->Record({a, b}, y, [a, b, y]() mutable {
      auto g = GradOf(y);
      if (a.requires_grad()) GradView(a).noalias() += g * View(b);
      if (b.requires_grad()) GradView(b).noalias() += g.transpose() * View(a);
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  const bool track = Tracks({&a});
  Tensor y = Materialize(a.cols(), a.rows(), View(a).transpose(), track);
  if (track) {
    Tape::Active()->Record({a}, y, [a, y]() mutable {
      GradView(a) += GradOf(y).transpose();
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  CheckSameMatrix("add", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool track = Tracks({&a, &b});
  Tensor y = Tensor::FromValues(a.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record({a, b}, y, [a, b, y]() mutable {
      auto g = y.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto d = t->mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  CheckSameMatrix("sub", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const bool track = Tracks({&a, &b});
  Tensor y = Tensor::FromValues(a.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record({a, b}, y, [a, b, y]() mutable {
      auto g = y.grad();
      if (a.requires_grad()) {
        auto d = a.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      if (b.requires_grad()) {
        auto d = b.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  CheckSameMatrix("mul", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool track = Tracks({&a, &b});
  Tensor y = Tensor::FromValues(a.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record({a, b}, y, [a, b, y]() mutable {
      auto g = y.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto d = a.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto d = b.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double factor) {
  return Unary(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.numel() != x.cols()) ThrowDims("add_row", x, bias);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  const bool track = Tracks({&x, &bias});
  Tensor y = Tensor::FromValues(x.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record({x, bias}, y, [x, bias, y, rows, cols]() mutable {
      auto g = y.grad();
      if (x.requires_grad()) {
        auto d = x.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto d = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) d[c] += g[r * cols + c];
      }
    });
  }
  return y;
}

Tensor sigmoid(const Tensor& x) {
  return Unary(x, StableSigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return Unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor swish(const Tensor& x) {
  return Unary(
      x, [](double v) { return v * StableSigmoid(v); },
      [](double v, double) {
        const double s = StableSigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor glu(const Tensor& x) {
  if (x.cols() % 2 != 0) {
    throw DimensionError("glu: odd column count in " + ShapeString(x.shape()));
  }
  const std::size_t rows = x.rows(), half = x.cols() / 2, cols = x.cols();
  std::vector<double> out(rows * half);
  std::vector<double> gate(rows * half);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < half; ++c) {
      const double s = StableSigmoid(xv[r * cols + half + c]);
      gate[r * half + c] = s;
      out[r * half + c] = xv[r * cols + c] * s;
    }
  }
  const bool track = Tracks({&x});
  Tensor y = Tensor::FromValues({rows, half}, std::move(out), track);
  if (track) {
    Tape::Active()->Record({x}, y, [x, y, gate = std::move(gate), rows, half, cols]() mutable {
      auto g = y.grad();
      auto xv = x.values();
      auto d = x.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < half; ++c) {
          const double s = gate[r * half + c];
          const double gi = g[r * half + c];
          d[r * cols + c] += gi * s;
          d[r * cols + half + c] += gi * xv[r * cols + c] * s * (1.0 - s);
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Normalization and attention primitives

Tensor softmax(const Tensor& x, bool causal) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (causal && rows > cols) {
    throw DimensionError("softmax: causal mask needs rows <= cols, got " +
                         ShapeString(x.shape()));
  }
  std::vector<double> out(rows * cols, 0.0);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t limit = causal ? r + 1 : cols;
    const double* in = xv.data() + r * cols;
    double* o = out.data() + r * cols;
    const auto n = static_cast<Eigen::Index>(limit);
    Eigen::Map<const Eigen::ArrayXd> row_in(in, n);
    Eigen::Map<Eigen::ArrayXd> row_out(o, n);
    row_out = (row_in - row_in.maxCoeff()).exp();
    row_out /= row_out.sum();
  }
  const bool track = Tracks({&x});
  Tensor y = Tensor::FromValues(x.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record({x}, y, [x, y, rows, cols]() mutable {
      auto g = y.grad();
      auto yv = y.values();
      auto d = x.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g[off + c] * yv[off + c];
        for (std::size_t c = 0; c < cols; ++c) d[off + c] += yv[off + c] * (g[off + c] - dot);
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.numel() != cols) ThrowDims("layer_norm", x, gamma);
  if (beta.numel() != cols) ThrowDims("layer_norm", x, beta);
  std::vector<double> xhat(rows * cols), inv_std(rows), out(rows * cols);
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (in[c] - mu) * inv_std[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  const bool track = Tracks({&x, &gamma, &beta});
  Tensor y = Tensor::FromValues(x.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record(
        {x, gamma, beta}, y,
        [x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
         cols]() mutable {
          auto g = y.grad();
          auto gv = gamma.values();
          if (gamma.requires_grad()) {
            auto d = gamma.mutable_grad();
            for (std::size_t i = 0; i < rows * cols; ++i) d[i % cols] += g[i] * xhat[i];
          }
          if (beta.requires_grad()) {
            auto d = beta.mutable_grad();
            for (std::size_t i = 0; i < rows * cols; ++i) d[i % cols] += g[i];
          }
          if (x.requires_grad()) {
            auto d = x.mutable_grad();
            const double n = static_cast<double>(cols);
            for (std::size_t r = 0; r < rows; ++r) {
              const std::size_t off = r * cols;
              double mean_dh = 0.0, mean_dh_h = 0.0;
              for (std::size_t c = 0; c < cols; ++c) {
                const double dh = g[off + c] * gv[c];
                mean_dh += dh;
                mean_dh_h += dh * xhat[off + c];
              }
              mean_dh /= n;
              mean_dh_h /= n;
              for (std::size_t c = 0; c < cols; ++c) {
                const double dh = g[off + c] * gv[c];
                d[off + c] += inv_std[r] * (dh - mean_dh - xhat[off + c] * mean_dh_h);
              }
            }
          }
        });
  }
  return y;
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
  const std::size_t steps = x.rows(), channels = x.cols();
  if (kernel.rows() != channels) ThrowDims("depthwise_conv1d", x, kernel);
  const std::size_t width = kernel.cols();
  if (width % 2 == 0) {
    throw DimensionError("depthwise_conv1d: kernel width must be odd, got " +
                         ShapeString(kernel.shape()));
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(width / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(steps);
  std::vector<double> out(steps * channels, 0.0);
  auto xv = x.values();
  auto kv = kernel.values();
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < width; ++k) {
      const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
      if (src < 0 || src >= n) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        out[t * channels + c] += kv[c * width + k] * xv[src * channels + c];
      }
    }
  }
  const bool track = Tracks({&x, &kernel});
  Tensor y = Tensor::FromValues({steps, channels}, std::move(out), track);
  if (track) {
    Tape::Active()->Record({x, kernel}, y, [x, kernel, y, n, channels, width, pad]() mutable {
      auto g = y.grad();
      auto xv = x.values();
      auto kv = kernel.values();
      std::span<double> dx, dk;
      if (x.requires_grad()) dx = x.mutable_grad();
      if (kernel.requires_grad()) dk = kernel.mutable_grad();
      for (std::ptrdiff_t t = 0; t < n; ++t) {
        for (std::size_t k = 0; k < width; ++k) {
          const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
          if (src < 0 || src >= n) continue;
          for (std::size_t c = 0; c < channels; ++c) {
            const double gi = g[t * channels + c];
            if (!dx.empty()) dx[src * channels + c] += gi * kv[c * width + k];
            if (!dk.empty()) dk[c * width + k] += gi * xv[src * channels + c];
          }
        }
      }
    });
  }
  return y;
}

Tensor lstm_cell(const Tensor& gates_x, const Tensor& state, const Tensor& w_hh) {
  const std::size_t hidden = w_hh.rows();
  if (w_hh.cols() != 4 * hidden) ThrowDims("lstm_cell", w_hh, gates_x);
  if (gates_x.numel() != 4 * hidden) ThrowDims("lstm_cell", gates_x, w_hh);
  if (state.numel() != 2 * hidden) ThrowDims("lstm_cell", state, w_hh);
  auto sv = state.values();
  const ConstMap h_prev(sv.data(), 1, static_cast<Eigen::Index>(hidden));
  RowMat pre = ConstMap(gates_x.values().data(), 1, static_cast<Eigen::Index>(4 * hidden)) +
               h_prev * View(w_hh);
  // act holds i, f, g, o after their nonlinearities.
  std::vector<double> act(4 * hidden), tanh_c(hidden), out(2 * hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    act[j] = StableSigmoid(pre(0, j));
    act[hidden + j] = StableSigmoid(pre(0, hidden + j));
    act[2 * hidden + j] = std::tanh(pre(0, 2 * hidden + j));
    act[3 * hidden + j] = StableSigmoid(pre(0, 3 * hidden + j));
    const double c = act[hidden + j] * sv[hidden + j] + act[j] * act[2 * hidden + j];
    tanh_c[j] = std::tanh(c);
    out[hidden + j] = c;
    out[j] = act[3 * hidden + j] * tanh_c[j];
  }
  const bool track = Tracks({&gates_x, &state, &w_hh});
  Tensor y = Tensor::FromValues({1, 2 * hidden}, std::move(out), track);
  if (track) {
    Tape::Active()->Record(
        {gates_x, state, w_hh}, y,
        [gates_x, state, w_hh, y, act = std::move(act), tanh_c = std::move(tanh_c),
         hidden]() mutable {
          auto g = y.grad();
          auto sv = state.values();
          RowMat dpre(1, static_cast<Eigen::Index>(4 * hidden));
          std::vector<double> dc_prev(hidden);
          for (std::size_t j = 0; j < hidden; ++j) {
            const double i = act[j], f = act[hidden + j], gg = act[2 * hidden + j],
                         o = act[3 * hidden + j];
            const double dh = g[j];
            const double dc = g[hidden + j] + dh * o * (1.0 - tanh_c[j] * tanh_c[j]);
            dpre(0, j) = dc * gg * i * (1.0 - i);
            dpre(0, hidden + j) = dc * sv[hidden + j] * f * (1.0 - f);
            dpre(0, 2 * hidden + j) = dc * i * (1.0 - gg * gg);
            dpre(0, 3 * hidden + j) = dh * tanh_c[j] * o * (1.0 - o);
            dc_prev[j] = dc * f;
          }
          if (gates_x.requires_grad()) {
            auto d = gates_x.mutable_grad();
            for (std::size_t k = 0; k < 4 * hidden; ++k) d[k] += dpre(0, k);
          }
          if (w_hh.requires_grad()) {
            const ConstMap h_prev(sv.data(), 1, static_cast<Eigen::Index>(hidden));
            GradView(w_hh).noalias() += h_prev.transpose() * dpre;
          }
          if (state.requires_grad()) {
            RowMat dh_prev = dpre * View(w_hh).transpose();
            auto d = state.mutable_grad();
            for (std::size_t j = 0; j < hidden; ++j) {
              d[j] += dh_prev(0, j);
              d[hidden + j] += dc_prev[j];
            }
          }
        });
  }
  return y;
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const double factor = 1.0 / (1.0 - p);
  std::vector<std::uint8_t> keep(x.numel());
  DropoutFlags(keep, p, rng);
  std::vector<double> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep[i] ? factor : 0.0;
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  const bool track = Tracks({&x});
  Tensor y = Tensor::FromValues(x.shape(), std::move(out), track);
  if (track) {
    Tape::Active()->Record({x}, y, [x, y, mask = std::move(mask)]() mutable {
      auto g = y.grad();
      auto d = x.mutable_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * mask[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Structural

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t cols = x.cols();
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + ShapeString(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(xv.begin() + begin * cols, xv.begin() + (begin + count) * cols);
  const bool track = Tracks({&x});
  Tensor y = Tensor::FromValues({count, cols}, std::move(out), track);
  if (track) {
    Tape::Active()->Record({x}, y, [x, y, begin, cols]() mutable {
      auto g = y.grad();
      auto d = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) d[begin * cols + i] += g[i];
    });
  }
  return y;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin + count > cols) {
    throw DimensionError("slice_cols: cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + ShapeString(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.begin() + r * cols + begin, count, out.begin() + r * count);
  const bool track = Tracks({&x});
  Tensor y = Tensor::FromValues({rows, count}, std::move(out), track);
  if (track) {
    Tape::Active()->Record({x}, y, [x, y, begin, count, rows, cols]() mutable {
      auto g = y.grad();
      auto d = x.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) d[r * cols + begin + c] += g[r * count + c];
    });
  }
  return y;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.cols() != cols) ThrowDims("concat_rows", parts[0], p);
    rows += p.rows();
    track = track || p.requires_grad();
  }
  track = track && Tape::Active() != nullptr;
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor y = Tensor::FromValues({rows, cols}, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    Tape::Active()->Record(inputs, y, [inputs, y]() mutable {
      auto g = y.grad();
      std::size_t off = 0;
      for (Tensor& p : inputs) {
        if (p.requires_grad()) {
          auto d = p.mutable_grad();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[off + i];
        }
        off += p.numel();
      }
    });
  }
  return y;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) ThrowDims("concat_cols", parts[0], p);
    cols += p.cols();
    track = track || p.requires_grad();
  }
  track = track && Tape::Active() != nullptr;
  std::vector<double> out(rows * cols);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    auto pv = p.values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.begin() + r * pc, pc, out.begin() + r * cols + off);
    off += pc;
  }
  Tensor y = Tensor::FromValues({rows, cols}, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    Tape::Active()->Record(inputs, y, [inputs, y, rows, cols]() mutable {
      auto g = y.grad();
      std::size_t off = 0;
      for (Tensor& p : inputs) {
        const std::size_t pc = p.cols();
        if (p.requires_grad()) {
          auto d = p.mutable_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < pc; ++c) d[r * pc + c] += g[r * cols + off + c];
        }
        off += pc;
      }
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  const std::size_t cols = x.cols();
  auto xv = x.values();
  std::vector<double> out(index.size() * cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(index[i]) + " out of " +
                           ShapeString(x.shape()));
    }
    std::copy_n(xv.begin() + index[i] * cols, cols, out.begin() + i * cols);
  }
  const bool track = Tracks({&x});
  Tensor y = Tensor::FromValues({index.size(), cols}, std::move(out), track);
  if (track) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tape::Active()->Record({x}, y, [x, y, idx = std::move(idx), cols]() mutable {
      auto g = y.grad();
      auto d = x.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) d[idx[i] * cols + c] += g[i * cols + c];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions and losses

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  const bool track = Tracks({&x});
  Tensor y = Tensor::Scalar(total, track);
  if (track) {
    Tape::Active()->Record({x}, y, [x, y]() mutable {
      const double g = y.grad()[0];
      for (double& d : x.mutable_grad()) d += g;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor bce(const Tensor& probs, const Tensor& targets) {
  CheckSameMatrix("bce", probs, targets);
  const std::size_t n = probs.numel();
  if (n == 0) return Tensor::Scalar(0.0);
  auto pv = probs.values();
  auto tv = targets.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
    total -= tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p);
  }
  const bool track = Tracks({&probs});
  Tensor y = Tensor::Scalar(total / static_cast<double>(n), track);
  if (track) {
    Tape::Active()->Record({probs}, y, [probs, targets, y, n]() mutable {
      const double g = y.grad()[0] / static_cast<double>(n);
      auto pv = probs.values();
      auto tv = targets.values();
      auto d = probs.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double p = pv[i];
        if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
        d[i] += g * (p - tv[i]) / (p * (1.0 - p));
      }
    });
  }
  return y;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  CheckSameMatrix("bce_with_logits", logits, targets);
  const std::size_t n = logits.numel();
  if (n == 0) return Tensor::Scalar(0.0);
  auto zv = logits.values();
  auto tv = targets.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = zv[i];
    total += std::max(z, 0.0) - z * tv[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const bool track = Tracks({&logits});
  Tensor y = Tensor::Scalar(total / static_cast<double>(n), track);
  if (track) {
    Tape::Active()->Record({logits}, y, [logits, targets, y, n]() mutable {
      const double g = y.grad()[0] / static_cast<double>(n);
      auto zv = logits.values();
      auto tv = targets.values();
      auto d = logits.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) d[i] += g * (StableSigmoid(zv[i]) - tv[i]);
    });
  }
  return y;
}

void RetainFreedMemory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads, bool causal, double dropout_p,
                            std::mt19937_64* rng, std::vector<Tensor>* probs) {
  const std::size_t tq = q.rows(), tk = k.rows(), dim = q.cols();
  if (k.cols() != dim || v.cols() != dim || v.rows() != tk) {
    throw DimensionError("multi_head_attention: q " + ShapeString(q.shape()) + ", k " +
                         ShapeString(k.shape()) + ", v " + ShapeString(v.shape()));
  }
  if (heads == 0 || dim % heads != 0) {
    throw DimensionError("multi_head_attention: dim " + std::to_string(dim) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  if (causal && tq > tk) {
    throw DimensionError("multi_head_attention: causal mask needs Tq <= Tk, got " +
                         std::to_string(tq) + " > " + std::to_string(tk));
  }
  if (dropout_p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const bool drop = rng != nullptr && dropout_p > 0.0;
  const double factor = drop ? 1.0 / (1.0 - dropout_p) : 1.0;
  const std::size_t hd = dim / heads;
  const double temperature = 1.0 / std::sqrt(static_cast<double>(hd));

  struct Saved {
    std::vector<RowMat> probs;
    std::vector<std::vector<std::uint8_t>> keep;
  };
  auto saved = std::make_shared<Saved>();
  saved->probs.resize(heads);
  if (drop) saved->keep.resize(heads);

  const bool track = Tracks({&q, &k, &v});
  Tensor y = Tensor::Zeros({tq, dim}, track);
  const double* qd = q.values().data();
  const double* kd = k.values().data();
  const double* vd = v.values().data();
  double* yd = y.mutable_values().data();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    RowMat& p = saved->probs[h];
    p.noalias() = temperature * Block(qd, tq, dim, off, hd) * Block(kd, tk, dim, off, hd).transpose();
    for (std::size_t r = 0; r < tq; ++r) {
      const auto limit = static_cast<Eigen::Index>(causal ? r + 1 : tk);
      auto row = p.row(static_cast<Eigen::Index>(r)).array();
      auto live = row.head(limit);
      live = (live - live.maxCoeff()).exp();
      live /= live.sum();
      row.tail(static_cast<Eigen::Index>(tk) - limit).setZero();
    }
    if (probs != nullptr) {
      probs->push_back(Tensor::FromValues({tq, tk}, std::vector<double>(p.data(), p.data() + p.size())));
    }
    auto out = MutBlock(yd, tq, dim, off, hd);
    if (drop) {
      auto& keep = saved->keep[h];
      keep.resize(tq * tk);
      DropoutFlags(keep, dropout_p, *rng);
      RowMat pd = p;
      for (std::size_t i = 0; i < keep.size(); ++i) pd.data()[i] *= keep[i] ? factor : 0.0;
      out.noalias() = pd * Block(vd, tk, dim, off, hd);
    } else {
      out.noalias() = p * Block(vd, tk, dim, off, hd);
    }
  }
  if (track) {
    Tape::Active()->Record({q, k, v}, y, [q, k, v, y, saved, heads, hd, dim, tq, tk, temperature,
                                          drop, factor]() {
      const double* gd = y.grad().data();
      const double* qd = q.values().data();
      const double* kd = k.values().data();
      const double* vd = v.values().data();
      double* dq = q.requires_grad() ? q.mutable_grad().data() : nullptr;
      double* dk = k.requires_grad() ? k.mutable_grad().data() : nullptr;
      double* dv = v.requires_grad() ? v.mutable_grad().data() : nullptr;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        const RowMat& p = saved->probs[h];
        const auto g = Block(gd, tq, dim, off, hd);
        RowMat dp = g * Block(vd, tk, dim, off, hd).transpose();
        if (drop) {
          const auto& keep = saved->keep[h];
          RowMat pd = p;
          for (std::size_t i = 0; i < keep.size(); ++i) {
            const double m = keep[i] ? factor : 0.0;
            pd.data()[i] *= m;
            dp.data()[i] *= m;
          }
          if (dv != nullptr) MutBlock(dv, tk, dim, off, hd).noalias() += pd.transpose() * g;
        } else if (dv != nullptr) {
          MutBlock(dv, tk, dim, off, hd).noalias() += p.transpose() * g;
        }
        // Softmax backward, then the score scaling.
        const Eigen::VectorXd dot = (dp.array() * p.array()).rowwise().sum();
        RowMat ds = (p.array() * (dp.array().colwise() - dot.array())).matrix() * temperature;
        if (dq != nullptr) MutBlock(dq, tq, dim, off, hd).noalias() += ds * Block(kd, tk, dim, off, hd);
        if (dk != nullptr) MutBlock(dk, tk, dim, off, hd).noalias() += ds.transpose() * Block(qd, tq, dim, off, hd);
      }
    });
  }
  return y;
}

}  // namespace eend
