#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tmr/rng.hpp"

namespace tmr {

using Shape = std::vector<std::size_t>;

enum class RunMode { Train, Eval };
enum class PadMode { Valid, ReplicateRight };

std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense 64-bit tensor participating in a reverse-mode graph. Handles share
// the underlying node; forward results are treated as immutable once
// produced. Only leaf tensors (parameters, inputs) may be mutated in place.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor row(std::span<const double> data, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;

  double item() const;  // single-element tensors
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  std::span<const double> values() const;
  // In-place access for parameter updates; never call on graph interiors.
  std::span<double> mutable_values();

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  std::uint64_t value_hash() const;  // FNV-1a over shape and raw values

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Scoped suppression of graph recording, for evaluation paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- primitives ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// x: [m x n], bias: [n] or [1 x n], broadcast over rows.
Tensor add_rowvec(const Tensor& x, const Tensor& bias);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
// Normalizes along `axis` (negative counts from the end).
Tensor softmax(const Tensor& x, int axis = -1);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// x: [L x d_in], kernels: [k x d_in x d_out], odd k, zero padding keeps L.
Tensor conv1d_temporal(const Tensor& x, const Tensor& kernels);
// x: [L x d]; ReplicateRight pads k-1 copies of the last row.
Tensor max_pool1d(const Tensor& x, std::size_t k, std::size_t stride,
                  PadMode pad);
// Elementwise max over same-shaped inputs; ties route to the first input.
Tensor vmax(const std::vector<Tensor>& xs);
Tensor vmean(const std::vector<Tensor>& xs);
// Normalizes the last axis per slice: zero mean, unit variance, then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Inverted scaling: eval mode is the identity; train mode zeroes with
// probability `rate` and rescales survivors by 1/(1-rate).
Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng& rng);
// logits: [C] or [1 x C]; returns -log softmax(logits)[target] as a scalar.
Tensor cross_entropy(const Tensor& logits, std::size_t target);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Reverse pass from a scalar loss. Repeated calls without zero_grad
// accumulate into leaf gradients.
void backward(const Tensor& loss);

}  // namespace tmr
