#include "tmr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "tmr/errors.hpp"

namespace tmr {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

thread_local int g_no_grad_depth = 0;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void check_positive_shape(const Shape& s) {
  for (std::size_t d : s)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
}

NodePtr fresh_node(Shape shape, std::vector<double> value) {
  check_positive_shape(shape);
  if (shape_numel(shape) != value.size())
    throw ShapeError("value length " + std::to_string(value.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> backward_fn) {
  auto n = fresh_node(std::move(shape), std::move(value));
  bool record = grad_enabled();
  if (record) {
    record = false;
    for (const auto& p : parents)
      if (p->requires_grad) record = true;
  }
  if (record) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(n);
}

const NodePtr& expect(const Tensor& t, const char* what) {
  if (!t.defined()) throw ContractError(std::string(what) + ": undefined tensor");
  return t.node();
}

void expect_rank2(const TensorNode& n, const char* what) {
  if (n.shape.size() != 2)
    throw ShapeError(std::string(what) + ": expected rank-2 tensor, got shape " + shape_str(n.shape));
}

void expect_same_shape(const TensorNode& a, const TensorNode& b, const char* what) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
}

void expect_finite(const TensorNode& n, const char* what) {
  for (double v : n.value)
    if (!std::isfinite(v))
      throw NumericError(std::string(what) + ": non-finite input value");
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_positive_shape(shape);
  std::vector<double> data(shape_numel(shape), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = fresh_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::row(std::span<const double> data, bool requires_grad) {
  return from_data({1, data.size()}, std::vector<double>(data.begin(), data.end()), requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  check_positive_shape(shape);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return expect(*this, "shape")->shape; }
std::size_t Tensor::size() const { return expect(*this, "size")->value.size(); }
std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::rows() const {
  expect_rank2(*expect(*this, "rows"), "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  expect_rank2(*expect(*this, "cols"), "cols");
  return node_->shape[1];
}

double Tensor::item() const {
  const auto& n = expect(*this, "item");
  if (n->value.size() != 1)
    throw ContractError("item: tensor has " + std::to_string(n->value.size()) + " elements");
  return n->value[0];
}

double Tensor::at(std::size_t i) const {
  const auto& n = expect(*this, "at");
  if (i >= n->value.size()) throw IndexError("at: index out of range");
  return n->value[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  const auto& n = expect(*this, "at");
  expect_rank2(*n, "at");
  if (i >= n->shape[0] || j >= n->shape[1]) throw IndexError("at: index out of range");
  return n->value[i * n->shape[1] + j];
}

std::span<const double> Tensor::values() const {
  return expect(*this, "values")->value;
}

std::span<double> Tensor::mutable_values() {
  return expect(*this, "mutable_values")->value;
}

bool Tensor::requires_grad() const { return expect(*this, "requires_grad")->requires_grad; }

bool Tensor::has_grad() const {
  const auto& n = expect(*this, "has_grad");
  return n->grad.size() == n->value.size();
}

std::span<const double> Tensor::grad() const {
  const auto& n = expect(*this, "grad");
  if (!has_grad()) throw StateError("grad: no gradient populated");
  return n->grad;
}

std::span<double> Tensor::mutable_grad() {
  const auto& n = expect(*this, "mutable_grad");
  if (!has_grad()) throw StateError("mutable_grad: no gradient populated");
  return n->grad;
}

void Tensor::zero_grad() {
  const auto& n = expect(*this, "zero_grad");
  n->grad.clear();
}

std::uint64_t Tensor::value_hash() const {
  const auto& n = expect(*this, "value_hash");
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t d : n->shape) mix(&d, sizeof(d));
  mix(n->value.data(), n->value.size() * sizeof(double));
  return h;
}

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& na = expect(a, "add");
  const auto& nb = expect(b, "add");
  expect_same_shape(*na, *nb, "add");
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->value[i] + nb->value[i];
  return make_op(na->shape, std::move(out), {na, nb}, [](TensorNode& self) {
    for (int side = 0; side < 2; ++side) {
      auto& p = *self.parents[side];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto& na = expect(a, "sub");
  const auto& nb = expect(b, "sub");
  expect_same_shape(*na, *nb, "sub");
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->value[i] - nb->value[i];
  return make_op(na->shape, std::move(out), {na, nb}, [](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto& na = expect(a, "mul");
  const auto& nb = expect(b, "mul");
  expect_same_shape(*na, *nb, "mul");
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->value[i] * nb->value[i];
  return make_op(na->shape, std::move(out), {na, nb}, [](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  const auto& na = expect(a, "scale");
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->value[i] * s;
  return make_op(na->shape, std::move(out), {na}, [s](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * s;
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& bias) {
  const auto& nx = expect(x, "add_rowvec");
  const auto& nb = expect(bias, "add_rowvec");
  expect_rank2(*nx, "add_rowvec");
  const std::size_t m = nx->shape[0], n = nx->shape[1];
  if (nb->value.size() != n)
    throw ShapeError("add_rowvec: bias length " + std::to_string(nb->value.size()) +
                     " vs row width " + std::to_string(n));
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = nx->value[i * n + j] + nb->value[j];
  return make_op(nx->shape, std::move(out), {nx, nb}, [m, n](TensorNode& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
    }
  });
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = expect(a, "matmul");
  const auto& nb = expect(b, "matmul");
  expect_rank2(*na, "matmul");
  expect_rank2(*nb, "matmul");
  const std::size_t m = na->shape[0], k = na->shape[1];
  const std::size_t k2 = nb->shape[0], n = nb->shape[1];
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(na->shape) +
                     " x " + shape_str(nb->shape));
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = na->value[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &nb->value[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return make_op({m, n}, std::move(out), {na, nb}, [m, k, n](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = g . B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = &self.grad[i * n];
          const double* brow = &pb.value[p * n];
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          pa.grad[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T . g
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
          const double av = pa.value[i * k + p];
          if (av == 0.0) continue;
          const double* grow = &self.grad[i * n];
          double* brow = &pb.grad[p * n];
          for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const auto& na = expect(a, "transpose");
  expect_rank2(*na, "transpose");
  const std::size_t m = na->shape[0], n = na->shape[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = na->value[i * n + j];
  return make_op({n, m}, std::move(out), {na}, [m, n](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
  });
}

// ---- activations ------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
  const auto& nx = expect(x, "sigmoid");
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-nx->value[i]));
  return make_op(nx->shape, std::move(out), {nx}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      p.grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh(const Tensor& x) {
  const auto& nx = expect(x, "tanh");
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(nx->value[i]);
  return make_op(nx->shape, std::move(out), {nx}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      p.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor relu(const Tensor& x) {
  const auto& nx = expect(x, "relu");
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, nx->value[i]);
  return make_op(nx->shape, std::move(out), {nx}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
  });
}

// ---- softmax ----------------------------------------------------------------

namespace {

// Iterates slices of `shape` along `axis`: outer x axis_len x inner layout.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, int axis) {
  const int r = static_cast<int>(shape.size());
  int ax = axis < 0 ? r + axis : axis;
  if (ax < 0 || ax >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  AxisView v;
  for (int i = 0; i < ax; ++i) v.outer *= shape[i];
  v.len = shape[ax];
  for (int i = ax + 1; i < r; ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const auto& nx = expect(x, "softmax");
  expect_finite(*nx, "softmax");
  const AxisView v = axis_view(nx->shape, axis);
  std::vector<double> out(nx->value.size());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v.len; ++i)
        mx = std::max(mx, nx->value[base + i * v.inner]);
      double s = 0.0;
      for (std::size_t i = 0; i < v.len; ++i) {
        const double e = std::exp(nx->value[base + i * v.inner] - mx);
        out[base + i * v.inner] = e;
        s += e;
      }
      for (std::size_t i = 0; i < v.len; ++i) out[base + i * v.inner] /= s;
    }
  return make_op(nx->shape, std::move(out), {nx}, [v](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.len * v.inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < v.len; ++i) {
          const std::size_t idx = base + i * v.inner;
          dot += self.grad[idx] * self.value[idx];
        }
        for (std::size_t i = 0; i < v.len; ++i) {
          const std::size_t idx = base + i * v.inner;
          p.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
  });
}

// ---- shape ops ---------------------------------------------------------------

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const auto& na = expect(a, "concat_cols");
  const auto& nb = expect(b, "concat_cols");
  expect_rank2(*na, "concat_cols");
  expect_rank2(*nb, "concat_cols");
  if (na->shape[0] != nb->shape[0])
    throw ShapeError("concat_cols: row counts differ, " + shape_str(na->shape) +
                     " vs " + shape_str(nb->shape));
  const std::size_t m = na->shape[0], ca = na->shape[1], cb = nb->shape[1];
  std::vector<double> out(m * (ca + cb));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(&na->value[i * ca], ca, &out[i * (ca + cb)]);
    std::copy_n(&nb->value[i * cb], cb, &out[i * (ca + cb) + ca]);
  }
  return make_op({m, ca + cb}, std::move(out), {na, nb}, [m, ca, cb](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const std::size_t w = ca + cb;
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < ca; ++j) pa.grad[i * ca + j] += self.grad[i * w + j];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cb; ++j) pb.grad[i * cb + j] += self.grad[i * w + ca + j];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const auto& nx = expect(x, "slice_cols");
  expect_rank2(*nx, "slice_cols");
  const std::size_t m = nx->shape[0], n = nx->shape[1];
  if (begin >= end || end > n)
    throw IndexError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for width " + std::to_string(n));
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(&nx->value[i * n + begin], w, &out[i * w]);
  return make_op({m, w}, std::move(out), {nx}, [m, n, begin, w](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) p.grad[i * n + begin + j] += self.grad[i * w + j];
  });
}

// ---- temporal ops -------------------------------------------------------------

Tensor conv1d_temporal(const Tensor& x, const Tensor& kernels) {
  const auto& nx = expect(x, "conv1d_temporal");
  const auto& nk = expect(kernels, "conv1d_temporal");
  expect_rank2(*nx, "conv1d_temporal");
  if (nk->shape.size() != 3)
    throw ShapeError("conv1d_temporal: kernels must be [k x d_in x d_out], got " +
                     shape_str(nk->shape));
  const std::size_t L = nx->shape[0], din = nx->shape[1];
  const std::size_t k = nk->shape[0], kin = nk->shape[1], dout = nk->shape[2];
  if (k % 2 == 0)
    throw ConfigError("conv1d_temporal: kernel size must be odd, got " + std::to_string(k));
  if (kin != din)
    throw ShapeError("conv1d_temporal: input width " + std::to_string(din) +
                     " vs kernel d_in " + std::to_string(kin));
  const std::size_t r = k / 2;
  std::vector<double> out(L * dout, 0.0);
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t tau = 0; tau < k; ++tau) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p + tau) - static_cast<std::ptrdiff_t>(r);
      if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
      const double* xrow = &nx->value[static_cast<std::size_t>(q) * din];
      const double* kslab = &nk->value[tau * din * dout];
      double* orow = &out[p * dout];
      for (std::size_t ci = 0; ci < din; ++ci) {
        const double xv = xrow[ci];
        if (xv == 0.0) continue;
        const double* kr = &kslab[ci * dout];
        for (std::size_t co = 0; co < dout; ++co) orow[co] += xv * kr[co];
      }
    }
  return make_op({L, dout}, std::move(out), {nx, nk}, [L, din, k, dout, r](TensorNode& self) {
    auto& px = *self.parents[0];
    auto& pk = *self.parents[1];
    for (std::size_t p = 0; p < L; ++p)
      for (std::size_t tau = 0; tau < k; ++tau) {
        const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p + tau) - static_cast<std::ptrdiff_t>(r);
        if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
        const double* grow = &self.grad[p * dout];
        if (px.requires_grad) {
          px.ensure_grad();
          const double* kslab = &pk.value[tau * din * dout];
          double* xgrow = &px.grad[static_cast<std::size_t>(q) * din];
          for (std::size_t ci = 0; ci < din; ++ci) {
            double acc = 0.0;
            const double* kr = &kslab[ci * dout];
            for (std::size_t co = 0; co < dout; ++co) acc += kr[co] * grow[co];
            xgrow[ci] += acc;
          }
        }
        if (pk.requires_grad) {
          pk.ensure_grad();
          const double* xrow = &px.value[static_cast<std::size_t>(q) * din];
          double* kgslab = &pk.grad[tau * din * dout];
          for (std::size_t ci = 0; ci < din; ++ci) {
            const double xv = xrow[ci];
            if (xv == 0.0) continue;
            double* kgr = &kgslab[ci * dout];
            for (std::size_t co = 0; co < dout; ++co) kgr[co] += xv * grow[co];
          }
        }
      }
  });
}

Tensor max_pool1d(const Tensor& x, std::size_t k, std::size_t stride, PadMode pad) {
  const auto& nx = expect(x, "max_pool1d");
  expect_rank2(*nx, "max_pool1d");
  if (k < 1 || stride < 1)
    throw ConfigError("max_pool1d: kernel and stride must be >= 1");
  const std::size_t L = nx->shape[0], d = nx->shape[1];
  const std::size_t padded = pad == PadMode::ReplicateRight ? L + k - 1 : L;
  if (padded < k)
    throw ConfigError("max_pool1d: window " + std::to_string(k) +
                      " larger than padded input length " + std::to_string(padded));
  const std::size_t Lout = (padded - k) / stride + 1;
  std::vector<double> out(Lout * d, 0.0);
  // Source row index of the winning element; pads resolve to the last row.
  std::vector<std::uint32_t> argmax(Lout * d, 0);
  for (std::size_t p = 0; p < Lout; ++p)
    for (std::size_t c = 0; c < d; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_src = 0;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t src = std::min(p * stride + i, L - 1);
        const double v = nx->value[src * d + c];
        if (v > best) {
          best = v;
          best_src = src;
        }
      }
      out[p * d + c] = best;
      argmax[p * d + c] = static_cast<std::uint32_t>(best_src);
    }
  return make_op({Lout, d}, std::move(out), {nx},
                 [d, am = std::move(argmax)](TensorNode& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     const std::size_t c = i % d;
                     p.grad[am[i] * d + c] += self.grad[i];
                   }
                 });
}

Tensor vmax(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("vmax: empty input list");
  if (xs.size() > 255) throw ContractError("vmax: too many inputs");
  std::vector<NodePtr> parents;
  parents.reserve(xs.size());
  for (const auto& x : xs) parents.push_back(expect(x, "vmax"));
  for (std::size_t i = 1; i < parents.size(); ++i)
    expect_same_shape(*parents[0], *parents[i], "vmax");
  const std::size_t n = parents[0]->value.size();
  std::vector<double> out(parents[0]->value);
  std::vector<std::uint8_t> winner(n, 0);
  for (std::size_t b = 1; b < parents.size(); ++b)
    for (std::size_t i = 0; i < n; ++i)
      if (parents[b]->value[i] > out[i]) {
        out[i] = parents[b]->value[i];
        winner[i] = static_cast<std::uint8_t>(b);
      }
  Shape shape = parents[0]->shape;
  return make_op(std::move(shape), std::move(out), std::move(parents),
                 [w = std::move(winner)](TensorNode& self) {
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     auto& p = *self.parents[w[i]];
                     if (!p.requires_grad) continue;
                     p.ensure_grad();
                     p.grad[i] += self.grad[i];
                   }
                 });
}

Tensor vmean(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("vmean: empty input list");
  Tensor acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

// ---- normalization ------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto& nx = expect(x, "layer_norm");
  const auto& ng = expect(gain, "layer_norm");
  const auto& nb = expect(bias, "layer_norm");
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
  if (nx->shape.empty()) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = nx->shape.back();
  if (ng->value.size() != d || nb->value.size() != d)
    throw ShapeError("layer_norm: gain/bias width mismatch with " + shape_str(nx->shape));
  const std::size_t slices = nx->value.size() / d;
  std::vector<double> out(nx->value.size());
  std::vector<double> inv_std(slices), means(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    const double* row = &nx->value[s * d];
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    means[s] = mu;
    inv_std[s] = istd;
    for (std::size_t i = 0; i < d; ++i)
      out[s * d + i] = (row[i] - mu) * istd * ng->value[i] + nb->value[i];
  }
  return make_op(nx->shape, std::move(out), {nx, ng, nb},
                 [d, slices, mu = std::move(means), istd = std::move(inv_std)](TensorNode& self) {
                   auto& px = *self.parents[0];
                   auto& pg = *self.parents[1];
                   auto& pb = *self.parents[2];
                   const double dn = static_cast<double>(d);
                   for (std::size_t s = 0; s < slices; ++s) {
                     const double* g = &self.grad[s * d];
                     const double* xrow = &px.value[s * d];
                     // xhat recomputed from saved statistics
                     if (pg.requires_grad || pb.requires_grad) {
                       if (pg.requires_grad) pg.ensure_grad();
                       if (pb.requires_grad) pb.ensure_grad();
                       for (std::size_t i = 0; i < d; ++i) {
                         const double xhat = (xrow[i] - mu[s]) * istd[s];
                         if (pg.requires_grad) pg.grad[i] += g[i] * xhat;
                         if (pb.requires_grad) pb.grad[i] += g[i];
                       }
                     }
                     if (px.requires_grad) {
                       px.ensure_grad();
                       double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                       for (std::size_t i = 0; i < d; ++i) {
                         const double xhat = (xrow[i] - mu[s]) * istd[s];
                         const double dxhat = g[i] * pg.value[i];
                         sum_dxhat += dxhat;
                         sum_dxhat_xhat += dxhat * xhat;
                       }
                       for (std::size_t i = 0; i < d; ++i) {
                         const double xhat = (xrow[i] - mu[s]) * istd[s];
                         const double dxhat = g[i] * pg.value[i];
                         px.grad[s * d + i] +=
                             istd[s] * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
                       }
                     }
                   }
                 });
}

Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng& rng) {
  const auto& nx = expect(x, "dropout");
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == RunMode::Eval) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(nx->value.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nx->value[i] * mask[i];
  return make_op(nx->shape, std::move(out), {nx}, [mk = std::move(mask)](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * mk[i];
  });
}

// ---- loss / reductions ---------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  const auto& nl = expect(logits, "cross_entropy");
  if (nl->shape.size() == 2 && nl->shape[0] != 1)
    throw ShapeError("cross_entropy: expected a single logit row, got " + shape_str(nl->shape));
  if (nl->shape.size() > 2) throw ShapeError("cross_entropy: rank too high");
  expect_finite(*nl, "cross_entropy");
  const std::size_t C = nl->value.size();
  if (target >= C)
    throw IndexError("cross_entropy: target " + std::to_string(target) +
                     " out of range for " + std::to_string(C) + " classes");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : nl->value) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : nl->value) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out{lse - nl->value[target]};
  return make_op({1}, std::move(out), {nl}, [target, mx, s](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double soft = std::exp(p.value[i] - mx) / s;
      p.grad[i] += g * (soft - (i == target ? 1.0 : 0.0));
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto& nx = expect(x, "sum");
  double s = 0.0;
  for (double v : nx->value) s += v;
  return make_op({1}, {s}, {nx}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

// ---- backward -------------------------------------------------------------------

void backward(const Tensor& loss) {
  const auto& root = expect(loss, "backward");
  if (root->value.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(root->shape));
  if (!root->requires_grad) return;  // nothing reachable requires grad

  // Iterative post-order DFS; reverse gives a valid reverse-topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && seen.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch space for this pass; only leaves accumulate
  // across repeated backward calls.
  for (TensorNode* node : order)
    if (node->backward_fn) node->grad.assign(node->value.size(), 0.0);

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

}  // namespace tmr
