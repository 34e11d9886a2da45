#pragma once

// Test-side oracles, kept independent of the library's forward/backward
// implementations: central finite differences, naive set metrics, and naive
// temporal convolutions. Used by the unit suites and the acceptance suite.

#include <cmath>
#include <functional>
#include <vector>

#include "tmr/tensor.hpp"

namespace oracle {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite-difference check of d(loss)/d(param) for every element of
// every listed parameter. `make_loss` must rebuild the graph from the current
// leaf values on each call. Returns the worst relative error observed.
inline double fd_max_rel_err(std::vector<tmr::Tensor> params,
                             const std::function<tmr::Tensor()>& make_loss,
                             double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  tmr::Tensor loss = make_loss();
  tmr::backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double lp = make_loss().item();
      vals[i] = saved - h;
      const double lm = make_loss().item();
      vals[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[pi][i], numeric));
    }
  }
  return worst;
}

// Naive temporal convolution with symmetric zero padding; the reference for
// conv1d_temporal. x: L x din, kernels: k x din x dout.
inline std::vector<double> naive_conv1d(const std::vector<double>& x, std::size_t L,
                                        std::size_t din, const std::vector<double>& ker,
                                        std::size_t k, std::size_t dout) {
  std::vector<double> out(L * dout, 0.0);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t tau = 0; tau < k; ++tau) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p) + static_cast<std::ptrdiff_t>(tau) - r;
      if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
      for (std::size_t ci = 0; ci < din; ++ci)
        for (std::size_t co = 0; co < dout; ++co)
          out[p * dout + co] += x[static_cast<std::size_t>(q) * din + ci] * ker[(tau * din + ci) * dout + co];
    }
  return out;
}

// Naive length-preserving max pool, kernel k, stride 1, last row replicated.
inline std::vector<double> naive_maxpool_same(const std::vector<double>& x, std::size_t L,
                                              std::size_t d, std::size_t k) {
  std::vector<double> out(L * d);
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t c = 0; c < d; ++c) {
      double best = -1e300;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t src = std::min(p + i, L - 1);
        best = std::max(best, x[src * d + c]);
      }
      out[p * d + c] = best;
    }
  return out;
}

}  // namespace oracle
