#include "tmr/tvl.hpp"

#include <cmath>
#include <string>

#include "tmr/errors.hpp"

namespace tmr {

namespace {

bool mask_all_valid(std::span<const std::uint8_t> mask) {
  for (std::uint8_t m : mask)
    if (!m) return false;
  return true;
}

// Broadcast the row mask over channels as a constant tensor.
Tensor mask_matrix(std::span<const std::uint8_t> mask, std::size_t d) {
  std::vector<double> m(mask.size() * d);
  for (std::size_t r = 0; r < mask.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) m[r * d + c] = mask[r] ? 1.0 : 0.0;
  return Tensor::from_data({mask.size(), d}, std::move(m));
}

void check_window(const Tensor& window, std::span<const std::uint8_t> mask) {
  if (!window.defined() || window.rank() != 2 || window.rows() == 0)
    throw ContractError("tvl: window must be a non-empty [len x d] tensor");
  if (mask.size() != window.rows())
    throw ShapeError("tvl: mask length " + std::to_string(mask.size()) +
                     " does not match window length " + std::to_string(window.rows()));
}

}  // namespace

TvlParams init_tvl(std::span<const std::size_t> kernel_sizes, std::size_t d, Rng& rng) {
  if (kernel_sizes.empty()) throw ConfigError("init_tvl: at least one kernel size required");
  TvlParams p;
  for (std::size_t k : kernel_sizes) {
    if (k % 2 == 0)
      throw ConfigError("init_tvl: kernel sizes must be odd, got " + std::to_string(k));
    // Identity-dominant start: each branch begins as a lightly perturbed
    // copy of its input.
    const double s = 0.35 * std::sqrt(3.0 / static_cast<double>(k * d));
    Tensor ker = Tensor::uniform({k, d, d}, -s, s, rng, true);
    auto vals = ker.mutable_values();
    const std::size_t center = k / 2;
    for (std::size_t c = 0; c < d; ++c) vals[(center * d + c) * d + c] += 1.0;
    p.kernel_sizes.push_back(k);
    p.kernels.push_back(ker);
  }
  return p;
}

Tensor tvl_apply(const TvlParams& params, const Tensor& window,
                 std::span<const std::uint8_t> mask, FusionMode fusion) {
  check_window(window, mask);
  const bool all_valid = mask_all_valid(mask);
  Tensor x = all_valid ? window : mul(window, mask_matrix(mask, window.cols()));

  std::vector<Tensor> branches;
  branches.reserve(params.kernels.size() + 2);
  for (const auto& ker : params.kernels) branches.push_back(conv1d_temporal(x, ker));
  branches.push_back(max_pool1d(x, 2, 1, PadMode::ReplicateRight));
  branches.push_back(x);

  Tensor fused = fusion == FusionMode::Max ? vmax(branches) : vmean(branches);
  if (!all_valid) fused = mul(fused, mask_matrix(mask, window.cols()));
  return fused;
}

Tensor tvl_conv_branch(const TvlParams& params, std::size_t branch,
                       const Tensor& window, std::span<const std::uint8_t> mask) {
  check_window(window, mask);
  if (branch >= params.kernels.size())
    throw IndexError("tvl_conv_branch: branch index out of range");
  const bool all_valid = mask_all_valid(mask);
  Tensor x = all_valid ? window : mul(window, mask_matrix(mask, window.cols()));
  Tensor out = conv1d_temporal(x, params.kernels[branch]);
  if (!all_valid) out = mul(out, mask_matrix(mask, window.cols()));
  return out;
}

}  // namespace tmr
