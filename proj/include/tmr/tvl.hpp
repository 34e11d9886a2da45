#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tmr/tensor.hpp"

namespace tmr {

enum class FusionMode { Max, Ave };

// Multi-scale temporal enhancement of a bank window: one temporal-only
// convolution per kernel size, a length-preserving max pool (k=2, s=1) and
// the identity shortcut, fused per position and channel. Masked positions
// are zeroed on entry and exit so they never influence valid positions.
struct TvlParams {
  std::vector<std::size_t> kernel_sizes;  // default {3, 5, 7}
  std::vector<Tensor> kernels;            // per size: [k x d x d]
};

TvlParams init_tvl(std::span<const std::size_t> kernel_sizes, std::size_t d, Rng& rng);

Tensor tvl_apply(const TvlParams& params, const Tensor& window,
                 std::span<const std::uint8_t> mask, FusionMode fusion);

// One conv branch alone (same masking rules); the building block for
// per-branch operator stacks.
Tensor tvl_conv_branch(const TvlParams& params, std::size_t branch,
                       const Tensor& window, std::span<const std::uint8_t> mask);

}  // namespace tmr
