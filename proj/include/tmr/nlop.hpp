#pragma once

#include <cstdint>
#include <span>

#include "tmr/tensor.hpp"

namespace tmr {

// Attention of the current feature over an enhanced bank window. Similarity
// logits theta(c)^T phi(rows) are scaled by 1/norm_factor and soft-maxed over
// window positions; the attended summary is layer-normalized, dropped out and
// residually added back to the current feature.
struct NloParams {
  Tensor w_theta;  // d x d_e
  Tensor w_phi;    // d x d_e
  Tensor w_g;      // d x d
  Tensor ln_gain;  // d
  Tensor ln_bias;  // d
  double dropout_rate = 0.2;
  double norm_factor = 1.0;  // sqrt(d_e) by construction
};

NloParams init_nlo(std::size_t d, std::size_t d_e, double dropout_rate, Rng& rng);

struct AttendResult {
  Tensor r;         // [1 x d] enhanced feature
  Tensor weights;   // [1 x len] attention over window positions
  Tensor attended;  // [1 x d] pre-normalization summary
};

AttendResult nlo_attend(const NloParams& params, const Tensor& current,
                        const Tensor& window, std::span<const std::uint8_t> mask,
                        RunMode mode, Rng& rng);

// Ablation operator: learned per-lag weights average the window rows
// directly into the operator output.
struct WaveParams {
  Tensor weights;  // 1 x nominal_len, column nominal_len-1 is lag zero
  std::size_t nominal_len = 0;
};

WaveParams init_wave(std::size_t nominal_len, Rng& rng);

Tensor wave_attend(const WaveParams& params, const Tensor& window,
                   std::span<const std::uint8_t> mask);

// Two fully connected layers over the [r_t | c_t] concatenation.
struct HeadParams {
  Tensor w1, b1, w2, b2;  // in -> hidden -> classes
};

HeadParams init_head(std::size_t in_width, std::size_t hidden, std::size_t classes, Rng& rng);

Tensor head_logits(const HeadParams& head, const Tensor& input);
Tensor classify(const HeadParams& head, const Tensor& r, const Tensor& c);

}  // namespace tmr
