#pragma once

#include "tmr/synth.hpp"
#include "tmr/tensor.hpp"

namespace tmr {

// Per-frame MLP (two affine layers, rectifier between) whose output feeds a
// single gated recurrent cell of hidden size d. The hidden state after the
// clip's final frame is the clip feature: the same routine produces the live
// feature and the bank entries.
struct FrameNetParams {
  Tensor w1, b1, w2, b2;  // d_raw -> d -> d
};

struct LstmParams {
  // Packed gate order: input, forget, cell candidate, output.
  Tensor wx;  // d x 4d
  Tensor wh;  // d x 4d
  Tensor b;   // 4d
};

struct EncoderParams {
  FrameNetParams frame;
  LstmParams lstm;
  std::size_t d_raw = 16;
  std::size_t d = 64;
};

EncoderParams init_encoder(std::size_t d_raw, std::size_t d, Rng& rng);

// clip: [(n+1) x d_raw] consumed frame-by-frame in temporal order -> [1 x d].
Tensor encode_clip(const EncoderParams& params, const Tensor& clip);

// The clip window {x_{t-n}, ..., x_t}, truncated at the sequence start.
Tensor clip_tensor(const LabeledSequence& seq, std::size_t t, std::size_t clip_len);

// Row t equals encode_clip at t; evaluated without graph recording.
Tensor encode_sequence(const EncoderParams& params, const LabeledSequence& seq,
                       std::size_t clip_len);

}  // namespace tmr
