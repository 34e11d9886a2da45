#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tmr/encoder.hpp"
#include "tmr/tensor.hpp"

namespace tmr {

// The window {l_{t-L+1}, ..., l_t}, truncated at the start of the video.
// Rows hold indices max(0, t-L+1)..t in order; the mask flags are all true
// for bank-extracted windows and exist for batched left-padded forms.
struct BankWindow {
  std::size_t end_time = 0;
  std::size_t nominal_len = 0;  // requested L
  std::size_t len = 0;          // min(L, t+1)
  std::size_t width = 0;
  std::vector<double> features;     // len x width
  std::vector<std::uint8_t> mask;   // len flags

  Tensor to_tensor() const;
};

// Append-only, time-indexed feature store. Entries are plain values, never
// graph nodes, so no gradient can reach the bank. Training-time banks are
// frozen after the offline build.
class MemoryBank {
 public:
  explicit MemoryBank(std::size_t width);

  // Entry t equals encode_clip at t; the bank is returned frozen.
  static MemoryBank build_offline(const EncoderParams& params,
                                  const LabeledSequence& seq,
                                  std::size_t clip_len);

  void append(std::span<const double> feature);
  BankWindow window(std::size_t t, std::size_t L) const;

  std::size_t size() const { return len_; }
  std::size_t width() const { return width_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  std::span<const double> entry(std::size_t t) const;
  std::span<const double> raw() const { return data_; }
  std::uint64_t content_hash() const;

 private:
  std::size_t width_;
  std::size_t len_ = 0;
  bool frozen_ = false;
  std::vector<double> data_;  // len x width
};

}  // namespace tmr
