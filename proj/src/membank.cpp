#include "tmr/membank.hpp"

#include <string>

#include "tmr/errors.hpp"

namespace tmr {

Tensor BankWindow::to_tensor() const {
  return Tensor::from_data({len, width}, features);
}

MemoryBank::MemoryBank(std::size_t width) : width_(width) {
  if (width < 1) throw ConfigError("MemoryBank: width must be positive");
}

MemoryBank MemoryBank::build_offline(const EncoderParams& params,
                                     const LabeledSequence& seq,
                                     std::size_t clip_len) {
  MemoryBank bank(params.d);
  Tensor rows = encode_sequence(params, seq, clip_len);
  bank.data_.assign(rows.values().begin(), rows.values().end());
  bank.len_ = seq.T;
  bank.frozen_ = true;
  return bank;
}

void MemoryBank::append(std::span<const double> feature) {
  if (frozen_) throw StateError("MemoryBank: cannot append to a frozen bank");
  if (feature.size() != width_)
    throw ShapeError("MemoryBank: feature width " + std::to_string(feature.size()) +
                     " does not match bank width " + std::to_string(width_));
  data_.insert(data_.end(), feature.begin(), feature.end());
  ++len_;
}

BankWindow MemoryBank::window(std::size_t t, std::size_t L) const {
  if (t >= len_)
    throw IndexError("MemoryBank: time index " + std::to_string(t) +
                     " out of range for length " + std::to_string(len_));
  if (L < 1) throw ConfigError("MemoryBank: window length must be >= 1");
  BankWindow w;
  w.end_time = t;
  w.nominal_len = L;
  w.len = std::min(L, t + 1);
  w.width = width_;
  const std::size_t begin = t + 1 - w.len;
  w.features.assign(data_.begin() + begin * width_, data_.begin() + (t + 1) * width_);
  w.mask.assign(w.len, 1);
  return w;
}

std::span<const double> MemoryBank::entry(std::size_t t) const {
  if (t >= len_) throw IndexError("MemoryBank: entry index out of range");
  return std::span<const double>(data_).subspan(t * width_, width_);
}

std::uint64_t MemoryBank::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix(&len_, sizeof(len_));
  mix(&width_, sizeof(width_));
  mix(data_.data(), data_.size() * sizeof(double));
  return h;
}

}  // namespace tmr
