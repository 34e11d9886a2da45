#pragma once

#include <filesystem>

#include "tmr/membank.hpp"
#include "tmr/synth.hpp"

namespace tmr {

// One binary container serves both payload kinds; the type tag leaves room
// for auxiliary modalities. Values are raw little-endian 64-bit floats, so
// round trips are bit-exact.
//
//   char[8]  "TMRCONT\0"
//   u32      version (1)
//   u32      type: 0 labeled sequence, 1 feature bank
//   u64      T (rows)
//   u64      width (columns)
//   u32      num_phases (0 for banks)
//   u64      seed (0 for banks)
//   f64[T*width] row-major values
//   i32[T]   labels (sequences only)

void save_sequence(const std::filesystem::path& path, const LabeledSequence& seq);
LabeledSequence load_sequence(const std::filesystem::path& path);

void save_bank(const std::filesystem::path& path, const MemoryBank& bank);
MemoryBank load_bank(const std::filesystem::path& path);  // returned frozen

}  // namespace tmr
