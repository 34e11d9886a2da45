#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>

namespace tmr {

// Deterministic substream seed derivation (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key);

// Deterministic random source. All sampling goes through explicit helpers
// built on the raw mt19937_64 stream so generated values depend only on
// the seed, not on library-specific distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double normal();                         // standard normal
  std::uint64_t integer(std::uint64_t n);  // [0, n), n > 0

  void save(std::ostream& os) const;
  void load(std::istream& is);
  std::string state_string() const;
  void set_state_string(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

}  // namespace tmr
