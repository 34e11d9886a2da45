#include "tmr/rng.hpp"

#include <cmath>
#include <sstream>

#include "tmr/errors.hpp"

namespace tmr {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (key + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : gen_(seed) {}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
  // 53 mantissa bits -> [0, 1)
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Box-Muller; the second variate is discarded so no state is cached.
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::integer(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::integer: n must be positive");
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(gen_()) * n) >> 64);
}

void Rng::save(std::ostream& os) const { os << gen_; }

void Rng::load(std::istream& is) { is >> gen_; }

std::string Rng::state_string() const {
  std::ostringstream os;
  save(os);
  return os.str();
}

void Rng::set_state_string(const std::string& s) {
  std::istringstream is(s);
  load(is);
  if (is.fail()) throw DataError("Rng: malformed state string");
}

}  // namespace tmr
