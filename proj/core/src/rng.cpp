#include "deepstorm/rng.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "deepstorm/errors.hpp"

namespace deepstorm {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_stream_seed(std::uint64_t root_seed, std::uint64_t stream_id) {
  std::uint64_t s = root_seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream_id * 0x9e3779b97f4a7c15ULL;
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x2545f4914f6cdd1dULL);
}

RngStream::RngStream(std::uint64_t root_seed, std::uint64_t stream_id) {
  std::uint64_t s = derive_stream_seed(root_seed, stream_id);
  // Spread the derived seed over the full engine state via seed_seq.
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32)};
  gen_.seed(seq);
}

std::uint64_t RngStream::next_u64() { return gen_(); }

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  double u1 = next_unit();
  while (u1 <= 0.0) u1 = next_unit();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::int64_t RngStream::next_below(std::int64_t n) {
  if (n <= 0) throw ConfigError("RngStream::next_below: n must be positive");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t mask = std::bit_ceil(un) - 1;
  for (;;) {
    const std::uint64_t v = next_u64() & mask;
    if (v < un) return static_cast<std::int64_t>(v);
  }
}

void RngStream::serialize(std::ostream& os) const { os << gen_; }

RngStream RngStream::deserialize(std::istream& is) {
  RngStream r;
  is >> r.gen_;
  if (!is) throw IoError("RngStream::deserialize: malformed engine state");
  return r;
}

}  // namespace deepstorm
