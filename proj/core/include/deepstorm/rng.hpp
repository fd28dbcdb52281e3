#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>

namespace deepstorm {

// Stream ids used by the optimizer. Each agent owns a private stream so that
// batches drawn by different agents are mutually independent; the selection
// stream drives the output-iterate reservoir and the init stream seeds the
// shared starting point. All derive from one root seed.
inline constexpr std::uint64_t kSelectionStream = 0;
inline constexpr std::uint64_t kAgentStreamBase = 1;  // agent i -> 1 + i
inline std::uint64_t init_stream_id(int n_agents) {
  return kAgentStreamBase + static_cast<std::uint64_t>(n_agents);
}

/// splitmix64 step; advances the state and returns the next output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Collapse (root_seed, stream_id) into a single well-mixed 64-bit value.
std::uint64_t derive_stream_seed(std::uint64_t root_seed, std::uint64_t stream_id);

/// A private, serializable random stream.
///
/// Backed by std::mt19937_64 seeded through splitmix64 so that streams with
/// different (root, id) pairs are decorrelated. All derived draws below are
/// implemented without hidden distribution state, so serializing the engine
/// captures the complete stream position (required for bit-exact resume).
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t root_seed, std::uint64_t stream_id);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit();

  /// Standard normal via Box-Muller; consumes exactly two uniforms per call
  /// (no cached spare, by design).
  double next_gaussian();

  /// Uniform integer in [0, n); unbiased via masked rejection. n must be > 0.
  std::int64_t next_below(std::int64_t n);

  /// Engine state as a single text line (std::mt19937_64 stream format).
  void serialize(std::ostream& os) const;
  static RngStream deserialize(std::istream& is);

  bool operator==(const RngStream& other) const { return gen_ == other.gen_; }
  bool operator!=(const RngStream& other) const { return !(*this == other); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace deepstorm
