#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>

namespace opclab {

/// Philox4x32-10 block function. Maps a 128-bit counter and a 64-bit key to
/// 128 pseudo-random bits.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// splitmix64 finalizer, used to derive substream identifiers.
std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based random stream.
///
/// The key is the 64-bit seed. The counter is (stream id, block index), so
/// two streams with different ids never overlap and a stream is fully
/// determined by (seed, stream id). Uniform doubles take the top 53 bits of
/// a 64-bit draw; normals use Box-Muller and cache the second variate.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Independent child stream. Deterministic in (seed, stream id, child).
  RandomStream derive(std::uint64_t child) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Uniform integer in [lo, hi], inclusive.
  long uniform_int(long lo, long hi);
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index n);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace opclab
