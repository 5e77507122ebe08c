#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace bdec {

/// Families of random streams. A stream is identified by (seed, domain, index);
/// particle streams use the particle slot as index, so the draw sequence of a
/// slot never depends on how work is split across threads.
enum class StreamDomain : std::uint32_t {
  target_chain = 1,
  hot_chain = 2,
  birth_death = 3,
  exploration = 4,
  reference = 5,
  init_target = 6,
  init_hot = 7,
  user = 100,
};

class RandomStream {
 public:
  RandomStream() : RandomStream(0, StreamDomain::user, 0) {}

  RandomStream(std::uint64_t seed, StreamDomain domain, std::uint64_t index) {
    std::seed_seq seq{lo(seed), hi(seed), static_cast<std::uint32_t>(domain),
                      lo(index), hi(index)};
    engine_.seed(seq);
  }

  /// Standard normal draw.
  double gaussian() { return normal_(engine_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
  static std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bdec
