#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace anyprune {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// Counter-based: the output block is a pure function of (key, counter), so a
// stream is fully described by its seed, its stream id and how far it has run.
// There is no global generator anywhere in the library.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform in (0, 1]; safe as a log argument.
  double uniform_open0() noexcept;
  // Standard normal via Box-Muller; the spare value is kept.
  double normal() noexcept;
  // Uniform integer in [0, bound) by rejection, bound >= 1.
  std::uint64_t below(std::uint64_t bound) noexcept;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key) noexcept;

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  std::size_t used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Seeded Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> permutation(std::size_t n, Philox& rng);

// Mixes a base seed with a purpose tag into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) noexcept;

}  // namespace anyprune
