// rng.hpp: Philox4x32-10 counter-based generator. A stream is addressed by
// (master seed, stream index), so every trajectory or sweep cell owns an
// independent, reproducible sequence regardless of scheduling.

#pragma once

#include <array>
#include <cstdint>

namespace qapause {

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block encrypt(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

/// Sequential uniform draws from the Philox stream (seed, index).
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t index)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        index_(index) {}

  std::uint64_t next_u64() {
    if (used_ == 2) refill();
    const std::uint64_t v = (std::uint64_t{block_[2 * used_]} << 32) | block_[2 * used_ + 1];
    ++used_;
    return v;
  }

  /// Uniform in the open interval (0, 1) with 53 random bits.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  std::uint64_t draws() const { return 2 * counter_ - (2 - used_); }

 private:
  void refill() {
    block_ = Philox4x32::encrypt({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                  static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32)},
                                 key_);
    ++counter_;
    used_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t index_;
  std::uint64_t counter_{0};
  Philox4x32::Block block_{};
  int used_{2};
};

/// Deterministic child seed, e.g. for sweep cells: one Philox block keyed by the parent.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) {
  const auto out = Philox4x32::encrypt(
      {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
       static_cast<std::uint32_t>(b >> 32)},
      {static_cast<std::uint32_t>(parent), static_cast<std::uint32_t>(parent >> 32)});
  return (std::uint64_t{out[0]} << 32) | out[1];
}

}  // namespace qapause
