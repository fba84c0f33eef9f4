#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace tplrecon {

struct RngSeed {
  std::uint64_t value = 0;
};

// Derives an independent child seed for a named stream and index, so that
// e.g. the enrollment sample of identity 17 never depends on how many draws
// another component made.
RngSeed derive_seed(RngSeed parent, std::string_view stream,
                    std::uint64_t index = 0) noexcept;

// Counter-based generator: output n is a pure function of (key, n).
// Satisfies UniformRandomBitGenerator so std distributions can sit on top.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(RngSeed seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  // Uniform on [0, 1).
  double uniform() noexcept;
  double normal() { return normal_(*this); }
  std::uint64_t below(std::uint64_t bound) noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tplrecon
