#include "tplrecon/rng.hpp"

namespace tplrecon {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

RngSeed derive_seed(RngSeed parent, std::string_view stream,
                    std::uint64_t index) noexcept {
  std::uint64_t h = mix64(parent.value + kGolden);
  h = mix64(h ^ hash_string(stream));
  h = mix64(h + (index + 1) * kGolden);
  return RngSeed{h};
}

Rng::Rng(RngSeed seed) noexcept : key_(mix64(seed.value ^ 0x5851F42D4C957F2DULL)) {}

Rng::result_type Rng::operator()() noexcept {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift with rejection.
  std::uint64_t x = (*this)();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t floor = -bound % bound;
    while (low < floor) {
      x = (*this)();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace tplrecon
