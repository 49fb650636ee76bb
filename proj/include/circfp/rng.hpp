#pragma once
/** @file rng.hpp
 *  @brief Seeded random streams and substream derivation. */

#include <cstdint>
#include <initializer_list>
#include <random>

namespace circfp {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives an independent seed from a base seed and a path of stream labels.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept;

Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path);

/// Stream labels used across the simulator. Changing these changes every dataset.
namespace stream {
inline constexpr std::uint64_t kSession = 0x5e55;
inline constexpr std::uint64_t kStrategy = 0x57a7;
inline constexpr std::uint64_t kStratify = 0x5a7f;
inline constexpr std::uint64_t kSplit = 0x5b17;
inline constexpr std::uint64_t kSites = 0x517e;
inline constexpr std::uint64_t kGame = 0x6a3e;
}  // namespace stream

}  // namespace circfp
