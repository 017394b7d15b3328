#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sbridge {

using Rng = std::mt19937_64;

/// Splittable stream derivation: the seed of a child stream is a SplitMix64
/// hash chain over (base, path...). Streams with different paths are
/// statistically independent, and a stream depends only on its path, never
/// on the order in which streams are created or the thread that uses them.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

Rng make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> path);

// Stream purposes, used as the first path element.
inline constexpr std::uint64_t kStreamData = 0x44415441;       // "DATA"
inline constexpr std::uint64_t kStreamBootstrap = 0x424f4f54;  // "BOOT"
inline constexpr std::uint64_t kStreamTruth = 0x54525554;      // "TRUT"

}  // namespace sbridge
