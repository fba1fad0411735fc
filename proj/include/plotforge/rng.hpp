#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace plotforge {

using Rng = std::mt19937_64;

// All randomness derives from a single user seed. Each component draws from
// its own stream seeded with derive_seed(seed, "<component-tag>"), so a
// component can be re-seeded without perturbing the others. Tags in use:
// "init", "dropout", "batches", "sample", "tagger-init", "tagger-dropout",
// "tagger-batches", "stage1-sample", "stage2-sample".
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

inline Rng make_rng(std::uint64_t seed, std::string_view tag) {
  return Rng(derive_seed(seed, tag));
}

// Uniform double in [0, 1) from the top 53 bits of one draw. Used instead of
// std::uniform_real_distribution so streams are identical across standard
// libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace plotforge
