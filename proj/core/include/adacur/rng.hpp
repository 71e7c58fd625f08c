#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace adacur {

// Deterministic string hash (FNV-1a). std::hash is implementation-defined,
// which would make seeded runs non-reproducible across toolchains.
std::uint64_t fnv1a64(std::string_view s);

// One splitmix64 round; used to decorrelate a base seed from a salt.
std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// Per-query seed derivation: every search seeds its generator from the
// config seed and the query id, so runs are reproducible query by query.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

std::mt19937_64 make_rng(std::uint64_t seed, std::string_view tag);

// First m entries of a uniform random permutation of [0, n).
std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t m,
                                                      std::mt19937_64& rng);

// Standard Gumbel(0,1) draw.
double gumbel(std::mt19937_64& rng);

}  // namespace adacur
