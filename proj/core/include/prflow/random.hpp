#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace prflow {

/// Engine used for all seeded randomness. mt19937_64 output is fixed by the
/// standard, so trajectories are reproducible across standard libraries as
/// long as only the helpers below draw from it.
using Rng = std::mt19937_64;

double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

/// Stateless counter-based generator: a well-mixed 64-bit hash of the keys.
std::uint64_t mix64(std::uint64_t x);
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                       std::uint64_t element);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

}  // namespace prflow
