#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace clbench {

// Deterministic RNG helpers. Draws go through our own bounded/unit
// conversions instead of std::*_distribution so that sequences do not
// depend on the standard library implementation.

using Rng = std::mt19937_64;

// Derives an independent stream seed from a master seed and a role tag
// (e.g. "stream", "buffer"). Stable across platforms.
uint64_t derive_seed(uint64_t master, std::string_view tag);

// Uniform integer in [0, n), n > 0. Rejection-sampled, unbiased.
uint64_t rand_below(Rng& rng, uint64_t n);

// Uniform double in [0, 1).
double rand_unit(Rng& rng);

// Standard normal via Box-Muller.
double rand_normal(Rng& rng);

// In-place Fisher-Yates shuffle of indices.
void shuffle_indices(std::vector<int64_t>& v, Rng& rng);

// mt19937_64 state as text, for checkpoints.
std::string rng_state_to_string(const Rng& rng);
Rng rng_from_string(const std::string& state);

}  // namespace clbench
