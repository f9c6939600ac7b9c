#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace pmd {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Seed for per-example randomness; depends only on (global seed, id).
std::uint64_t example_seed(std::uint64_t global_seed, std::string_view example_id);

/// mt19937_64 output is specified by the standard; the distributions are
/// not, so the helpers below avoid them to keep shuffles portable.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n). Rejection sampling on the raw engine output.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Uniform double in [0, 1) from the top 53 bits.
double uniform_unit(Rng& rng);

template <typename T>
void portable_shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

/// Rounds to `digits` significant decimal digits (via %.*g round trip).
double round_significant(double v, int digits = 9);

/// "%.*g" formatting.
std::string format_g(double v, int digits = 9);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace pmd
