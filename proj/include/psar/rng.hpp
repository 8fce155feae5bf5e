#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace psar {

using Rng = std::mt19937_64;

enum class NoiseLaw { Normal, ScaledT6 };

NoiseLaw parse_noise_law(std::string_view name);
const char* to_string(NoiseLaw law) noexcept;

/// Seed for an independent stream, mixed with splitmix64 so that nearby
/// (base, index, stream) triples give unrelated engines.
std::uint64_t split_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream = 0) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Unit-variance draw. The t law is t(6) rescaled by sqrt(2/3).
double draw_unit(Rng& rng, NoiseLaw law);

}  // namespace psar
