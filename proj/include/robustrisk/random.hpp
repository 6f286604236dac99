#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace robustrisk::random {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
/// pure function of (key, counter), which is what makes path generation
/// independent of the order in which paths are produced.
class Philox4x32 {
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit constexpr Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    constexpr Counter operator()(Counter ctr) const noexcept {
        Key k = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, k);
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        return ctr;
    }

  private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    Key key_;
};

/// Uniform on (0, 1] from two 32-bit words (53 significant bits).
constexpr double to_unit_open_closed(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

/// Two independent standard normals for the block addressed by
/// (stream, step, block) under `seed`, via Box-Muller.
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t stream,
                                         std::uint32_t step, std::uint32_t block) noexcept {
    const Philox4x32 gen(seed);
    const auto out = gen({step, block, static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32)});
    const double u1 = to_unit_open_closed(out[0], out[1]);
    const double u2 = to_unit_open_closed(out[2], out[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
}

/// Uniform on (0, 1] addressed the same way as normal_pair.
inline std::array<double, 2> uniform_pair(std::uint64_t seed, std::uint64_t stream,
                                          std::uint32_t step, std::uint32_t block) noexcept {
    const Philox4x32 gen(seed);
    const auto out = gen({step, block, static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32)});
    return {to_unit_open_closed(out[0], out[1]), to_unit_open_closed(out[2], out[3])};
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Sub-seed for a labelled consumer ("paths", "probe", ...) of a run seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull; // FNV-1a offset basis
    for (char ch : label) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001B3ull;
    }
    return splitmix64(seed ^ splitmix64(h));
}

} // namespace robustrisk::random
