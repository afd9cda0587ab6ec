#pragma once

#include <cstdint>
#include <limits>
#include <optional>

namespace interfere {

/// Exact C(n, r) in 64-bit arithmetic, or nullopt once the value passes 2^63.
/// C(n, r) = 0 for r > n.
inline std::optional<std::uint64_t> binomial_exact(std::uint64_t n, std::uint64_t r) {
    if (r > n) return 0;
    r = r < n - r ? r : n - r;
    constexpr std::uint64_t limit = std::uint64_t{1} << 63;
    __extension__ typedef unsigned __int128 wide;
    wide acc = 1;
    for (std::uint64_t i = 1; i <= r; ++i) {
        // acc holds C(n - r + i - 1, i - 1); the product divides exactly by i.
        acc = acc * (n - r + i) / i;
        if (acc > limit) return std::nullopt;
    }
    return static_cast<std::uint64_t>(acc);
}

/// C(n, r) as a double; exact whenever the integer value fits, otherwise a
/// long-double product.
inline double binomial(std::uint64_t n, std::uint64_t r) {
    if (auto exact = binomial_exact(n, r)) return static_cast<double>(*exact);
    r = r < n - r ? r : n - r;
    long double acc = 1.0L;
    for (std::uint64_t i = 1; i <= r; ++i) {
        acc *= static_cast<long double>(n - r + i);
        acc /= static_cast<long double>(i);
    }
    return static_cast<double>(acc);
}

}  // namespace interfere
