#pragma once

// Distribution of the uniformity-trial statistic.
//
// Under random assignment of n treated among n + m distinct responses, the
// placements form a uniformly random multiset of size n from {0, ..., m}, one
// per arrangement. The per-block pmf is obtained by a dynamic program over
// placement levels; blocks are independent and their pmfs are convolved.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "interfere/binomial.hpp"
#include "interfere/normal.hpp"
#include "interfere/types.hpp"

namespace interfere {

enum class NullMode { Exact, Normal };

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

struct NullDistribution {
    NullMode mode = NullMode::Normal;
    std::vector<double> support;  // strictly increasing (Exact only)
    std::vector<double> probs;    // aligned with support
    double mean = 0.0;
    double variance = 0.0;
    double pruned_mass = 0.0;  // mass dropped below the pruning threshold
};

struct CriticalValue {
    double alpha = 0.05;
    double t_tilde = 0.0;
};

/// Block shape for moment and pmf computations.
struct BlockShape {
    std::size_t n = 0;
    std::size_t m = 0;
    double weight = 1.0;
};

inline constexpr double kDefaultDpBudget = 1e8;
inline constexpr double kPruneThreshold = 1e-15;

namespace detail {

__extension__ typedef unsigned __int128 u128;

inline u128 gcd128(u128 a, u128 b) {
    while (b != 0) {
        const u128 r = a % b;
        a = b;
        b = r;
    }
    return a;
}

// num / den rounded once when both fit in a double mantissa after reduction.
inline double ratio(u128 num, u128 den) {
    const u128 g = gcd128(num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    constexpr u128 mantissa = u128{1} << 53;
    if (num <= mantissa && den <= mantissa) return static_cast<double>(num) / static_cast<double>(den);
    return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

// Unweighted block moments in integer arithmetic; nullopt on overflow.
inline std::optional<Moments> integer_block_moments(std::size_t n, std::size_t m, unsigned k) {
    u128 s1 = 0, s2 = 0;
    for (std::size_t j = 0; j <= m; ++j) {
        const auto c = binomial_exact(j, k - 1);
        if (!c) return std::nullopt;
        const u128 cw = *c;
        u128 sq = 0;
        if (__builtin_mul_overflow(cw, cw, &sq) || __builtin_add_overflow(s2, sq, &s2)) return std::nullopt;
        s1 += cw;
    }
    const u128 mp1 = m + 1, nn = n, scale = nn * (nn + m + 1);
    u128 a = 0, b = 0, spread = 0, num = 0, den = 0;
    // var = n (n+m+1) ((m+1) s2 - s1^2) / ((m+1)^2 (m+2))
    if (__builtin_mul_overflow(mp1, s2, &a) || __builtin_mul_overflow(s1, s1, &b)) return std::nullopt;
    spread = a - b;
    if (__builtin_mul_overflow(scale, spread, &num) || __builtin_mul_overflow(mp1 * mp1, u128{m + 2}, &den))
        return std::nullopt;
    u128 mean_num = 0;
    if (__builtin_mul_overflow(nn, s1, &mean_num)) return std::nullopt;
    return Moments{ratio(mean_num, mp1), ratio(num, den)};
}

}  // namespace detail

/// Null mean and variance of one block's weighted score.
inline Moments block_moments(std::size_t n, std::size_t m, unsigned k, double w) {
    if (n < 1 || m < 1 || k < 2) throw std::invalid_argument("block_moments: need n, m >= 1 and k >= 2");
    if (const auto exact = detail::integer_block_moments(n, m, k)) return {w * exact->mean, w * w * exact->variance};
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t j = 0; j <= m; ++j) {
        const double c = w * binomial(j, k - 1);
        s1 += c;
        s2 += c * c;
    }
    const double mp1 = static_cast<double>(m) + 1.0;
    const double phibar = s1 / mp1;
    const double nd = static_cast<double>(n);
    const double md = static_cast<double>(m);
    const double factor = nd * (nd + md + 1.0) / (mp1 * (md + 2.0));
    return {nd * phibar, std::max(0.0, factor * (s2 - mp1 * phibar * phibar))};
}

/// Sum of block moments.
inline Moments total_moments(std::span<const BlockShape> blocks, unsigned k) {
    if (blocks.empty()) throw std::invalid_argument("total_moments: no blocks");
    Moments out;
    for (const BlockShape& b : blocks) {
        const Moments bm = block_moments(b.n, b.m, k, b.weight);
        out.mean += bm.mean;
        out.variance += bm.variance;
    }
    return out;
}

/// Prefix sums of C(j, k-1) and C(j, k-1)^2 for j = 0..max_m, giving O(1)
/// unweighted block moments for any n and m <= max_m.
class ScoreTable {
public:
    ScoreTable(std::size_t max_m, unsigned k) : k_(k), score_(max_m + 1), s1_(max_m + 2, 0.0), s2_(max_m + 2, 0.0) {
        if (k < 2) throw std::invalid_argument("ScoreTable: k must be at least 2");
        for (std::size_t j = 0; j <= max_m; ++j) {
            score_[j] = binomial(j, k - 1);
            s1_[j + 1] = s1_[j] + score_[j];
            s2_[j + 1] = s2_[j] + score_[j] * score_[j];
        }
    }

    unsigned k() const noexcept { return k_; }
    std::size_t max_m() const noexcept { return score_.size() - 1; }
    double score(std::size_t j) const { return score_.at(j); }

    Moments moments(std::size_t n, std::size_t m) const {
        if (m > max_m()) throw std::out_of_range("ScoreTable: m exceeds table size");
        const double mp1 = static_cast<double>(m) + 1.0;
        const double phibar = s1_[m + 1] / mp1;
        const double nd = static_cast<double>(n);
        const double factor = nd * (nd + static_cast<double>(m) + 1.0) / (mp1 * (static_cast<double>(m) + 2.0));
        return {nd * phibar, std::max(0.0, factor * (s2_[m + 1] - mp1 * phibar * phibar))};
    }

private:
    unsigned k_;
    std::vector<double> score_;
    std::vector<double> s1_;
    std::vector<double> s2_;
};

/// Number of DP cells (n+1)(m+1)(S+1) needed for the exact block pmf, where
/// S = n C(m, k-1) is the largest attainable score.
inline double dp_state_count(std::size_t n, std::size_t m, unsigned k) {
    const double max_score = static_cast<double>(n) * binomial(m, k - 1);
    return (static_cast<double>(n) + 1.0) * (static_cast<double>(m) + 1.0) * (max_score + 1.0);
}

namespace detail {

inline void fill_moments(NullDistribution& d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d.support.size(); ++i) mean += d.support[i] * d.probs[i];
    double var = 0.0;
    for (std::size_t i = 0; i < d.support.size(); ++i) {
        const double dev = d.support[i] - mean;
        var += dev * dev * d.probs[i];
    }
    d.mean = mean;
    d.variance = var;
}

}  // namespace detail

/// Exact pmf of w * sum_j C(u_j, k-1) for one block.
inline NullDistribution block_exact_pmf(std::size_t n, std::size_t m, unsigned k, double w,
                                        double budget = kDefaultDpBudget) {
    if (n < 1 || m < 1 || k < 2) throw std::invalid_argument("block_exact_pmf: need n, m >= 1 and k >= 2");
    if (dp_state_count(n, m, k) > budget)
        throw BudgetExceededError("exact null for block (n=" + std::to_string(n) + ", m=" + std::to_string(m) +
                                  ", k=" + std::to_string(k) + ") exceeds the DP budget; use Normal mode");

    const auto max_score = static_cast<std::size_t>(n * *binomial_exact(m, k - 1));
    // counts[i][s]: arrangements of i treated among the levels processed so far
    // with accumulated score s.
    std::vector<std::vector<double>> counts(n + 1, std::vector<double>(max_score + 1, 0.0));
    counts[0][0] = 1.0;
    for (std::size_t level = 0; level <= m; ++level) {
        const auto c = static_cast<std::size_t>(*binomial_exact(level, k - 1));
        // Any number of treated may share a placement level.
        for (std::size_t i = 1; i <= n; ++i) {
            const std::vector<double>& prev = counts[i - 1];
            std::vector<double>& cur = counts[i];
            for (std::size_t s = c; s <= max_score; ++s) cur[s] += prev[s - c];
        }
    }

    const double total = binomial(n + m, n);
    NullDistribution out;
    out.mode = NullMode::Exact;
    for (std::size_t s = 0; s <= max_score; ++s) {
        if (counts[n][s] > 0.0) {
            out.support.push_back(w * static_cast<double>(s));
            out.probs.push_back(counts[n][s] / total);
        }
    }
    if (w == 0.0) {
        out.support = {0.0};
        out.probs = {1.0};
    }
    detail::fill_moments(out);
    return out;
}

/// Point mass at `value`.
inline NullDistribution point_mass(double value) {
    NullDistribution d;
    d.mode = NullMode::Exact;
    d.support = {value};
    d.probs = {1.0};
    d.mean = value;
    return d;
}

/// Normal-mode distribution carrying only moments.
inline NullDistribution normal_null(const Moments& mom) {
    NullDistribution d;
    d.mode = NullMode::Normal;
    d.mean = mom.mean;
    d.variance = mom.variance;
    return d;
}

namespace detail {

inline bool is_integer_lattice(const NullDistribution& d) {
    for (double v : d.support)
        if (v != std::floor(v) || std::abs(v) > 1e15) return false;
    return true;
}

// Drops probabilities below the threshold and renormalizes; returns the mass removed.
inline double prune(std::vector<double>& support, std::vector<double>& probs) {
    double dropped = 0.0;
    std::size_t out = 0;
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (probs[i] < kPruneThreshold) {
            dropped += probs[i];
            continue;
        }
        support[out] = support[i];
        probs[out] = probs[i];
        ++out;
    }
    support.resize(out);
    probs.resize(out);
    if (dropped > 0.0) {
        const double keep = 1.0 - dropped;
        for (double& p : probs) p /= keep;
    }
    return dropped;
}

inline NullDistribution convolve_pair(const NullDistribution& a, const NullDistribution& b) {
    NullDistribution out;
    out.mode = NullMode::Exact;
    out.pruned_mass = a.pruned_mass + b.pruned_mass;
    if (is_integer_lattice(a) && is_integer_lattice(b)) {
        const auto lo_a = static_cast<long long>(a.support.front());
        const auto lo_b = static_cast<long long>(b.support.front());
        const auto width_a = static_cast<std::size_t>(static_cast<long long>(a.support.back()) - lo_a + 1);
        const auto width_b = static_cast<std::size_t>(static_cast<long long>(b.support.back()) - lo_b + 1);
        std::vector<double> dense(width_a + width_b - 1, 0.0);
        for (std::size_t i = 0; i < a.support.size(); ++i) {
            const auto off_a = static_cast<std::size_t>(static_cast<long long>(a.support[i]) - lo_a);
            for (std::size_t j = 0; j < b.support.size(); ++j) {
                const auto off_b = static_cast<std::size_t>(static_cast<long long>(b.support[j]) - lo_b);
                dense[off_a + off_b] += a.probs[i] * b.probs[j];
            }
        }
        for (std::size_t s = 0; s < dense.size(); ++s) {
            if (dense[s] > 0.0) {
                out.support.push_back(static_cast<double>(lo_a + lo_b + static_cast<long long>(s)));
                out.probs.push_back(dense[s]);
            }
        }
    } else {
        std::vector<std::pair<double, double>> terms;
        terms.reserve(a.support.size() * b.support.size());
        for (std::size_t i = 0; i < a.support.size(); ++i)
            for (std::size_t j = 0; j < b.support.size(); ++j)
                terms.emplace_back(a.support[i] + b.support[j], a.probs[i] * b.probs[j]);
        std::sort(terms.begin(), terms.end());
        for (const auto& [v, p] : terms) {
            // Merge values that differ only by rounding.
            if (!out.support.empty() &&
                std::abs(v - out.support.back()) <= 1e-12 * std::max(1.0, std::abs(v))) {
                out.probs.back() += p;
            } else {
                out.support.push_back(v);
                out.probs.push_back(p);
            }
        }
    }
    out.pruned_mass += prune(out.support, out.probs);
    return out;
}

}  // namespace detail

/// Exact distribution of the sum of independent Exact-mode distributions,
/// folded left in the order given.
inline NullDistribution convolve(std::span<const NullDistribution> blocks) {
    if (blocks.empty()) throw std::invalid_argument("convolve: no distributions");
    for (const NullDistribution& d : blocks)
        if (d.mode != NullMode::Exact) throw std::invalid_argument("convolve: all inputs must be Exact mode");
    NullDistribution acc = blocks.front();
    for (std::size_t i = 1; i < blocks.size(); ++i) acc = detail::convolve_pair(acc, blocks[i]);
    detail::fill_moments(acc);
    return acc;
}

namespace detail {
inline double slack(double v) { return 1e-9 * std::max(1.0, std::abs(v)); }
}  // namespace detail

/// t_alpha: in Exact mode the smallest support value whose cdf reaches
/// 1 - alpha; in Normal mode mean + Phi^{-1}(1 - alpha) sd.
inline CriticalValue critical_value(const NullDistribution& dist, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("critical_value: alpha must be in (0, 1)");
    if (dist.mode == NullMode::Normal) {
        if (!(dist.variance > 0.0)) throw std::invalid_argument("critical_value: Normal mode needs positive variance");
        return {alpha, dist.mean + norm_quantile(1.0 - alpha) * std::sqrt(dist.variance)};
    }
    double cdf = 0.0;
    for (std::size_t i = 0; i < dist.support.size(); ++i) {
        cdf += dist.probs[i];
        if (cdf >= 1.0 - alpha - 1e-12) return {alpha, dist.support[i]};
    }
    return {alpha, dist.support.back()};
}

/// Pr(T >= t).
inline double upper_tail(const NullDistribution& dist, double t) {
    if (dist.mode == NullMode::Normal) {
        if (!(dist.variance > 0.0)) return t <= dist.mean ? 1.0 : 0.0;
        return norm_sf((t - dist.mean) / std::sqrt(dist.variance));
    }
    double p = 0.0;
    for (std::size_t i = 0; i < dist.support.size(); ++i)
        if (dist.support[i] >= t - detail::slack(t)) p += dist.probs[i];
    return std::min(1.0, p);
}

/// Pr(T <= t).
inline double lower_tail(const NullDistribution& dist, double t) {
    if (dist.mode == NullMode::Normal) {
        if (!(dist.variance > 0.0)) return t >= dist.mean ? 1.0 : 0.0;
        return norm_cdf((t - dist.mean) / std::sqrt(dist.variance));
    }
    double p = 0.0;
    for (std::size_t i = 0; i < dist.support.size(); ++i)
        if (dist.support[i] <= t + detail::slack(t)) p += dist.probs[i];
    return std::min(1.0, p);
}

}  // namespace interfere
