#pragma once

// Test of no effect and attributable-effect confidence bounds.
//
// A_Z = T_Z - T~_Z compares the observed statistic with the statistic the same
// assignment would have produced in a uniformity trial. Since T~_Z has a known
// distribution, Pr(A_Z >= T_Z - t_alpha) >= 1 - alpha.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "interfere/null_dist.hpp"
#include "interfere/placement_stat.hpp"
#include "interfere/types.hpp"

namespace interfere {

enum class Direction { Elevation, Suppression };
enum class ModeSelect { Auto, Exact, Normal };
enum class Sidedness { OneSided, TwoSided };

struct TestOptions {
    unsigned k = 2;
    WeightScheme scheme = WeightScheme::Equal;
    ModeSelect mode = ModeSelect::Auto;
    double alpha = 0.05;
    Sidedness sides = Sidedness::OneSided;
    double dp_budget = kDefaultDpBudget;
};

struct InferenceReport {
    unsigned k = 2;
    double T_obs = 0.0;
    double null_mean = 0.0;
    double null_var = 0.0;
    double deviate = 0.0;
    double p_value = 1.0;
    double point_estimate_fraction = 0.0;
    double ci_lower_fraction = 0.0;
    double t_tilde = 0.0;
    double alpha = 0.05;
    Direction direction = Direction::Elevation;
    NullMode mode = NullMode::Normal;
    Sidedness sides = Sidedness::OneSided;
    std::size_t blocks_used = 0;
    std::size_t blocks_dropped = 0;
    std::vector<std::string> warnings;
};

inline const char* to_string(Direction d) { return d == Direction::Elevation ? "elevate" : "suppress"; }
inline const char* to_string(NullMode m) { return m == NullMode::Exact ? "exact" : "normal"; }

/// Blocks at or above this count use the Normal approximation in Auto mode.
inline constexpr std::size_t kAutoNormalBlocks = 30;

/// Resolves Auto to Exact or Normal for the given block shapes.
inline NullMode resolve_mode(ModeSelect sel, std::span<const BlockSummary> blocks, unsigned k, double budget) {
    if (sel == ModeSelect::Exact) return NullMode::Exact;
    if (sel == ModeSelect::Normal) return NullMode::Normal;
    if (blocks.size() >= kAutoNormalBlocks) return NullMode::Normal;
    // The budget also covers the pairwise convolutions, whose cost is the
    // product of the running support width and the next block's width.
    double acc_width = 0.0;
    for (const BlockSummary& b : blocks) {
        if (dp_state_count(b.n, b.m, k) > budget) return NullMode::Normal;
        const double width = static_cast<double>(b.n) * binomial(b.m, k - 1) + 1.0;
        if (acc_width > 0.0 && acc_width * width > budget) return NullMode::Normal;
        acc_width += width;
    }
    return NullMode::Exact;
}

/// Inference from precomputed block placements (weights are reassigned).
inline InferenceReport infer_from_blocks(std::vector<BlockSummary> blocks, const TestOptions& opt,
                                         Direction direction = Direction::Elevation) {
    if (blocks.empty()) throw std::invalid_argument("inference: no blocks");
    if (opt.k < 2) throw std::invalid_argument("inference: k must be at least 2");
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw std::invalid_argument("inference: alpha must be in (0, 1)");

    InferenceReport r;
    r.k = opt.k;
    r.alpha = opt.alpha;
    r.direction = direction;
    r.sides = opt.sides;
    r.blocks_used = blocks.size();

    assign_weights(blocks, opt.k, opt.scheme);
    for (const std::string& id : degenerate_blocks(blocks, opt.k))
        r.warnings.push_back("block '" + id + "' has fewer than k-1 controls and scores 0");

    r.T_obs = statistic(blocks, opt.k, opt.scheme);
    r.mode = resolve_mode(opt.mode, blocks, opt.k, opt.dp_budget);

    NullDistribution dist;
    if (r.mode == NullMode::Exact) {
        std::vector<NullDistribution> parts;
        parts.reserve(blocks.size());
        for (const BlockSummary& b : blocks) parts.push_back(block_exact_pmf(b.n, b.m, opt.k, b.weight, opt.dp_budget));
        dist = convolve(parts);
    } else {
        std::vector<BlockShape> shapes;
        shapes.reserve(blocks.size());
        for (const BlockSummary& b : blocks) shapes.push_back({b.n, b.m, b.weight});
        dist = normal_null(total_moments(shapes, opt.k));
    }
    r.null_mean = dist.mean;
    r.null_var = dist.variance;
    if (!(r.null_var > 0.0)) throw std::invalid_argument("inference: null variance is zero (is k too large for these blocks?)");

    r.deviate = (r.T_obs - r.null_mean) / std::sqrt(r.null_var);
    const double upper = upper_tail(dist, r.T_obs);
    if (opt.sides == Sidedness::OneSided) {
        r.p_value = upper;
    } else {
        const double lower = lower_tail(dist, r.T_obs);
        r.p_value = std::min(1.0, 2.0 * std::min(upper, lower));
    }
    r.t_tilde = critical_value(dist, opt.alpha).t_tilde;
    r.point_estimate_fraction = (r.T_obs - r.null_mean) / r.null_mean;
    r.ci_lower_fraction = (r.T_obs - r.t_tilde) / r.null_mean;
    return r;
}

namespace detail {

inline std::vector<BlockSummary> summarize(std::span<const TrialRecord> trials) {
    std::vector<BlockSummary> blocks;
    for (const auto& rows : group_blocks(trials)) blocks.push_back(placements(rows));
    return blocks;
}

inline std::vector<TrialRecord> negated(std::span<const TrialRecord> trials) {
    std::vector<TrialRecord> out(trials.begin(), trials.end());
    for (TrialRecord& t : out) t.response = -t.response;
    return out;
}

}  // namespace detail

/// Test of Fisher's null of no effect against elevated treated responses.
inline InferenceReport test_no_effect(std::span<const TrialRecord> trials, const TestOptions& opt) {
    return infer_from_blocks(detail::summarize(trials), opt, Direction::Elevation);
}

/// Same test applied to negated responses (treatment suppresses the response).
inline InferenceReport test_suppression(std::span<const TrialRecord> trials, const TestOptions& opt) {
    const auto neg = detail::negated(trials);
    return infer_from_blocks(detail::summarize(neg), opt, Direction::Suppression);
}

/// Runs the elevation or suppression test.
inline InferenceReport run_test(std::span<const TrialRecord> trials, const TestOptions& opt, Direction dir) {
    return dir == Direction::Elevation ? test_no_effect(trials, opt) : test_suppression(trials, opt);
}

/// 1 - alpha lower confidence bound for A_Z: T_obs - t_alpha.
inline double attributable_bound(const InferenceReport& report) { return report.T_obs - report.t_tilde; }

struct LagSubset {
    std::vector<TrialRecord> trials;
    std::size_t blocks_dropped = 0;
    std::vector<std::string> warnings;
};

/// Keeps go trials that have a predecessor in their block and relabels them by
/// the predecessor's treatment (stop-go -> treated, go-go -> control). Blocks
/// left without both groups are dropped.
inline LagSubset lag_relabel(std::span<const TrialRecord> trials) {
    LagSubset out;
    for (const auto& rows : group_blocks(trials)) {
        std::vector<TrialRecord> kept;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].z != 0) continue;
            TrialRecord t = rows[i];
            t.z = rows[i - 1].z;
            kept.push_back(std::move(t));
        }
        std::size_t treated = 0;
        for (const TrialRecord& t : kept) treated += t.z == 1 ? 1 : 0;
        if (treated == 0 || treated == kept.size()) {
            ++out.blocks_dropped;
            out.warnings.push_back("block '" + rows.front().block_id + "' has no stop-go or no go-go trials; dropped");
            continue;
        }
        out.trials.insert(out.trials.end(), kept.begin(), kept.end());
    }
    return out;
}

/// Go-go versus stop-go comparison: evidence of a lingering effect of the
/// previous trial's treatment on the current go trial.
inline InferenceReport lagged_interference_test(std::span<const TrialRecord> trials, const TestOptions& opt,
                                                Direction dir = Direction::Elevation) {
    LagSubset sub = lag_relabel(trials);
    if (sub.trials.empty()) throw DegenerateBlockError("lagged test: every block is degenerate after lag subsetting");
    InferenceReport r = run_test(sub.trials, opt, dir);
    r.blocks_dropped = sub.blocks_dropped;
    r.warnings.insert(r.warnings.begin(), sub.warnings.begin(), sub.warnings.end());
    return r;
}

}  // namespace interfere
