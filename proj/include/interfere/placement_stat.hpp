#pragma once

// Placement statistic T_Z.
//
// For each treated unit, its placement is the number of controls in the same
// block with a response at or below its own. The block score sum_j C(u_j, k-1)
// counts the (1 treated, k-1 controls) comparison sets in which the treated
// unit has the largest response; T_Z is the weighted sum of block scores.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "interfere/binomial.hpp"
#include "interfere/types.hpp"

namespace interfere {

enum class WeightScheme {
    Equal,     // w_b = 1
    Balanced,  // 1 / w_b = B * n_b * C(m_b, k-1)
};

struct BlockSummary {
    std::string block_id;
    std::size_t n = 0;  // treated
    std::size_t m = 0;  // controls
    double weight = 1.0;
    std::vector<std::size_t> placements;  // one per treated unit, in [0, m]
};

/// Placement of each treated response among sorted control responses
/// (count of controls <= treated).
inline std::vector<std::size_t> placement_counts(std::span<const double> treated,
                                                 std::vector<double> controls) {
    std::sort(controls.begin(), controls.end());
    std::vector<std::size_t> out;
    out.reserve(treated.size());
    for (double t : treated)
        out.push_back(static_cast<std::size_t>(
            std::upper_bound(controls.begin(), controls.end(), t) - controls.begin()));
    return out;
}

/// Splits trials into blocks ordered by block id; within a block, trials are
/// ordered by index. Duplicate (block, index) pairs are rejected.
inline std::vector<std::vector<TrialRecord>> group_blocks(std::span<const TrialRecord> trials) {
    std::map<std::string, std::vector<TrialRecord>> by_block;
    for (const TrialRecord& t : trials) by_block[t.block_id].push_back(t);
    std::vector<std::vector<TrialRecord>> out;
    out.reserve(by_block.size());
    for (auto& [id, rows] : by_block) {
        std::stable_sort(rows.begin(), rows.end(),
                         [](const TrialRecord& a, const TrialRecord& b) { return a.index < b.index; });
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].index == rows[i - 1].index)
                throw std::invalid_argument("duplicate trial index " + std::to_string(rows[i].index) +
                                            " in block '" + id + "'");
        out.push_back(std::move(rows));
    }
    return out;
}

/// Placements of the treated units of one block. Throws TiesError when a
/// treated response equals a control response, DegenerateBlockError when the
/// block lacks either group.
inline BlockSummary placements(std::span<const TrialRecord> block_trials) {
    BlockSummary out;
    if (!block_trials.empty()) out.block_id = block_trials.front().block_id;
    std::vector<double> treated;
    std::vector<double> controls;
    for (const TrialRecord& t : block_trials) {
        if (t.block_id != out.block_id)
            throw std::invalid_argument("placements: trials span more than one block");
        if (t.z == 1)
            treated.push_back(t.response);
        else if (t.z == 0)
            controls.push_back(t.response);
        else
            throw std::invalid_argument("placements: z must be 0 or 1");
    }
    if (treated.empty() || controls.empty())
        throw DegenerateBlockError("block '" + out.block_id + "' has " +
                                   std::to_string(treated.size()) + " treated and " +
                                   std::to_string(controls.size()) + " control units");

    std::sort(controls.begin(), controls.end());
    for (double t : treated) {
        if (std::binary_search(controls.begin(), controls.end(), t))
            throw TiesError(out.block_id, "tied treated and control response " + std::to_string(t) +
                                              " in block '" + out.block_id + "'");
    }
    out.n = treated.size();
    out.m = controls.size();
    out.placements = placement_counts(treated, std::move(controls));
    return out;
}

/// Score of a single placement count: w * C(u, k-1), zero when u < k-1.
inline double phi(std::size_t u_count, unsigned k, double w) {
    if (k < 2) throw std::invalid_argument("phi: k must be at least 2");
    return w * binomial(u_count, k - 1);
}

/// Block weight under the chosen scheme. Blocks with m < k-1 get weight 0
/// under Balanced (they score 0 regardless).
inline double block_weight(std::size_t n, std::size_t m, unsigned k, std::size_t num_blocks,
                           WeightScheme scheme) {
    if (scheme == WeightScheme::Equal) return 1.0;
    const double denom = static_cast<double>(num_blocks) * static_cast<double>(n) * binomial(m, k - 1);
    return denom > 0.0 ? 1.0 / denom : 0.0;
}

/// Sets the weight of every block for the given k and scheme.
inline void assign_weights(std::vector<BlockSummary>& blocks, unsigned k, WeightScheme scheme) {
    for (BlockSummary& b : blocks) b.weight = block_weight(b.n, b.m, k, blocks.size(), scheme);
}

/// Ids of blocks with m_b < k-1, whose score is identically zero.
inline std::vector<std::string> degenerate_blocks(std::span<const BlockSummary> blocks, unsigned k) {
    std::vector<std::string> out;
    for (const BlockSummary& b : blocks)
        if (b.m + 1 < k) out.push_back(b.block_id);
    return out;
}

/// Unweighted block score sum_j C(u_j, k-1).
inline double block_score(const BlockSummary& block, unsigned k) {
    double s = 0.0;
    for (std::size_t u : block.placements) {
        if (u > block.m) throw std::invalid_argument("block_score: placement exceeds m");
        s += binomial(u, k - 1);
    }
    return s;
}

/// T_Z = sum_b w_b sum_j C(u_bj, k-1), weights recomputed from `scheme`.
/// Blocks are reduced in the order given.
inline double statistic(std::span<const BlockSummary> blocks, unsigned k, WeightScheme scheme) {
    if (blocks.empty()) throw std::invalid_argument("statistic: no blocks");
    if (k < 2) throw std::invalid_argument("statistic: k must be at least 2");
    double total = 0.0;
    for (const BlockSummary& b : blocks)
        total += block_weight(b.n, b.m, k, blocks.size(), scheme) * block_score(b, k);
    return total;
}

/// Reference implementation by direct enumeration: counts every set of one
/// treated and k-1 controls in which the treated response is strictly largest,
/// times w. Limited to n * C(m, k-1) <= 1e6 sets.
inline double statistic_by_subsets(std::span<const TrialRecord> block_trials, unsigned k,
                                   double w = 1.0) {
    if (k < 2) throw std::invalid_argument("statistic_by_subsets: k must be at least 2");
    std::vector<double> treated;
    std::vector<double> controls;
    for (const TrialRecord& t : block_trials) (t.z == 1 ? treated : controls).push_back(t.response);
    const std::size_t r = k - 1;
    const double sets = static_cast<double>(treated.size()) * binomial(controls.size(), r);
    if (sets > 1e6) throw BudgetExceededError("statistic_by_subsets: more than 1e6 sets");
    if (r > controls.size()) return 0.0;

    std::uint64_t count = 0;
    std::vector<std::size_t> idx(r);
    for (double t : treated) {
        for (std::size_t i = 0; i < r; ++i) idx[i] = i;
        while (true) {
            bool largest = true;
            for (std::size_t i : idx)
                if (!(t > controls[i])) {
                    largest = false;
                    break;
                }
            count += largest ? 1 : 0;
            // Next r-combination of {0, ..., m-1} in lexicographic order.
            std::size_t pos = r;
            while (pos > 0 && idx[pos - 1] == controls.size() - r + pos - 1) --pos;
            if (pos == 0) break;
            ++idx[pos - 1];
            for (std::size_t i = pos; i < r; ++i) idx[i] = idx[i - 1] + 1;
        }
    }
    return w * static_cast<double>(count);
}

}  // namespace interfere
