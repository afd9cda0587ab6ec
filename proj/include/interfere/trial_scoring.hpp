#pragma once

// HRF-weighted scoring of event-related time series.
//
// A session is an evenly sampled series of scans. Every trial onset is
// converted to one scalar response: the dot product of the next 17 scans with
// weights obtained by sampling a double-gamma HRF at the start of each scan
// interval.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "interfere/types.hpp"

namespace interfere {

inline constexpr std::size_t kHrfLength = 17;

struct SessionSeries {
    std::string block_id;
    std::vector<double> values;
    double sample_interval_seconds = 2.0;
};

struct TrialEvent {
    std::string block_id;
    std::size_t onset_index = 0;
    int z = 0;
};

struct HrfWeights {
    std::array<double, kHrfLength> weights{};
};

namespace detail {

// Gamma density with shape `shape` and rate `rate`, evaluated at y >= 0.
inline double gamma_density(double y, double shape, double rate) {
    if (y == 0.0) return shape > 1.0 ? 0.0 : (shape == 1.0 ? rate : INFINITY);
    return std::exp(shape * std::log(rate) + (shape - 1.0) * std::log(y) - rate * y -
                    std::lgamma(shape));
}

}  // namespace detail

/// Double-gamma hemodynamic response at `seconds` after stimulus onset:
/// gamma(16x; 6, 1/16) - gamma(16x; 16, 1/16) / 6.
inline double hrf(double seconds) {
    if (!(seconds >= 0.0)) throw std::domain_error("hrf: time must be nonnegative");
    constexpr double rate = 1.0 / 16.0;
    const double y = 16.0 * seconds;
    return detail::gamma_density(y, 6.0, rate) - detail::gamma_density(y, 16.0, rate) / 6.0;
}

/// Samples the HRF at the start of each of the 17 scan intervals following a
/// trial and normalizes the samples to sum to one.
inline HrfWeights compute_weights(double sample_interval_seconds = 2.0) {
    if (!(sample_interval_seconds > 0.0))
        throw std::domain_error("compute_weights: sample interval must be positive");
    HrfWeights out;
    double total = 0.0;
    for (std::size_t j = 0; j < kHrfLength; ++j) {
        out.weights[j] = hrf(sample_interval_seconds * static_cast<double>(j));
        total += out.weights[j];
    }
    for (double& w : out.weights) w /= total;
    return out;
}

/// Scores every event of one session. Near the end of the series the weight
/// vector is truncated to the available scans and renormalized.
inline std::vector<TrialRecord> score_trials(const SessionSeries& series,
                                             std::span<const TrialEvent> events,
                                             const HrfWeights& w) {
    const std::size_t len = series.values.size();
    std::vector<TrialRecord> out;
    out.reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        const TrialEvent& ev = events[i];
        if (ev.block_id != series.block_id)
            throw std::invalid_argument("score_trials: event for block '" + ev.block_id +
                                        "' passed with series '" + series.block_id + "'");
        if (i > 0 && ev.onset_index < events[i - 1].onset_index)
            throw std::invalid_argument("score_trials: events in block '" + ev.block_id +
                                        "' are not sorted by onset");
        if (ev.z != 0 && ev.z != 1)
            throw std::invalid_argument("score_trials: z must be 0 or 1");
        if (ev.onset_index >= len)
            throw std::out_of_range("score_trials: onset " + std::to_string(ev.onset_index) +
                                    " is past the end of block '" + ev.block_id + "' (" +
                                    std::to_string(len) + " samples)");

        const std::size_t avail = std::min(kHrfLength, len - ev.onset_index);
        double acc = 0.0;
        double wsum = 0.0;
        for (std::size_t j = 0; j < avail; ++j) {
            acc += w.weights[j] * series.values[ev.onset_index + j];
            wsum += w.weights[j];
        }
        if (avail < kHrfLength) {
            if (std::abs(wsum) <= 1e-9)
                throw DegenerateTrialError("score_trials: trial " + std::to_string(i) +
                                           " in block '" + ev.block_id +
                                           "' has truncated weights summing to zero");
            acc /= wsum;
        }
        out.push_back(TrialRecord{ev.block_id, i, ev.z, acc});
    }
    return out;
}

/// Removes slow drifts: regresses the series on a constant, a linear trend and
/// every DCT-II component whose period is at least `cutoff_seconds`, and
/// returns the residuals.
inline SessionSeries highpass_filter(const SessionSeries& series, double cutoff_seconds) {
    const auto n = static_cast<Eigen::Index>(series.values.size());
    if (n < 4) throw std::invalid_argument("highpass_filter: series needs at least 4 samples");
    const double dt = series.sample_interval_seconds;
    if (!(cutoff_seconds > 2.0 * dt))
        throw std::invalid_argument("highpass_filter: cutoff must exceed twice the sample interval");

    // Component j of the DCT-II basis has period 2 n dt / j.
    const double span_seconds = 2.0 * static_cast<double>(n) * dt;
    auto n_cos = static_cast<Eigen::Index>(std::floor(span_seconds / cutoff_seconds));
    n_cos = std::min<Eigen::Index>(n_cos, n - 2);

    Eigen::MatrixXd basis(n, 2 + n_cos);
    for (Eigen::Index t = 0; t < n; ++t) {
        basis(t, 0) = 1.0;
        basis(t, 1) = (static_cast<double>(t) - 0.5 * static_cast<double>(n - 1)) /
                      static_cast<double>(n);
        for (Eigen::Index j = 1; j <= n_cos; ++j)
            basis(t, 1 + j) = std::cos(std::numbers::pi * static_cast<double>(j) *
                                       (2.0 * static_cast<double>(t) + 1.0) /
                                       (2.0 * static_cast<double>(n)));
    }

    const Eigen::Map<const Eigen::VectorXd> y(series.values.data(), n);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    const Eigen::VectorXd fitted = basis * qr.solve(y);

    SessionSeries out{series.block_id, std::vector<double>(series.values.size()), dt};
    for (Eigen::Index t = 0; t < n; ++t) out.values[t] = y(t) - fitted(t);
    return out;
}

}  // namespace interfere
