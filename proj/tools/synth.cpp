#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "commands.hpp"

namespace interfere::cli {

// Sessions have 21..27 stop (treated) and 70..76 go (control) trials in random
// order, one trial every 1-3 scans. The scan series is a sum of HRF-shaped
// responses, a slow drift and AR(1) noise. A stop trial responds more
// strongly, a fraction of them much more strongly, and a go trial that follows
// a stop trial carries a small lingering response.
SyntheticData make_synthetic(std::uint64_t seed, std::size_t blocks) {
    SyntheticData data;
    data.covariate_names = {"tx", "ty", "tz", "rx", "ry", "rz"};
    constexpr double interval = 2.0;
    constexpr std::size_t tail = 20;

    std::vector<double> kernel(kHrfLength + 4);
    for (std::size_t j = 0; j < kernel.size(); ++j) kernel[j] = hrf(interval * static_cast<double>(j));
    const double peak = *std::max_element(kernel.begin(), kernel.end());
    for (double& v : kernel) v /= peak;

    for (std::size_t b = 0; b < blocks; ++b) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(b)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> gauss;
        std::uniform_int_distribution<int> gap(1, 3);
        std::bernoulli_distribution strong(0.3);

        const std::size_t n = 21 + b % 7;
        const std::size_t m = 70 + (3 * b + b / 7) % 7;
        std::vector<int> z(n + m, 0);
        std::fill(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n), 1);
        std::shuffle(z.begin(), z.end(), rng);

        char id[32];
        std::snprintf(id, sizeof id, "s%03zu", b + 1);
        std::vector<std::size_t> onsets(z.size());
        std::size_t t = 4;
        for (std::size_t i = 0; i < z.size(); ++i) {
            onsets[i] = t;
            t += static_cast<std::size_t>(gap(rng));
        }
        const std::size_t len = onsets.back() + tail;

        std::vector<double> y(len, 0.0);
        for (std::size_t i = 0; i < z.size(); ++i) {
            double amp = 1.0;
            if (z[i] == 1) amp += 0.06 + (strong(rng) ? 0.25 : 0.0);
            else if (i > 0 && z[i - 1] == 1) amp += 0.05;
            for (std::size_t j = 0; j < kernel.size() && onsets[i] + j < len; ++j) y[onsets[i] + j] += amp * kernel[j];
        }
        const double slope = 0.01 * gauss(rng);
        const double wobble = 0.5 * gauss(rng);
        double eps = 0.0;
        for (std::size_t s = 0; s < len; ++s) {
            eps = 0.3 * eps + gauss(rng);
            const double x = static_cast<double>(s);
            y[s] += 100.0 + slope * x + wobble * std::cos(std::numbers::pi * x / static_cast<double>(len)) + 0.8 * eps;
        }
        data.series.push_back({id, std::move(y), interval});

        // Head motion: slowly wandering AR(1) traces, unrelated to the task.
        std::vector<std::vector<double>> motion(data.covariate_names.size(), std::vector<double>(len));
        for (auto& trace : motion) {
            double level = 0.0;
            for (double& v : trace) v = level = 0.9 * level + 0.1 * gauss(rng);
        }
        data.motion.push_back(std::move(motion));

        for (std::size_t i = 0; i < z.size(); ++i) {
            data.events.push_back({id, onsets[i], z[i]});
            std::vector<double> row(data.covariate_names.size());
            for (double& v : row) v = gauss(rng);
            data.covariates.push_back(std::move(row));
        }
    }
    return data;
}

}  // namespace interfere::cli
