#pragma once

// Monte Carlo size and power study for a completely randomized experiment
// (one block) with a mixture alternative: a successful treated trial responds
// like the maximum of nu control draws, unless an interference rule based on
// the preceding trials' treatments suppresses it.
//
// Random streams: replication r draws from independent mt19937_64 engines
// seeded by std::seed_seq{seed_lo, seed_hi, r_lo, r_hi, purpose}, one per
// purpose (assignment, success flags, responses, AR noise). Results therefore
// do not depend on how replications are distributed over threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "interfere/inference.hpp"
#include "interfere/normal.hpp"
#include "interfere/null_dist.hpp"
#include "interfere/placement_stat.hpp"

namespace interfere {

enum class BaseDist { Normal, T2 };
enum class Interference { None, A, B, C, D };

// Scale of the AR(1) errors: unit marginal variance, or unit innovation
// variance (marginal 1 / (1 - rho^2)).
enum class ArScale { UnitMarginal, UnitInnovation };

inline const char* to_string(BaseDist f) { return f == BaseDist::Normal ? "normal" : "t2"; }
inline const char* to_string(Interference i) {
    switch (i) {
        case Interference::None: return "none";
        case Interference::A: return "A";
        case Interference::B: return "B";
        case Interference::C: return "C";
        case Interference::D: return "D";
    }
    return "?";
}
inline const char* to_string(ArScale a) { return a == ArScale::UnitMarginal ? "marginal" : "innovation"; }
inline const char* to_string(Sidedness s) { return s == Sidedness::OneSided ? "one" : "two"; }

struct TestSpec {
    enum class Kind { TTest, PermT, Placement };
    Kind kind = Kind::Placement;
    unsigned k = 2;

    std::string label() const {
        switch (kind) {
            case Kind::TTest: return "ttest";
            case Kind::PermT: return "perm_t";
            case Kind::Placement: return "k" + std::to_string(k);
        }
        return "?";
    }
    static TestSpec parse(const std::string& s) {
        if (s == "ttest") return {Kind::TTest, 0};
        if (s == "perm_t") return {Kind::PermT, 0};
        if (s.size() > 1 && s[0] == 'k' && s.find_first_not_of("0123456789", 1) == std::string::npos) {
            const auto k = static_cast<unsigned>(std::stoul(s.substr(1)));
            if (k >= 2) return {Kind::Placement, k};
        }
        throw std::invalid_argument("unknown test '" + s + "' (expected ttest, perm_t or k<N> with N >= 2)");
    }
    friend bool operator==(const TestSpec&, const TestSpec&) = default;
};

struct SimScenario {
    std::string id = "scenario";
    std::size_t N = 250;
    double p_treat = 0.5;
    double lambda = 0.5;
    unsigned nu = 1;
    BaseDist F = BaseDist::Normal;
    Interference interference = Interference::None;
    bool ar_noise = false;
    double ar_rho = 0.5;
    ArScale ar_scale = ArScale::UnitMarginal;
    Sidedness sides = Sidedness::OneSided;
    std::vector<TestSpec> tests = {{TestSpec::Kind::TTest, 0},
                                   {TestSpec::Kind::Placement, 2},
                                   {TestSpec::Kind::Placement, 5},
                                   {TestSpec::Kind::Placement, 10}};
    double alpha = 0.05;
    std::size_t replications = 5000;
    std::uint64_t seed = 20090601;

    void validate() const {
        if (N < 4) throw std::invalid_argument("scenario " + id + ": N must be at least 4");
        if (!(p_treat > 0.0 && p_treat < 1.0)) throw std::invalid_argument("scenario " + id + ": p_treat must be in (0, 1)");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("scenario " + id + ": lambda must be in [0, 1]");
        if (nu < 1) throw std::invalid_argument("scenario " + id + ": nu must be at least 1");
        if (!(ar_rho >= 0.0 && ar_rho < 1.0)) throw std::invalid_argument("scenario " + id + ": ar_rho must be in [0, 1)");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("scenario " + id + ": alpha must be in (0, 1)");
        if (tests.empty()) throw std::invalid_argument("scenario " + id + ": no tests requested");
        if (replications < 1) throw std::invalid_argument("scenario " + id + ": replications must be positive");
        unsigned k_max = 2;
        for (const TestSpec& t : tests)
            if (t.kind == TestSpec::Kind::Placement) k_max = std::max(k_max, t.k);
        if (N < 2 + std::max<std::size_t>(2, k_max - 1))
            throw std::invalid_argument("scenario " + id + ": N too small for k = " + std::to_string(k_max));
    }
};

struct PowerRow {
    std::string scenario_id;
    std::vector<TestSpec> tests;
    std::vector<std::size_t> rejections;
    std::vector<double> rejection_rate;
    std::vector<double> se;
    std::size_t replications = 0;
    std::size_t redraws = 0;  // assignments redrawn for lacking treated or control trials
};

using Rng = std::mt19937_64;

enum class StreamPurpose : std::uint32_t { Assignment = 1, Success = 2, Response = 3, Noise = 4 };

/// Independent engine for (seed, replication, purpose).
inline Rng make_stream(std::uint64_t seed, std::uint64_t replication, StreamPurpose purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return Rng(seq);
}

/// One response: a draw from F, or the maximum of nu draws from F when the
/// trial is (effectively) successful.
inline double draw_response(BaseDist f, unsigned nu, bool successful, Rng& rng) {
    if (nu < 1) throw std::invalid_argument("draw_response: nu must be at least 1");
    const unsigned draws = successful ? nu : 1;
    double best = -std::numeric_limits<double>::infinity();
    if (f == BaseDist::Normal) {
        std::normal_distribution<double> dist;
        for (unsigned i = 0; i < draws; ++i) best = std::max(best, dist(rng));
    } else {
        std::student_t_distribution<double> dist(2.0);
        for (unsigned i = 0; i < draws; ++i) best = std::max(best, dist(rng));
    }
    return best;
}

/// Success flags that survive the interference rule. Trials without enough
/// predecessors fail the A-D conditions; control trials are never successful.
inline std::vector<bool> apply_interference(std::span<const int> z, const std::vector<bool>& success, Interference type) {
    if (z.size() != success.size()) throw std::invalid_argument("apply_interference: length mismatch");
    std::vector<bool> out(z.size(), false);
    auto prev_controls = [&](std::size_t i, std::size_t count) {
        if (i < count) return false;
        for (std::size_t j = 1; j <= count; ++j)
            if (z[i - j] != 0) return false;
        return true;
    };
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] != 1 || !success[i]) continue;
        switch (type) {
            case Interference::None: out[i] = true; break;
            case Interference::A: out[i] = prev_controls(i, 1); break;
            case Interference::B: out[i] = i >= 1 && z[i - 1] == 1; break;
            case Interference::C: out[i] = prev_controls(i, 2); break;
            case Interference::D: out[i] = prev_controls(i, 3); break;
        }
    }
    return out;
}

/// Adds stationary AR(1) errors with lag-one autocorrelation rho. The series
/// starts in its stationary distribution under either scale.
inline void add_ar_noise(std::span<double> responses, double rho, Rng& rng,
                         ArScale scale = ArScale::UnitMarginal) {
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("add_ar_noise: rho must be in [0, 1)");
    std::normal_distribution<double> dist;
    const double stationary_sd = std::sqrt(1.0 / (1.0 - rho * rho));
    const double marginal_sd = scale == ArScale::UnitMarginal ? 1.0 : stationary_sd;
    const double innov_sd = marginal_sd / stationary_sd;
    double eps = 0.0;
    for (std::size_t t = 0; t < responses.size(); ++t) {
        eps = t == 0 ? marginal_sd * dist(rng) : rho * eps + innov_sd * dist(rng);
        responses[t] += eps;
    }
}

struct TTestResult {
    double statistic = 0.0;
    bool reject = false;
};

namespace detail {

struct GroupStats {
    std::size_t n1 = 0, n0 = 0;
    double mean1 = 0.0, mean0 = 0.0;
    double ss1 = 0.0, ss0 = 0.0;  // within-group sums of squares
};

inline GroupStats group_stats(std::span<const double> y, std::span<const int> z) {
    if (y.size() != z.size()) throw std::invalid_argument("t-test: length mismatch");
    GroupStats g;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (z[i] == 1) {
            ++g.n1;
            g.mean1 += y[i];
        } else {
            ++g.n0;
            g.mean0 += y[i];
        }
    }
    if (g.n1 < 2 || g.n0 < 2) throw std::invalid_argument("t-test: each group needs at least 2 trials");
    g.mean1 /= static_cast<double>(g.n1);
    g.mean0 /= static_cast<double>(g.n0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - (z[i] == 1 ? g.mean1 : g.mean0);
        (z[i] == 1 ? g.ss1 : g.ss0) += d * d;
    }
    return g;
}

}  // namespace detail

/// Pooled-variance two-sample t statistic (treated minus control), rejection
/// against Student t with N - 2 df.
inline TTestResult pooled_t_test(std::span<const double> y, std::span<const int> z, double alpha = 0.05,
                                 Sidedness sides = Sidedness::OneSided) {
    const detail::GroupStats g = detail::group_stats(y, z);
    const double df = static_cast<double>(g.n1 + g.n0 - 2);
    const double pooled_var = (g.ss1 + g.ss0) / df;
    const double se = std::sqrt(pooled_var * (1.0 / static_cast<double>(g.n1) + 1.0 / static_cast<double>(g.n0)));
    TTestResult r;
    r.statistic = (g.mean1 - g.mean0) / se;
    const double tail = sides == Sidedness::OneSided ? alpha : alpha / 2.0;
    const double crit = boost::math::quantile(boost::math::students_t_distribution<double>(df), 1.0 - tail);
    r.reject = (sides == Sidedness::OneSided ? r.statistic : std::abs(r.statistic)) > crit;
    return r;
}

/// Difference in means standardized by its randomization standard error
/// (moments of the permutation distribution), referred to the Normal.
inline TTestResult permutation_t_test(std::span<const double> y, std::span<const int> z, double alpha = 0.05,
                                      Sidedness sides = Sidedness::OneSided) {
    const detail::GroupStats g = detail::group_stats(y, z);
    const double n = static_cast<double>(g.n1 + g.n0);
    const double grand = (g.mean1 * static_cast<double>(g.n1) + g.mean0 * static_cast<double>(g.n0)) / n;
    double total_ss = 0.0;
    for (double v : y) total_ss += (v - grand) * (v - grand);
    const double s2 = total_ss / (n - 1.0);
    const double se = std::sqrt(s2 * (1.0 / static_cast<double>(g.n1) + 1.0 / static_cast<double>(g.n0)));
    TTestResult r;
    r.statistic = (g.mean1 - g.mean0) / se;
    const double tail = sides == Sidedness::OneSided ? alpha : alpha / 2.0;
    r.reject = (sides == Sidedness::OneSided ? r.statistic : std::abs(r.statistic)) > norm_quantile(1.0 - tail);
    return r;
}

namespace detail {

struct ReplicationWorkspace {
    std::vector<int> z;
    std::vector<bool> success;
    std::vector<double> y;
    std::vector<double> treated;
    std::vector<double> controls;
};

// Runs replication `rep` and adds its rejections to `rejections`; returns the
// number of assignment redraws.
inline std::size_t run_replication(const SimScenario& s, std::size_t rep, std::span<const ScoreTable> tables,
                                   double z_crit, std::vector<std::size_t>& rejections, ReplicationWorkspace& ws) {
    Rng assign_rng = make_stream(s.seed, rep, StreamPurpose::Assignment);
    Rng success_rng = make_stream(s.seed, rep, StreamPurpose::Success);
    Rng response_rng = make_stream(s.seed, rep, StreamPurpose::Response);

    unsigned k_max = 2;
    for (const TestSpec& t : s.tests)
        if (t.kind == TestSpec::Kind::Placement) k_max = std::max(k_max, t.k);
    const std::size_t min_controls = std::max<std::size_t>(2, k_max - 1);

    std::bernoulli_distribution treat(s.p_treat);
    std::size_t redraws = 0;
    std::size_t n1 = 0;
    ws.z.assign(s.N, 0);
    while (true) {
        n1 = 0;
        for (std::size_t i = 0; i < s.N; ++i) {
            ws.z[i] = treat(assign_rng) ? 1 : 0;
            n1 += static_cast<std::size_t>(ws.z[i]);
        }
        if (n1 >= 2 && s.N - n1 >= min_controls) break;
        ++redraws;
    }

    std::bernoulli_distribution succeed(s.lambda);
    ws.success.assign(s.N, false);
    for (std::size_t i = 0; i < s.N; ++i)
        if (ws.z[i] == 1) ws.success[i] = succeed(success_rng);
    const std::vector<bool> effective = apply_interference(ws.z, ws.success, s.interference);

    ws.y.resize(s.N);
    for (std::size_t i = 0; i < s.N; ++i) ws.y[i] = draw_response(s.F, s.nu, effective[i], response_rng);
    if (s.ar_noise) {
        Rng noise_rng = make_stream(s.seed, rep, StreamPurpose::Noise);
        add_ar_noise(ws.y, s.ar_rho, noise_rng, s.ar_scale);
    }

    ws.treated.clear();
    ws.controls.clear();
    for (std::size_t i = 0; i < s.N; ++i) (ws.z[i] == 1 ? ws.treated : ws.controls).push_back(ws.y[i]);
    const std::vector<std::size_t> placed = placement_counts(ws.treated, ws.controls);
    const std::size_t m = ws.controls.size();

    std::size_t table_idx = 0;
    for (std::size_t t = 0; t < s.tests.size(); ++t) {
        const TestSpec& test = s.tests[t];
        bool reject = false;
        switch (test.kind) {
            case TestSpec::Kind::TTest: reject = pooled_t_test(ws.y, ws.z, s.alpha, s.sides).reject; break;
            case TestSpec::Kind::PermT: reject = permutation_t_test(ws.y, ws.z, s.alpha, s.sides).reject; break;
            case TestSpec::Kind::Placement: {
                const ScoreTable& table = tables[table_idx++];
                double stat = 0.0;
                for (std::size_t u : placed) stat += table.score(u);
                const Moments mom = table.moments(n1, m);
                const double dev = mom.variance > 0.0 ? (stat - mom.mean) / std::sqrt(mom.variance) : 0.0;
                reject = (s.sides == Sidedness::OneSided ? dev : std::abs(dev)) > z_crit;
                break;
            }
        }
        rejections[t] += reject ? 1 : 0;
    }
    return redraws;
}

}  // namespace detail

/// Runs every replication of a scenario; output is identical for any thread count.
inline PowerRow run_scenario(const SimScenario& s, unsigned threads = 1) {
    s.validate();
    std::vector<ScoreTable> tables;
    for (const TestSpec& t : s.tests)
        if (t.kind == TestSpec::Kind::Placement) tables.emplace_back(s.N, t.k);
    const double z_crit = norm_quantile(1.0 - (s.sides == Sidedness::OneSided ? s.alpha : s.alpha / 2.0));

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(s.replications)));
    std::vector<std::vector<std::size_t>> counts(threads, std::vector<std::size_t>(s.tests.size(), 0));
    std::vector<std::size_t> redraws(threads, 0);

    auto worker = [&](unsigned w) {
        detail::ReplicationWorkspace ws;
        for (std::size_t rep = w; rep < s.replications; rep += threads)
            redraws[w] += detail::run_replication(s, rep, tables, z_crit, counts[w], ws);
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    }

    PowerRow row;
    row.scenario_id = s.id;
    row.tests = s.tests;
    row.replications = s.replications;
    row.rejections.assign(s.tests.size(), 0);
    for (unsigned w = 0; w < threads; ++w) {
        for (std::size_t t = 0; t < s.tests.size(); ++t) row.rejections[t] += counts[w][t];
        row.redraws += redraws[w];
    }
    for (std::size_t count : row.rejections) {
        const double p = static_cast<double>(count) / static_cast<double>(s.replications);
        row.rejection_rate.push_back(p);
        row.se.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(s.replications)));
    }
    return row;
}

struct LimitProbability {
    double prob = 0.0;
    double pct_increase = 0.0;
};

/// Probability that one treated response, shifted by delta, exceeds k - 1
/// independent control responses from F, and its percent increase over the
/// chance level 1/k.
inline LimitProbability limit_probability(double delta, unsigned k, BaseDist f) {
    if (k < 2) throw std::invalid_argument("limit_probability: k must be at least 2");
    const double power = static_cast<double>(k - 1);
    auto integrand = [&](double x) {
        if (f == BaseDist::Normal) return norm_pdf(x - delta) * std::pow(norm_cdf(x), power);
        const double u = x - delta;
        const double density = std::pow(2.0 + u * u, -1.5);
        const double cdf = 0.5 + x / (2.0 * std::sqrt(2.0 + x * x));
        return density * std::pow(cdf, power);
    };
    double error = 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    const double p = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, 1e-12, &error);
    if (!(error < 1e-6) || !std::isfinite(p))
        throw std::runtime_error("limit_probability: quadrature did not converge");
    const double chance = 1.0 / static_cast<double>(k);
    return {p, 100.0 * (p - chance) / chance};
}

}  // namespace interfere
