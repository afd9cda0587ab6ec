#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "interfere/trial_scoring.hpp"
#include "interfere/types.hpp"

namespace interfere::cli {

/// Parses the command line and runs one subcommand. Returns the process exit
/// code; diagnostics go to `err`, human-readable summaries to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Breaks treated/control ties by adding a tiny seeded perturbation to every
/// tied response. Returns the number of perturbed trials.
std::size_t jitter_ties(std::vector<TrialRecord>& trials, std::uint64_t seed);

/// Synthetic stand-in for the stop-signal data: per-scan series and trial
/// events for each session, plus six nuisance covariates (per trial and per
/// scan) that are independent of everything else.
struct SyntheticData {
    std::vector<SessionSeries> series;
    std::vector<TrialEvent> events;
    std::vector<std::string> covariate_names;
    std::vector<std::vector<double>> covariates;  // one row per event, in event order
    std::vector<std::vector<std::vector<double>>> motion;  // per session: one per-scan series per covariate
};

SyntheticData make_synthetic(std::uint64_t seed, std::size_t blocks = 232);

std::string sha256_hex(std::string_view data);

}  // namespace interfere::cli
