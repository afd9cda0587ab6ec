#pragma once

// CSV reading and writing for the command-line pipeline. Files are plain
// comma-separated text with a header row; fields are not quoted. Every parse
// error names the file, the line and the field.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "interfere/inference.hpp"
#include "interfere/robust_adjust.hpp"
#include "interfere/sim_engine.hpp"
#include "interfere/trial_scoring.hpp"
#include "interfere/types.hpp"

namespace interfere {

class CsvError : public Error {
public:
    using Error::Error;
};

/// Text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

/// Fixed-point text for human-facing tables.
inline std::string format_fixed(double v, int digits) {
    if (std::abs(v) < 0.5 * std::pow(10.0, -digits)) v = 0.0;  // no "-0.00"
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

struct CsvTable {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  // 1-based source line of each row

    std::size_t column(const std::string& col) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == col) return i;
        throw CsvError(name + ": missing column '" + col + "'");
    }

    [[noreturn]] void fail(std::size_t row, const std::string& field, const std::string& what) const {
        throw CsvError(name + ": line " + std::to_string(lines[row]) + ", field '" + field + "': " + what);
    }

    double real(std::size_t row, std::size_t col) const {
        const std::string& s = rows[row][col];
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v))
            fail(row, header[col], "expected a finite number, got '" + s + "'");
        return v;
    }

    long long integer(std::size_t row, std::size_t col) const {
        const std::string& s = rows[row][col];
        long long v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
            fail(row, header[col], "expected an integer, got '" + s + "'");
        return v;
    }

    std::size_t index(std::size_t row, std::size_t col) const {
        const long long v = integer(row, col);
        if (v < 0) fail(row, header[col], "must be non-negative");
        return static_cast<std::size_t>(v);
    }

    int indicator(std::size_t row, std::size_t col) const {
        const long long v = integer(row, col);
        if (v != 0 && v != 1) fail(row, header[col], "must be 0 or 1");
        return static_cast<int>(v);
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace detail

/// Reads a header row and data rows; blank lines are skipped.
inline CsvTable read_csv(std::istream& in, const std::string& name) {
    CsvTable t;
    t.name = name;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = detail::split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw CsvError(name + ": line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                           " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.lines.push_back(lineno);
    }
    if (t.header.empty()) throw CsvError(name + ": empty file");
    return t;
}

/// series.csv: block_id, t_index, value. Each block's t_index must run 0, 1, 2, ...
inline std::vector<SessionSeries> read_series(std::istream& in, const std::string& name,
                                              double sample_interval = 2.0) {
    const CsvTable t = read_csv(in, name);
    const std::size_t c_block = t.column("block_id"), c_t = t.column("t_index"), c_v = t.column("value");
    std::vector<SessionSeries> out;
    std::map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string& id = t.rows[r][c_block];
        if (id.empty()) t.fail(r, "block_id", "empty block id");
        if (out.empty() || out.back().block_id != id) {
            if (seen.count(id)) t.fail(r, "block_id", "rows of block '" + id + "' are not contiguous");
            seen[id] = out.size();
            out.push_back({id, {}, sample_interval});
        }
        const std::size_t ti = t.index(r, c_t);
        if (ti != out.back().values.size())
            t.fail(r, "t_index", "expected " + std::to_string(out.back().values.size()) + ", got " + std::to_string(ti));
        out.back().values.push_back(t.real(r, c_v));
    }
    return out;
}

/// events.csv: block_id, onset_index, z.
inline std::vector<TrialEvent> read_events(std::istream& in, const std::string& name) {
    const CsvTable t = read_csv(in, name);
    const std::size_t c_block = t.column("block_id"), c_on = t.column("onset_index"), c_z = t.column("z");
    std::vector<TrialEvent> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r][c_block].empty()) t.fail(r, "block_id", "empty block id");
        out.push_back({t.rows[r][c_block], t.index(r, c_on), t.indicator(r, c_z)});
    }
    return out;
}

/// trials.csv: block_id, trial_index, z, response.
inline std::vector<TrialRecord> read_trials(std::istream& in, const std::string& name) {
    const CsvTable t = read_csv(in, name);
    const std::size_t c_block = t.column("block_id"), c_i = t.column("trial_index"), c_z = t.column("z"),
                      c_y = t.column("response");
    std::vector<TrialRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r][c_block].empty()) t.fail(r, "block_id", "empty block id");
        out.push_back({t.rows[r][c_block], t.index(r, c_i), t.indicator(r, c_z), t.real(r, c_y)});
    }
    if (out.empty()) throw CsvError(name + ": no trials");
    return out;
}

inline void write_trials(std::ostream& out, const std::vector<TrialRecord>& trials) {
    out << "block_id,trial_index,z,response\n";
    for (const TrialRecord& t : trials)
        out << t.block_id << ',' << t.index << ',' << t.z << ',' << format_double(t.response) << '\n';
}

/// covariates.csv: block_id, trial_index, then covariate columns. Rows are
/// matched to `trials` by (block_id, trial_index) and returned in trial order.
inline CovariateMatrix read_covariates(std::istream& in, const std::string& name,
                                       const std::vector<TrialRecord>& trials) {
    const CsvTable t = read_csv(in, name);
    const std::size_t c_block = t.column("block_id"), c_i = t.column("trial_index");
    std::vector<std::size_t> cov_cols;
    CovariateMatrix cov;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c == c_block || c == c_i) continue;
        cov_cols.push_back(c);
        cov.names.push_back(t.header[c]);
    }
    if (cov_cols.empty()) throw CsvError(name + ": no covariate columns");

    std::map<std::pair<std::string, std::size_t>, std::size_t> row_of;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto key = std::make_pair(t.rows[r][c_block], t.index(r, c_i));
        if (!row_of.emplace(key, r).second) t.fail(r, "trial_index", "duplicate row for this trial");
    }
    if (row_of.size() != trials.size())
        throw CsvError(name + ": " + std::to_string(row_of.size()) + " covariate rows for " +
                       std::to_string(trials.size()) + " trials");
    cov.values.resize(static_cast<Eigen::Index>(trials.size()), static_cast<Eigen::Index>(cov_cols.size()));
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto it = row_of.find({trials[i].block_id, trials[i].index});
        if (it == row_of.end())
            throw CsvError(name + ": no covariate row for block '" + trials[i].block_id + "', trial " +
                           std::to_string(trials[i].index));
        for (std::size_t j = 0; j < cov_cols.size(); ++j)
            cov.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.real(it->second, cov_cols[j]);
    }
    return cov;
}

/// Per-scan covariates: block_id, t_index, then covariate columns.
struct ScanCovariates {
    std::vector<std::string> names;
    std::map<std::string, std::vector<std::vector<double>>> blocks;  // block -> column -> samples
};

inline ScanCovariates read_scan_covariates(std::istream& in, const std::string& name) {
    const CsvTable t = read_csv(in, name);
    const std::size_t c_block = t.column("block_id"), c_t = t.column("t_index");
    std::vector<std::size_t> cols;
    ScanCovariates out;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c == c_block || c == c_t) continue;
        cols.push_back(c);
        out.names.push_back(t.header[c]);
    }
    if (cols.empty()) throw CsvError(name + ": no covariate columns");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string& id = t.rows[r][c_block];
        if (id.empty()) t.fail(r, "block_id", "empty block id");
        auto& block = out.blocks[id];
        if (block.empty()) block.resize(cols.size());
        const std::size_t ti = t.index(r, c_t);
        if (ti != block[0].size())
            t.fail(r, "t_index", "expected " + std::to_string(block[0].size()) + ", got " + std::to_string(ti));
        for (std::size_t j = 0; j < cols.size(); ++j) block[j].push_back(t.real(r, cols[j]));
    }
    return out;
}

/// Scores every per-scan covariate column with the HRF weights, giving one
/// row per trial aligned with `trials` (matched by block and trial index).
inline CovariateMatrix score_scan_covariates(const ScanCovariates& scans, std::span<const TrialEvent> events,
                                             const std::vector<TrialRecord>& trials, const HrfWeights& w,
                                             double sample_interval = 2.0) {
    std::map<std::string, std::vector<TrialEvent>> by_block;
    for (const TrialEvent& e : events) by_block[e.block_id].push_back(e);
    std::map<std::pair<std::string, std::size_t>, std::vector<double>> rows;
    for (const auto& [id, evs] : by_block) {
        const auto it = scans.blocks.find(id);
        if (it == scans.blocks.end()) throw CsvError("scan covariates: no rows for block '" + id + "'");
        for (std::size_t j = 0; j < scans.names.size(); ++j) {
            const SessionSeries series{id, it->second[j], sample_interval};
            for (const TrialRecord& t : score_trials(series, evs, w)) rows[{id, t.index}].push_back(t.response);
        }
    }
    CovariateMatrix cov;
    cov.names = scans.names;
    cov.values.resize(static_cast<Eigen::Index>(trials.size()), static_cast<Eigen::Index>(scans.names.size()));
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto it = rows.find({trials[i].block_id, trials[i].index});
        if (it == rows.end())
            throw CsvError("scan covariates: no event for block '" + trials[i].block_id + "', trial " +
                           std::to_string(trials[i].index));
        for (std::size_t j = 0; j < scans.names.size(); ++j)
            cov.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = it->second[j];
    }
    return cov;
}

/// report.csv, one row per k: deviate, point estimate and lower bound of the
/// fractional increase.
inline void write_report(std::ostream& out, const std::vector<InferenceReport>& reports) {
    out << "k,direction,T_obs,null_mean,null_sd,deviate,p_value,point_estimate,ci_lower,alpha,mode\n";
    for (const InferenceReport& r : reports)
        out << r.k << ',' << to_string(r.direction) << ',' << format_double(r.T_obs) << ','
            << format_double(r.null_mean) << ',' << format_double(std::sqrt(r.null_var)) << ','
            << format_double(r.deviate) << ',' << format_double(r.p_value) << ','
            << format_double(r.point_estimate_fraction) << ',' << format_double(r.ci_lower_fraction) << ','
            << format_double(r.alpha) << ',' << to_string(r.mode) << '\n';
}

inline void write_power_header(std::ostream& out) {
    out << "scenario,F,interference,nu,lambda,N,ar,test,rejection_rate,se,replications,seed\n";
}

inline void write_power(std::ostream& out, const SimScenario& s, const PowerRow& row) {
    for (std::size_t t = 0; t < row.tests.size(); ++t)
        out << s.id << ',' << to_string(s.F) << ',' << to_string(s.interference) << ',' << s.nu << ','
            << format_double(s.lambda) << ',' << s.N << ',' << (s.ar_noise ? 1 : 0) << ',' << row.tests[t].label()
            << ',' << format_fixed(row.rejection_rate[t], 6) << ',' << format_fixed(row.se[t], 6) << ','
            << row.replications << ',' << s.seed << '\n';
}

struct LimitRow {
    BaseDist F = BaseDist::Normal;
    double delta = 0.0;
    unsigned k = 2;
    LimitProbability value;
};

inline void write_limits(std::ostream& out, const std::vector<LimitRow>& rows) {
    out << "F,delta,k,prob,pct_increase\n";
    for (const LimitRow& r : rows)
        out << to_string(r.F) << ',' << format_double(r.delta) << ',' << r.k << ',' << format_fixed(r.value.prob, 6)
            << ',' << format_fixed(r.value.pct_increase, 4) << '\n';
}

}  // namespace interfere
