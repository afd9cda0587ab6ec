#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "interfere/inference.hpp"
#include "interfere/io.hpp"
#include "interfere/robust_adjust.hpp"
#include "interfere/scenario_config.hpp"
#include "interfere/sim_engine.hpp"
#include "interfere/trial_scoring.hpp"

namespace interfere::cli {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256: digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::size_t jitter_ties(std::vector<TrialRecord>& trials, std::uint64_t seed) {
    std::map<std::string, std::pair<std::set<double>, std::set<double>>> groups;
    for (const TrialRecord& t : trials) (t.z == 1 ? groups[t.block_id].first : groups[t.block_id].second).insert(t.response);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::size_t changed = 0;
    for (TrialRecord& t : trials) {
        const auto& [treated, controls] = groups[t.block_id];
        if (!treated.count(t.response) || !controls.count(t.response)) continue;
        t.response += unit(rng) * 1e-9 * std::max(1.0, std::abs(t.response));
        ++changed;
    }
    return changed;
}

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct InputFile {
    std::string path;
    std::string content;
};

InputFile load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return {path, buf.str()};
}

// Writes to a temporary file and renames it, so a failed run leaves no
// partial output.
void save(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + path + "'");
        out << content;
        if (!out.flush()) throw Error("write to '" + path + "' failed");
    }
    fs::rename(tmp, path);
}

class Manifest {
public:
    explicit Manifest(const std::string& subcommand) {
        j_["tool"] = "interfere";
        j_["version"] = INTERFERE_VERSION;
        j_["subcommand"] = subcommand;
        j_["parameters"] = json::object();
        j_["inputs"] = json::array();
        j_["outputs"] = json::array();
    }
    json& params() { return j_["parameters"]; }
    void input(const InputFile& f) { j_["inputs"].push_back({{"path", f.path}, {"sha256", sha256_hex(f.content)}}); }
    void output(const std::string& path, const std::string& content) {
        save(path, content);
        j_["outputs"].push_back({{"path", path}, {"sha256", sha256_hex(content)}});
    }
    void write(const std::string& path) const { save(path, j_.dump(2) + "\n"); }

private:
    json j_;
};

std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

struct TestFlags {
    std::vector<unsigned> ks{2, 5, 10};
    double alpha = 0.05;
    std::string weights = "equal";
    std::string mode = "auto";
    std::string direction = "elevate";
    bool two_sided = false;
    std::optional<std::uint64_t> jitter;
    double dp_budget = kDefaultDpBudget;
    std::string out;
};

void add_test_flags(CLI::App* app, TestFlags& f) {
    app->add_option("--k", f.ks, "Comparison set sizes")->delimiter(',')->check(CLI::Range(2u, 1000u));
    app->add_option("--alpha", f.alpha, "One-sided level of the confidence bound")->check(CLI::Range(1e-12, 0.5));
    app->add_option("--weights", f.weights, "Block weights")->check(CLI::IsMember({"equal", "balanced"}));
    app->add_option("--mode", f.mode, "Null distribution")->check(CLI::IsMember({"auto", "exact", "normal"}));
    app->add_option("--direction", f.direction, "Alternative")->check(CLI::IsMember({"elevate", "suppress"}));
    app->add_flag("--two-sided", f.two_sided, "Report two-sided p-values");
    app->add_option("--jitter", f.jitter, "Break treated/control ties with this seed");
    app->add_option("--dp-budget", f.dp_budget, "State budget of the exact block distribution")->check(CLI::PositiveNumber);
    app->add_option("-o,--out", f.out, "Output report CSV")->required();
}

TestOptions options_for(const TestFlags& f, unsigned k) {
    TestOptions o;
    o.k = k;
    o.alpha = f.alpha;
    o.scheme = f.weights == "balanced" ? WeightScheme::Balanced : WeightScheme::Equal;
    o.mode = f.mode == "exact" ? ModeSelect::Exact : f.mode == "normal" ? ModeSelect::Normal : ModeSelect::Auto;
    o.sides = f.two_sided ? Sidedness::TwoSided : Sidedness::OneSided;
    o.dp_budget = f.dp_budget;
    return o;
}

Direction direction_of(const TestFlags& f) { return f.direction == "suppress" ? Direction::Suppression : Direction::Elevation; }

void record(Manifest& m, const TestFlags& f) {
    json& p = m.params();
    p["k"] = f.ks;
    p["alpha"] = f.alpha;
    p["weights"] = f.weights;
    p["mode"] = f.mode;
    p["direction"] = f.direction;
    p["two_sided"] = f.two_sided;
    p["dp_budget"] = f.dp_budget;
    if (f.jitter) p["jitter_seed"] = *f.jitter;
    else p["jitter_seed"] = nullptr;
}

std::vector<TrialRecord> load_trials(const std::string& path, const TestFlags& f, Manifest& m, std::ostream& err) {
    const InputFile file = load(path);
    m.input(file);
    std::istringstream in(file.content);
    std::vector<TrialRecord> trials = read_trials(in, path);
    if (f.jitter) {
        const std::size_t changed = jitter_ties(trials, *f.jitter);
        if (changed > 0) err << "jittered " << changed << " tied responses\n";
    }
    return trials;
}

void print_reports(std::ostream& out, const std::string& title, const std::vector<InferenceReport>& reports) {
    out << title << "\n";
    out << "  k    deviate   point_est   ci_lower   p_value    mode\n";
    for (const InferenceReport& r : reports) {
        char line[160];
        std::snprintf(line, sizeof line, "%3u %10.3f %11.3f %10.3f %9.3g    %s\n", r.k, r.deviate,
                      r.point_estimate_fraction, r.ci_lower_fraction, r.p_value, to_string(r.mode));
        out << line;
    }
}

void print_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
    std::set<std::string> shown;
    for (const std::string& w : warnings)
        if (shown.insert(w).second) err << "warning: " << w << "\n";
}

std::string report_text(const std::vector<InferenceReport>& reports) {
    std::ostringstream s;
    write_report(s, reports);
    return s.str();
}

// score -------------------------------------------------------------------

struct ScoreFlags {
    std::string series;
    std::string events;
    std::optional<double> cutoff;
    double interval = 2.0;
    std::string out;
};

int cmd_score(const ScoreFlags& f, std::ostream& out, std::ostream& err) {
    Manifest m("score");
    const InputFile series_file = load(f.series);
    const InputFile events_file = load(f.events);
    m.input(series_file);
    m.input(events_file);
    m.params()["filter_cutoff_seconds"] = f.cutoff ? json(*f.cutoff) : json(nullptr);
    m.params()["sample_interval_seconds"] = f.interval;

    std::istringstream series_in(series_file.content), events_in(events_file.content);
    const std::vector<SessionSeries> series = read_series(series_in, f.series, f.interval);
    const std::vector<TrialEvent> events = read_events(events_in, f.events);

    std::map<std::string, std::vector<TrialEvent>> by_block;
    for (const TrialEvent& e : events) by_block[e.block_id].push_back(e);
    std::set<std::string> known;
    for (const SessionSeries& s : series) known.insert(s.block_id);
    for (const auto& [id, evs] : by_block)
        if (!known.count(id)) throw Error(f.events + ": block '" + id + "' has no series in " + f.series);

    const HrfWeights w = compute_weights(f.interval);
    std::vector<TrialRecord> trials;
    for (const SessionSeries& s : series) {
        const auto it = by_block.find(s.block_id);
        if (it == by_block.end()) {
            err << "warning: block '" << s.block_id << "' has no events; skipped\n";
            continue;
        }
        const SessionSeries filtered = f.cutoff ? highpass_filter(s, *f.cutoff) : s;
        const auto scored = score_trials(filtered, it->second, w);
        trials.insert(trials.end(), scored.begin(), scored.end());
    }

    std::ostringstream text;
    write_trials(text, trials);
    m.output(f.out, text.str());
    m.write(manifest_path(f.out));
    out << "scored " << trials.size() << " trials in " << by_block.size() << " blocks\n";
    return 0;
}

// test / lagtest ----------------------------------------------------------

int cmd_test(const std::string& trials_path, const TestFlags& f, bool lagged, std::ostream& out, std::ostream& err) {
    Manifest m(lagged ? "lagtest" : "test");
    record(m, f);
    const std::vector<TrialRecord> trials = load_trials(trials_path, f, m, err);
    std::vector<InferenceReport> reports;
    for (unsigned k : f.ks) {
        const TestOptions opt = options_for(f, k);
        reports.push_back(lagged ? lagged_interference_test(trials, opt, direction_of(f))
                                 : run_test(trials, opt, direction_of(f)));
        print_warnings(err, reports.back().warnings);
    }
    m.output(f.out, report_text(reports));
    m.write(manifest_path(f.out));
    print_reports(out, lagged ? "Lagged comparison (stop-go vs go-go)" : "Test of no effect", reports);
    return 0;
}

// adjust ------------------------------------------------------------------

struct AdjustFlags {
    std::string trials;
    std::string covariates;
    std::string scan_covariates;
    std::string events;
    double interval = 2.0;
    bool per_block = false;
    double tuning = 1.345;
    std::string fits_out;
};

std::string default_fits_path(const std::string& report_path) {
    const fs::path p(report_path);
    return (p.parent_path() / (p.stem().string() + "_fits" + p.extension().string())).string();
}

int cmd_adjust(const AdjustFlags& a, const TestFlags& f, std::ostream& out, std::ostream& err) {
    Manifest m("adjust");
    record(m, f);
    m.params()["per_block"] = a.per_block;
    m.params()["huber_tuning"] = a.tuning;
    HuberOptions huber;
    huber.tuning = a.tuning;
    m.params()["huber_tol"] = huber.tol;
    m.params()["huber_max_iter"] = huber.max_iter;
    const std::vector<TrialRecord> trials = load_trials(a.trials, f, m, err);

    CovariateMatrix cov;
    if (!a.covariates.empty()) {
        const InputFile cov_file = load(a.covariates);
        m.input(cov_file);
        std::istringstream cov_in(cov_file.content);
        cov = read_covariates(cov_in, a.covariates, trials);
    } else {
        const InputFile scan_file = load(a.scan_covariates);
        const InputFile events_file = load(a.events);
        m.input(scan_file);
        m.input(events_file);
        m.params()["sample_interval_seconds"] = a.interval;
        std::istringstream scan_in(scan_file.content), events_in(events_file.content);
        const ScanCovariates scans = read_scan_covariates(scan_in, a.scan_covariates);
        const std::vector<TrialEvent> events = read_events(events_in, a.events);
        cov = score_scan_covariates(scans, events, trials, compute_weights(a.interval), a.interval);
    }
    std::vector<InferenceReport> reports;
    std::vector<RobustFit> fits;
    for (unsigned k : f.ks) {
        AdjustedInference res = adjusted_inference(trials, cov, options_for(f, k), direction_of(f), huber, a.per_block);
        print_warnings(err, res.report.warnings);
        reports.push_back(std::move(res.report));
        if (fits.empty()) fits = std::move(res.fits);
    }

    std::vector<std::string> fit_ids;
    if (a.per_block) {
        std::set<std::string> ids;
        for (const TrialRecord& t : trials) ids.insert(t.block_id);
        fit_ids.assign(ids.begin(), ids.end());
    } else {
        fit_ids.push_back("pooled");
    }
    std::ostringstream fits_text;
    fits_text << "fit,iterations,converged,scale,intercept";
    for (const std::string& name : cov.names) fits_text << ',' << name;
    fits_text << '\n';
    for (std::size_t i = 0; i < fits.size(); ++i) {
        fits_text << fit_ids[i] << ',' << fits[i].iterations << ',' << (fits[i].converged ? 1 : 0) << ','
                  << format_double(fits[i].scale);
        for (Eigen::Index c = 0; c < fits[i].coefficients.size(); ++c)
            fits_text << ',' << format_double(fits[i].coefficients(c));
        fits_text << '\n';
    }

    const std::string fits_path = a.fits_out.empty() ? default_fits_path(f.out) : a.fits_out;
    m.output(f.out, report_text(reports));
    m.output(fits_path, fits_text.str());
    m.write(manifest_path(f.out));
    print_reports(out, "Test of no effect on robust residuals", reports);
    if (a.per_block)
        out << "Huber fits: one per block (" << fits.size() << ")\n";
    else
        out << "Huber fit: pooled, " << fits[0].iterations << " iterations, scale " << format_fixed(fits[0].scale, 4) << "\n";
    return 0;
}

// simulate ----------------------------------------------------------------

struct SimulateFlags {
    std::string config;
    unsigned threads = 1;
    std::optional<std::size_t> replications;
    std::vector<std::string> only;
    std::string out;
};

int cmd_simulate(const SimulateFlags& f, std::ostream& out, std::ostream& err) {
    Manifest m("simulate");
    const InputFile cfg = load(f.config);
    m.input(cfg);
    std::istringstream cfg_in(cfg.content);
    std::vector<SimScenario> scenarios = parse_scenarios(cfg_in, f.config);
    if (!f.only.empty()) {
        for (const std::string& id : f.only)
            if (std::none_of(scenarios.begin(), scenarios.end(), [&](const SimScenario& s) { return s.id == id; }))
                throw Error(f.config + ": no scenario '" + id + "'");
        std::erase_if(scenarios, [&](const SimScenario& s) {
            return std::find(f.only.begin(), f.only.end(), s.id) == f.only.end();
        });
    }
    if (f.replications) {
        if (*f.replications < 1) throw Error("--replications must be positive");
        for (SimScenario& s : scenarios) s.replications = *f.replications;
    }
    m.params()["replications_override"] = f.replications ? json(*f.replications) : json(nullptr);
    m.params()["scenarios"] = json::array();
    for (const SimScenario& s : scenarios) m.params()["scenarios"].push_back(s.id);

    std::ostringstream text;
    write_power_header(text);
    for (const SimScenario& s : scenarios) {
        const PowerRow row = run_scenario(s, f.threads);
        write_power(text, s, row);
        if (row.redraws > 0) err << "scenario " << s.id << ": " << row.redraws << " assignments redrawn\n";
        char line[64];
        std::snprintf(line, sizeof line, "%-24s", s.id.c_str());
        out << line;
        for (std::size_t t = 0; t < row.tests.size(); ++t)
            out << "  " << row.tests[t].label() << "=" << format_fixed(row.rejection_rate[t], 4);
        out << "\n";
    }
    m.output(f.out, text.str());
    m.write(manifest_path(f.out));
    return 0;
}

// limits ------------------------------------------------------------------

struct LimitsFlags {
    std::vector<double> deltas;
    std::vector<unsigned> ks;
    std::vector<std::string> dists;
    std::string config;
    std::string out;
};

int cmd_limits(const LimitsFlags& f, std::ostream& out) {
    Manifest m("limits");
    LimitsConfig cfg;
    if (!f.config.empty()) {
        const InputFile file = load(f.config);
        m.input(file);
        std::istringstream in(file.content);
        cfg = parse_limits(in, f.config);
    }
    if (!f.deltas.empty()) cfg.deltas = f.deltas;
    if (!f.ks.empty()) cfg.ks = f.ks;
    if (!f.dists.empty()) {
        cfg.dists.clear();
        for (const std::string& d : f.dists) cfg.dists.push_back(d == "t2" ? BaseDist::T2 : BaseDist::Normal);
    }
    m.params()["deltas"] = cfg.deltas;
    m.params()["k"] = cfg.ks;
    m.params()["F"] = json::array();
    for (BaseDist d : cfg.dists) m.params()["F"].push_back(to_string(d));

    std::vector<LimitRow> rows;
    for (BaseDist d : cfg.dists)
        for (double delta : cfg.deltas)
            for (unsigned k : cfg.ks) rows.push_back({d, delta, k, limit_probability(delta, k, d)});
    std::ostringstream text;
    write_limits(text, rows);
    m.output(f.out, text.str());
    m.write(manifest_path(f.out));

    for (int panel = 0; panel < 2; ++panel) {
        out << (panel == 0 ? "Probability a treated response exceeds k-1 controls\n" : "Percent increase above chance\n");
        out << "  delta";
        for (BaseDist d : cfg.dists)
            for (unsigned k : cfg.ks) {
                char h[32];
                std::snprintf(h, sizeof h, "  %6s k=%-2u", to_string(d), k);
                out << h;
            }
        out << "\n";
        for (double delta : cfg.deltas) {
            char c[32];
            std::snprintf(c, sizeof c, "%7.2f", delta);
            out << c;
            for (const LimitRow& r : rows) {
                if (r.delta != delta) continue;
                const std::string v = format_fixed(panel == 0 ? r.value.prob : r.value.pct_increase, panel == 0 ? 2 : 0);
                std::snprintf(c, sizeof c, "  %11s", v.c_str());
                out << c;
            }
            out << "\n";
        }
    }
    return 0;
}

// synth -------------------------------------------------------------------

struct SynthFlags {
    std::string dir;
    std::uint64_t seed = 20090601;
    std::size_t blocks = 232;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
    if (f.blocks < 1) throw Error("--blocks must be positive");
    fs::create_directories(f.dir);
    Manifest m("synth");
    m.params()["seed"] = f.seed;
    m.params()["blocks"] = f.blocks;
    const SyntheticData data = make_synthetic(f.seed, f.blocks);

    std::ostringstream series, events, covs, motion;
    motion << "block_id,t_index";
    for (const std::string& n : data.covariate_names) motion << ',' << n;
    motion << '\n';
    for (std::size_t b = 0; b < data.series.size(); ++b)
        for (std::size_t t = 0; t < data.series[b].values.size(); ++t) {
            motion << data.series[b].block_id << ',' << t;
            for (const auto& col : data.motion[b]) motion << ',' << format_double(col[t]);
            motion << '\n';
        }
    series << "block_id,t_index,value\n";
    for (const SessionSeries& s : data.series)
        for (std::size_t t = 0; t < s.values.size(); ++t)
            series << s.block_id << ',' << t << ',' << format_double(s.values[t]) << '\n';
    events << "block_id,onset_index,z\n";
    covs << "block_id,trial_index";
    for (const std::string& n : data.covariate_names) covs << ',' << n;
    covs << '\n';
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < data.events.size(); ++i) {
        const TrialEvent& e = data.events[i];
        events << e.block_id << ',' << e.onset_index << ',' << e.z << '\n';
        covs << e.block_id << ',' << position[e.block_id]++;
        for (double v : data.covariates[i]) covs << ',' << format_double(v);
        covs << '\n';
    }
    const fs::path dir(f.dir);
    m.output((dir / "series.csv").string(), series.str());
    m.output((dir / "events.csv").string(), events.str());
    m.output((dir / "covariates.csv").string(), covs.str());
    m.output((dir / "motion.csv").string(), motion.str());
    m.write((dir / "synth.manifest.json").string());
    out << "wrote " << data.series.size() << " sessions and " << data.events.size() << " trials to " << f.dir << "\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Randomization inference for attributable effects with interference between trials", "interfere"};
    app.set_version_flag("--version", std::string("interfere ") + INTERFERE_VERSION);
    app.require_subcommand(1);

    ScoreFlags score;
    auto* score_cmd = app.add_subcommand("score", "Score trials from scan series and events");
    score_cmd->add_option("series", score.series, "series.csv")->required();
    score_cmd->add_option("events", score.events, "events.csv")->required();
    score_cmd->add_option("--filter-cutoff", score.cutoff, "High-pass cutoff in seconds")->check(CLI::PositiveNumber);
    score_cmd->add_option("--interval", score.interval, "Seconds between scans")->check(CLI::PositiveNumber);
    score_cmd->add_option("-o,--out", score.out, "Output trials CSV")->required();

    TestFlags test_flags;
    std::string test_trials;
    auto* test_cmd = app.add_subcommand("test", "Test of no effect and attributable-effect bounds");
    test_cmd->add_option("trials", test_trials, "trials.csv")->required();
    add_test_flags(test_cmd, test_flags);

    TestFlags lag_flags;
    std::string lag_trials;
    auto* lag_cmd = app.add_subcommand("lagtest", "Compare go trials after a stop trial with go trials after a go trial");
    lag_cmd->add_option("trials", lag_trials, "trials.csv")->required();
    add_test_flags(lag_cmd, lag_flags);

    TestFlags adjust_flags;
    AdjustFlags adjust;
    auto* adjust_cmd = app.add_subcommand("adjust", "Test on residuals of a Huber regression on covariates");
    adjust_cmd->add_option("trials", adjust.trials, "trials.csv")->required();
    auto* cov_opt = adjust_cmd->add_option("covariates", adjust.covariates, "Per-trial covariates.csv");
    auto* scan_opt = adjust_cmd->add_option("--scan-covariates", adjust.scan_covariates,
                                            "Per-scan covariates, scored with the HRF weights");
    auto* events_opt = adjust_cmd->add_option("--events", adjust.events, "events.csv for --scan-covariates");
    adjust_cmd->add_option("--interval", adjust.interval, "Seconds between scans")->check(CLI::PositiveNumber);
    scan_opt->needs(events_opt);
    events_opt->needs(scan_opt);
    cov_opt->excludes(scan_opt);
    adjust_cmd->callback([&] {
        if (adjust.covariates.empty() && adjust.scan_covariates.empty())
            throw CLI::ValidationError("adjust", "give a covariates file or --scan-covariates with --events");
    });
    adjust_cmd->add_flag("--per-block", adjust.per_block, "Fit one regression per block");
    adjust_cmd->add_option("--huber-c", adjust.tuning, "Huber tuning constant")->check(CLI::PositiveNumber);
    adjust_cmd->add_option("--fits-out", adjust.fits_out, "Fit diagnostics CSV (default: <out>_fits.csv)");
    add_test_flags(adjust_cmd, adjust_flags);

    SimulateFlags sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo size and power study");
    sim_cmd->add_option("config", sim.config, "Scenario file")->required();
    sim_cmd->add_option("--threads", sim.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
    sim_cmd->add_option("--replications", sim.replications, "Override every scenario's replication count");
    sim_cmd->add_option("--scenario", sim.only, "Run only these scenario ids")->delimiter(',');
    sim_cmd->add_option("-o,--out", sim.out, "Output power CSV")->required();

    LimitsFlags limits;
    auto* limits_cmd = app.add_subcommand("limits", "Limiting probability that a treated response beats k-1 controls");
    limits_cmd->add_option("--deltas", limits.deltas, "Shifts")->delimiter(',');
    limits_cmd->add_option("--k", limits.ks, "Comparison set sizes")->delimiter(',')->check(CLI::Range(2u, 1000u));
    limits_cmd->add_option("--dist", limits.dists, "Error distributions")->delimiter(',')->check(CLI::IsMember({"normal", "t2"}));
    limits_cmd->add_option("--config", limits.config, "Limits file");
    limits_cmd->add_option("-o,--out", limits.out, "Output CSV")->required();

    SynthFlags synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic stop-signal data set");
    synth_cmd->add_option("--out-dir", synth.dir, "Output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "Random seed");
    synth_cmd->add_option("--blocks", synth.blocks, "Number of sessions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (score_cmd->parsed()) return cmd_score(score, out, err);
        if (test_cmd->parsed()) return cmd_test(test_trials, test_flags, false, out, err);
        if (lag_cmd->parsed()) return cmd_test(lag_trials, lag_flags, true, out, err);
        if (adjust_cmd->parsed()) return cmd_adjust(adjust, adjust_flags, out, err);
        if (sim_cmd->parsed()) return cmd_simulate(sim, out, err);
        if (limits_cmd->parsed()) return cmd_limits(limits, out);
        if (synth_cmd->parsed()) return cmd_synth(synth, out);
    } catch (const TiesError& e) {
        err << "error: " << e.what() << " (rerun with --jitter SEED to break ties)\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace interfere::cli
