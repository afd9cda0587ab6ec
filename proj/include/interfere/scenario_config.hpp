#pragma once

// INI scenario files for the simulation and limit tables.
//
//   ; comment
//   [defaults]          optional, applies to every scenario below
//   N = 250
//   tests = ttest, k2, k5, k10
//   [normal_noar_A]     one section per scenario, the section name is its id
//   interference = A
//
// A limits file holds a single [limits] section with deltas, k and F lists.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "interfere/sim_engine.hpp"
#include "interfere/types.hpp"

namespace interfere {

class ConfigError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

template <class T>
T parse_number(const std::string& section, const std::string& key, const std::string& text) {
    const std::string v = trim(text);
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError(where(section, key) + ": cannot parse '" + text + "' as a number");
    return out;
}

inline bool parse_bool(const std::string& section, const std::string& key, const std::string& text) {
    const std::string v = lower(trim(text));
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError(where(section, key) + ": expected a boolean, got '" + text + "'");
}

inline BaseDist parse_dist(const std::string& section, const std::string& key, const std::string& text) {
    const std::string v = lower(trim(text));
    if (v == "normal") return BaseDist::Normal;
    if (v == "t2") return BaseDist::T2;
    throw ConfigError(where(section, key) + ": expected normal or t2, got '" + text + "'");
}

inline Interference parse_interference(const std::string& section, const std::string& key, const std::string& text) {
    const std::string v = lower(trim(text));
    if (v == "none") return Interference::None;
    if (v == "a") return Interference::A;
    if (v == "b") return Interference::B;
    if (v == "c") return Interference::C;
    if (v == "d") return Interference::D;
    throw ConfigError(where(section, key) + ": expected none, A, B, C or D, got '" + text + "'");
}

inline void apply_key(SimScenario& s, const std::string& section, const std::string& key, const std::string& value) {
    if (key == "N") s.N = parse_number<std::size_t>(section, key, value);
    else if (key == "p_treat") s.p_treat = parse_number<double>(section, key, value);
    else if (key == "lambda") s.lambda = parse_number<double>(section, key, value);
    else if (key == "nu") s.nu = parse_number<unsigned>(section, key, value);
    else if (key == "F") s.F = parse_dist(section, key, value);
    else if (key == "interference") s.interference = parse_interference(section, key, value);
    else if (key == "ar_noise") s.ar_noise = parse_bool(section, key, value);
    else if (key == "ar_rho") s.ar_rho = parse_number<double>(section, key, value);
    else if (key == "ar_scale") {
        const std::string v = lower(trim(value));
        if (v == "marginal") s.ar_scale = ArScale::UnitMarginal;
        else if (v == "innovation") s.ar_scale = ArScale::UnitInnovation;
        else throw ConfigError(where(section, key) + ": expected marginal or innovation, got '" + value + "'");
    } else if (key == "sides") {
        const std::string v = lower(trim(value));
        if (v == "one") s.sides = Sidedness::OneSided;
        else if (v == "two") s.sides = Sidedness::TwoSided;
        else throw ConfigError(where(section, key) + ": expected one or two, got '" + value + "'");
    } else if (key == "tests") {
        s.tests.clear();
        for (const std::string& t : split_list(value)) {
            try {
                s.tests.push_back(TestSpec::parse(lower(t)));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(where(section, key) + ": " + e.what());
            }
        }
    } else if (key == "alpha") s.alpha = parse_number<double>(section, key, value);
    else if (key == "replications") s.replications = parse_number<std::size_t>(section, key, value);
    else if (key == "seed") s.seed = parse_number<std::uint64_t>(section, key, value);
}

inline const std::set<std::string>& scenario_keys() {
    static const std::set<std::string> keys{"N",        "p_treat",  "lambda", "nu",    "F",            "interference",
                                            "ar_noise", "ar_rho",   "ar_scale", "sides", "tests",      "alpha",
                                            "replications", "seed"};
    return keys;
}

inline boost::property_tree::ptree read_ini(std::istream& in, const std::string& name) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(name + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [key, node] : tree)
        if (node.empty() && !node.data().empty())
            throw ConfigError(name + ": key '" + key + "' outside any [section]");
    return tree;
}

inline void check_keys(const boost::property_tree::ptree& section, const std::string& name,
                       const std::set<std::string>& allowed) {
    std::vector<std::string> unknown;
    for (const auto& [key, node] : section)
        if (!allowed.count(key)) unknown.push_back(key);
    if (unknown.empty()) return;
    std::string msg = "[" + name + "] unknown key(s):";
    for (const std::string& k : unknown) msg += " " + k;
    throw ConfigError(msg);
}

}  // namespace detail

/// Parses a scenario file; scenarios are returned in file order.
inline std::vector<SimScenario> parse_scenarios(std::istream& in, const std::string& name = "config") {
    const auto tree = detail::read_ini(in, name);
    SimScenario defaults;
    std::vector<SimScenario> out;
    for (const auto& [section, node] : tree) {
        if (section == "limits") throw ConfigError(name + ": [limits] belongs in a limits config");
        detail::check_keys(node, section, detail::scenario_keys());
        SimScenario s = defaults;
        s.id = section;
        for (const auto& [key, value] : node) detail::apply_key(s, section, key, value.data());
        if (section == "defaults") {
            defaults = s;
            continue;
        }
        try {
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(name + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw ConfigError(name + ": no scenarios");
    return out;
}

struct LimitsConfig {
    std::vector<double> deltas{0.0, 0.25, 0.5, 1.0};
    std::vector<unsigned> ks{2, 5, 10};
    std::vector<BaseDist> dists{BaseDist::Normal, BaseDist::T2};
};

/// Parses a limits file with a single [limits] section.
inline LimitsConfig parse_limits(std::istream& in, const std::string& name = "config") {
    const auto tree = detail::read_ini(in, name);
    LimitsConfig cfg;
    for (const auto& [section, node] : tree) {
        if (section != "limits") throw ConfigError(name + ": unexpected section [" + section + "]");
        detail::check_keys(node, section, {"deltas", "k", "F"});
        for (const auto& [key, value] : node) {
            const auto items = detail::split_list(value.data());
            if (items.empty()) throw ConfigError(detail::where(section, key) + ": empty list");
            if (key == "deltas") {
                cfg.deltas.clear();
                for (const auto& v : items) cfg.deltas.push_back(detail::parse_number<double>(section, key, v));
            } else if (key == "k") {
                cfg.ks.clear();
                for (const auto& v : items) {
                    const auto k = detail::parse_number<unsigned>(section, key, v);
                    if (k < 2) throw ConfigError(detail::where(section, key) + ": k must be at least 2");
                    cfg.ks.push_back(k);
                }
            } else {
                cfg.dists.clear();
                for (const auto& v : items) cfg.dists.push_back(detail::parse_dist(section, key, v));
            }
        }
    }
    return cfg;
}

}  // namespace interfere
