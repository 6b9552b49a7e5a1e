#pragma once

// Flat key = value run configuration shared by all commands. Lines starting
// with '#' (or text after an unquoted '#') are comments. Unknown keys are
// rejected. Relative paths resolve against the directory of the config file.

#include <cmath>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmf/error.hpp"
#include "mmf/model.hpp"
#include "mmf/sampler.hpp"
#include "mmf/simgen.hpp"
#include "mmf/trace.hpp"

namespace mmf {

struct RunConfig {
    // paths
    std::string counts;       // counts TSV (fit, summarize, diagnose)
    std::string tree;         // Newick tree (fit, summarize; optional for simulate)
    std::string out = "out";  // output directory
    std::string traces;       // directory holding trace_chain*.bin; defaults to out
    std::string labels;       // optional host label TSV for heatmap row colours
    std::string truth_A;      // optional truth files for recovery_report.csv
    std::string truth_B;
    bool heatmaps = false;

    SamplerConfig sampler;
    Hyperparameters hp;
    SimScenario scenario;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || used != v.size() || !std::isfinite(out))
        throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
    return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || used != v.size()) throw ValidationError("config: '" + key + "' expects an integer, got '" + v + "'");
    return out;
}

inline int parse_int32(const std::string& key, const std::string& v) {
    const long long x = parse_int(key, v);
    if (x < -2147483647LL || x > 2147483647LL) throw ValidationError("config: '" + key + "' out of range");
    return static_cast<int>(x);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || v[0] == '-' || used != v.size())
        throw ValidationError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    for (const auto& cell : split(v, ',')) out.push_back(parse_double(key, trim(cell)));
    return out;
}

// shortest round-trip form, so a written scenario reproduces the same draw
inline std::string fmt_exact(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string join_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) out += ',';
        out += fmt_exact(v[k]);
    }
    return out;
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    bool is_path = false;
};

inline const std::map<std::string, Field>& config_fields() {
    using C = RunConfig;
    using S = const std::string&;
    static const std::map<std::string, Field> fields = {
        {"counts", {[](C& c, S v) { c.counts = v; }, true}},
        {"tree", {[](C& c, S v) { c.tree = v; }, true}},
        {"out", {[](C& c, S v) { c.out = v; }, true}},
        {"traces", {[](C& c, S v) { c.traces = v; }, true}},
        {"labels", {[](C& c, S v) { c.labels = v; }, true}},
        {"truth_A", {[](C& c, S v) { c.truth_A = v; }, true}},
        {"truth_B", {[](C& c, S v) { c.truth_B = v; }, true}},
        {"heatmaps", {[](C& c, S v) { c.heatmaps = parse_bool("heatmaps", v); }}},

        {"seed", {[](C& c, S v) { c.sampler.seed = c.scenario.seed = parse_u64("seed", v); }}},
        {"iterations", {[](C& c, S v) { c.sampler.iterations = parse_int32("iterations", v); }}},
        {"burn_in", {[](C& c, S v) { c.sampler.burn_in = parse_int32("burn_in", v); }}},
        {"thin", {[](C& c, S v) { c.sampler.thin = parse_int32("thin", v); }}},
        {"chains", {[](C& c, S v) { c.sampler.n_chains = parse_int32("chains", v); }}},
        {"init", {[](C& c, S v) { c.sampler.init = parse_int32("init", v); }}},
        {"scale_log_w", {[](C& c, S v) { c.sampler.scale_log_w = parse_double("scale_log_w", v); }}},
        {"scale_c", {[](C& c, S v) { c.sampler.scale_c = parse_double("scale_c", v); }}},
        {"scale_log_s", {[](C& c, S v) { c.sampler.scale_log_s = parse_double("scale_log_s", v); }}},
        {"scale_log_t", {[](C& c, S v) { c.sampler.scale_log_t = parse_double("scale_log_t", v); }}},
        {"pk_c", {[](C& c, S v) { c.sampler.pk_c = parse_double("pk_c", v); }}},
        {"pk_delta", {[](C& c, S v) { c.sampler.pk_delta = parse_double("pk_delta", v); }}},
        {"m_update",
         {[](C& c, S v) {
             if (v == "total_rate") c.sampler.m_update = MUpdate::total_rate;
             else if (v == "per_taxon") c.sampler.m_update = MUpdate::per_taxon;
             else throw ValidationError("config: m_update must be total_rate or per_taxon");
         }}},
        {"refit_iterations", {[](C& c, S v) { c.sampler.refit_iterations = parse_int32("refit_iterations", v); }}},
        {"refit_burn_in", {[](C& c, S v) { c.sampler.refit_burn_in = parse_int32("refit_burn_in", v); }}},
        {"fix_z", {[](C& c, S v) { c.sampler.fix_z = parse_bool("fix_z", v); }}},

        {"alpha_s", {[](C& c, S v) { c.hp.alpha_s = parse_double("alpha_s", v); }}},
        {"beta_s", {[](C& c, S v) { c.hp.beta_s = parse_double("beta_s", v); }}},
        {"alpha_t", {[](C& c, S v) { c.hp.alpha_t = parse_double("alpha_t", v); }}},
        {"beta_t", {[](C& c, S v) { c.hp.beta_t = parse_double("beta_t", v); }}},
        {"mu_c", {[](C& c, S v) { c.hp.mu_c = parse_double("mu_c", v); }}},
        {"sigma2_c", {[](C& c, S v) { c.hp.sigma2_c = parse_double("sigma2_c", v); }}},
        {"alpha_w", {[](C& c, S v) { c.hp.alpha_w = parse_double("alpha_w", v); }}},
        {"beta_w", {[](C& c, S v) { c.hp.beta_w = parse_double("beta_w", v); }}},
        {"alpha_rho", {[](C& c, S v) { c.hp.alpha_rho = parse_double("alpha_rho", v); }}},
        {"beta_rho", {[](C& c, S v) { c.hp.beta_rho = parse_double("beta_rho", v); }}},
        {"m_shape", {[](C& c, S v) { c.hp.m_shape = parse_double("m_shape", v); }}},
        {"m_rate", {[](C& c, S v) { c.hp.m_rate = parse_double("m_rate", v); }}},

        {"n", {[](C& c, S v) { c.scenario.n = parse_int32("n", v); }}},
        {"p", {[](C& c, S v) { c.scenario.p = parse_int32("p", v); }}},
        {"K", {[](C& c, S v) { c.scenario.K = parse_int32("K", v); }}},
        {"block_size", {[](C& c, S v) { c.scenario.block_size = parse_int32("block_size", v); }}},
        {"flip_frac", {[](C& c, S v) { c.scenario.flip_frac = parse_double("flip_frac", v); }}},
        {"p_k_true", {[](C& c, S v) { c.scenario.p_k_true = parse_double("p_k_true", v); }}},
        {"w_true", {[](C& c, S v) { c.scenario.w_true = parse_list("w_true", v); }}},
        {"c_true", {[](C& c, S v) { c.scenario.c_true = parse_double("c_true", v); }}},
        {"s", {[](C& c, S v) { c.scenario.s = parse_double("s", v); }}},
        {"t", {[](C& c, S v) { c.scenario.t = parse_double("t", v); }}},
        {"s_taxon", {[](C& c, S v) { c.scenario.s_taxon = parse_list("s_taxon", v); }}},
        {"t_taxon", {[](C& c, S v) { c.scenario.t_taxon = parse_list("t_taxon", v); }}},
        {"N_lo", {[](C& c, S v) { c.scenario.N_lo = parse_int("N_lo", v); }}},
        {"N_hi", {[](C& c, S v) { c.scenario.N_hi = parse_int("N_hi", v); }}},
        {"mode",
         {[](C& c, S v) {
             if (v == "well_specified") c.scenario.mode = SimMode::well_specified;
             else if (v == "negbin") c.scenario.mode = SimMode::negbin;
             else throw ValidationError("config: mode must be well_specified or negbin");
         }}},
        {"tree_depth", {[](C& c, S v) { c.scenario.tree_depth = parse_int32("tree_depth", v); }}},
        {"tree_arity", {[](C& c, S v) { c.scenario.tree_arity = parse_int32("tree_arity", v); }}},
    };
    return fields;
}

}  // namespace detail

/// Applies one key = value pair. `base` is the directory relative paths hang off.
inline void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value,
                               const std::filesystem::path& base = {}) {
    const auto& fields = detail::config_fields();
    const auto it = fields.find(key);
    if (it == fields.end()) throw ValidationError("config: unknown key '" + key + "'");
    if (it->second.is_path && !value.empty() && !base.empty() && std::filesystem::path(value).is_relative())
        it->second.set(cfg, (base / value).lexically_normal().string());
    else
        it->second.set(cfg, value);
}

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base = {}) {
    RunConfig cfg;
    std::map<std::string, int> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: line " + std::to_string(line_no) + " is not of the form key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ValidationError("config: empty key on line " + std::to_string(line_no));
        if (seen.count(key))
            throw ValidationError("config: key '" + key + "' repeated on line " + std::to_string(line_no) +
                                  " (first on line " + std::to_string(seen[key]) + ")");
        seen[key] = line_no;
        apply_config_value(cfg, key, value, base);
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    return parse_config(in, std::filesystem::path(path).parent_path());
}

/// The scenario keys plus seed, in a form parse_config reads back.
inline void write_scenario_config(std::ostream& out, const SimScenario& sc) {
    out << "# simulated scenario\n";
    out << "seed = " << sc.seed << '\n';
    out << "n = " << sc.n << '\n';
    out << "p = " << sc.p << '\n';
    out << "K = " << sc.K << '\n';
    out << "block_size = " << sc.block_size << '\n';
    out << "flip_frac = " << detail::fmt_exact(sc.flip_frac) << '\n';
    out << "p_k_true = " << detail::fmt_exact(sc.p_k_true) << '\n';
    out << "w_true = " << detail::join_list(sc.w_true) << '\n';
    out << "c_true = " << detail::fmt_exact(sc.c_true) << '\n';
    out << "s = " << detail::fmt_exact(sc.s) << '\n';
    out << "t = " << detail::fmt_exact(sc.t) << '\n';
    if (!sc.s_taxon.empty()) out << "s_taxon = " << detail::join_list(sc.s_taxon) << '\n';
    if (!sc.t_taxon.empty()) out << "t_taxon = " << detail::join_list(sc.t_taxon) << '\n';
    out << "N_lo = " << sc.N_lo << '\n';
    out << "N_hi = " << sc.N_hi << '\n';
    out << "mode = " << (sc.mode == SimMode::negbin ? "negbin" : "well_specified") << '\n';
    out << "tree_depth = " << sc.tree_depth << '\n';
    out << "tree_arity = " << sc.tree_arity << '\n';
}

}  // namespace mmf
