#pragma once

// The four batch commands. Each one loads and validates every input before
// the output directory is touched, so a ValidationError never leaves a
// partial directory behind.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "mmf/config.hpp"
#include "mmf/counts.hpp"
#include "mmf/error.hpp"
#include "mmf/estimation.hpp"
#include "mmf/heatmap.hpp"
#include "mmf/sampler.hpp"
#include "mmf/simgen.hpp"
#include "mmf/trace.hpp"
#include "mmf/tree.hpp"

namespace mmf {

namespace fs = std::filesystem;

namespace detail {

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

inline void close_checked(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline void make_output_dir(const std::string& dir) {
    if (dir.empty()) throw ValidationError("output directory is empty");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
}

inline void check_output_dir(const std::string& dir) {
    if (dir.empty()) throw ValidationError("output directory is empty");
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ValidationError("output path exists and is not a directory: " + dir);
}

inline std::string read_text(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ValidationError(std::string("cannot open ") + what + ": " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string cluster_header(const std::string& corner, Eigen::Index K) {
    std::string h = corner;
    for (Eigen::Index k = 0; k < K; ++k) h += ",k" + std::to_string(k + 1);
    return h;
}

}  // namespace detail

/// Binary matrix CSV with a header (corner, k1..kK) and one named row per line.
inline void write_binary_csv(std::ostream& out, const BinaryMatrix& M, const std::vector<std::string>& row_names,
                             const std::string& corner) {
    out << detail::cluster_header(corner, M.cols()) << '\n';
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        out << row_names[static_cast<std::size_t>(r)];
        for (Eigen::Index k = 0; k < M.cols(); ++k) out << ',' << static_cast<int>(M(r, k));
        out << '\n';
    }
}

struct NamedBinaryMatrix {
    std::vector<std::string> rows;
    BinaryMatrix M;
};

inline NamedBinaryMatrix read_binary_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open matrix file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("matrix file is empty: " + path);
    const std::size_t cols = detail::split(line, ',').size() - 1;
    NamedBinaryMatrix out;
    std::vector<std::vector<std::uint8_t>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split(line, ',');
        if (cells.size() != cols + 1) throw ValidationError("matrix file " + path + ": ragged row '" + cells[0] + "'");
        out.rows.push_back(cells[0]);
        std::vector<std::uint8_t> row;
        for (std::size_t k = 1; k < cells.size(); ++k) {
            if (cells[k] != "0" && cells[k] != "1") throw ValidationError("matrix file " + path + ": entries must be 0 or 1");
            row.push_back(cells[k] == "1");
        }
        rows.push_back(std::move(row));
    }
    out.M.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t k = 0; k < cols; ++k) out.M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
    return out;
}

/// Real matrix CSV, 10 significant digits.
inline void write_real_csv(std::ostream& out, const Eigen::MatrixXd& M, const std::vector<std::string>& row_names,
                           const std::string& corner, const std::vector<std::string>& col_names) {
    out << corner;
    for (const auto& c : col_names) out << ',' << c;
    out << '\n';
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        out << row_names[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < M.cols(); ++c) out << ',' << detail::fmt_num(M(r, c));
        out << '\n';
    }
}

// ---------------------------------------------------------------- simulate

inline void cmd_simulate(const RunConfig& cfg) {
    const SimScenario& sc = cfg.scenario;
    sc.validate();
    detail::check_output_dir(cfg.out);
    RankTree tree = cfg.tree.empty() ? balanced_tree(sc.p, sc.tree_depth, sc.resolved_arity())
                                     : parse_newick(detail::read_text(cfg.tree, "tree file"));
    if (tree.leaf_count() != sc.p)
        throw ValidationError("simulate: tree has " + std::to_string(tree.leaf_count()) + " leaves but p = " +
                              std::to_string(sc.p));
    const SimulatedData sim = simulate(sc, tree);

    detail::make_output_dir(cfg.out);
    const fs::path dir(cfg.out);
    const auto taxa = tree.leaf_names();
    {
        auto f = detail::open_out(dir / "counts.tsv");
        write_counts_tsv(f, sim.data);
        detail::close_checked(f, dir / "counts.tsv");
    }
    {
        auto f = detail::open_out(dir / "truth_A.csv");
        write_binary_csv(f, sim.A, sim.data.host_ids(), "host");
        detail::close_checked(f, dir / "truth_A.csv");
    }
    {
        auto f = detail::open_out(dir / "truth_B.csv");
        write_binary_csv(f, sim.B, taxa, "taxon");
        detail::close_checked(f, dir / "truth_B.csv");
    }
    {
        // the negative binomial generator has no latent Z: header only
        auto f = detail::open_out(dir / "truth_Z.csv");
        f << "host";
        for (const auto& name : taxa) f << ',' << name;
        f << '\n';
        for (Eigen::Index i = 0; i < sim.Z.rows(); ++i) {
            f << sim.data.host_ids()[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < sim.Z.cols(); ++j) f << ',' << static_cast<int>(sim.Z(i, j));
            f << '\n';
        }
        detail::close_checked(f, dir / "truth_Z.csv");
    }
    {
        auto f = detail::open_out(dir / "tree.nwk");
        f << to_newick(tree) << '\n';
        detail::close_checked(f, dir / "tree.nwk");
    }
    {
        auto f = detail::open_out(dir / "scenario.cfg");
        write_scenario_config(f, sc);
        detail::close_checked(f, dir / "scenario.cfg");
    }
}

// ---------------------------------------------------------------- fit

struct FitInputs {
    CountMatrix data;
    RankTree tree;  // taxa reindexed to the count columns
};

inline FitInputs load_fit_inputs(const RunConfig& cfg) {
    if (cfg.counts.empty()) throw ValidationError("config: 'counts' is required");
    if (cfg.tree.empty()) throw ValidationError("config: 'tree' is required");
    FitInputs in;
    in.data = read_counts_tsv(cfg.counts);
    if (!cfg.labels.empty()) in.data = with_host_labels(in.data, cfg.labels);
    in.tree = parse_newick(detail::read_text(cfg.tree, "tree file")).aligned_to(in.data.taxon_names());
    return in;
}

inline void remove_stale_traces(const fs::path& dir) {
    static const std::regex stale(R"((trace_chain\d+\.(bin|idx))|(scalars_chain\d+\.csv))");
    if (!fs::is_directory(dir)) return;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), stale)) fs::remove(entry.path());
}

inline std::vector<Trace> cmd_fit(const RunConfig& cfg, std::ostream* log = &std::cerr) {
    cfg.sampler.validate();
    cfg.hp.validate();
    detail::check_output_dir(cfg.out);
    const FitInputs in = load_fit_inputs(cfg);
    thread_cap();  // rejects a malformed MMF_THREADS before any output exists

    const int every = std::max(1, cfg.sampler.iterations / 10);
    ProgressFn progress;
    if (log)
        progress = [&](int chain, int it, const ModelState& st) {
            if (it % every == 0 || it == cfg.sampler.iterations)
                *log << "chain " << chain << ": iteration " << it << "/" << cfg.sampler.iterations << " K=" << st.K()
                     << '\n';
        };
    auto traces = run_chains(in.data, in.tree, cfg.hp, cfg.sampler, progress);

    detail::make_output_dir(cfg.out);
    remove_stale_traces(cfg.out);
    for (const auto& tr : traces) save_trace(cfg.out, tr);
    return traces;
}

// ---------------------------------------------------------------- summarize

/// Loads every trace_chain<c>.bin of a directory, ordered by chain id.
inline std::vector<Trace> load_traces(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("trace directory not found: " + dir);
    static const std::regex name(R"(trace_chain(\d+)\.bin)");
    std::vector<std::pair<long, fs::path>> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string fname = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(fname, m, name)) found.emplace_back(std::stol(m[1]), entry.path());
    }
    if (found.empty()) throw ValidationError("no trace_chain*.bin files in " + dir);
    std::sort(found.begin(), found.end());
    std::vector<Trace> traces;
    for (const auto& [id, path] : found) traces.push_back(load_trace(path.string()));
    return traces;
}

inline void check_traces_match(const std::vector<Trace>& traces, const CountMatrix& data) {
    for (const auto& tr : traces)
        if (tr.n != data.n() || tr.p != data.p())
            throw ValidationError("trace of chain " + std::to_string(tr.chain_id) + " has shape " + std::to_string(tr.n) +
                                  "x" + std::to_string(tr.p) + ", counts are " + std::to_string(data.n()) + "x" +
                                  std::to_string(data.p()));
}

inline std::string trace_dir(const RunConfig& cfg) { return cfg.traces.empty() ? cfg.out : cfg.traces; }

/// Truth matrices reordered to the rows of the data (hosts for A, taxa for B).
inline std::pair<BinaryMatrix, BinaryMatrix> load_truth(const RunConfig& cfg, const CountMatrix& data) {
    const auto A = read_binary_csv(cfg.truth_A);
    const auto B = read_binary_csv(cfg.truth_B);
    if (A.M.cols() != B.M.cols()) throw ValidationError("truth_A and truth_B have different cluster counts");
    auto reorder = [](const NamedBinaryMatrix& nm, const std::vector<std::string>& want, const char* what) {
        if (nm.rows.size() != want.size())
            throw ValidationError(std::string("truth ") + what + " has " + std::to_string(nm.rows.size()) + " rows, expected " +
                                  std::to_string(want.size()));
        BinaryMatrix out(nm.M.rows(), nm.M.cols());
        for (std::size_t r = 0; r < want.size(); ++r) {
            const auto it = std::find(nm.rows.begin(), nm.rows.end(), want[r]);
            if (it == nm.rows.end()) throw ValidationError(std::string("truth ") + what + " lacks row '" + want[r] + "'");
            out.row(static_cast<Eigen::Index>(r)) = nm.M.row(it - nm.rows.begin());
        }
        return out;
    };
    return {reorder(A, data.host_ids(), "A"), reorder(B, data.taxon_names(), "B")};
}

inline Summary cmd_summarize(const RunConfig& cfg, std::ostream* log = &std::cerr) {
    cfg.sampler.validate();
    cfg.hp.validate();
    detail::check_output_dir(cfg.out);
    const FitInputs in = load_fit_inputs(cfg);
    const auto traces = load_traces(trace_dir(cfg));
    check_traces_match(traces, in.data);
    const bool with_truth = !cfg.truth_A.empty() || !cfg.truth_B.empty();
    if (with_truth && (cfg.truth_A.empty() || cfg.truth_B.empty()))
        throw ValidationError("config: truth_A and truth_B must be given together");
    std::pair<BinaryMatrix, BinaryMatrix> truth;
    if (with_truth) truth = load_truth(cfg, in.data);

    const Summary sum = summarize(in.data, in.tree, cfg.hp, cfg.sampler, traces);
    const PointEstimates& est = sum.estimates;
    if (log)
        *log << "K_hat = " << sum.K_hat << " from " << sum.candidates << " snapshots; mode at chain " << sum.mode_chain
             << " snapshot " << sum.mode_snapshot << '\n';

    detail::make_output_dir(cfg.out);
    const fs::path dir(cfg.out);
    const auto& taxa = in.data.taxon_names();
    const auto& hosts = in.data.host_ids();
    {
        auto f = detail::open_out(dir / "K_hat.txt");
        f << sum.K_hat << '\n';
        detail::close_checked(f, dir / "K_hat.txt");
    }
    {
        auto f = detail::open_out(dir / "B_hat.csv");
        write_binary_csv(f, est.B_hat, taxa, "taxon");
        detail::close_checked(f, dir / "B_hat.csv");
    }
    {
        auto f = detail::open_out(dir / "A_hat.csv");
        write_binary_csv(f, est.A_hat, hosts, "host");
        detail::close_checked(f, dir / "A_hat.csv");
    }
    {
        auto f = detail::open_out(dir / "Z_hat.csv");
        write_real_csv(f, est.Z_hat, hosts, "host", taxa);
        detail::close_checked(f, dir / "Z_hat.csv");
    }
    {
        auto f = detail::open_out(dir / "params_hat.csv");
        f << "parameter,taxon,cluster,value\n";
        for (int j = 0; j < in.data.p(); ++j) {
            const std::string& name = taxa[static_cast<std::size_t>(j)];
            f << "c," << name << ",," << detail::fmt_num(est.c_hat(j)) << '\n';
            f << "s," << name << ",," << detail::fmt_num(est.s_hat(j)) << '\n';
            f << "t," << name << ",," << detail::fmt_num(est.t_hat(j)) << '\n';
            for (int k = 0; k < est.K_hat; ++k)
                if (est.B_hat(j, k)) f << "w," << name << ",k" << k + 1 << ',' << detail::fmt_num(est.W_hat(j, k)) << '\n';
        }
        f << "m,,," << detail::fmt_num(est.m_hat) << '\n';
        f << "rho,,," << detail::fmt_num(est.rho_hat) << '\n';
        detail::close_checked(f, dir / "params_hat.csv");
    }
    if (with_truth) {
        const auto rep = recovery_report(est.A_hat, est.B_hat, truth.first, truth.second);
        auto f = detail::open_out(dir / "recovery_report.csv");
        f << "error_A,error_B,K_true,K_hat\n";
        f << detail::fmt_num(rep.error_A) << ',' << detail::fmt_num(rep.error_B) << ',' << rep.K_true << ',' << rep.K_hat
          << '\n';
        detail::close_checked(f, dir / "recovery_report.csv");
    }
    if (cfg.heatmaps) {
        {
            std::vector<int> order(static_cast<std::size_t>(in.data.n()));
            std::iota(order.begin(), order.end(), 0);
            auto f = detail::open_out(dir / "A_hat.svg");
            write_heatmap_svg(f, est.A_hat, order, hosts, in.data.host_labels(), "A_hat (hosts x clusters)");
            detail::close_checked(f, dir / "A_hat.svg");
        }
        {
            auto f = detail::open_out(dir / "B_hat.svg");
            write_heatmap_svg(f, est.B_hat, in.tree.traversal_order(), taxa, {}, "B_hat (taxa in tree order x clusters)");
            detail::close_checked(f, dir / "B_hat.svg");
        }
    }
    return sum;
}

// ---------------------------------------------------------------- diagnose

struct Diagnosis {
    bool has_psrf = false;
    PsrfReport psrf;
    PredictiveCheck ppc;
    std::size_t snapshots = 0;
};

inline Diagnosis cmd_diagnose(const RunConfig& cfg, std::ostream* log = &std::cerr) {
    detail::check_output_dir(cfg.out);
    if (cfg.counts.empty()) throw ValidationError("config: 'counts' is required");
    CountMatrix data = read_counts_tsv(cfg.counts);
    const auto traces = load_traces(trace_dir(cfg));
    check_traces_match(traces, data);

    Diagnosis dg;
    std::vector<const ModelState*> states;
    for (const auto& tr : traces)
        for (const auto& s : tr.snapshots) states.push_back(&s.state);
    dg.snapshots = states.size();
    const std::string warning = "warning: only one chain; PSRF needs at least two and is omitted";
    if (traces.size() >= 2) {
        dg.psrf = psrf_report(traces);
        dg.has_psrf = true;
    } else if (log) {
        *log << warning << '\n';
    }
    dg.ppc = posterior_predictive(data, states);

    detail::make_output_dir(cfg.out);
    const fs::path dir(cfg.out);
    if (dg.has_psrf) {
        auto f = detail::open_out(dir / "psrf.csv");
        f << "quantity,psrf\n";
        f << "K," << detail::fmt_num(dg.psrf.K) << '\n';
        f << "q_median," << detail::fmt_num(dg.psrf.q_median) << '\n';
        f << "q_stdev," << detail::fmt_num(dg.psrf.q_stdev) << '\n';
        detail::close_checked(f, dir / "psrf.csv");
    }
    {
        auto f = detail::open_out(dir / "ppc.csv");
        write_real_csv(f, dg.ppc.predicted, data.host_ids(), "host", data.taxon_names());
        detail::close_checked(f, dir / "ppc.csv");
    }
    {
        auto f = detail::open_out(dir / "ppc_summary.txt");
        f << "correlation " << detail::fmt_num(dg.ppc.correlation) << '\n';
        f << "chains " << traces.size() << '\n';
        f << "snapshots " << dg.snapshots << '\n';
        if (!dg.has_psrf) f << warning << '\n';
        detail::close_checked(f, dir / "ppc_summary.txt");
    }
    return dg;
}

}  // namespace mmf
