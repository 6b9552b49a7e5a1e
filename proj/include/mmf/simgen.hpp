#pragma once

// Synthetic data: block-structured host memberships, tree-generated taxon
// memberships, counts from the gamma-mixture model or from a negative
// binomial alternative, and the fixed-cutoff dichotomizer used as baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmf/counts.hpp"
#include "mmf/error.hpp"
#include "mmf/model.hpp"
#include "mmf/pibp.hpp"
#include "mmf/random.hpp"
#include "mmf/tree.hpp"

namespace mmf {

enum class SimMode { well_specified, negbin };

inline constexpr int kRedrawCap = 100;

struct SimScenario {
    int n = 300;
    int p = 46;
    int K = 6;
    int block_size = 50;
    double flip_frac = 0.10;
    double p_k_true = 0.3;
    std::vector<double> w_true{2.0, 2.5, 3.0, 3.5, 4.0, 4.5};
    double c_true = std::log(0.5);
    double s = 5.0;
    double t = 0.5;
    // optional per-taxon shapes; empty means (s, t) for every taxon
    std::vector<double> s_taxon;
    std::vector<double> t_taxon;
    std::int64_t N_lo = 50;
    std::int64_t N_hi = 500;
    SimMode mode = SimMode::well_specified;
    std::uint64_t seed = 1;
    int tree_depth = 4;
    int tree_arity = 0;  // 0: smallest arity with arity^depth >= p

    void validate() const {
        if (n < 1) throw ValidationError("scenario: n must be >= 1");
        if (p < 1) throw ValidationError("scenario: p must be >= 1");
        if (K < 1) throw ValidationError("scenario: K must be >= 1");
        if (block_size < 0 || static_cast<long long>(block_size) * K > n)
            throw ValidationError("scenario: need 0 <= block_size and block_size * K <= n");
        if (!(flip_frac >= 0.0 && flip_frac < 1.0)) throw ValidationError("scenario: flip_frac must lie in [0, 1)");
        if (!(p_k_true > 0.0 && p_k_true < 1.0)) throw ValidationError("scenario: p_k_true must lie in (0, 1)");
        if (static_cast<int>(w_true.size()) != K) throw ValidationError("scenario: w_true needs K values");
        for (double w : w_true)
            if (!(w > 0.0)) throw ValidationError("scenario: weights must be positive");
        if (!std::isfinite(c_true)) throw ValidationError("scenario: c_true must be finite");
        if (N_lo < 1 || N_hi < N_lo) throw ValidationError("scenario: need 1 <= N_lo <= N_hi");
        if (!s_taxon.empty() && static_cast<int>(s_taxon.size()) != p) throw ValidationError("scenario: s_taxon needs p values");
        if (!t_taxon.empty() && static_cast<int>(t_taxon.size()) != p) throw ValidationError("scenario: t_taxon needs p values");
        if (mode == SimMode::well_specified)
            for (int j = 0; j < p; ++j)
                if (!(shape_s(j) > shape_t(j) && shape_t(j) > 0.0))
                    throw ValidationError("scenario: s > t > 0 required in well-specified mode");
        if (tree_depth < 1) throw ValidationError("scenario: tree_depth must be >= 1");
        if (tree_arity < 0) throw ValidationError("scenario: tree_arity must be >= 0");
    }

    double shape_s(int j) const { return s_taxon.empty() ? s : s_taxon[static_cast<std::size_t>(j)]; }
    double shape_t(int j) const { return t_taxon.empty() ? t : t_taxon[static_cast<std::size_t>(j)]; }

    int resolved_arity() const {
        if (tree_arity > 0) return tree_arity;
        int a = 1;
        while (true) {
            long long cap = 1;
            for (int d = 0; d < tree_depth && cap < p; ++d) cap *= a;
            if (cap >= p) return a;
            ++a;
        }
    }

    /// The full-scale defaults with sizes of the desk-scale experiment.
    static SimScenario desk() {
        SimScenario sc;
        sc.n = 100;
        sc.p = 16;
        sc.K = 3;
        sc.block_size = 30;
        sc.w_true = {2.0, 3.0, 4.0};
        sc.tree_depth = 3;
        return sc;
    }
};

/// Block-diagonal memberships, then exactly round(flip_frac * #zeros) zero
/// entries switched on, chosen uniformly without replacement.
inline BinaryMatrix generate_A(const SimScenario& sc, Rng& rng) {
    BinaryMatrix A = BinaryMatrix::Zero(sc.n, sc.K);
    for (int k = 0; k < sc.K; ++k)
        for (int i = sc.block_size * k; i < sc.block_size * (k + 1); ++i) A(i, k) = 1;
    std::vector<std::pair<int, int>> zeros;
    for (int i = 0; i < sc.n; ++i)
        for (int k = 0; k < sc.K; ++k)
            if (!A(i, k)) zeros.emplace_back(i, k);
    const auto flips = static_cast<std::size_t>(std::llround(sc.flip_frac * static_cast<double>(zeros.size())));
    for (std::size_t f = 0; f < flips; ++f) {
        const auto pick = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(f), static_cast<std::int64_t>(zeros.size()) - 1));
        std::swap(zeros[f], zeros[pick]);
        A(zeros[f].first, zeros[f].second) = 1;
    }
    return A;
}

/// K columns drawn from the tree process; empty columns are redrawn.
inline BinaryMatrix generate_B(const RankTree& tree, int K, double p_k_true, Rng& rng) {
    BinaryMatrix B(tree.leaf_count(), K);
    for (int k = 0; k < K; ++k) {
        bool ok = false;
        for (int attempt = 0; attempt < kRedrawCap && !ok; ++attempt) {
            const auto col = sample_column(tree, p_k_true, rng);
            for (int j = 0; j < tree.leaf_count(); ++j) B(j, k) = col[static_cast<std::size_t>(j)];
            ok = B.col(k).cast<int>().sum() > 0;
        }
        if (!ok) throw std::runtime_error("generate_B: empty column after " + std::to_string(kRedrawCap) + " redraws");
    }
    return B;
}

/// Weight matrix with w_jk = w_true[k] on every taxon.
inline Eigen::MatrixXd scenario_weights(const SimScenario& sc) {
    Eigen::MatrixXd W(sc.p, sc.K);
    for (int k = 0; k < sc.K; ++k) W.col(k).setConstant(sc.w_true[static_cast<std::size_t>(k)]);
    return W;
}

inline std::vector<std::string> default_taxon_names(int p) {
    std::vector<std::string> names;
    for (int j = 0; j < p; ++j) names.push_back("taxon" + std::to_string(j + 1));
    return names;
}

struct CountsAndZ {
    CountMatrix data;
    BinaryMatrix Z;
};

/// Gamma-mixture counts: z from the logit model, gamma weights with shape s
/// or t, depth N_i uniform on [N_lo, N_hi], multinomial sampling.
inline CountsAndZ generate_counts_dm(const BinaryMatrix& A, const BinaryMatrix& B, const SimScenario& sc, Rng& rng,
                                     std::vector<std::string> taxon_names = {}) {
    const int n = static_cast<int>(A.rows()), p = static_cast<int>(B.rows());
    const Eigen::MatrixXd W = scenario_weights(sc);
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(p, sc.c_true);
    BinaryMatrix Z(n, p);
    IntMatrix x(n, p);
    std::vector<double> gam(static_cast<std::size_t>(p));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) Z(i, j) = bernoulli(rng, prob_z_one(i, j, A, B, W, c)) ? 1 : 0;
        const std::int64_t N = uniform_int(rng, sc.N_lo, sc.N_hi);
        bool ok = false;
        for (int attempt = 0; attempt < kRedrawCap && !ok; ++attempt) {
            double total = 0.0;
            for (int j = 0; j < p; ++j) total += gam[static_cast<std::size_t>(j)] = gamma_rate(rng, Z(i, j) ? sc.shape_s(j) : sc.shape_t(j), 1.0);
            ok = total > 0.0;
        }
        if (!ok) throw std::runtime_error("generate_counts_dm: degenerate gamma weights");
        const auto row = multinomial(rng, N, gam);
        for (int j = 0; j < p; ++j) x(i, j) = row[static_cast<std::size_t>(j)];
    }
    if (taxon_names.empty()) taxon_names = default_taxon_names(p);
    return {CountMatrix(std::move(x), std::move(taxon_names)), std::move(Z)};
}

/// Negative binomial draw with mean mu and variance 2 mu: Poisson with a
/// Gamma(shape mu, rate 1) mean.
inline std::int64_t negbin_draw(Rng& rng, double mu) {
    if (!(mu > 0.0)) return 0;  // underflowed mean
    return poisson(rng, gamma_rate(rng, mu, 1.0));
}

/// Negative binomial alternative: y_ij with mean mu = exp(q_ij) and variance
/// 2 mu (gamma-Poisson with shape mu), then multinomial down-sampling to N_i.
/// Rows with no reads are redrawn.
inline CountMatrix generate_counts_negbin(const BinaryMatrix& A, const BinaryMatrix& B, const SimScenario& sc, Rng& rng,
                                          std::vector<std::string> taxon_names = {}) {
    const int n = static_cast<int>(A.rows()), p = static_cast<int>(B.rows());
    const Eigen::MatrixXd W = scenario_weights(sc);
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(p, sc.c_true);
    IntMatrix x(n, p);
    std::vector<double> y(static_cast<std::size_t>(p));
    for (int i = 0; i < n; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < kRedrawCap && !ok; ++attempt) {
            double total = 0.0;
            for (int j = 0; j < p; ++j) {
                const double mu = std::exp(z_logit(i, j, A, B, W, c));
                total += y[static_cast<std::size_t>(j)] = static_cast<double>(negbin_draw(rng, mu));
            }
            ok = total > 0.0;
        }
        if (!ok) throw std::runtime_error("generate_counts_negbin: all-zero row after " + std::to_string(kRedrawCap) + " redraws");
        const std::int64_t N = uniform_int(rng, sc.N_lo, sc.N_hi);
        const auto row = multinomial(rng, N, y);
        for (int j = 0; j < p; ++j) x(i, j) = row[static_cast<std::size_t>(j)];
    }
    if (taxon_names.empty()) taxon_names = default_taxon_names(p);
    return CountMatrix(std::move(x), std::move(taxon_names));
}

/// Type-7 (linear interpolation) sample quantile of unsorted values.
inline double quantile_type7(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Fixed-cutoff dichotomization: relative abundances below `floor` are 0;
/// per taxon, entries at or above the q-quantile of the remaining values are 1.
inline BinaryMatrix tsmf_dichotomize(const CountMatrix& data, double floor = 1e-5, double q = 0.25) {
    if (!(floor >= 0.0 && floor < 1.0)) throw ValidationError("dichotomize: floor must lie in [0, 1)");
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("dichotomize: quantile must lie in (0, 1)");
    BinaryMatrix Z = BinaryMatrix::Zero(data.n(), data.p());
    for (int j = 0; j < data.p(); ++j) {
        std::vector<double> kept;
        for (int i = 0; i < data.n(); ++i) {
            const double r = static_cast<double>(data(i, j)) / static_cast<double>(data.total(i));
            if (r >= floor && r > 0.0) kept.push_back(r);
        }
        if (kept.empty()) continue;
        const double cut = quantile_type7(kept, q);
        for (int i = 0; i < data.n(); ++i) {
            const double r = static_cast<double>(data(i, j)) / static_cast<double>(data.total(i));
            if (r >= floor && r > 0.0 && r >= cut) Z(i, j) = 1;
        }
    }
    return Z;
}

struct SimulatedData {
    RankTree tree;
    BinaryMatrix A;
    BinaryMatrix B;
    BinaryMatrix Z;  // empty in negative binomial mode
    CountMatrix data;
};

/// Full draw for a scenario on the given tree; deterministic in sc.seed.
inline SimulatedData simulate(const SimScenario& sc, const RankTree& tree) {
    sc.validate();
    if (tree.leaf_count() != sc.p) throw ValidationError("scenario: tree leaf count differs from p");
    Rng rng(derive_seed(sc.seed, 0x5133));
    SimulatedData out;
    out.tree = tree;
    out.A = generate_A(sc, rng);
    out.B = generate_B(tree, sc.K, sc.p_k_true, rng);
    if (sc.mode == SimMode::well_specified) {
        auto cz = generate_counts_dm(out.A, out.B, sc, rng, tree.leaf_names());
        out.data = std::move(cz.data);
        out.Z = std::move(cz.Z);
    } else {
        out.data = generate_counts_negbin(out.A, out.B, sc, rng, tree.leaf_names());
    }
    return out;
}

inline SimulatedData simulate(const SimScenario& sc) {
    sc.validate();
    return simulate(sc, balanced_tree(sc.p, sc.tree_depth, sc.resolved_arity()));
}

}  // namespace mmf
