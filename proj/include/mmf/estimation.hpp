#pragma once

// Posterior summaries: the modal number of clusters, the representative B
// under permutation-invariant Hamming loss, a conditional refit for the
// remaining parameters, convergence and predictive diagnostics, and
// recovery scores against a known truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmf/assignment.hpp"
#include "mmf/counts.hpp"
#include "mmf/error.hpp"
#include "mmf/model.hpp"
#include "mmf/sampler.hpp"
#include "mmf/trace.hpp"
#include "mmf/tree.hpp"

namespace mmf {

struct PermutedDistance {
    long distance = 0;
    /// perm[k] = column of the second matrix matched to column k of the first
    std::vector<int> perm;
};

inline long column_hamming(const BinaryMatrix& X, int k, const BinaryMatrix& Y, int l) {
    long d = 0;
    for (Eigen::Index r = 0; r < X.rows(); ++r) d += (X(r, k) != 0) != (Y(r, l) != 0);
    return d;
}

/// min over column permutations pi of H(B1, pi(B2)), solved as an exact
/// assignment problem on column-wise Hamming costs.
inline PermutedDistance min_perm_hamming(const BinaryMatrix& B1, const BinaryMatrix& B2) {
    if (B1.rows() != B2.rows() || B1.cols() != B2.cols())
        throw std::invalid_argument("min_perm_hamming: matrices must have equal shapes");
    const int K = static_cast<int>(B1.cols());
    Eigen::MatrixXd cost(K, K);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l) cost(k, l) = static_cast<double>(column_hamming(B1, k, B2, l));
    PermutedDistance out;
    out.perm = solve_assignment(cost);
    for (int k = 0; k < K; ++k) out.distance += column_hamming(B1, k, B2, out.perm[static_cast<std::size_t>(k)]);
    return out;
}

inline BinaryMatrix pad_columns(const BinaryMatrix& M, Eigen::Index width) {
    BinaryMatrix out = BinaryMatrix::Zero(M.rows(), std::max(width, M.cols()));
    out.leftCols(M.cols()) = M;
    return out;
}

/// Columns of M reordered so that column k is M's column perm[k].
inline BinaryMatrix permute_columns(const BinaryMatrix& M, const std::vector<int>& perm) {
    BinaryMatrix out(M.rows(), static_cast<Eigen::Index>(perm.size()));
    for (std::size_t k = 0; k < perm.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = M.col(perm[k]);
    return out;
}

struct RecoveryError {
    double error = 0.0;
    std::vector<int> perm;  // est column matched to each padded truth column
};

/// Zero-pads the narrower matrix, then the permutation-minimized Hamming
/// distance divided by rows x padded width.
inline RecoveryError recovery_error(const BinaryMatrix& est, const BinaryMatrix& truth) {
    if (est.rows() != truth.rows()) throw std::invalid_argument("recovery_error: row counts differ");
    const Eigen::Index width = std::max(est.cols(), truth.cols());
    if (width == 0 || est.rows() == 0) return {0.0, {}};
    const auto res = min_perm_hamming(pad_columns(truth, width), pad_columns(est, width));
    return {static_cast<double>(res.distance) / static_cast<double>(est.rows() * width), res.perm};
}

struct RecoveryReport {
    double error_A = 0.0;
    double error_B = 0.0;
    int K_true = 0;
    int K_hat = 0;
    std::vector<int> perm;
};

/// Joint A/B scores: the permutation minimizing the B distance is reused for A.
inline RecoveryReport recovery_report(const BinaryMatrix& A_hat, const BinaryMatrix& B_hat, const BinaryMatrix& A_true,
                                      const BinaryMatrix& B_true) {
    if (A_hat.cols() != B_hat.cols() || A_true.cols() != B_true.cols())
        throw std::invalid_argument("recovery_report: A and B widths differ");
    RecoveryReport rep;
    rep.K_true = static_cast<int>(B_true.cols());
    rep.K_hat = static_cast<int>(B_hat.cols());
    const auto rb = recovery_error(B_hat, B_true);
    rep.error_B = rb.error;
    rep.perm = rb.perm;
    const Eigen::Index width = std::max(A_hat.cols(), A_true.cols());
    if (width == 0 || A_hat.rows() == 0) return rep;
    const BinaryMatrix Ae = permute_columns(pad_columns(A_hat, width), rb.perm);
    const BinaryMatrix At = pad_columns(A_true, width);
    long d = 0;
    for (Eigen::Index k = 0; k < width; ++k) d += column_hamming(At, static_cast<int>(k), Ae, static_cast<int>(k));
    rep.error_A = static_cast<double>(d) / static_cast<double>(A_hat.rows() * width);
    return rep;
}

/// Modal K over the retained snapshots of all chains (ties go to the smaller K).
inline int map_K(const std::vector<int>& ks) {
    if (ks.empty()) throw ValidationError("map_K: no retained samples");
    std::map<int, long> counts;
    for (int k : ks) ++counts[k];
    int best = counts.begin()->first;
    long best_count = counts.begin()->second;
    for (const auto& [k, c] : counts)
        if (c > best_count) {
            best = k;
            best_count = c;
        }
    return best;
}

inline int map_K(const std::vector<Trace>& traces) {
    std::vector<int> ks;
    for (const auto& tr : traces)
        for (const auto& s : tr.snapshots) ks.push_back(s.state.K());
    return map_K(ks);
}

/// Index of the sample minimizing the average permutation-minimized Hamming
/// distance to all samples (first occurrence wins ties).
inline std::size_t posterior_mode_B(const std::vector<BinaryMatrix>& samples) {
    if (samples.empty()) throw ValidationError("posterior_mode_B: no samples");
    const std::size_t S = samples.size();
    std::vector<long> total(S, 0);
    for (std::size_t a = 0; a < S; ++a)
        for (std::size_t b = a + 1; b < S; ++b) {
            const long d = min_perm_hamming(samples[a], samples[b]).distance;
            total[a] += d;
            total[b] += d;
        }
    return static_cast<std::size_t>(std::min_element(total.begin(), total.end()) - total.begin());
}

/// Gelman-Rubin potential scale reduction sqrt((n-1)/n + B/(n W)) with B the
/// between-chain and W the mean within-chain variance.
inline double psrf(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw ValidationError("psrf: at least two chains required");
    const std::size_t n = chains.front().size();
    for (const auto& c : chains)
        if (c.size() != n) throw ValidationError("psrf: chains must have equal lengths");
    if (n < 10) throw ValidationError("psrf: chains must have at least 10 values");
    const double m = static_cast<double>(chains.size()), nd = static_cast<double>(n);
    std::vector<double> means;
    double W = 0.0;
    for (const auto& c : chains) {
        const double mean = std::accumulate(c.begin(), c.end(), 0.0) / nd;
        double ss = 0.0;
        for (double v : c) ss += (v - mean) * (v - mean);
        means.push_back(mean);
        W += ss / (nd - 1.0);
    }
    W /= m;
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    double B = 0.0;
    for (double mu : means) B += (mu - grand) * (mu - grand);
    B *= nd / (m - 1.0);
    // relative tolerance so that rounding noise is not mistaken for spread
    const double scale = std::max(1.0, std::abs(grand));
    if (W <= 1e-24 * scale * scale) return B <= 1e-24 * scale * scale ? 1.0 : kInf;
    return std::sqrt((nd - 1.0) / nd + B / (nd * W));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need equal lengths >= 2");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

struct PredictiveCheck {
    Eigen::MatrixXd predicted;  // n x p, rows sum to 1
    Eigen::MatrixXd observed;   // x_ij / N_i
    double correlation = 0.0;
};

/// Posterior-predictive mean composition eta_ij / sum_j eta_ij averaged over
/// snapshots, compared with the observed composition.
inline PredictiveCheck posterior_predictive(const CountMatrix& data, const std::vector<const ModelState*>& snapshots) {
    if (snapshots.empty()) throw ValidationError("posterior_predictive: no snapshots");
    const int n = data.n(), p = data.p();
    PredictiveCheck out;
    out.predicted = Eigen::MatrixXd::Zero(n, p);
    out.observed.resize(n, p);
    for (const ModelState* st : snapshots) {
        if (st->Z.rows() != n || st->Z.cols() != p) throw ValidationError("posterior_predictive: snapshot shape mismatch");
        for (int i = 0; i < n; ++i) {
            double total = 0.0;
            for (int j = 0; j < p; ++j) total += st->Z(i, j) ? st->s(j) : st->t(j);
            for (int j = 0; j < p; ++j) out.predicted(i, j) += (st->Z(i, j) ? st->s(j) : st->t(j)) / total;
        }
    }
    out.predicted /= static_cast<double>(snapshots.size());
    for (int i = 0; i < n; ++i) {
        const double row = out.predicted.row(i).sum();
        out.predicted.row(i) /= row;
        for (int j = 0; j < p; ++j) out.observed(i, j) = static_cast<double>(data(i, j)) / static_cast<double>(data.total(i));
    }
    std::vector<double> a(out.predicted.data(), out.predicted.data() + out.predicted.size());
    std::vector<double> b(out.observed.data(), out.observed.data() + out.observed.size());
    out.correlation = pearson(a, b);
    return out;
}

enum class Identifiability { sufficient, unknown };

inline const char* to_string(Identifiability v) { return v == Identifiability::sufficient ? "SUFFICIENT" : "UNKNOWN"; }

/// SUFFICIENT when every cluster has a member belonging to no other cluster
/// (some row of A equals the unit vector e_k for every k); UNKNOWN otherwise.
inline Identifiability check_identifiability(const BinaryMatrix& A) {
    const Eigen::Index K = A.cols();
    if (K == 0) return Identifiability::unknown;
    std::vector<char> has_unit(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        int ones = 0;
        Eigen::Index where = -1;
        for (Eigen::Index k = 0; k < K; ++k)
            if (A(i, k)) {
                ++ones;
                where = k;
            }
        if (ones == 1) has_unit[static_cast<std::size_t>(where)] = 1;
    }
    return std::all_of(has_unit.begin(), has_unit.end(), [](char c) { return c != 0; }) ? Identifiability::sufficient
                                                                                        : Identifiability::unknown;
}

struct PointEstimates {
    int K_hat = 0;
    BinaryMatrix B_hat;          // p x K_hat
    BinaryMatrix A_hat;          // n x K_hat
    Eigen::MatrixXd A_mean;      // n x K_hat
    Eigen::MatrixXd W_hat;       // p x K_hat
    Eigen::VectorXd c_hat, s_hat, t_hat;
    Eigen::MatrixXd Z_hat;       // n x p
    double m_hat = 0.0;
    double rho_hat = 0.0;
    int refit_samples = 0;
};

/// Continues the chain from `start` with B frozen and averages the
/// post-burn-in iterations. A_hat thresholds the mean of A at 0.5.
inline PointEstimates conditional_refit(const CountMatrix& data, const RankTree& tree, const Hyperparameters& hp,
                                        const SamplerConfig& config, const ModelState& start) {
    config.validate();
    if (config.refit_iterations - config.refit_burn_in < 1) throw ValidationError("refit: no post-burn-in samples");
    SamplerConfig cfg = config;
    cfg.freeze_b = true;
    Sampler sampler(data, tree, hp, cfg, derive_seed(config.seed, 0x2ef17));
    sampler.set_state(start);
    const int n = data.n(), p = data.p(), K = start.K();
    PointEstimates est;
    est.K_hat = K;
    est.B_hat = start.B;
    est.A_mean = Eigen::MatrixXd::Zero(n, K);
    est.W_hat = Eigen::MatrixXd::Zero(p, K);
    est.c_hat = est.s_hat = est.t_hat = Eigen::VectorXd::Zero(p);
    est.Z_hat = Eigen::MatrixXd::Zero(n, p);
    for (int it = 1; it <= config.refit_iterations; ++it) {
        sampler.iterate();
        if (it <= config.refit_burn_in) continue;
        const auto& st = sampler.state();
        est.A_mean += st.A.cast<double>();
        est.W_hat += st.W;
        est.c_hat += st.c;
        est.s_hat += st.s;
        est.t_hat += st.t;
        est.Z_hat += st.Z.cast<double>();
        est.m_hat += st.m;
        est.rho_hat += st.rho;
        ++est.refit_samples;
    }
    const double S = est.refit_samples;
    est.A_mean /= S;
    est.W_hat /= S;
    est.c_hat /= S;
    est.s_hat /= S;
    est.t_hat /= S;
    est.Z_hat /= S;
    est.m_hat /= S;
    est.rho_hat /= S;
    est.A_hat = (est.A_mean.array() > 0.5).cast<std::uint8_t>();
    return est;
}

struct Summary {
    int K_hat = 0;
    int mode_chain = 0;
    std::size_t mode_snapshot = 0;
    int candidates = 0;
    PointEstimates estimates;
};

/// K_hat, the representative B among snapshots with K = K_hat (chain order),
/// then the conditional refit warm-started from that snapshot.
inline Summary summarize(const CountMatrix& data, const RankTree& tree, const Hyperparameters& hp,
                         const SamplerConfig& config, const std::vector<Trace>& traces) {
    Summary out;
    out.K_hat = map_K(traces);
    std::vector<BinaryMatrix> samples;
    std::vector<std::pair<int, std::size_t>> where;
    for (std::size_t c = 0; c < traces.size(); ++c)
        for (std::size_t s = 0; s < traces[c].snapshots.size(); ++s)
            if (traces[c].snapshots[s].state.K() == out.K_hat) {
                samples.push_back(traces[c].snapshots[s].state.B);
                where.emplace_back(static_cast<int>(c), s);
            }
    if (samples.empty()) throw ValidationError("summarize: no snapshot with K = K_hat");
    out.candidates = static_cast<int>(samples.size());
    const std::size_t best = posterior_mode_B(samples);
    out.mode_chain = where[best].first;
    out.mode_snapshot = where[best].second;
    const ModelState& start = traces[static_cast<std::size_t>(out.mode_chain)].snapshots[out.mode_snapshot].state;
    out.estimates = conditional_refit(data, tree, hp, config, start);
    return out;
}

/// Linear predictors q_ij = c_j + sum_k a_ik w_jk b_jk of a snapshot.
inline Eigen::MatrixXd linear_predictors(const ModelState& st) {
    Eigen::MatrixXd Q(st.n(), st.p());
    for (int i = 0; i < st.n(); ++i)
        for (int j = 0; j < st.p(); ++j) Q(i, j) = z_logit(i, j, st.A, st.B, st.W, st.c);
    return Q;
}

struct PsrfReport {
    double K = 0.0;
    double q_median = 0.0;
    double q_stdev = 0.0;
    int length = 0;
};

/// PSRF of K and of every q_ij (reported as median and standard deviation
/// across entries) over the retained snapshots, truncated to the shortest chain.
inline PsrfReport psrf_report(const std::vector<Trace>& traces) {
    if (traces.size() < 2) throw ValidationError("psrf: at least two chains required");
    std::size_t len = traces.front().snapshots.size();
    for (const auto& t : traces) len = std::min(len, t.snapshots.size());
    PsrfReport rep;
    rep.length = static_cast<int>(len);
    std::vector<std::vector<double>> ks(traces.size());
    for (std::size_t c = 0; c < traces.size(); ++c)
        for (std::size_t s = 0; s < len; ++s) ks[c].push_back(traces[c].snapshots[s].state.K());
    rep.K = psrf(ks);
    const int n = traces.front().n, p = traces.front().p;
    std::vector<std::vector<Eigen::MatrixXd>> q(traces.size());
    for (std::size_t c = 0; c < traces.size(); ++c)
        for (std::size_t s = 0; s < len; ++s) q[c].push_back(linear_predictors(traces[c].snapshots[s].state));
    std::vector<double> values;
    std::vector<std::vector<double>> chains(traces.size(), std::vector<double>(len));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            for (std::size_t c = 0; c < traces.size(); ++c)
                for (std::size_t s = 0; s < len; ++s) chains[c][s] = q[c][s](i, j);
            values.push_back(psrf(chains));
        }
    if (!values.empty()) {
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        rep.q_median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        rep.q_stdev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    }
    return rep;
}

}  // namespace mmf
