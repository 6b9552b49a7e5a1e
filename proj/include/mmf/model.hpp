#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmf/counts.hpp"
#include "mmf/error.hpp"
#include "mmf/pibp.hpp"
#include "mmf/special.hpp"
#include "mmf/tree.hpp"

namespace mmf {

struct Hyperparameters {
    double alpha_s = 1.0, beta_s = 0.1;
    double alpha_t = 1.0, beta_t = 0.1;
    double mu_c = 0.0, sigma2_c = 100.0;
    double alpha_w = 1.0, beta_w = 0.1;
    double alpha_rho = 1.0, beta_rho = 1.0;
    double m_shape = 1.0, m_rate = 1.0;

    void validate() const {
        for (double v : {alpha_s, beta_s, alpha_t, beta_t, sigma2_c, alpha_w, beta_w, alpha_rho, beta_rho, m_shape, m_rate})
            if (!(v > 0.0) || !std::isfinite(v))
                throw ValidationError("hyperparameters: shapes, rates and variances must be positive");
        if (!std::isfinite(mu_c)) throw ValidationError("hyperparameters: mu_c must be finite");
    }
};

/// All sampled quantities at one iteration. K is the number of columns of
/// A, B and W; only entries of W with b_jk = 1 reach the likelihood.
struct ModelState {
    BinaryMatrix Z;  // n x p
    BinaryMatrix A;  // n x K
    BinaryMatrix B;  // p x K
    Eigen::MatrixXd W;  // p x K
    Eigen::VectorXd c, s, t;  // p
    std::vector<double> p_col;  // K
    double m = 1.0;
    double rho = 0.5;

    int n() const { return static_cast<int>(Z.rows()); }
    int p() const { return static_cast<int>(B.rows()); }
    int K() const { return static_cast<int>(B.cols()); }

    void remove_column(int k) {
        const Eigen::Index last = K() - 1;
        for (Eigen::Index col = k; col < last; ++col) {
            A.col(col) = A.col(col + 1);
            B.col(col) = B.col(col + 1);
            W.col(col) = W.col(col + 1);
        }
        A.conservativeResize(Eigen::NoChange, last);
        B.conservativeResize(Eigen::NoChange, last);
        W.conservativeResize(Eigen::NoChange, last);
        p_col.erase(p_col.begin() + k);
    }

    template <typename ACol, typename BCol, typename WCol>
    void append_column(const ACol& a, const BCol& b, const WCol& w, double pk) {
        const Eigen::Index k = K();
        A.conservativeResize(Eigen::NoChange, k + 1);
        B.conservativeResize(Eigen::NoChange, k + 1);
        W.conservativeResize(Eigen::NoChange, k + 1);
        A.col(k) = a;
        B.col(k) = b;
        W.col(k) = w;
        p_col.push_back(pk);
    }

    /// Column k of the result is column order[k] of the current state.
    void permute_columns(const std::vector<int>& order) {
        BinaryMatrix A2(A.rows(), K()), B2(B.rows(), K());
        Eigen::MatrixXd W2(W.rows(), K());
        std::vector<double> p2(p_col.size());
        for (int k = 0; k < K(); ++k) {
            const auto src = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
            A2.col(k) = A.col(static_cast<Eigen::Index>(src));
            B2.col(k) = B.col(static_cast<Eigen::Index>(src));
            W2.col(k) = W.col(static_cast<Eigen::Index>(src));
            p2[static_cast<std::size_t>(k)] = p_col[src];
        }
        A = std::move(A2);
        B = std::move(B2);
        W = std::move(W2);
        p_col = std::move(p2);
    }

    /// Throws std::logic_error describing the first violated invariant.
    void check_invariants() const {
        const auto n_ = Z.rows();
        const auto p_ = Z.cols();
        if (A.rows() != n_ || B.rows() != p_ || W.rows() != p_ || A.cols() != B.cols() || W.cols() != B.cols() ||
            c.size() != p_ || s.size() != p_ || t.size() != p_ || static_cast<Eigen::Index>(p_col.size()) != B.cols())
            throw std::logic_error("model state: inconsistent dimensions");
        auto binary = [](const BinaryMatrix& M) { return (M.array() <= 1).all(); };
        if (!binary(Z) || !binary(A) || !binary(B)) throw std::logic_error("model state: non-binary entry");
        for (Eigen::Index j = 0; j < p_; ++j)
            if (!(s(j) > t(j) && t(j) > 0.0)) throw std::logic_error("model state: s_j > t_j > 0 violated");
        for (Eigen::Index k = 0; k < B.cols(); ++k) {
            if (B.col(k).cast<int>().sum() == 0) throw std::logic_error("model state: empty column in B");
            const double pk = p_col[static_cast<std::size_t>(k)];
            if (!(pk > 0.0 && pk < 1.0)) throw std::logic_error("model state: p_k outside (0,1)");
        }
        if (!(W.array() > 0.0).all()) throw std::logic_error("model state: non-positive weight");
        if (!(rho > 0.0 && rho < 1.0)) throw std::logic_error("model state: rho outside (0,1)");
        if (!(m > 0.0)) throw std::logic_error("model state: m must be positive");
    }
};

/// log DM(x; N, eta) without the multinomial coefficient unless requested.
inline double log_dm_eta(std::span<const std::int64_t> x, std::span<const double> eta, bool with_coefficient) {
    if (x.empty()) throw std::invalid_argument("log_dm: empty model (p = 0)");
    if (x.size() != eta.size()) throw std::invalid_argument("log_dm: length mismatch");
    double S = 0.0;
    std::int64_t N = 0;
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double xj = static_cast<double>(x[j]);
        S += eta[j];
        N += x[j];
        acc += log_gamma(xj + eta[j]) - log_gamma(eta[j]);
        if (with_coefficient) acc -= log_gamma(xj + 1.0);
    }
    acc += log_gamma(S) - log_gamma(static_cast<double>(N) + S);
    if (with_coefficient) acc += log_gamma(static_cast<double>(N) + 1.0);
    if (!std::isfinite(acc)) throw std::domain_error("log_dm: non-finite value (invalid shapes)");
    return acc;
}

/// Collapsed Dirichlet-multinomial log-likelihood of one host, with
/// eta_j = s_j when z_j = 1 and t_j otherwise.
inline double log_dm_row(std::span<const std::int64_t> x, std::span<const std::uint8_t> z, std::span<const double> s,
                         std::span<const double> t, bool with_coefficient) {
    if (x.size() != z.size() || x.size() != s.size() || x.size() != t.size())
        throw std::invalid_argument("log_dm_row: length mismatch");
    std::vector<double> eta(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (!(s[j] > t[j] && t[j] > 0.0)) throw std::domain_error("log_dm_row: requires s_j > t_j > 0");
        eta[j] = z[j] ? s[j] : t[j];
    }
    return log_dm_eta(x, eta, with_coefficient);
}

/// Linear predictor c_j + sum_k a_ik w_jk b_jk.
inline double z_logit(int i, int j, const BinaryMatrix& A, const BinaryMatrix& B, const Eigen::MatrixXd& W,
                      const Eigen::VectorXd& c) {
    double q = c(j);
    for (Eigen::Index k = 0; k < B.cols(); ++k)
        if (A(i, k) && B(j, k)) q += W(j, k);
    return q;
}

/// P(z_ij = 1) under the latent logit model.
inline double prob_z_one(int i, int j, const BinaryMatrix& A, const BinaryMatrix& B, const Eigen::MatrixXd& W,
                         const Eigen::VectorXd& c) {
    return sigmoid(z_logit(i, j, A, B, W, c));
}

/// Log joint density of the state and data up to a fixed set of constants.
///
/// Dropped: multinomial coefficients, the 1/K! ordering constant of the
/// column process, and normalizers of the gamma, normal and beta priors.
/// Included: collapsed DM likelihood, Bernoulli(z | logit), A | rho, all of
/// W (inactive entries keep their prior), c, s, t (with s > t enforced),
/// rho, m, and the column process K log m - m H + sum_k [log P(b_k | p_k) -
/// log p_k] where H = psi((P-1)/L + 1) - psi(1).
///
/// Throws std::domain_error when the state lies outside the support.
inline double log_joint(const ModelState& st, const CountMatrix& data, const RankTree& tree, const Hyperparameters& hp) {
    const int n = data.n(), p = data.p(), K = st.K();
    if (st.Z.rows() != n || st.Z.cols() != p || st.B.rows() != p) throw std::invalid_argument("log_joint: shape mismatch");
    if (tree.leaf_count() != p) throw std::invalid_argument("log_joint: tree leaves do not match taxa");
    for (int j = 0; j < p; ++j)
        if (!(st.s(j) > st.t(j) && st.t(j) > 0.0)) throw std::domain_error("log_joint: s_j > t_j > 0 violated");
    if (!(st.rho > 0.0 && st.rho < 1.0) || !(st.m > 0.0)) throw std::domain_error("log_joint: rho or m outside support");
    if ((st.W.array() <= 0.0).any()) throw std::domain_error("log_joint: non-positive weight");

    double lj = 0.0;
    std::vector<std::int64_t> xrow(static_cast<std::size_t>(p));
    std::vector<std::uint8_t> zrow(static_cast<std::size_t>(p));
    const std::vector<double> s(st.s.data(), st.s.data() + p), t(st.t.data(), st.t.data() + p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            xrow[static_cast<std::size_t>(j)] = data(i, j);
            zrow[static_cast<std::size_t>(j)] = st.Z(i, j);
        }
        lj += log_dm_row(xrow, zrow, s, t, false);
        for (int j = 0; j < p; ++j) lj += log_bernoulli_logit(st.Z(i, j), z_logit(i, j, st.A, st.B, st.W, st.c));
    }

    const double log_rho = std::log(st.rho), log_1m_rho = std::log1p(-st.rho);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k) lj += st.A(i, k) ? log_rho : log_1m_rho;
    lj += (hp.alpha_rho - 1.0) * log_rho + (hp.beta_rho - 1.0) * log_1m_rho;

    for (int j = 0; j < p; ++j) {
        for (int k = 0; k < K; ++k) lj += (hp.alpha_w - 1.0) * std::log(st.W(j, k)) - hp.beta_w * st.W(j, k);
        lj += -0.5 * (st.c(j) - hp.mu_c) * (st.c(j) - hp.mu_c) / hp.sigma2_c;
        lj += (hp.alpha_s - 1.0) * std::log(st.s(j)) - hp.beta_s * st.s(j);
        lj += (hp.alpha_t - 1.0) * std::log(st.t(j)) - hp.beta_t * st.t(j);
    }

    const double H = total_column_rate(1.0, tree.node_count(), tree.depth());
    lj += K * std::log(st.m) - st.m * H;
    std::vector<std::uint8_t> column(static_cast<std::size_t>(p));
    for (int k = 0; k < K; ++k) {
        const double pk = st.p_col[static_cast<std::size_t>(k)];
        if (!(pk > 0.0 && pk < 1.0)) throw std::domain_error("log_joint: p_k outside (0,1)");
        for (int j = 0; j < p; ++j) column[static_cast<std::size_t>(j)] = st.B(j, k);
        lj += column_log_prior(tree, column, pk) - std::log(pk);
    }
    lj += (hp.m_shape - 1.0) * std::log(st.m) - hp.m_rate * st.m;

    if (!std::isfinite(lj)) throw std::domain_error("log_joint: non-finite value");
    return lj;
}

}  // namespace mmf
