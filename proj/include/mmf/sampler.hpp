#pragma once

// Posterior sampler. One iteration runs the kernels in the fixed order
// Z -> A -> rho -> W -> c -> (s, t) -> B sweep -> m.
//
// The B sweep visits taxa j = 1..p and for each one
//   (i)   Gibbs-updates b_jk for every column that has members besides j,
//   (ii)  Metropolis-updates every p_k against P(b_k | p_k) / p_k,
//   (iii) replaces the columns whose only member is j: K* ~ Poisson(rate_j)
//         fresh columns with a, w drawn from the prior are accepted jointly
//         against the current ones with the Bernoulli likelihood ratio of
//         taxon j, and their p_k are drawn exactly.
// Single-member columns are left out of step (i) so that births and deaths
// of singletons happen only in step (iii); this keeps the sweep invariant
// for the column process. After an accepted replacement the column order is
// shuffled, so column labels never carry information about column age.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmf/counts.hpp"
#include "mmf/error.hpp"
#include "mmf/model.hpp"
#include "mmf/pibp.hpp"
#include "mmf/random.hpp"
#include "mmf/special.hpp"
#include "mmf/trace.hpp"
#include "mmf/tree.hpp"

namespace mmf {

enum class MUpdate {
    total_rate,  ///< Gamma(shape + K, rate + psi((P-1)/L + 1) - psi(1))
    per_taxon,   ///< Gamma(shape + K, rate + p * {psi((P-1)/L + 1) - psi((P-2)/L + 1)})
};

struct SamplerConfig {
    int iterations = 10000;
    int burn_in = 5000;
    int thin = 5;
    std::uint64_t seed = 1;
    int n_chains = 2;
    int init = 10;

    double scale_log_w = 0.3;
    double scale_c = 0.3;
    double scale_log_s = 0.3;
    double scale_log_t = 0.3;
    double pk_c = 0.06;
    double pk_delta = 0.08;
    MUpdate m_update = MUpdate::total_rate;

    int refit_iterations = 2000;
    int refit_burn_in = 500;

    /// Keep Z fixed (two-step baseline on pre-dichotomized data); also skips (s, t).
    bool fix_z = false;
    /// Skip the B sweep entirely (conditional refit).
    bool freeze_b = false;

    void validate() const {
        if (iterations < 1) throw ValidationError("sampler: iterations must be >= 1");
        if (burn_in < 0 || burn_in >= iterations) throw ValidationError("sampler: need 0 <= burn_in < iterations");
        if (thin < 1) throw ValidationError("sampler: thin must be >= 1");
        if (n_chains < 1) throw ValidationError("sampler: chains must be >= 1");
        if (init < 0) throw ValidationError("sampler: init must be >= 0");
        for (double v : {scale_log_w, scale_c, scale_log_s, scale_log_t, pk_c, pk_delta})
            if (!(v > 0.0)) throw ValidationError("sampler: proposal scales must be positive");
        if (refit_iterations < 1 || refit_burn_in < 0 || refit_burn_in >= refit_iterations)
            throw ValidationError("sampler: need 0 <= refit_burn_in < refit_iterations");
    }

    int snapshot_count() const { return (iterations - burn_in) / thin; }
};

struct KernelCounter {
    long proposed = 0;
    long accepted = 0;
    double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : std::nan(""); }
};

struct KernelDiagnostics {
    KernelCounter w, c, st, pk, birth;
    long columns_born = 0;
    long columns_died = 0;
    double seconds = 0.0;
    int sweeps = 0;
};

class Sampler {
  public:
    Sampler(const CountMatrix& data, const RankTree& tree, const Hyperparameters& hp, const SamplerConfig& cfg,
            std::uint64_t seed)
        : data_(data), tree_(tree), hp_(hp), cfg_(cfg), rng_(seed) {
        if (tree_.leaf_count() != data_.p()) throw ValidationError("sampler: tree leaves do not match taxa");
        hp_.validate();
    }

    /// Random start: `init` columns drawn from the column prior with
    /// p_k ~ U(0,1), A ~ Bernoulli(0.5), continuous parameters from their
    /// priors (s > t enforced by redrawing), Z from the logit model.
    void initialize() {
        const int n = data_.n(), p = data_.p();
        ModelState st;
        st.m = gamma_rate(rng_, hp_.m_shape, hp_.m_rate);
        st.rho = beta(rng_, hp_.alpha_rho, hp_.beta_rho);
        st.rho = std::clamp(st.rho, 1e-12, 1.0 - 1e-12);
        st.c.resize(p);
        st.s.resize(p);
        st.t.resize(p);
        for (int j = 0; j < p; ++j) {
            st.c(j) = normal(rng_, hp_.mu_c, std::sqrt(hp_.sigma2_c));
            do {
                st.s(j) = gamma_rate(rng_, hp_.alpha_s, hp_.beta_s);
                st.t(j) = gamma_rate(rng_, hp_.alpha_t, hp_.beta_t);
            } while (!(st.s(j) > st.t(j) && st.t(j) > 0.0));
        }
        st.A.resize(n, 0);
        st.B.resize(p, 0);
        st.W.resize(p, 0);
        for (int k = 0; k < cfg_.init; ++k) {
            double pk = 0.0;
            std::vector<std::uint8_t> col;
            do {
                pk = uniform_open(rng_);
                col = sample_column(tree_, pk, rng_);
            } while (std::count(col.begin(), col.end(), 1) == 0);
            Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> a(n), b(p);
            Eigen::VectorXd w(p);
            for (int i = 0; i < n; ++i) a(i) = bernoulli(rng_, 0.5) ? 1 : 0;
            for (int j = 0; j < p; ++j) {
                b(j) = col[static_cast<std::size_t>(j)];
                w(j) = draw_w_prior();
            }
            st.append_column(a, b, w, pk);
        }
        st.Z.resize(n, p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) st.Z(i, j) = bernoulli(rng_, prob_z_one(i, j, st.A, st.B, st.W, st.c)) ? 1 : 0;
        set_state(std::move(st));
    }

    void set_state(ModelState st) {
        if (st.Z.rows() != data_.n() || st.Z.cols() != data_.p()) throw std::invalid_argument("sampler: state shape mismatch");
        state_ = std::move(st);
        refresh();
    }

    const ModelState& state() const { return state_; }
    ModelState& mutable_state() { return state_; }
    const KernelDiagnostics& diagnostics() const { return diag_; }
    Rng& rng() { return rng_; }

    /// Recomputes the cached linear predictors, DM row totals and column sizes.
    void refresh() {
        const int n = data_.n(), p = data_.p(), K = state_.K();
        Q_.resize(n, p);
        for (int j = 0; j < p; ++j)
            for (int i = 0; i < n; ++i) Q_(i, j) = state_.c(j);
        for (int k = 0; k < K; ++k)
            for (int j = 0; j < p; ++j) {
                if (!state_.B(j, k)) continue;
                const double w = state_.W(j, k);
                for (int i = 0; i < n; ++i)
                    if (state_.A(i, k)) Q_(i, j) += w;
            }
        S_.assign(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) S_[static_cast<std::size_t>(i)] += eta(i, j);
        col_size_.assign(static_cast<std::size_t>(K), 0);
        for (int k = 0; k < K; ++k)
            for (int j = 0; j < p; ++j) col_size_[static_cast<std::size_t>(k)] += state_.B(j, k);
    }

    void iterate() {
        const auto start = std::chrono::steady_clock::now();
        refresh();
        if (!cfg_.fix_z) update_z();
        update_a();
        update_rho();
        update_w();
        update_c();
        if (!cfg_.fix_z) update_st();
        if (!cfg_.freeze_b) update_b_sweep();
        update_m();
        diag_.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        ++diag_.sweeps;
    }

    // ---- full conditionals (exposed for verification) -------------------

    /// logit P(z_ij = 1 | rest).
    double z_conditional_logit(int i, int j) const {
        const double x = static_cast<double>(data_(i, j));
        const double N = static_cast<double>(data_.total(i));
        const double s = state_.s(j), t = state_.t(j);
        const double rest = S_[static_cast<std::size_t>(i)] - eta(i, j);
        double lik1 = log_gamma(rest + s) - log_gamma(N + rest + s);
        double lik0 = log_gamma(rest + t) - log_gamma(N + rest + t);
        if (x > 0.0) {
            lik1 += log_gamma(x + s) - log_gamma(s);
            lik0 += log_gamma(x + t) - log_gamma(t);
        }
        return Q_(i, j) + lik1 - lik0;
    }

    /// logit P(a_ik = 1 | rest).
    double a_conditional_logit(int i, int k) const {
        double logit = std::log(state_.rho) - std::log1p(-state_.rho);
        const bool on = state_.A(i, k);
        for (int j = 0; j < data_.p(); ++j) {
            if (!state_.B(j, k)) continue;
            const double w = state_.W(j, k);
            const double q_on = on ? Q_(i, j) : Q_(i, j) + w;
            const bool z = state_.Z(i, j);
            logit += log_bernoulli_logit(z, q_on) - log_bernoulli_logit(z, q_on - w);
        }
        return logit;
    }

    /// logit P(b_jk = 1 | rest) for a column with members other than j.
    double b_conditional_logit(int j, int k) const {
        const std::span<const std::uint8_t> column(state_.B.col(k).data(), static_cast<std::size_t>(data_.p()));
        double logit = leaf_conditional_logit(tree_, column, j, state_.p_col[static_cast<std::size_t>(k)]);
        logit += b_likelihood_logit(j, k);
        return logit;
    }

    // ---- kernels ---------------------------------------------------------

    void update_z() {
        const int n = data_.n(), p = data_.p();
        for (int j = 0; j < p; ++j) {
            for (int i = 0; i < n; ++i) {
                const double logit = z_conditional_logit(i, j);
                const double old_eta = eta(i, j);
                state_.Z(i, j) = uniform01(rng_) < sigmoid(logit) ? 1 : 0;
                S_[static_cast<std::size_t>(i)] += eta(i, j) - old_eta;
            }
        }
    }

    void update_a() {
        const int n = data_.n(), p = data_.p(), K = state_.K();
        for (int k = 0; k < K; ++k) {
            for (int i = 0; i < n; ++i) {
                const double logit = a_conditional_logit(i, k);
                const std::uint8_t next = uniform01(rng_) < sigmoid(logit) ? 1 : 0;
                if (next == state_.A(i, k)) continue;
                state_.A(i, k) = next;
                const double sign = next ? 1.0 : -1.0;
                for (int j = 0; j < p; ++j)
                    if (state_.B(j, k)) Q_(i, j) += sign * state_.W(j, k);
            }
        }
    }

    void update_rho() {
        const long ones = state_.A.cast<long>().sum();
        const long total = static_cast<long>(data_.n()) * state_.K();
        state_.rho = beta(rng_, hp_.alpha_rho + static_cast<double>(ones), hp_.beta_rho + static_cast<double>(total - ones));
        state_.rho = std::clamp(state_.rho, 1e-12, 1.0 - 1e-12);
    }

    /// Log-scale random walk on active weights; inactive weights are redrawn
    /// from their prior.
    void update_w() {
        const int n = data_.n(), p = data_.p(), K = state_.K();
        std::vector<int> hosts;
        for (int k = 0; k < K; ++k) {
            hosts.clear();
            for (int i = 0; i < n; ++i)
                if (state_.A(i, k)) hosts.push_back(i);
            for (int j = 0; j < p; ++j) {
                if (!state_.B(j, k)) {
                    state_.W(j, k) = draw_w_prior();
                    continue;
                }
                const double w = state_.W(j, k);
                const double w_new = w * std::exp(cfg_.scale_log_w * normal(rng_));
                const double delta = w_new - w;
                double log_ratio = (hp_.alpha_w) * (std::log(w_new) - std::log(w)) - hp_.beta_w * delta;
                for (int i : hosts) {
                    const bool z = state_.Z(i, j);
                    log_ratio += log_bernoulli_logit(z, Q_(i, j) + delta) - log_bernoulli_logit(z, Q_(i, j));
                }
                ++diag_.w.proposed;
                ++iter_.w.proposed;
                if (accept(log_ratio)) {
                    ++diag_.w.accepted;
                    ++iter_.w.accepted;
                    state_.W(j, k) = w_new;
                    for (int i : hosts) Q_(i, j) += delta;
                }
            }
        }
    }

    void update_c() {
        const int n = data_.n(), p = data_.p();
        for (int j = 0; j < p; ++j) {
            const double c = state_.c(j);
            const double delta = cfg_.scale_c * normal(rng_);
            const double c_new = c + delta;
            double log_ratio = -0.5 * ((c_new - hp_.mu_c) * (c_new - hp_.mu_c) - (c - hp_.mu_c) * (c - hp_.mu_c)) / hp_.sigma2_c;
            for (int i = 0; i < n; ++i) {
                const bool z = state_.Z(i, j);
                log_ratio += log_bernoulli_logit(z, Q_(i, j) + delta) - log_bernoulli_logit(z, Q_(i, j));
            }
            ++diag_.c.proposed;
            ++iter_.c.proposed;
            if (accept(log_ratio)) {
                ++diag_.c.accepted;
                ++iter_.c.accepted;
                state_.c(j) = c_new;
                for (int i = 0; i < n; ++i) Q_(i, j) += delta;
            }
        }
    }

    /// Joint log-scale random walk on (s_j, t_j); proposals with s <= t are
    /// rejected outright.
    void update_st() {
        const int n = data_.n(), p = data_.p();
        for (int j = 0; j < p; ++j) {
            const double s = state_.s(j), t = state_.t(j);
            const double s_new = s * std::exp(cfg_.scale_log_s * normal(rng_));
            const double t_new = t * std::exp(cfg_.scale_log_t * normal(rng_));
            ++diag_.st.proposed;
            ++iter_.st.proposed;
            if (!(s_new > t_new)) continue;
            double log_ratio = st_log_ratio(j, s_new, t_new);
            if (accept(log_ratio)) {
                ++diag_.st.accepted;
                ++iter_.st.accepted;
                for (int i = 0; i < n; ++i) {
                    const bool z = state_.Z(i, j);
                    S_[static_cast<std::size_t>(i)] += z ? s_new - s : t_new - t;
                }
                state_.s(j) = s_new;
                state_.t(j) = t_new;
            }
        }
    }

    /// Log target ratio for replacing (s_j, t_j); includes prior and the
    /// Jacobian of the log-scale walk.
    double st_log_ratio(int j, double s_new, double t_new) const {
        const double s = state_.s(j), t = state_.t(j);
        double lr = hp_.alpha_s * (std::log(s_new) - std::log(s)) - hp_.beta_s * (s_new - s) +
                    hp_.alpha_t * (std::log(t_new) - std::log(t)) - hp_.beta_t * (t_new - t);
        const double lg_s = log_gamma(s), lg_t = log_gamma(t);
        const double lg_s_new = log_gamma(s_new), lg_t_new = log_gamma(t_new);
        for (int i = 0; i < data_.n(); ++i) {
            const bool z = state_.Z(i, j);
            const double e_old = z ? s : t;
            const double e_new = z ? s_new : t_new;
            const double S_old = S_[static_cast<std::size_t>(i)];
            const double S_new = S_old - e_old + e_new;
            const double N = static_cast<double>(data_.total(i));
            lr += log_gamma(S_new) - log_gamma(N + S_new) - log_gamma(S_old) + log_gamma(N + S_old);
            const auto x = data_(i, j);
            if (x > 0) {
                const double xd = static_cast<double>(x);
                lr += log_gamma(xd + e_new) - (z ? lg_s_new : lg_t_new) - log_gamma(xd + e_old) + (z ? lg_s : lg_t);
            }
        }
        return lr;
    }

    void update_b_sweep() {
        for (int j = 0; j < data_.p(); ++j) {
            update_b_existing(j);
            update_pk_all(j);
            update_singletons(j);
        }
    }

    /// Step i for taxon j.
    void update_b_existing(int j) {
        const int n = data_.n();
        for (int k = 0; k < state_.K(); ++k) {
            const bool on = state_.B(j, k);
            if (on && col_size_[static_cast<std::size_t>(k)] == 1) continue;
            const double logit = b_conditional_logit(j, k);
            const std::uint8_t next = uniform01(rng_) < sigmoid(logit) ? 1 : 0;
            if (next == state_.B(j, k)) continue;
            state_.B(j, k) = next;
            col_size_[static_cast<std::size_t>(k)] += next ? 1 : -1;
            const double delta = next ? state_.W(j, k) : -state_.W(j, k);
            for (int i = 0; i < n; ++i)
                if (state_.A(i, k)) Q_(i, j) += delta;
        }
    }

    /// Step ii: random-walk Metropolis-Hastings on every p_k with proposal
    /// N(p, c p (1-p) + delta), targeting P(b_k^{-j*} | p, b_j*k = 1) with j*
    /// the first member of the column.
    void update_pk_all(int /*taxon*/) {
        for (int k = 0; k < state_.K(); ++k) {
            const std::span<const std::uint8_t> column(state_.B.col(k).data(), static_cast<std::size_t>(data_.p()));
            int pivot = 0;
            while (!column[static_cast<std::size_t>(pivot)]) ++pivot;
            const double pk = state_.p_col[static_cast<std::size_t>(k)];
            const double var = pk_proposal_var(pk);
            const double pk_new = pk + std::sqrt(var) * normal(rng_);
            ++diag_.pk.proposed;
            ++iter_.pk.proposed;
            if (!(pk_new > 0.0 && pk_new < 1.0)) continue;
            const double var_new = pk_proposal_var(pk_new);
            const double d2 = (pk_new - pk) * (pk_new - pk);
            const double log_q_ratio = (-0.5 * std::log(var_new) - 0.5 * d2 / var_new) - (-0.5 * std::log(var) - 0.5 * d2 / var);
            const double log_ratio = partial_column_log_prob(tree_, column, pivot, true, pk_new) -
                                     partial_column_log_prob(tree_, column, pivot, true, pk) + log_q_ratio;
            if (accept(log_ratio)) {
                ++diag_.pk.accepted;
                ++iter_.pk.accepted;
                state_.p_col[static_cast<std::size_t>(k)] = pk_new;
            }
        }
    }

    /// Step iii for taxon j.
    void update_singletons(int j) {
        const int n = data_.n(), p = data_.p();
        std::vector<int> old;
        for (int k = 0; k < state_.K(); ++k)
            if (state_.B(j, k) && col_size_[static_cast<std::size_t>(k)] == 1) old.push_back(k);
        const int d = tree_.private_edges(j);
        const double rate = singleton_column_rate(state_.m, tree_.node_count(), tree_.depth(), d);
        const auto k_new = static_cast<int>(poisson(rng_, rate));
        if (k_new == 0 && old.empty()) return;

        BinaryMatrix a_new(n, k_new);
        Eigen::MatrixXd w_new(p, k_new);
        for (int k = 0; k < k_new; ++k) {
            for (int i = 0; i < n; ++i) a_new(i, k) = bernoulli(rng_, state_.rho) ? 1 : 0;
            for (int l = 0; l < p; ++l) w_new(l, k) = draw_w_prior();
        }
        Eigen::VectorXd q_new = Q_.col(j);
        for (int i = 0; i < n; ++i) {
            for (int k : old)
                if (state_.A(i, k)) q_new(i) -= state_.W(j, k);
            for (int k = 0; k < k_new; ++k)
                if (a_new(i, k)) q_new(i) += w_new(j, k);
        }
        double log_ratio = 0.0;
        for (int i = 0; i < n; ++i) {
            const bool z = state_.Z(i, j);
            log_ratio += log_bernoulli_logit(z, q_new(i)) - log_bernoulli_logit(z, Q_(i, j));
        }
        ++diag_.birth.proposed;
        ++iter_.birth.proposed;
        if (!accept(log_ratio)) return;
        ++diag_.birth.accepted;
        ++iter_.birth.accepted;
        diag_.columns_died += static_cast<long>(old.size());
        diag_.columns_born += k_new;
        for (auto it = old.rbegin(); it != old.rend(); ++it) {
            state_.remove_column(*it);
            col_size_.erase(col_size_.begin() + *it);
        }
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> b = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>::Zero(p);
        b(j) = 1;
        for (int k = 0; k < k_new; ++k) {
            const double pk = sample_singleton_pk(tree_.node_count(), tree_.depth(), d, rng_);
            state_.append_column(a_new.col(k), b, w_new.col(k), pk);
            col_size_.push_back(1);
        }
        Q_.col(j) = q_new;
        // Appending leaves newborn columns at the end. The column scans in
        // update_a and update_b_existing are not invariant under relabeling,
        // so the order must stay exchangeable or the chain drifts to large K.
        shuffle_columns();
    }

    void update_m() {
        double exposure = 0.0;
        if (cfg_.m_update == MUpdate::total_rate) exposure = total_column_rate(1.0, tree_.node_count(), tree_.depth());
        else exposure = data_.p() * new_column_rate(1.0, tree_.node_count(), tree_.depth());
        state_.m = gamma_rate(rng_, hp_.m_shape + state_.K(), hp_.m_rate + exposure);
    }

    /// Per-iteration acceptance counters, reset by the caller.
    KernelDiagnostics take_iteration_counters() {
        KernelDiagnostics out = iter_;
        iter_ = {};
        return out;
    }

    double pk_proposal_var(double pk) const { return cfg_.pk_c * pk * (1.0 - pk) + cfg_.pk_delta; }

    /// Likelihood part of logit P(b_jk = 1 | rest).
    double b_likelihood_logit(int j, int k) const {
        double logit = 0.0;
        const bool on = state_.B(j, k);
        const double w = state_.W(j, k);
        for (int i = 0; i < data_.n(); ++i) {
            if (!state_.A(i, k)) continue;
            const double q_on = on ? Q_(i, j) : Q_(i, j) + w;
            const bool z = state_.Z(i, j);
            logit += log_bernoulli_logit(z, q_on) - log_bernoulli_logit(z, q_on - w);
        }
        return logit;
    }

  private:
    double eta(int i, int j) const { return state_.Z(i, j) ? state_.s(j) : state_.t(j); }

    void shuffle_columns() {
        const int K = state_.K();
        if (K < 2) return;
        std::vector<int> order(static_cast<std::size_t>(K));
        std::iota(order.begin(), order.end(), 0);
        for (int k = K - 1; k > 0; --k)
            std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(uniform_int(rng_, 0, k))]);
        state_.permute_columns(order);
        std::vector<int> sizes(col_size_.size());
        for (int k = 0; k < K; ++k) sizes[static_cast<std::size_t>(k)] = col_size_[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        col_size_ = std::move(sizes);
    }

    double draw_w_prior() {
        double w;
        do {
            w = gamma_rate(rng_, hp_.alpha_w, hp_.beta_w);
        } while (!(w > 0.0));
        return w;
    }

    bool accept(double log_ratio) {
        if (log_ratio >= 0.0) return true;
        return std::log(uniform_open(rng_)) < log_ratio;
    }

    const CountMatrix& data_;
    const RankTree& tree_;
    Hyperparameters hp_;
    SamplerConfig cfg_;
    Rng rng_;
    ModelState state_;
    Eigen::MatrixXd Q_;
    std::vector<double> S_;
    std::vector<int> col_size_;
    KernelDiagnostics diag_;
    KernelDiagnostics iter_;
};

/// Snapshot-worthy iterations are burn_in + thin, burn_in + 2 thin, ... (1-based).
inline bool is_snapshot_iteration(int iteration, int burn_in, int thin) {
    return iteration > burn_in && (iteration - burn_in) % thin == 0;
}

inline ScalarRecord make_scalar_record(int iteration, const ModelState& st, double lj, const KernelDiagnostics& it) {
    ScalarRecord r;
    r.iteration = iteration;
    r.K = st.K();
    r.log_joint = lj;
    r.m = st.m;
    r.rho = st.rho;
    r.mean_c = st.c.size() ? st.c.mean() : 0.0;
    r.mean_s = st.s.size() ? st.s.mean() : 0.0;
    r.mean_t = st.t.size() ? st.t.mean() : 0.0;
    r.acc_w = it.w.rate();
    r.acc_c = it.c.rate();
    r.acc_st = it.st.rate();
    r.acc_pk = it.pk.rate();
    r.acc_birth = it.birth.rate();
    return r;
}

using ProgressFn = std::function<void(int chain, int iteration, const ModelState&)>;

/// Runs the sampler from `sampler`'s current state and records a Trace.
inline Trace record_chain(Sampler& sampler, const CountMatrix& data, const RankTree& tree, const Hyperparameters& hp,
                          int iterations, int burn_in, int thin, int chain_id, std::uint64_t seed,
                          const ProgressFn& progress = {}) {
    Trace trace;
    trace.chain_id = chain_id;
    trace.seed = seed;
    trace.iterations = iterations;
    trace.burn_in = burn_in;
    trace.thin = thin;
    trace.n = data.n();
    trace.p = data.p();
    trace.scalars.reserve(static_cast<std::size_t>(iterations));
    for (int it = 1; it <= iterations; ++it) {
        sampler.iterate();
        const auto& st = sampler.state();
        double lj = 0.0;
        try {
            lj = log_joint(st, data, tree, hp);
        } catch (const std::domain_error& e) {
            throw std::runtime_error("chain " + std::to_string(chain_id) + " iteration " + std::to_string(it) +
                                     ": invalid state (" + e.what() + "), K=" + std::to_string(st.K()) +
                                     " m=" + std::to_string(st.m) + " rho=" + std::to_string(st.rho));
        }
        trace.scalars.push_back(make_scalar_record(it, st, lj, sampler.take_iteration_counters()));
        if (is_snapshot_iteration(it, burn_in, thin)) trace.snapshots.push_back(Snapshot{it, st});
        if (progress) progress(chain_id, it, st);
    }
    return trace;
}

/// One full chain from a random start. Deterministic given (config.seed, chain_id).
inline Trace run_chain(const CountMatrix& data, const RankTree& tree, const Hyperparameters& hp,
                       const SamplerConfig& config, int chain_id = 0, const ProgressFn& progress = {}) {
    config.validate();
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(chain_id));
    Sampler sampler(data, tree, hp, config, seed);
    sampler.initialize();
    return record_chain(sampler, data, tree, hp, config.iterations, config.burn_in, config.thin, chain_id, seed, progress);
}

/// Worker thread cap from MMF_THREADS (default: hardware concurrency).
inline int thread_cap() {
    int cap = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MMF_THREADS")) {
        try {
            cap = std::stoi(env);
        } catch (const std::exception&) {
            throw ValidationError(std::string("MMF_THREADS must be an integer, got '") + env + "'");
        }
    }
    return std::max(1, cap);
}

/// Runs config.n_chains independent chains. Results do not depend on the
/// number of worker threads.
inline std::vector<Trace> run_chains(const CountMatrix& data, const RankTree& tree, const Hyperparameters& hp,
                                     const SamplerConfig& config, const ProgressFn& progress = {}) {
    config.validate();
    std::vector<Trace> traces(static_cast<std::size_t>(config.n_chains));
    const int workers = std::min(thread_cap(), config.n_chains);
    std::mutex mu;
    auto guarded = [&](int chain, int it, const ModelState& st) {
        if (!progress) return;
        std::lock_guard<std::mutex> lock(mu);
        progress(chain, it, st);
    };
    if (workers <= 1) {
        for (int c = 0; c < config.n_chains; ++c) traces[static_cast<std::size_t>(c)] = run_chain(data, tree, hp, config, c, guarded);
        return traces;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.n_chains));
    int next = 0;
    auto worker = [&] {
        while (true) {
            int c;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= config.n_chains) return;
                c = next++;
            }
            try {
                traces[static_cast<std::size_t>(c)] = run_chain(data, tree, hp, config, c, guarded);
            } catch (...) {
                errors[static_cast<std::size_t>(c)] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return traces;
}

}  // namespace mmf
