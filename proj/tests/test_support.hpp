#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "mmf/model.hpp"
#include "mmf/pibp.hpp"
#include "mmf/random.hpp"
#include "mmf/tree.hpp"

namespace mmf::testkit {

/// Random rooted tree with `leaves` leaves whose deepest leaf sits at
/// `depth`; other leaves may be shallower (exercising unary insertion).
inline RankTree random_tree(Rng& rng, int leaves, int depth) {
    std::vector<TreeNode> nodes{TreeNode{}};
    int named = 0;
    auto add = [&](int parent) {
        const int id = static_cast<int>(nodes.size());
        nodes.push_back(TreeNode{parent, {}, {}});
        nodes[static_cast<std::size_t>(parent)].children.push_back(id);
        return id;
    };
    // split `count` leaves below `v` at level `level`
    std::function<void(int, int, int, bool)> grow = [&](int v, int count, int level, bool force_deep) {
        if (level + 1 == depth) {
            for (int l = 0; l < count; ++l) nodes[static_cast<std::size_t>(add(v))].name = "t" + std::to_string(++named);
            return;
        }
        int remaining = count;
        bool deep_done = !force_deep;
        while (remaining > 0) {
            const int take = static_cast<int>(uniform_int(rng, 1, remaining));
            remaining -= take;
            if (take == 1 && deep_done && bernoulli(rng, 0.3)) {
                nodes[static_cast<std::size_t>(add(v))].name = "t" + std::to_string(++named);
                continue;
            }
            grow(add(v), take, level + 1, !deep_done);
            deep_done = true;
        }
    };
    grow(0, leaves, 0, true);
    return RankTree(std::move(nodes));
}

/// log P(column) by enumerating every node-state configuration of the
/// absorbing process (no message passing). Leaves with mask 0 are summed out.
inline double brute_force_column_log_prob(const RankTree& tree, const std::vector<std::uint8_t>& column,
                                          const std::vector<std::uint8_t>& observed, double p_k) {
    const double q = 1.0 - std::pow(1.0 - p_k, 1.0 / tree.depth());
    const auto& order = tree.preorder();
    std::vector<int> state(static_cast<std::size_t>(tree.node_count()), 0);
    double total = 0.0;
    std::function<void(std::size_t, double)> visit = [&](std::size_t pos, double prob) {
        if (pos == order.size()) {
            for (int j = 0; j < tree.leaf_count(); ++j) {
                if (!observed.empty() && !observed[static_cast<std::size_t>(j)]) continue;
                if (state[static_cast<std::size_t>(tree.leaf_node(j))] != column[static_cast<std::size_t>(j)]) return;
            }
            total += prob;
            return;
        }
        const int v = order[pos];
        const int parent = tree.node(v).parent;
        if (parent < 0) {
            state[static_cast<std::size_t>(v)] = 0;
            visit(pos + 1, prob);
            return;
        }
        if (state[static_cast<std::size_t>(parent)]) {
            state[static_cast<std::size_t>(v)] = 1;
            visit(pos + 1, prob);
            return;
        }
        state[static_cast<std::size_t>(v)] = 0;
        visit(pos + 1, prob * (1.0 - q));
        state[static_cast<std::size_t>(v)] = 1;
        visit(pos + 1, prob * q);
    };
    visit(0, 1.0);
    return std::log(total);
}

/// Asymptotic Kolmogorov tail P(K > lambda) with the small-sample
/// correction sqrt(ne) + 0.12 + 0.11/sqrt(ne).
inline double kolmogorov_pvalue(double d, double ne) {
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    if (lambda < 0.2) return 1.0;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::clamp(p, 0.0, 1.0);
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
    return kolmogorov_pvalue(d, ne);
}

/// One-sample KS p-value against a continuous CDF (asymptotic).
inline double ks_one_sample_pvalue(std::vector<double> x, const std::function<double(double)>& cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return kolmogorov_pvalue(d, n);
}

/// Chi-squared homogeneity p-value for two samples of small integers; bins
/// with tiny pooled counts are merged into the tail.
inline double chi2_two_sample_pvalue(const std::vector<int>& a, const std::vector<int>& b, double min_expected = 5.0) {
    const int hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
    std::vector<double> ca(static_cast<std::size_t>(hi + 1), 0.0), cb(ca.size(), 0.0);
    for (int v : a) ca[static_cast<std::size_t>(v)] += 1;
    for (int v : b) cb[static_cast<std::size_t>(v)] += 1;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    // merge bins left to right until each has enough expected mass
    std::vector<std::pair<double, double>> bins;
    double acc_a = 0, acc_b = 0;
    for (std::size_t k = 0; k < ca.size(); ++k) {
        acc_a += ca[k];
        acc_b += cb[k];
        const double pooled = acc_a + acc_b;
        if (pooled * std::min(na, nb) / (na + nb) >= min_expected) {
            bins.emplace_back(acc_a, acc_b);
            acc_a = acc_b = 0;
        }
    }
    if (acc_a + acc_b > 0) {
        if (bins.empty()) bins.emplace_back(acc_a, acc_b);
        else {
            bins.back().first += acc_a;
            bins.back().second += acc_b;
        }
    }
    if (bins.size() < 2) return 1.0;
    double stat = 0.0;
    for (auto [oa, ob] : bins) {
        const double pooled = oa + ob;
        const double ea = pooled * na / (na + nb), eb = pooled * nb / (na + nb);
        stat += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
    }
    boost::math::chi_squared_distribution<double> chi(static_cast<double>(bins.size() - 1));
    return boost::math::cdf(boost::math::complement(chi, stat));
}

/// Chi-squared goodness-of-fit p-value of integer-coded observations against
/// expected probabilities (bins with expectation < 5 merged into neighbours).
inline double chi2_gof_pvalue(const std::vector<double>& observed_counts, const std::vector<double>& probs) {
    const double n = std::accumulate(observed_counts.begin(), observed_counts.end(), 0.0);
    std::vector<std::pair<double, double>> bins;
    double o = 0, e = 0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        o += observed_counts[k];
        e += probs[k] * n;
        if (e >= 5.0) {
            bins.emplace_back(o, e);
            o = e = 0;
        }
    }
    if (e > 0 || o > 0) {
        if (bins.empty()) bins.emplace_back(o, e);
        else {
            bins.back().first += o;
            bins.back().second += e;
        }
    }
    if (bins.size() < 2) return 1.0;
    double stat = 0.0;
    for (auto [ob, ex] : bins) stat += (ob - ex) * (ob - ex) / ex;
    boost::math::chi_squared_distribution<double> chi(static_cast<double>(bins.size() - 1));
    return boost::math::cdf(boost::math::complement(chi, stat));
}

/// Equal-probability binning of continuous draws against a CDF, then a
/// chi-squared goodness-of-fit p-value.
inline double chi2_continuous_pvalue(const std::vector<double>& x, const std::function<double(double)>& cdf,
                                     int bins = 50) {
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (double v : x) {
        auto b = static_cast<int>(cdf(v) * bins);
        b = std::clamp(b, 0, bins - 1);
        counts[static_cast<std::size_t>(b)] += 1;
    }
    std::vector<double> probs(static_cast<std::size_t>(bins), 1.0 / bins);
    return chi2_gof_pvalue(counts, probs);
}

/// Every permutation of 0..k-1 (lexicographic).
inline std::vector<std::vector<int>> all_permutations(int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::vector<int>> out;
    do out.push_back(perm);
    while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

/// p_k of a non-empty column: density proportional to {1 - (1-p)^a} / p with
/// a = (P-1)/L, by rejection from U(0,1) using 1 - (1-p)^a <= max(1, a) p.
inline double draw_nonempty_pk(const RankTree& tree, Rng& rng) {
    const double a = (tree.node_count() - 1.0) / tree.depth();
    while (true) {
        const double p = uniform01(rng);
        if (!(p > 0.0)) continue;
        if (uniform01(rng) < -std::expm1(a * std::log1p(-p)) / (p * std::max(1.0, a))) return p;
    }
}

/// Forward draw of every latent quantity from the prior, written without
/// the sampler: K ~ Poisson(m H) columns, each with p_k from the non-empty
/// column density and b_k from the generative process conditioned on b_k != 0.
/// Z comes from the logit model.
inline ModelState draw_prior_state(const RankTree& tree, int n, const Hyperparameters& hp, Rng& rng) {
    const int p = tree.leaf_count();
    ModelState st;
    st.m = gamma_rate(rng, hp.m_shape, hp.m_rate);
    st.rho = beta(rng, hp.alpha_rho, hp.beta_rho);
    const double H = digamma((tree.node_count() - 1.0) / tree.depth() + 1.0) - digamma(1.0);
    const auto K = static_cast<int>(poisson(rng, st.m * H));
    st.A.resize(n, K);
    st.B.resize(p, K);
    st.W.resize(p, K);
    for (int k = 0; k < K; ++k) {
        const double pk = draw_nonempty_pk(tree, rng);
        std::vector<std::uint8_t> col;
        do col = sample_column(tree, pk, rng);
        while (std::count(col.begin(), col.end(), 1) == 0);
        for (int j = 0; j < p; ++j) {
            st.B(j, k) = col[static_cast<std::size_t>(j)];
            st.W(j, k) = gamma_rate(rng, hp.alpha_w, hp.beta_w);
        }
        for (int i = 0; i < n; ++i) st.A(i, k) = bernoulli(rng, st.rho) ? 1 : 0;
        st.p_col.push_back(pk);
    }
    st.c.resize(p);
    st.s.resize(p);
    st.t.resize(p);
    for (int j = 0; j < p; ++j) {
        st.c(j) = normal(rng, hp.mu_c, std::sqrt(hp.sigma2_c));
        do {
            st.s(j) = gamma_rate(rng, hp.alpha_s, hp.beta_s);
            st.t(j) = gamma_rate(rng, hp.alpha_t, hp.beta_t);
        } while (!(st.s(j) > st.t(j)));
    }
    st.Z.resize(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            double q = st.c(j);
            for (int k = 0; k < K; ++k)
                if (st.A(i, k) && st.B(j, k)) q += st.W(j, k);
            st.Z(i, j) = uniform01(rng) < 1.0 / (1.0 + std::exp(-q)) ? 1 : 0;
        }
    return st;
}

}  // namespace mmf::testkit
