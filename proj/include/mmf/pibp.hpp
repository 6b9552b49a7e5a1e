#pragma once

// Phylogenetic IBP column prior on a RankTree.
//
// A column is generated by an absorbing two-state process running from the
// root (state 0) down every edge; an edge flips 0 -> 1 with probability
// q = 1 - (1 - p_k)^(1/L), and once a node is 1 its whole subtree is 1. The
// leaves give the column. Every leaf is marginally 1 with probability p_k.
//
// Exact probabilities are obtained by sum-product message passing in log
// space. Leaf masks use 1 = observed, 0 = marginalized.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "mmf/random.hpp"
#include "mmf/special.hpp"
#include "mmf/tree.hpp"

namespace mmf {

/// Per-edge flip probability 1 - (1 - p_k)^(1/L).
inline double edge_flip_prob(double p_k, int depth) {
    if (!(p_k >= 0.0 && p_k < 1.0)) throw std::domain_error("edge_flip_prob: p_k must lie in [0, 1)");
    if (depth < 1) throw std::domain_error("edge_flip_prob: depth must be >= 1");
    return -std::expm1(std::log1p(-p_k) / depth);
}

namespace detail {

struct EdgeLogProbs {
    double stay;  // log(1 - q)
    double flip;  // log q
};

inline EdgeLogProbs edge_log_probs(double p_k, int depth) {
    const double stay = std::log1p(-p_k) / depth;
    return {stay, log1m_exp(stay)};
}

/// Log message a child sends to its parent, for each parent state.
inline std::pair<double, double> message_to_parent(double up0, double up1, EdgeLogProbs e) {
    return {log_sum_exp(e.stay + up0, e.flip + up1), up1};
}

/// Upward pass: up0[v], up1[v] = log P(observed leaves below v | state(v)).
inline void upward(const RankTree& tree, std::span<const std::uint8_t> column, std::span<const std::uint8_t> observed,
                   EdgeLogProbs e, std::vector<double>& up0, std::vector<double>& up1) {
    up0.assign(static_cast<std::size_t>(tree.node_count()), 0.0);
    up1.assign(static_cast<std::size_t>(tree.node_count()), 0.0);
    for (int v : tree.postorder()) {
        const auto sv = static_cast<std::size_t>(v);
        const int taxon = tree.taxon_of(v);
        if (taxon >= 0) {
            const auto j = static_cast<std::size_t>(taxon);
            if (observed.empty() || observed[j]) {
                if (column[j]) up0[sv] = kNegInf;
                else up1[sv] = kNegInf;
            }
            continue;
        }
        double m0 = 0.0, m1 = 0.0;
        for (int c : tree.node(v).children) {
            const auto sc = static_cast<std::size_t>(c);
            const auto msg = message_to_parent(up0[sc], up1[sc], e);
            m0 += msg.first;
            m1 += msg.second;
        }
        up0[sv] = m0;
        up1[sv] = m1;
    }
}

}  // namespace detail

/// log P(observed leaves | p_k), other leaves marginalized. An empty mask
/// observes every leaf.
inline double column_log_marginal(const RankTree& tree, std::span<const std::uint8_t> column,
                                  std::span<const std::uint8_t> observed, double p_k) {
    std::vector<double> up0, up1;
    detail::upward(tree, column, observed, detail::edge_log_probs(p_k, tree.depth()), up0, up1);
    return up0[static_cast<std::size_t>(tree.root())];
}

/// log P(b_k = column | p_k).
inline double column_log_prior(const RankTree& tree, std::span<const std::uint8_t> column, double p_k) {
    return column_log_marginal(tree, column, {}, p_k);
}

/// Log-odds of leaf `taxon` being 1 given all other leaves of the column.
/// Upward messages from the observed leaves, then a downward pass along the
/// root-to-leaf path.
inline double leaf_conditional_logit(const RankTree& tree, std::span<const std::uint8_t> column, int taxon,
                                     double p_k) {
    const auto e = detail::edge_log_probs(p_k, tree.depth());
    std::vector<std::uint8_t> observed(column.size(), 1);
    observed[static_cast<std::size_t>(taxon)] = 0;
    std::vector<double> up0, up1;
    detail::upward(tree, column, observed, e, up0, up1);

    std::vector<int> path;
    for (int v = tree.leaf_node(taxon); v >= 0; v = tree.node(v).parent) path.push_back(v);
    // path runs leaf -> root; walk it root -> leaf
    double a0 = 0.0, a1 = kNegInf;
    for (std::size_t step = path.size() - 1; step > 0; --step) {
        const int v = path[step];
        const int next = path[step - 1];
        for (int c : tree.node(v).children) {
            if (c == next) continue;
            const auto sc = static_cast<std::size_t>(c);
            const auto msg = detail::message_to_parent(up0[sc], up1[sc], e);
            a0 += msg.first;
            a1 += msg.second;
        }
        const double n0 = a0 + e.stay;
        const double n1 = log_sum_exp(a0 + e.flip, a1);
        a0 = n0;
        a1 = n1;
    }
    return a1 - a0;
}

/// P(b_jk = 1 | b_k^{-j}, p_k).
inline double leaf_conditional(const RankTree& tree, std::span<const std::uint8_t> column, int taxon, double p_k) {
    return sigmoid(leaf_conditional_logit(tree, column, taxon, p_k));
}

/// log P(b_k^{-j} | p_k, b_jk = bit): full column probability minus the leaf
/// marginal (leaf j is 1 with probability p_k). `column[taxon]` is ignored.
inline double partial_column_log_prob(const RankTree& tree, std::span<const std::uint8_t> column, int taxon,
                                      bool bit, double p_k) {
    std::vector<std::uint8_t> full(column.begin(), column.end());
    full[static_cast<std::size_t>(taxon)] = bit ? 1 : 0;
    const double marginal = bit ? std::log(p_k) : std::log1p(-p_k);
    return column_log_prior(tree, full, p_k) - marginal;
}

/// Same quantity by the chain rule: the product of univariate conditionals
/// P(b_l | b_j, b_earlier) over the remaining leaves in taxon order, each
/// evaluated by sum-product on a partially observed column.
inline double partial_column_log_prob_chain(const RankTree& tree, std::span<const std::uint8_t> column, int taxon,
                                            bool bit, double p_k) {
    std::vector<std::uint8_t> full(column.begin(), column.end());
    full[static_cast<std::size_t>(taxon)] = bit ? 1 : 0;
    std::vector<std::uint8_t> observed(full.size(), 0);
    observed[static_cast<std::size_t>(taxon)] = 1;
    double prev = column_log_marginal(tree, full, observed, p_k);
    double total = 0.0;
    for (std::size_t l = 0; l < full.size(); ++l) {
        if (static_cast<int>(l) == taxon) continue;
        observed[l] = 1;
        const double next = column_log_marginal(tree, full, observed, p_k);
        total += next - prev;
        prev = next;
    }
    return total;
}

/// Draws one column (leaf states in taxon order) from the generative process.
inline std::vector<std::uint8_t> sample_column(const RankTree& tree, double p_k, Rng& rng) {
    const double q = edge_flip_prob(p_k, tree.depth());
    std::vector<std::uint8_t> state(static_cast<std::size_t>(tree.node_count()), 0);
    for (int v : tree.preorder()) {
        const int parent = tree.node(v).parent;
        if (parent < 0) continue;
        state[static_cast<std::size_t>(v)] = state[static_cast<std::size_t>(parent)] ? 1 : (bernoulli(rng, q) ? 1 : 0);
    }
    std::vector<std::uint8_t> column(static_cast<std::size_t>(tree.leaf_count()));
    for (int j = 0; j < tree.leaf_count(); ++j) column[static_cast<std::size_t>(j)] = state[static_cast<std::size_t>(tree.leaf_node(j))];
    return column;
}

/// Unnormalized log-density of p_k for a freshly created single-leaf column:
/// log{1 - (1-p)^(1/L)} + ((P-2)/L) log(1-p) - log p.
inline double new_pk_log_density(double p_k, int node_count, int depth) {
    if (!(p_k > 0.0 && p_k < 1.0)) return kNegInf;
    const double l1m = std::log1p(-p_k);
    return log1m_exp(l1m / depth) + (node_count - 2.0) / depth * l1m - std::log(p_k);
}

/// Generalization for a leaf whose `private_edges` lowest edges lead to no
/// other leaf: any flip on them, and none elsewhere, yields the singleton.
inline double singleton_pk_log_density(double p_k, int node_count, int depth, int private_edges) {
    if (!(p_k > 0.0 && p_k < 1.0)) return kNegInf;
    const double l1m = std::log1p(-p_k);
    return log1m_exp(private_edges * l1m / depth) + (node_count - 1.0 - private_edges) / depth * l1m - std::log(p_k);
}

/// Poisson rate of new single-leaf columns per taxon step:
/// m {psi((P-1)/L + 1) - psi((P-2)/L + 1)}.
inline double new_column_rate(double m, int node_count, int depth) {
    return m * (digamma((node_count - 1.0) / depth + 1.0) - digamma((node_count - 2.0) / depth + 1.0));
}

/// Expected number of columns equal to the unit vector of a leaf with
/// `private_edges` private edges.
inline double singleton_column_rate(double m, int node_count, int depth, int private_edges) {
    return m * (digamma((node_count - 1.0) / depth + 1.0) - digamma((node_count - 1.0 - private_edges) / depth + 1.0));
}

/// Expected number of non-empty columns: m {psi((P-1)/L + 1) - psi(1)}.
inline double total_column_rate(double m, int node_count, int depth) {
    return m * (digamma((node_count - 1.0) / depth + 1.0) - digamma(1.0));
}

/// Exact draw from singleton_pk_log_density by rejection: propose
/// p ~ Beta(1, (P-1-d)/L + 1) and accept with {1-(1-p)^(d/L)}/p, which is
/// bounded by 1 because d <= L.
inline double sample_singleton_pk(int node_count, int depth, int private_edges, Rng& rng) {
    const double b = (node_count - 1.0 - private_edges) / depth;
    const double c = static_cast<double>(private_edges) / depth;
    while (true) {
        const double u = uniform_open(rng);
        // 1 - p = u^(1/(b+1))
        const double log1m_p = std::log(u) / (b + 1.0);
        const double p = -std::expm1(log1m_p);
        if (!(p > 0.0 && p < 1.0)) continue;
        const double accept = -std::expm1(c * log1m_p) / p;
        if (uniform01(rng) < accept) return p;
    }
}

/// Sum of column log-priors over the columns of a p x K binary matrix.
template <typename BinaryMatrix>
double matrix_tree_log_prob(const BinaryMatrix& B, const RankTree& tree, std::span<const double> p_cols) {
    if (static_cast<std::size_t>(B.cols()) != p_cols.size())
        throw std::invalid_argument("matrix_tree_log_prob: one probability per column required");
    double total = 0.0;
    std::vector<std::uint8_t> column(static_cast<std::size_t>(B.rows()));
    for (Eigen::Index k = 0; k < B.cols(); ++k) {
        for (Eigen::Index j = 0; j < B.rows(); ++j) column[static_cast<std::size_t>(j)] = B(j, k) ? 1 : 0;
        total += column_log_prior(tree, column, p_cols[static_cast<std::size_t>(k)]);
    }
    return total;
}

}  // namespace mmf
