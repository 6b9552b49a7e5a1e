#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "mmf/pibp.hpp"
#include "test_support.hpp"

using namespace mmf;

namespace {

std::vector<std::uint8_t> random_column(Rng& rng, int p) {
    std::vector<std::uint8_t> col(static_cast<std::size_t>(p));
    for (auto& b : col) b = bernoulli(rng, 0.5) ? 1 : 0;
    return col;
}

}  // namespace

TEST(EdgeFlip, Values) {
    EXPECT_NEAR(edge_flip_prob(0.3, 1), 0.3, 1e-15);
    EXPECT_NEAR(edge_flip_prob(0.75, 2), 0.5, 1e-15);
    EXPECT_EQ(edge_flip_prob(0.0, 3), 0.0);
    EXPECT_THROW(edge_flip_prob(1.0, 2), std::domain_error);
    EXPECT_THROW(edge_flip_prob(0.5, 0), std::domain_error);
}

TEST(ColumnPrior, FlatTreeIsIndependentBernoulli) {
    const auto tree = parse_newick("(a,b,c,d);");
    const std::vector<std::uint8_t> col{1, 0, 1, 1};
    EXPECT_NEAR(column_log_prior(tree, col, 0.3), 3 * std::log(0.3) + std::log(0.7), 1e-13);
    EXPECT_NEAR(leaf_conditional(tree, col, 1, 0.3), 0.3, 1e-13);
}

TEST(ColumnPrior, TwoLeafCherry) {
    // ((a,b)) with L = 2: q = 1 - sqrt(1-p)
    const auto tree = parse_newick("((a,b));");
    const double p = 0.36, q = 1.0 - std::sqrt(1.0 - p);
    const double p11 = q + (1 - q) * q * q;
    EXPECT_NEAR(std::exp(column_log_prior(tree, std::vector<std::uint8_t>{1, 1}, p)), p11, 1e-14);
    EXPECT_NEAR(std::exp(column_log_prior(tree, std::vector<std::uint8_t>{0, 0}, p)), (1 - q) * (1 - q) * (1 - q), 1e-14);
}

TEST(ColumnPrior, SumsToOneAndLeafMarginalIsP) {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const int p = 1 + rep % 7;
        const auto tree = testkit::random_tree(rng, p, 1 + rep % 4);
        const double pk = 0.05 + 0.9 * uniform01(rng);
        double total = 0.0, leaf0 = 0.0;
        for (int mask = 0; mask < (1 << p); ++mask) {
            std::vector<std::uint8_t> col(static_cast<std::size_t>(p));
            for (int j = 0; j < p; ++j) col[static_cast<std::size_t>(j)] = (mask >> j) & 1;
            const double pr = std::exp(column_log_prior(tree, col, pk));
            total += pr;
            if (col[0]) leaf0 += pr;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
        EXPECT_NEAR(leaf0, pk, 1e-12);
    }
}

TEST(ColumnPrior, MatchesBruteForceEnumeration) {
    Rng rng(17);
    for (int rep = 0; rep < 60; ++rep) {
        const int p = 1 + static_cast<int>(uniform_int(rng, 0, 9));
        const auto tree = testkit::random_tree(rng, p, 1 + static_cast<int>(uniform_int(rng, 0, 3)));
        const double pk = 0.05 + 0.9 * uniform01(rng);
        const auto col = random_column(rng, p);
        EXPECT_NEAR(column_log_prior(tree, col, pk), testkit::brute_force_column_log_prob(tree, col, {}, pk), 1e-10);
        std::vector<std::uint8_t> mask = random_column(rng, p);
        EXPECT_NEAR(column_log_marginal(tree, col, mask, pk), testkit::brute_force_column_log_prob(tree, col, mask, pk),
                    1e-10);
        const int j = static_cast<int>(uniform_int(rng, 0, p - 1));
        auto on = col, off = col;
        on[static_cast<std::size_t>(j)] = 1;
        off[static_cast<std::size_t>(j)] = 0;
        std::vector<std::uint8_t> others(static_cast<std::size_t>(p), 1);
        const double l1 = testkit::brute_force_column_log_prob(tree, on, others, pk);
        const double l0 = testkit::brute_force_column_log_prob(tree, off, others, pk);
        EXPECT_NEAR(leaf_conditional(tree, col, j, pk), 1.0 / (1.0 + std::exp(l0 - l1)), 1e-10);
    }
}

TEST(ColumnPrior, PartialProbabilityTwoRoutesAgree) {
    Rng rng(23);
    for (int rep = 0; rep < 40; ++rep) {
        const int p = 2 + rep % 8;
        const auto tree = testkit::random_tree(rng, p, 1 + rep % 4);
        const double pk = 0.05 + 0.9 * uniform01(rng);
        const auto col = random_column(rng, p);
        const int j = rep % p;
        for (bool bit : {false, true})
            EXPECT_NEAR(partial_column_log_prob(tree, col, j, bit, pk), partial_column_log_prob_chain(tree, col, j, bit, pk),
                        1e-10);
    }
}

TEST(ColumnPrior, SamplerMatchesProbabilities) {
    const auto tree = parse_newick("(((a,b),c),(d,e));");
    const double pk = 0.4;
    Rng rng(99);
    const int draws = 200000;
    std::vector<double> counts(32, 0.0), probs(32, 0.0);
    for (int r = 0; r < draws; ++r) {
        const auto col = sample_column(tree, pk, rng);
        int mask = 0;
        for (int j = 0; j < 5; ++j) mask |= col[static_cast<std::size_t>(j)] << j;
        counts[static_cast<std::size_t>(mask)] += 1;
    }
    for (int mask = 0; mask < 32; ++mask) {
        std::vector<std::uint8_t> col(5);
        for (int j = 0; j < 5; ++j) col[static_cast<std::size_t>(j)] = (mask >> j) & 1;
        probs[static_cast<std::size_t>(mask)] = std::exp(column_log_prior(tree, col, pk));
    }
    EXPECT_GT(testkit::chi2_gof_pvalue(counts, probs), 1e-3);
}

TEST(NewColumns, RatesIntegrateTheDensity) {
    using boost::math::quadrature::gauss_kronrod;
    for (auto [P, L, d] : std::vector<std::tuple<int, int, int>>{{7, 2, 1}, {23, 3, 2}, {11, 1, 1}, {40, 4, 3}}) {
        const double integral = gauss_kronrod<double, 61>::integrate(
            [&](double x) { return std::exp(singleton_pk_log_density(x, P, L, d)); }, 0.0, 1.0, 15, 1e-13);
        EXPECT_NEAR(singleton_column_rate(1.0, P, L, d), integral, 1e-9);
    }
    EXPECT_NEAR(new_column_rate(2.5, 23, 3), singleton_column_rate(2.5, 23, 3, 1), 1e-15);
    EXPECT_NEAR(new_pk_log_density(0.3, 23, 3), singleton_pk_log_density(0.3, 23, 3, 1), 1e-15);
    EXPECT_EQ(new_pk_log_density(0.0, 23, 3), kNegInf);
    EXPECT_EQ(new_pk_log_density(1.0, 23, 3), kNegInf);
}

TEST(NewColumns, SingletonRateIsExpectedUnitColumns) {
    // integral over p of m P(e_j | p) / p, checked against the column prior
    const auto tree = parse_newick("(((a,b),c),((d)));");
    using boost::math::quadrature::gauss_kronrod;
    for (int j = 0; j < 4; ++j) {
        std::vector<std::uint8_t> unit(4, 0);
        unit[static_cast<std::size_t>(j)] = 1;
        const double integral = gauss_kronrod<double, 61>::integrate(
            [&](double x) { return x <= 0.0 ? 0.0 : std::exp(column_log_prior(tree, unit, x)) / x; }, 0.0, 1.0, 15,
            1e-12);
        EXPECT_NEAR(singleton_column_rate(1.0, tree.node_count(), tree.depth(), tree.private_edges(j)), integral, 1e-8)
            << j;
    }
}

TEST(NewColumns, TotalRateIsExpectedNonEmptyColumns) {
    const auto tree = parse_newick("((a,b),(c));");
    using boost::math::quadrature::gauss_kronrod;
    std::vector<std::uint8_t> none(3, 0);
    const double integral = gauss_kronrod<double, 61>::integrate(
        [&](double x) { return x <= 0.0 ? 0.0 : -std::expm1(column_log_prior(tree, none, x)) / x; }, 0.0, 1.0, 15,
        1e-12);
    EXPECT_NEAR(total_column_rate(1.0, tree.node_count(), tree.depth()), integral, 1e-8);
}

TEST(NewColumns, SingletonPkSamplerMatchesDensity) {
    const int P = 23, L = 3, d = 2;
    using boost::math::quadrature::gauss_kronrod;
    const double norm = singleton_column_rate(1.0, P, L, d);
    auto cdf = [&](double x) {
        if (x <= 0.0) return 0.0;
        return gauss_kronrod<double, 31>::integrate([&](double y) { return std::exp(singleton_pk_log_density(y, P, L, d)); },
                                                    0.0, std::min(x, 1.0), 10, 1e-12) /
               norm;
    };
    Rng rng(8);
    std::vector<double> draws(20000);
    for (auto& v : draws) v = sample_singleton_pk(P, L, d, rng);
    EXPECT_GT(testkit::ks_one_sample_pvalue(draws, cdf), 1e-3);
}

TEST(MatrixPrior, SumOfColumns) {
    const auto tree = parse_newick("((a,b),(c,d));");
    Eigen::Matrix<std::uint8_t, 4, 2> B;
    B << 1, 0, 1, 0, 0, 1, 0, 1;
    const std::vector<double> pc{0.2, 0.6};
    const double expected = column_log_prior(tree, std::vector<std::uint8_t>{1, 1, 0, 0}, 0.2) +
                            column_log_prior(tree, std::vector<std::uint8_t>{0, 0, 1, 1}, 0.6);
    EXPECT_NEAR(matrix_tree_log_prob(B, tree, pc), expected, 1e-14);
    EXPECT_THROW(matrix_tree_log_prob(B, tree, std::vector<double>{0.2}), std::invalid_argument);
}
