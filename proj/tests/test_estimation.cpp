#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "mmf/assignment.hpp"
#include "mmf/estimation.hpp"
#include "mmf/simgen.hpp"
#include "test_support.hpp"

using namespace mmf;

namespace {

BinaryMatrix random_binary(Rng& rng, int rows, int cols, double p = 0.5) {
    BinaryMatrix M(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int k = 0; k < cols; ++k) M(r, k) = bernoulli(rng, p) ? 1 : 0;
    return M;
}

// Exhaustive minimum of the column-permuted Hamming distance.
long brute_perm_hamming(const BinaryMatrix& B1, const BinaryMatrix& B2) {
    std::vector<int> perm(static_cast<std::size_t>(B1.cols()));
    std::iota(perm.begin(), perm.end(), 0);
    long best = std::numeric_limits<long>::max();
    do {
        long d = 0;
        for (Eigen::Index k = 0; k < B1.cols(); ++k)
            for (Eigen::Index r = 0; r < B1.rows(); ++r) d += B1(r, k) != B2(r, perm[static_cast<std::size_t>(k)]);
        best = std::min(best, d);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

BinaryMatrix from_rows(std::initializer_list<std::initializer_list<int>> rows) {
    BinaryMatrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index k = 0;
        for (int v : row) M(r, k++) = static_cast<std::uint8_t>(v);
        ++r;
    }
    return M;
}

}  // namespace

TEST(Assignment, MatchesBruteForceOnRealCosts) {
    Rng rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        const int K = static_cast<int>(uniform_int(rng, 1, 6));
        Eigen::MatrixXd cost(K, K);
        for (int a = 0; a < K; ++a)
            for (int b = 0; b < K; ++b) cost(a, b) = std::floor(uniform01(rng) * 20.0) - 5.0;
        const auto perm = solve_assignment(cost);
        ASSERT_EQ(static_cast<int>(perm.size()), K);
        std::vector<int> seen(perm);
        std::sort(seen.begin(), seen.end());
        for (int k = 0; k < K; ++k) ASSERT_EQ(seen[static_cast<std::size_t>(k)], k);
        double got = 0.0;
        for (int k = 0; k < K; ++k) got += cost(k, perm[static_cast<std::size_t>(k)]);
        std::vector<int> p(static_cast<std::size_t>(K));
        std::iota(p.begin(), p.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double c = 0.0;
            for (int k = 0; k < K; ++k) c += cost(k, p[static_cast<std::size_t>(k)]);
            best = std::min(best, c);
        } while (std::next_permutation(p.begin(), p.end()));
        EXPECT_EQ(got, best);
    }
}

TEST(MinPermHamming, IdentityAndSwap) {
    Rng rng(2);
    const BinaryMatrix B = from_rows({{1, 0, 1}, {0, 1, 1}, {1, 1, 0}, {0, 0, 1}});
    const auto same = min_perm_hamming(B, B);
    EXPECT_EQ(same.distance, 0);
    EXPECT_EQ(same.perm, (std::vector<int>{0, 1, 2}));
    BinaryMatrix S = B;
    S.col(0) = B.col(2);
    S.col(2) = B.col(0);
    const auto swapped = min_perm_hamming(B, S);
    EXPECT_EQ(swapped.distance, 0);
    EXPECT_EQ(swapped.perm, (std::vector<int>{2, 1, 0}));
    EXPECT_THROW(min_perm_hamming(B, BinaryMatrix(4, 2)), std::invalid_argument);
}

TEST(MinPermHamming, EqualsExhaustiveSearch) {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        const int K = static_cast<int>(uniform_int(rng, 1, 6));
        const int rows = static_cast<int>(uniform_int(rng, 1, 10));
        const BinaryMatrix B1 = random_binary(rng, rows, K), B2 = random_binary(rng, rows, K);
        const auto res = min_perm_hamming(B1, B2);
        EXPECT_EQ(res.distance, brute_perm_hamming(B1, B2));
        long d = 0;
        for (int k = 0; k < K; ++k) d += column_hamming(B1, k, B2, res.perm[static_cast<std::size_t>(k)]);
        EXPECT_EQ(d, res.distance);
    }
}

TEST(MinPermHamming, EightByFiveAgainstAllPermutations) {
    Rng rng(8);
    for (int rep = 0; rep < 30; ++rep) {
        const BinaryMatrix B1 = random_binary(rng, 8, 5), B2 = random_binary(rng, 8, 5);
        EXPECT_EQ(min_perm_hamming(B1, B2).distance, brute_perm_hamming(B1, B2));
    }
}

TEST(MinPermHamming, IsPseudometric) {
    Rng rng(9);
    for (int rep = 0; rep < 200; ++rep) {
        const int K = static_cast<int>(uniform_int(rng, 1, 5));
        const BinaryMatrix X = random_binary(rng, 7, K), Y = random_binary(rng, 7, K), Z = random_binary(rng, 7, K);
        const long xy = min_perm_hamming(X, Y).distance, yx = min_perm_hamming(Y, X).distance;
        EXPECT_EQ(xy, yx);
        EXPECT_LE(xy, min_perm_hamming(X, Z).distance + min_perm_hamming(Z, Y).distance);
        std::vector<int> perm(static_cast<std::size_t>(K));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        EXPECT_EQ(min_perm_hamming(X, permute_columns(X, perm)).distance, 0);
    }
}

TEST(RecoveryError, HandCases) {
    const BinaryMatrix T = from_rows({{1, 0}, {1, 1}, {0, 1}, {0, 0}});
    EXPECT_EQ(recovery_error(T, T).error, 0.0);
    // complement is maximal when no permutation can help (equal columns)
    const BinaryMatrix T2 = from_rows({{1, 1}, {1, 1}, {0, 0}, {0, 0}});
    EXPECT_EQ(recovery_error((1 - T2.array()).matrix(), T2).error, 1.0);

    // 4x3 estimate with an extra all-zero column: the two real columns match
    // exactly, the padding column of the truth meets the zero column.
    const BinaryMatrix E = from_rows({{0, 1, 0}, {1, 1, 0}, {1, 0, 0}, {0, 0, 0}});
    EXPECT_DOUBLE_EQ(recovery_error(E, T).error, 0.0);
    // one flipped cell in a real column: 1 / (4 * 3)
    BinaryMatrix E2 = E;
    E2(3, 0) = 1;
    EXPECT_DOUBLE_EQ(recovery_error(E2, T).error, 1.0 / 12.0);
    // the same flip without padding: 1 / (4 * 2)
    BinaryMatrix E3 = E2.leftCols(2);
    EXPECT_DOUBLE_EQ(recovery_error(E3, T).error, 1.0 / 8.0);
    // a non-empty extra column costs its ones
    BinaryMatrix E4 = E;
    E4(0, 2) = 1;
    E4(2, 2) = 1;
    EXPECT_DOUBLE_EQ(recovery_error(E4, T).error, 2.0 / 12.0);
    EXPECT_THROW(recovery_error(BinaryMatrix(3, 2), T), std::invalid_argument);
}

TEST(RecoveryError, InvariantToColumnPermutations) {
    Rng rng(21);
    for (int rep = 0; rep < 100; ++rep) {
        const int Ke = static_cast<int>(uniform_int(rng, 1, 5)), Kt = static_cast<int>(uniform_int(rng, 1, 5));
        const BinaryMatrix E = random_binary(rng, 9, Ke), T = random_binary(rng, 9, Kt);
        std::vector<int> pe(static_cast<std::size_t>(Ke)), pt(static_cast<std::size_t>(Kt));
        std::iota(pe.begin(), pe.end(), 0);
        std::iota(pt.begin(), pt.end(), 0);
        std::shuffle(pe.begin(), pe.end(), rng);
        std::shuffle(pt.begin(), pt.end(), rng);
        const double base = recovery_error(E, T).error;
        EXPECT_DOUBLE_EQ(recovery_error(permute_columns(E, pe), T).error, base);
        EXPECT_DOUBLE_EQ(recovery_error(E, permute_columns(T, pt)).error, base);
        EXPECT_GE(base, 0.0);
        EXPECT_LE(base, 1.0);
    }
}

TEST(RecoveryReport, ReusesThePermutationOfB) {
    const BinaryMatrix Bt = from_rows({{1, 0}, {1, 0}, {0, 1}});
    const BinaryMatrix At = from_rows({{1, 0}, {0, 1}, {1, 1}, {0, 0}});
    // estimate with columns swapped and one A cell wrong
    const BinaryMatrix Be = from_rows({{0, 1}, {0, 1}, {1, 0}});
    BinaryMatrix Ae = from_rows({{0, 1}, {1, 0}, {1, 1}, {0, 0}});
    Ae(3, 0) = 1;
    const auto rep = recovery_report(Ae, Be, At, Bt);
    EXPECT_EQ(rep.error_B, 0.0);
    EXPECT_DOUBLE_EQ(rep.error_A, 1.0 / 8.0);
    EXPECT_EQ(rep.K_true, 2);
    EXPECT_EQ(rep.K_hat, 2);
}

TEST(MapK, ModeWithSmallerTieBreak) {
    EXPECT_EQ(map_K(std::vector<int>{3, 3, 4}), 3);
    EXPECT_EQ(map_K(std::vector<int>{3, 4, 3, 4}), 3);
    EXPECT_EQ(map_K(std::vector<int>{5, 4, 4, 5, 5}), 5);
    EXPECT_THROW(map_K(std::vector<int>{}), ValidationError);
}

TEST(PosteriorModeB, MatchesDoubleLoop) {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<BinaryMatrix> samples;
        for (int s = 0; s < 20; ++s) samples.push_back(random_binary(rng, 6, 3));
        // direct evaluation of the average distance to every sample
        std::size_t best = 0;
        double best_avg = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < samples.size(); ++a) {
            long total = 0;
            for (std::size_t b = 0; b < samples.size(); ++b) total += brute_perm_hamming(samples[b], samples[a]);
            const double avg = static_cast<double>(total) / static_cast<double>(samples.size());
            if (avg < best_avg) {
                best_avg = avg;
                best = a;
            }
        }
        EXPECT_EQ(posterior_mode_B(samples), best);
    }
}

TEST(PosteriorModeB, IdenticalAndOutlier) {
    Rng rng(4);
    const BinaryMatrix B = random_binary(rng, 6, 3);
    EXPECT_EQ(posterior_mode_B({B, B, B}), 0u);
    const BinaryMatrix O = (1 - B.array()).matrix();
    EXPECT_EQ(posterior_mode_B({O, B, B, B}), 1u);
    EXPECT_THROW(posterior_mode_B({}), ValidationError);
}

TEST(Psrf, DegenerateCases) {
    std::vector<double> x;
    for (int k = 0; k < 50; ++k) x.push_back(std::sin(0.7 * k));
    const double n = 50.0;
    EXPECT_NEAR(psrf({x, x}), std::sqrt((n - 1.0) / n), 1e-12);
    EXPECT_EQ(psrf({std::vector<double>(20, 1.0), std::vector<double>(20, 2.0)}), kInf);
    EXPECT_EQ(psrf({std::vector<double>(20, 3.0), std::vector<double>(20, 3.0)}), 1.0);
    EXPECT_THROW(psrf({x}), ValidationError);
    EXPECT_THROW(psrf({x, std::vector<double>(x.begin(), x.begin() + 40)}), ValidationError);
    EXPECT_THROW(psrf({std::vector<double>(9, 0.0), std::vector<double>(9, 1.0)}), ValidationError);
}

TEST(Psrf, HandComputedTwoChains) {
    const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, b{2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    // means 5.5 and 6.5, within variances 55/6 each, B = 10 * 0.5 = 5
    const double W = 55.0 / 6.0, B = 5.0, n = 10.0;
    EXPECT_NEAR(psrf({a, b}), std::sqrt((n - 1.0) / n + B / (n * W)), 1e-14);
}

TEST(Psrf, AffineInvarianceAndIidChains) {
    Rng rng(77);
    std::vector<std::vector<double>> chains(3, std::vector<double>(4000));
    for (auto& c : chains)
        for (auto& v : c) v = gamma_rate(rng, 2.0, 1.0);
    const double r = psrf(chains);
    EXPECT_LT(r, 1.01);
    auto mapped = chains;
    for (auto& c : mapped)
        for (auto& v : c) v = -3.0 * v + 17.0;
    EXPECT_NEAR(psrf(mapped), r, 1e-10);
}

TEST(Identifiability, SufficientConditionAndExample) {
    EXPECT_EQ(check_identifiability(from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}})), Identifiability::sufficient);
    EXPECT_EQ(check_identifiability(from_rows({{0, 0, 1, 1}, {1, 1, 0, 0}, {0, 1, 0, 1}, {1, 0, 0, 1}})),
              Identifiability::unknown);
    EXPECT_EQ(check_identifiability(BinaryMatrix::Zero(4, 3)), Identifiability::unknown);
    EXPECT_EQ(check_identifiability(BinaryMatrix(5, 0)), Identifiability::unknown);
    EXPECT_STREQ(to_string(Identifiability::sufficient), "SUFFICIENT");

    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const int K = static_cast<int>(uniform_int(rng, 1, 6));
        BinaryMatrix A = random_binary(rng, 12, K, 0.6);
        std::vector<int> rows(12);
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        for (int k = 0; k < K; ++k) {
            A.row(rows[static_cast<std::size_t>(k)]).setZero();
            A(rows[static_cast<std::size_t>(k)], k) = 1;
        }
        EXPECT_EQ(check_identifiability(A), Identifiability::sufficient);
    }
}

TEST(Predictive, DirichletMeanAndRows) {
    IntMatrix x(1, 2);
    x << 3, 1;
    const CountMatrix data(x, {"a", "b"});
    ModelState st;
    st.Z = BinaryMatrix(1, 2);
    st.Z << 1, 0;
    st.s = Eigen::Vector2d(2.0, 2.0);
    st.t = Eigen::Vector2d(1.0, 1.0);
    IntMatrix x2(2, 2);
    x2 << 3, 1, 1, 3;
    const CountMatrix data2(x2, {"a", "b"});
    ModelState st2 = st;
    st2.Z = BinaryMatrix(2, 2);
    st2.Z << 1, 0, 0, 1;
    const auto pc = posterior_predictive(data2, {&st2});
    EXPECT_NEAR(pc.predicted(0, 0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(pc.predicted(0, 1), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(pc.observed(0, 0), 0.75, 1e-15);

    // observed equal to predicted: correlation 1
    IntMatrix x3(2, 2);
    x3 << 2, 1, 1, 2;
    EXPECT_NEAR(posterior_predictive(CountMatrix(x3, {"a", "b"}), {&st2}).correlation, 1.0, 1e-12);
    EXPECT_THROW(posterior_predictive(data, {}), ValidationError);
}

TEST(Predictive, RowsSumToOneOverManySnapshots) {
    Rng rng(12);
    auto sc = SimScenario::desk();
    sc.n = 20;
    sc.block_size = 5;
    const auto sim = simulate(sc);
    std::vector<ModelState> states(7);
    std::vector<const ModelState*> ptrs;
    for (auto& st : states) {
        st.Z = random_binary(rng, sc.n, sc.p);
        st.t = Eigen::VectorXd::Constant(sc.p, 0.3);
        st.s = Eigen::VectorXd::Constant(sc.p, 0.3) + Eigen::VectorXd::Random(sc.p).cwiseAbs() * 4.0 +
               Eigen::VectorXd::Constant(sc.p, 0.01);
        ptrs.push_back(&st);
    }
    const auto pc = posterior_predictive(sim.data, ptrs);
    for (int i = 0; i < sc.n; ++i) EXPECT_NEAR(pc.predicted.row(i).sum(), 1.0, 1e-12);
}

TEST(Refit, FrozenBAndBlockRecovery) {
    auto sc = SimScenario::desk();
    sc.seed = 4;
    sc.flip_frac = 0.0;
    const auto sim = simulate(sc);
    SamplerConfig cfg;
    cfg.seed = 9;
    cfg.refit_iterations = 600;
    cfg.refit_burn_in = 200;
    const Hyperparameters hp;

    // warm start at the true structure
    Rng rng(1);
    ModelState st;
    st.Z = sim.Z;
    st.A = sim.A;
    st.B = sim.B;
    st.W = scenario_weights(sc);
    st.c = Eigen::VectorXd::Constant(sc.p, sc.c_true);
    st.s = Eigen::VectorXd::Constant(sc.p, sc.s);
    st.t = Eigen::VectorXd::Constant(sc.p, sc.t);
    st.p_col.assign(static_cast<std::size_t>(sc.K), sc.p_k_true);
    st.m = 1.0;
    st.rho = 0.3;
    const BinaryMatrix B0 = st.B;
    const auto est = conditional_refit(sim.data, sim.tree, hp, cfg, st);
    EXPECT_EQ(est.B_hat, B0);
    EXPECT_EQ(st.B, B0);
    EXPECT_EQ(est.refit_samples, 400);
    EXPECT_TRUE(((est.Z_hat.array() >= 0.0) && (est.Z_hat.array() <= 1.0)).all());
    EXPECT_LE(recovery_report(est.A_hat, est.B_hat, sim.A, sim.B).error_A, 0.15);

    cfg.refit_iterations = 10;
    cfg.refit_burn_in = 10;
    EXPECT_THROW(conditional_refit(sim.data, sim.tree, hp, cfg, st), ValidationError);
}

TEST(PsrfReport, DuplicatedChainGivesSqrtRatio) {
    auto sc = SimScenario::desk();
    sc.n = 30;
    sc.block_size = 10;
    const auto sim = simulate(sc);
    SamplerConfig cfg;
    cfg.iterations = 120;
    cfg.burn_in = 20;
    cfg.thin = 5;
    const Trace tr = run_chain(sim.data, sim.tree, Hyperparameters{}, cfg, 0);
    const auto rep = psrf_report({tr, tr});
    const double n = static_cast<double>(tr.snapshots.size());
    EXPECT_EQ(rep.length, 20);
    EXPECT_NEAR(rep.q_median, std::sqrt((n - 1.0) / n), 1e-9);
    EXPECT_TRUE(rep.K == 1.0 || std::abs(rep.K - std::sqrt((n - 1.0) / n)) < 1e-9);
}
