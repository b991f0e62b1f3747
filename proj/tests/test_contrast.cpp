#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "goodd/contrast.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace goodd;

namespace {

constexpr double kTau = 0.2;

Matrix unit_rows(std::size_t n, std::size_t dim) {
    Matrix m(n, dim);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix random_rotation(std::mt19937_64& rng, std::size_t d) {
    Matrix q = support::random_matrix(rng, d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += q(i, k) * q(j, k);
            for (std::size_t k = 0; k < d; ++k) q(i, k) -= dot * q(j, k);
        }
        const double nrm = l2_norm(q.row(i));
        for (auto& v : q.row(i)) v /= nrm;
    }
    return q;
}

PrototypeState state_from(const Matrix& centers, std::vector<std::size_t> assignments) {
    PrototypeState s;
    s.centers = centers;
    s.assignments = std::move(assignments);
    return s;
}

}  // namespace

TEST(NodeLoss, OrthonormalPairHandOracle) {
    ad::Tape t;
    const Matrix z = unit_rows(2, 3);
    const auto r = node_loss(t.leaf(z), t.leaf(z), {0, 0}, kTau);
    const double expected = oracle::info_nce_term(1.0, {0.0}, kTau);
    EXPECT_NEAR(expected, -5.0, 1e-12);
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_NEAR(r.errors[0], expected, 1e-9);
    EXPECT_NEAR(r.loss.value()(0, 0), expected, 1e-9);
}

TEST(NodeLoss, ManyTwoNodeGraphsEachAtMinusInverseTau) {
    ad::Tape t;
    Matrix z(8, 8);
    for (std::size_t i = 0; i < 8; ++i) z(i, i) = 1.0;
    const auto r = node_loss(t.leaf(z), t.leaf(z), {0, 0, 1, 1, 2, 2, 3, 3}, kTau);
    for (double e : r.errors) EXPECT_NEAR(e, -1.0 / kTau, 1e-9);
}

TEST(NodeLoss, LargerOrthonormalGraphMatchesDefinition) {
    // With n nodes the literal denominator holds n - 1 unit terms.
    ad::Tape t;
    const Matrix z = unit_rows(5, 5);
    const auto r = node_loss(t.leaf(z), t.leaf(z), {0, 0, 0, 0, 0}, kTau);
    EXPECT_NEAR(r.errors[0], oracle::info_nce_term(1.0, {0, 0, 0, 0}, kTau), 1e-9);
}

TEST(NodeLoss, IncludePositiveFlag) {
    ad::Tape t;
    const Matrix z = unit_rows(2, 2);
    const auto r = node_loss(t.leaf(z), t.leaf(z), {0, 0}, kTau, true);
    EXPECT_NEAR(r.errors[0], oracle::info_nce_term(1.0, {1.0, 0.0}, kTau), 1e-9);
}

TEST(NodeLoss, ScaleInvariant) {
    std::mt19937_64 rng(1);
    const Matrix a = support::random_matrix(rng, 7, 4), b = support::random_matrix(rng, 7, 4);
    Matrix a3 = a, b3 = b;
    for (auto& v : a3.data()) v *= 3.0;
    for (auto& v : b3.data()) v *= 3.0;
    const std::vector<std::size_t> seg{0, 0, 0, 1, 1, 1, 1};
    ad::Tape t;
    const auto r1 = node_loss(t.leaf(a), t.leaf(b), seg, kTau);
    const auto r2 = node_loss(t.leaf(a3), t.leaf(b3), seg, kTau);
    for (std::size_t g = 0; g < 2; ++g) EXPECT_NEAR(r1.errors[g], r2.errors[g], 1e-12);
}

TEST(NodeLoss, SingleNodeFallback) {
    ad::Tape t;
    const Matrix f{{1.0, 0.0}}, s{{0.6, 0.8}};
    const auto r = node_loss(t.leaf(f), t.leaf(s), {0}, kTau);
    EXPECT_EQ(r.fallbacks, 1u);
    EXPECT_NEAR(r.errors[0], -0.6 / kTau, 1e-12);
}

TEST(GraphLoss, OrthonormalPairHandOracle) {
    ad::Tape t;
    const Matrix z = unit_rows(2, 4);
    const auto r = graph_loss(t.leaf(z), t.leaf(z), kTau);
    for (double e : r.errors) EXPECT_NEAR(e, oracle::info_nce_term(1.0, {0.0}, kTau), 1e-9);
    EXPECT_NEAR(r.errors[0], -5.0, 1e-9);
}

TEST(GraphLoss, DuplicateRowsGetEqualErrors) {
    std::mt19937_64 rng(2);
    Matrix f = support::random_matrix(rng, 4, 3), s = support::random_matrix(rng, 4, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        f(3, j) = f(1, j);
        s(3, j) = s(1, j);
    }
    ad::Tape t;
    const auto r = graph_loss(t.leaf(f), t.leaf(s), kTau);
    EXPECT_EQ(r.errors[1], r.errors[3]);
}

TEST(GraphLoss, BatchPermutation) {
    std::mt19937_64 rng(3);
    const Matrix f = support::random_matrix(rng, 6, 5), s = support::random_matrix(rng, 6, 5);
    const auto perm = support::random_permutation(rng, 6);
    Matrix fp(6, 5), sp(6, 5);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            fp(perm[i], j) = f(i, j);
            sp(perm[i], j) = s(i, j);
        }
    ad::Tape t;
    const auto a = graph_loss(t.leaf(f), t.leaf(s), kTau);
    const auto b = graph_loss(t.leaf(fp), t.leaf(sp), kTau);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(b.errors[perm[i]], a.errors[i], 1e-12);
    EXPECT_NEAR(a.loss.value()(0, 0), b.loss.value()(0, 0), 1e-12);
}

TEST(GraphLoss, SingleGraphFallback) {
    ad::Tape t;
    const auto r = graph_loss(t.leaf(Matrix{{1.0, 0.0}}), t.leaf(Matrix{{1.0, 0.0}}), kTau);
    EXPECT_EQ(r.fallbacks, 1u);
    EXPECT_NEAR(r.errors[0], -1.0 / kTau, 1e-12);
}

TEST(GroupLoss, PrototypeHit) {
    ad::Tape t;
    const Matrix c = unit_rows(2, 3);
    const auto r = group_loss(t.leaf(Matrix{{1, 0, 0}}), c, {kTau, kTau}, {0});
    EXPECT_NEAR(r.errors[0], oracle::info_nce_term(1.0, {0.0}, kTau), 1e-9);
    EXPECT_NEAR(r.errors[0], -5.0, 1e-9);
}

TEST(GroupLoss, EquidistantIsLogKMinusOne) {
    for (std::size_t k : {2, 3, 4, 7}) {
        const Matrix c = unit_rows(k, k + 1);
        Matrix z(1, k + 1);
        for (std::size_t j = 0; j < k; ++j) z(0, j) = 0.5;  // same cosine to every prototype
        Matrix orth(1, k + 1);
        orth(0, k) = 2.0;  // cosine 0 to every prototype
        for (const Matrix* zz : {&z, &orth}) {
            ad::Tape t;
            const auto r = group_loss(t.leaf(*zz), c, std::vector<double>(k, kTau), {k - 1});
            EXPECT_NEAR(r.errors[0], std::log(static_cast<double>(k - 1)), 1e-9) << "K=" << k;
        }
    }
}

TEST(GroupLoss, ScaleInvariantAndPerClusterTemperature) {
    std::mt19937_64 rng(4);
    const Matrix c = support::random_matrix(rng, 3, 4);
    const Matrix z = support::random_matrix(rng, 5, 4);
    Matrix z7 = z;
    for (auto& v : z7.data()) v *= 7.0;
    const std::vector<double> temps{0.1, 0.3, 0.5};
    const std::vector<std::size_t> assign{0, 1, 2, 1, 0};
    ad::Tape t;
    const auto a = group_loss(t.leaf(z), c, temps, assign);
    const auto b = group_loss(t.leaf(z7), c, temps, assign);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR(a.errors[i], b.errors[i], 1e-12);
        std::vector<double> negs;
        double pos = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            const double sim = cosine_similarity(z.row(i), c.row(j));
            if (j == assign[i]) pos = sim / temps[j];
            else negs.push_back(sim / temps[j]);
        }
        EXPECT_NEAR(a.errors[i], oracle::info_nce_term(pos, negs, 1.0), 1e-12);
    }
}

TEST(Losses, ErrorsAverageToLoss) {
    std::mt19937_64 rng(5);
    const Matrix f = support::random_matrix(rng, 9, 4), s = support::random_matrix(rng, 9, 4);
    const std::vector<std::size_t> seg{0, 0, 1, 1, 1, 2, 2, 2, 2};
    ad::Tape t;
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    const auto n = node_loss(t.leaf(f), t.leaf(s), seg, kTau);
    EXPECT_NEAR(mean(n.errors), n.loss.value()(0, 0), 1e-12);
    const auto g = graph_loss(t.leaf(f), t.leaf(s), kTau);
    EXPECT_NEAR(mean(g.errors), g.loss.value()(0, 0), 1e-12);
    const auto q = group_loss(t.leaf(f), support::random_matrix(rng, 3, 4), {0.2, 0.3, 0.4}, {0, 1, 2, 0, 1, 2, 0, 1, 2});
    EXPECT_NEAR(mean(q.errors), q.loss.value()(0, 0), 1e-12);
}

TEST(Losses, RotationInvariant) {
    std::mt19937_64 rng(6);
    const Matrix f = support::random_matrix(rng, 6, 5), s = support::random_matrix(rng, 6, 5);
    const Matrix q = random_rotation(rng, 5);
    const Matrix fr = matmul(f, q), sr = matmul(s, q);
    const std::vector<std::size_t> seg{0, 0, 0, 1, 1, 1};
    ad::Tape t;
    const auto n1 = node_loss(t.leaf(f), t.leaf(s), seg, kTau), n2 = node_loss(t.leaf(fr), t.leaf(sr), seg, kTau);
    const auto g1 = graph_loss(t.leaf(f), t.leaf(s), kTau), g2 = graph_loss(t.leaf(fr), t.leaf(sr), kTau);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(n1.errors[i], n2.errors[i], 1e-10);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g1.errors[i], g2.errors[i], 1e-10);
}

TEST(KMeans, TwoSeparatedPairs) {
    const Matrix z{{0, 0}, {0, 0.1}, {10, 10}, {10, 10.1}};
    const auto st = kmeans(z, 2, 42);
    EXPECT_EQ(st.assignments[0], st.assignments[1]);
    EXPECT_EQ(st.assignments[2], st.assignments[3]);
    EXPECT_NE(st.assignments[0], st.assignments[2]);
    const auto a = st.assignments[0], b = st.assignments[2];
    EXPECT_NEAR(st.centers(a, 0), 0.0, 1e-12);
    EXPECT_NEAR(st.centers(a, 1), 0.05, 1e-12);
    EXPECT_NEAR(st.centers(b, 0), 10.0, 1e-12);
    EXPECT_NEAR(st.centers(b, 1), 10.05, 1e-12);
}

TEST(KMeans, OnePointPerCluster) {
    std::mt19937_64 rng(7);
    const Matrix z = support::random_matrix(rng, 6, 3);
    const auto st = kmeans(z, 6, 1);
    EXPECT_NEAR(kmeans_objective(z, st.centers, st.assignments), 0.0, 1e-24);
    std::set<std::size_t> used(st.assignments.begin(), st.assignments.end());
    EXPECT_EQ(used.size(), 6u);
}

TEST(KMeans, ObjectiveNonIncreasingAndDeterministic) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix z = support::random_matrix(rng, 60, 4);
        std::vector<double> trace;
        const auto st = kmeans(z, 5, trial, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
        const auto again = kmeans(z, 5, trial);
        EXPECT_EQ(st.centers, again.centers);
        EXPECT_EQ(st.assignments, again.assignments);
        for (auto a : st.assignments) EXPECT_LT(a, 5u);
    }
}

TEST(KMeans, TooFewPoints) { EXPECT_THROW(kmeans(Matrix(2, 2), 3, 0), ArgumentError); }

TEST(Temperatures, CongruentClustersShareBase) {
    const Matrix z{{1, 0}, {-1, 0}, {11, 0}, {9, 0}};
    const auto st = state_from(Matrix{{0, 0}, {10, 0}}, {0, 0, 1, 1});
    for (double t : concentration_temperatures(z, st, kTau)) EXPECT_NEAR(t, kTau, 1e-15);
}

TEST(Temperatures, DoubleSpreadDoublesTemperature) {
    const Matrix z{{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {102, 0}, {98, 0}, {100, 2}, {100, -2}};
    const auto st = state_from(Matrix{{0, 0}, {100, 0}}, {0, 0, 0, 0, 1, 1, 1, 1});
    const auto temps = concentration_temperatures(z, st, kTau);
    EXPECT_NEAR(temps[1] / temps[0], 2.0, 1e-12);
    EXPECT_NEAR((temps[0] + temps[1]) / 2.0, kTau, 1e-12);
}

TEST(Temperatures, ZeroSpreadFloors) {
    const Matrix z{{0, 0}, {0, 0}, {0, 0}, {11, 0}, {9, 0}, {10, 1}};
    const auto st = state_from(Matrix{{0, 0}, {10, 0}}, {0, 0, 0, 1, 1, 1});
    const auto temps = concentration_temperatures(z, st, kTau);
    EXPECT_DOUBLE_EQ(temps[0], kTau / 10.0);
    EXPECT_GT(temps[1], kTau);
}
