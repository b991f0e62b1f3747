#include <gtest/gtest.h>

#include <fstream>

#include "goodd/checkpoint.hpp"
#include "goodd/gradcheck.hpp"
#include "goodd/structenc.hpp"
#include "goodd/synthetic.hpp"
#include "goodd/trainer.hpp"
#include "test_support.hpp"

using namespace goodd;

namespace {

Mlp identity_mlp(std::size_t width, std::size_t depth) {
    Mlp m;
    for (std::size_t i = 0; i < depth; ++i) m.layers.push_back({Matrix::identity(width), Matrix(1, width)});
    return m;
}

Matrix run_gin(const Graph& g, const std::vector<Mlp>& enc) {
    ad::Tape t;
    ParameterBinding bind(t, false);
    auto adj = std::make_shared<const Adjacency>(g.adjacency());
    return gin_forward(adj, t.constant(g.features()), enc, bind).value();
}

ModelConfig small_config() {
    ModelConfig c;
    c.layers = 2;
    c.hidden_dim = 4;
    c.proj_layers = 2;
    c.rw_dim = 4;
    c.degree_dim = 5;
    c.clusters = 2;
    c.seed = 17;
    return c;
}

Embeddings embed(const std::vector<ViewPair>& views, const ModelParams& p, ad::Tape& t) {
    std::vector<const ViewPair*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v);
    const BatchedViews bv = batch_views(ptrs);
    ParameterBinding bind(t, false);
    return forward_all(bv, p, bind);
}

}  // namespace

TEST(Init, DeterministicAndZeroBiases) {
    const ModelConfig c = small_config();
    const ModelParams a = init_params(c, 3, c.structure_dim());
    const ModelParams b = init_params(c, 3, c.structure_dim());
    const auto ta = a.trainable(), tb = b.trainable();
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        EXPECT_EQ(*ta[i].second, *tb[i].second) << ta[i].first;
        if (ta[i].first.ends_with(".bias")) {
            EXPECT_EQ(*ta[i].second, Matrix(1, ta[i].second->cols())) << ta[i].first;
        }
    }
    EXPECT_EQ(a.feature_encoder.front().in_dim(), 3u);
    EXPECT_EQ(a.structure_encoder.front().in_dim(), c.structure_dim());
    EXPECT_EQ(a.group_head.in_dim(), 2 * c.layers * c.hidden_dim);
    EXPECT_FALSE(a.trained());
}

TEST(Init, XavierBound) {
    const ModelConfig c = small_config();
    const ModelParams p = init_params(c, 3, c.structure_dim());
    for (const auto& [name, m] : p.trainable()) {
        if (!name.ends_with(".weight")) continue;
        const double a = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
        for (double v : m->data()) EXPECT_LE(std::abs(v), a) << name;
    }
}

TEST(Init, RejectsBadConfig) {
    ModelConfig c = small_config();
    c.clusters = 1;
    EXPECT_THROW(init_params(c, 1, 1), ArgumentError);
    c = small_config();
    c.temperature = 0.0;
    EXPECT_THROW(init_params(c, 1, 1), ArgumentError);
}

TEST(Gin, IdentityOnSingleEdge) {
    const Graph g(2, {{0, 1}}, Matrix{{1, 0}, {0, 1}});
    EXPECT_EQ(run_gin(g, {identity_mlp(2, 2)}), (Matrix{{1, 1}, {1, 1}}));
}

TEST(Gin, NoEdgesIsIdentity) {
    const Matrix x{{0.5, 2}, {1, 3}, {4, 0.25}};
    EXPECT_EQ(run_gin(Graph(3, {}, x), {identity_mlp(2, 2)}), x);
}

TEST(Gin, ConcatenatesLayers) {
    const Graph g(2, {{0, 1}}, Matrix{{1, 0}, {0, 1}});
    // layer 2 sees [1,1] at both nodes and sums to [2,2]
    EXPECT_EQ(run_gin(g, {identity_mlp(2, 2), identity_mlp(2, 2)}), (Matrix{{1, 1, 2, 2}, {1, 1, 2, 2}}));
}

TEST(Gin, PermutationEquivariant) {
    std::mt19937_64 rng(3);
    const ModelParams p = init_params(small_config(), 3, 9);
    for (int trial = 0; trial < 10; ++trial) {
        const Graph g = support::random_graph(rng, 4 + rng() % 10, 0.4, 3);
        const auto perm = support::random_permutation(rng, g.node_count());
        const Matrix h = run_gin(g, p.feature_encoder);
        const Matrix hp = run_gin(g.permuted(perm), p.feature_encoder);
        for (std::size_t i = 0; i < g.node_count(); ++i)
            for (std::size_t j = 0; j < h.cols(); ++j) EXPECT_NEAR(hp(perm[i], j), h(i, j), 1e-12);
    }
}

TEST(Gin, WidthMismatch) {
    EXPECT_THROW(run_gin(Graph(2, {}, Matrix(2, 3)), {identity_mlp(2, 1)}), ShapeError);
}

TEST(Readout, SumsRows) {
    ad::Tape t;
    auto seg = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0, 0});
    EXPECT_EQ(readout(t.leaf(Matrix{{1, 2}, {3, 4}}), seg, 1).value(), (Matrix{{4, 6}}));
    auto one = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0});
    EXPECT_EQ(readout(t.leaf(Matrix{{7, -1}}), one, 1).value(), (Matrix{{7, -1}}));
    auto doubled = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0, 0, 0, 0});
    EXPECT_EQ(readout(t.leaf(Matrix{{1, 2}, {3, 4}, {1, 2}, {3, 4}}), doubled, 1).value(), (Matrix{{8, 12}}));
}

TEST(Project, IdentityAndWidths) {
    ad::Tape t;
    ParameterBinding bind(t, false);
    const Matrix x{{1, -2, 3}};
    EXPECT_EQ(project(t.constant(x), identity_mlp(3, 1), bind).value(), x);
    const ModelConfig c = small_config();
    const ModelParams p = init_params(c, 2, 9);
    for (const Mlp* h : {&p.node_head_f, &p.node_head_s, &p.graph_head_f, &p.graph_head_s, &p.group_head})
        EXPECT_EQ(h->out_dim(), c.projection_dim());
    EXPECT_THROW(project(t.constant(Matrix(1, 2)), identity_mlp(3, 1), bind), ShapeError);
}

TEST(ForwardAll, Shapes) {
    std::mt19937_64 rng(5);
    const ModelConfig c = small_config();
    const ModelParams p = init_params(c, 2, c.structure_dim());
    std::vector<ViewPair> views;
    for (std::size_t n : {3, 5, 4}) views.push_back(build_views(support::random_graph(rng, n, 0.5, 2), 4, 5));
    ad::Tape t;
    const Embeddings e = embed(views, p, t);
    const std::size_t dp = c.projection_dim();
    EXPECT_EQ(e.node_f.value().shape(), Matrix::shape_string(12, c.embedding_dim()));
    EXPECT_EQ(e.z_node_f.value().shape(), Matrix::shape_string(12, dp));
    EXPECT_EQ(e.z_node_s.value().shape(), Matrix::shape_string(12, dp));
    EXPECT_EQ(e.z_graph_f.value().shape(), Matrix::shape_string(3, dp));
    EXPECT_EQ(e.z_graph_s.value().shape(), Matrix::shape_string(3, dp));
    EXPECT_EQ(e.z_group.value().shape(), Matrix::shape_string(3, dp));
}

TEST(ForwardAll, DuplicateGraphsGiveIdenticalRows) {
    std::mt19937_64 rng(6);
    const ModelConfig c = small_config();
    const ModelParams p = init_params(c, 2, c.structure_dim());
    const ViewPair v = build_views(support::random_graph(rng, 6, 0.5, 2), 4, 5);
    ad::Tape t;
    const Embeddings e = embed({v, v}, p, t);
    for (const ad::Var* z : {&e.z_graph_f, &e.z_graph_s, &e.z_group}) {
        const auto& m = z->value();
        EXPECT_TRUE(std::equal(m.row(0).begin(), m.row(0).end(), m.row(1).begin()));
    }
}

TEST(ForwardAll, ZeroInputsGiveZeroEmbeddings) {
    const ModelConfig c = small_config();
    const ModelParams p = init_params(c, 2, c.structure_dim());
    // No edges: random-walk and degree blocks are zero as well.
    const ViewPair v = build_views(Graph(4, {}, Matrix(4, 2)), 4, 5);
    ad::Tape t;
    const Embeddings e = embed({v, v}, p, t);
    for (const ad::Var* z : {&e.z_node_f, &e.z_node_s, &e.z_graph_f, &e.z_graph_s, &e.z_group})
        for (double x : z->value().data()) EXPECT_EQ(x, 0.0);
}

TEST(ForwardAll, EncodersAreIndependent) {
    std::mt19937_64 rng(7);
    const ModelConfig c = small_config();
    const ModelParams p = init_params(c, 2, c.structure_dim());
    ModelParams zeroed = p;
    for (auto& mlp : zeroed.structure_encoder)
        for (auto& l : mlp.layers) {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
    std::vector<ViewPair> views;
    for (std::size_t n : {5, 7}) views.push_back(build_views(support::random_graph(rng, n, 0.4, 2), 4, 5));
    ad::Tape t1, t2;
    const Embeddings a = embed(views, p, t1);
    const Embeddings b = embed(views, zeroed, t2);
    EXPECT_EQ(a.node_f.value(), b.node_f.value());
    EXPECT_EQ(a.z_graph_f.value(), b.z_graph_f.value());
    EXPECT_NE(a.node_s.value(), b.node_s.value());
}

TEST(ForwardAll, GraphEmbeddingPermutationInvariant) {
    std::mt19937_64 rng(8);
    const ModelConfig c = small_config();
    const ModelParams p = init_params(c, 3, c.structure_dim());
    for (int trial = 0; trial < 20; ++trial) {
        const Graph g = support::random_graph(rng, 5 + rng() % 15, 0.3, 3);
        const auto perm = support::random_permutation(rng, g.node_count());
        ad::Tape t1, t2;
        const Embeddings a = embed({build_views(g, 4, 5)}, p, t1);
        const Embeddings b = embed({build_views(g.permuted(perm), 4, 5)}, p, t2);
        EXPECT_LE(support::max_abs_diff(a.graph_f.value(), b.graph_f.value()), 1e-9);
        EXPECT_LE(support::max_abs_diff(a.graph_s.value(), b.graph_s.value()), 1e-9);
        EXPECT_LE(support::max_abs_diff(a.z_group.value(), b.z_group.value()), 1e-9);
    }
}

TEST(ForwardAll, GradientsThroughComposition) {
    std::mt19937_64 rng(9);
    ModelConfig c = small_config();
    c.hidden_dim = 3;
    ModelParams p = init_params(c, 2, c.structure_dim());
    for (auto& [name, m] : p.trainable())
        if (m->rows() == 1)
            for (auto& v : m->data()) v = std::uniform_real_distribution<>(-0.5, 0.5)(rng);
    std::vector<ViewPair> views;
    for (std::size_t n : {4, 5}) views.push_back(build_views(support::random_graph(rng, n, 0.6, 2), 4, 5));
    std::vector<const ViewPair*> ptrs{&views[0], &views[1]};
    const BatchedViews bv = batch_views(ptrs);
    const auto named = p.trainable();
    std::vector<Matrix> inputs;
    for (const auto& [n, m] : named) inputs.push_back(*m);
    const Matrix w = support::random_matrix(rng, 2, c.projection_dim());
    const auto rep = ad::grad_check(
        [&](ad::Tape& t, const std::vector<ad::Var>& leaves) {
            ParameterBinding bind(t, false);
            for (std::size_t i = 0; i < named.size(); ++i) bind.preset(*named[i].second, leaves[i]);
            const Embeddings e = forward_all(bv, p, bind);
            return ad::sum(ad::mul(ad::add(e.z_group, ad::add(e.z_graph_f, e.z_graph_s)), t.constant(w)));
        },
        inputs);
    EXPECT_TRUE(rep.passed) << rep.max_relative_error;
}

TEST(Checkpoint, RoundTripIsBitExact) {
    std::mt19937_64 rng(10);
    const auto [id, ood] = generate_synthetic_pair(16, 3);
    ModelConfig c = small_config();
    c.rw_dim = 3;
    c.degree_dim = 4;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    const auto views = build_views(id, c.rw_dim, c.degree_dim);
    const ModelParams p = train(views, c, tc).first;
    const auto file = support::scratch_dir("ckpt") / "m.ckpt";
    save_checkpoint(file, p);
    const ModelParams q = load_checkpoint(file);
    EXPECT_EQ(q.config, p.config);
    const auto tp = p.trainable(), tq = q.trainable();
    for (std::size_t i = 0; i < tp.size(); ++i) EXPECT_EQ(*tp[i].second, *tq[i].second) << tp[i].first;
    EXPECT_EQ(q.prototypes.centers, p.prototypes.centers);
    EXPECT_EQ(q.prototypes.temps, p.prototypes.temps);
    EXPECT_EQ(q.prototypes.assignments, p.prototypes.assignments);
    EXPECT_EQ(q.stats.mean, p.stats.mean);
    EXPECT_EQ(q.stats.sigma, p.stats.sigma);
    EXPECT_EQ(q.stats.similarity_mean, p.stats.similarity_mean);
    EXPECT_EQ(q.bank_f, p.bank_f);
    EXPECT_EQ(q.levels, p.levels);

    const auto again = file.parent_path() / "m2.ckpt";
    save_checkpoint(again, q);
    std::ifstream a(file), b(again);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Checkpoint, RejectsForeignFiles) {
    const auto dir = support::scratch_dir("ckpt_bad");
    {
        std::ofstream(dir / "x.ckpt") << "hello 1\n";
    }
    EXPECT_THROW(load_checkpoint(dir / "x.ckpt"), ParseError);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), ParseError);
}
