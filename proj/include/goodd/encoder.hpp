#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "goodd/autodiff.hpp"
#include "goodd/error.hpp"
#include "goodd/matrix.hpp"
#include "goodd/structenc.hpp"

namespace goodd {

enum class Level : std::size_t { node = 0, graph = 1, group = 2 };
inline constexpr std::array<const char*, 3> kLevelNames{"node", "graph", "group"};

struct ModelConfig {
    std::size_t layers = 2;         // GIN depth L
    std::size_t hidden_dim = 16;    // per-layer width d_h
    std::size_t proj_dim = 0;       // d_p; 0 means layers * hidden_dim
    std::size_t proj_layers = 2;    // L'
    double temperature = 0.2;       // tau, all levels
    std::size_t clusters = 10;      // K
    double alpha = 1.0;             // adaptive-weight exponent
    std::size_t rw_dim = 16;        // random-walk encoding width
    std::size_t degree_dim = 32;    // degree one-hot width
    bool include_positive_in_denominator = false;
    std::uint64_t seed = 0;

    std::size_t embedding_dim() const { return layers * hidden_dim; }
    std::size_t projection_dim() const { return proj_dim == 0 ? embedding_dim() : proj_dim; }
    std::size_t structure_dim() const { return rw_dim + degree_dim; }

    void validate() const {
        if (layers < 1) throw ArgumentError("layers must be >= 1");
        if (hidden_dim < 1) throw ArgumentError("hidden_dim must be >= 1");
        if (proj_layers < 1) throw ArgumentError("proj_layers must be >= 1");
        if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
        if (clusters < 2) throw ArgumentError("clusters must be >= 2");
        if (!(alpha >= 0.0)) throw ArgumentError("alpha must be >= 0");
        if (rw_dim < 1 || degree_dim < 1) throw ArgumentError("encoding widths must be >= 1");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Linear {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out
};

/// Linear layers with ReLU between them and none after the last.
struct Mlp {
    std::vector<Linear> layers;

    std::size_t in_dim() const { return layers.front().weight.rows(); }
    std::size_t out_dim() const { return layers.back().weight.cols(); }
};

struct PrototypeState {
    Matrix centers;                        // K x d_p
    std::vector<std::size_t> assignments;  // per training graph
    std::vector<double> temps;             // per cluster
    std::size_t epoch = 0;

    bool populated() const { return centers.rows() > 0 && temps.size() == centers.rows(); }
};

/// Mean and population standard deviation of per-sample training errors.
/// The similarity pair describes −cos(z, nearest prototype) over the
/// training graphs under the final parameters.
struct ErrorStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> sigma{0.0, 0.0, 0.0};
    bool populated = false;
    double similarity_mean = 0.0;
    double similarity_sigma = 0.0;
};

struct ModelParams {
    ModelConfig config;
    std::size_t feature_dim = 0;
    std::size_t structure_dim = 0;
    std::vector<Mlp> feature_encoder;    // one two-layer MLP per GIN layer
    std::vector<Mlp> structure_encoder;
    Mlp node_head_f, node_head_s;
    Mlp graph_head_f, graph_head_s;
    Mlp group_head;
    PrototypeState prototypes;
    ErrorStats stats;
    std::array<bool, 3> levels{true, true, true};  // losses trained and scored
    Matrix bank_f, bank_s;  // graph-space embeddings of sampled training graphs

    /// Every trainable tensor with a stable name, in a fixed order.
    std::vector<std::pair<std::string, Matrix*>> trainable() {
        std::vector<std::pair<std::string, Matrix*>> out;
        auto add_mlp = [&out](const std::string& prefix, Mlp& m) {
            for (std::size_t i = 0; i < m.layers.size(); ++i) {
                out.emplace_back(prefix + ".l" + std::to_string(i) + ".weight", &m.layers[i].weight);
                out.emplace_back(prefix + ".l" + std::to_string(i) + ".bias", &m.layers[i].bias);
            }
        };
        for (std::size_t l = 0; l < feature_encoder.size(); ++l) add_mlp("encoder_f.gin" + std::to_string(l), feature_encoder[l]);
        for (std::size_t l = 0; l < structure_encoder.size(); ++l) add_mlp("encoder_s.gin" + std::to_string(l), structure_encoder[l]);
        add_mlp("head.node_f", node_head_f);
        add_mlp("head.node_s", node_head_s);
        add_mlp("head.graph_f", graph_head_f);
        add_mlp("head.graph_s", graph_head_s);
        add_mlp("head.group", group_head);
        return out;
    }

    std::vector<std::pair<std::string, const Matrix*>> trainable() const {
        std::vector<std::pair<std::string, const Matrix*>> out;
        for (auto& [n, m] : const_cast<ModelParams*>(this)->trainable()) out.emplace_back(n, m);
        return out;
    }

    bool trained() const { return prototypes.populated() && stats.populated; }
};

namespace detail {

inline Mlp make_mlp(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
    Mlp m;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const double a = std::sqrt(6.0 / static_cast<double>(widths[i] + widths[i + 1]));
        std::uniform_real_distribution<double> dist(-a, a);
        Linear lin{Matrix(widths[i], widths[i + 1]), Matrix(1, widths[i + 1])};
        for (auto& w : lin.weight.data()) w = dist(rng);
        m.layers.push_back(std::move(lin));
    }
    return m;
}

inline Mlp make_head(std::size_t in, std::size_t out, std::size_t depth, std::mt19937_64& rng) {
    std::vector<std::size_t> widths{in};
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(out);
    return make_mlp(widths, rng);
}

}  // namespace detail

/// Xavier-uniform weights, zero biases, drawn in trainable() order from the
/// config seed. Prototypes and error statistics start empty.
inline ModelParams init_params(const ModelConfig& cfg, std::size_t d_f, std::size_t d_s) {
    cfg.validate();
    if (d_f < 1 || d_s < 1) throw ArgumentError("input widths must be >= 1");
    std::mt19937_64 rng(cfg.seed);
    ModelParams p;
    p.config = cfg;
    p.feature_dim = d_f;
    p.structure_dim = d_s;
    const std::size_t dh = cfg.hidden_dim;
    for (std::size_t l = 0; l < cfg.layers; ++l)
        p.feature_encoder.push_back(detail::make_mlp({l == 0 ? d_f : dh, dh, dh}, rng));
    for (std::size_t l = 0; l < cfg.layers; ++l)
        p.structure_encoder.push_back(detail::make_mlp({l == 0 ? d_s : dh, dh, dh}, rng));
    const std::size_t emb = cfg.embedding_dim();
    const std::size_t dp = cfg.projection_dim();
    p.node_head_f = detail::make_head(emb, dp, cfg.proj_layers, rng);
    p.node_head_s = detail::make_head(emb, dp, cfg.proj_layers, rng);
    p.graph_head_f = detail::make_head(emb, dp, cfg.proj_layers, rng);
    p.graph_head_s = detail::make_head(emb, dp, cfg.proj_layers, rng);
    p.group_head = detail::make_head(2 * emb, dp, cfg.proj_layers, rng);
    return p;
}

/// Maps parameter matrices to tape leaves, creating each leaf on first use.
class ParameterBinding {
public:
    ParameterBinding(ad::Tape& tape, bool requires_grad) : tape_(&tape), requires_grad_(requires_grad) {}

    ad::Var operator()(const Matrix& m) {
        for (const auto& [ptr, var] : entries_)
            if (ptr == &m) return var;
        const ad::Var v = tape_->leaf(m, requires_grad_);
        entries_.emplace_back(&m, v);
        return v;
    }

    /// Binds `m` to an existing leaf (used to differentiate w.r.t. given inputs).
    void preset(const Matrix& m, ad::Var v) { entries_.emplace_back(&m, v); }

    /// Gradient for `m`, or zeros when it never entered the tape.
    Matrix grad(const Matrix& m) const {
        for (const auto& [ptr, var] : entries_)
            if (ptr == &m) return tape_->grad(var);
        return Matrix(m.rows(), m.cols());
    }

    ad::Tape& tape() const { return *tape_; }

private:
    ad::Tape* tape_;
    bool requires_grad_;
    std::vector<std::pair<const Matrix*, ad::Var>> entries_;
};

/// Perceptron forward: linear, then ReLU + linear for each further layer.
inline ad::Var project(ad::Var x, const Mlp& mlp, ParameterBinding& bind) {
    if (x.cols() != mlp.in_dim()) {
        throw ShapeError("projection input " + x.value().shape() + " does not match head input width " +
                         std::to_string(mlp.in_dim()));
    }
    ad::Var h = x;
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        if (i > 0) h = ad::relu(h);
        h = ad::add_bias(ad::matmul(h, bind(mlp.layers[i].weight)), bind(mlp.layers[i].bias));
    }
    return h;
}

/// GIN with eps = 0: h_l = MLP_l(h_{l-1} + A h_{l-1}); returns [h_1 || ... || h_L].
inline ad::Var gin_forward(std::shared_ptr<const Adjacency> adj, ad::Var input, const std::vector<Mlp>& encoder,
                           ParameterBinding& bind) {
    if (encoder.empty()) throw ArgumentError("encoder has no layers");
    if (input.cols() != encoder.front().in_dim()) {
        throw ShapeError("encoder input " + input.value().shape() + " does not match width " +
                         std::to_string(encoder.front().in_dim()));
    }
    ad::Var h = input;
    ad::Var out{};
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        const ad::Var agg = ad::add(h, ad::sparse_matmul(adj, h));
        h = project(agg, encoder[l], bind);
        out = l == 0 ? h : ad::concat_cols(out, h);
    }
    return out;
}

/// Sum readout per graph.
inline ad::Var readout(ad::Var node_emb, std::shared_ptr<const std::vector<std::size_t>> segment_ids,
                       std::size_t graph_count) {
    return ad::segment_sum(node_emb, std::move(segment_ids), graph_count);
}

struct Embeddings {
    ad::Var node_f, node_s;    // N x L*d_h
    ad::Var graph_f, graph_s;  // B x L*d_h
    ad::Var z_node_f, z_node_s;
    ad::Var z_graph_f, z_graph_s;
    ad::Var z_group;  // B x d_p
};

/// Both encoders, readout and the five projection heads for one batch.
inline Embeddings forward_all(const BatchedViews& views, const ModelParams& params, ParameterBinding& bind) {
    ad::Tape& tape = bind.tape();
    auto adj = std::make_shared<const Adjacency>(views.batch.adjacency);
    auto seg = std::make_shared<const std::vector<std::size_t>>(views.batch.segment_ids);
    const std::size_t b = views.batch.graph_count;

    Embeddings e;
    e.node_f = gin_forward(adj, tape.constant(views.batch.features), params.feature_encoder, bind);
    e.node_s = gin_forward(adj, tape.constant(views.structure), params.structure_encoder, bind);
    e.graph_f = readout(e.node_f, seg, b);
    e.graph_s = readout(e.node_s, seg, b);
    e.z_node_f = project(e.node_f, params.node_head_f, bind);
    e.z_node_s = project(e.node_s, params.node_head_s, bind);
    e.z_graph_f = project(e.graph_f, params.graph_head_f, bind);
    e.z_graph_s = project(e.graph_s, params.graph_head_s, bind);
    e.z_group = project(ad::concat_cols(e.graph_f, e.graph_s), params.group_head, bind);
    return e;
}

}  // namespace goodd
