#pragma once

// Randomized gradient checks over the whole op catalog and the three
// contrastive losses evaluated through encoders and projection heads.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "goodd/autodiff.hpp"
#include "goodd/contrast.hpp"
#include "goodd/encoder.hpp"
#include "goodd/gradcheck.hpp"
#include "goodd/graph.hpp"
#include "goodd/structenc.hpp"
#include "goodd/synthetic.hpp"

namespace goodd {

struct GradCheckEntry {
    std::string name;
    std::size_t instances = 0;
    std::size_t checked = 0;   // coordinates compared
    std::size_t excluded = 0;    // kink coordinates
    std::size_t noise_limited = 0;  // agreement limited by rounding noise
    double max_relative_error = 0.0;
    bool passed = true;
};

struct GradCheckSuiteOptions {
    std::size_t instances = 20;
    std::uint64_t seed = 0;
    std::string inject_fault;  // op name whose backward is corrupted
    ad::GradCheckOptions check;
};

namespace detail {

class CheckRng {
public:
    explicit CheckRng(std::uint64_t seed) : rng_(seed) {}

    std::size_t size(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

    Matrix matrix(std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
        Matrix m(r, c);
        for (auto& v : m.data()) v = real(lo, hi);
        return m;
    }

    /// Entries bounded away from zero, for ops with a kink there.
    Matrix away_from_zero(std::size_t r, std::size_t c) {
        Matrix m(r, c);
        for (auto& v : m.data()) v = (real(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * real(0.1, 1.0);
        return m;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

/// Reduces y to a scalar with a fixed random weighting so every entry of y
/// receives a distinct upstream gradient.
inline ad::Var weighted_total(ad::Tape& t, ad::Var y, const Matrix& w) {
    return ad::sum(ad::mul(y, t.constant(w)));
}

struct OpCase {
    ad::TapeFunction f;
    std::vector<Matrix> inputs;
};

inline OpCase make_op_case(const std::string& op, CheckRng& r) {
    const std::size_t rows = r.size(2, 5), cols = r.size(2, 5);
    auto total = [](Matrix w) {
        return [w = std::move(w)](ad::Tape& t, ad::Var y) { return weighted_total(t, y, w); };
    };
    if (op == "matmul") {
        const std::size_t inner = r.size(2, 5);
        auto red = total(r.matrix(rows, cols));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::matmul(v[0], v[1])); },
                {r.matrix(rows, inner), r.matrix(inner, cols)}};
    }
    if (op == "sparse_matmul") {
        const std::size_t n = r.size(3, 7);
        const Graph g(n, [&] {
            std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
            for (std::uint32_t i = 0; i < n; ++i)
                for (std::uint32_t j = i + 1; j < n; ++j)
                    if (r.real(0.0, 1.0) < 0.5) e.emplace_back(i, j);
            return e;
        }());
        auto adj = std::make_shared<const Adjacency>(g.adjacency());
        auto red = total(r.matrix(n, cols));
        return {[adj, red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::sparse_matmul(adj, v[0])); },
                {r.matrix(n, cols)}};
    }
    if (op == "add" || op == "sub" || op == "mul") {
        auto red = total(r.matrix(rows, cols));
        return {[red, op](ad::Tape& t, const std::vector<ad::Var>& v) {
                    const ad::Var y = op == "add" ? ad::add(v[0], v[1]) : op == "sub" ? ad::sub(v[0], v[1])
                                                                                       : ad::mul(v[0], v[1]);
                    return red(t, y);
                },
                {r.matrix(rows, cols), r.matrix(rows, cols)}};
    }
    if (op == "scale") {
        const double s = r.real(-2.0, 2.0);
        auto red = total(r.matrix(rows, cols));
        return {[red, s](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::scale(v[0], s)); },
                {r.matrix(rows, cols)}};
    }
    if (op == "relu") {
        auto red = total(r.matrix(rows, cols));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::relu(v[0])); },
                {r.away_from_zero(rows, cols)}};
    }
    if (op == "add_bias") {
        auto red = total(r.matrix(rows, cols));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::add_bias(v[0], v[1])); },
                {r.matrix(rows, cols), r.matrix(1, cols)}};
    }
    if (op == "concat_cols") {
        const std::size_t c2 = r.size(1, 4);
        auto red = total(r.matrix(rows, cols + c2));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::concat_cols(v[0], v[1])); },
                {r.matrix(rows, cols), r.matrix(rows, c2)}};
    }
    if (op == "concat_rows") {
        const std::size_t r2 = r.size(1, 4), r3 = r.size(1, 3);
        auto red = total(r.matrix(rows + r2 + r3, cols));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::concat_rows(v)); },
                {r.matrix(rows, cols), r.matrix(r2, cols), r.matrix(r3, cols)}};
    }
    if (op == "slice_rows") {
        const std::size_t n = rows + 2;
        const std::size_t begin = r.size(0, n - 1);
        const std::size_t end = r.size(begin + 1, n);
        auto red = total(r.matrix(end - begin, cols));
        return {[red, begin, end](ad::Tape& t, const std::vector<ad::Var>& v) {
                    return red(t, ad::slice_rows(v[0], begin, end));
                },
                {r.matrix(n, cols)}};
    }
    if (op == "segment_sum") {
        const std::size_t n = r.size(3, 8), segs = r.size(1, 3);
        auto ids = std::make_shared<std::vector<std::size_t>>(n);
        for (auto& s : *ids) s = r.size(0, segs - 1);
        std::sort(ids->begin(), ids->end());
        std::shared_ptr<const std::vector<std::size_t>> cids = ids;
        auto red = total(r.matrix(segs, cols));
        return {[red, cids, segs](ad::Tape& t, const std::vector<ad::Var>& v) {
                    return red(t, ad::segment_sum(v[0], cids, segs));
                },
                {r.matrix(n, cols)}};
    }
    if (op == "l2_normalize_rows") {
        auto red = total(r.matrix(rows, cols));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::l2_normalize_rows(v[0])); },
                {r.away_from_zero(rows, cols)}};
    }
    if (op == "transpose") {
        auto red = total(r.matrix(cols, rows));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::transpose(v[0])); },
                {r.matrix(rows, cols)}};
    }
    if (op == "exp") {
        auto red = total(r.matrix(rows, cols));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::exp(v[0])); },
                {r.matrix(rows, cols)}};
    }
    if (op == "log") {
        auto red = total(r.matrix(rows, cols));
        return {[red](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::log(v[0])); },
                {r.matrix(rows, cols, 0.2, 2.0)}};
    }
    if (op == "row_sum" || op == "row_mean" || op == "row_max") {
        auto red = total(r.matrix(rows, 1));
        return {[red, op](ad::Tape& t, const std::vector<ad::Var>& v) {
                    const ad::Var y = op == "row_sum" ? ad::row_sum(v[0]) : op == "row_mean" ? ad::row_mean(v[0])
                                                                                          : ad::row_max(v[0]);
                    return red(t, y);
                },
                {r.matrix(rows, cols)}};
    }
    if (op == "row_logsumexp") {
        Matrix mask(rows, cols, 1.0);
        for (auto& m : mask.data()) m = r.real(0.0, 1.0) < 0.3 ? 0.0 : 1.0;
        for (std::size_t i = 0; i < rows; ++i) mask(i, r.size(0, cols - 1)) = 1.0;
        auto red = total(r.matrix(rows, 1));
        return {[red, mask](ad::Tape& t, const std::vector<ad::Var>& v) { return red(t, ad::row_logsumexp(v[0], mask)); },
                {r.matrix(rows, cols, -3.0, 3.0)}};
    }
    if (op == "sum" || op == "mean") {
        const double s = r.real(0.5, 2.0);
        return {[op, s](ad::Tape&, const std::vector<ad::Var>& v) {
                    return ad::scale(op == "sum" ? ad::sum(v[0]) : ad::mean(v[0]), s);
                },
                {r.matrix(rows, cols)}};
    }
    throw ArgumentError("no gradient check for op '" + op + "'");
}

/// Small random batch and model for loss checks.
struct LossFixture {
    ModelParams params;
    std::vector<ViewPair> views;
    BatchedViews batch;
    Matrix centers;
    std::vector<double> temps;
    std::vector<std::size_t> assignments;
};

inline LossFixture make_loss_fixture(CheckRng& r) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden_dim = 3;
    cfg.proj_dim = 4;
    cfg.proj_layers = 2;
    cfg.temperature = r.real(0.2, 0.8);
    cfg.rw_dim = 3;
    cfg.degree_dim = 3;
    cfg.clusters = 3;
    cfg.seed = r.engine()();
    const std::size_t d_f = r.size(1, 3);
    LossFixture fx;
    const std::size_t graphs = r.size(2, 3);
    for (std::size_t g = 0; g < graphs; ++g) {
        const std::size_t n = r.size(3, 5);
        Graph base = detail::erdos_renyi(n, 0.6, r.engine());
        Graph with_x(n, [&] {
            std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
            for (const auto& ed : base.edges()) e.emplace_back(ed.u, ed.v);
            return e;
        }(), r.matrix(n, d_f));
        fx.views.push_back(build_views(with_x, cfg.rw_dim, cfg.degree_dim));
    }
    std::vector<const ViewPair*> ptrs;
    for (const auto& v : fx.views) ptrs.push_back(&v);
    fx.batch = batch_views(ptrs);
    fx.params = init_params(cfg, d_f, cfg.structure_dim());
    // Nonzero biases keep pre-activations of all-zero input rows off the ReLU kink.
    for (auto& [name, m] : fx.params.trainable())
        if (m->rows() == 1)
            for (auto& v : m->data()) v = r.real(-0.5, 0.5);
    fx.centers = r.matrix(cfg.clusters, cfg.projection_dim());
    for (std::size_t j = 0; j < cfg.clusters; ++j) fx.temps.push_back(r.real(0.1, 0.6));
    for (std::size_t g = 0; g < graphs; ++g) fx.assignments.push_back(r.size(0, cfg.clusters - 1));
    return fx;
}

}  // namespace detail

/// Loss names checked after the op catalog.
inline const std::vector<std::string>& loss_check_names() {
    static const std::vector<std::string> names{"loss.node", "loss.graph", "loss.group"};
    return names;
}

/// Checks every catalog op and every loss on `instances` random cases each.
/// Loss checks differentiate w.r.t. all encoder and head parameters.
inline std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& opt = {}) {
    ad::GradCheckOptions check = opt.check;
    check.inject_fault = opt.inject_fault;
    std::vector<GradCheckEntry> out;
    auto absorb = [](GradCheckEntry& e, const ad::GradCheckReport& rep) {
        ++e.instances;
        e.checked += rep.checked;
        e.excluded += rep.excluded.size();
        e.noise_limited += rep.noise_limited.size();
        e.max_relative_error = std::max(e.max_relative_error, rep.max_relative_error);
        e.passed = e.passed && rep.passed;
    };

    for (std::size_t k = 0; k < ad::op_catalog().size(); ++k) {
        const std::string& op = ad::op_catalog()[k];
        detail::CheckRng rng(opt.seed * 7919 + k);
        GradCheckEntry e{op};
        for (std::size_t i = 0; i < opt.instances; ++i) {
            auto c = detail::make_op_case(op, rng);
            absorb(e, ad::grad_check(c.f, std::move(c.inputs), check));
        }
        out.push_back(e);
    }

    for (std::size_t k = 0; k < loss_check_names().size(); ++k) {
        detail::CheckRng rng(opt.seed * 7919 + 1000 + k);
        GradCheckEntry e{loss_check_names()[k]};
        for (std::size_t i = 0; i < opt.instances; ++i) {
            auto fx = std::make_shared<detail::LossFixture>(detail::make_loss_fixture(rng));
            const auto named = fx->params.trainable();
            std::vector<Matrix> inputs;
            for (const auto& [name, m] : named) inputs.push_back(*m);
            const bool incl = rng.real(0.0, 1.0) < 0.5;
            ad::TapeFunction f = [fx, k, incl](ad::Tape& t, const std::vector<ad::Var>& leaves) {
                ParameterBinding bind(t, false);
                const auto params = fx->params.trainable();
                for (std::size_t p = 0; p < params.size(); ++p) bind.preset(*params[p].second, leaves[p]);
                const Embeddings e = forward_all(fx->batch, fx->params, bind);
                const double tau = fx->params.config.temperature;
                if (k == 0) return node_loss(e.z_node_f, e.z_node_s, fx->batch.batch.segment_ids, tau, incl).loss;
                if (k == 1) return graph_loss(e.z_graph_f, e.z_graph_s, tau, incl).loss;
                return group_loss(e.z_group, fx->centers, fx->temps, fx->assignments, incl).loss;
            };
            absorb(e, ad::grad_check(f, std::move(inputs), check));
        }
        out.push_back(e);
    }
    return out;
}

}  // namespace goodd
