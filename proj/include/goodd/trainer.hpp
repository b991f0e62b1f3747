#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "goodd/autodiff.hpp"
#include "goodd/contrast.hpp"
#include "goodd/encoder.hpp"
#include "goodd/error.hpp"
#include "goodd/structenc.hpp"

namespace goodd {

enum class Variant { adaptive, simp };

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Variant variant = Variant::adaptive;
    std::array<bool, 3> levels{true, true, true};
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ArgumentError("epochs must be >= 1");
        if (batch_size < 2) throw ArgumentError("batch_size must be >= 2");
        if (!(learning_rate >= 0.0)) throw ArgumentError("learning_rate must be >= 0");
        if (!(levels[0] || levels[1] || levels[2])) throw ArgumentError("at least one loss level must be enabled");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// (σ_node^α, σ_graph^α, σ_group^α). A zero σ weighs 0 unless α = 0.
inline std::array<double, 3> adaptive_weights(const std::array<double, 3>& sigma, double alpha) {
    if (alpha < 0.0) throw ArgumentError("alpha must be >= 0");
    std::array<double, 3> w{};
    for (std::size_t l = 0; l < 3; ++l) {
        if (sigma[l] < 0.0) throw ArgumentError("standard deviation must be >= 0");
        w[l] = alpha == 0.0 ? 1.0 : sigma[l] == 0.0 ? 0.0 : std::pow(sigma[l], alpha);
    }
    return w;
}

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m, v;
    std::size_t step = 0;
};

/// One bias-corrected Adam update over `params` in order. All gradients are
/// checked for finiteness before anything is modified.
inline void adam_step(const std::vector<std::pair<std::string, Matrix*>>& params, const std::vector<Matrix>& grads,
                      AdamState& state, const AdamHyper& hyper) {
    if (grads.size() != params.size()) throw ShapeError("adam_step: gradient count does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].same_shape(*params[i].second)) {
            throw ShapeError("adam_step: gradient " + grads[i].shape() + " for " + params[i].first + " " +
                             params[i].second->shape());
        }
        if (!grads[i].all_finite()) throw NumericalError("non-finite gradient for " + params[i].first);
    }
    if (state.m.empty()) {
        for (const auto& [name, p] : params) {
            state.m.emplace_back(p->rows(), p->cols());
            state.v.emplace_back(p->rows(), p->cols());
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].second->data();
        auto& m = state.m[i].data();
        auto& v = state.v[i].data();
        const auto& g = grads[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
            v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
            p[k] -= hyper.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + hyper.epsilon);
        }
    }
}

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    std::array<double, 3> mean_error{};
    std::array<double, 3> sigma{};
    std::array<double, 3> weights{};  // used during this epoch
    double loss = 0.0;                // mean combined batch loss
    std::size_t fallbacks = 0;
    double seconds = 0.0;
};

struct TrainStats {
    std::vector<EpochStats> epochs;
    LevelErrors last_errors;  // per training graph, final epoch

    /// Equality on everything except wall-clock time.
    friend bool same_numbers(const TrainStats& a, const TrainStats& b) {
        if (a.epochs.size() != b.epochs.size()) return false;
        for (std::size_t i = 0; i < a.epochs.size(); ++i) {
            const auto& x = a.epochs[i];
            const auto& y = b.epochs[i];
            if (x.epoch != y.epoch || x.mean_error != y.mean_error || x.sigma != y.sigma || x.weights != y.weights ||
                x.loss != y.loss || x.fallbacks != y.fallbacks)
                return false;
        }
        return a.last_errors.node == b.last_errors.node && a.last_errors.graph == b.last_errors.graph &&
               a.last_errors.group == b.last_errors.group;
    }
};

inline std::pair<double, double> mean_and_population_sd(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double n = static_cast<double>(v.size());
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return {mu, std::sqrt(ss / n)};
}

/// Splits `order` into batches of `b`; a trailing batch of one is folded
/// into the previous batch.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t b) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += b)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + b)));
    if (out.size() > 1 && out.back().size() < 2) {
        out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
        out.pop_back();
    }
    return out;
}

inline BatchedViews batch_of(const std::vector<ViewPair>& views, const std::vector<std::size_t>& idx) {
    std::vector<const ViewPair*> ptrs;
    ptrs.reserve(idx.size());
    for (auto i : idx) ptrs.push_back(&views.at(i));
    return batch_views(ptrs);
}

/// Forward without gradients over `views` in index order; returns the
/// stacked rows selected by `pick` (e.g. z_group) for every graph.
inline Matrix embed_all(const ModelParams& params, const std::vector<ViewPair>& views, std::size_t batch_size,
                        ad::Var Embeddings::*pick) {
    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Matrix> parts;
    for (const auto& idx : make_batches(order, batch_size)) {
        ad::Tape tape;
        ParameterBinding bind(tape, false);
        const BatchedViews bv = batch_of(views, idx);
        const Embeddings e = forward_all(bv, params, bind);
        parts.push_back((e.*pick).value());
    }
    std::vector<const Matrix*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    return stack_rows(ptrs);
}

struct TrainHooks {
    std::function<void(const EpochStats&)> on_epoch;
    std::function<void(std::size_t epoch, const ModelParams&)> on_checkpoint;
    std::size_t checkpoint_every = 0;
};

/// Full training loop. Per epoch: cluster group-space embeddings of the whole
/// set, shuffle into batches, minimize Σ_level w_level·L_level with weights
/// from the previous epoch's error deviations, then update error statistics.
inline std::pair<ModelParams, TrainStats> train(const std::vector<ViewPair>& views, const ModelConfig& cfg,
                                               const TrainConfig& tcfg, const TrainHooks& hooks = {}) {
    cfg.validate();
    tcfg.validate();
    const std::size_t n = views.size();
    if (n < std::max(cfg.clusters, tcfg.batch_size)) {
        throw ArgumentError("training set of " + std::to_string(n) + " graphs is smaller than max(K=" +
                            std::to_string(cfg.clusters) + ", batch=" + std::to_string(tcfg.batch_size) + ")");
    }
    ModelParams params = init_params(cfg, views.front().features().cols(), views.front().structure().cols());
    params.levels = tcfg.levels;
    const auto& lv = tcfg.levels;
    const double tau = cfg.temperature;
    const bool incl = cfg.include_positive_in_denominator;
    const AdamHyper hyper{tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.epsilon};
    AdamState adam;
    std::mt19937_64 rng(tcfg.seed);
    TrainStats stats;
    std::array<double, 3> sigma{1.0, 1.0, 1.0};
    PrototypeState protos;

    for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochStats es;
        es.epoch = epoch;
        es.weights = (tcfg.variant == Variant::simp || epoch == 1) ? std::array<double, 3>{1.0, 1.0, 1.0}
                                                                    : adaptive_weights(sigma, cfg.alpha);
        for (std::size_t l = 0; l < 3; ++l)
            if (!lv[l]) es.weights[l] = 0.0;

        if (lv[2]) {
            const Matrix z = embed_all(params, views, tcfg.batch_size, &Embeddings::z_group);
            protos = kmeans(z, cfg.clusters, tcfg.seed + 1000003ULL * epoch);
            protos.temps = concentration_temperatures(z, protos, tau);
            protos.epoch = epoch;
        }

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        LevelErrors errs;
        for (std::size_t l = 0; l < 3; ++l) errs.at(static_cast<Level>(l)).assign(n, 0.0);
        double loss_sum = 0.0;
        const auto batches = make_batches(order, tcfg.batch_size);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& idx = batches[bi];
            ad::Tape tape;
            ParameterBinding bind(tape, true);
            const BatchedViews bv = batch_of(views, idx);
            const Embeddings e = forward_all(bv, params, bind);

            std::vector<std::pair<Level, LossResult>> parts;
            if (lv[0]) parts.emplace_back(Level::node, node_loss(e.z_node_f, e.z_node_s, bv.batch.segment_ids, tau, incl));
            if (lv[1]) parts.emplace_back(Level::graph, graph_loss(e.z_graph_f, e.z_graph_s, tau, incl));
            if (lv[2]) {
                std::vector<std::size_t> assign;
                for (auto i : idx) assign.push_back(protos.assignments[i]);
                parts.emplace_back(Level::group, group_loss(e.z_group, protos.centers, protos.temps, assign, incl));
            }
            ad::Var total{};
            for (std::size_t p = 0; p < parts.size(); ++p) {
                const auto& [level, res] = parts[p];
                const ad::Var term = ad::scale(res.loss, es.weights[static_cast<std::size_t>(level)]);
                total = p == 0 ? term : ad::add(total, term);
                for (std::size_t j = 0; j < idx.size(); ++j) errs.at(level)[idx[j]] = res.errors[j];
                es.fallbacks += res.fallbacks;
            }
            const double value = total.value()(0, 0);
            if (!std::isfinite(value)) {
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
            }
            loss_sum += value;
            tape.backward(total);
            auto named = params.trainable();
            std::vector<Matrix> grads;
            grads.reserve(named.size());
            for (const auto& [name, m] : named) grads.push_back(bind.grad(*m));
            adam_step(named, grads, adam, hyper);
        }

        for (std::size_t l = 0; l < 3; ++l) {
            if (!lv[l]) continue;
            const auto [mu, sd] = mean_and_population_sd(errs.at(static_cast<Level>(l)));
            es.mean_error[l] = mu;
            es.sigma[l] = sd;
        }
        sigma = es.sigma;
        es.loss = loss_sum / static_cast<double>(batches.size());
        es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        stats.epochs.push_back(es);
        stats.last_errors = std::move(errs);
        if (hooks.on_epoch) hooks.on_epoch(es);
        if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && epoch % hooks.checkpoint_every == 0 && epoch < tcfg.epochs) {
            ModelParams snap = params;
            snap.prototypes = protos;
            snap.stats = {es.mean_error, es.sigma, true};
            hooks.on_checkpoint(epoch, snap);
        }
    }

    const auto& last = stats.epochs.back();
    params.stats = {last.mean_error, last.sigma, true};
    if (lv[2]) {
        params.prototypes = std::move(protos);
        const Matrix z = embed_all(params, views, tcfg.batch_size, &Embeddings::z_group);
        std::vector<double> neg_sim(n);
        for (std::size_t i = 0; i < n; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < params.prototypes.centers.rows(); ++j)
                best = std::max(best, cosine_similarity(z.row(i), params.prototypes.centers.row(j)));
            neg_sim[i] = -best;
        }
        std::tie(params.stats.similarity_mean, params.stats.similarity_sigma) = mean_and_population_sd(neg_sim);
    } else {
        // Group level disabled: keep a single zero prototype so the model
        // still counts as trained; its scores are never used.
        params.prototypes.centers = Matrix(1, cfg.projection_dim());
        params.prototypes.temps = {tau};
        params.prototypes.epoch = tcfg.epochs;
    }

    // Reference bank for batch-independent graph-level scoring.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::mt19937_64 bank_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(pool.begin(), pool.end(), bank_rng);
    pool.resize(std::min(n, tcfg.batch_size));
    std::sort(pool.begin(), pool.end());
    std::vector<ViewPair> bank_views;
    for (auto i : pool) bank_views.push_back(views[i]);
    params.bank_f = embed_all(params, bank_views, tcfg.batch_size, &Embeddings::z_graph_f);
    params.bank_s = embed_all(params, bank_views, tcfg.batch_size, &Embeddings::z_graph_s);
    return {std::move(params), std::move(stats)};
}

}  // namespace goodd
