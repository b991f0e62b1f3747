#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "goodd/autodiff.hpp"
#include "goodd/encoder.hpp"
#include "goodd/error.hpp"
#include "goodd/matrix.hpp"

namespace goodd {

/// A batch loss on the tape together with its per-graph error terms; the
/// mean of `errors` equals the loss value.
struct LossResult {
    ad::Var loss;
    std::vector<double> errors;
    std::size_t fallbacks = 0;  // graphs scored with the empty-denominator rule
};

struct LevelErrors {
    std::vector<double> node, graph, group;

    std::vector<double>& at(Level l) { return l == Level::node ? node : l == Level::graph ? graph : group; }
    const std::vector<double>& at(Level l) const {
        return l == Level::node ? node : l == Level::graph ? graph : group;
    }
};

namespace detail {

inline Matrix negatives_mask(std::size_t n, bool include_positive) {
    Matrix mask(n, n, 1.0);
    if (!include_positive)
        for (std::size_t i = 0; i < n; ++i) mask(i, i) = 0.0;
    return mask;
}

/// Rows i of the result hold ½[ℓ(a_i, b_i) + ℓ(b_i, a_i)] where
/// ℓ(a_i, b_i) = -sim(a_i,b_i)/τ + log Σ_{k≠i} exp(sim(a_i,b_k)/τ).
inline ad::Var symmetric_info_nce(ad::Var a, ad::Var b, double tau, bool include_positive) {
    ad::Tape& t = *a.tape;
    const std::size_t n = a.rows();
    const ad::Var sim = ad::scale(ad::matmul(ad::l2_normalize_rows(a), ad::transpose(ad::l2_normalize_rows(b))), 1.0 / tau);
    const ad::Var pos = ad::row_sum(ad::mul(sim, t.constant(Matrix::identity(n))));
    const Matrix mask = negatives_mask(n, include_positive);
    const ad::Var ab = ad::sub(ad::row_logsumexp(sim, mask), pos);
    const ad::Var ba = ad::sub(ad::row_logsumexp(ad::transpose(sim), mask), pos);
    return ad::scale(ad::add(ab, ba), 0.5);
}

inline std::vector<std::size_t> offsets_from_segments(const std::vector<std::size_t>& segment_ids) {
    std::vector<std::size_t> offsets{0};
    for (std::size_t i = 0; i < segment_ids.size(); ++i) {
        const std::size_t s = segment_ids[i];
        if (s + 1 < offsets.size()) throw ArgumentError("segment ids must be nondecreasing");
        while (offsets.size() <= s) offsets.push_back(i);
    }
    offsets.push_back(segment_ids.size());
    return offsets;
}

}  // namespace detail

/// Node-level cross-view contrast. Negatives for node i of graph G are the
/// other nodes of G in the opposite view. Per-graph error is the average of
/// both directions over G's nodes; the loss averages graphs. A one-node graph
/// has an empty denominator and scores -sim/τ.
inline LossResult node_loss(ad::Var z_f, ad::Var z_s, const std::vector<std::size_t>& segment_ids, double tau,
                            bool include_positive = false) {
    if (!z_f.value().same_shape(z_s.value())) {
        throw ShapeError("node_loss view shapes differ: " + z_f.value().shape() + " vs " + z_s.value().shape());
    }
    if (segment_ids.size() != z_f.rows()) throw ShapeError("node_loss segment ids do not match embedding rows");
    const auto off = detail::offsets_from_segments(segment_ids);
    LossResult r;
    std::vector<ad::Var> per_graph;
    for (std::size_t g = 0; g + 1 < off.size(); ++g) {
        const std::size_t n = off[g + 1] - off[g];
        if (n == 0) throw ArgumentError("node_loss: graph " + std::to_string(g) + " has no nodes");
        if (n == 1 && !include_positive) ++r.fallbacks;
        const ad::Var terms = detail::symmetric_info_nce(ad::slice_rows(z_f, off[g], off[g + 1]),
                                                         ad::slice_rows(z_s, off[g], off[g + 1]), tau, include_positive);
        per_graph.push_back(ad::mean(terms));
        r.errors.push_back(per_graph.back().value()(0, 0));
    }
    r.loss = ad::mean(ad::concat_rows(per_graph));
    return r;
}

/// Graph-level cross-view contrast; negatives are the other graphs of the batch.
inline LossResult graph_loss(ad::Var zg_f, ad::Var zg_s, double tau, bool include_positive = false) {
    if (!zg_f.value().same_shape(zg_s.value())) {
        throw ShapeError("graph_loss view shapes differ: " + zg_f.value().shape() + " vs " + zg_s.value().shape());
    }
    LossResult r;
    if (zg_f.rows() == 1 && !include_positive) r.fallbacks = 1;
    const ad::Var terms = detail::symmetric_info_nce(zg_f, zg_s, tau, include_positive);
    r.errors.assign(terms.value().data().begin(), terms.value().data().end());
    r.loss = ad::mean(terms);
    return r;
}

/// Prototype contrast: positive is the assigned center c_j at temperature
/// τ_j, negatives the remaining centers at their own temperatures.
inline LossResult group_loss(ad::Var z_group, const Matrix& centers, const std::vector<double>& temps,
                             const std::vector<std::size_t>& assignments, bool include_positive = false) {
    const std::size_t k = centers.rows();
    if (k == 0 || temps.size() != k) throw StateError("group_loss needs populated prototypes");
    if (centers.cols() != z_group.cols()) {
        throw ShapeError("group_loss prototype width " + centers.shape() + " vs embeddings " + z_group.value().shape());
    }
    if (assignments.size() != z_group.rows()) throw ShapeError("group_loss needs one assignment per graph");
    ad::Tape& t = *z_group.tape;
    const std::size_t b = z_group.rows();

    Matrix unit_centers = centers;
    for (std::size_t j = 0; j < k; ++j) {
        const double nrm = std::max(l2_norm(centers.row(j)), ad::kNormFloor);
        for (auto& v : unit_centers.row(j)) v /= nrm;
    }
    Matrix inv_temp(b, k), onehot(b, k), mask(b, k, 1.0);
    for (std::size_t i = 0; i < b; ++i) {
        if (assignments[i] >= k) throw ArgumentError("assignment out of range");
        for (std::size_t j = 0; j < k; ++j) inv_temp(i, j) = 1.0 / temps[j];
        onehot(i, assignments[i]) = 1.0;
        if (!include_positive) mask(i, assignments[i]) = 0.0;
    }
    const ad::Var sim = ad::mul(ad::matmul(ad::l2_normalize_rows(z_group), t.constant(goodd::transpose(unit_centers))),
                                t.constant(std::move(inv_temp)));
    const ad::Var pos = ad::row_sum(ad::mul(sim, t.constant(std::move(onehot))));
    const ad::Var terms = ad::sub(ad::row_logsumexp(sim, mask), pos);
    LossResult r;
    if (k == 1 && !include_positive) r.fallbacks = b;
    r.errors.assign(terms.value().data().begin(), terms.value().data().end());
    r.loss = ad::mean(terms);
    return r;
}

/// Sum of squared distances of every point to its assigned center.
inline double kmeans_objective(const Matrix& z, const Matrix& centers, const std::vector<std::size_t>& assignments) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) s += squared_distance(z.row(i), centers.row(assignments[i]));
    return s;
}

/// k-means++ seeding then Lloyd iterations to an assignment fixpoint (at
/// most `max_iter`). Ties go to the lowest cluster index. An empty cluster
/// takes over the point farthest from its current center.
inline PrototypeState kmeans(const Matrix& z, std::size_t k, std::uint64_t seed,
                             std::vector<double>* objective_trace = nullptr, std::size_t max_iter = 100) {
    const std::size_t n = z.rows();
    if (k == 0 || n < k) {
        throw ArgumentError("kmeans needs at least K points (N=" + std::to_string(n) + ", K=" + std::to_string(k) + ")");
    }
    std::mt19937_64 rng(seed);
    Matrix centers(k, z.cols());
    std::vector<char> chosen(n, 0);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    auto take = [&](std::size_t c, std::size_t i) {
        std::copy(z.row(i).begin(), z.row(i).end(), centers.row(c).begin());
        chosen[i] = 1;
        for (std::size_t p = 0; p < n; ++p) d2[p] = std::min(d2[p], squared_distance(z.row(p), z.row(i)));
    };
    take(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    for (std::size_t c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = n;
        if (total > 0.0) {
            const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            double acc = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                if (d2[p] <= 0.0) continue;
                acc += d2[p];
                pick = p;
                if (acc > r) break;
            }
        }
        if (pick == n) pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
        take(c, pick);
    }

    PrototypeState st;
    st.assignments.assign(n, k);  // sentinel: nothing assigned yet
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = squared_distance(z.row(i), centers.row(0));
            for (std::size_t c = 1; c < k; ++c) {
                const double d = squared_distance(z.row(i), centers.row(c));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (st.assignments[i] != best) {
                st.assignments[i] = best;
                changed = true;
            }
        }
        if (!changed) break;

        std::vector<std::size_t> counts(k, 0);
        for (auto a : st.assignments) ++counts[a];
        std::vector<char> reseeded(n, 0);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (reseeded[i] || counts[st.assignments[i]] < 2) continue;
                const double d = squared_distance(z.row(i), centers.row(st.assignments[i]));
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far == n) break;
            --counts[st.assignments[far]];
            st.assignments[far] = c;
            counts[c] = 1;
            reseeded[far] = 1;
        }

        centers.fill(0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto crow = centers.row(st.assignments[i]);
            for (std::size_t j = 0; j < z.cols(); ++j) crow[j] += z(i, j);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (auto& v : centers.row(c)) v /= static_cast<double>(counts[c]);
        }
        if (objective_trace) objective_trace->push_back(kmeans_objective(z, centers, st.assignments));
    }
    st.centers = std::move(centers);
    return st;
}

/// Per-cluster temperatures from the concentration estimate
/// φ_j = Σ‖z_i − c_j‖ / (n_j·log(n_j + 10)), normalized so the mean φ maps
/// to τ_base and clamped to [τ_base/10, 10·τ_base]. Clusters with fewer than
/// two members borrow the mean φ of the others.
inline std::vector<double> concentration_temperatures(const Matrix& z, const PrototypeState& state, double tau_base) {
    const std::size_t k = state.centers.rows();
    if (k == 0 || state.assignments.size() != z.rows()) throw StateError("prototype state is not populated");
    std::vector<double> dist(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const auto c = state.assignments[i];
        dist[c] += std::sqrt(squared_distance(z.row(i), state.centers.row(c)));
        ++count[c];
    }
    std::vector<double> phi(k, 0.0);
    double sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] < 2) continue;
        const double nj = static_cast<double>(count[c]);
        phi[c] = dist[c] / (nj * std::log(nj + 10.0));
        sum += phi[c];
        ++valid;
    }
    const double fill = valid > 0 ? sum / static_cast<double>(valid) : 0.0;
    for (std::size_t c = 0; c < k; ++c)
        if (count[c] < 2) phi[c] = fill;
    const double mean_phi = std::accumulate(phi.begin(), phi.end(), 0.0) / static_cast<double>(k);
    std::vector<double> temps(k, tau_base);
    if (mean_phi <= 0.0) return temps;
    for (std::size_t c = 0; c < k; ++c)
        temps[c] = std::clamp(tau_base * phi[c] / mean_phi, tau_base / 10.0, tau_base * 10.0);
    return temps;
}

}  // namespace goodd
