#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance binary.

#include <cmath>
#include <vector>

#include "goodd/graph.hpp"
#include "goodd/matrix.hpp"

namespace goodd::oracle {

/// Diagonals of T^1..T^d_rw with dense T = A D^-1 (isolated nodes: zero
/// column) and explicit matrix powers.
inline Matrix dense_random_walk(const Graph& g, std::size_t d_rw) {
    const std::size_t n = g.node_count();
    Matrix t(n, n);
    for (const auto& e : g.edges()) {
        t(e.u, e.v) = 1.0 / static_cast<double>(g.degree(e.v));
        t(e.v, e.u) = 1.0 / static_cast<double>(g.degree(e.u));
    }
    Matrix out(n, d_rw);
    Matrix power = Matrix::identity(n);
    for (std::size_t k = 0; k < d_rw; ++k) {
        Matrix next(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t m = 0; m < n; ++m)
                for (std::size_t j = 0; j < n; ++j) next(i, j) += power(i, m) * t(m, j);
        power = next;
        for (std::size_t i = 0; i < n; ++i) out(i, k) = power(i, i);
    }
    return out;
}

/// Entry k (1-based) is 1 when deg = k < d_dg, or k = d_dg and deg >= d_dg.
inline std::vector<double> degree_row(std::size_t deg, std::size_t d_dg) {
    std::vector<double> row(d_dg, 0.0);
    for (std::size_t k = 1; k <= d_dg; ++k) {
        const bool hit = (k == deg && deg < d_dg) || (k == d_dg && deg >= d_dg);
        if (hit && deg > 0) row[k - 1] = 1.0;
    }
    return row;
}

/// -log( exp(pos/τ) / Σ_neg exp(neg/τ) ) straight from the definition.
inline double info_nce_term(double pos, const std::vector<double>& negs, double tau) {
    double denom = 0.0;
    for (double n : negs) denom += std::exp(n / tau);
    return -std::log(std::exp(pos / tau) / denom);
}

}  // namespace goodd::oracle
