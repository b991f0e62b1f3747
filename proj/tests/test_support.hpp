#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "goodd/graph.hpp"
#include "goodd/matrix.hpp"

namespace goodd::support {

inline Graph random_graph(std::mt19937_64& rng, std::size_t n, double p, std::size_t feature_dim = 1) {
    std::bernoulli_distribution edge(p);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> raw;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j)
            if (edge(rng)) raw.emplace_back(i, j);
    Matrix x(n, feature_dim);
    std::normal_distribution<double> nd;
    for (auto& v : x.data()) v = nd(rng);
    return Graph(n, std::move(raw), std::move(x));
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    std::normal_distribution<double> nd(0.0, scale);
    for (auto& v : m.data()) v = nd(rng);
    return m;
}

inline std::vector<std::size_t> random_permutation(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("goodd_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace goodd::support
