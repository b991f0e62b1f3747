#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation in execution order. backward() walks the
// records in strict reverse order once, so accumulation order (and therefore
// every gradient bit) depends only on the recording order.
//
// Op catalog (version 1):
//   matmul, sparse_matmul, add, sub, mul, scale, relu, add_bias,
//   concat_cols, concat_rows, slice_rows, segment_sum, l2_normalize_rows,
//   transpose, exp, log, row_sum, row_mean, row_max, row_logsumexp, sum, mean

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "goodd/error.hpp"
#include "goodd/graph.hpp"
#include "goodd/matrix.hpp"

namespace goodd::ad {

inline constexpr int kCatalogVersion = 1;
inline constexpr double kLogEpsilon = 1e-12;
inline constexpr double kNormFloor = 1e-12;

class Tape;

/// Handle to a recorded tensor.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Matrix value, bool requires_grad = true) {
        nodes_.push_back({"leaf", std::move(value), {}, requires_grad, {}, {}});
        return {this, nodes_.size() - 1};
    }

    Var constant(Matrix value) { return leaf(std::move(value), false); }

    /// Registers an op result. The node needs a gradient when any input does.
    Var record(std::string_view op, Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
        bool needs = false;
        for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
        nodes_.push_back({std::string(op), std::move(value), std::move(inputs), needs,
                          needs ? std::move(backward) : BackwardFn{}, {}});
        return {this, nodes_.size() - 1};
    }

    const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
    const Matrix& value(Var v) const { return value(v.id); }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient of the last backward() loss w.r.t. v; zeros if unreachable.
    const Matrix& grad(Var v) {
        auto& n = nodes_.at(v.id);
        if (!n.grad.same_shape(n.value)) n.grad = Matrix(n.value.rows(), n.value.cols());
        return n.grad;
    }

    void backward(Var loss) {
        const auto& lv = value(loss);
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw ArgumentError("backward needs a scalar loss, got " + lv.shape());
        }
        for (auto& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
        nodes_[loss.id].grad(0, 0) = 1.0;
        for (std::size_t id = loss.id + 1; id-- > 0;) {
            auto& n = nodes_[id];
            if (!n.backward) continue;
            fault_active_ = !faulty_op_.empty() && n.op == faulty_op_;
            n.backward(*this, id);
        }
        fault_active_ = false;
    }

    /// Adds `contrib` into the gradient of `id` (no-op for constants).
    void accumulate(std::size_t id, const Matrix& contrib) {
        auto& n = nodes_[id];
        if (!n.requires_grad) return;
        const double s = fault_active_ ? 1.5 : 1.0;
        auto& g = n.grad.data();
        const auto& c = contrib.data();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * c[k];
    }

    /// Adds `contrib` into rows [begin, begin + contrib.rows()) of the gradient of `id`.
    void accumulate_rows(std::size_t id, std::size_t begin, const Matrix& contrib) {
        auto& n = nodes_[id];
        if (!n.requires_grad) return;
        const double s = fault_active_ ? 1.5 : 1.0;
        double* g = n.grad.data().data() + begin * n.grad.cols();
        const auto& c = contrib.data();
        for (std::size_t k = 0; k < c.size(); ++k) g[k] += s * c[k];
    }

    Matrix& grad_buffer(std::size_t id) { return nodes_[id].grad; }

    /// Test hook: every backward of ops named `op` scales its contributions
    /// by 1.5, making gradient checks on that op fail.
    void inject_backward_fault(std::string op) { faulty_op_ = std::move(op); }

private:
    struct Node {
        std::string op;
        Matrix value;
        std::vector<std::size_t> inputs;
        bool requires_grad = false;
        BackwardFn backward;
        Matrix grad;
    };

    std::vector<Node> nodes_;
    std::string faulty_op_;
    bool fault_active_ = false;
};

inline const Matrix& Var::value() const { return tape->value(id); }

namespace detail {

inline void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw ArgumentError("operands recorded on different tapes");
}

inline void require_same_shape(std::string_view op, const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + " shape mismatch " + a.shape() + " vs " + b.shape());
    }
}

template <typename F>
Matrix map(const Matrix& a, F f) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out.data()[k] = f(a.data()[k]);
    return out;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
    detail::require_same_tape(a, b);
    Tape& t = *a.tape;
    return t.record("matmul", goodd::matmul(a.value(), b.value()), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        if (t.requires_grad(a)) t.accumulate(a, goodd::matmul(g, goodd::transpose(t.value(b))));
        if (t.requires_grad(b)) t.accumulate(b, goodd::matmul(goodd::transpose(t.value(a)), g));
    });
}

/// A X for a 0/1 adjacency in CSR form (neighbor sum).
inline Var sparse_matmul(std::shared_ptr<const Adjacency> adj, Var x) {
    const Matrix& xv = x.value();
    if (adj->node_count != xv.rows()) {
        throw ShapeError("sparse_matmul shape mismatch (" + std::to_string(adj->node_count) + "x" +
                         std::to_string(adj->node_count) + ") x " + xv.shape());
    }
    Matrix out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < adj->node_count; ++i) {
        auto orow = out.row(i);
        for (auto j : adj->neighbors(i)) {
            auto xr = xv.row(j);
            for (std::size_t c = 0; c < xv.cols(); ++c) orow[c] += xr[c];
        }
    }
    return x.tape->record("sparse_matmul", std::move(out), {x.id}, [adj, x = x.id](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix dx(g.rows(), g.cols());
        for (std::size_t i = 0; i < adj->node_count; ++i) {
            auto gr = g.row(i);
            for (auto j : adj->neighbors(i)) {
                auto dr = dx.row(j);
                for (std::size_t c = 0; c < g.cols(); ++c) dr[c] += gr[c];
            }
        }
        t.accumulate(x, dx);
    });
}

namespace detail {

template <typename F, typename DA, typename DB>
Var binary_elementwise(std::string_view op, Var a, Var b, F f, DA da, DB db) {
    require_same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    require_same_shape(op, av, bv);
    Matrix out(av.rows(), av.cols());
    for (std::size_t k = 0; k < av.size(); ++k) out.data()[k] = f(av.data()[k], bv.data()[k]);
    return a.tape->record(op, std::move(out), {a.id, b.id}, [a = a.id, b = b.id, da, db](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& av = t.value(a);
        const Matrix& bv = t.value(b);
        if (t.requires_grad(a)) {
            Matrix d(g.rows(), g.cols());
            for (std::size_t k = 0; k < g.size(); ++k) d.data()[k] = da(g.data()[k], av.data()[k], bv.data()[k]);
            t.accumulate(a, d);
        }
        if (t.requires_grad(b)) {
            Matrix d(g.rows(), g.cols());
            for (std::size_t k = 0; k < g.size(); ++k) d.data()[k] = db(g.data()[k], av.data()[k], bv.data()[k]);
            t.accumulate(b, d);
        }
    });
}

}  // namespace detail

inline Var add(Var a, Var b) {
    return detail::binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
        [](double g, double, double) { return g; });
}

inline Var sub(Var a, Var b) {
    return detail::binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
        [](double g, double, double) { return -g; });
}

inline Var mul(Var a, Var b) {
    return detail::binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

inline Var scale(Var a, double s) {
    return a.tape->record("scale", detail::map(a.value(), [s](double x) { return s * x; }), {a.id},
                          [a = a.id, s](Tape& t, std::size_t self) {
                              t.accumulate(a, detail::map(t.grad_buffer(self), [s](double g) { return s * g; }));
                          });
}

inline Var relu(Var a) {
    return a.tape->record("relu", detail::map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a.id},
                          [a = a.id](Tape& t, std::size_t self) {
                              const Matrix& g = t.grad_buffer(self);
                              const Matrix& x = t.value(a);
                              Matrix d(g.rows(), g.cols());
                              for (std::size_t k = 0; k < g.size(); ++k) d.data()[k] = x.data()[k] > 0.0 ? g.data()[k] : 0.0;
                              t.accumulate(a, d);
                          });
}

/// a + 1·bias with bias of shape (1 x cols).
inline Var add_bias(Var a, Var bias) {
    detail::require_same_tape(a, bias);
    const Matrix& av = a.value();
    const Matrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
        throw ShapeError("add_bias shape mismatch " + av.shape() + " vs " + bv.shape());
    }
    Matrix out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
    return a.tape->record("add_bias", std::move(out), {a.id, bias.id}, [a = a.id, b = bias.id](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        t.accumulate(a, g);
        if (t.requires_grad(b)) {
            Matrix db(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
            t.accumulate(b, db);
        }
    });
}

/// [a || b] along columns.
inline Var concat_cols(Var a, Var b) {
    detail::require_same_tape(a, b);
    const std::size_t ac = a.cols();
    return a.tape->record("concat_cols", goodd::concat_columns(a.value(), b.value()), {a.id, b.id},
                          [a = a.id, b = b.id, ac](Tape& t, std::size_t self) {
                              const Matrix& g = t.grad_buffer(self);
                              Matrix da(g.rows(), ac), db(g.rows(), g.cols() - ac);
                              for (std::size_t i = 0; i < g.rows(); ++i) {
                                  for (std::size_t j = 0; j < ac; ++j) da(i, j) = g(i, j);
                                  for (std::size_t j = ac; j < g.cols(); ++j) db(i, j - ac) = g(i, j);
                              }
                              t.accumulate(a, da);
                              t.accumulate(b, db);
                          });
}

/// Vertical stack of blocks with equal width.
inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ArgumentError("concat_rows needs at least one block");
    std::vector<const Matrix*> blocks;
    std::vector<std::size_t> ids;
    for (const auto& p : parts) {
        detail::require_same_tape(parts.front(), p);
        blocks.push_back(&p.value());
        ids.push_back(p.id);
    }
    Matrix out = stack_rows(blocks);
    return parts.front().tape->record("concat_rows", std::move(out), ids, [ids](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        std::size_t r = 0;
        for (auto id : ids) {
            const std::size_t n = t.value(id).rows();
            if (t.requires_grad(id)) t.accumulate(id, goodd::slice_rows(g, r, r + n));
            r += n;
        }
    });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    return a.tape->record("slice_rows", goodd::slice_rows(a.value(), begin, end), {a.id},
                          [a = a.id, begin](Tape& t, std::size_t self) {
                              t.accumulate_rows(a, begin, t.grad_buffer(self));
                          });
}

/// Row g of the result sums the rows i with segment_ids[i] == g.
inline Var segment_sum(Var a, std::shared_ptr<const std::vector<std::size_t>> segment_ids, std::size_t segments) {
    const Matrix& av = a.value();
    if (segment_ids->size() != av.rows()) {
        throw ShapeError("segment_sum has " + std::to_string(segment_ids->size()) + " segment ids for " + av.shape());
    }
    Matrix out(segments, av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        const auto s = (*segment_ids)[i];
        if (s >= segments) throw ShapeError("segment id " + std::to_string(s) + " out of range");
        for (std::size_t j = 0; j < av.cols(); ++j) out(s, j) += av(i, j);
    }
    return a.tape->record("segment_sum", std::move(out), {a.id}, [a = a.id, segment_ids](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix d(segment_ids->size(), g.cols());
        for (std::size_t i = 0; i < d.rows(); ++i) {
            auto gr = g.row((*segment_ids)[i]);
            std::copy(gr.begin(), gr.end(), d.row(i).begin());
        }
        t.accumulate(a, d);
    });
}

/// Each row divided by max(‖row‖, 1e-12).
inline Var l2_normalize_rows(Var a) {
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    std::vector<double> norms(av.rows());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        norms[i] = std::max(l2_norm(av.row(i)), kNormFloor);
        for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j) / norms[i];
    }
    return a.tape->record("l2_normalize_rows", std::move(out), {a.id}, [a = a.id, norms](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& y = t.value(self);
        Matrix d(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            const bool floored = norms[i] <= kNormFloor;
            double dot = 0.0;
            if (!floored)
                for (std::size_t j = 0; j < g.cols(); ++j) dot += y(i, j) * g(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) = (g(i, j) - y(i, j) * dot) / norms[i];
        }
        t.accumulate(a, d);
    });
}

inline Var transpose(Var a) {
    return a.tape->record("transpose", goodd::transpose(a.value()), {a.id}, [a = a.id](Tape& t, std::size_t self) {
        t.accumulate(a, goodd::transpose(t.grad_buffer(self)));
    });
}

inline Var exp(Var a) {
    return a.tape->record("exp", detail::map(a.value(), [](double x) { return std::exp(x); }), {a.id},
                          [a = a.id](Tape& t, std::size_t self) {
                              const Matrix& g = t.grad_buffer(self);
                              const Matrix& y = t.value(self);
                              Matrix d(g.rows(), g.cols());
                              for (std::size_t k = 0; k < g.size(); ++k) d.data()[k] = g.data()[k] * y.data()[k];
                              t.accumulate(a, d);
                          });
}

/// log(max(x, 1e-12)); zero gradient below the floor.
inline Var log(Var a) {
    return a.tape->record("log", detail::map(a.value(), [](double x) { return std::log(std::max(x, kLogEpsilon)); }),
                          {a.id}, [a = a.id](Tape& t, std::size_t self) {
                              const Matrix& g = t.grad_buffer(self);
                              const Matrix& x = t.value(a);
                              Matrix d(g.rows(), g.cols());
                              for (std::size_t k = 0; k < g.size(); ++k)
                                  d.data()[k] = x.data()[k] > kLogEpsilon ? g.data()[k] / x.data()[k] : 0.0;
                              t.accumulate(a, d);
                          });
}

/// (rows x 1) of row sums.
inline Var row_sum(Var a) {
    const Matrix& av = a.value();
    Matrix out(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (double v : av.row(i)) out(i, 0) += v;
    return a.tape->record("row_sum", std::move(out), {a.id}, [a = a.id](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& av = t.value(a);
        Matrix d(av.rows(), av.cols());
        for (std::size_t i = 0; i < av.rows(); ++i)
            for (std::size_t j = 0; j < av.cols(); ++j) d(i, j) = g(i, 0);
        t.accumulate(a, d);
    });
}

inline Var row_mean(Var a) {
    const Matrix& av = a.value();
    if (av.cols() == 0) throw ShapeError("row_mean of zero-width matrix " + av.shape());
    const double inv = 1.0 / static_cast<double>(av.cols());
    Matrix out(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (double v : av.row(i)) out(i, 0) += v;
        out(i, 0) *= inv;
    }
    return a.tape->record("row_mean", std::move(out), {a.id}, [a = a.id, inv](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& av = t.value(a);
        Matrix d(av.rows(), av.cols());
        for (std::size_t i = 0; i < av.rows(); ++i)
            for (std::size_t j = 0; j < av.cols(); ++j) d(i, j) = g(i, 0) * inv;
        t.accumulate(a, d);
    });
}

/// Row maxima; the gradient goes to the first maximal entry.
inline Var row_max(Var a) {
    const Matrix& av = a.value();
    if (av.cols() == 0) throw ShapeError("row_max of zero-width matrix " + av.shape());
    Matrix out(av.rows(), 1);
    std::vector<std::size_t> arg(av.rows(), 0);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 1; j < av.cols(); ++j)
            if (av(i, j) > av(i, arg[i])) arg[i] = j;
        out(i, 0) = av(i, arg[i]);
    }
    return a.tape->record("row_max", std::move(out), {a.id}, [a = a.id, arg](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& av = t.value(a);
        Matrix d(av.rows(), av.cols());
        for (std::size_t i = 0; i < av.rows(); ++i) d(i, arg[i]) = g(i, 0);
        t.accumulate(a, d);
    });
}

/// log Σ_j mask_ij·exp(a_ij) per row, max-shifted over the masked entries.
/// A row whose mask is all zero yields 0 (empty sum convention).
inline Var row_logsumexp(Var a, const Matrix& mask) {
    const Matrix& av = a.value();
    detail::require_same_shape("row_logsumexp", av, mask);
    Matrix out(av.rows(), 1);
    Matrix soft(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < av.cols(); ++j)
            if (mask(i, j) != 0.0) m = std::max(m, av(i, j));
        if (!std::isfinite(m)) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            if (mask(i, j) == 0.0) continue;
            soft(i, j) = mask(i, j) * std::exp(av(i, j) - m);
            s += soft(i, j);
        }
        for (std::size_t j = 0; j < av.cols(); ++j) soft(i, j) /= s;
        out(i, 0) = m + std::log(s);
    }
    return a.tape->record("row_logsumexp", std::move(out), {a.id}, [a = a.id, soft = std::move(soft)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix d(soft.rows(), soft.cols());
        for (std::size_t i = 0; i < soft.rows(); ++i)
            for (std::size_t j = 0; j < soft.cols(); ++j) d(i, j) = g(i, 0) * soft(i, j);
        t.accumulate(a, d);
    });
}

/// Scalar (1 x 1) total.
inline Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.tape->record("sum", Matrix(1, 1, s), {a.id}, [a = a.id](Tape& t, std::size_t self) {
        const Matrix& av = t.value(a);
        t.accumulate(a, Matrix(av.rows(), av.cols(), t.grad_buffer(self)(0, 0)));
    });
}

inline Var mean(Var a) {
    const Matrix& av = a.value();
    if (av.size() == 0) throw ShapeError("mean of empty matrix");
    const double inv = 1.0 / static_cast<double>(av.size());
    double s = 0.0;
    for (double v : av.data()) s += v;
    return a.tape->record("mean", Matrix(1, 1, s * inv), {a.id}, [a = a.id, inv](Tape& t, std::size_t self) {
        const Matrix& av = t.value(a);
        t.accumulate(a, Matrix(av.rows(), av.cols(), t.grad_buffer(self)(0, 0) * inv));
    });
}

/// Names of every catalog op, in catalog order.
inline const std::vector<std::string>& op_catalog() {
    static const std::vector<std::string> ops{
        "matmul",    "sparse_matmul", "add",         "sub",  "mul",      "scale",
        "relu",      "add_bias",      "concat_cols", "concat_rows", "slice_rows", "segment_sum",
        "l2_normalize_rows", "transpose", "exp", "log", "row_sum", "row_mean",
        "row_max",   "row_logsumexp", "sum",         "mean"};
    return ops;
}

}  // namespace goodd::ad
