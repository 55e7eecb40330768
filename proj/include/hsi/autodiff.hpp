#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation as it is evaluated. Each node keeps its value
// and a closure that pushes the node's gradient to its inputs; backward() walks
// the tape once, newest to oldest. Operations only read earlier nodes, so the
// tape is acyclic by construction. The tape is instantiated in float for
// training and in double for gradient checks.

#include "hsi/common.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hsi::ad {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using SparseRows = Eigen::SparseMatrix<T, Eigen::RowMajor>;

// Handle to a value on a tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Probabilities are clamped into [kProbEps, 1 - kProbEps] before taking logs.
inline constexpr double kProbEps = 1e-7;

template <class T>
class Tape {
public:
    using Mat = Matrix<T>;

    Var constant(Mat value) { return push(std::move(value), false); }
    Var parameter(Mat value) { return push(std::move(value), true); }

    const Mat& value(Var v) const { return nodes_.at(v.id).value; }
    // Gradient after backward(); zero-sized if the node did not receive one.
    const Mat& grad(Var v) const { return nodes_.at(v.id).grad; }
    T scalar(Var v) const { return value(v)(0, 0); }
    std::size_t size() const { return nodes_.size(); }

    void backward(Var loss)
    {
        const Mat& l = value(loss);
        if (l.rows() != 1 || l.cols() != 1) {
            throw Error("backward needs a scalar loss, got " + shape(l));
        }
        for (Node& n : nodes_) {
            n.grad.resize(0, 0);
        }
        nodes_[loss.id].grad = Mat::Ones(1, 1);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.backward && n.grad.size() > 0) {
                n.backward(n.grad);
            }
        }
    }

    // ---- linear algebra ---------------------------------------------------

    // x * w + b, with b a 1 x out row broadcast over rows.
    Var linear(Var x, Var w, Var b)
    {
        const Mat& X = value(x);
        const Mat& W = value(w);
        const Mat& B = value(b);
        if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols()) {
            throw Error("linear: shape mismatch x " + shape(X) + ", w " + shape(W) + ", b " + shape(B));
        }
        Mat y = X * W;
        y.rowwise() += B.row(0);
        return record(std::move(y), {x, w, b}, [this, x, w, b](const Mat& g) {
            if (wants(x)) accumulate(x, g * value(w).transpose());
            if (wants(w)) accumulate(w, value(x).transpose() * g);
            if (wants(b)) accumulate(b, g.colwise().sum());
        });
    }

    Var matmul(Var a, Var b)
    {
        const Mat& A = value(a);
        const Mat& B = value(b);
        if (A.cols() != B.rows()) {
            throw Error("matmul: shape mismatch " + shape(A) + " * " + shape(B));
        }
        return record(A * B, {a, b}, [this, a, b](const Mat& g) {
            if (wants(a)) accumulate(a, g * value(b).transpose());
            if (wants(b)) accumulate(b, value(a).transpose() * g);
        });
    }

    Var add(Var a, Var b)
    {
        same_shape("add", a, b);
        return record(value(a) + value(b), {a, b}, [this, a, b](const Mat& g) {
            if (wants(a)) accumulate(a, g);
            if (wants(b)) accumulate(b, g);
        });
    }

    Var mul(Var a, Var b)
    {
        same_shape("mul", a, b);
        return record(value(a).cwiseProduct(value(b)), {a, b}, [this, a, b](const Mat& g) {
            if (wants(a)) accumulate(a, g.cwiseProduct(value(b)));
            if (wants(b)) accumulate(b, g.cwiseProduct(value(a)));
        });
    }

    Var scale(Var a, T s)
    {
        return record(value(a) * s, {a}, [this, a, s](const Mat& g) { accumulate(a, g * s); });
    }

    // ---- indexing and layout ----------------------------------------------

    // Row gather: output row r is the concatenation of x rows
    // indices[r * width .. r * width + width).
    Var gather(Var x, std::span<const int> indices, int width)
    {
        const Mat& X = value(x);
        if (width <= 0 || indices.size() % static_cast<std::size_t>(width) != 0) {
            throw Error("gather: index count " + std::to_string(indices.size()) + " not a multiple of width " +
                        std::to_string(width));
        }
        const Eigen::Index rows = static_cast<Eigen::Index>(indices.size()) / width;
        const Eigen::Index c = X.cols();
        Mat y(rows, c * width);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (int s = 0; s < width; ++s) {
                const int src = indices[static_cast<std::size_t>(r * width + s)];
                if (src < 0 || src >= X.rows()) {
                    throw Error("gather: index " + std::to_string(src) + " outside " + shape(X));
                }
                y.block(r, s * c, 1, c) = X.row(src);
            }
        }
        std::vector<int> idx(indices.begin(), indices.end());
        return record(std::move(y), {x}, [this, x, idx = std::move(idx), width, c](const Mat& g) {
            Mat dx = Mat::Zero(value(x).rows(), c);
            const Eigen::Index rows = g.rows();
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (int s = 0; s < width; ++s) {
                    dx.row(idx[static_cast<std::size_t>(r * width + s)]) += g.block(r, s * c, 1, c);
                }
            }
            accumulate(x, dx);
        });
    }

    // Column concatenation [a | b].
    Var concat(Var a, Var b)
    {
        const Mat& A = value(a);
        const Mat& B = value(b);
        if (A.rows() != B.rows()) {
            throw Error("concat: row mismatch " + shape(A) + " | " + shape(B));
        }
        Mat y(A.rows(), A.cols() + B.cols());
        y << A, B;
        const Eigen::Index ca = A.cols(), cb = B.cols();
        return record(std::move(y), {a, b}, [this, a, b, ca, cb](const Mat& g) {
            if (wants(a)) accumulate(a, g.leftCols(ca));
            if (wants(b)) accumulate(b, g.rightCols(cb));
        });
    }

    Var slice_cols(Var x, Eigen::Index begin, Eigen::Index count)
    {
        const Mat& X = value(x);
        if (begin < 0 || count < 0 || begin + count > X.cols()) {
            throw Error("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") outside " +
                        shape(X));
        }
        const Eigen::Index cols = X.cols();
        return record(X.middleCols(begin, count), {x}, [this, x, begin, count, cols](const Mat& g) {
            Mat dx = Mat::Zero(g.rows(), cols);
            dx.middleCols(begin, count) = g;
            accumulate(x, dx);
        });
    }

    // Row-major reshape (element order unchanged).
    Var reshape(Var x, Eigen::Index rows, Eigen::Index cols)
    {
        const Mat& X = value(x);
        if (rows * cols != X.size()) {
            throw Error("reshape: cannot view " + shape(X) + " as " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        Mat y = Eigen::Map<const Mat>(X.data(), rows, cols);
        const Eigen::Index r0 = X.rows(), c0 = X.cols();
        return record(std::move(y), {x}, [this, x, r0, c0](const Mat& g) {
            accumulate(x, Mat(Eigen::Map<const Mat>(g.data(), r0, c0)));
        });
    }

    // Each row of x repeated `times` times consecutively.
    Var repeat_rows(Var x, Eigen::Index times)
    {
        const Mat& X = value(x);
        Mat y(X.rows() * times, X.cols());
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            y.middleRows(r * times, times).rowwise() = X.row(r);
        }
        return record(std::move(y), {x}, [this, x, times](const Mat& g) {
            const Eigen::Index rows = g.rows() / times;
            Mat dx(rows, g.cols());
            for (Eigen::Index r = 0; r < rows; ++r) {
                dx.row(r) = g.middleRows(r * times, times).colwise().sum();
            }
            accumulate(x, dx);
        });
    }

    // Block-diagonal sparse product: x stacks `batch` blocks of m.cols() rows;
    // each block is replaced by m * block.
    Var sparse_left(const SparseRows<T>& m, Var x, Eigen::Index batch)
    {
        const Mat& X = value(x);
        if (X.rows() != batch * m.cols()) {
            throw Error("sparse_left: " + shape(X) + " is not " + std::to_string(batch) + " blocks of " +
                        std::to_string(m.cols()) + " rows");
        }
        Mat y(batch * m.rows(), X.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
            y.middleRows(b * m.rows(), m.rows()) = m * X.middleRows(b * m.cols(), m.cols());
        }
        return record(std::move(y), {x}, [this, x, &m, batch](const Mat& g) {
            Mat dx(batch * m.cols(), g.cols());
            for (Eigen::Index b = 0; b < batch; ++b) {
                dx.middleRows(b * m.cols(), m.cols()) = m.transpose() * g.middleRows(b * m.rows(), m.rows());
            }
            accumulate(x, dx);
        });
    }

    // ---- nonlinearities ---------------------------------------------------

    Var relu(Var x)
    {
        Mat y = value(x).cwiseMax(T(0));
        return record(std::move(y), {x}, [this, x](const Mat& g) {
            accumulate(x, (value(x).array() > T(0)).select(g, T(0)));
        });
    }

    Var sigmoid(Var x)
    {
        Mat y = (T(1) / (T(1) + (-value(x).array()).exp())).matrix();
        const int out = next_id();
        return record(std::move(y), {x}, [this, x, out](const Mat& g) {
            const auto& s = nodes_[out].value.array();
            accumulate(x, (g.array() * s * (T(1) - s)).matrix());
        });
    }

    Var softmax(Var x)
    {
        const Mat& X = value(x);
        Mat y = (X.colwise() - X.rowwise().maxCoeff()).array().exp().matrix();
        y.array().colwise() /= y.rowwise().sum().array();
        const int out = next_id();
        return record(std::move(y), {x}, [this, x, out](const Mat& g) {
            const Mat& s = nodes_[out].value;
            const auto dot = (g.cwiseProduct(s)).rowwise().sum();
            accumulate(x, (s.array() * (g.colwise() - dot).array()).matrix());
        });
    }

    // ---- reductions and losses --------------------------------------------

    Var sum(Var x)
    {
        Mat y(1, 1);
        y(0, 0) = value(x).sum();
        return record(std::move(y), {x}, [this, x](const Mat& g) {
            accumulate(x, Mat::Constant(value(x).rows(), value(x).cols(), g(0, 0)));
        });
    }

    Var mean(Var x)
    {
        const auto n = static_cast<T>(value(x).size());
        return scale(sum(x), T(1) / n);
    }

    // Sum of elementwise binary cross entropy between probabilities p and targets t.
    Var bce(Var p, const Mat& target)
    {
        const Mat& P = value(p);
        check_shape("bce", P, target);
        const T lo = static_cast<T>(kProbEps), hi = static_cast<T>(1.0 - kProbEps);
        const auto pc = P.array().max(lo).min(hi);
        Mat y(1, 1);
        y(0, 0) = -(target.array() * pc.log() + (T(1) - target.array()) * (T(1) - pc).log()).sum();
        return record(std::move(y), {p}, [this, p, target, lo, hi](const Mat& g) {
            const auto& P = value(p).array();
            const auto pc = P.max(lo).min(hi);
            const auto d = (-target.array() / pc + (T(1) - target.array()) / (T(1) - pc)) * g(0, 0);
            accumulate(p, ((P >= lo && P <= hi).select(d, T(0))).matrix());
        });
    }

    // Sum over rows of categorical cross entropy -sum_c t_c log q_c.
    Var cce(Var q, const Mat& target)
    {
        const Mat& Q = value(q);
        check_shape("cce", Q, target);
        const T lo = static_cast<T>(kProbEps), hi = static_cast<T>(1.0 - kProbEps);
        Mat y(1, 1);
        y(0, 0) = -(target.array() * Q.array().max(lo).min(hi).log()).sum();
        return record(std::move(y), {q}, [this, q, target, lo, hi](const Mat& g) {
            const auto& Q = value(q).array();
            const auto d = -target.array() / Q.max(lo).min(hi) * g(0, 0);
            accumulate(q, ((Q >= lo && Q <= hi).select(d, T(0))).matrix());
        });
    }

    // Sum over elements of KL(N(mu, exp(logvar)) || N(0, 1)).
    Var kl_normal(Var mu, Var logvar)
    {
        same_shape("kl_normal", mu, logvar);
        const auto& M = value(mu).array();
        const auto& L = value(logvar).array();
        Mat y(1, 1);
        y(0, 0) = T(0.5) * (M.square() + L.exp() - T(1) - L).sum();
        return record(std::move(y), {mu, logvar}, [this, mu, logvar](const Mat& g) {
            if (wants(mu)) accumulate(mu, value(mu) * g(0, 0));
            if (wants(logvar)) accumulate(logvar, (T(0.5) * (value(logvar).array().exp() - T(1)) * g(0, 0)).matrix());
        });
    }

    // mu + exp(logvar / 2) * noise, with the noise held constant.
    Var reparameterize(Var mu, Var logvar, const Mat& noise)
    {
        same_shape("reparameterize", mu, logvar);
        check_shape("reparameterize", value(mu), noise);
        Mat y = value(mu) + ((T(0.5) * value(logvar).array()).exp() * noise.array()).matrix();
        return record(std::move(y), {mu, logvar}, [this, mu, logvar, noise](const Mat& g) {
            if (wants(mu)) accumulate(mu, g);
            if (wants(logvar)) {
                const auto sd = (T(0.5) * value(logvar).array()).exp();
                accumulate(logvar, (g.array() * T(0.5) * sd * noise.array()).matrix());
            }
        });
    }

private:
    using Backward = std::function<void(const Mat&)>;

    struct Node {
        Mat value;
        Mat grad;
        Backward backward;
        bool needs_grad = false;
    };

    Var push(Mat value, bool needs_grad)
    {
        nodes_.push_back({std::move(value), Mat(), nullptr, needs_grad});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    int next_id() const { return static_cast<int>(nodes_.size()); }

    Var record(Mat value, std::initializer_list<Var> inputs, Backward fn)
    {
        bool needs = false;
        for (Var in : inputs) {
            needs = needs || nodes_.at(in.id).needs_grad;
        }
        Var out = push(std::move(value), needs);
        if (needs) {
            nodes_.back().backward = std::move(fn);
        }
        return out;
    }

    bool wants(Var v) const { return nodes_[v.id].needs_grad; }

    template <class Expr>
    void accumulate(Var v, const Expr& g)
    {
        Node& n = nodes_[v.id];
        if (!n.needs_grad) {
            return;
        }
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    static std::string shape(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

    static void check_shape(const char* op, const Mat& a, const Mat& b)
    {
        if (a.rows() != b.rows() || a.cols() != b.cols()) {
            throw Error(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
        }
    }

    void same_shape(const char* op, Var a, Var b) const { check_shape(op, value(a), value(b)); }

    std::vector<Node> nodes_;
};

} // namespace hsi::ad
