#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gtrans/rng.hpp"

namespace gtrans {

class Tape;

// One node of the computation graph. Every value is a dense row-major
// matrix of f64; vectors are 1xd rows and scalars are 1x1.
struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;
    Tape* tape = nullptr;    // tape this op was recorded on; null for leaves
    std::int64_t id = -1;    // position on the tape; -1 for leaves
    bool is_param = false;
    std::string name;        // parameter name (checkpoints, error messages)

    std::size_t size() const { return rows * cols; }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Ordered record of ops. Creation order is a topological order, so the
// backward pass is a single reverse sweep that visits each node once.
// Clearing drops recorded ops only; parameters live outside the tape and
// keep both values and accumulated gradients.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape() {
        if (current_ == this) current_ = nullptr;
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    static Tape* current() { return current_; }

    void record(const std::shared_ptr<TensorNode>& n) {
        n->tape = this;
        n->id = static_cast<std::int64_t>(nodes_.size());
        nodes_.push_back(n);
    }

    const std::vector<std::shared_ptr<TensorNode>>& nodes() const { return nodes_; }

private:
    friend class TapeScope;
    friend class NoGradScope;
    static inline thread_local Tape* current_ = nullptr;
    std::vector<std::shared_ptr<TensorNode>> nodes_;
};

// RAII activation; a tape is only ever used from one thread.
class TapeScope {
public:
    explicit TapeScope(Tape& t) : prev_(Tape::current_) { Tape::current_ = &t; }
    ~TapeScope() { Tape::current_ = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Suspends recording: ops run value-only and produce constants. Used for
// frozen-embedding phases and test-time evaluation.
class NoGradScope {
public:
    NoGradScope() : prev_(Tape::current_) { Tape::current_ = nullptr; }
    ~NoGradScope() { Tape::current_ = prev_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* prev_;
};

inline std::string shape_str(const TensorNode& n) {
    return "(" + std::to_string(n.rows) + "x" + std::to_string(n.cols) + ")";
}

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> v) {
        if (v.size() != rows * cols)
            throw std::invalid_argument("tensor: data length " + std::to_string(v.size()) +
                                        " does not match shape (" + std::to_string(rows) + "x" +
                                        std::to_string(cols) + ")");
        auto n = std::make_shared<TensorNode>();
        n->rows = rows;
        n->cols = cols;
        n->value = std::move(v);
        return Tensor(std::move(n));
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        return constant(rows, cols, std::vector<double>(rows * cols, 0.0));
    }

    static Tensor full(std::size_t rows, std::size_t cols, double x) {
        return constant(rows, cols, std::vector<double>(rows * cols, x));
    }

    static Tensor scalar(double x) { return constant(1, 1, {x}); }

    // Trainable leaf. Lives outside any tape; grad persists across tape
    // clears and accumulates across backward calls until the caller zeroes it.
    static Tensor parameter(std::size_t rows, std::size_t cols, std::string name,
                            std::vector<double> v) {
        Tensor t = constant(rows, cols, std::move(v));
        t.node_->is_param = true;
        t.node_->name = std::move(name);
        t.node_->ensure_grad();
        return t;
    }

    static Tensor parameter(std::size_t rows, std::size_t cols, std::string name) {
        return parameter(rows, cols, std::move(name),
                         std::vector<double>(rows * cols, 0.0));
    }

    // Glorot-uniform init in [-sqrt(6/(fan_in+fan_out)), +...] on the given stream.
    static Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::string name, Rng& rng) {
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> v(fan_in * fan_out);
        for (double& x : v) x = rng.uniform(-bound, bound);
        return parameter(fan_in, fan_out, std::move(name), std::move(v));
    }

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->size(); }
    bool is_param() const { return node_->is_param; }
    const std::string& name() const { return node_->name; }

    std::vector<double>& value() { return node_->value; }
    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }

    double operator()(std::size_t i, std::size_t j) const {
        return node_->value[i * node_->cols + j];
    }

    double scalar_value() const {
        if (size() != 1)
            throw std::invalid_argument("scalar_value: tensor is " + shape_str(*node_));
        return node_->value[0];
    }

    // Value-only copy, detached from any tape.
    Tensor detach() const { return constant(rows(), cols(), node_->value); }

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& shared() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline Tensor make_op(std::size_t rows, std::size_t cols,
                      std::vector<std::shared_ptr<TensorNode>> parents,
                      std::function<void(TensorNode&)> backprop) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value.resize(rows * cols);
    if (Tape* t = Tape::current()) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
        t->record(n);
    }
    return Tensor(n);
}

inline void accumulate_ready(TensorNode& n) { n.ensure_grad(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops. Forward fills value; backprop accumulates dL/dparent given dL/dself.
// Broadcasting is deliberately narrow: exact shape match or a 1x1 scalar
// operand. Row-vector bias addition is its own op (add_rowvec).
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(*a.node()) +
                                    " * " + shape_str(*b.node()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = detail::make_op(m, n, {a.shared(), b.shared()}, [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        TensorNode& B = *self.parents[1];
        A.ensure_grad();
        B.ensure_grad();
        const std::size_t m = A.rows, k = A.cols, n = B.cols;
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
            const double* gr = &self.grad[i * n];
            double* da = &A.grad[i * k];
            for (std::size_t j = 0; j < k; ++j) {
                const double* br = &B.value[j * n];
                double acc = 0.0;
                for (std::size_t t = 0; t < n; ++t) acc += gr[t] * br[t];
                da[j] += acc;
            }
        }
        // dB = A^T * dC
        for (std::size_t j = 0; j < k; ++j) {
            const double* av = &A.value[j];
            double* db = &B.grad[j * n];
            for (std::size_t i = 0; i < m; ++i) {
                const double aij = av[i * k];
                if (aij == 0.0) continue;
                const double* gr = &self.grad[i * n];
                for (std::size_t t = 0; t < n; ++t) db[t] += aij * gr[t];
            }
        }
    });
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = out.value().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = &ov[i * n];
        for (std::size_t t = 0; t < n; ++t) orow[t] = 0.0;
        const double* arow = &av[i * k];
        for (std::size_t j = 0; j < k; ++j) {
            const double aij = arow[j];
            if (aij == 0.0) continue;
            const double* brow = &bv[j * n];
            for (std::size_t t = 0; t < n; ++t) orow[t] += aij * brow[t];
        }
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = detail::make_op(n, m, {a.shared()}, [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        for (std::size_t i = 0; i < self.rows; ++i)
            for (std::size_t j = 0; j < self.cols; ++j)
                A.grad[j * A.cols + i] += self.grad[i * self.cols + j];
    });
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.value()[j * m + i] = a.value()[i * n + j];
    return out;
}

namespace detail {

enum class EwKind { Add, Sub, Mul };

inline Tensor elementwise2(const Tensor& a, const Tensor& b, EwKind kind, const char* opname) {
    const bool a_scalar = a.size() == 1;
    const bool b_scalar = b.size() == 1;
    if (!(a.rows() == b.rows() && a.cols() == b.cols()) && !a_scalar && !b_scalar)
        throw std::invalid_argument(std::string(opname) + ": shape mismatch: " +
                                    shape_str(*a.node()) + " vs " + shape_str(*b.node()));
    const std::size_t rows = a_scalar ? b.rows() : a.rows();
    const std::size_t cols = a_scalar ? b.cols() : a.cols();
    Tensor out = detail::make_op(rows, cols, {a.shared(), b.shared()}, [kind](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        TensorNode& B = *self.parents[1];
        A.ensure_grad();
        B.ensure_grad();
        const bool as = A.value.size() == 1;
        const bool bs = B.value.size() == 1;
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            const double g = self.grad[i];
            const double av = A.value[as ? 0 : i];
            const double bv = B.value[bs ? 0 : i];
            switch (kind) {
                case EwKind::Add:
                    A.grad[as ? 0 : i] += g;
                    B.grad[bs ? 0 : i] += g;
                    break;
                case EwKind::Sub:
                    A.grad[as ? 0 : i] += g;
                    B.grad[bs ? 0 : i] -= g;
                    break;
                case EwKind::Mul:
                    A.grad[as ? 0 : i] += g * bv;
                    B.grad[bs ? 0 : i] += g * av;
                    break;
            }
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double av = a.value()[a_scalar ? 0 : i];
        const double bv = b.value()[b_scalar ? 0 : i];
        switch (kind) {
            case EwKind::Add: out.value()[i] = av + bv; break;
            case EwKind::Sub: out.value()[i] = av - bv; break;
            case EwKind::Mul: out.value()[i] = av * bv; break;
        }
    }
    return out;
}

template <typename Fwd, typename Bwd>
inline Tensor unary(const Tensor& a, Fwd fwd, Bwd bwd) {
    Tensor out = detail::make_op(a.rows(), a.cols(), {a.shared()}, [bwd](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            A.grad[i] += self.grad[i] * bwd(A.value[i], self.value[i]);
    });
    for (std::size_t i = 0; i < a.size(); ++i) out.value()[i] = fwd(a.value()[i]);
    return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::elementwise2(a, b, detail::EwKind::Add, "add");
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::elementwise2(a, b, detail::EwKind::Sub, "sub");
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::elementwise2(a, b, detail::EwKind::Mul, "mul");
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus_scalar(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline Tensor relu(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return sigmoid_scalar(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor softplus(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return softplus_scalar(x); },
        [](double x, double) { return sigmoid_scalar(x); });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
    return detail::unary(
        a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

// m (n x d) + r (1 x d), the bias pattern. Backward for r sums over rows.
inline Tensor add_rowvec(const Tensor& m, const Tensor& r) {
    if (r.rows() != 1 || r.cols() != m.cols())
        throw std::invalid_argument("add_rowvec: shape mismatch: " + shape_str(*m.node()) +
                                    " vs " + shape_str(*r.node()));
    Tensor out = detail::make_op(m.rows(), m.cols(), {m.shared(), r.shared()},
                                 [](TensorNode& self) {
                                     TensorNode& M = *self.parents[0];
                                     TensorNode& R = *self.parents[1];
                                     M.ensure_grad();
                                     R.ensure_grad();
                                     for (std::size_t i = 0; i < M.rows; ++i)
                                         for (std::size_t j = 0; j < M.cols; ++j) {
                                             const double g = self.grad[i * M.cols + j];
                                             M.grad[i * M.cols + j] += g;
                                             R.grad[j] += g;
                                         }
                                 });
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            out.value()[i * m.cols() + j] = m.value()[i * m.cols() + j] + r.value()[j];
    return out;
}

inline Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    if (axis != 0 && axis != 1)
        throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                    " out of range (0 or 1)");
    if (axis == 0 && a.cols() != b.cols())
        throw std::invalid_argument("concat axis 0: column mismatch: " + shape_str(*a.node()) +
                                    " vs " + shape_str(*b.node()));
    if (axis == 1 && a.rows() != b.rows())
        throw std::invalid_argument("concat axis 1: row mismatch: " + shape_str(*a.node()) +
                                    " vs " + shape_str(*b.node()));
    const std::size_t rows = axis == 0 ? a.rows() + b.rows() : a.rows();
    const std::size_t cols = axis == 1 ? a.cols() + b.cols() : a.cols();
    Tensor out = detail::make_op(rows, cols, {a.shared(), b.shared()}, [axis](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        TensorNode& B = *self.parents[1];
        A.ensure_grad();
        B.ensure_grad();
        if (axis == 0) {
            for (std::size_t i = 0; i < A.value.size(); ++i) A.grad[i] += self.grad[i];
            for (std::size_t i = 0; i < B.value.size(); ++i)
                B.grad[i] += self.grad[A.value.size() + i];
        } else {
            for (std::size_t i = 0; i < A.rows; ++i) {
                const double* g = &self.grad[i * self.cols];
                for (std::size_t j = 0; j < A.cols; ++j) A.grad[i * A.cols + j] += g[j];
                for (std::size_t j = 0; j < B.cols; ++j) B.grad[i * B.cols + j] += g[A.cols + j];
            }
        }
    });
    if (axis == 0) {
        std::copy(a.value().begin(), a.value().end(), out.value().begin());
        std::copy(b.value().begin(), b.value().end(), out.value().begin() + a.size());
    } else {
        for (std::size_t i = 0; i < rows; ++i) {
            double* o = &out.value()[i * cols];
            std::copy(&a.value()[i * a.cols()], &a.value()[i * a.cols()] + a.cols(), o);
            std::copy(&b.value()[i * b.cols()], &b.value()[i * b.cols()] + b.cols(),
                      o + a.cols());
        }
    }
    return out;
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (c0 >= c1 || c1 > a.cols())
        throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) + ", " +
                                    std::to_string(c1) + ") invalid for " + shape_str(*a.node()));
    const std::size_t cols = c1 - c0;
    Tensor out = detail::make_op(a.rows(), cols, {a.shared()}, [c0, cols](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        for (std::size_t i = 0; i < self.rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                A.grad[i * A.cols + c0 + j] += self.grad[i * cols + j];
    });
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out.value()[i * cols + j] = a.value()[i * a.cols() + c0 + j];
    return out;
}

// Tile a 1xd row n times. Backward is a column sum.
inline Tensor repeat_rows(const Tensor& r, std::size_t n) {
    if (r.rows() != 1)
        throw std::invalid_argument("repeat_rows: expected a row vector, got " +
                                    shape_str(*r.node()));
    Tensor out = detail::make_op(n, r.cols(), {r.shared()}, [](TensorNode& self) {
        TensorNode& R = *self.parents[0];
        R.ensure_grad();
        for (std::size_t i = 0; i < self.rows; ++i)
            for (std::size_t j = 0; j < self.cols; ++j)
                R.grad[j] += self.grad[i * self.cols + j];
    });
    for (std::size_t i = 0; i < n; ++i)
        std::copy(r.value().begin(), r.value().end(), out.value().begin() + i * r.cols());
    return out;
}

inline Tensor mean_rows(const Tensor& a) {
    if (a.rows() == 0) throw std::invalid_argument("mean_rows: zero rows");
    const std::size_t n = a.rows(), d = a.cols();
    Tensor out = detail::make_op(1, d, {a.shared()}, [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        const double inv = 1.0 / static_cast<double>(A.rows);
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < A.cols; ++j) A.grad[i * A.cols + j] += self.grad[j] * inv;
    });
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += a.value()[i * d + j];
        out.value()[j] = acc / static_cast<double>(n);
    }
    return out;
}

inline Tensor sum_rows(const Tensor& a) {
    const std::size_t n = a.rows(), d = a.cols();
    Tensor out = detail::make_op(1, d, {a.shared()}, [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < A.cols; ++j) A.grad[i * A.cols + j] += self.grad[j];
    });
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += a.value()[i * d + j];
        out.value()[j] = acc;
    }
    return out;
}

inline Tensor row_softmax(const Tensor& a) {
    const std::size_t n = a.rows(), d = a.cols();
    Tensor out = detail::make_op(n, d, {a.shared()}, [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        for (std::size_t i = 0; i < self.rows; ++i) {
            const double* y = &self.value[i * self.cols];
            const double* g = &self.grad[i * self.cols];
            double dot = 0.0;
            for (std::size_t j = 0; j < self.cols; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < self.cols; ++j)
                A.grad[i * self.cols + j] += y[j] * (g[j] - dot);
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = &a.value()[i * d];
        double* y = &out.value()[i * d];
        double mx = x[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < d; ++j) y[j] /= z;
    }
    return out;
}

inline Tensor sum_all(const Tensor& a) {
    Tensor out = detail::make_op(1, 1, {a.shared()}, [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < A.value.size(); ++i) A.grad[i] += g;
    });
    double acc = 0.0;
    for (double x : a.value()) acc += x;
    out.value()[0] = acc;
    return out;
}

// Squared Frobenius norm, the workhorse of every loss here.
inline Tensor frobenius_sq(const Tensor& a) {
    Tensor out = detail::make_op(1, 1, {a.shared()}, [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        A.ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < A.value.size(); ++i) A.grad[i] += g * 2.0 * A.value[i];
    });
    double acc = 0.0;
    for (double x : a.value()) acc += x * x;
    out.value()[0] = acc;
    return out;
}

// Reverse sweep over the active tape. Recorded (intermediate) grads are
// fresh per call; parameter grads accumulate until the caller zeroes them,
// so two backward calls without zeroing double every parameter grad.
inline void backward(const Tensor& loss) {
    Tape* tape = Tape::current();
    if (!tape || tape->size() == 0)
        throw std::runtime_error("backward: no ops recorded on the active tape");
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(*loss.node()));
    if (loss.node()->tape != tape)
        throw std::runtime_error("backward: loss was not produced on the active tape");
    for (const auto& n : tape->nodes()) n->grad.assign(n->value.size(), 0.0);
    loss.node()->grad[0] = 1.0;
    const auto& nodes = tape->nodes();
    for (std::size_t i = nodes.size(); i > 0; --i) {
        TensorNode& n = *nodes[i - 1];
        if (n.backprop) n.backprop(n);
    }
}

inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(matmul(x, w), b);
}

}  // namespace gtrans
