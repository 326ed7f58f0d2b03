#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sslvqa::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    /// Value of a 1x1 node.
    double item() const;
    bool requires_grad() const;

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Linear record of primitive applications. Nodes are appended in evaluation
/// order, so reverse creation order is a valid topological order for backward.
/// Single-threaded.
class Tape {
public:
    using Pullback = std::function<void(Tape&, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var parameter(Matrix value);
    /// Appends a node. Throws NumericError when `value` holds NaN/Inf.
    Var record(Matrix value, std::initializer_list<Var> parents, Pullback pullback, const char* op);
    Var record(Matrix value, const std::vector<Var>& parents, Pullback pullback, const char* op);

    /// Seeds d(root)/d(root) = 1 and propagates to every ancestor exactly once.
    void backward(Var root);
    /// Accumulated gradient; zero matrix when nothing reached the node.
    Matrix grad(Var v) const;
    void accumulate(Var v, const Matrix& g);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        bool has_grad = false;
        Pullback pullback;
        const char* op = "";
    };

    Var push(Node node);

    std::vector<Node> nodes_;
};

// Elementwise arithmetic (operands must share a shape).
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);

Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);

Var sum(Var a);       ///< -> 1x1
Var mean(Var a);      ///< -> 1x1
Var sum_rows(Var a);  ///< column sums, -> 1 x cols
Var mean_rows(Var a); ///< column means, -> 1 x cols
Var sum_cols(Var a);  ///< row sums, -> rows x 1
/// Repeats a 1 x c row `n` times.
Var broadcast_rows(Var row, Eigen::Index n);
/// Repeats a 1x1 value over an r x c matrix.
Var broadcast_scalar(Var s, Eigen::Index rows, Eigen::Index cols);

Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var maximum(Var a, Var b);
/// x * sigmoid(x).
Var silu(Var a);
/// sqrt(max(a, floor)) with zero gradient on the clamped side.
Var guarded_sqrt(Var a, double floor = 1e-12);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// out.row(i) = a.row(index[i]); gradients scatter-add back.
Var gather_rows(Var a, std::vector<Eigen::Index> index);

/// x W + 1 b, with x: n x d, W: d x k, b: 1 x k.
Var affine(Var x, Var w, Var b);

/// Solves S X = B for symmetric positive definite S (Cholesky, jitter escalation).
Var solve_spd(Var s, Var b);

/// (mu_a - mu_b)^T ((sigma_a + sigma_b)/2)^{-1} (mu_a - mu_b) for row-vector means.
/// Closed-form pullback: d/dmu_a = 2 S^{-1} delta, d/dSigma = -1/2 S^{-1} delta delta^T S^{-1}.
Var mahalanobis_sq(Var mu_a, Var mu_b, Var sigma_a, Var sigma_b);

/// Forward identity that contributes no gradient to its ancestors.
Var stop_gradient(Var a);

/// Cholesky factorisation of a symmetric matrix with diagonal jitter escalation
/// (1e-8 .. 1e-4 times the mean diagonal, x10 steps). Throws NumericError on failure.
Eigen::LLT<Matrix> spd_factor(const Matrix& s);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    Eigen::Index worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares the tape gradient of a scalar function with central differences.
/// Per coordinate the error is |a - n| / max(1e-12, |a| + |n|); the maximum is returned.
GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Matrix>& inputs, double eps);

} // namespace sslvqa::ad
