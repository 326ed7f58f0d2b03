#include "sslvqa/autodiff.hpp"

#include "sslvqa/errors.hpp"

#include <memory>
#include <algorithm>
#include <cmath>
#include <string>

namespace sslvqa::ad {

namespace {

Tape& tape_of(Var a) {
    if (a.tape() == nullptr) {
        throw ConfigError("autodiff: uninitialised variable");
    }
    return *a.tape();
}

void same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) {
        throw ConfigError("autodiff: operands recorded on different tapes");
    }
}

void same_shape(Var a, Var b, const char* op) {
    same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ConfigError(std::string("autodiff: shape mismatch in ") + op + " (" +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

} // namespace

const Matrix& Var::value() const {
    return tape_of(*this).value(id_);
}

double Var::item() const {
    const Matrix& v = value();
    if (v.size() != 1) {
        throw ConfigError("autodiff: item() on a non-scalar");
    }
    return v(0, 0);
}

bool Var::requires_grad() const {
    return tape_of(*this).requires_grad(id_);
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
    if (!value.allFinite()) {
        throw NumericError("autodiff: non-finite constant");
    }
    Node n;
    n.value = std::move(value);
    n.op = "constant";
    return push(std::move(n));
}

Var Tape::parameter(Matrix value) {
    if (!value.allFinite()) {
        throw NumericError("autodiff: non-finite parameter");
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.op = "parameter";
    return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Pullback pullback,
                 const char* op) {
    return record(std::move(value), std::vector<Var>(parents), std::move(pullback), op);
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Pullback pullback,
                 const char* op) {
    if (!value.allFinite()) {
        throw NumericError(std::string("autodiff: non-finite result in ") + op);
    }
    Node n;
    n.value = std::move(value);
    n.op = op;
    for (Var p : parents) {
        if (p.tape() != this) {
            throw ConfigError(std::string("autodiff: foreign operand in ") + op);
        }
        n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
    }
    if (n.requires_grad) {
        n.pullback = std::move(pullback);
    }
    return push(std::move(n));
}

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) {
        return;
    }
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var root) {
    if (root.tape() != this) {
        throw ConfigError("autodiff: backward on a foreign variable");
    }
    if (root.value().size() != 1) {
        throw ConfigError("autodiff: backward requires a scalar root");
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad.resize(0, 0);
    }
    accumulate(root, Matrix::Ones(1, 1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.has_grad && n.pullback) {
            if (!n.grad.allFinite()) {
                throw NumericError(std::string("autodiff: non-finite gradient at ") + n.op);
            }
            n.pullback(*this, n.grad);
        }
    }
}

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (!n.has_grad) {
        return Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
}

Var operator+(Var a, Var b) {
    same_shape(a, b, "add");
    return tape_of(a).record(a.value() + b.value(), {a, b},
                             [a, b](Tape& t, const Matrix& g) {
                                 t.accumulate(a, g);
                                 t.accumulate(b, g);
                             },
                             "add");
}

Var operator-(Var a, Var b) {
    same_shape(a, b, "sub");
    return tape_of(a).record(a.value() - b.value(), {a, b},
                             [a, b](Tape& t, const Matrix& g) {
                                 t.accumulate(a, g);
                                 t.accumulate(b, -g);
                             },
                             "sub");
}

Var operator*(Var a, Var b) {
    same_shape(a, b, "mul");
    return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b},
                             [a, b](Tape& t, const Matrix& g) {
                                 if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
                                 if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
                             },
                             "mul");
}

Var operator/(Var a, Var b) {
    same_shape(a, b, "div");
    return tape_of(a).record(
        a.value().cwiseQuotient(b.value()), {a, b},
        [a, b](Tape& t, const Matrix& g) {
            const Matrix& bv = b.value();
            if (a.requires_grad()) t.accumulate(a, g.cwiseQuotient(bv));
            if (b.requires_grad()) {
                t.accumulate(b, -g.cwiseProduct(a.value()).cwiseQuotient(bv.cwiseProduct(bv)));
            }
        },
        "div");
}

Var operator-(Var a) {
    return tape_of(a).record(-a.value(), {a},
                             [a](Tape& t, const Matrix& g) { t.accumulate(a, -g); }, "neg");
}

Var scale(Var a, double c) {
    return tape_of(a).record(a.value() * c, {a},
                             [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); }, "scale");
}

Var add_scalar(Var a, double c) {
    return tape_of(a).record(a.value().array() + c, {a},
                             [a](Tape& t, const Matrix& g) { t.accumulate(a, g); }, "add_scalar");
}

Var matmul(Var a, Var b) {
    same_tape(a, b);
    if (a.cols() != b.rows()) {
        throw ConfigError("autodiff: matmul inner dimension mismatch");
    }
    return tape_of(a).record(a.value() * b.value(), {a, b},
                             [a, b](Tape& t, const Matrix& g) {
                                 if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
                                 if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
                             },
                             "matmul");
}

Var transpose(Var a) {
    return tape_of(a).record(a.value().transpose(), {a},
                             [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); },
                             "transpose");
}

Var sum(Var a) {
    const Eigen::Index r = a.rows();
    const Eigen::Index c = a.cols();
    return tape_of(a).record(Matrix::Constant(1, 1, a.value().sum()), {a},
                             [a, r, c](Tape& t, const Matrix& g) {
                                 t.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
                             },
                             "sum");
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) {
        throw ConfigError("autodiff: mean of empty matrix");
    }
    return scale(sum(a), 1.0 / n);
}

Var sum_rows(Var a) {
    const Eigen::Index r = a.rows();
    return tape_of(a).record(a.value().colwise().sum(), {a},
                             [a, r](Tape& t, const Matrix& g) {
                                 t.accumulate(a, g.replicate(r, 1));
                             },
                             "sum_rows");
}

Var mean_rows(Var a) {
    if (a.rows() == 0) {
        throw ConfigError("autodiff: mean_rows of empty matrix");
    }
    return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var sum_cols(Var a) {
    const Eigen::Index c = a.cols();
    return tape_of(a).record(a.value().rowwise().sum(), {a},
                             [a, c](Tape& t, const Matrix& g) {
                                 t.accumulate(a, g.replicate(1, c));
                             },
                             "sum_cols");
}

Var broadcast_rows(Var row, Eigen::Index n) {
    if (row.rows() != 1) {
        throw ConfigError("autodiff: broadcast_rows expects a row vector");
    }
    return tape_of(row).record(row.value().replicate(n, 1), {row},
                               [row](Tape& t, const Matrix& g) {
                                   t.accumulate(row, g.colwise().sum());
                               },
                               "broadcast_rows");
}

Var broadcast_scalar(Var s, Eigen::Index rows, Eigen::Index cols) {
    if (s.value().size() != 1) {
        throw ConfigError("autodiff: broadcast_scalar expects a 1x1 value");
    }
    return tape_of(s).record(Matrix::Constant(rows, cols, s.item()), {s},
                             [s](Tape& t, const Matrix& g) {
                                 t.accumulate(s, Matrix::Constant(1, 1, g.sum()));
                             },
                             "broadcast_scalar");
}

Var exp(Var a) {
    Matrix y = a.value().array().exp().matrix();
    return tape_of(a).record(y, {a},
                             [a, y](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(y)); },
                             "exp");
}

Var log(Var a) {
    if ((a.value().array() <= 0.0).any()) {
        throw NumericError("autodiff: log of non-positive value");
    }
    return tape_of(a).record(a.value().array().log().matrix(), {a},
                             [a](Tape& t, const Matrix& g) {
                                 t.accumulate(a, g.cwiseQuotient(a.value()));
                             },
                             "log");
}

Var sqrt(Var a) {
    if ((a.value().array() < 0.0).any()) {
        throw NumericError("autodiff: sqrt of negative value");
    }
    Matrix y = a.value().array().sqrt().matrix();
    return tape_of(a).record(y, {a},
                             [a, y](Tape& t, const Matrix& g) {
                                 t.accumulate(a, (0.5 * g.array() / y.array()).matrix());
                             },
                             "sqrt");
}

Var square(Var a) {
    return tape_of(a).record(a.value().array().square().matrix(), {a},
                             [a](Tape& t, const Matrix& g) {
                                 t.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
                             },
                             "square");
}

Var maximum(Var a, Var b) {
    same_shape(a, b, "maximum");
    return tape_of(a).record(a.value().cwiseMax(b.value()), {a, b},
                             [a, b](Tape& t, const Matrix& g) {
                                 const auto take_a = (a.value().array() >= b.value().array());
                                 if (a.requires_grad()) t.accumulate(a, take_a.select(g, 0.0));
                                 if (b.requires_grad()) t.accumulate(b, take_a.select(0.0, g));
                             },
                             "maximum");
}

Var silu(Var a) {
    const Matrix sig = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    Matrix y = a.value().cwiseProduct(sig);
    return tape_of(a).record(std::move(y), {a},
                             [a, sig](Tape& t, const Matrix& g) {
                                 const auto x = a.value().array();
                                 const auto s = sig.array();
                                 t.accumulate(a, (g.array() * s * (1.0 + x * (1.0 - s))).matrix());
                             },
                             "silu");
}

Var guarded_sqrt(Var a, double floor) {
    Matrix y = a.value().array().max(floor).sqrt().matrix();
    return tape_of(a).record(y, {a},
                             [a, y, floor](Tape& t, const Matrix& g) {
                                 const auto active = a.value().array() > floor;
                                 t.accumulate(a, active.select(0.5 * g.array() / y.array(), 0.0)
                                                     .matrix());
                             },
                             "guarded_sqrt");
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ConfigError("autodiff: concat_rows of nothing");
    }
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts.front().cols();
    for (Var p : parts) {
        same_tape(parts.front(), p);
        if (p.cols() != cols) {
            throw ConfigError("autodiff: concat_rows column mismatch");
        }
        rows += p.rows();
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return tape_of(parts.front())
        .record(std::move(out), parts,
                [parts](Tape& t, const Matrix& g) {
                    Eigen::Index off = 0;
                    for (Var p : parts) {
                        if (p.requires_grad()) t.accumulate(p, g.middleRows(off, p.rows()));
                        off += p.rows();
                    }
                },
                "concat_rows");
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ConfigError("autodiff: concat_cols of nothing");
    }
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts.front().rows();
    for (Var p : parts) {
        same_tape(parts.front(), p);
        if (p.rows() != rows) {
            throw ConfigError("autodiff: concat_cols row mismatch");
        }
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return tape_of(parts.front())
        .record(std::move(out), parts,
                [parts](Tape& t, const Matrix& g) {
                    Eigen::Index off = 0;
                    for (Var p : parts) {
                        if (p.requires_grad()) t.accumulate(p, g.middleCols(off, p.cols()));
                        off += p.cols();
                    }
                },
                "concat_cols");
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) {
        throw ConfigError("autodiff: slice_rows out of range");
    }
    const Eigen::Index r = a.rows();
    const Eigen::Index c = a.cols();
    return tape_of(a).record(a.value().middleRows(start, count), {a},
                             [a, start, count, r, c](Tape& t, const Matrix& g) {
                                 Matrix full = Matrix::Zero(r, c);
                                 full.middleRows(start, count) = g;
                                 t.accumulate(a, full);
                             },
                             "slice_rows");
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) {
        throw ConfigError("autodiff: slice_cols out of range");
    }
    const Eigen::Index r = a.rows();
    const Eigen::Index c = a.cols();
    return tape_of(a).record(a.value().middleCols(start, count), {a},
                             [a, start, count, r, c](Tape& t, const Matrix& g) {
                                 Matrix full = Matrix::Zero(r, c);
                                 full.middleCols(start, count) = g;
                                 t.accumulate(a, full);
                             },
                             "slice_cols");
}

Var gather_rows(Var a, std::vector<Eigen::Index> index) {
    Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.rows()) {
            throw ConfigError("autodiff: gather_rows index out of range");
        }
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
    }
    const Eigen::Index r = a.rows();
    return tape_of(a).record(std::move(out), {a},
                             [a, index = std::move(index), r](Tape& t, const Matrix& g) {
                                 Matrix full = Matrix::Zero(r, g.cols());
                                 for (std::size_t i = 0; i < index.size(); ++i) {
                                     full.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
                                 }
                                 t.accumulate(a, full);
                             },
                             "gather_rows");
}

Var affine(Var x, Var w, Var b) {
    same_tape(x, w);
    same_tape(x, b);
    if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
        throw ConfigError("autodiff: affine shape mismatch");
    }
    Matrix y = x.value() * w.value();
    y.rowwise() += b.value().row(0);
    return tape_of(x).record(std::move(y), {x, w, b},
                             [x, w, b](Tape& t, const Matrix& g) {
                                 if (x.requires_grad()) t.accumulate(x, g * w.value().transpose());
                                 if (w.requires_grad()) t.accumulate(w, x.value().transpose() * g);
                                 if (b.requires_grad()) t.accumulate(b, g.colwise().sum());
                             },
                             "affine");
}

Eigen::LLT<Matrix> spd_factor(const Matrix& s) {
    if (s.rows() != s.cols() || s.rows() == 0) {
        throw ConfigError("spd_factor: matrix must be square and non-empty");
    }
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() == Eigen::Success) {
        return llt;
    }
    const double scale = std::max(s.diagonal().cwiseAbs().mean(), 1e-300);
    for (double jitter = 1e-8; jitter <= 1e-4 * 1.0000001; jitter *= 10.0) {
        Matrix shifted = s;
        shifted.diagonal().array() += jitter * scale;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) {
            return llt;
        }
    }
    throw NumericError("spd_factor: Cholesky failed after jitter escalation");
}

Var solve_spd(Var s, Var b) {
    same_tape(s, b);
    if (s.rows() != s.cols() || s.rows() != b.rows()) {
        throw ConfigError("autodiff: solve_spd shape mismatch");
    }
    auto llt = std::make_shared<Eigen::LLT<Matrix>>(spd_factor(s.value()));
    Matrix x = llt->solve(b.value());
    return tape_of(s).record(x, {s, b},
                             [s, b, llt, x](Tape& t, const Matrix& g) {
                                 const Matrix gb = llt->solve(g);
                                 if (b.requires_grad()) t.accumulate(b, gb);
                                 if (s.requires_grad()) t.accumulate(s, -gb * x.transpose());
                             },
                             "solve_spd");
}

Var mahalanobis_sq(Var mu_a, Var mu_b, Var sigma_a, Var sigma_b) {
    same_shape(mu_a, mu_b, "mahalanobis_sq");
    same_shape(sigma_a, sigma_b, "mahalanobis_sq");
    if (mu_a.rows() != 1 || sigma_a.rows() != mu_a.cols() || sigma_a.cols() != mu_a.cols()) {
        throw ConfigError("autodiff: mahalanobis_sq expects 1xC means and CxC covariances");
    }
    const Matrix pooled = 0.5 * (sigma_a.value() + sigma_b.value());
    const Eigen::LLT<Matrix> llt = spd_factor(pooled);
    const Eigen::VectorXd delta = (mu_a.value() - mu_b.value()).transpose();
    const Eigen::VectorXd x = llt.solve(delta);
    const double d2 = delta.dot(x);
    return tape_of(mu_a).record(
        Matrix::Constant(1, 1, d2), {mu_a, mu_b, sigma_a, sigma_b},
        [mu_a, mu_b, sigma_a, sigma_b, x](Tape& t, const Matrix& g) {
            const double gs = g(0, 0);
            const Matrix gmu = (2.0 * gs) * x.transpose();
            t.accumulate(mu_a, gmu);
            t.accumulate(mu_b, -gmu);
            const Matrix gsig = (-0.5 * gs) * (x * x.transpose());
            t.accumulate(sigma_a, gsig);
            t.accumulate(sigma_b, gsig);
        },
        "mahalanobis_sq");
}

Var stop_gradient(Var a) {
    return tape_of(a).constant(a.value());
}

GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Matrix>& inputs, double eps) {
    if (!(eps > 0.0)) {
        throw ConfigError("grad_check: eps must be positive");
    }
    std::vector<Matrix> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Matrix& m : inputs) {
            vars.push_back(tape.parameter(m));
        }
        Var out = fn(tape, vars);
        if (out.value().size() != 1) {
            throw ConfigError("grad_check: function must be scalar-valued");
        }
        tape.backward(out);
        for (Var v : vars) {
            analytic.push_back(tape.grad(v));
        }
    }
    auto evaluate = [&](const std::vector<Matrix>& xs) {
        Tape tape;
        std::vector<Var> vars;
        for (const Matrix& m : xs) {
            vars.push_back(tape.constant(m));
        }
        const double v = fn(tape, vars).item();
        if (!std::isfinite(v)) {
            throw NumericError("grad_check: non-finite function value");
        }
        return v;
    };
    GradCheckResult result;
    std::vector<Matrix> probe = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
            const double orig = inputs[i](k);
            probe[i](k) = orig + eps;
            const double fp = evaluate(probe);
            probe[i](k) = orig - eps;
            const double fm = evaluate(probe);
            probe[i](k) = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[i](k);
            const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
            if (err > result.max_rel_error || (i == 0 && k == 0)) {
                result.max_rel_error = std::max(result.max_rel_error, err);
                result.worst_input = i;
                result.worst_index = k;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace sslvqa::ad
