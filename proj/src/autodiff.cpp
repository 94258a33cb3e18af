#include "advgraph/autodiff.hpp"

#include "advgraph/error.hpp"

#include <algorithm>
#include <cmath>

namespace advgraph {

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Matrix& Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    require(last_root_ != Var::none, ErrorKind::internal, "gradient requested before backward()");
    static const Matrix empty;
    return n.requires_grad ? n.grad : empty;
}

const NormalizedOperator& Tape::operator_value(Var op) const {
    const Node& n = nodes_.at(op.id);
    require(n.op != nullptr, ErrorKind::internal, "tape node is not an operator");
    return n.op->op;
}

Var Tape::matmul(Var a, Var b) {
    Matrix out = advgraph::matmul(value(a), value(b));
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
        const Matrix& dy = t.g(self);
        if (t.needs(a)) {
            const Matrix& bv = t.value(b);
            Matrix& da = t.g(a.id);
            // da += dy * b^T
            for (std::size_t i = 0; i < dy.rows; ++i)
                for (std::size_t k = 0; k < bv.rows; ++k) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < dy.cols; ++j) s += dy(i, j) * bv(k, j);
                    da(i, k) += s;
                }
        }
        if (t.needs(b)) {
            const Matrix& av = t.value(a);
            Matrix& db = t.g(b.id);
            // db += a^T * dy
            for (std::size_t i = 0; i < av.rows; ++i)
                for (std::size_t k = 0; k < av.cols; ++k) {
                    const double aik = av(i, k);
                    if (aik == 0.0) continue;
                    for (std::size_t j = 0; j < dy.cols; ++j) db(k, j) += aik * dy(i, j);
                }
        }
    });
}

Var Tape::add_bias(Var a, Var bias) {
    const Matrix& av = value(a);
    const Matrix& bv = value(bias);
    require(bv.rows == 1 && bv.cols == av.cols, ErrorKind::shape, "bias width differs from matrix width");
    Matrix out = av;
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += bv(0, j);
    return push(std::move(out), needs(a) || needs(bias), [a, bias](Tape& t, std::size_t self) {
        const Matrix& dy = t.g(self);
        if (t.needs(a)) {
            Matrix& da = t.g(a.id);
            for (std::size_t i = 0; i < dy.size(); ++i) da.data[i] += dy.data[i];
        }
        if (t.needs(bias)) {
            Matrix& db = t.g(bias.id);
            for (std::size_t i = 0; i < dy.rows; ++i)
                for (std::size_t j = 0; j < dy.cols; ++j) db(0, j) += dy(i, j);
        }
    });
}

Var Tape::relu(Var a) {
    Matrix out = value(a);
    for (double& x : out.data) x = x > 0.0 ? x : 0.0;
    return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
        const Matrix& dy = t.g(self);
        const Matrix& av = t.value(a);
        Matrix& da = t.g(a.id);
        for (std::size_t i = 0; i < dy.size(); ++i)
            if (av.data[i] > 0.0) da.data[i] += dy.data[i];
    });
}

Var Tape::hadamard_constant(Var a, Matrix mask) {
    require(mask.same_shape(value(a)), ErrorKind::shape, "mask shape differs");
    Matrix out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
    return push(std::move(out), needs(a), [a, mask = std::move(mask)](Tape& t, std::size_t self) {
        const Matrix& dy = t.g(self);
        Matrix& da = t.g(a.id);
        for (std::size_t i = 0; i < dy.size(); ++i) da.data[i] += mask.data[i] * dy.data[i];
    });
}

Var Tape::axpby(double alpha, Var x, double beta, Var y) {
    const Matrix& xv = value(x);
    const Matrix& yv = value(y);
    require(xv.same_shape(yv), ErrorKind::shape, "axpby shape mismatch");
    Matrix out(xv.rows, xv.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = alpha * xv.data[i] + beta * yv.data[i];
    return push(std::move(out), needs(x) || needs(y), [alpha, x, beta, y](Tape& t, std::size_t self) {
        const Matrix& dy = t.g(self);
        if (t.needs(x)) {
            Matrix& dx = t.g(x.id);
            for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] += alpha * dy.data[i];
        }
        if (t.needs(y)) {
            Matrix& dyy = t.g(y.id);
            for (std::size_t i = 0; i < dy.size(); ++i) dyy.data[i] += beta * dy.data[i];
        }
    });
}

Var Tape::combine(Var coeffs, std::span<const Var> terms) {
    const Matrix& c = value(coeffs);
    require(!terms.empty(), ErrorKind::shape, "combine needs at least one term");
    require(c.rows == 1 && c.cols == terms.size(), ErrorKind::shape, "coefficient count differs from term count");
    const Matrix& first = value(terms[0]);
    Matrix out(first.rows, first.cols);
    bool grad = needs(coeffs);
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const Matrix& term = value(terms[k]);
        require(term.same_shape(first), ErrorKind::shape, "combine term shape mismatch");
        const double ck = c(0, k);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += ck * term.data[i];
        grad = grad || needs(terms[k]);
    }
    std::vector<Var> inputs(terms.begin(), terms.end());
    return push(std::move(out), grad, [coeffs, inputs = std::move(inputs)](Tape& t, std::size_t self) {
        const Matrix& dy = t.g(self);
        const Matrix& c = t.value(coeffs);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const Matrix& term = t.value(inputs[k]);
            if (t.needs(coeffs)) {
                double s = 0.0;
                for (std::size_t i = 0; i < dy.size(); ++i) s += dy.data[i] * term.data[i];
                t.g(coeffs.id)(0, k) += s;
            }
            if (t.needs(inputs[k])) {
                Matrix& dt = t.g(inputs[k].id);
                const double ck = c(0, k);
                for (std::size_t i = 0; i < dy.size(); ++i) dt.data[i] += ck * dy.data[i];
            }
        }
    });
}

Var Tape::normalized_operator(const Graph& graph, OperatorKind kind, std::vector<Edge> slots, Var values) {
    std::vector<double> p;
    if (values.valid()) {
        const Matrix& pv = value(values);
        require(pv.rows == 1 && pv.cols == slots.size(), ErrorKind::shape, "one value per slot required");
        p = pv.data;
    } else {
        require(slots.empty(), ErrorKind::shape, "slots given without values");
    }
    auto traced = std::make_shared<const detail::TracedOperator>(detail::build_traced(graph, kind, slots, p));
    Matrix entry_values(1, traced->op.entries.size());
    for (std::size_t e = 0; e < traced->op.entries.size(); ++e) entry_values(0, e) = traced->op.entries[e].value;

    Var out = push(std::move(entry_values), needs(values), [values](Tape& t, std::size_t self) {
        const detail::TracedOperator& tr = *t.nodes_[self].op;
        const Matrix& gval = t.g(self);
        const auto& entries = tr.op.entries;
        const auto& deg = tr.op.degrees;
        std::vector<double> gdeg(deg.size(), 0.0);
        // val_rc = s * w / sqrt(d_r d_c)   => d val / d d_r = -val / (2 d_r)
        // diagonal val_ii = 1 / d_i        => d val / d d_i = -val / d_i
        for (std::size_t e = 0; e < entries.size(); ++e) {
            const OperatorEntry& en = entries[e];
            const double gv = gval(0, e);
            if (gv == 0.0 || en.value == 0.0) continue;
            if (en.row == en.col) {
                gdeg[en.row] -= gv * en.value / deg[en.row];
            } else {
                gdeg[en.row] -= 0.5 * gv * en.value / deg[en.row];
                gdeg[en.col] -= 0.5 * gv * en.value / deg[en.col];
            }
        }
        Matrix& gp = t.g(values.id);
        for (std::size_t e = 0; e < entries.size(); ++e) {
            if (tr.slot[e] < 0) continue;
            const OperatorEntry& en = entries[e];
            const double scale = deg[en.row] * deg[en.col];
            const double direct = scale > 0.0 ? tr.sign * gval(0, e) / std::sqrt(scale) : 0.0;
            const double gw = direct + gdeg[en.row] + gdeg[en.col];
            gp(0, static_cast<std::size_t>(tr.slot[e])) += gw * tr.flip_direction[e];
        }
    });
    nodes_[out.id].op = std::move(traced);
    return out;
}

Var Tape::propagate(Var op, Var h) {
    const Node& opnode = nodes_.at(op.id);
    require(opnode.op != nullptr, ErrorKind::internal, "propagate needs an operator node");
    const NormalizedOperator& o = opnode.op->op;
    Matrix out = o.apply(value(h));
    return push(std::move(out), needs(op) || needs(h), [op, h](Tape& t, std::size_t self) {
        const NormalizedOperator& o = t.nodes_[op.id].op->op;
        const Matrix& dy = t.g(self);
        if (t.needs(h)) detail::accumulate_symmetric(o, dy, t.g(h.id));
        if (t.needs(op)) {
            const Matrix& hv = t.value(h);
            Matrix& gop = t.g(op.id);
            const std::size_t c = hv.cols;
            for (std::size_t e = 0; e < o.entries.size(); ++e) {
                const OperatorEntry& en = o.entries[e];
                const double* dr = dy.data.data() + static_cast<std::size_t>(en.row) * c;
                const double* hr = hv.data.data() + static_cast<std::size_t>(en.row) * c;
                double s = 0.0;
                if (en.row == en.col) {
                    for (std::size_t k = 0; k < c; ++k) s += dr[k] * hr[k];
                } else {
                    const double* dc = dy.data.data() + static_cast<std::size_t>(en.col) * c;
                    const double* hc = hv.data.data() + static_cast<std::size_t>(en.col) * c;
                    for (std::size_t k = 0; k < c; ++k) s += dr[k] * hc[k] + dc[k] * hr[k];
                }
                gop(0, e) += s;
            }
        }
    });
}

namespace {

void check_loss_inputs(const Matrix& z, std::span<const int> targets, std::span<const int> index) {
    require(!index.empty(), ErrorKind::shape, "loss over an empty index set");
    require(targets.size() == z.rows, ErrorKind::shape, "one target per logit row required");
    for (int i : index) {
        require(i >= 0 && static_cast<std::size_t>(i) < z.rows, ErrorKind::shape, "loss index out of range");
        require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < z.cols, ErrorKind::shape,
                "loss index " + std::to_string(i) + " has no valid label");
    }
}

} // namespace

Var Tape::cross_entropy(Var logits, std::span<const int> targets, std::span<const int> index) {
    const Matrix& z = value(logits);
    check_loss_inputs(z, targets, index);
    const double inv = 1.0 / static_cast<double>(index.size());
    Matrix dlogits(z.rows, z.cols);
    double total = 0.0;
    for (int i : index) {
        const auto row = z.row(i);
        const double zmax = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double x : row) sum += std::exp(x - zmax);
        const double log_norm = zmax + std::log(sum);
        total += log_norm - row[targets[i]];
        for (std::size_t k = 0; k < z.cols; ++k) dlogits(i, k) += inv * std::exp(row[k] - log_norm);
        dlogits(i, targets[i]) -= inv;
    }
    Matrix out(1, 1, total * inv);
    return push(std::move(out), needs(logits), [logits, dlogits = std::move(dlogits)](Tape& t, std::size_t self) {
        const double s = t.g(self)(0, 0);
        Matrix& dz = t.g(logits.id);
        for (std::size_t i = 0; i < dz.size(); ++i) dz.data[i] += s * dlogits.data[i];
    });
}

Var Tape::tanh_margin(Var logits, std::span<const int> targets, std::span<const int> index) {
    const Matrix& z = value(logits);
    require(z.cols >= 2, ErrorKind::shape, "tanh margin needs at least two classes");
    check_loss_inputs(z, targets, index);
    const double inv = 1.0 / static_cast<double>(index.size());
    Matrix dlogits(z.rows, z.cols);
    double total = 0.0;
    for (int i : index) {
        const int y = targets[i];
        std::size_t best = y == 0 ? 1 : 0;
        for (std::size_t k = 0; k < z.cols; ++k)
            if (static_cast<int>(k) != y && z(i, k) > z(i, best)) best = k;
        const double th = std::tanh(z(i, best) - z(i, y));
        total += th;
        const double slope = inv * (1.0 - th * th);
        dlogits(i, best) += slope;
        dlogits(i, y) -= slope;
    }
    Matrix out(1, 1, total * inv);
    return push(std::move(out), needs(logits), [logits, dlogits = std::move(dlogits)](Tape& t, std::size_t self) {
        const double s = t.g(self)(0, 0);
        Matrix& dz = t.g(logits.id);
        for (std::size_t i = 0; i < dz.size(); ++i) dz.data[i] += s * dlogits.data[i];
    });
}

void Tape::backward(Var root) {
    require(root.valid() && root.id < nodes_.size(), ErrorKind::internal, "backward from an unknown node");
    const Matrix& rv = nodes_[root.id].value;
    require(rv.rows == 1 && rv.cols == 1, ErrorKind::shape, "backward needs a scalar root");
    for (std::size_t i = 0; i <= root.id; ++i) {
        Node& n = nodes_[i];
        if (n.requires_grad) n.grad = Matrix(n.value.rows, n.value.cols);
    }
    for (std::size_t i = root.id + 1; i < nodes_.size(); ++i) nodes_[i].grad = Matrix();
    last_root_ = root.id;
    if (!nodes_[root.id].requires_grad) return;
    nodes_[root.id].grad(0, 0) = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backward) n.backward(*this, i);
    }
}

} // namespace advgraph
