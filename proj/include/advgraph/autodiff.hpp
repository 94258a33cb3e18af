#pragma once

#include "advgraph/graph.hpp"
#include "advgraph/matrix.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace advgraph {

/// Handle to a value recorded on a Tape.
struct Var {
    static constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::size_t id = none;

    bool valid() const noexcept { return id != none; }
};

/// Minimal reverse-mode tape over dense matrices plus one sparse primitive:
/// a normalized graph operator whose entries depend on relaxed flip values.
/// Nodes are appended in evaluation order, so the reverse sweep is a plain
/// backwards walk over the node list.
class Tape {
public:
    Var constant(Matrix value) { return push(std::move(value), false, {}); }
    Var parameter(Matrix value) { return push(std::move(value), true, {}); }

    Var matmul(Var a, Var b);
    Var add_bias(Var a, Var bias);  ///< bias is 1 x cols, broadcast over rows
    Var relu(Var a);
    Var hadamard_constant(Var a, Matrix mask);
    Var axpby(double alpha, Var x, double beta, Var y);
    /// Σ_k coeffs(0,k) * terms[k]; coeffs is 1 x terms.size().
    Var combine(Var coeffs, std::span<const Var> terms);

    /// Normalized operator over the graph with `slots` carrying relaxed flip
    /// values `values` (1 x slots.size(), may be Var{} for an unperturbed graph).
    Var normalized_operator(const Graph& graph, OperatorKind kind, std::vector<Edge> slots, Var values);
    Var propagate(Var op, Var h);

    /// Mean softmax cross-entropy over `index`; targets[i] is the class of node i.
    Var cross_entropy(Var logits, std::span<const int> targets, std::span<const int> index);
    /// Mean of tanh(best other logit - target logit) over `index`.
    Var tanh_margin(Var logits, std::span<const int> targets, std::span<const int> index);

    /// Reverse sweep from a 1 x 1 node. Gradients of earlier sweeps are discarded.
    void backward(Var root);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    const Matrix& grad(Var v) const;
    const NormalizedOperator& operator_value(Var op) const;
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    using Backward = std::function<void(Tape&, std::size_t)>;

    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
        std::shared_ptr<const detail::TracedOperator> op;
    };

    Var push(Matrix value, bool requires_grad, Backward backward);
    bool needs(Var v) const { return v.valid() && nodes_[v.id].requires_grad; }
    Matrix& g(std::size_t id) { return nodes_[id].grad; }
    Node& node(Var v) { return nodes_.at(v.id); }

    std::vector<Node> nodes_;
    std::size_t last_root_ = Var::none;
};

} // namespace advgraph
