#pragma once

// Central finite-difference oracle for model parameters and edge-flip values.
// It only calls forward() and reads the scalar loss, so it is independent of
// the reverse sweep it checks.

#include "advgraph/model.hpp"
#include "test_support.hpp"

#include <functional>
#include <vector>

namespace advgraph::testing {

enum class LossKind { cross_entropy, tanh_margin };

inline double loss_value(const DiffusionModel& model, const Graph& g, const RelaxedPerturbation* p, Mode mode,
                         std::uint64_t dropout_seed, LossKind kind, const std::vector<int>& index) {
    Rng rng(dropout_seed);
    ForwardPass pass = forward(model, g, p, mode, &rng);
    const Var loss = kind == LossKind::cross_entropy ? loss_cross_entropy(pass, g.labels, index)
                                                     : loss_tanh_margin(pass, g.labels, index);
    return pass.tape.value(loss)(0, 0);
}

/// Pointers to every trainable scalar, in ParamGrads order (weights, biases, gamma).
inline std::vector<double*> parameter_slots(DiffusionModel& model) {
    std::vector<double*> out;
    for (auto& layer : model.layers)
        for (double& w : layer.weight.data) out.push_back(&w);
    for (auto& layer : model.layers)
        for (double& b : layer.bias) out.push_back(&b);
    if (model.gamma_trainable())
        for (double& g : model.gamma) out.push_back(&g);
    return out;
}

inline std::vector<double> flatten(const ParamGrads& grads) {
    std::vector<double> out;
    for (const auto& w : grads.weights) out.insert(out.end(), w.data.begin(), w.data.end());
    for (const auto& b : grads.biases) out.insert(out.end(), b.begin(), b.end());
    out.insert(out.end(), grads.gamma.begin(), grads.gamma.end());
    return out;
}

inline double central_difference(const std::function<double()>& f, double& x, double step) {
    const double saved = x;
    x = saved + step;
    const double up = f();
    x = saved - step;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * step);
}

/// Relative error with a 1e-5 denominator floor: below that magnitude the
/// central difference at step 1e-6 is dominated by round-off (~1e-10).
inline double gradcheck_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

struct GradInstance {
    DiffusionModel model;
    Graph graph;
    RelaxedPerturbation perturbation;
    std::vector<int> index;
    Mode mode = Mode::eval;
    LossKind loss = LossKind::cross_entropy;
    std::uint64_t dropout_seed = 0;
};

/// Small random model/graph/perturbation (n <= 10, d <= 4, c <= 3). Flip
/// values are kept inside (0.1, 0.9) so every weighted degree is positive.
inline GradInstance random_instance(Rng& rng) {
    static constexpr Basis kBases[] = {Basis::monomial, Basis::chebyshev, Basis::appnp, Basis::gcn, Basis::none};
    GradInstance inst;
    const int n = 3 + static_cast<int>(rng.below(8));
    const int d = 1 + static_cast<int>(rng.below(4));
    const int c = 2 + static_cast<int>(rng.below(2));
    inst.graph = random_graph(n, d, c, 0.35, rng);

    ModelSpec spec;
    spec.basis = kBases[rng.below(5)];
    spec.K = 1 + static_cast<int>(rng.below(4));
    spec.hidden = 2 + static_cast<int>(rng.below(4));
    spec.mlp_layers = 1 + static_cast<int>(rng.below(2));
    spec.in_dim = d;
    spec.num_classes = c;
    spec.alpha = 0.1 + 0.3 * rng.uniform();
    inst.mode = rng.below(2) ? Mode::train : Mode::eval;
    spec.dropout = inst.mode == Mode::train ? 0.3 : 0.0;
    inst.model = init_params(spec, rng());
    for (auto& layer : inst.model.layers)
        for (double& b : layer.bias) b = 0.5 * rng.normal();
    if (inst.model.gamma_trainable())
        for (double& g : inst.model.gamma) g = rng.normal();

    inst.perturbation.n = n;
    for (std::int64_t s = 0; s < slot_count(n); ++s)
        if (rng.uniform() < 0.5) {
            inst.perturbation.slots.push_back(slot_from_index(n, s));
            inst.perturbation.values.push_back(0.1 + 0.8 * rng.uniform());
        }
    if (inst.perturbation.slots.empty()) {
        inst.perturbation.slots.push_back({0, 1});
        inst.perturbation.values.push_back(0.5);
    }
    for (int i = 0; i < n; ++i)
        if (rng.uniform() < 0.7) inst.index.push_back(i);
    if (inst.index.empty()) inst.index.push_back(0);
    inst.loss = rng.below(2) ? LossKind::tanh_margin : LossKind::cross_entropy;
    inst.dropout_seed = rng();
    return inst;
}

struct GradcheckResult {
    double worst_param = 0.0;
    double worst_edge = 0.0;
};

/// Compares backward_params / backward_edges with central differences at
/// step 1e-6 on every parameter and on up to `edge_samples` random slots.
inline GradcheckResult gradcheck(GradInstance& inst, Rng& rng, std::size_t edge_samples = 5) {
    Rng dropout(inst.dropout_seed);
    ForwardPass pass = forward(inst.model, inst.graph, &inst.perturbation, inst.mode, &dropout);
    const Var loss = inst.loss == LossKind::cross_entropy ? loss_cross_entropy(pass, inst.graph.labels, inst.index)
                                                          : loss_tanh_margin(pass, inst.graph.labels, inst.index);
    const std::vector<double> analytic = flatten(backward_params(pass, loss));
    const std::vector<double> edge = backward_edges(pass, loss);

    auto f = [&] {
        return loss_value(inst.model, inst.graph, &inst.perturbation, inst.mode, inst.dropout_seed, inst.loss,
                          inst.index);
    };
    GradcheckResult result;
    const std::vector<double*> params = parameter_slots(inst.model);
    for (std::size_t i = 0; i < params.size(); ++i)
        result.worst_param =
            std::max(result.worst_param, gradcheck_error(analytic[i], central_difference(f, *params[i], 1e-6)));
    for (std::size_t s = 0; s < edge_samples; ++s) {
        const std::size_t k = rng.below(inst.perturbation.values.size());
        result.worst_edge = std::max(
            result.worst_edge, gradcheck_error(edge[k], central_difference(f, inst.perturbation.values[k], 1e-6)));
    }
    return result;
}

} // namespace advgraph::testing
