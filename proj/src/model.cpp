#include "advgraph/model.hpp"

#include "advgraph/error.hpp"
#include "text_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace advgraph {

std::string to_string(Basis basis) {
    switch (basis) {
    case Basis::none: return "none";
    case Basis::monomial: return "monomial";
    case Basis::chebyshev: return "chebyshev";
    case Basis::appnp: return "appnp";
    case Basis::gcn: return "gcn";
    }
    return "unknown";
}

Basis parse_basis(const std::string& name) {
    for (Basis b : {Basis::none, Basis::monomial, Basis::chebyshev, Basis::appnp, Basis::gcn})
        if (to_string(b) == name) return b;
    if (name == "mlp") return Basis::none;
    if (name == "gprgnn") return Basis::monomial;
    if (name == "chebnetii") return Basis::chebyshev;
    fail(ErrorKind::config, "unknown basis \"" + name + "\"");
}

std::vector<double> ppr_coefficients(double alpha, int K) {
    std::vector<double> gamma(static_cast<std::size_t>(K) + 1);
    for (int l = 0; l < K; ++l) gamma[l] = alpha * std::pow(1.0 - alpha, l);
    gamma[K] = std::pow(1.0 - alpha, K);
    return gamma;
}

Matrix chebyshev_weight_matrix(int K, ChebNormalization norm) {
    require(K >= 0, ErrorKind::parameter, "negative polynomial order");
    double scale = 2.0 / (K + 1.0);
    if (norm == ChebNormalization::printed) {
        require(K >= 2, ErrorKind::parameter, "printed Chebyshev normalization 2/(K-1) needs K >= 2");
        scale = 2.0 / (K - 1.0);
    }
    Matrix w(static_cast<std::size_t>(K) + 1, static_cast<std::size_t>(K) + 1);
    for (int j = 0; j <= K; ++j) {
        // x_j = cos(theta_j), so T_k(x_j) = cos(k theta_j).
        const double theta = (j + 0.5) / (K + 1.0) * std::numbers::pi;
        for (int k = 0; k <= K; ++k) w(k, j) = scale * std::cos(k * theta);
    }
    if (norm == ChebNormalization::interpolation)
        for (int j = 0; j <= K; ++j) w(0, j) *= 0.5;
    return w;
}

std::vector<double> chebyshev_coefficients(std::span<const double> gamma, ChebNormalization norm) {
    const Matrix w = chebyshev_weight_matrix(static_cast<int>(gamma.size()) - 1, norm);
    std::vector<double> c(gamma.size(), 0.0);
    for (std::size_t k = 0; k < gamma.size(); ++k)
        for (std::size_t j = 0; j < gamma.size(); ++j) c[k] += w(k, j) * gamma[j];
    return c;
}

DiffusionModel init_params(const ModelSpec& spec, std::uint64_t seed) {
    require(spec.in_dim > 0 && spec.num_classes > 0, ErrorKind::parameter, "model needs input and class dimensions");
    require(spec.K >= 0, ErrorKind::parameter, "negative polynomial order");
    require(spec.mlp_layers >= 1, ErrorKind::parameter, "at least one dense layer required");
    require(spec.dropout >= 0.0 && spec.dropout < 1.0 && spec.input_dropout >= 0.0 && spec.input_dropout < 1.0,
            ErrorKind::parameter, "dropout rate outside [0,1)");
    DiffusionModel model;
    model.spec = spec;
    model.seed = seed;
    Rng rng = Rng(seed).derive("init");

    const int layers = spec.basis == Basis::gcn ? 2 : spec.mlp_layers;
    int in = spec.in_dim;
    for (int l = 0; l < layers; ++l) {
        const int out = l + 1 == layers ? spec.num_classes : spec.hidden;
        DenseLayer layer;
        layer.weight = Matrix(static_cast<std::size_t>(in), static_cast<std::size_t>(out));
        const double limit = std::sqrt(6.0 / (in + out));
        for (double& w : layer.weight.data) w = (2.0 * rng.uniform() - 1.0) * limit;
        layer.bias.assign(static_cast<std::size_t>(out), 0.0);
        model.layers.push_back(std::move(layer));
        in = out;
    }

    switch (spec.basis) {
    case Basis::none:
        model.gamma = {1.0};
        model.spec.K = 0;
        break;
    case Basis::gcn: break;
    case Basis::appnp: model.gamma = ppr_coefficients(spec.alpha, spec.K); break;
    case Basis::chebyshev: model.gamma.assign(static_cast<std::size_t>(spec.K) + 1, 1.0); break;
    case Basis::monomial: {
        const double bound = std::sqrt(3.0 / (spec.K + 1.0));
        model.gamma.resize(static_cast<std::size_t>(spec.K) + 1);
        double total = 0.0;
        for (double& g : model.gamma) {
            g = (2.0 * rng.uniform() - 1.0) * bound;
            total += std::abs(g);
        }
        for (double& g : model.gamma) g /= total;
        break;
    }
    }
    return model;
}

std::vector<double> effective_coefficients(const DiffusionModel& model) {
    if (model.spec.basis == Basis::chebyshev) return chebyshev_coefficients(model.gamma, model.spec.cheb);
    require(model.spec.basis != Basis::gcn, ErrorKind::parameter, "GCN has no polynomial diffusion coefficients");
    return model.gamma;
}

std::vector<Matrix> basis_matrices(const DiffusionModel& model, const Graph& graph) {
    require(model.spec.basis != Basis::gcn, ErrorKind::parameter, "GCN has no polynomial basis");
    const std::size_t n = static_cast<std::size_t>(graph.n);
    std::vector<Matrix> out;
    out.push_back(Matrix::identity(n));
    if (model.spec.basis == Basis::none) return out;
    const NormalizedOperator op = build_normalized(graph, model.operator_kind());
    const int K = static_cast<int>(model.gamma.size()) - 1;
    for (int k = 1; k <= K; ++k) {
        Matrix next = op.apply(out.back());
        if (model.spec.basis == Basis::chebyshev && k >= 2) {
            const Matrix& older = out[k - 2];
            for (std::size_t i = 0; i < next.size(); ++i) next.data[i] = 2.0 * next.data[i] - older.data[i];
        }
        out.push_back(std::move(next));
    }
    return out;
}

namespace {

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    Matrix mask(rows, cols);
    const double keep = 1.0 / (1.0 - rate);
    for (double& m : mask.data) m = rng.uniform() < rate ? 0.0 : keep;
    return mask;
}

Matrix row_vector(std::span<const double> v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

} // namespace

ForwardPass forward(const DiffusionModel& model, const Graph& graph, const RelaxedPerturbation* perturbation, Mode mode,
                    Rng* dropout_rng) {
    const ModelSpec& spec = model.spec;
    require(graph.features.cols == model.layers.front().weight.rows, ErrorKind::shape,
            "feature dimension " + std::to_string(graph.features.cols) + " differs from model input " +
                std::to_string(model.layers.front().weight.rows));
    const bool train = mode == Mode::train;
    if (train && (spec.dropout > 0.0 || spec.input_dropout > 0.0))
        require(dropout_rng != nullptr, ErrorKind::internal, "train-mode dropout needs a generator");

    ForwardPass pass;
    Tape& t = pass.tape;
    pass.features = t.constant(graph.features);
    for (const DenseLayer& layer : model.layers) {
        pass.weights.push_back(t.parameter(layer.weight));
        pass.biases.push_back(t.parameter(row_vector(layer.bias)));
    }

    Var edge_values;
    std::vector<Edge> slots;
    if (perturbation != nullptr) {
        require(perturbation->n == graph.n, ErrorKind::constraint, "perturbation node count differs from graph");
        perturbation->validate();
        slots = perturbation->slots;
        edge_values = t.parameter(row_vector(perturbation->values));
        pass.edge_values = edge_values;
        pass.num_slots = slots.size();
    }

    Var h = pass.features;
    if (train && spec.input_dropout > 0.0)
        h = t.hadamard_constant(h, dropout_mask(graph.features.rows, graph.features.cols, spec.input_dropout, *dropout_rng));

    if (spec.basis == Basis::gcn) {
        const Var op = t.normalized_operator(graph, OperatorKind::adjacency_loops, std::move(slots), edge_values);
        h = t.add_bias(t.propagate(op, t.matmul(h, pass.weights[0])), pass.biases[0]);
        h = t.relu(h);
        if (train && spec.dropout > 0.0)
            h = t.hadamard_constant(h, dropout_mask(t.value(h).rows, t.value(h).cols, spec.dropout, *dropout_rng));
        pass.logits = t.add_bias(t.propagate(op, t.matmul(h, pass.weights[1])), pass.biases[1]);
        return pass;
    }

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        h = t.add_bias(t.matmul(h, pass.weights[l]), pass.biases[l]);
        if (l + 1 == model.layers.size()) break;
        h = t.relu(h);
        if (train && spec.dropout > 0.0)
            h = t.hadamard_constant(h, dropout_mask(t.value(h).rows, t.value(h).cols, spec.dropout, *dropout_rng));
    }

    if (spec.basis == Basis::none) {
        pass.logits = h;
        return pass;
    }

    Var coeffs;
    if (model.gamma_trainable()) {
        pass.gamma = t.parameter(row_vector(model.gamma));
        coeffs = pass.gamma;
        if (spec.basis == Basis::chebyshev)
            coeffs = t.matmul(pass.gamma, t.constant(transpose(chebyshev_weight_matrix(spec.K, spec.cheb))));
    } else {
        coeffs = t.constant(row_vector(model.gamma));
    }
    require(t.value(coeffs).cols == static_cast<std::size_t>(spec.K) + 1, ErrorKind::shape,
            "gamma length differs from K+1");

    const Var op = t.normalized_operator(graph, model.operator_kind(), std::move(slots), edge_values);
    std::vector<Var> terms{h};
    for (int k = 1; k <= spec.K; ++k) {
        Var next = t.propagate(op, terms.back());
        if (spec.basis == Basis::chebyshev && k >= 2) next = t.axpby(2.0, next, -1.0, terms[k - 2]);
        terms.push_back(next);
    }
    pass.logits = t.combine(coeffs, terms);
    return pass;
}

Matrix predict_logits(const DiffusionModel& model, const Graph& graph) {
    return forward(model, graph, nullptr, Mode::eval).logit_values();
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto row = logits.row(i);
        out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

Var loss_cross_entropy(ForwardPass& pass, std::span<const int> targets, std::span<const int> index) {
    return pass.tape.cross_entropy(pass.logits, targets, index);
}

Var loss_tanh_margin(ForwardPass& pass, std::span<const int> targets, std::span<const int> index) {
    return pass.tape.tanh_margin(pass.logits, targets, index);
}

void ParamGrads::scale(double s) {
    for (Matrix& w : weights)
        for (double& x : w.data) x *= s;
    for (auto& b : biases)
        for (double& x : b) x *= s;
    for (double& x : gamma) x *= s;
}

ParamGrads backward_params(ForwardPass& pass, Var loss) {
    pass.tape.backward(loss);
    ParamGrads grads;
    for (Var w : pass.weights) grads.weights.push_back(pass.tape.grad(w));
    for (Var b : pass.biases) grads.biases.push_back(pass.tape.grad(b).data);
    if (pass.gamma.valid()) grads.gamma = pass.tape.grad(pass.gamma).data;
    return grads;
}

std::vector<double> backward_edges(ForwardPass& pass, Var loss) {
    require(pass.edge_values.valid(), ErrorKind::internal, "forward pass recorded no perturbation");
    pass.tape.backward(loss);
    return pass.tape.grad(pass.edge_values).data;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& moments, std::int64_t step,
                 double lr, double weight_decay) {
    require(params.size() == grads.size(), ErrorKind::shape, "parameter/gradient size mismatch");
    if (moments.m.size() != params.size()) {
        moments.m.assign(params.size(), 0.0);
        moments.v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + weight_decay * params[i];
        moments.m[i] = kAdamBeta1 * moments.m[i] + (1.0 - kAdamBeta1) * g;
        moments.v[i] = kAdamBeta2 * moments.v[i] + (1.0 - kAdamBeta2) * g * g;
        const double mhat = moments.m[i] / c1;
        const double vhat = moments.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

void adam_step(DiffusionModel& model, const ParamGrads& grads, AdamState& state, double lr, double weight_decay) {
    require(grads.weights.size() == model.layers.size(), ErrorKind::shape, "gradient layer count mismatch");
    ++state.step;
    state.weights.resize(model.layers.size());
    state.biases.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        adam_update(model.layers[l].weight.data, grads.weights[l].data, state.weights[l], state.step, lr, weight_decay);
        adam_update(model.layers[l].bias, grads.biases[l], state.biases[l], state.step, lr, 0.0);
    }
    if (model.gamma_trainable() && !grads.gamma.empty())
        adam_update(model.gamma, grads.gamma, state.gamma, state.step, lr, weight_decay);
}

std::string checkpoint_json(const DiffusionModel& model) {
    using nlohmann::json;
    json layers = json::array();
    for (const DenseLayer& layer : model.layers) {
        json w = json::array();
        for (std::size_t i = 0; i < layer.weight.rows; ++i) {
            const auto row = layer.weight.row(i);
            w.push_back(std::vector<double>(row.begin(), row.end()));
        }
        layers.push_back({{"w", w}, {"b", layer.bias}});
    }
    const ModelSpec& s = model.spec;
    json j = {{"basis", to_string(s.basis)},
              {"K", s.K},
              {"gamma", model.gamma},
              {"layers", layers},
              {"seed", model.seed},
              {"hidden", s.hidden},
              {"mlp_layers", s.mlp_layers},
              {"in_dim", s.in_dim},
              {"num_classes", s.num_classes},
              {"alpha", s.alpha},
              {"dropout", s.dropout},
              {"input_dropout", s.input_dropout},
              {"cheb_normalization", s.cheb == ChebNormalization::printed ? "printed" : "interpolation"}};
    return j.dump();
}

DiffusionModel checkpoint_from_json(const std::string& text) {
    using nlohmann::json;
    try {
        const json j = json::parse(text);
        DiffusionModel model;
        ModelSpec& s = model.spec;
        s.basis = parse_basis(j.at("basis").get<std::string>());
        s.K = j.at("K").get<int>();
        model.gamma = j.at("gamma").get<std::vector<double>>();
        model.seed = j.at("seed").get<std::uint64_t>();
        s.hidden = j.value("hidden", s.hidden);
        s.mlp_layers = j.value("mlp_layers", s.mlp_layers);
        s.alpha = j.value("alpha", s.alpha);
        s.dropout = j.value("dropout", s.dropout);
        s.input_dropout = j.value("input_dropout", s.input_dropout);
        s.cheb = j.value("cheb_normalization", std::string("interpolation")) == "printed" ? ChebNormalization::printed
                                                                                        : ChebNormalization::interpolation;
        for (const json& layer : j.at("layers")) {
            DenseLayer d;
            const auto rows = layer.at("w").get<std::vector<std::vector<double>>>();
            require(!rows.empty(), ErrorKind::parse, "checkpoint layer without weights");
            d.weight = Matrix(rows.size(), rows.front().size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                require(rows[i].size() == d.weight.cols, ErrorKind::parse, "ragged checkpoint weight matrix");
                std::copy(rows[i].begin(), rows[i].end(), d.weight.row(i).begin());
            }
            d.bias = layer.at("b").get<std::vector<double>>();
            require(d.bias.size() == d.weight.cols, ErrorKind::parse, "checkpoint bias width mismatch");
            model.layers.push_back(std::move(d));
        }
        require(!model.layers.empty(), ErrorKind::parse, "checkpoint has no layers");
        s.in_dim = static_cast<int>(model.layers.front().weight.rows);
        s.num_classes = static_cast<int>(model.layers.back().weight.cols);
        if (s.basis != Basis::gcn)
            require(model.gamma.size() == static_cast<std::size_t>(s.K) + 1 || s.basis == Basis::none, ErrorKind::parse,
                    "checkpoint gamma length differs from K+1");
        if (s.basis == Basis::none) s.K = static_cast<int>(model.gamma.size()) - 1;
        return model;
    } catch (const json::exception& e) {
        fail(ErrorKind::parse, std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const DiffusionModel& model, const std::filesystem::path& file) {
    std::ofstream out = io::open_output(file);
    out << checkpoint_json(model) << '\n';
}

DiffusionModel load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in = io::open_input(file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

} // namespace advgraph
