#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advgraph/error.hpp"
#include "advgraph/model.hpp"
#include "advgraph/synth.hpp"
#include "gradcheck.hpp"

#include <cmath>
#include <numeric>

using namespace advgraph;
using namespace advgraph::testing;

namespace {

DiffusionModel small_model(Basis basis, int in_dim, int classes, int K, std::uint64_t seed = 1) {
    ModelSpec spec;
    spec.basis = basis;
    spec.K = K;
    spec.hidden = 4;
    spec.in_dim = in_dim;
    spec.num_classes = classes;
    spec.dropout = 0.0;
    return init_params(spec, seed);
}

Matrix mlp_output(const DiffusionModel& model, const Graph& g) {
    DiffusionModel mlp = model;
    mlp.spec.basis = Basis::none;
    mlp.gamma = {1.0};
    return predict_logits(mlp, g);
}

double scalar(ForwardPass& pass, Var v) { return pass.tape.value(v)(0, 0); }

ForwardPass logits_pass(const Matrix& z) {
    ForwardPass pass;
    pass.logits = pass.tape.parameter(z);
    return pass;
}

} // namespace

TEST_CASE("gamma = e0 reproduces the MLP bit for bit") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Graph g = random_graph(12, 3, 3, 0.3, rng);
        DiffusionModel model = small_model(Basis::monomial, 3, 3, 5, trial);
        std::fill(model.gamma.begin(), model.gamma.end(), 0.0);
        model.gamma[0] = 1.0;
        CHECK(predict_logits(model, g) == mlp_output(model, g));
    }
}

TEST_CASE("gamma = e1 gives one propagation step") {
    const Graph g = karate_club();
    DiffusionModel model = small_model(Basis::monomial, 34, 2, 3);
    std::fill(model.gamma.begin(), model.gamma.end(), 0.0);
    model.gamma[1] = 1.0;
    const Matrix expected = build_normalized(g, OperatorKind::adjacency_loops).apply(mlp_output(model, g));
    CHECK(predict_logits(model, g) == expected);
}

TEST_CASE("chebyshev basis for K = 2 is I, L, 2L^2 - I") {
    const Graph g = karate_club();
    const DiffusionModel model = small_model(Basis::chebyshev, 34, 2, 2);
    const auto basis = basis_matrices(model, g);
    REQUIRE(basis.size() == 3);
    const Matrix L = build_normalized(g, OperatorKind::shifted_laplacian).to_dense();
    const Matrix L2 = matmul(L, L);
    CHECK(basis[0] == Matrix::identity(34));
    CHECK(basis[1] == L);
    double worst = 0.0;
    for (std::size_t i = 0; i < L2.size(); ++i) {
        const double expected = 2.0 * L2.data[i] - Matrix::identity(34).data[i];
        worst = std::max(worst, std::abs(basis[2].data[i] - expected));
    }
    CHECK(worst < 1e-14);
}

TEST_CASE("chebyshev forward matches its expansion in powers of L") {
    // T_k expanded into monomial coefficients with the recurrence on
    // coefficient vectors, then summed against dense powers of L.
    Rng rng(7);
    for (int K = 0; K <= 4; ++K) {
        const Graph g = random_graph(9, 3, 2, 0.4, rng);
        DiffusionModel model = small_model(Basis::chebyshev, 3, 2, K, 10 + K);
        for (double& x : model.gamma) x = rng.normal();
        std::vector<std::vector<double>> tk{{1.0}, {0.0, 1.0}};
        while (static_cast<int>(tk.size()) <= K) {
            const auto& a = tk[tk.size() - 1];
            const auto& b = tk[tk.size() - 2];
            std::vector<double> next(a.size() + 1, 0.0);
            for (std::size_t i = 0; i < a.size(); ++i) next[i + 1] += 2.0 * a[i];
            for (std::size_t i = 0; i < b.size(); ++i) next[i] -= b[i];
            tk.push_back(next);
        }
        const std::vector<double> c = effective_coefficients(model);
        std::vector<double> power(static_cast<std::size_t>(K) + 1, 0.0);
        for (int k = 0; k <= K; ++k)
            for (std::size_t j = 0; j < tk[k].size(); ++j) power[j] += c[k] * tk[k][j];

        const Matrix L = build_normalized(g, OperatorKind::shifted_laplacian).to_dense();
        const Matrix H = mlp_output(model, g);
        Matrix acc(H.rows, H.cols);
        Matrix term = H;
        for (int j = 0; j <= K; ++j) {
            for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += power[j] * term.data[i];
            term = matmul(L, term);
        }
        const Matrix logits = predict_logits(model, g);
        for (std::size_t i = 0; i < acc.size(); ++i) CHECK(std::abs(acc.data[i] - logits.data[i]) < 1e-10);
    }
}

TEST_CASE("chebyshev weights interpolate: constant gamma is the identity filter") {
    const std::vector<double> ones(6, 1.0);
    const auto c = chebyshev_coefficients(ones, ChebNormalization::interpolation);
    CHECK(c[0] == doctest::Approx(1.0));
    for (std::size_t k = 1; k < c.size(); ++k) CHECK(std::abs(c[k]) < 1e-12);
    const auto printed = chebyshev_coefficients(ones, ChebNormalization::printed);
    CHECK(printed[0] == doctest::Approx(2.0 / 4.0 * 6.0));
    CHECK_THROWS_AS(chebyshev_weight_matrix(1, ChebNormalization::printed), Error);
}

TEST_CASE("appnp coefficients are personalized pagerank") {
    const auto gamma = ppr_coefficients(0.1, 10);
    CHECK(gamma[0] == doctest::Approx(0.1));
    CHECK(gamma[3] == doctest::Approx(0.1 * std::pow(0.9, 3)));
    CHECK(gamma[10] == doctest::Approx(std::pow(0.9, 10)));
    CHECK(std::accumulate(gamma.begin(), gamma.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("cross entropy examples") {
    {
        ForwardPass p = logits_pass(Matrix(3, 2, 0.7));
        CHECK(scalar(p, loss_cross_entropy(p, std::vector<int>{0, 1, 0}, std::vector<int>{0, 1, 2})) ==
              doctest::Approx(std::log(2.0)));
    }
    {
        Matrix z(2, 2);
        z(0, 0) = 1000.0;
        z(1, 1) = 1000.0;
        ForwardPass p = logits_pass(z);
        CHECK(scalar(p, loss_cross_entropy(p, std::vector<int>{0, 1}, std::vector<int>{0, 1})) < 1e-12);
    }
    {
        Matrix z(2, 2);
        z(0, 0) = 1.0;
        z(1, 1) = 1.0;
        ForwardPass p = logits_pass(z);
        const double e = std::exp(1.0);
        CHECK(scalar(p, loss_cross_entropy(p, std::vector<int>{0, 1}, std::vector<int>{0, 1})) ==
              doctest::Approx(-std::log(e / (e + 1.0))));
    }
    ForwardPass p = logits_pass(Matrix(2, 2));
    CHECK_THROWS_AS(loss_cross_entropy(p, std::vector<int>{0, 1}, std::vector<int>{}), Error);
    CHECK_THROWS_AS(loss_cross_entropy(p, std::vector<int>{0, -1}, std::vector<int>{1}), Error);
}

TEST_CASE("tanh margin examples") {
    Matrix z(3, 3);
    z(0, 0) = 1e3;             // correct by a huge margin
    z(2, 1) = 1.0;             // wrong class ahead by exactly 1
    ForwardPass p = logits_pass(z);
    const std::vector<int> y{0, 0, 0};
    CHECK(scalar(p, loss_tanh_margin(p, y, std::vector<int>{0})) == doctest::Approx(-1.0));
    CHECK(scalar(p, loss_tanh_margin(p, y, std::vector<int>{1})) == 0.0);
    CHECK(scalar(p, loss_tanh_margin(p, y, std::vector<int>{2})) == doctest::Approx(0.761594).epsilon(1e-6));
    ForwardPass one = logits_pass(Matrix(2, 1));
    CHECK_THROWS_AS(loss_tanh_margin(one, std::vector<int>{0, 0}, std::vector<int>{0}), Error);
}

TEST_CASE("gamma gradient of a zero-weight MLP matches the analytic formula") {
    // With zero weights H is the broadcast bias; dℓ/dγ_k = Σ_i <dℓ/dz_i, (B_k H)_i>.
    Rng rng(3);
    const Graph g = random_graph(3, 2, 2, 1.0, rng);
    DiffusionModel model = small_model(Basis::monomial, 2, 2, 3);
    for (auto& layer : model.layers) std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
    model.layers.back().bias = {0.3, -0.4};
    model.gamma = {0.5, -0.2, 0.1, 0.7};
    const std::vector<int> index{0, 1, 2};

    ForwardPass pass = forward(model, g, nullptr, Mode::eval);
    const Var loss = loss_cross_entropy(pass, g.labels, index);
    const ParamGrads grads = backward_params(pass, loss);

    const Matrix& z = pass.logit_values();
    Matrix dz(z.rows, z.cols);
    for (int i : index) {
        const double norm = std::exp(z(i, 0)) + std::exp(z(i, 1));
        for (int k = 0; k < 2; ++k) dz(i, k) = (std::exp(z(i, k)) / norm - (g.labels[i] == k)) / 3.0;
    }
    const Matrix H = mlp_output(model, g);
    const auto basis = basis_matrices(model, g);
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const Matrix bh = matmul(basis[k], H);
        double expected = 0.0;
        for (std::size_t i = 0; i < bh.size(); ++i) expected += dz.data[i] * bh.data[i];
        CHECK(grads.gamma[k] == doctest::Approx(expected).epsilon(1e-12));
        auto f = [&] { return loss_value(model, g, nullptr, Mode::eval, 0, LossKind::cross_entropy, index); };
        CHECK(gradcheck_error(grads.gamma[k], central_difference(f, model.gamma[k], 1e-6)) < 1e-6);
    }
}

TEST_CASE("unused class column receives zero gradient") {
    Rng rng(4);
    const Graph g = random_graph(6, 2, 2, 0.5, rng);
    DiffusionModel model = small_model(Basis::monomial, 2, 3, 2);
    model.layers.back().bias = {0.0, 0.0, -100.0};  // class 2 is never the runner-up
    ForwardPass pass = forward(model, g, nullptr, Mode::eval);
    const ParamGrads grads = backward_params(pass, loss_tanh_margin(pass, g.labels, std::vector<int>{0, 1, 2, 3}));
    CHECK(grads.biases.back()[2] == 0.0);
    for (std::size_t i = 0; i < grads.weights.back().rows; ++i) CHECK(grads.weights.back()(i, 2) == 0.0);
}

TEST_CASE("doubling the loss doubles every gradient") {
    Rng rng(6);
    GradInstance inst = random_instance(rng);
    inst.model.spec.basis = Basis::monomial;
    auto run = [&](double factor) {
        Rng dropout(inst.dropout_seed);
        ForwardPass pass = forward(inst.model, inst.graph, &inst.perturbation, inst.mode, &dropout);
        Var loss = loss_cross_entropy(pass, inst.graph.labels, inst.index);
        if (factor != 1.0) loss = pass.tape.axpby(factor, loss, 0.0, loss);
        auto params = flatten(backward_params(pass, loss));
        auto edges = backward_edges(pass, loss);
        params.insert(params.end(), edges.begin(), edges.end());
        return params;
    };
    const auto once = run(1.0);
    const auto twice = run(2.0);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == 2.0 * once[i]);
}

TEST_CASE("MLP-equivalent model has exactly zero edge gradients") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        GradInstance inst = random_instance(rng);
        DiffusionModel model = small_model(Basis::monomial, static_cast<int>(inst.graph.features.cols),
                                           inst.graph.num_classes, 4, trial);
        std::fill(model.gamma.begin(), model.gamma.end(), 0.0);
        model.gamma[0] = 1.0;
        ForwardPass pass = forward(model, inst.graph, &inst.perturbation, Mode::eval);
        const auto grads = backward_edges(pass, loss_tanh_margin(pass, inst.graph.labels, inst.index));
        for (double gval : grads) CHECK(gval == 0.0);
    }
}

TEST_CASE("gradients agree with central finite differences") {
    Rng rng(2024);
    double worst_param = 0.0, worst_edge = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        GradInstance inst = random_instance(rng);
        const GradcheckResult r = gradcheck(inst, rng);
        worst_param = std::max(worst_param, r.worst_param);
        worst_edge = std::max(worst_edge, r.worst_edge);
    }
    MESSAGE("worst relative errors: params " << worst_param << ", edges " << worst_edge);
    CHECK(worst_param <= 1e-4);
    CHECK(worst_edge <= 1e-4);
}

TEST_CASE("backward preconditions") {
    Rng rng(9);
    GradInstance inst = random_instance(rng);
    ForwardPass pass = forward(inst.model, inst.graph, nullptr, Mode::eval);
    const Var loss = loss_cross_entropy(pass, inst.graph.labels, inst.index);
    CHECK_THROWS_AS(backward_edges(pass, loss), Error);
    CHECK_THROWS_AS(pass.tape.backward(pass.logits), Error);

    RelaxedPerturbation dup = inst.perturbation;
    dup.slots.push_back(dup.slots.front());
    dup.values.push_back(0.5);
    CHECK_THROWS_AS(forward(inst.model, inst.graph, &dup, Mode::eval), Error);
}

TEST_CASE("frozen bases report no gamma gradient") {
    Rng rng(10);
    const Graph g = random_graph(7, 2, 2, 0.5, rng);
    for (Basis basis : {Basis::appnp, Basis::gcn, Basis::none}) {
        const DiffusionModel model = small_model(basis, 2, 2, 3);
        ForwardPass pass = forward(model, g, nullptr, Mode::eval);
        const ParamGrads grads = backward_params(pass, loss_cross_entropy(pass, g.labels, std::vector<int>{0, 1}));
        CHECK(grads.gamma.empty());
    }
}

TEST_CASE("relabeling nodes permutes the logits") {
    Rng rng(12);
    for (Basis basis : {Basis::monomial, Basis::chebyshev, Basis::gcn, Basis::appnp}) {
        const Graph g = random_graph(10, 3, 2, 0.4, rng);
        std::vector<int> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const Graph h = induced_subgraph(g, perm);  // node i of h is node perm[i] of g
        const DiffusionModel model = small_model(basis, 3, 2, 4);
        const Matrix a = predict_logits(model, g);
        const Matrix b = predict_logits(model, h);
        for (int i = 0; i < 10; ++i)
            for (int k = 0; k < 2; ++k) CHECK(std::abs(b(i, k) - a(perm[i], k)) <= 1e-12);
    }
}

TEST_CASE("adam closed-form steps") {
    AdamMoments m;
    std::vector<double> x{0.5, -1.0};
    adam_update(x, std::vector<double>{0.0, 0.0}, m, 1, 0.1, 0.0);
    CHECK(x == std::vector<double>{0.5, -1.0});

    AdamMoments scalar_m;
    std::vector<double> w{0.0};
    adam_update(w, std::vector<double>{1.0}, scalar_m, 1, 0.1, 0.0);
    CHECK(w[0] == doctest::Approx(-0.1).epsilon(1e-7));

    AdamMoments decay_m;
    std::vector<double> p{1.0};
    double previous = p[0];
    for (int step = 1; step <= 50; ++step) {
        adam_update(p, std::vector<double>{0.0}, decay_m, step, 0.01, 0.1);
        CHECK(p[0] < previous);
        CHECK(p[0] > 0.0);
        previous = p[0];
    }
}

TEST_CASE("adam_step leaves biases undecayed and frozen gamma untouched") {
    DiffusionModel model = small_model(Basis::appnp, 2, 2, 3);
    model.layers[0].bias = {1.0, 1.0, 1.0, 1.0};
    const auto gamma = model.gamma;
    ParamGrads zero;
    for (const auto& layer : model.layers) {
        zero.weights.emplace_back(layer.weight.rows, layer.weight.cols);
        zero.biases.emplace_back(layer.bias.size(), 0.0);
    }
    AdamState state;
    adam_step(model, zero, state, 0.01, 0.1);
    CHECK(model.layers[0].bias == std::vector<double>{1.0, 1.0, 1.0, 1.0});
    CHECK(model.gamma == gamma);
}

TEST_CASE("init is deterministic per seed") {
    const DiffusionModel a = small_model(Basis::monomial, 5, 3, 4, 77);
    const DiffusionModel b = small_model(Basis::monomial, 5, 3, 4, 77);
    const DiffusionModel c = small_model(Basis::monomial, 5, 3, 4, 78);
    CHECK(a.layers == b.layers);
    CHECK(a.gamma == b.gamma);
    CHECK_FALSE(a.layers == c.layers);
    double l1 = 0.0;
    for (double x : a.gamma) l1 += std::abs(x);
    CHECK(l1 == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = scratch_dir("checkpoint");
    Rng rng(13);
    for (Basis basis : {Basis::monomial, Basis::chebyshev, Basis::appnp, Basis::gcn, Basis::none}) {
        DiffusionModel model = small_model(basis, 3, 2, 4, rng());
        for (auto& layer : model.layers)
            for (double& w : layer.weight.data) w = rng.normal() * 1e-3 + 1.0 / 3.0;
        save_checkpoint(model, dir / "model.json");
        const DiffusionModel loaded = load_checkpoint(dir / "model.json");
        CHECK(loaded.layers == model.layers);
        CHECK(loaded.gamma == model.gamma);
        CHECK(loaded.spec.basis == model.spec.basis);
        CHECK(loaded.spec.K == model.spec.K);
        CHECK(loaded.seed == model.seed);
    }
    CHECK_THROWS_AS(checkpoint_from_json("{\"basis\": \"monomial\"}"), Error);
}
