#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advgraph/analysis.hpp"
#include "advgraph/error.hpp"
#include "test_support.hpp"

#include <cmath>
#include <fstream>

using namespace advgraph;
using namespace advgraph::testing;

namespace {

DiffusionModel random_model(const Graph& g, Basis basis, int K, std::uint64_t seed) {
    ModelSpec spec;
    spec.basis = basis;
    spec.K = K;
    spec.hidden = 6;
    spec.in_dim = static_cast<int>(g.features.cols);
    spec.num_classes = std::max(g.num_classes, 2);
    DiffusionModel model = init_params(spec, seed);
    Rng rng(seed ^ 0x5eed);
    for (double& c : model.gamma) c = rng.normal();
    return model;
}

DiffusionModel with_gamma(DiffusionModel model, std::vector<double> gamma) {
    model.gamma = std::move(gamma);
    return model;
}

std::vector<double> unit(int K, int k) {
    std::vector<double> e(static_cast<std::size_t>(K + 1), 0.0);
    e[static_cast<std::size_t>(k)] = 1.0;
    return e;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

Matrix add_scaled_identity(Matrix m, double c) {
    for (std::size_t i = 0; i < m.rows; ++i) m(i, i) += c;
    return m;
}

// Horner for the monomial basis, Clenshaw for the Chebyshev basis.
Matrix nested_evaluation(const DiffusionModel& model, const Graph& g) {
    const std::vector<double> c = effective_coefficients(model);
    const Matrix s = build_normalized(g, model.operator_kind()).to_dense();
    const std::size_t n = static_cast<std::size_t>(g.n);
    const int K = static_cast<int>(c.size()) - 1;
    if (model.spec.basis != Basis::chebyshev) {
        Matrix t = add_scaled_identity(Matrix(n, n), c[K]);
        for (int k = K - 1; k >= 0; --k) t = add_scaled_identity(matmul(s, t), c[k]);
        return t;
    }
    Matrix b1(n, n), b2(n, n);
    for (int k = K; k >= 1; --k) {
        Matrix b = matmul(s, b1);
        for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = 2.0 * b.data[i] - b2.data[i];
        b = add_scaled_identity(std::move(b), c[k]);
        b2 = std::move(b1);
        b1 = std::move(b);
    }
    Matrix t = matmul(s, b1);
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] -= b2.data[i];
    return add_scaled_identity(std::move(t), c[0]);
}

double trace(const Matrix& m) {
    double t = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) t += m(i, i);
    return t;
}

Graph graph_from_mask(int n, unsigned mask) {
    Graph g;
    g.n = n;
    g.num_classes = 1;
    g.features = Matrix::identity(static_cast<std::size_t>(n));
    g.labels.assign(static_cast<std::size_t>(n), 0);
    int bit = 0;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v, ++bit)
            if (mask & (1u << bit)) g.edges.push_back({u, v});
    return g;
}

} // namespace

TEST_CASE("normalize_gamma") {
    CHECK(normalize_gamma(std::vector<double>{-0.5, 0.5}) == std::vector<double>{0.5, -0.5});
    CHECK(normalize_gamma(std::vector<double>{2, 0, 0}) == std::vector<double>{1, 0, 0});
    const auto leading_zero = normalize_gamma(std::vector<double>{0, -2, 1});
    CHECK(leading_zero[1] == doctest::Approx(2.0 / 3.0));
    CHECK(leading_zero[2] == doctest::Approx(-1.0 / 3.0));
    CHECK_THROWS_AS(normalize_gamma(std::vector<double>{0, 0}), Error);
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> g(1 + rng.below(11));
        for (double& x : g) x = rng.normal();
        double in_l1 = 0.0;
        for (double x : g) in_l1 += std::abs(x);
        const auto out = normalize_gamma(g);
        double l1 = 0.0;
        for (double x : out) l1 += std::abs(x);
        CHECK(l1 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(out[0] > 0.0);
        for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::abs(out[k]) == doctest::Approx(std::abs(g[k]) / in_l1));
    }
}

TEST_CASE("total diffusion of unit coefficient vectors") {
    const Graph g = karate_club();
    const DiffusionModel base = random_model(g, Basis::monomial, 4, 1);
    CHECK(total_diffusion(with_gamma(base, unit(4, 0)), g) == Matrix::identity(34));
    const Matrix loops = build_normalized(g, OperatorKind::adjacency_loops).to_dense();
    CHECK(max_abs_diff(total_diffusion(with_gamma(base, unit(4, 1)), g), loops) == 0.0);
}

TEST_CASE("total diffusion matches nested evaluation on the karate club") {
    const Graph g = karate_club();
    for (Basis basis : {Basis::monomial, Basis::chebyshev, Basis::appnp}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            DiffusionModel model = random_model(g, basis, 10, seed);
            if (basis == Basis::appnp) model.gamma = ppr_coefficients(0.1, 10);
            const Matrix t = total_diffusion(model, g);
            CHECK(max_abs_diff(t, nested_evaluation(model, g)) <= 1e-10);
            CHECK(max_abs_diff(t, transpose(t)) <= 1e-12);
        }
    }
}

TEST_CASE("total diffusion reproduces the forward propagation") {
    const Graph g = karate_club();
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const DiffusionModel model = random_model(g, Basis::monomial, 10, seed);
        const Matrix mlp = predict_logits(with_gamma(model, unit(10, 0)), g);
        const Matrix propagated = matmul(total_diffusion(model, g), mlp);
        CHECK(max_abs_diff(propagated, predict_logits(model, g)) <= 1e-10);
    }
}

TEST_CASE("total diffusion guards its size and rejects GCN") {
    const Graph big = path_graph(kMaxDiffusionNodes + 1);
    ModelSpec spec;
    spec.in_dim = 1;
    spec.num_classes = 2;
    spec.K = 2;
    const DiffusionModel model = init_params(spec, 1);
    try {
        total_diffusion(model, big);
        FAIL("expected a capacity error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::capacity);
    }
    const Graph g = karate_club();
    CHECK_THROWS_AS(total_diffusion(random_model(g, Basis::gcn, 2, 1), g), Error);
}

TEST_CASE("Jacobi eigenvalues match the characteristic polynomial on every small graph") {
    // Power sums Σ λ^k for k = 1..n fix the characteristic polynomial (Newton's identities).
    int graphs = 0;
    for (int n = 1; n <= 4; ++n) {
        const unsigned masks = 1u << (n * (n - 1) / 2);
        for (unsigned mask = 0; mask < masks; ++mask) {
            const Matrix lap = normalized_laplacian(graph_from_mask(n, mask));
            const SymmetricEigen eig = jacobi_eigen(lap);
            CHECK(std::is_sorted(eig.values.begin(), eig.values.end()));
            Matrix power = Matrix::identity(static_cast<std::size_t>(n));
            for (int k = 1; k <= n; ++k) {
                power = matmul(power, lap);
                double sum = 0.0;
                for (double l : eig.values) sum += std::pow(l, k);
                CHECK(std::abs(sum - trace(power)) <= 1e-10);
            }
            ++graphs;
        }
    }
    CHECK(graphs == 1 + 2 + 8 + 64);
}

TEST_CASE("Jacobi decomposition of the karate club") {
    const Matrix lap = normalized_laplacian(karate_club());
    const SymmetricEigen eig = jacobi_eigen(lap);
    const Matrix& v = eig.vectors;
    CHECK(max_abs_diff(matmul(transpose(v), v), Matrix::identity(34)) <= 1e-8);
    Matrix lv = matmul(lap, v);
    for (std::size_t j = 0; j < 34; ++j)
        for (std::size_t i = 0; i < 34; ++i) lv(i, j) -= eig.values[j] * v(i, j);
    CHECK(max_abs_diff(lv, Matrix(34, 34)) <= 1e-8);
    CHECK(std::abs(eig.values.front()) <= 1e-10);
    CHECK(eig.values.back() <= 2.0 + 1e-10);
}

TEST_CASE("Jacobi reports non-convergence") {
    Matrix m(2, 2, 1.0);
    try {
        jacobi_eigen(m, 1e-10, 0);
        FAIL("expected a numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
    }
    CHECK(jacobi_eigen(Matrix::identity(3), 1e-10, 0).sweeps == 0);
}

TEST_CASE("spectral response of simple filters") {
    const Graph karate = karate_club();
    const SpectralFilter flat = spectral_filter(with_gamma(random_model(karate, Basis::monomial, 3, 2), unit(3, 0)), karate);
    for (double r : flat.response) CHECK(std::abs(r - 1.0) <= 1e-8);

    // Two connected nodes: Laplacian eigenpairs (0, (1,1)/√2) and (2, (1,-1)/√2);
    // the self-loop operator is the all-halves matrix, so g = (1, 0).
    Graph pair = path_graph(2);
    const SpectralFilter f = spectral_filter(with_gamma(random_model(pair, Basis::monomial, 1, 3), {0.0, 1.0}), pair);
    CHECK(std::abs(f.eigenvalues[0]) <= 1e-10);
    CHECK(std::abs(f.eigenvalues[1] - 2.0) <= 1e-10);
    CHECK(std::abs(f.response[0] - 1.0) <= 1e-10);
    CHECK(std::abs(f.response[1]) <= 1e-10);
}

TEST_CASE("spectral response sums to the trace of the total diffusion") {
    const Graph g = karate_club();
    for (Basis basis : {Basis::monomial, Basis::chebyshev}) {
        const DiffusionModel model = random_model(g, basis, 10, 4);
        const SpectralFilter f = spectral_filter(model, g);
        double sum = 0.0;
        for (double r : f.response) sum += r;
        CHECK(std::abs(sum - trace(total_diffusion(model, g))) <= 1e-8);
        for (double l : f.eigenvalues) CHECK((l >= -1e-10 && l <= 2.0 + 1e-10));
    }
}

namespace {

struct Fixture {
    Graph graph = sample_csbm(CsbmParams{.n = 150, .p_in = 0.02, .q_out = 0.06, .seed = 3});
    DiffusionModel model;

    explicit Fixture(bool inductive, Split& split) {
        split = make_split(graph, SplitParams{.per_class_train = 10, .per_class_val = 10, .inductive = inductive, .seed = 1});
        ModelSpec spec;
        spec.basis = Basis::monomial;
        spec.K = 5;
        spec.in_dim = static_cast<int>(graph.features.cols);
        spec.num_classes = graph.num_classes;
        TrainConfig config;
        config.max_epochs = 60;
        model = train_standard(init_params(spec, 2), graph, split, config).model;
    }
};

AttackConfig quick_attacks() {
    AttackConfig c;
    c.epochs = 10;
    c.finetune_epochs = 2;
    c.block_size = 2000;
    return c;
}

} // namespace

TEST_CASE("evaluation rows") {
    Split split;
    const Fixture fx(true, split);
    const EvalReport none = evaluate(fx.model, fx.graph, split, {}, quick_attacks(), 1);
    CHECK(none.rows.empty());
    const GraphView view = evaluation_view(fx.graph, split);
    const auto targets = view.local(split.test);
    CHECK(none.clean_acc == accuracy(argmax_rows(predict_logits(fx.model, view.graph)), view.graph.labels, targets));

    const std::vector<AttackSpec> ladder{{AttackKind::prbcd, 0.0, LocalRule::unlimited},
                                         {AttackKind::prbcd, 0.1, LocalRule::unlimited},
                                         {AttackKind::lrbcd, 0.25, LocalRule::half_degree}};
    const EvalReport report = evaluate(fx.model, fx.graph, split, ladder, quick_attacks(), 7);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].robust_acc == report.clean_acc);
    CHECK(report.rows[0].flips.empty());
    CHECK(report.rows[0].delta == 0);
    for (const EvalRow& row : report.rows) {
        CHECK(row.clean_acc == report.clean_acc);
        CHECK(row.robust_acc <= row.clean_acc);
        CHECK(row.seed == 7);
    }
    CHECK(!report.rows[2].flips.empty());
    CHECK(static_cast<std::int64_t>(report.rows[2].flips.size()) <= report.rows[2].delta);
    const EvalReport again = evaluate(fx.model, fx.graph, split, ladder, quick_attacks(), 7);
    for (std::size_t i = 0; i < 3; ++i) CHECK(again.rows[i].robust_acc == report.rows[i].robust_acc);
}

TEST_CASE("memorized model is perfectly robust transductively and unusable inductively") {
    Split split;
    const Fixture fx(false, split);
    const MemorizedModel mm = memorize(fx.model, fx.graph);
    const std::vector<AttackSpec> attacks{{AttackKind::prbcd, 0.25, LocalRule::unlimited},
                                          {AttackKind::lrbcd, 1.0, LocalRule::half_degree}};
    const EvalReport report = evaluate(mm, fx.graph, split, attacks, quick_attacks(), 2);
    for (const EvalRow& row : report.rows) {
        CHECK(!row.flips.empty());
        CHECK(row.robust_acc == row.clean_acc);
    }

    Split inductive;
    const Fixture ind(true, inductive);
    const MemorizedModel on_training_view = memorize(ind.model, training_view(ind.graph, inductive).graph);
    CHECK_THROWS_AS(evaluate(on_training_view, ind.graph, inductive, attacks, quick_attacks(), 2), Error);
}

TEST_CASE("export layouts") {
    const auto dir = scratch_dir("analysis");
    SpectralFilter f;
    f.eigenvalues = {0.0, 1.5};
    f.response = {1.0, -0.25};
    save_spectrum(f, dir / "s.csv", {"seed 3"});
    save_diffusion(Matrix::identity(2), dir / "d.csv", {"seed 3"});
    save_evaluation({{{AttackKind::lrbcd, 0.1, LocalRule::half_degree}, 0.75, 0.5, 12, {}, 3}}, dir / "e.csv", {"seed 3"});
    const auto read = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(read(dir / "s.csv") == "# seed 3\nlambda,response\n0,1\n1.5,-0.25\n");
    CHECK(read(dir / "d.csv") == "# seed 3\n1,0\n0,1\n");
    CHECK(read(dir / "e.csv") ==
          "# seed 3\nattack,epsilon,local_rule,clean_acc,robust_acc,seed\nlrbcd,0.1,half_degree,0.75,0.5,3\n");
}
