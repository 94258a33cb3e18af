#include "advgraph/analysis.hpp"

#include "advgraph/error.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace advgraph {

std::vector<double> normalize_gamma(std::span<const double> gamma) {
    double l1 = 0.0;
    for (double g : gamma) l1 += std::abs(g);
    require(l1 > 0.0 && std::isfinite(l1), ErrorKind::parameter, "cannot normalize an all-zero coefficient vector");
    const auto lead = std::find_if(gamma.begin(), gamma.end(), [](double g) { return g != 0.0; });
    const double scale = (*lead < 0.0 ? -1.0 : 1.0) / l1;
    std::vector<double> out(gamma.begin(), gamma.end());
    for (double& g : out) g *= scale;
    return out;
}

Matrix total_diffusion(const DiffusionModel& model, const Graph& graph) {
    require(graph.n <= kMaxDiffusionNodes, ErrorKind::capacity,
            "total diffusion is dense; " + std::to_string(graph.n) + " nodes exceed the limit of " +
                std::to_string(kMaxDiffusionNodes));
    const std::vector<double> coeffs = effective_coefficients(model);
    const std::size_t n = static_cast<std::size_t>(graph.n);
    Matrix total(n, n);
    Matrix older;
    Matrix current = Matrix::identity(n);
    const NormalizedOperator op = build_normalized(graph, model.operator_kind());
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        if (k > 0) {
            Matrix next = op.apply(current);
            if (model.spec.basis == Basis::chebyshev && k >= 2)
                for (std::size_t i = 0; i < next.size(); ++i) next.data[i] = 2.0 * next.data[i] - older.data[i];
            older = std::move(current);
            current = std::move(next);
        }
        for (std::size_t i = 0; i < total.size(); ++i) total.data[i] += coeffs[k] * current.data[i];
    }
    return total;
}

Matrix normalized_laplacian(const Graph& graph) {
    const std::size_t n = static_cast<std::size_t>(graph.n);
    const std::vector<int> deg = degrees(graph);
    Matrix lap = Matrix::identity(n);
    for (const Edge& e : graph.edges) {
        const double w = -1.0 / std::sqrt(static_cast<double>(deg[e.u]) * deg[e.v]);
        lap(e.u, e.v) = w;
        lap(e.v, e.u) = w;
    }
    return lap;
}

namespace {

double off_diagonal_norm(const Matrix& a) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = i + 1; j < a.cols; ++j) sum += a(i, j) * a(i, j);
    return std::sqrt(2.0 * sum);
}

} // namespace

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance, int max_sweeps) {
    require(symmetric.rows == symmetric.cols, ErrorKind::shape, "eigendecomposition needs a square matrix");
    const std::size_t n = symmetric.rows;
    Matrix a = symmetric;
    Matrix v = Matrix::identity(n);
    int sweeps = 0;
    while (off_diagonal_norm(a) > tolerance) {
        require(sweeps < max_sweeps, ErrorKind::numeric,
                "Jacobi eigensolver did not converge within " + std::to_string(max_sweeps) + " sweeps");
        ++sweeps;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
    SymmetricEigen out;
    out.sweeps = sweeps;
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values.push_back(a(order[j], order[j]));
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
    }
    return out;
}

SpectralFilter spectral_filter(const DiffusionModel& model, const Graph& graph) {
    require(graph.n <= kMaxSpectralNodes, ErrorKind::capacity,
            "spectral filter needs a dense eigendecomposition; " + std::to_string(graph.n) +
                " nodes exceed the limit of " + std::to_string(kMaxSpectralNodes));
    SymmetricEigen eig = jacobi_eigen(normalized_laplacian(graph));
    const Matrix tv = matmul(total_diffusion(model, graph), eig.vectors);
    SpectralFilter out;
    out.response.assign(eig.values.size(), 0.0);
    for (std::size_t j = 0; j < eig.values.size(); ++j)
        for (std::size_t k = 0; k < tv.rows; ++k) out.response[j] += eig.vectors(k, j) * tv(k, j);
    out.eigenvalues = std::move(eig.values);
    out.eigenvectors = std::move(eig.vectors);
    return out;
}

namespace {

template <typename Predict>
EvalReport evaluate_with(const DiffusionModel& attacked, Predict predict, const Graph& graph, const Split& split,
                         std::span<const AttackSpec> attacks, const AttackConfig& base, std::uint64_t seed) {
    const GraphView view = evaluation_view(graph, split);
    const std::vector<int> targets = view.local(split.test);
    const std::vector<int>& labels = view.graph.labels;
    EvalReport report;
    report.clean_acc = accuracy(predict(view.graph), labels, targets);
    const Rng root = Rng(seed).derive("evaluate");
    for (std::size_t i = 0; i < attacks.size(); ++i) {
        const AttackSpec& spec = attacks[i];
        require(spec.epsilon >= 0.0, ErrorKind::config, "attack epsilon must be non-negative");
        AttackConfig config = base;
        config.kind = spec.kind;
        const Budget budget = compute_budgets(view.graph, targets, spec.epsilon, spec.local_rule);
        AttackResult result = run_attack(AttackProblem{&attacked, &view.graph, targets, labels}, budget, config,
                                         root.derive(static_cast<std::uint64_t>(i)));
        const Graph perturbed = apply_flips(view.graph, result.flips);
        std::vector<Edge> original;
        for (const Edge& e : result.flips) original.push_back(make_edge(view.to_original[e.u], view.to_original[e.v]));
        std::sort(original.begin(), original.end());
        report.rows.push_back({spec, report.clean_acc, accuracy(predict(perturbed), labels, targets),
                               budget.global_delta, std::move(original), seed});
        for (std::string& w : result.warnings) report.warnings.push_back(to_string(spec.kind) + ": " + std::move(w));
    }
    return report;
}

void write_header(std::ofstream& out, const std::vector<std::string>& header_comments) {
    for (const std::string& line : header_comments) out << "# " << line << '\n';
}

} // namespace

EvalReport evaluate(const DiffusionModel& model, const Graph& graph, const Split& split,
                    std::span<const AttackSpec> attacks, const AttackConfig& base, std::uint64_t seed) {
    const auto predict = [&](const Graph& g) { return argmax_rows(predict_logits(model, g)); };
    return evaluate_with(model, predict, graph, split, attacks, base, seed);
}

EvalReport evaluate(const MemorizedModel& model, const Graph& graph, const Split& split,
                    std::span<const AttackSpec> attacks, const AttackConfig& base, std::uint64_t seed) {
    const auto predict = [&](const Graph& g) { return predict_memorized(model, g); };
    return evaluate_with(model.inner, predict, graph, split, attacks, base, seed);
}

void save_spectrum(const SpectralFilter& filter, const std::filesystem::path& file,
                   const std::vector<std::string>& header_comments) {
    std::ofstream out = io::open_output(file);
    write_header(out, header_comments);
    out << "lambda,response\n";
    for (std::size_t i = 0; i < filter.eigenvalues.size(); ++i)
        out << io::format_double(filter.eigenvalues[i]) << ',' << io::format_double(filter.response[i]) << '\n';
}

void save_diffusion(const Matrix& diffusion, const std::filesystem::path& file,
                    const std::vector<std::string>& header_comments) {
    std::string header;
    for (const std::string& line : header_comments) header += "# " + line + '\n';
    io::write_csv_matrix(file, diffusion, header);
}

void save_evaluation(const std::vector<EvalRow>& rows, const std::filesystem::path& file,
                     const std::vector<std::string>& header_comments) {
    std::ofstream out = io::open_output(file);
    write_header(out, header_comments);
    out << "attack,epsilon,local_rule,clean_acc,robust_acc,seed\n";
    for (const EvalRow& row : rows)
        out << to_string(row.attack.kind) << ',' << io::format_double(row.attack.epsilon) << ','
            << to_string(row.attack.local_rule) << ',' << io::format_double(row.clean_acc) << ','
            << io::format_double(row.robust_acc) << ',' << row.seed << '\n';
}

} // namespace advgraph
