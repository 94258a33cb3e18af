#include "advgraph/graph.hpp"

#include "advgraph/error.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace advgraph {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::constraint: return "constraint-violation";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::split: return "split";
    case ErrorKind::shape: return "shape";
    case ErrorKind::config: return "config";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::training: return "training";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::usage: return "usage";
    case ErrorKind::internal: return "internal";
    }
    return "unknown";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, ErrorKind::shape, "matmul inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* dst = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* src = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) dst[j] += aik * src[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

Edge slot_from_index(std::int64_t n, std::int64_t index) {
    require(index >= 0 && index < slot_count(n), ErrorKind::dimension, "slot index out of range");
    // Row u starts at u*n - u(u+1)/2; invert the quadratic, then fix rounding.
    const double nn = static_cast<double>(n);
    auto u = static_cast<std::int64_t>(
        std::floor(((2.0 * nn - 1.0) - std::sqrt((2.0 * nn - 1.0) * (2.0 * nn - 1.0) - 8.0 * static_cast<double>(index))) / 2.0));
    u = std::clamp<std::int64_t>(u, 0, n - 2);
    auto row_start = [n](std::int64_t r) { return r * n - r * (r + 1) / 2; };
    while (u > 0 && row_start(u) > index) --u;
    while (u + 1 <= n - 2 && row_start(u + 1) <= index) ++u;
    const std::int64_t v = index - row_start(u) + u + 1;
    return Edge{static_cast<std::int32_t>(u), static_cast<std::int32_t>(v)};
}

bool Graph::has_edge(Edge e) const { return std::binary_search(edges.begin(), edges.end(), e); }

void Graph::validate() const {
    require(n >= 0, ErrorKind::dimension, "negative node count");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Edge e = edges[i];
        require(0 <= e.u && e.u < e.v && e.v < n, ErrorKind::dimension, "edge out of range or not canonical");
        if (i > 0) require(edges[i - 1] < e, ErrorKind::dimension, "edge list not sorted or has duplicates");
    }
    require(features.rows == static_cast<std::size_t>(n), ErrorKind::dimension, "feature row count differs from n");
    require(labels.size() == static_cast<std::size_t>(n), ErrorKind::dimension, "label count differs from n");
    for (int y : labels)
        require(y == kUnknownLabel || (y >= 0 && y < num_classes), ErrorKind::dimension, "label outside class range");
}

std::vector<Edge> canonical_edges(std::vector<Edge> edges, std::int32_t n) {
    for (Edge& e : edges) {
        require(e.u != e.v, ErrorKind::parse, "self loop " + std::to_string(e.u));
        e = make_edge(e.u, e.v);
        require(e.u >= 0 && e.v < n, ErrorKind::dimension,
                "edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") outside node range");
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::vector<int> degrees(const Graph& graph) {
    std::vector<int> d(static_cast<std::size_t>(graph.n), 0);
    for (const Edge& e : graph.edges) {
        ++d[e.u];
        ++d[e.v];
    }
    return d;
}

Graph induced_subgraph(const Graph& graph, std::span<const int> nodes) {
    std::vector<int> position(static_cast<std::size_t>(graph.n), -1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int node = nodes[i];
        require(node >= 0 && node < graph.n, ErrorKind::dimension, "induced node out of range");
        require(position[node] < 0, ErrorKind::dimension, "induced node listed twice");
        position[node] = static_cast<int>(i);
    }
    Graph sub;
    sub.n = static_cast<std::int32_t>(nodes.size());
    sub.num_classes = graph.num_classes;
    sub.features = Matrix(nodes.size(), graph.features.cols);
    sub.labels.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::copy_n(graph.features.row(nodes[i]).begin(), graph.features.cols, sub.features.row(i).begin());
        sub.labels[i] = graph.labels[nodes[i]];
    }
    for (const Edge& e : graph.edges) {
        const int a = position[e.u];
        const int b = position[e.v];
        if (a >= 0 && b >= 0) sub.edges.push_back(make_edge(a, b));
    }
    std::sort(sub.edges.begin(), sub.edges.end());
    return sub;
}

Graph apply_flips(const Graph& graph, std::span<const Edge> flips) {
    std::vector<Edge> sorted(flips.begin(), flips.end());
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::constraint,
            "flip list contains a slot twice");
    for (const Edge& e : sorted)
        require(0 <= e.u && e.u < e.v && e.v < graph.n, ErrorKind::constraint, "flip slot out of range");
    Graph out = graph;
    out.edges.clear();
    std::set_symmetric_difference(graph.edges.begin(), graph.edges.end(), sorted.begin(), sorted.end(),
                                  std::back_inserter(out.edges));
    return out;
}

void RelaxedPerturbation::validate() const {
    require(slots.size() == values.size(), ErrorKind::constraint, "slot/value length mismatch");
    std::vector<Edge> sorted = slots;
    for (const Edge& e : sorted)
        require(0 <= e.u && e.u < e.v && e.v < n, ErrorKind::constraint,
                "perturbation slot (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") is not a valid slot");
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::constraint,
            "duplicate perturbation slot");
}

double NormalizedOperator::at(std::int32_t i, std::int32_t j) const {
    const OperatorEntry key{std::min(i, j), std::max(i, j), 0.0};
    auto it = std::lower_bound(entries.begin(), entries.end(), key, [](const OperatorEntry& a, const OperatorEntry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    if (it != entries.end() && it->row == key.row && it->col == key.col) return it->value;
    return 0.0;
}

Matrix NormalizedOperator::apply(const Matrix& h) const {
    require(h.rows == static_cast<std::size_t>(n), ErrorKind::shape, "operator/matrix row mismatch");
    Matrix out(h.rows, h.cols);
    detail::accumulate_symmetric(*this, h, out);
    return out;
}

Matrix NormalizedOperator::to_dense() const {
    Matrix out(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (const OperatorEntry& e : entries) {
        out(e.row, e.col) = e.value;
        out(e.col, e.row) = e.value;
    }
    return out;
}

namespace detail {

void accumulate_symmetric(const NormalizedOperator& op, const Matrix& x, Matrix& y) {
    const std::size_t c = x.cols;
    const double* xs = x.data.data();
    double* ys = y.data.data();
    for (const OperatorEntry& e : op.entries) {
        const double w = e.value;
        if (w == 0.0) continue;
        const double* xr = xs + static_cast<std::size_t>(e.row) * c;
        double* yr = ys + static_cast<std::size_t>(e.row) * c;
        if (e.row == e.col) {
            for (std::size_t k = 0; k < c; ++k) yr[k] += w * xr[k];
            continue;
        }
        const double* xc = xs + static_cast<std::size_t>(e.col) * c;
        double* yc = ys + static_cast<std::size_t>(e.col) * c;
        for (std::size_t k = 0; k < c; ++k) {
            yr[k] += w * xc[k];
            yc[k] += w * xr[k];
        }
    }
}

TracedOperator build_traced(const Graph& graph, OperatorKind kind, std::span<const Edge> slots,
                            std::span<const double> values) {
    require(slots.size() == values.size(), ErrorKind::constraint, "slot/value length mismatch");
    const std::int64_t n = graph.n;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const Edge e = slots[i];
        require(0 <= e.u && e.u < e.v && e.v < n, ErrorKind::constraint, "perturbation slot out of range");
        require(std::isfinite(values[i]) && values[i] >= 0.0 && values[i] <= 1.0, ErrorKind::constraint,
                "perturbation value outside [0,1]");
    }

    std::vector<std::size_t> order(slots.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return slots[a] < slots[b]; });
    for (std::size_t i = 1; i < order.size(); ++i)
        require(slots[order[i - 1]] != slots[order[i]], ErrorKind::constraint, "duplicate perturbation slot");

    struct OffDiagonal {
        Edge edge;
        double weight;
        std::int64_t slot;
        double direction;
    };
    std::vector<OffDiagonal> off;
    off.reserve(graph.edges.size() + slots.size());
    std::size_t ei = 0;
    std::size_t si = 0;
    while (ei < graph.edges.size() || si < order.size()) {
        const bool take_edge = si == order.size() || (ei < graph.edges.size() && graph.edges[ei] <= slots[order[si]]);
        const bool take_slot = ei == graph.edges.size() || (si < order.size() && slots[order[si]] <= graph.edges[ei]);
        if (take_edge && take_slot) {
            const std::size_t s = order[si];
            off.push_back({graph.edges[ei], 1.0 - values[s], static_cast<std::int64_t>(s), -1.0});
            ++ei;
            ++si;
        } else if (take_edge) {
            off.push_back({graph.edges[ei], 1.0, -1, 0.0});
            ++ei;
        } else {
            const std::size_t s = order[si];
            off.push_back({slots[s], values[s], static_cast<std::int64_t>(s), 1.0});
            ++si;
        }
    }

    const bool loops = kind == OperatorKind::adjacency_loops;
    std::vector<double> deg(static_cast<std::size_t>(n), loops ? 1.0 : 0.0);
    for (const OffDiagonal& o : off) {
        deg[o.edge.u] += o.weight;
        deg[o.edge.v] += o.weight;
    }

    TracedOperator traced;
    traced.sign = kind == OperatorKind::shifted_laplacian ? -1.0 : 1.0;
    traced.op.kind = kind;
    traced.op.n = graph.n;
    const std::size_t total = off.size() + (loops ? static_cast<std::size_t>(n) : 0);
    traced.op.entries.reserve(total);
    traced.weights.reserve(total);
    traced.slot.reserve(total);
    traced.flip_direction.reserve(total);

    std::size_t oi = 0;
    for (std::int32_t i = 0; i < graph.n; ++i) {
        if (loops) {
            traced.op.entries.push_back({i, i, 1.0 / deg[i]});
            traced.weights.push_back(1.0);
            traced.slot.push_back(-1);
            traced.flip_direction.push_back(0.0);
        }
        for (; oi < off.size() && off[oi].edge.u == i; ++oi) {
            const OffDiagonal& o = off[oi];
            const double scale = deg[o.edge.u] * deg[o.edge.v];
            const double value = scale > 0.0 ? traced.sign * o.weight / std::sqrt(scale) : 0.0;
            traced.op.entries.push_back({o.edge.u, o.edge.v, value});
            traced.weights.push_back(o.weight);
            traced.slot.push_back(o.slot);
            traced.flip_direction.push_back(o.direction);
        }
    }
    traced.op.degrees = std::move(deg);
    return traced;
}

} // namespace detail

namespace {

NormalizedOperator drop_empty(detail::TracedOperator traced) {
    NormalizedOperator op = std::move(traced.op);
    std::size_t out = 0;
    for (std::size_t i = 0; i < op.entries.size(); ++i) {
        const OperatorEntry& e = op.entries[i];
        if (e.row != e.col && traced.weights[i] == 0.0) continue;
        op.entries[out++] = e;
    }
    op.entries.resize(out);
    return op;
}

} // namespace

NormalizedOperator build_normalized(const Graph& graph, OperatorKind kind) {
    return drop_empty(detail::build_traced(graph, kind, {}, {}));
}

NormalizedOperator build_normalized(const Graph& graph, OperatorKind kind, const RelaxedPerturbation& perturbation) {
    require(perturbation.n == graph.n, ErrorKind::constraint, "perturbation node count differs from graph");
    perturbation.validate();
    return drop_empty(detail::build_traced(graph, kind, perturbation.slots, perturbation.values));
}

Graph load_graph(const std::filesystem::path& edge_file, const std::filesystem::path& feature_file,
                 const std::filesystem::path& label_file) {
    Graph graph;
    graph.features = io::read_csv_matrix(feature_file);
    graph.n = static_cast<std::int32_t>(graph.features.rows);

    std::vector<Edge> raw;
    io::for_each_line(edge_file, [&](std::string_view line, std::size_t lineno) {
        const auto fields = io::split_fields(line, ' ');
        if (fields.size() != 2) io::parse_failure(edge_file, lineno, "expected \"u v\"");
        const int a = io::parse_int(fields[0], edge_file, lineno);
        const int b = io::parse_int(fields[1], edge_file, lineno);
        if (a < 0 || b < 0) io::parse_failure(edge_file, lineno, "negative node index");
        if (a == b) io::parse_failure(edge_file, lineno, "self loop");
        raw.push_back(make_edge(a, b));
    }, [&](std::string_view comment, std::size_t lineno) {
        // A header comment "n=<count>" pins the node count.
        for (std::string_view token : io::split_fields(comment, ' ')) {
            if (token.substr(0, 2) != "n=") continue;
            const int declared = io::parse_int(token.substr(2), edge_file, lineno);
            require(declared == graph.n, ErrorKind::dimension,
                    "edge file declares n=" + std::to_string(declared) + " but feature file has " +
                        std::to_string(graph.n) + " rows");
        }
    });
    graph.edges = canonical_edges(std::move(raw), graph.n);

    graph.labels.assign(static_cast<std::size_t>(graph.n), kUnknownLabel);
    std::vector<bool> seen(static_cast<std::size_t>(graph.n), false);
    io::for_each_line(label_file, [&](std::string_view line, std::size_t lineno) {
        const auto fields = io::split_fields(line, ',');
        if (fields.size() != 2) io::parse_failure(label_file, lineno, "expected \"node,label\"");
        if (fields[0] == "node") return;  // header
        const int node = io::parse_int(fields[0], label_file, lineno);
        const int label = io::parse_int(fields[1], label_file, lineno);
        require(node >= 0 && node < graph.n, ErrorKind::dimension,
                label_file.string() + ":" + std::to_string(lineno) + ": node " + std::to_string(node) +
                    " outside feature rows");
        if (label < kUnknownLabel) io::parse_failure(label_file, lineno, "label below -1");
        if (seen[node]) io::parse_failure(label_file, lineno, "node labeled twice");
        seen[node] = true;
        graph.labels[node] = label;
    });
    graph.num_classes = 0;
    for (int y : graph.labels) graph.num_classes = std::max(graph.num_classes, y + 1);
    graph.validate();
    return graph;
}

void save_graph(const Graph& graph, const std::filesystem::path& edge_file, const std::filesystem::path& feature_file,
                const std::filesystem::path& label_file, const std::vector<std::string>& header_comments) {
    graph.validate();
    std::string header;
    for (const std::string& line : header_comments) header += "# " + line + '\n';
    {
        std::ofstream out = io::open_output(edge_file);
        out << header << "# undirected edges, n=" << graph.n << "\n";
        for (const Edge& e : graph.edges) out << e.u << ' ' << e.v << '\n';
    }
    io::write_csv_matrix(feature_file, graph.features, header);
    {
        std::ofstream out = io::open_output(label_file);
        out << header << "node,label\n";
        for (std::int32_t i = 0; i < graph.n; ++i) out << i << ',' << graph.labels[i] << '\n';
    }
}

} // namespace advgraph
