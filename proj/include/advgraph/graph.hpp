#pragma once

#include "advgraph/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace advgraph {

inline constexpr int kUnknownLabel = -1;

/// Undirected edge / perturbation slot, always stored with u < v.
struct Edge {
    std::int32_t u = 0;
    std::int32_t v = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Number of upper-triangular slots of an n-node graph.
constexpr std::int64_t slot_count(std::int64_t n) noexcept { return n * (n - 1) / 2; }

/// Row-major linear index of slot (u, v), u < v.
constexpr std::int64_t slot_index(std::int64_t n, Edge e) noexcept {
    return e.u * n - e.u * (e.u + 1) / 2 + (e.v - e.u - 1);
}

Edge slot_from_index(std::int64_t n, std::int64_t index);

/// Canonical (u < v) form of an unordered pair.
inline Edge make_edge(std::int32_t a, std::int32_t b) noexcept { return a < b ? Edge{a, b} : Edge{b, a}; }

struct Graph {
    std::int32_t n = 0;
    std::vector<Edge> edges;  ///< sorted, unique, u < v < n
    Matrix features;          ///< n x d
    std::vector<int> labels;  ///< length n, kUnknownLabel for unknown
    int num_classes = 0;

    std::size_t num_edges() const noexcept { return edges.size(); }
    bool has_edge(Edge e) const;

    /// Throws if any structural invariant is broken.
    void validate() const;

    friend bool operator==(const Graph&, const Graph&) = default;
};

/// Sorts and dedups an edge list; rejects self loops and out-of-range nodes.
std::vector<Edge> canonical_edges(std::vector<Edge> edges, std::int32_t n);

std::vector<int> degrees(const Graph& graph);

/// Subgraph induced on `nodes` (in the given order); features and labels follow.
Graph induced_subgraph(const Graph& graph, std::span<const int> nodes);

/// Toggles every listed slot (insert if absent, delete if present).
Graph apply_flips(const Graph& graph, std::span<const Edge> flips);

enum class OperatorKind {
    adjacency,         ///< D^-1/2 A D^-1/2
    adjacency_loops,   ///< D^-1/2 (A + I) D^-1/2 with degrees of A + I
    shifted_laplacian, ///< -D^-1/2 A D^-1/2
};

/// Sparse relaxed edge-flip values on a subset of slots.
struct RelaxedPerturbation {
    std::int32_t n = 0;
    std::vector<Edge> slots;
    std::vector<double> values;

    /// Checks bounds and rejects duplicate slots; values are checked when used.
    void validate() const;
};

struct OperatorEntry {
    std::int32_t row = 0;  ///< row <= col
    std::int32_t col = 0;
    double value = 0.0;

    friend bool operator==(const OperatorEntry&, const OperatorEntry&) = default;
};

/// Symmetric sparse operator stored as its upper triangle (diagonal included).
struct NormalizedOperator {
    OperatorKind kind = OperatorKind::adjacency_loops;
    std::int32_t n = 0;
    std::vector<OperatorEntry> entries;  ///< sorted by (row, col)
    std::vector<double> degrees;         ///< weighted degrees used for normalization

    double at(std::int32_t i, std::int32_t j) const;
    Matrix apply(const Matrix& h) const;
    Matrix to_dense() const;
};

NormalizedOperator build_normalized(const Graph& graph, OperatorKind kind);
NormalizedOperator build_normalized(const Graph& graph, OperatorKind kind, const RelaxedPerturbation& perturbation);

namespace detail {

/// Operator over the full support (edges plus perturbation slots, zero-weight
/// entries kept) with what the reverse pass needs to reach the slot values.
struct TracedOperator {
    NormalizedOperator op;
    std::vector<double> weights;          ///< raw weight per entry (diagonal: self-loop weight)
    std::vector<std::int64_t> slot;       ///< perturbation slot per entry, -1 if none
    std::vector<double> flip_direction;   ///< dw/dp = 1 - 2A for slotted entries
    double sign = 1.0;
};

TracedOperator build_traced(const Graph& graph, OperatorKind kind, std::span<const Edge> slots,
                            std::span<const double> values);

/// Adds y += op * x, where op is given by its upper-triangular entries.
void accumulate_symmetric(const NormalizedOperator& op, const Matrix& x, Matrix& y);

} // namespace detail

Graph load_graph(const std::filesystem::path& edge_file, const std::filesystem::path& feature_file,
                 const std::filesystem::path& label_file);
void save_graph(const Graph& graph, const std::filesystem::path& edge_file,
                const std::filesystem::path& feature_file, const std::filesystem::path& label_file,
                const std::vector<std::string>& header_comments = {});

} // namespace advgraph
