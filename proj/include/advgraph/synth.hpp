#pragma once

#include "advgraph/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace advgraph {

/// Contextual stochastic block model with two classes.
struct CsbmParams {
    std::int32_t n = 1000;
    int d = 21;
    double sigma = 1.0;
    double K = 1.5;         ///< class-mean distance in units of sigma
    double p_in = 0.0015;   ///< same-class edge probability
    double q_out = 0.0063;  ///< cross-class edge probability
    std::uint64_t seed = 0;

    void validate() const;
};

/// Samples a CSBM graph and returns its largest connected component.
Graph sample_csbm(const CsbmParams& params);

/// Nodes of the largest connected component, ascending (ties: smallest first node).
std::vector<int> largest_component(const Graph& graph);

/// Zachary's karate club: 34 nodes, 78 edges, two factions, identity features.
Graph karate_club();

struct Split {
    std::vector<int> train_labeled;
    std::vector<int> train_unlabeled;
    std::vector<int> val;
    std::vector<int> test;
    bool inductive = false;

    void validate(std::int32_t n) const;
    std::vector<int> train_nodes() const;  ///< labeled + unlabeled, ascending

    friend bool operator==(const Split&, const Split&) = default;
};

struct SplitParams {
    int per_class_train = 20;
    int per_class_val = 20;
    /// When positive, replaces the per-class counts: this share of each
    /// class's non-test nodes is labeled training data and the rest validation.
    double train_share = 0.0;
    double test_fraction = 0.1;  ///< inductive only: transductive splits test on every remaining labeled node
    bool inductive = true;
    std::uint64_t seed = 0;
};

Split make_split(const Graph& graph, const SplitParams& params);

/// A graph restricted to a node subset, with the index maps both ways.
struct GraphView {
    Graph graph;
    std::vector<int> to_original;    ///< view index -> original index
    std::vector<int> from_original;  ///< original index -> view index or -1

    /// Maps original indices into the view; throws if one is absent.
    std::vector<int> local(const std::vector<int>& original) const;
};

/// Inductive: subgraph on the training nodes. Transductive: the whole graph.
GraphView training_view(const Graph& graph, const Split& split);
/// Training view with the validation nodes (and their edges) re-added.
GraphView validation_view(const Graph& graph, const Split& split);
/// Every split node; for a split covering all nodes this is the original graph.
GraphView evaluation_view(const Graph& graph, const Split& split);

void save_split(const Split& split, const std::filesystem::path& file);
Split load_split(const std::filesystem::path& file);

} // namespace advgraph
