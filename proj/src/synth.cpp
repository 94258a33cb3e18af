#include "advgraph/synth.hpp"

#include "advgraph/error.hpp"
#include "advgraph/rng.hpp"
#include "text_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace advgraph {

double Rng::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

void CsbmParams::validate() const {
    require(n >= 2, ErrorKind::parameter, "CSBM needs n >= 2");
    require(d >= 1, ErrorKind::parameter, "CSBM needs d >= 1");
    require(sigma > 0.0, ErrorKind::parameter, "CSBM needs sigma > 0");
    require(p_in >= 0.0 && p_in <= 1.0, ErrorKind::parameter, "p_in outside [0,1]");
    require(q_out >= 0.0 && q_out <= 1.0, ErrorKind::parameter, "q_out outside [0,1]");
}

std::vector<int> largest_component(const Graph& graph) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(graph.n));
    for (const Edge& e : graph.edges) {
        adj[e.u].push_back(e.v);
        adj[e.v].push_back(e.u);
    }
    std::vector<int> component(static_cast<std::size_t>(graph.n), -1);
    std::vector<int> best;
    std::vector<int> stack;
    int label = 0;
    for (int start = 0; start < graph.n; ++start) {
        if (component[start] >= 0) continue;
        std::vector<int> members;
        stack.push_back(start);
        component[start] = label;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            members.push_back(u);
            for (int v : adj[u])
                if (component[v] < 0) {
                    component[v] = label;
                    stack.push_back(v);
                }
        }
        if (members.size() > best.size()) best = std::move(members);
        ++label;
    }
    std::sort(best.begin(), best.end());
    return best;
}

Graph sample_csbm(const CsbmParams& params) {
    params.validate();
    Rng root(params.seed);
    Rng label_rng = root.derive("csbm/labels");
    Rng feature_rng = root.derive("csbm/features");
    Rng edge_rng = root.derive("csbm/edges");

    Graph g;
    g.n = params.n;
    g.num_classes = 2;
    g.labels.resize(static_cast<std::size_t>(params.n));
    for (int& y : g.labels) y = static_cast<int>(label_rng.below(2));

    const double mean = params.K * params.sigma / (2.0 * std::sqrt(static_cast<double>(params.d)));
    g.features = Matrix(static_cast<std::size_t>(params.n), static_cast<std::size_t>(params.d));
    for (std::int32_t i = 0; i < params.n; ++i) {
        const double shift = (2.0 * g.labels[i] - 1.0) * mean;
        for (int j = 0; j < params.d; ++j) g.features(i, j) = shift + params.sigma * feature_rng.normal();
    }

    for (std::int32_t u = 0; u < params.n; ++u)
        for (std::int32_t v = u + 1; v < params.n; ++v) {
            const double p = g.labels[u] == g.labels[v] ? params.p_in : params.q_out;
            if (edge_rng.uniform() < p) g.edges.push_back({u, v});
        }
    require(!g.edges.empty(), ErrorKind::parameter, "CSBM sample has no edges; no component to extract");

    const std::vector<int> keep = largest_component(g);
    return induced_subgraph(g, keep);
}

Graph karate_club() {
    static constexpr int kEdges[78][2] = {
        {0, 1},   {0, 2},   {0, 3},   {0, 4},   {0, 5},   {0, 6},   {0, 7},   {0, 8},   {0, 10},  {0, 11},
        {0, 12},  {0, 13},  {0, 17},  {0, 19},  {0, 21},  {0, 31},  {1, 2},   {1, 3},   {1, 7},   {1, 13},
        {1, 17},  {1, 19},  {1, 21},  {1, 30},  {2, 3},   {2, 7},   {2, 8},   {2, 9},   {2, 13},  {2, 27},
        {2, 28},  {2, 32},  {3, 7},   {3, 12},  {3, 13},  {4, 6},   {4, 10},  {5, 6},   {5, 10},  {5, 16},
        {6, 16},  {8, 30},  {8, 32},  {8, 33},  {9, 33},  {13, 33}, {14, 32}, {14, 33}, {15, 32}, {15, 33},
        {18, 32}, {18, 33}, {19, 33}, {20, 32}, {20, 33}, {22, 32}, {22, 33}, {23, 25}, {23, 27}, {23, 29},
        {23, 32}, {23, 33}, {24, 25}, {24, 27}, {24, 31}, {25, 31}, {26, 29}, {26, 33}, {27, 33}, {28, 31},
        {28, 33}, {29, 32}, {29, 33}, {30, 32}, {30, 33}, {31, 32}, {31, 33}, {32, 33}};
    // Faction after the split: 0 = Mr. Hi, 1 = Officer.
    static constexpr int kFaction[34] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0,
                                         0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    Graph g;
    g.n = 34;
    g.num_classes = 2;
    g.features = Matrix::identity(34);
    g.labels.assign(std::begin(kFaction), std::end(kFaction));
    for (const auto& e : kEdges) g.edges.push_back({e[0], e[1]});
    return g;
}

void Split::validate(std::int32_t n) const {
    std::vector<int> owner(static_cast<std::size_t>(n), -1);
    const std::vector<int>* sets[] = {&train_labeled, &train_unlabeled, &val, &test};
    for (int s = 0; s < 4; ++s)
        for (int node : *sets[s]) {
            require(node >= 0 && node < n, ErrorKind::split, "split index " + std::to_string(node) + " out of range");
            require(owner[node] < 0, ErrorKind::split, "node " + std::to_string(node) + " in two split sets");
            owner[node] = s;
        }
}

std::vector<int> Split::train_nodes() const {
    std::vector<int> nodes = train_labeled;
    nodes.insert(nodes.end(), train_unlabeled.begin(), train_unlabeled.end());
    std::sort(nodes.begin(), nodes.end());
    return nodes;
}

Split make_split(const Graph& graph, const SplitParams& params) {
    require(params.per_class_train >= 0 && params.per_class_val >= 0, ErrorKind::split, "negative per-class count");
    require(params.test_fraction >= 0.0 && params.test_fraction <= 1.0, ErrorKind::split,
            "test fraction outside [0,1]");
    require(params.train_share >= 0.0 && params.train_share <= 1.0, ErrorKind::split, "train share outside [0,1]");
    Rng rng = Rng(params.seed).derive("split");

    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(graph.num_classes));
    std::vector<int> unlabeled;
    for (int i = 0; i < graph.n; ++i) {
        if (graph.labels[i] == kUnknownLabel) unlabeled.push_back(i);
        else by_class[graph.labels[i]].push_back(i);
    }
    std::size_t labeled_total = 0;
    for (const auto& members : by_class) labeled_total += members.size();

    // Largest-remainder apportionment keeps every class within 1 of its exact share.
    const double exact_total = params.test_fraction * static_cast<double>(labeled_total);
    std::vector<std::size_t> test_count(by_class.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        const double share = params.test_fraction * static_cast<double>(by_class[k].size());
        test_count[k] = static_cast<std::size_t>(std::floor(share));
        assigned += test_count[k];
        remainders.emplace_back(share - std::floor(share), k);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto target = static_cast<std::size_t>(std::llround(exact_total));
    for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i, ++assigned)
        ++test_count[remainders[i].second];

    Split split;
    split.inductive = params.inductive;
    split.train_unlabeled = unlabeled;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        std::vector<int> members = by_class[k];
        std::size_t train_count = static_cast<std::size_t>(params.per_class_train);
        std::size_t val_count = static_cast<std::size_t>(params.per_class_val);
        if (params.train_share > 0.0) {
            const std::size_t rest = members.size() - std::min(members.size(), test_count[k]);
            train_count = static_cast<std::size_t>(std::llround(params.train_share * static_cast<double>(rest)));
            val_count = rest - train_count;
        }
        const std::size_t need = train_count + val_count + test_count[k];
        require(members.size() >= need, ErrorKind::split,
                "class " + std::to_string(k) + " has " + std::to_string(members.size()) + " nodes but the split needs " +
                    std::to_string(need));
        // Transductive splits test on every remaining labeled node.
        if (!params.inductive) test_count[k] = members.size() - need + test_count[k];
        std::shuffle(members.begin(), members.end(), rng);
        auto it = members.begin();
        split.train_labeled.insert(split.train_labeled.end(), it, it + static_cast<std::ptrdiff_t>(train_count));
        it += static_cast<std::ptrdiff_t>(train_count);
        split.val.insert(split.val.end(), it, it + static_cast<std::ptrdiff_t>(val_count));
        it += static_cast<std::ptrdiff_t>(val_count);
        split.test.insert(split.test.end(), it, it + static_cast<std::ptrdiff_t>(test_count[k]));
        it += static_cast<std::ptrdiff_t>(test_count[k]);
        split.train_unlabeled.insert(split.train_unlabeled.end(), it, members.end());
    }
    for (auto* set : {&split.train_labeled, &split.train_unlabeled, &split.val, &split.test})
        std::sort(set->begin(), set->end());
    return split;
}

std::vector<int> GraphView::local(const std::vector<int>& original) const {
    std::vector<int> out;
    out.reserve(original.size());
    for (int node : original) {
        require(node >= 0 && static_cast<std::size_t>(node) < from_original.size() && from_original[node] >= 0,
                ErrorKind::split, "node " + std::to_string(node) + " is not part of this view");
        out.push_back(from_original[node]);
    }
    return out;
}

namespace {

GraphView make_view(const Graph& graph, std::vector<int> nodes) {
    std::sort(nodes.begin(), nodes.end());
    GraphView view;
    view.graph = induced_subgraph(graph, nodes);
    view.from_original.assign(static_cast<std::size_t>(graph.n), -1);
    for (std::size_t i = 0; i < nodes.size(); ++i) view.from_original[nodes[i]] = static_cast<int>(i);
    view.to_original = std::move(nodes);
    return view;
}

GraphView identity_view(const Graph& graph) {
    GraphView view;
    view.graph = graph;
    view.to_original.resize(static_cast<std::size_t>(graph.n));
    std::iota(view.to_original.begin(), view.to_original.end(), 0);
    view.from_original = view.to_original;
    return view;
}

} // namespace

GraphView training_view(const Graph& graph, const Split& split) {
    split.validate(graph.n);
    if (!split.inductive) return identity_view(graph);
    return make_view(graph, split.train_nodes());
}

GraphView validation_view(const Graph& graph, const Split& split) {
    split.validate(graph.n);
    if (!split.inductive) return identity_view(graph);
    std::vector<int> nodes = split.train_nodes();
    nodes.insert(nodes.end(), split.val.begin(), split.val.end());
    return make_view(graph, std::move(nodes));
}

GraphView evaluation_view(const Graph& graph, const Split& split) {
    split.validate(graph.n);
    if (!split.inductive) return identity_view(graph);
    std::vector<int> nodes = split.train_nodes();
    nodes.insert(nodes.end(), split.val.begin(), split.val.end());
    nodes.insert(nodes.end(), split.test.begin(), split.test.end());
    if (nodes.size() == static_cast<std::size_t>(graph.n)) return identity_view(graph);
    return make_view(graph, std::move(nodes));
}

void save_split(const Split& split, const std::filesystem::path& file) {
    nlohmann::json j = {{"train_labeled", split.train_labeled},
                        {"train_unlabeled", split.train_unlabeled},
                        {"val", split.val},
                        {"test", split.test},
                        {"inductive", split.inductive}};
    std::ofstream out = io::open_output(file);
    out << j.dump(1) << '\n';
}

Split load_split(const std::filesystem::path& file) {
    std::ifstream in = io::open_input(file);
    nlohmann::json j;
    try {
        in >> j;
        Split split;
        for (const auto& [key, value] : j.items()) {
            if (key == "train_labeled") split.train_labeled = value.get<std::vector<int>>();
            else if (key == "train_unlabeled") split.train_unlabeled = value.get<std::vector<int>>();
            else if (key == "val") split.val = value.get<std::vector<int>>();
            else if (key == "test") split.test = value.get<std::vector<int>>();
            else if (key == "inductive") split.inductive = value.get<bool>();
            else if (key == "provenance") continue;
            else fail(ErrorKind::parse, file.string() + ": unknown split key \"" + key + "\"");
        }
        for (const char* key : {"train_labeled", "train_unlabeled", "val", "test", "inductive"})
            require(j.contains(key), ErrorKind::parse, file.string() + ": missing key \"" + key + "\"");
        return split;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, file.string() + ": " + e.what());
    }
}

} // namespace advgraph
