#include "advgraph/attacks.hpp"

#include "advgraph/error.hpp"
#include "json.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace advgraph {

namespace {

// Slots with s > 0 by descending s, ties by position.
std::vector<std::size_t> descending_positive(std::span<const double> s) {
    std::vector<std::size_t> order;
    order.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] > 0.0) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    return order;
}

std::vector<double> local_remainders(const Budget& budget, std::int32_t n) {
    std::vector<double> rem(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    if (budget.has_local())
        for (std::int32_t u = 0; u < n; ++u)
            if (budget.local(u) != Budget::unbounded) rem[u] = static_cast<double>(budget.local(u));
    return rem;
}

std::int32_t node_bound(std::span<const Edge> slots, const Budget& budget) {
    std::int32_t n = static_cast<std::int32_t>(budget.local_delta.size());
    for (const Edge& e : slots) n = std::max(n, e.v + 1);
    return n;
}

double sum_clipped_shift(std::span<const double> s, double mu) {
    double total = 0.0;
    for (double x : s) total += std::clamp(x - mu, 0.0, 1.0);
    return total;
}

} // namespace

std::string to_string(LocalRule rule) {
    switch (rule) {
    case LocalRule::half_degree: return "half_degree";
    case LocalRule::quarter_degree: return "quarter_degree";
    case LocalRule::unlimited: return "unlimited";
    }
    return "?";
}

LocalRule parse_local_rule(const std::string& name) {
    if (name == "half_degree") return LocalRule::half_degree;
    if (name == "quarter_degree") return LocalRule::quarter_degree;
    if (name == "unlimited" || name == "none") return LocalRule::unlimited;
    fail(ErrorKind::config, "unknown local rule \"" + name + "\"");
}

std::string to_string(AttackKind kind) {
    switch (kind) {
    case AttackKind::pgd: return "pgd";
    case AttackKind::prbcd: return "prbcd";
    case AttackKind::lrbcd: return "lrbcd";
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::dice: return "dice";
    }
    return "?";
}

AttackKind parse_attack_kind(const std::string& name) {
    for (AttackKind k : {AttackKind::pgd, AttackKind::prbcd, AttackKind::lrbcd, AttackKind::fgsm, AttackKind::dice})
        if (to_string(k) == name) return k;
    fail(ErrorKind::config, "unknown attack \"" + name + "\"");
}

Budget compute_budgets(const Graph& graph, std::span<const int> targets, double epsilon, LocalRule rule) {
    require(!targets.empty(), ErrorKind::parameter, "attack needs at least one target node");
    require(std::isfinite(epsilon) && epsilon >= 0.0, ErrorKind::parameter, "epsilon must be non-negative");
    const std::vector<int> deg = degrees(graph);
    std::int64_t degree_sum = 0;
    for (int t : targets) {
        require(t >= 0 && t < graph.n, ErrorKind::parameter, "target node out of range");
        degree_sum += deg[t];
    }
    Budget budget;
    // nearbyint under the default rounding mode rounds half to even.
    budget.global_delta = static_cast<std::int64_t>(std::nearbyint(epsilon * static_cast<double>(degree_sum) / 2.0));
    if (rule != LocalRule::unlimited) {
        const int divisor = rule == LocalRule::half_degree ? 2 : 4;
        budget.local_delta.resize(deg.size());
        for (std::size_t u = 0; u < deg.size(); ++u) budget.local_delta[u] = deg[u] / divisor;
    }
    return budget;
}

std::vector<double> project_global(std::span<const double> s, double delta) {
    std::vector<double> out(s.size());
    if (delta <= 0.0) return out;
    double clipped = 0.0;
    double top = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        out[i] = std::clamp(s[i], 0.0, 1.0);
        clipped += out[i];
        top = std::max(top, s[i]);
    }
    if (clipped <= delta) return out;

    double lo = 0.0;  // sum > delta
    double hi = top;  // sum == 0 <= delta
    for (int iter = 0; iter < 200 && hi - lo > 1e-14 * std::max(1.0, top); ++iter) {
        const double mid = 0.5 * (lo + hi);
        (sum_clipped_shift(s, mid) > delta ? lo : hi) = mid;
    }
    // Sharpen with the closed form on the active set found by bisection.
    double mu = hi;
    double free_sum = 0.0;
    double ones = 0.0;
    std::size_t free_count = 0;
    for (double x : s) {
        const double shifted = x - hi;
        if (shifted >= 1.0) ones += 1.0;
        else if (shifted > 0.0) {
            free_sum += x;
            ++free_count;
        }
    }
    if (free_count > 0) {
        const double exact = (free_sum + ones - delta) / static_cast<double>(free_count);
        if (exact >= lo && exact <= hi && sum_clipped_shift(s, exact) <= delta) mu = exact;
    }
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = std::clamp(s[i] - mu, 0.0, 1.0);
    return out;
}

double knapsack_value(std::span<const double> s, std::span<const double> p) {
    double value = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] > 0.0 && p[i] > 0.0) value += s[i] * p[i] / std::min(s[i], 1.0);
    return value;
}

std::vector<double> project_local_global(std::span<const Edge> slots, std::span<const double> s,
                                         const Budget& budget) {
    return project_local_global(slots, s, static_cast<double>(budget.global_delta), budget.local_delta);
}

std::vector<double> project_local_global(std::span<const Edge> slots, std::span<const double> s, double delta,
                                         std::span<const std::int64_t> local_delta) {
    require(slots.size() == s.size(), ErrorKind::constraint, "slot/value length mismatch");
    const Budget budget{0, std::vector<std::int64_t>(local_delta.begin(), local_delta.end())};
    const std::int32_t n = node_bound(slots, budget);
    const std::vector<std::size_t> order = descending_positive(s);

    // Partial assignment: each slot gets as much as every remainder allows.
    std::vector<double> partial(s.size(), 0.0);
    {
        double global = delta;
        std::vector<double> local = local_remainders(budget, n);
        for (std::size_t i : order) {
            if (global <= 0.0) break;
            const Edge e = slots[i];
            const double p = std::min({std::min(s[i], 1.0), global, local[e.u], local[e.v]});
            if (p <= 0.0) continue;
            partial[i] = p;
            global -= p;
            local[e.u] -= p;
            local[e.v] -= p;
        }
    }
    // Full-or-skip: a slot enters with its whole clipped weight or not at all.
    // This dominates the variant that stops at the first slot exceeding the
    // global remainder, and it wins on some instances where partial
    // assignment exhausts a shared node budget early.
    std::vector<double> whole(s.size(), 0.0);
    {
        double global = delta;
        std::vector<double> local = local_remainders(budget, n);
        for (std::size_t i : order) {
            const Edge e = slots[i];
            const double w = std::min(s[i], 1.0);
            if (w > global || w > local[e.u] || w > local[e.v]) continue;
            whole[i] = w;
            global -= w;
            local[e.u] -= w;
            local[e.v] -= w;
        }
    }
    return knapsack_value(s, whole) > knapsack_value(s, partial) ? whole : partial;
}

std::vector<Edge> discretize_sample(std::span<const Edge> slots, std::span<const double> p, const Budget& budget,
                                    const FlipLoss& loss, int tries, Rng& rng) {
    require(slots.size() == p.size(), ErrorKind::constraint, "slot/value length mismatch");
    std::vector<Edge> best;
    double best_loss = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int t = 0; t < tries; ++t) {
        std::vector<Edge> draw;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (rng.uniform() < p[i]) draw.push_back(slots[i]);
        if (static_cast<std::int64_t>(draw.size()) > budget.global_delta) continue;
        std::sort(draw.begin(), draw.end());
        const double value = loss(draw);
        if (!accepted || value > best_loss) {
            best = std::move(draw);
            best_loss = value;
            accepted = true;
        }
    }
    if (accepted) return best;
    const std::vector<std::size_t> order = descending_positive(p);
    const auto take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max<std::int64_t>(0, budget.global_delta)));
    for (std::size_t k = 0; k < take; ++k) best.push_back(slots[order[k]]);
    std::sort(best.begin(), best.end());
    return best;
}

std::vector<Edge> discretize_knapsack(std::span<const Edge> slots, std::span<const double> s, const Budget& budget) {
    require(slots.size() == s.size(), ErrorKind::constraint, "slot/value length mismatch");
    const std::int32_t n = node_bound(slots, budget);
    std::vector<double> local = local_remainders(budget, n);
    std::int64_t global = budget.global_delta;
    std::vector<Edge> out;
    for (std::size_t i : descending_positive(s)) {
        if (global < 1) break;
        const Edge e = slots[i];
        if (local[e.u] < 1.0 || local[e.v] < 1.0) continue;
        out.push_back(e);
        --global;
        local[e.u] -= 1.0;
        local[e.v] -= 1.0;
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool is_feasible(std::int32_t n, std::span<const Edge> flips, const Budget& budget) {
    if (static_cast<std::int64_t>(flips.size()) > budget.global_delta) return false;
    std::vector<Edge> sorted(flips.begin(), flips.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return false;
    std::vector<std::int64_t> incident(static_cast<std::size_t>(n), 0);
    for (const Edge& e : sorted) {
        if (e.u < 0 || e.u >= e.v || e.v >= n) return false;
        ++incident[e.u];
        ++incident[e.v];
    }
    for (std::int32_t u = 0; u < n; ++u)
        if (incident[u] > budget.local(u)) return false;
    return true;
}

double attack_loss(const AttackProblem& problem, const std::vector<Edge>& flips) {
    RelaxedPerturbation p{problem.graph->n, flips, std::vector<double>(flips.size(), 1.0)};
    ForwardPass pass = forward(*problem.model, *problem.graph, &p, Mode::eval);
    return pass.tape.value(loss_tanh_margin(pass, problem.labels, problem.targets))(0, 0);
}

namespace {

struct EdgeGradient {
    double loss = 0.0;
    std::vector<double> grad;
};

EdgeGradient edge_gradient(const AttackProblem& problem, const Graph& graph, const std::vector<Edge>& slots,
                           const std::vector<double>& values) {
    RelaxedPerturbation p{graph.n, slots, values};
    ForwardPass pass = forward(*problem.model, graph, &p, Mode::eval);
    const Var loss = loss_tanh_margin(pass, problem.labels, problem.targets);
    EdgeGradient out;
    out.loss = pass.tape.value(loss)(0, 0);
    out.grad = backward_edges(pass, loss);
    return out;
}

void check_problem(const AttackProblem& problem) {
    require(problem.model && problem.graph, ErrorKind::internal, "attack problem without model or graph");
    require(problem.labels.size() == static_cast<std::size_t>(problem.graph->n), ErrorKind::dimension,
            "attack labels must have one entry per node");
}

std::vector<Edge> all_slots(std::int32_t n) {
    std::vector<Edge> slots;
    slots.reserve(static_cast<std::size_t>(slot_count(n)));
    for (std::int32_t u = 0; u < n; ++u)
        for (std::int32_t v = u + 1; v < n; ++v) slots.push_back({u, v});
    return slots;
}

/// Block of distinct slot indices with their relaxed values, kept sorted by slot.
struct Block {
    std::vector<std::int64_t> index;
    std::vector<double> values;

    std::vector<Edge> edges(std::int64_t n) const {
        std::vector<Edge> out(index.size());
        for (std::size_t i = 0; i < index.size(); ++i) out[i] = slot_from_index(n, index[i]);
        return out;
    }
};

// Adds `count` slot indices drawn uniformly from [0, total) outside `taken`.
// Callers keep |taken| + count <= total / 2, so rejection stays cheap.
void draw_fresh(std::unordered_set<std::int64_t>& taken, std::int64_t total, std::size_t count, Rng& rng,
                std::vector<std::int64_t>& out) {
    while (count > 0) {
        const auto candidate = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
        if (!taken.insert(candidate).second) continue;
        out.push_back(candidate);
        --count;
    }
}

void sort_block(Block& block) {
    std::vector<std::size_t> order(block.index.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return block.index[a] < block.index[b]; });
    Block sorted;
    for (std::size_t i : order) {
        sorted.index.push_back(block.index[i]);
        sorted.values.push_back(block.values[i]);
    }
    block = std::move(sorted);
}

// Replaces the zero-valued slots, and the lowest-valued ones until at least
// half the block is fresh.
void resample(Block& block, std::int64_t total, Rng& rng) {
    const std::size_t b = block.index.size();
    std::size_t zeros = 0;
    for (double v : block.values) zeros += v == 0.0;
    const std::size_t replace = std::max(zeros, (b + 1) / 2);

    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return block.values[x] < block.values[y]; });
    Block next;
    std::unordered_set<std::int64_t> taken;
    for (std::size_t k = replace; k < b; ++k) {
        next.index.push_back(block.index[order[k]]);
        next.values.push_back(block.values[order[k]]);
        taken.insert(block.index[order[k]]);
    }
    draw_fresh(taken, total, replace, rng, next.index);
    next.values.resize(next.index.size(), 0.0);
    sort_block(next);
    block = std::move(next);
}

AttackResult block_attack(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng,
                          bool local) {
    check_problem(problem);
    const Graph& graph = *problem.graph;
    AttackResult result;
    const std::int64_t delta = budget.global_delta;
    require(delta >= 0, ErrorKind::config, "global budget must be non-negative");
    require(config.block_size >= delta, ErrorKind::config,
            "block size " + std::to_string(config.block_size) + " is smaller than the budget " + std::to_string(delta));
    require(config.epochs >= 1 && config.finetune_epochs >= 0, ErrorKind::config, "attack epochs must be positive");
    if (delta == 0 || problem.targets.empty() || graph.n < 2) return result;

    const std::int64_t total = slot_count(graph.n);
    // A block covering more than half of the slot space is widened to all of it.
    const bool full = config.block_size * 2 > total;
    const std::int64_t b = full ? total : config.block_size;

    Rng block_rng = rng.derive("block");
    Block block;
    if (full) {
        block.index.resize(static_cast<std::size_t>(total));
        std::iota(block.index.begin(), block.index.end(), std::int64_t{0});
    } else {
        std::unordered_set<std::int64_t> taken;
        draw_fresh(taken, total, static_cast<std::size_t>(b), block_rng, block.index);
        std::sort(block.index.begin(), block.index.end());
    }
    block.values.assign(block.index.size(), 0.0);

    const double alpha = config.lr_base * config.lr_multiplier * static_cast<double>(delta) /
                         std::sqrt(static_cast<double>(b));
    Block best = block;
    double best_loss = -std::numeric_limits<double>::infinity();

    auto step = [&](double lr) {
        const std::vector<Edge> slots = block.edges(graph.n);
        const EdgeGradient g = edge_gradient(problem, graph, slots, block.values);
        if (g.loss > best_loss) {
            best_loss = g.loss;
            best = block;
        }
        std::vector<double> s(block.values.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = block.values[i] + lr * g.grad[i];
        block.values = local ? project_local_global(slots, s, budget) : project_global(s, static_cast<double>(delta));
    };

    for (int t = 1; t <= config.epochs; ++t) {
        step(alpha);
        if (!full && t < config.epochs) resample(block, total, block_rng);
    }
    block = best;
    for (int f = 0; f < config.finetune_epochs; ++f) step(alpha / std::sqrt(static_cast<double>(f + 1)));
    // The state after the last update has not been scored yet.
    {
        const std::vector<Edge> slots = block.edges(graph.n);
        RelaxedPerturbation p{graph.n, slots, block.values};
        ForwardPass pass = forward(*problem.model, graph, &p, Mode::eval);
        const double last = pass.tape.value(loss_tanh_margin(pass, problem.labels, problem.targets))(0, 0);
        if (last > best_loss) best = block;
    }

    const std::vector<Edge> slots = best.edges(graph.n);
    if (local) {
        result.flips = discretize_knapsack(slots, best.values, budget);
    } else {
        Rng sample_rng = rng.derive("discretize");
        result.flips = discretize_sample(slots, best.values, budget.global_only(),
                                         [&](const std::vector<Edge>& flips) { return attack_loss(problem, flips); },
                                         config.sample_tries, sample_rng);
    }
    return result;
}

} // namespace

AttackResult attack_prbcd(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng) {
    return block_attack(problem, budget.global_only(), config, rng, false);
}

AttackResult attack_lrbcd(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng) {
    return block_attack(problem, budget, config, rng, true);
}

AttackResult attack_pgd(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng) {
    check_problem(problem);
    const Graph& graph = *problem.graph;
    require(graph.n <= config.pgd_max_nodes, ErrorKind::capacity,
            "PGD holds all n(n-1)/2 slots and is limited to " + std::to_string(config.pgd_max_nodes) +
                " nodes; use prbcd for larger graphs");
    AttackResult result;
    const double delta = static_cast<double>(budget.global_delta);
    if (budget.global_delta == 0 || problem.targets.empty() || graph.n < 2) return result;

    const std::vector<Edge> slots = all_slots(graph.n);
    std::vector<double> values(slots.size(), 0.0);
    for (int t = 1; t <= config.epochs; ++t) {
        const EdgeGradient g = edge_gradient(problem, graph, slots, values);
        const double lr = config.pgd_lr * delta / std::sqrt(static_cast<double>(t));
        for (std::size_t i = 0; i < values.size(); ++i) values[i] += lr * g.grad[i];
        values = project_global(values, delta);
    }
    Rng sample_rng = rng.derive("discretize");
    result.flips = discretize_sample(slots, values, budget.global_only(),
                                     [&](const std::vector<Edge>& flips) { return attack_loss(problem, flips); },
                                     config.sample_tries, sample_rng);
    return result;
}

AttackResult attack_fgsm_greedy(const AttackProblem& problem, const Budget& budget, const AttackConfig& config) {
    check_problem(problem);
    const Graph& graph = *problem.graph;
    require(graph.n <= config.pgd_max_nodes, ErrorKind::capacity,
            "FGSM scores every slot and is limited to " + std::to_string(config.pgd_max_nodes) + " nodes");
    AttackResult result;
    if (problem.targets.empty() || graph.n < 2) return result;

    const std::vector<Edge> slots = all_slots(graph.n);
    const std::vector<double> zeros(slots.size(), 0.0);
    std::vector<bool> flipped(slots.size(), false);
    std::vector<std::int64_t> used(static_cast<std::size_t>(graph.n), 0);
    for (std::int64_t round = 0; round < budget.global_delta; ++round) {
        const Graph current = apply_flips(graph, result.flips);
        const EdgeGradient g = edge_gradient(problem, current, slots, zeros);
        std::int64_t choice = -1;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const Edge e = slots[i];
            if (flipped[i] || used[e.u] >= budget.local(e.u) || used[e.v] >= budget.local(e.v)) continue;
            if (choice < 0 || g.grad[i] > g.grad[static_cast<std::size_t>(choice)]) choice = static_cast<std::int64_t>(i);
        }
        if (choice < 0) {
            result.warnings.push_back("fgsm: no feasible slot left after " + std::to_string(round) + " flips");
            break;
        }
        const Edge e = slots[static_cast<std::size_t>(choice)];
        flipped[static_cast<std::size_t>(choice)] = true;
        ++used[e.u];
        ++used[e.v];
        result.flips.insert(std::upper_bound(result.flips.begin(), result.flips.end(), e), e);
    }
    return result;
}

AttackResult attack_dice(const Graph& graph, std::span<const int> targets, std::span<const int> labels,
                         const Budget& budget, Rng rng) {
    require(labels.size() == static_cast<std::size_t>(graph.n), ErrorKind::dimension,
            "DICE labels must have one entry per node");
    AttackResult result;
    if (budget.global_delta == 0 || targets.empty()) return result;

    std::vector<bool> is_target(static_cast<std::size_t>(graph.n), false);
    for (int t : targets) is_target[t] = true;
    auto known = [&](int u) { return labels[u] != kUnknownLabel; };

    std::vector<Edge> removals;
    for (const Edge& e : graph.edges)
        if ((is_target[e.u] || is_target[e.v]) && known(e.u) && known(e.v) && labels[e.u] == labels[e.v])
            removals.push_back(e);
    std::vector<Edge> insertions;
    for (std::int32_t u = 0; u < graph.n; ++u)
        for (std::int32_t v = u + 1; v < graph.n; ++v)
            if ((is_target[u] || is_target[v]) && known(u) && known(v) && labels[u] != labels[v] &&
                !graph.has_edge({u, v}))
                insertions.push_back({u, v});

    std::vector<std::int64_t> used(static_cast<std::size_t>(graph.n), 0);
    while (static_cast<std::int64_t>(result.flips.size()) < budget.global_delta) {
        const bool remove = rng.bernoulli(0.5);
        std::vector<Edge>* pool = remove ? &removals : &insertions;
        if (pool->empty()) pool = remove ? &insertions : &removals;
        if (pool->empty()) break;
        const std::size_t k = rng.below(pool->size());
        const Edge e = (*pool)[k];
        (*pool)[k] = pool->back();
        pool->pop_back();
        if (used[e.u] >= budget.local(e.u) || used[e.v] >= budget.local(e.v)) continue;
        ++used[e.u];
        ++used[e.v];
        result.flips.push_back(e);
    }
    if (static_cast<std::int64_t>(result.flips.size()) < budget.global_delta)
        result.warnings.push_back("dice: candidate pool exhausted after " + std::to_string(result.flips.size()) +
                                  " of " + std::to_string(budget.global_delta) + " flips");
    std::sort(result.flips.begin(), result.flips.end());
    return result;
}

AttackResult run_attack(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng) {
    AttackResult result;
    Budget family = budget;
    switch (config.kind) {
    case AttackKind::prbcd:
        family = budget.global_only();
        result = attack_prbcd(problem, budget, config, rng);
        break;
    case AttackKind::pgd:
        family = budget.global_only();
        result = attack_pgd(problem, budget, config, rng);
        break;
    case AttackKind::lrbcd: result = attack_lrbcd(problem, budget, config, rng); break;
    case AttackKind::fgsm: result = attack_fgsm_greedy(problem, budget, config); break;
    case AttackKind::dice: result = attack_dice(*problem.graph, problem.targets, problem.labels, budget, rng); break;
    }
    require(is_feasible(problem.graph->n, result.flips, family), ErrorKind::internal,
            to_string(config.kind) + " produced a perturbation outside its budget");
    return result;
}

void save_perturbation(const Graph& graph, std::span<const Edge> flips, const std::filesystem::path& file) {
    nlohmann::json out = nlohmann::json::array();
    for (const Edge& e : flips) out.push_back({e.u, e.v, graph.has_edge(e) ? "del" : "add"});
    io::open_output(file) << out.dump() << '\n';
}

std::vector<Edge> load_perturbation(const Graph& graph, const std::filesystem::path& file) {
    nlohmann::json in;
    try {
        in = nlohmann::json::parse(io::open_input(file));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, file.string() + ": " + e.what());
    }
    require(in.is_array(), ErrorKind::parse, file.string() + ": expected a JSON list of [u, v, op]");
    std::vector<Edge> flips;
    for (const auto& item : in) {
        require(item.is_array() && item.size() == 3 && item[0].is_number_integer() && item[1].is_number_integer() &&
                    item[2].is_string(),
                ErrorKind::parse, file.string() + ": malformed entry " + item.dump());
        const int a = item[0].get<int>();
        const int b = item[1].get<int>();
        require(a != b && a >= 0 && b >= 0 && a < graph.n && b < graph.n, ErrorKind::dimension,
                file.string() + ": entry " + item.dump() + " is not a slot of this graph");
        const Edge e = make_edge(a, b);
        const std::string op = item[2].get<std::string>();
        require(op == "add" || op == "del", ErrorKind::parse, file.string() + ": op must be add or del");
        require((op == "del") == graph.has_edge(e), ErrorKind::constraint,
                file.string() + ": entry " + item.dump() + " does not match the graph");
        flips.push_back(e);
    }
    const std::size_t count = flips.size();
    flips = canonical_edges(std::move(flips), graph.n);
    require(flips.size() == count, ErrorKind::constraint, file.string() + ": duplicate entries");
    return flips;
}

} // namespace advgraph
