#pragma once

#include "advgraph/graph.hpp"
#include "advgraph/model.hpp"
#include "advgraph/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace advgraph {

enum class LocalRule { half_degree, quarter_degree, unlimited };

std::string to_string(LocalRule rule);
LocalRule parse_local_rule(const std::string& name);

struct Budget {
    static constexpr std::int64_t unbounded = std::numeric_limits<std::int64_t>::max();

    std::int64_t global_delta = 0;
    /// Per-node limits; empty means no local constraint at all.
    std::vector<std::int64_t> local_delta;

    bool has_local() const noexcept { return !local_delta.empty(); }
    std::int64_t local(std::int32_t u) const noexcept {
        return local_delta.empty() ? unbounded : local_delta[static_cast<std::size_t>(u)];
    }
    /// The same global budget without local limits.
    Budget global_only() const { return Budget{global_delta, {}}; }
};

/// Δ = round-half-even(ε Σ_{u ∈ targets} d_u / 2); local limits ⌊d_u/2⌋, ⌊d_u/4⌋ or none.
Budget compute_budgets(const Graph& graph, std::span<const int> targets, double epsilon, LocalRule rule);

/// Euclidean projection onto {p ∈ [0,1]^m : Σ p ≤ Δ}.
std::vector<double> project_global(std::span<const double> s, double delta);

/// Greedy solution of the relaxed multi-constraint knapsack
/// max Σ S⊙C s.t. P = clip(S)⊙C respects the global and every local budget.
std::vector<double> project_local_global(std::span<const Edge> slots, std::span<const double> s,
                                         const Budget& budget);
/// Same with a possibly fractional global budget; empty `local_delta` means unlimited.
std::vector<double> project_local_global(std::span<const Edge> slots, std::span<const double> s, double delta,
                                         std::span<const std::int64_t> local_delta);

/// Objective Σ S⊙C of a projected vector, with C = P / clip(S).
double knapsack_value(std::span<const double> s, std::span<const double> p);

using FlipLoss = std::function<double(const std::vector<Edge>&)>;

/// Bernoulli sampling of the relaxed values; draws above the global budget are
/// rejected, the accepted draw with the largest loss wins (first on ties).
/// Falls back to the top-Δ slots when no draw is accepted.
std::vector<Edge> discretize_sample(std::span<const Edge> slots, std::span<const double> p, const Budget& budget,
                                    const FlipLoss& loss, int tries, Rng& rng);

/// Unit-weight greedy by descending S: a slot is taken iff the global and both
/// local remainders are at least one.
std::vector<Edge> discretize_knapsack(std::span<const Edge> slots, std::span<const double> s, const Budget& budget);

/// True iff the flip set has no duplicates and respects both budget families.
bool is_feasible(std::int32_t n, std::span<const Edge> flips, const Budget& budget);

enum class AttackKind { pgd, prbcd, lrbcd, fgsm, dice };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

struct AttackConfig {
    AttackKind kind = AttackKind::prbcd;
    std::int64_t block_size = 10000;
    int epochs = 100;
    int finetune_epochs = 25;
    double lr_base = 1.0;        ///< block attacks: α = lr_base · lr_multiplier · Δ / √b
    double lr_multiplier = 1.0;
    double pgd_lr = 0.1;         ///< PGD: α_t = pgd_lr · Δ / √t
    int sample_tries = 20;
    std::int32_t pgd_max_nodes = 3000;
};

struct AttackResult {
    std::vector<Edge> flips;  ///< sorted slots to toggle
    std::vector<std::string> warnings;
};

/// Everything an attack needs besides its configuration. `labels` has one
/// entry per graph node; only the target entries are read (DICE reads all).
struct AttackProblem {
    const DiffusionModel* model = nullptr;
    const Graph* graph = nullptr;
    std::span<const int> targets;
    std::span<const int> labels;
};

AttackResult attack_prbcd(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng);
AttackResult attack_lrbcd(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng);
AttackResult attack_pgd(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng);
AttackResult attack_fgsm_greedy(const AttackProblem& problem, const Budget& budget, const AttackConfig& config);
AttackResult attack_dice(const Graph& graph, std::span<const int> targets, std::span<const int> labels,
                         const Budget& budget, Rng rng);

/// Dispatch on config.kind. Feasibility of the result is checked exactly.
AttackResult run_attack(const AttackProblem& problem, const Budget& budget, const AttackConfig& config, Rng rng);

/// Mean tanh-margin of the targets on the graph with `flips` applied (eval mode).
double attack_loss(const AttackProblem& problem, const std::vector<Edge>& flips);

/// Perturbation file: [[u, v, "add" | "del"], ...] relative to `graph`.
void save_perturbation(const Graph& graph, std::span<const Edge> flips, const std::filesystem::path& file);
std::vector<Edge> load_perturbation(const Graph& graph, const std::filesystem::path& file);

} // namespace advgraph
