#pragma once

#include "advgraph/attacks.hpp"
#include "advgraph/model.hpp"
#include "advgraph/synth.hpp"
#include "advgraph/training.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace advgraph {

/// Sign chosen so the first nonzero coefficient is positive, then scaled to unit ℓ1 norm.
std::vector<double> normalize_gamma(std::span<const double> gamma);

inline constexpr std::int32_t kMaxDiffusionNodes = 5000;
inline constexpr std::int32_t kMaxSpectralNodes = 2000;

/// Dense Σ_k c_k B_k for a polynomial model (identity for an MLP).
Matrix total_diffusion(const DiffusionModel& model, const Graph& graph);

/// I - D^-1/2 A D^-1/2, dense; isolated nodes get a unit diagonal.
Matrix normalized_laplacian(const Graph& graph);

struct SymmetricEigen {
    std::vector<double> values;  ///< ascending
    Matrix vectors;              ///< column j belongs to values[j]
    int sweeps = 0;
};

inline constexpr double kJacobiTolerance = 1e-10;
inline constexpr int kJacobiMaxSweeps = 100;

/// Cyclic Jacobi until the off-diagonal Frobenius norm is at most `tolerance`.
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance = kJacobiTolerance,
                            int max_sweeps = kJacobiMaxSweeps);

struct SpectralFilter {
    std::vector<double> eigenvalues;  ///< of the normalized Laplacian, ascending
    std::vector<double> response;     ///< g(λ_i) = v_iᵀ T v_i
    Matrix eigenvectors;
};

SpectralFilter spectral_filter(const DiffusionModel& model, const Graph& graph);

struct AttackSpec {
    AttackKind kind = AttackKind::prbcd;
    double epsilon = 0.0;
    LocalRule local_rule = LocalRule::unlimited;

    friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

struct EvalRow {
    AttackSpec attack;
    double clean_acc = 0.0;
    double robust_acc = 0.0;
    std::int64_t delta = 0;    ///< global budget
    std::vector<Edge> flips;   ///< in original node indices
    std::uint64_t seed = 0;
};

struct EvalReport {
    double clean_acc = 0.0;
    std::vector<EvalRow> rows;
    std::vector<std::string> warnings;
};

/// Clean and per-attack robust accuracy over split.test on the evaluation view.
/// `base` supplies the attack hyperparameters; its kind is replaced per row.
EvalReport evaluate(const DiffusionModel& model, const Graph& graph, const Split& split,
                    std::span<const AttackSpec> attacks, const AttackConfig& base, std::uint64_t seed);

/// The attack is computed against the wrapped model; predictions come from the wrapper.
EvalReport evaluate(const MemorizedModel& model, const Graph& graph, const Split& split,
                    std::span<const AttackSpec> attacks, const AttackConfig& base, std::uint64_t seed);

void save_spectrum(const SpectralFilter& filter, const std::filesystem::path& file,
                   const std::vector<std::string>& header_comments = {});
void save_diffusion(const Matrix& diffusion, const std::filesystem::path& file,
                    const std::vector<std::string>& header_comments = {});
void save_evaluation(const std::vector<EvalRow>& rows, const std::filesystem::path& file,
                     const std::vector<std::string>& header_comments = {});

} // namespace advgraph
