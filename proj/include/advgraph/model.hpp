#pragma once

#include "advgraph/autodiff.hpp"
#include "advgraph/graph.hpp"
#include "advgraph/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace advgraph {

enum class Basis {
    none,       ///< MLP only
    monomial,   ///< Σ γ_k L̊^k (GPRGNN)
    chebyshev,  ///< Σ c_k T_k(L) with L the shifted Laplacian (ChebNetII)
    appnp,      ///< monomial with frozen personalized-PageRank coefficients
    gcn,        ///< two propagate-transform layers over L̊
};

/// Normalization of the Chebyshev interpolation weights.
enum class ChebNormalization {
    interpolation,  ///< 2/(K+1), k = 0 term halved
    printed,        ///< 2/(K-1), no halving
};

std::string to_string(Basis basis);
Basis parse_basis(const std::string& name);

struct ModelSpec {
    Basis basis = Basis::monomial;
    int K = 10;
    int hidden = 16;
    int mlp_layers = 2;
    int in_dim = 0;
    int num_classes = 0;
    double alpha = 0.1;            ///< APPNP teleport
    double dropout = 0.2;          ///< hidden-layer dropout (train mode)
    double input_dropout = 0.0;    ///< feature dropout (train mode)
    ChebNormalization cheb = ChebNormalization::interpolation;
};

struct DenseLayer {
    Matrix weight;             ///< in x out
    std::vector<double> bias;  ///< out

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct DiffusionModel {
    ModelSpec spec;
    std::vector<DenseLayer> layers;
    std::vector<double> gamma;  ///< K+1 coefficients; empty for gcn
    std::uint64_t seed = 0;

    bool gamma_trainable() const noexcept { return spec.basis == Basis::monomial || spec.basis == Basis::chebyshev; }
    OperatorKind operator_kind() const noexcept {
        return spec.basis == Basis::chebyshev ? OperatorKind::shifted_laplacian : OperatorKind::adjacency_loops;
    }
};

/// Glorot-uniform weights, zero biases; γ per basis (random for monomial,
/// ones for chebyshev, PPR for appnp, [1] for none).
DiffusionModel init_params(const ModelSpec& spec, std::uint64_t seed);

/// γ_l = α(1-α)^l for l < K, γ_K = (1-α)^K.
std::vector<double> ppr_coefficients(double alpha, int K);

/// Chebyshev-basis coefficients c = W γ, W_kj = w T_k(x_j) at the Chebyshev
/// nodes x_j = cos((j + 1/2) π / (K + 1)).
std::vector<double> chebyshev_coefficients(std::span<const double> gamma, ChebNormalization norm);
Matrix chebyshev_weight_matrix(int K, ChebNormalization norm);

/// Dense basis matrices B_k (monomial: L̊^k, chebyshev: T_k(L)), without coefficients.
std::vector<Matrix> basis_matrices(const DiffusionModel& model, const Graph& graph);
/// Coefficients multiplying basis_matrices() in the forward pass.
std::vector<double> effective_coefficients(const DiffusionModel& model);

enum class Mode { train, eval };

/// One recorded forward pass. Losses are appended to the same tape.
struct ForwardPass {
    Tape tape;
    Var logits;
    Var features;
    std::vector<Var> weights;
    std::vector<Var> biases;
    Var gamma;         ///< invalid for frozen or absent coefficients
    Var edge_values;   ///< invalid without a perturbation
    std::size_t num_slots = 0;

    const Matrix& logit_values() const { return tape.value(logits); }
};

/// `dropout_rng` must be provided in train mode when any dropout rate is positive.
ForwardPass forward(const DiffusionModel& model, const Graph& graph, const RelaxedPerturbation* perturbation,
                    Mode mode, Rng* dropout_rng = nullptr);

/// Eval-mode logits, no tape retained by the caller.
Matrix predict_logits(const DiffusionModel& model, const Graph& graph);
std::vector<int> argmax_rows(const Matrix& logits);

Var loss_cross_entropy(ForwardPass& pass, std::span<const int> targets, std::span<const int> index);
Var loss_tanh_margin(ForwardPass& pass, std::span<const int> targets, std::span<const int> index);

struct ParamGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    std::vector<double> gamma;  ///< empty when γ is frozen

    void scale(double s);
};

ParamGrads backward_params(ForwardPass& pass, Var loss);
/// d loss / d p for every perturbation slot, in slot order.
std::vector<double> backward_edges(ForwardPass& pass, Var loss);

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

struct AdamState {
    std::int64_t step = 0;
    std::vector<AdamMoments> weights;
    std::vector<AdamMoments> biases;
    AdamMoments gamma;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Adam with bias correction and L2 weight decay added to the gradient.
/// `step` is the 1-based step count after increment.
void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& moments, std::int64_t step,
                 double lr, double weight_decay);

/// Decay applies to weights and γ, never to biases.
void adam_step(DiffusionModel& model, const ParamGrads& grads, AdamState& state, double lr, double weight_decay);

void save_checkpoint(const DiffusionModel& model, const std::filesystem::path& file);
DiffusionModel load_checkpoint(const std::filesystem::path& file);
std::string checkpoint_json(const DiffusionModel& model);
DiffusionModel checkpoint_from_json(const std::string& text);

} // namespace advgraph
