#pragma once

#include "advgraph/attacks.hpp"
#include "advgraph/model.hpp"
#include "advgraph/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace advgraph {

enum class TrainLoss { cross_entropy, tanh_margin };

std::string to_string(TrainLoss loss);
TrainLoss parse_train_loss(const std::string& name);

struct AdversarialConfig {
    bool enabled = false;
    AttackKind attack = AttackKind::lrbcd;
    double epsilon = 0.2;
    LocalRule local_rule = LocalRule::half_degree;
    /// Inner attack: 20 epochs, no finetuning.
    AttackConfig attack_config{.kind = AttackKind::lrbcd, .epochs = 20, .finetune_epochs = 0};
};

struct TrainConfig {
    int max_epochs = 300;
    int warmup_epochs = 10;  ///< no attack and no early stopping before this many epochs
    int patience = 50;
    double lr = 0.01;
    double weight_decay = 1e-3;
    TrainLoss loss = TrainLoss::cross_entropy;
    AdversarialConfig adversarial;
    bool self_training = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct HistoryRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0;
    bool attacked = false;

    friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

struct TrainResult {
    DiffusionModel model;  ///< parameters of the best validation epoch
    std::vector<HistoryRow> history;
    int best_epoch = 0;
    int attack_calls = 0;
};

/// Fits `init` on the given training targets (original node indices and a
/// label per original node). Adversarial when config.adversarial.enabled.
TrainResult fit(const DiffusionModel& init, const Graph& graph, const Split& split, std::span<const int> train_nodes,
                std::span<const int> train_labels, const TrainConfig& config);

/// Cross-entropy (or the configured loss) on the labeled training nodes, early
/// stopping on the clean validation loss. The adversarial flag is ignored.
TrainResult train_standard(const DiffusionModel& init, const Graph& graph, const Split& split, const TrainConfig& config);

/// Warm-up epochs on the clean training view, then a fresh attack per epoch;
/// early stopping on the loss of the attacked validation view.
TrainResult train_adversarial(const DiffusionModel& init, const Graph& graph, const Split& split,
                              const TrainConfig& config);

struct SelfTrainResult {
    std::vector<int> pseudo_labels;  ///< per original node; kUnknownLabel where none was assigned
    TrainResult teacher;
    TrainResult student;
};

/// Teacher trained on the labeled nodes labels every other training-view node
/// (validation nodes excluded) from the clean graph; a fresh student is then
/// trained on true and pseudo labels, adversarially when configured.
SelfTrainResult self_train(const ModelSpec& spec, const Graph& graph, const Split& split, const TrainConfig& config);

/// Model that replays its clean-graph predictions for any graph on the same nodes.
struct MemorizedModel {
    DiffusionModel inner;
    std::vector<int> predictions;
    std::int32_t n = 0;
    std::uint64_t feature_fingerprint = 0;
};

MemorizedModel memorize(const DiffusionModel& model, const Graph& clean);
std::vector<int> predict_memorized(const MemorizedModel& memorized, const Graph& graph);

double accuracy(std::span<const int> predicted, std::span<const int> labels, std::span<const int> index);

void save_history(const std::vector<HistoryRow>& history, const std::filesystem::path& file,
                  const std::vector<std::string>& header_comments = {});

} // namespace advgraph
