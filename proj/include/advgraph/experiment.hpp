#pragma once

#include "advgraph/analysis.hpp"
#include "advgraph/attacks.hpp"
#include "advgraph/model.hpp"
#include "advgraph/synth.hpp"
#include "advgraph/training.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace advgraph {

enum class DatasetKind { csbm, karate, files };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::csbm;
    CsbmParams csbm;  ///< seed is replaced per experiment seed
    std::filesystem::path edges;
    std::filesystem::path features;
    std::filesystem::path labels;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    SplitParams split;  ///< seed is replaced per experiment seed
    ModelSpec model;    ///< in_dim and num_classes come from the dataset
    TrainConfig train;  ///< seed is replaced per experiment seed
    AttackConfig attack;
    std::vector<AttackSpec> evaluate{{AttackKind::prbcd, 0.1, LocalRule::unlimited},
                                     {AttackKind::lrbcd, 0.1, LocalRule::half_degree}};
    std::filesystem::path output_dir = "results";
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int workers = 1;

    void validate() const;
};

/// Strict reader: unknown keys, wrong types and out-of-range values are config errors.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Sets a dot path such as "train.adversarial.epsilon" from "path=value"; the
/// value is read as JSON when it parses and as a plain string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if any), then each override in order.
ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

/// 16 hex digits over the settings that shape a single-seed run (not seeds,
/// output_dir or workers).
std::string config_hash(const ExperimentConfig& config);

/// Sub-seeds of one experiment seed, split by purpose.
struct SeedStreams {
    std::uint64_t dataset;
    std::uint64_t split;
    std::uint64_t init;
    std::uint64_t train;
    std::uint64_t attack;
};

SeedStreams seed_streams(std::uint64_t seed);

struct PreparedData {
    Graph graph;
    Split split;
};

Graph make_dataset(const ExperimentConfig& config, std::uint64_t seed);
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);
ModelSpec resolved_spec(const ExperimentConfig& config, const Graph& graph);

struct TrainOutcome {
    DiffusionModel model;
    std::vector<HistoryRow> history;
    int best_epoch = 0;
};

TrainOutcome train_model(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed);
EvalReport evaluate_model(const ExperimentConfig& config, const DiffusionModel& model, const PreparedData& data,
                          std::uint64_t seed);

struct SeedResult {
    std::uint64_t seed = 0;
    TrainOutcome trained;
    EvalReport report;
};

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed);

struct MeanSem {
    double mean = 0.0;
    double sem = 0.0;  ///< sample standard deviation over √k; 0 for a single value
};

MeanSem mean_sem(std::span<const double> values);

struct SummaryRow {
    std::string attack;  ///< "clean" for the unattacked row
    double epsilon = 0.0;
    std::string local_rule;
    MeanSem clean;
    MeanSem robust;
    std::size_t seeds = 0;
};

/// One row for clean accuracy, then one per evaluated attack, in config order.
std::vector<SummaryRow> aggregate(std::span<const SeedResult> results);

/// Runs every seed (in parallel when config.workers > 1) and writes per-seed
/// artifacts plus results.csv and per_seed.csv under `out`. Results are
/// returned in seed-list order.
std::vector<SeedResult> run_repro(const ExperimentConfig& config, const std::filesystem::path& out);

std::vector<std::string> provenance_lines(const ExperimentConfig& config, const std::string& seeds);
void write_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& file,
                   const std::vector<std::string>& header_comments);

/// Adds {"provenance": {"config_hash", "seed"}} to a JSON object file in place.
void stamp_json(const std::filesystem::path& file, const std::string& hash, const std::string& seeds);

} // namespace advgraph
