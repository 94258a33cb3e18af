#include "advgraph/training.hpp"

#include "advgraph/error.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace advgraph {

std::string to_string(TrainLoss loss) { return loss == TrainLoss::cross_entropy ? "cross_entropy" : "tanh_margin"; }

TrainLoss parse_train_loss(const std::string& name) {
    if (name == "cross_entropy" || name == "ce") return TrainLoss::cross_entropy;
    if (name == "tanh_margin") return TrainLoss::tanh_margin;
    fail(ErrorKind::config, "unknown loss \"" + name + "\"");
}

void TrainConfig::validate() const {
    require(max_epochs >= 1, ErrorKind::config, "max_epochs must be at least 1");
    require(warmup_epochs >= 0 && warmup_epochs <= max_epochs, ErrorKind::config,
            "warmup_epochs must lie in [0, max_epochs]");
    require(patience >= 1, ErrorKind::config, "patience must be at least 1");
    require(lr > 0.0 && std::isfinite(lr), ErrorKind::config, "learning rate must be positive");
    require(weight_decay >= 0.0, ErrorKind::config, "weight decay must be non-negative");
    if (adversarial.enabled) {
        require(adversarial.epsilon >= 0.0, ErrorKind::config, "adversarial epsilon must be non-negative");
        require(adversarial.attack != AttackKind::dice, ErrorKind::config, "adversarial training needs a gradient attack");
    }
}

namespace {

Var training_loss(ForwardPass& pass, TrainLoss kind, std::span<const int> labels, std::span<const int> index) {
    return kind == TrainLoss::cross_entropy ? loss_cross_entropy(pass, labels, index)
                                            : loss_tanh_margin(pass, labels, index);
}

double eval_loss(const DiffusionModel& model, const Graph& graph, TrainLoss kind, std::span<const int> labels,
                 std::span<const int> index) {
    ForwardPass pass = forward(model, graph, nullptr, Mode::eval);
    return pass.tape.value(training_loss(pass, kind, labels, index))(0, 0);
}

Graph attacked_graph(const TrainConfig& config, const DiffusionModel& model, const Graph& graph,
                           std::span<const int> targets, std::span<const int> labels, Rng rng) {
    const AdversarialConfig& adv = config.adversarial;
    const Budget budget = compute_budgets(graph, targets, adv.epsilon, adv.local_rule);
    AttackConfig attack = adv.attack_config;
    attack.kind = adv.attack;
    const AttackResult result = run_attack(AttackProblem{&model, &graph, targets, labels}, budget, attack, rng);
    return apply_flips(graph, result.flips);
}

} // namespace

TrainResult fit(const DiffusionModel& init, const Graph& graph, const Split& split, std::span<const int> train_nodes,
                std::span<const int> train_labels, const TrainConfig& config) {
    config.validate();
    require(!train_nodes.empty(), ErrorKind::split, "no training targets");
    require(train_labels.size() == static_cast<std::size_t>(graph.n), ErrorKind::dimension,
            "training labels must have one entry per node");
    require(!split.val.empty(), ErrorKind::split, "early stopping needs validation nodes");

    const GraphView train_view = training_view(graph, split);
    const GraphView val_view = validation_view(graph, split);
    const std::vector<int> train_index = train_view.local(std::vector<int>(train_nodes.begin(), train_nodes.end()));
    std::vector<int> view_labels(static_cast<std::size_t>(train_view.graph.n), kUnknownLabel);
    for (std::size_t i = 0; i < train_index.size(); ++i) {
        const int label = train_labels[train_nodes[i]];
        require(label >= 0 && label < init.spec.num_classes, ErrorKind::split,
                "training node " + std::to_string(train_nodes[i]) + " has no usable label");
        view_labels[train_index[i]] = label;
    }
    const std::vector<int> val_index = val_view.local(split.val);
    std::vector<int> val_labels(static_cast<std::size_t>(val_view.graph.n), kUnknownLabel);
    for (std::size_t i = 0; i < val_index.size(); ++i) val_labels[val_index[i]] = graph.labels[split.val[i]];

    const Rng root(config.seed);
    const bool adversarial = config.adversarial.enabled;
    TrainResult result;
    DiffusionModel model = init;
    AdamState state;
    double best_metric = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const bool attack_now = adversarial && epoch > config.warmup_epochs;
        Graph train_graph;
        if (attack_now) {
            train_graph = attacked_graph(config, model, train_view.graph, train_index, view_labels,
                                         root.derive("attack_train").derive(static_cast<std::uint64_t>(epoch)));
            ++result.attack_calls;
        }
        const Graph& g = attack_now ? train_graph : train_view.graph;

        Rng dropout = root.derive("dropout").derive(static_cast<std::uint64_t>(epoch));
        ForwardPass pass = forward(model, g, nullptr, Mode::train, &dropout);
        const Var loss = training_loss(pass, config.loss, view_labels, train_index);
        const double train_loss = pass.tape.value(loss)(0, 0);
        require(std::isfinite(train_loss), ErrorKind::training,
                "training loss is not finite at epoch " + std::to_string(epoch));
        adam_step(model, backward_params(pass, loss), state, config.lr, config.weight_decay);

        double metric = 0.0;
        if (attack_now) {
            const Graph val_graph =
                attacked_graph(config, model, val_view.graph, val_index, val_labels,
                               root.derive("attack_val").derive(static_cast<std::uint64_t>(epoch)));
            ++result.attack_calls;
            metric = eval_loss(model, val_graph, config.loss, val_labels, val_index);
        } else {
            metric = eval_loss(model, val_view.graph, config.loss, val_labels, val_index);
        }
        require(std::isfinite(metric), ErrorKind::training,
                "validation loss is not finite at epoch " + std::to_string(epoch));
        result.history.push_back({epoch, train_loss, metric, attack_now});

        if (epoch <= config.warmup_epochs) continue;
        if (metric < best_metric) {
            best_metric = metric;
            result.model = model;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    if (result.best_epoch == 0) {
        result.model = model;
        result.best_epoch = static_cast<int>(result.history.size());
    }
    return result;
}

TrainResult train_standard(const DiffusionModel& init, const Graph& graph, const Split& split,
                           const TrainConfig& config) {
    TrainConfig clean = config;
    clean.adversarial.enabled = false;
    return fit(init, graph, split, split.train_labeled, graph.labels, clean);
}

TrainResult train_adversarial(const DiffusionModel& init, const Graph& graph, const Split& split,
                              const TrainConfig& config) {
    require(config.adversarial.enabled, ErrorKind::config, "adversarial training needs an attack configuration");
    return fit(init, graph, split, split.train_labeled, graph.labels, config);
}

SelfTrainResult self_train(const ModelSpec& spec, const Graph& graph, const Split& split, const TrainConfig& config) {
    const Rng root(config.seed);
    SelfTrainResult out;
    out.teacher = train_standard(init_params(spec, root.derive("teacher")()), graph, split, config);

    const GraphView view = training_view(graph, split);
    const std::vector<int> predicted = argmax_rows(predict_logits(out.teacher.model, view.graph));
    std::vector<bool> excluded(static_cast<std::size_t>(graph.n), false);
    for (int node : split.train_labeled) excluded[node] = true;
    for (int node : split.val) excluded[node] = true;

    out.pseudo_labels.assign(static_cast<std::size_t>(graph.n), kUnknownLabel);
    std::vector<int> labels(static_cast<std::size_t>(graph.n), kUnknownLabel);
    std::vector<int> targets;
    for (int node : split.train_labeled) labels[node] = graph.labels[node];
    for (int local = 0; local < view.graph.n; ++local) {
        const int node = view.to_original[local];
        if (excluded[node]) continue;
        out.pseudo_labels[node] = predicted[local];
        labels[node] = predicted[local];
    }
    for (int node = 0; node < graph.n; ++node)
        if (labels[node] != kUnknownLabel) targets.push_back(node);

    out.student = fit(init_params(spec, root.derive("student")()), graph, split, targets, labels, config);
    return out;
}

namespace {

std::uint64_t fingerprint(const Matrix& features) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ features.cols;
    for (double x : features.data) {
        h ^= std::bit_cast<std::uint64_t>(x);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

MemorizedModel memorize(const DiffusionModel& model, const Graph& clean) {
    MemorizedModel out;
    out.inner = model;
    out.n = clean.n;
    out.predictions = argmax_rows(predict_logits(model, clean));
    out.feature_fingerprint = fingerprint(clean.features);
    return out;
}

std::vector<int> predict_memorized(const MemorizedModel& memorized, const Graph& graph) {
    require(graph.n == memorized.n, ErrorKind::dimension,
            "memorized model covers " + std::to_string(memorized.n) + " nodes but the graph has " +
                std::to_string(graph.n) + "; it cannot predict for unseen nodes");
    require(fingerprint(graph.features) == memorized.feature_fingerprint, ErrorKind::dimension,
            "graph features differ from the memorized training graph");
    return memorized.predictions;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels, std::span<const int> index) {
    require(!index.empty(), ErrorKind::parameter, "accuracy over an empty node set");
    std::size_t correct = 0;
    for (int i : index) correct += predicted[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(index.size());
}

void save_history(const std::vector<HistoryRow>& history, const std::filesystem::path& file,
                  const std::vector<std::string>& header_comments) {
    std::ofstream out = io::open_output(file);
    for (const std::string& line : header_comments) out << "# " << line << '\n';
    out << "epoch,train_loss,val_metric,attacked\n";
    for (const HistoryRow& row : history)
        out << row.epoch << ',' << io::format_double(row.train_loss) << ',' << io::format_double(row.val_metric) << ','
            << (row.attacked ? 1 : 0) << '\n';
}

} // namespace advgraph
