#include "advgraph/cli.hpp"

#include "advgraph/experiment.hpp"
#include "text_io.hpp"

#include "CLI11.hpp"

#include <cstdio>

namespace advgraph {

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return kExitUsage;
        case ErrorKind::numeric:
        case ErrorKind::training:
        case ErrorKind::internal: return kExitNumeric;
        default: return kExitData;
    }
}

namespace {

struct Options {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::vector<std::string> overrides;
    std::string checkpoint;
    bool karate = false;
};

struct Context {
    ExperimentConfig config;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    std::vector<std::string> header;
    std::string hash;
};

Context make_context(const Options& o, bool seed_given, bool karate = false) {
    Context c;
    c.config = load_config(o.config, o.overrides);
    if (karate) c.config.dataset.kind = DatasetKind::karate;
    if (seed_given) c.config.seeds = {o.seed};
    c.seed = c.config.seeds.front();
    c.out = o.out.empty() ? c.config.output_dir : std::filesystem::path(o.out);
    c.header = provenance_lines(c.config, std::to_string(c.seed));
    c.hash = config_hash(c.config);
    return c;
}

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
    return buf;
}

void print_report(const EvalReport& report, std::ostream& out, std::ostream& err) {
    out << "clean accuracy " << percent(report.clean_acc) << "%\n";
    for (const EvalRow& row : report.rows)
        out << to_string(row.attack.kind) << " eps=" << io::format_double(row.attack.epsilon) << " ("
            << to_string(row.attack.local_rule) << "): robust " << percent(row.robust_acc) << "%, " << row.flips.size()
            << "/" << row.delta << " flips\n";
    for (const std::string& w : report.warnings) err << "warning: " << w << '\n';
}

void cmd_gen(const Context& c, std::ostream& out) {
    const Graph graph = make_dataset(c.config, c.seed);
    save_graph(graph, c.out / "edges.txt", c.out / "features.csv", c.out / "labels.csv", c.header);
    out << "wrote " << graph.n << " nodes and " << graph.num_edges() << " edges to " << c.out.string() << '\n';
}

void cmd_split(const Context& c, std::ostream& out) {
    const PreparedData data = prepare_data(c.config, c.seed);
    save_split(data.split, c.out / "split.json");
    stamp_json(c.out / "split.json", c.hash, std::to_string(c.seed));
    out << "split: " << data.split.train_labeled.size() << " labeled, " << data.split.train_unlabeled.size()
        << " unlabeled, " << data.split.val.size() << " validation, " << data.split.test.size() << " test nodes\n";
}

void cmd_train(const Context& c, std::ostream& out) {
    const PreparedData data = prepare_data(c.config, c.seed);
    const TrainOutcome trained = train_model(c.config, data, c.seed);
    save_checkpoint(trained.model, c.out / "checkpoint.json");
    stamp_json(c.out / "checkpoint.json", c.hash, std::to_string(c.seed));
    save_history(trained.history, c.out / "history.csv", c.header);
    out << "trained " << trained.history.size() << " epochs, best epoch " << trained.best_epoch << ", checkpoint "
        << (c.out / "checkpoint.json").string() << '\n';
}

DiffusionModel checkpoint_for(const Options& o, const Graph& graph) {
    require(!o.checkpoint.empty(), ErrorKind::usage, "--checkpoint is required");
    DiffusionModel model = load_checkpoint(o.checkpoint);
    require(model.spec.in_dim == static_cast<int>(graph.features.cols) && model.spec.num_classes == graph.num_classes,
            ErrorKind::shape,
            "checkpoint " + o.checkpoint + " does not fit the " + std::to_string(graph.features.cols) +
                "-feature, " + std::to_string(graph.num_classes) + "-class dataset of this config");
    return model;
}

void cmd_eval(const Options& o, const Context& c, std::ostream& out, std::ostream& err) {
    const PreparedData data = prepare_data(c.config, c.seed);
    const DiffusionModel model = checkpoint_for(o, data.graph);
    const EvalReport report = evaluate_model(c.config, model, data, c.seed);
    save_evaluation(report.rows, c.out / "eval.csv", c.header);
    print_report(report, out, err);
}

void cmd_attack(const Options& o, const Context& c, std::ostream& out, std::ostream& err) {
    const PreparedData data = prepare_data(c.config, c.seed);
    const DiffusionModel model = checkpoint_for(o, data.graph);
    const EvalReport report = evaluate_model(c.config, model, data, c.seed);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const EvalRow& row = report.rows[i];
        const std::string stem = "attack_" + std::to_string(i);
        save_perturbation(data.graph, row.flips, c.out / (stem + "_perturbation.json"));
        const nlohmann::json summary = {{"attack", to_string(row.attack.kind)},
                                        {"epsilon", row.attack.epsilon},
                                        {"delta", row.delta},
                                        {"local_rule", to_string(row.attack.local_rule)},
                                        {"flips", row.flips.size()},
                                        {"clean_acc", row.clean_acc},
                                        {"robust_acc", row.robust_acc},
                                        {"seed", c.seed},
                                        {"perturbation", stem + "_perturbation.json"}};
        io::open_output(c.out / (stem + "_report.json")) << summary.dump(1) << '\n';
        stamp_json(c.out / (stem + "_report.json"), c.hash, std::to_string(c.seed));
    }
    print_report(report, out, err);
}

void cmd_spectrum(const Options& o, const Context& c, std::ostream& out) {
    const PreparedData data = prepare_data(c.config, c.seed);
    const Graph graph = evaluation_view(data.graph, data.split).graph;
    const DiffusionModel model = checkpoint_for(o, graph);
    const SpectralFilter filter = spectral_filter(model, graph);
    save_spectrum(filter, c.out / "spectrum.csv", c.header);
    out << "wrote " << filter.eigenvalues.size() << " eigenvalues to " << (c.out / "spectrum.csv").string() << '\n';
}

void cmd_diffuse(const Options& o, const Context& c, std::ostream& out) {
    const PreparedData data = prepare_data(c.config, c.seed);
    const Graph graph = evaluation_view(data.graph, data.split).graph;
    const DiffusionModel model = checkpoint_for(o, graph);
    save_diffusion(total_diffusion(model, graph), c.out / "diffusion.csv", c.header);
    out << "wrote the " << graph.n << "x" << graph.n << " diffusion matrix to " << (c.out / "diffusion.csv").string()
        << '\n';
}

void cmd_repro(const Context& c, std::ostream& out, std::ostream& err) {
    const std::vector<SeedResult> results = run_repro(c.config, c.out);
    for (const SeedResult& r : results)
        for (const std::string& w : r.report.warnings) err << "warning (seed " << r.seed << "): " << w << '\n';
    for (const SummaryRow& row : aggregate(results)) {
        out << row.attack;
        if (row.attack != "clean") out << " eps=" << io::format_double(row.epsilon) << " (" << row.local_rule << ")";
        out << ": " << percent(row.robust.mean) << " +- " << percent(row.robust.sem) << "% over " << row.seeds
            << (row.seeds == 1 ? " seed (standard error undefined, reported as 0)" : " seeds") << '\n';
    }
    out << "results in " << (c.out / "results.csv").string() << '\n';
}

} // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adversarial training and evaluation of graph diffusion models under structure perturbations"};
    app.require_subcommand(1);
    Options o;
    const auto add = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "experiment seed (default: first seed of the config)");
        sub->add_option("--out", o.out, "output directory (default: output_dir of the config)");
        sub->add_option("--override", o.overrides, "key.path=value applied to the config (repeatable)")
            ->allow_extra_args(false);
        return sub;
    };
    add("gen", "write the dataset files")
        ->add_flag("--karate", o.karate, "Zachary's karate club instead of the config dataset");
    add("split", "write the train/validation/test split");
    add("train", "train a model and write its checkpoint and history");
    const std::pair<const char*, const char*> model_commands[] = {
        {"attack", "attack a checkpoint and write the perturbations"},
        {"eval", "clean and robust accuracy of a checkpoint"},
        {"spectrum", "spectral response of a checkpoint"},
        {"diffuse", "total diffusion matrix of a checkpoint"},
    };
    for (const auto& [name, help] : model_commands)
        add(name, help)->add_option("--checkpoint", o.checkpoint, "model checkpoint (JSON)")->required();
    add("repro", "full pipeline over every configured seed with aggregated results");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        const bool seed_given = sub->count("--seed") > 0;
        const Context c = make_context(o, seed_given, name == "gen" && o.karate);
        if (name == "gen") cmd_gen(c, out);
        else if (name == "split") cmd_split(c, out);
        else if (name == "train") cmd_train(c, out);
        else if (name == "attack") cmd_attack(o, c, out, err);
        else if (name == "eval") cmd_eval(o, c, out, err);
        else if (name == "spectrum") cmd_spectrum(o, c, out);
        else if (name == "diffuse") cmd_diffuse(o, c, out);
        else cmd_repro(c, out, err);
        return kExitOk;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "file error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitNumeric;
    }
}

} // namespace advgraph
