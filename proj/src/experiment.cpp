#include "advgraph/experiment.hpp"

#include "advgraph/error.hpp"
#include "text_io.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <set>
#include <thread>

namespace advgraph {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that any
// leftover key can be reported as a typo.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        require(j.is_object(), ErrorKind::config, where() + " must be a JSON object");
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        known_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        const json& v = *it;
        bool ok = false;
        if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
        else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) ok = v.is_number_unsigned();
        else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
        else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
        else ok = v.is_string();
        require(ok, ErrorKind::config, "config key " + where(key) + " has the wrong type: " + v.dump());
        if constexpr (std::is_same_v<T, std::filesystem::path>) out = v.get<std::string>();
        else out = v.get<T>();
    }

    template <typename Enum, typename Parse>
    void read_enum(const std::string& key, Enum& out, Parse parse) {
        std::string name;
        read(key, name);
        if (j_.contains(key)) out = parse(name);
    }

    const json* child(const std::string& key) {
        known_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string where(const std::string& key = {}) const {
        if (key.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish() const {
        for (const auto& item : j_.items())
            require(known_.count(item.key()) > 0, ErrorKind::config, "unknown config key " + where(item.key()));
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

std::string dataset_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::csbm: return "csbm";
        case DatasetKind::karate: return "karate";
        case DatasetKind::files: return "files";
    }
    return "csbm";
}

DatasetKind parse_dataset(const std::string& name) {
    if (name == "csbm") return DatasetKind::csbm;
    if (name == "karate") return DatasetKind::karate;
    if (name == "files") return DatasetKind::files;
    fail(ErrorKind::config, "unknown dataset kind \"" + name + "\" (csbm, karate, files)");
}

ChebNormalization parse_cheb(const std::string& name) {
    if (name == "interpolation") return ChebNormalization::interpolation;
    if (name == "printed") return ChebNormalization::printed;
    fail(ErrorKind::config, "unknown Chebyshev normalization \"" + name + "\"");
}

void read_attack_config(const json& j, const std::string& path, AttackConfig& c) {
    ObjectReader r(j, path);
    r.read("block_size", c.block_size);
    r.read("epochs", c.epochs);
    r.read("finetune_epochs", c.finetune_epochs);
    r.read("lr_base", c.lr_base);
    r.read("lr_multiplier", c.lr_multiplier);
    r.read("pgd_lr", c.pgd_lr);
    r.read("sample_tries", c.sample_tries);
    r.read("pgd_max_nodes", c.pgd_max_nodes);
    r.finish();
}

json attack_config_json(const AttackConfig& c) {
    return {{"block_size", c.block_size},     {"epochs", c.epochs}, {"finetune_epochs", c.finetune_epochs},
            {"lr_base", c.lr_base},           {"lr_multiplier", c.lr_multiplier},
            {"pgd_lr", c.pgd_lr},             {"sample_tries", c.sample_tries},
            {"pgd_max_nodes", c.pgd_max_nodes}};
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string join_seeds(std::span<const std::uint64_t> seeds) {
    std::string out;
    for (std::uint64_t s : seeds) out += (out.empty() ? "" : ",") + std::to_string(s);
    return out;
}

} // namespace

void ExperimentConfig::validate() const {
    require(!seeds.empty(), ErrorKind::config, "seeds must not be empty");
    require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), ErrorKind::config,
            "seeds must be distinct");
    require(workers >= 1, ErrorKind::config, "workers must be at least 1");
    if (dataset.kind == DatasetKind::csbm) dataset.csbm.validate();
    if (dataset.kind == DatasetKind::files)
        for (const auto& file : {dataset.edges, dataset.features, dataset.labels})
            require(!file.empty() && std::filesystem::exists(file), ErrorKind::config,
                    "dataset file \"" + file.string() + "\" does not exist");
    require(split.per_class_train >= 1 && split.per_class_val >= 1, ErrorKind::config,
            "split needs at least one training and one validation node per class");
    require(split.train_share >= 0.0 && split.train_share < 1.0, ErrorKind::config, "split.train_share must lie in [0, 1)");
    require(split.test_fraction > 0.0 && split.test_fraction < 1.0, ErrorKind::config,
            "split.test_fraction must lie in (0, 1)");
    require(model.K >= 0 && model.hidden >= 1 && model.mlp_layers >= 1, ErrorKind::config,
            "model needs K >= 0, hidden >= 1 and mlp_layers >= 1");
    require(model.dropout >= 0.0 && model.dropout < 1.0 && model.input_dropout >= 0.0 && model.input_dropout < 1.0,
            ErrorKind::config, "dropout rates must lie in [0, 1)");
    train.validate();
    for (const AttackSpec& a : evaluate)
        require(a.epsilon >= 0.0 && std::isfinite(a.epsilon), ErrorKind::config, "every epsilon must be non-negative");
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    ObjectReader root(j, "");
    if (const json* d = root.child("dataset")) {
        ObjectReader r(*d, "dataset");
        r.read_enum("kind", c.dataset.kind, parse_dataset);
        r.read("n", c.dataset.csbm.n);
        r.read("d", c.dataset.csbm.d);
        r.read("sigma", c.dataset.csbm.sigma);
        r.read("K", c.dataset.csbm.K);
        r.read("p_in", c.dataset.csbm.p_in);
        r.read("q_out", c.dataset.csbm.q_out);
        r.read("edges", c.dataset.edges);
        r.read("features", c.dataset.features);
        r.read("labels", c.dataset.labels);
        r.finish();
    }
    if (const json* s = root.child("split")) {
        ObjectReader r(*s, "split");
        r.read("per_class_train", c.split.per_class_train);
        r.read("per_class_val", c.split.per_class_val);
        r.read("train_share", c.split.train_share);
        r.read("test_fraction", c.split.test_fraction);
        r.read("inductive", c.split.inductive);
        r.finish();
    }
    if (const json* m = root.child("model")) {
        ObjectReader r(*m, "model");
        r.read_enum("basis", c.model.basis, parse_basis);
        r.read("K", c.model.K);
        r.read("hidden", c.model.hidden);
        r.read("mlp_layers", c.model.mlp_layers);
        r.read("alpha", c.model.alpha);
        r.read("dropout", c.model.dropout);
        r.read("input_dropout", c.model.input_dropout);
        r.read_enum("cheb_normalization", c.model.cheb, parse_cheb);
        r.finish();
    }
    if (const json* t = root.child("train")) {
        ObjectReader r(*t, "train");
        r.read("max_epochs", c.train.max_epochs);
        r.read("warmup_epochs", c.train.warmup_epochs);
        r.read("patience", c.train.patience);
        r.read("lr", c.train.lr);
        r.read("weight_decay", c.train.weight_decay);
        r.read_enum("loss", c.train.loss, parse_train_loss);
        r.read("self_training", c.train.self_training);
        if (const json* a = r.child("adversarial")) {
            ObjectReader ar(*a, "train.adversarial");
            AdversarialConfig& adv = c.train.adversarial;
            ar.read("enabled", adv.enabled);
            ar.read_enum("attack", adv.attack, parse_attack_kind);
            ar.read("epsilon", adv.epsilon);
            ar.read_enum("local_rule", adv.local_rule, parse_local_rule);
            if (const json* ac = ar.child("attack_config"))
                read_attack_config(*ac, "train.adversarial.attack_config", adv.attack_config);
            ar.finish();
        }
        r.finish();
    }
    if (const json* a = root.child("attack")) read_attack_config(*a, "attack", c.attack);
    if (const json* e = root.child("evaluate")) {
        require(e->is_array(), ErrorKind::config, "evaluate must be a list of attacks");
        c.evaluate.clear();
        for (std::size_t i = 0; i < e->size(); ++i) {
            ObjectReader r((*e)[i], "evaluate." + std::to_string(i));
            AttackSpec spec;
            r.read_enum("attack", spec.kind, parse_attack_kind);
            r.read("epsilon", spec.epsilon);
            r.read_enum("local_rule", spec.local_rule, parse_local_rule);
            r.finish();
            c.evaluate.push_back(spec);
        }
    }
    root.read("output_dir", c.output_dir);
    if (const json* s = root.child("seeds")) {
        require(s->is_array(), ErrorKind::config, "seeds must be a list of non-negative integers");
        c.seeds.clear();
        for (const json& v : *s) {
            require(v.is_number_unsigned(), ErrorKind::config, "seeds must be non-negative integers, got " + v.dump());
            c.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    root.read("workers", c.workers);
    root.finish();
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json evaluate = json::array();
    for (const AttackSpec& a : c.evaluate)
        evaluate.push_back({{"attack", to_string(a.kind)}, {"epsilon", a.epsilon}, {"local_rule", to_string(a.local_rule)}});
    const AdversarialConfig& adv = c.train.adversarial;
    return {
        {"dataset",
         {{"kind", dataset_name(c.dataset.kind)},
          {"n", c.dataset.csbm.n},
          {"d", c.dataset.csbm.d},
          {"sigma", c.dataset.csbm.sigma},
          {"K", c.dataset.csbm.K},
          {"p_in", c.dataset.csbm.p_in},
          {"q_out", c.dataset.csbm.q_out},
          {"edges", c.dataset.edges.string()},
          {"features", c.dataset.features.string()},
          {"labels", c.dataset.labels.string()}}},
        {"split",
         {{"per_class_train", c.split.per_class_train},
          {"per_class_val", c.split.per_class_val},
          {"train_share", c.split.train_share},
          {"test_fraction", c.split.test_fraction},
          {"inductive", c.split.inductive}}},
        {"model",
         {{"basis", to_string(c.model.basis)},
          {"K", c.model.K},
          {"hidden", c.model.hidden},
          {"mlp_layers", c.model.mlp_layers},
          {"alpha", c.model.alpha},
          {"dropout", c.model.dropout},
          {"input_dropout", c.model.input_dropout},
          {"cheb_normalization", c.model.cheb == ChebNormalization::printed ? "printed" : "interpolation"}}},
        {"train",
         {{"max_epochs", c.train.max_epochs},
          {"warmup_epochs", c.train.warmup_epochs},
          {"patience", c.train.patience},
          {"lr", c.train.lr},
          {"weight_decay", c.train.weight_decay},
          {"loss", to_string(c.train.loss)},
          {"self_training", c.train.self_training},
          {"adversarial",
           {{"enabled", adv.enabled},
            {"attack", to_string(adv.attack)},
            {"epsilon", adv.epsilon},
            {"local_rule", to_string(adv.local_rule)},
            {"attack_config", attack_config_json(adv.attack_config)}}}}},
        {"attack", attack_config_json(c.attack)},
        {"evaluate", evaluate},
        {"output_dir", c.output_dir.string()},
        {"seeds", c.seeds},
        {"workers", c.workers},
    };
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::usage,
            "override \"" + assignment + "\" is not of the form key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &config;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        require(!key.empty(), ErrorKind::usage, "override path \"" + path + "\" has an empty component");
        if (node->is_null()) *node = json::object();
        if (node->is_array()) {
            std::size_t index = 0;
            const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), index);
            require(ec == std::errc() && ptr == key.data() + key.size() && index < node->size(), ErrorKind::config,
                    "override path \"" + path + "\": no list element \"" + key + "\"");
            node = &(*node)[index];
        } else {
            require(node->is_object(), ErrorKind::config, "override path \"" + path + "\" descends into a value");
            node = &(*node)[key];
        }
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    *node = std::move(value);
}

ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!file.empty()) {
        try {
            j = json::parse(io::open_input(file));
        } catch (const json::exception& e) {
            fail(ErrorKind::config, file.string() + ": " + e.what());
        }
    }
    for (const std::string& o : overrides) apply_override(j, o);
    ExperimentConfig config = config_from_json(j);
    if (!file.empty() && config.dataset.kind == DatasetKind::files) {
        const auto base = file.parent_path();
        for (auto* p : {&config.dataset.edges, &config.dataset.features, &config.dataset.labels})
            if (p->is_relative()) *p = base / *p;
        config.validate();
    }
    return config;
}

std::string config_hash(const ExperimentConfig& config) {
    json j = config_to_json(config);
    j.erase("output_dir");
    j.erase("workers");
    j.erase("seeds");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

SeedStreams seed_streams(std::uint64_t seed) {
    const Rng root(seed);
    return {root.derive("dataset")(), root.derive("split")(), root.derive("init")(), root.derive("train")(),
            root.derive("attack")()};
}

Graph make_dataset(const ExperimentConfig& config, std::uint64_t seed) {
    switch (config.dataset.kind) {
        case DatasetKind::csbm: {
            CsbmParams params = config.dataset.csbm;
            params.seed = seed_streams(seed).dataset;
            return sample_csbm(params);
        }
        case DatasetKind::karate: return karate_club();
        case DatasetKind::files: break;
    }
    return load_graph(config.dataset.edges, config.dataset.features, config.dataset.labels);
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
    PreparedData data;
    data.graph = make_dataset(config, seed);
    SplitParams split = config.split;
    split.seed = seed_streams(seed).split;
    data.split = make_split(data.graph, split);
    return data;
}

ModelSpec resolved_spec(const ExperimentConfig& config, const Graph& graph) {
    ModelSpec spec = config.model;
    spec.in_dim = static_cast<int>(graph.features.cols);
    spec.num_classes = graph.num_classes;
    return spec;
}

TrainOutcome train_model(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
    const SeedStreams streams = seed_streams(seed);
    const ModelSpec spec = resolved_spec(config, data.graph);
    TrainConfig train = config.train;
    train.seed = streams.train;
    TrainResult result;
    if (train.self_training) {
        result = std::move(self_train(spec, data.graph, data.split, train).student);
    } else {
        const DiffusionModel init = init_params(spec, streams.init);
        result = train.adversarial.enabled ? train_adversarial(init, data.graph, data.split, train)
                                           : train_standard(init, data.graph, data.split, train);
    }
    return {std::move(result.model), std::move(result.history), result.best_epoch};
}

EvalReport evaluate_model(const ExperimentConfig& config, const DiffusionModel& model, const PreparedData& data,
                          std::uint64_t seed) {
    EvalReport report = evaluate(model, data.graph, data.split, config.evaluate, config.attack, seed_streams(seed).attack);
    for (EvalRow& row : report.rows) row.seed = seed;
    return report;
}

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed) {
    const PreparedData data = prepare_data(config, seed);
    SeedResult out;
    out.seed = seed;
    out.trained = train_model(config, data, seed);
    out.report = evaluate_model(config, out.trained.model, data, seed);
    return out;
}

MeanSem mean_sem(std::span<const double> values) {
    require(!values.empty(), ErrorKind::parameter, "cannot aggregate an empty list of results");
    const double k = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= k;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (k - 1.0)) / std::sqrt(k)};
}

std::vector<SummaryRow> aggregate(std::span<const SeedResult> results) {
    require(!results.empty(), ErrorKind::parameter, "cannot aggregate an empty list of results");
    const std::size_t rows = results.front().report.rows.size();
    std::vector<double> clean;
    for (const SeedResult& r : results) {
        require(r.report.rows.size() == rows, ErrorKind::internal, "seeds evaluated different attack lists");
        clean.push_back(r.report.clean_acc);
    }
    std::vector<SummaryRow> out;
    const MeanSem clean_stats = mean_sem(clean);
    out.push_back({"clean", 0.0, "none", clean_stats, clean_stats, results.size()});
    for (std::size_t i = 0; i < rows; ++i) {
        std::vector<double> c, r;
        for (const SeedResult& s : results) {
            c.push_back(s.report.rows[i].clean_acc);
            r.push_back(s.report.rows[i].robust_acc);
        }
        const AttackSpec& spec = results.front().report.rows[i].attack;
        out.push_back({to_string(spec.kind), spec.epsilon, to_string(spec.local_rule), mean_sem(c), mean_sem(r),
                       results.size()});
    }
    return out;
}

std::vector<std::string> provenance_lines(const ExperimentConfig& config, const std::string& seeds) {
    return {"config " + config_hash(config), "seed " + seeds};
}

void write_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& file,
                   const std::vector<std::string>& header_comments) {
    std::ofstream out = io::open_output(file);
    for (const std::string& line : header_comments) out << "# " << line << '\n';
    out << "attack,epsilon,local_rule,clean_mean,clean_sem,robust_mean,robust_sem,seeds,note\n";
    for (const SummaryRow& r : rows)
        out << r.attack << ',' << io::format_double(r.epsilon) << ',' << r.local_rule << ','
            << io::format_double(r.clean.mean) << ',' << io::format_double(r.clean.sem) << ','
            << io::format_double(r.robust.mean) << ',' << io::format_double(r.robust.sem) << ',' << r.seeds << ','
            << (r.seeds == 1 ? "single_seed_sem_is_zero" : "") << '\n';
}

void stamp_json(const std::filesystem::path& file, const std::string& hash, const std::string& seeds) {
    json j;
    try {
        j = json::parse(io::open_input(file));
    } catch (const json::exception& e) {
        fail(ErrorKind::parse, file.string() + ": " + e.what());
    }
    require(j.is_object(), ErrorKind::internal, file.string() + " is not a JSON object");
    j["provenance"] = {{"config_hash", hash}, {"seed", seeds}};
    io::open_output(file) << j.dump(1) << '\n';
}

namespace {

bool has_spectrum(const DiffusionModel& model, const Graph& graph) {
    return model.spec.basis != Basis::gcn && graph.n <= kMaxSpectralNodes;
}

void write_seed_artifacts(const ExperimentConfig& config, const SeedResult& r, const std::filesystem::path& dir) {
    const std::string seed = std::to_string(r.seed);
    const std::string hash = config_hash(config);
    const auto header = provenance_lines(config, seed);
    save_checkpoint(r.trained.model, dir / "checkpoint.json");
    stamp_json(dir / "checkpoint.json", hash, seed);
    save_history(r.trained.history, dir / "history.csv", header);
    save_evaluation(r.report.rows, dir / "eval.csv", header);
    const PreparedData data = prepare_data(config, r.seed);
    const Graph eval_graph = evaluation_view(data.graph, data.split).graph;
    if (has_spectrum(r.trained.model, eval_graph))
        save_spectrum(spectral_filter(r.trained.model, eval_graph), dir / "spectrum.csv", header);
}

} // namespace

std::vector<SeedResult> run_repro(const ExperimentConfig& config, const std::filesystem::path& out) {
    config.validate();
    const std::size_t count = config.seeds.size();
    std::vector<SeedResult> results(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                results[i] = run_seed(config, config.seeds[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t slots = std::min<std::size_t>(static_cast<std::size_t>(config.workers), count);
    if (slots <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < slots; ++t) pool.emplace_back(worker);
    }
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

    const std::string seeds = join_seeds(config.seeds);
    std::vector<EvalRow> all_rows;
    for (const SeedResult& r : results) {
        write_seed_artifacts(config, r, out / ("seed_" + std::to_string(r.seed)));
        all_rows.insert(all_rows.end(), r.report.rows.begin(), r.report.rows.end());
    }
    save_evaluation(all_rows, out / "per_seed.csv", provenance_lines(config, seeds));
    write_summary(aggregate(results), out / "results.csv", provenance_lines(config, seeds));
    io::open_output(out / "config.json") << config_to_json(config).dump(1) << '\n';
    return results;
}

} // namespace advgraph
