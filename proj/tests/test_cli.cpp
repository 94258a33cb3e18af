#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advgraph/cli.hpp"
#include "advgraph/experiment.hpp"
#include "test_support.hpp"

#include <fstream>
#include <sstream>

using namespace advgraph;
using namespace advgraph::testing;
using nlohmann::json;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "advgraph");
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_command(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& j) {
    const auto file = dir / "config.json";
    std::ofstream(file) << j.dump(1);
    return file;
}

json karate_config() {
    return json::parse(R"({
        "dataset": {"kind": "karate"},
        "split": {"per_class_train": 3, "per_class_val": 3, "inductive": false},
        "model": {"basis": "monomial", "K": 4, "hidden": 8},
        "train": {"max_epochs": 40, "patience": 20},
        "attack": {"epochs": 10, "finetune_epochs": 2},
        "evaluate": [{"attack": "prbcd", "epsilon": 0.1},
                     {"attack": "lrbcd", "epsilon": 0.25, "local_rule": "half_degree"}],
        "seeds": [0, 1, 2]
    })");
}

Error config_error(const json& j) {
    try {
        config_from_json(j);
    } catch (const Error& e) {
        return e;
    }
    FAIL("expected a config error");
    return Error(ErrorKind::internal, "unreachable");
}

} // namespace

TEST_CASE("mean and standard error") {
    const std::vector<double> three{70, 74, 72};
    const MeanSem m = mean_sem(three);
    CHECK(m.mean == doctest::Approx(72.0));
    CHECK(m.sem == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(m.sem == doctest::Approx(1.1547).epsilon(1e-4));
    const std::vector<double> one{0.5};
    CHECK(mean_sem(one).sem == 0.0);
    CHECK(mean_sem(one).mean == 0.5);
    CHECK_THROWS_AS(mean_sem(std::vector<double>{}), Error);
    CHECK_THROWS_AS(aggregate(std::vector<SeedResult>{}), Error);
}

TEST_CASE("aggregate rows and single-seed flag") {
    std::vector<SeedResult> results(3);
    const double robust[] = {0.70, 0.74, 0.72};
    for (int s = 0; s < 3; ++s) {
        results[s].seed = static_cast<std::uint64_t>(s);
        results[s].report.clean_acc = 0.8;
        results[s].report.rows.push_back({{AttackKind::lrbcd, 0.1, LocalRule::half_degree}, 0.8, robust[s], 5, {}, 0});
    }
    const auto rows = aggregate(results);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].attack == "clean");
    CHECK(rows[1].attack == "lrbcd");
    CHECK(rows[1].robust.mean == doctest::Approx(0.72));
    CHECK(rows[1].robust.sem == doctest::Approx(0.02 / std::sqrt(3.0)));
    CHECK(rows[1].clean.sem <= 1e-15);

    const auto dir = scratch_dir("summary");
    write_summary(aggregate(std::span(results).first(1)), dir / "one.csv", {"config x"});
    const std::string text = read_file(dir / "one.csv");
    CHECK(text.find("single_seed_sem_is_zero") != std::string::npos);
    CHECK(text.rfind("# config x\n", 0) == 0);
}

TEST_CASE("config reader is strict") {
    CHECK(config_error(json{{"sedes", json::array({1})}}).kind() == ErrorKind::config);
    CHECK(std::string(config_error(json::parse(R"({"train": {"adversarial": {"epsilom": 0.1}}})")).what())
              .find("train.adversarial.epsilom") != std::string::npos);
    CHECK(std::string(config_error(json::parse(R"({"model": {"K": 2.5}})")).what()).find("model.K") !=
          std::string::npos);
    CHECK(std::string(config_error(json::parse(R"({"evaluate": [{"attack": "prbcd", "epsilon": -0.1}]})")).what())
              .find("epsilon") != std::string::npos);
    CHECK(config_error(json::parse(R"({"seeds": []})")).kind() == ErrorKind::config);
    CHECK(config_error(json::parse(R"({"seeds": [1, 1]})")).kind() == ErrorKind::config);
    CHECK(config_error(json::parse(R"({"dataset": {"kind": "files", "edges": "/nonexistent"}})")).kind() ==
          ErrorKind::config);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"model": {"basis": "transformer"}})")), Error);
}

TEST_CASE("config round trip and hash") {
    const ExperimentConfig c = config_from_json(karate_config());
    const ExperimentConfig back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);

    ExperimentConfig moved = c;
    moved.output_dir = "elsewhere";
    moved.workers = 4;
    moved.seeds = {9};
    CHECK(config_hash(moved) == config_hash(c));
    ExperimentConfig changed = c;
    changed.train.lr *= 2.0;
    CHECK(config_hash(changed) != config_hash(c));
}

TEST_CASE("overrides address dot paths") {
    json j = karate_config();
    apply_override(j, "train.adversarial.epsilon=0.3");
    apply_override(j, "evaluate.1.epsilon=0.5");
    apply_override(j, "model.basis=chebyshev");
    apply_override(j, "seeds=[4,5]");
    const ExperimentConfig c = config_from_json(j);
    CHECK(c.train.adversarial.epsilon == 0.3);
    CHECK(c.evaluate[1].epsilon == 0.5);
    CHECK(c.model.basis == Basis::chebyshev);
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), Error);
    CHECK_THROWS_AS(apply_override(j, "evaluate.7.epsilon=1"), Error);
    json typo = karate_config();
    apply_override(typo, "train.learning_rate=0.1");
    CHECK_THROWS_AS(config_from_json(typo), Error);
}

TEST_CASE("seed streams are distinct per purpose and per seed") {
    const SeedStreams a = seed_streams(0);
    const SeedStreams b = seed_streams(1);
    CHECK(a.dataset != a.split);
    CHECK(a.init != a.train);
    CHECK(a.train != a.attack);
    CHECK(a.dataset != b.dataset);
    CHECK(seed_streams(0).attack == a.attack);
}

TEST_CASE("usage errors exit with 1") {
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"train", "--no-such-flag"}).code == kExitUsage);
    CHECK(run({"eval"}).code == kExitUsage);
    CHECK(run({"train", "--override", "nonsense"}).code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("exit codes follow the error kind") {
    CHECK(exit_code(ErrorKind::usage) == 1);
    for (ErrorKind k : {ErrorKind::parse, ErrorKind::dimension, ErrorKind::constraint, ErrorKind::parameter,
                        ErrorKind::split, ErrorKind::shape, ErrorKind::config, ErrorKind::capacity})
        CHECK(exit_code(k) == 2);
    for (ErrorKind k : {ErrorKind::numeric, ErrorKind::training, ErrorKind::internal}) CHECK(exit_code(k) == 3);
}

TEST_CASE("data errors exit with 2 and explain themselves") {
    const auto dir = scratch_dir("cli_data");
    const auto cfg = write_config(dir, karate_config()).string();
    const Run missing = run({"eval", "--config", cfg, "--checkpoint", (dir / "untrained.json").string(), "--out",
                             (dir / "o").string()});
    CHECK(missing.code == kExitData);
    CHECK(missing.err.find("untrained.json") != std::string::npos);

    json bad = karate_config();
    bad["modle"] = json::object();
    const Run typo = run({"split", "--config", write_config(dir, bad).string()});
    CHECK(typo.code == kExitData);
    CHECK(typo.err.find("modle") != std::string::npos);

    const Run too_many = run({"split", "--config", write_config(dir, karate_config()).string(), "--override",
                              "split.per_class_train=30", "--out", (dir / "o").string()});
    CHECK(too_many.code == kExitData);
}

TEST_CASE("gen writes the karate fixture with provenance headers") {
    const auto dir = scratch_dir("cli_gen");
    const Run r = run({"gen", "--karate", "--out", dir.string()});
    REQUIRE(r.code == kExitOk);
    const Graph g = load_graph(dir / "edges.txt", dir / "features.csv", dir / "labels.csv");
    CHECK(g == karate_club());
    for (const char* f : {"edges.txt", "features.csv", "labels.csv"}) {
        const std::string text = read_file(dir / f);
        CHECK(text.rfind("# config ", 0) == 0);
        CHECK(text.find("\n# seed 0\n") != std::string::npos);
    }
}

TEST_CASE("single-step commands chain through files") {
    const auto dir = scratch_dir("cli_steps");
    const std::string cfg = write_config(dir, karate_config()).string();
    const std::string out = (dir / "o").string();
    REQUIRE(run({"split", "--config", cfg, "--seed", "2", "--out", out}).code == kExitOk);
    const Split split = load_split(dir / "o" / "split.json");
    CHECK(split == prepare_data(load_config(cfg, {}), 2).split);
    CHECK(json::parse(read_file(dir / "o" / "split.json"))["provenance"]["seed"] == "2");

    REQUIRE(run({"train", "--config", cfg, "--seed", "2", "--out", out}).code == kExitOk);
    const std::string ckpt = (dir / "o" / "checkpoint.json").string();
    const DiffusionModel model = load_checkpoint(ckpt);
    const ExperimentConfig config = load_config(cfg, {});
    CHECK(model.gamma == train_model(config, prepare_data(config, 2), 2).model.gamma);
    CHECK(read_file(dir / "o" / "history.csv").find("epoch,train_loss,val_metric,attacked") != std::string::npos);

    for (const char* cmd : {"eval", "attack", "spectrum", "diffuse"})
        CHECK(run({cmd, "--config", cfg, "--seed", "2", "--checkpoint", ckpt, "--out", out}).code == kExitOk);
    const json report = json::parse(read_file(dir / "o" / "attack_1_report.json"));
    for (const char* key : {"epsilon", "delta", "local_rule", "flips", "clean_acc", "robust_acc", "seed", "provenance"})
        CHECK(report.contains(key));
    const std::vector<Edge> flips = load_perturbation(karate_club(), dir / "o" / "attack_1_perturbation.json");
    CHECK(static_cast<std::int64_t>(flips.size()) == report["flips"].get<std::int64_t>());
    CHECK(static_cast<std::int64_t>(flips.size()) <= report["delta"].get<std::int64_t>());
    for (const char* f : {"eval.csv", "spectrum.csv", "diffusion.csv", "history.csv"})
        CHECK(read_file(dir / "o" / f).rfind("# config " + config_hash(config) + "\n# seed 2\n", 0) == 0);

    const Run wrong_model = run({"eval", "--config", cfg, "--override", "dataset.kind=csbm", "--override",
                                 "split.per_class_train=20", "--override", "split.per_class_val=20", "--checkpoint",
                                 ckpt, "--out", out});
    CHECK(wrong_model.code == kExitData);
}

TEST_CASE("repro is byte-identical across runs and worker counts") {
    const auto dir = scratch_dir("cli_repro");
    const std::string cfg = write_config(dir, karate_config()).string();
    REQUIRE(run({"repro", "--config", cfg, "--out", (dir / "a").string()}).code == kExitOk);
    REQUIRE(run({"repro", "--config", cfg, "--out", (dir / "b").string(), "--override", "workers=3"}).code == kExitOk);
    const std::string a = read_file(dir / "a" / "results.csv");
    CHECK(a == read_file(dir / "b" / "results.csv"));
    CHECK(read_file(dir / "a" / "per_seed.csv") == read_file(dir / "b" / "per_seed.csv"));
    CHECK(a.rfind("# config ", 0) == 0);
    CHECK(a.find("# seed 0,1,2\n") != std::string::npos);
    for (const char* seed : {"seed_0", "seed_1", "seed_2"}) {
        CHECK(std::filesystem::exists(dir / "a" / seed / "checkpoint.json"));
        CHECK(std::filesystem::exists(dir / "a" / seed / "spectrum.csv"));
        CHECK(read_file(dir / "a" / seed / "checkpoint.json") == read_file(dir / "b" / seed / "checkpoint.json"));
    }

    const Run single = run({"repro", "--config", cfg, "--seed", "1", "--out", (dir / "c").string()});
    REQUIRE(single.code == kExitOk);
    CHECK(single.out.find("standard error undefined") != std::string::npos);
    CHECK(read_file(dir / "c" / "results.csv").find("single_seed_sem_is_zero") != std::string::npos);
}
