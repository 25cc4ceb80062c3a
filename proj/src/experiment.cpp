#include "mab/experiment.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mab/builders.hpp"
#include "mab/io.hpp"
#include "mab/rng.hpp"
#include "mab/serialize.hpp"

namespace mab {

using nlohmann::json;

Dataset load_dataset(const DatasetSpec& spec) {
    if (spec.type == "synthetic") {
        return make_synthetic(spec.classes, spec.n, spec.seed, spec.image_size, spec.noise);
    }
    if (spec.type == "idx") return load_idx(spec.images_path, spec.labels_path);
    if (spec.type == "cifar") return load_cifar_binary(spec.files);
    throw Error("unknown dataset type '" + spec.type + "'");
}

namespace {

DatasetSpec dataset_from_json(const json& j) {
    DatasetSpec s;
    s.type = j.value("type", "synthetic");
    s.classes = j.value("classes", 4);
    s.n = j.value("n", std::size_t{256});
    s.seed = j.value("seed", std::uint64_t{0});
    s.image_size = j.value("image_size", std::size_t{16});
    s.noise = j.value("noise", 0.05);
    s.images_path = j.value("images", "");
    s.labels_path = j.value("labels", "");
    if (j.contains("files")) s.files = j.at("files").get<std::vector<std::string>>();
    return s;
}

json dataset_to_json(const DatasetSpec& s) {
    json j;
    j["type"] = s.type;
    if (s.type == "synthetic") {
        j["classes"] = s.classes;
        j["n"] = s.n;
        j["seed"] = s.seed;
        j["image_size"] = s.image_size;
        j["noise"] = s.noise;
    } else if (s.type == "idx") {
        j["images"] = s.images_path;
        j["labels"] = s.labels_path;
    } else {
        j["files"] = s.files;
    }
    return j;
}

TriggerSpec trigger_from_json(const json& j) {
    TriggerSpec t;
    if (j.contains("pattern")) {
        auto p = pattern_from_tag(j.at("pattern").get<std::string>());
        if (!p) throw ParseError("unknown trigger pattern '" + j.at("pattern").get<std::string>() + "'");
        t.pattern = *p;
    }
    t.size = j.value("size", 3);
    t.white_at_corner = j.value("white_at_corner", true);
    if (j.contains("corner")) {
        auto c = corner_from_tag(j.at("corner").get<std::string>());
        if (!c) throw ParseError("unknown trigger corner '" + j.at("corner").get<std::string>() + "'");
        t.placement = *c;
    }
    return t;
}

json trigger_to_json(const TriggerSpec& t) {
    return json{{"pattern", pattern_tag(t.pattern)},
                {"size", t.size},
                {"corner", corner_tag(t.placement)},
                {"white_at_corner", t.white_at_corner}};
}

DetectorConfig detector_from_json(const json& j) {
    DetectorConfig d;
    d.alpha = j.value("alpha", 10);
    d.beta = j.value("beta", 1.0);
    d.delta = j.value("delta", 1.0);
    d.window = j.value("window", 3);
    if (j.contains("mode")) {
        auto m = detector_mode_from_tag(j.at("mode").get<std::string>());
        if (!m) throw ParseError("unknown detector mode '" + j.at("mode").get<std::string>() + "'");
        d.mode = *m;
    }
    return d;
}

PoisonSpec poison_from_json(const json& j, const TriggerSpec& trigger) {
    PoisonSpec p;
    p.fraction = j.value("fraction", 0.1);
    p.trigger = trigger;
    const std::string policy = j.value("policy", "fixed-target");
    if (policy == "fixed-target") p.policy = LabelPolicy::FixedTarget;
    else if (policy == "random") p.policy = LabelPolicy::Random;
    else throw ParseError("unknown poison label policy '" + policy + "'");
    p.target_class = j.value("target", 0);
    return p;
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    t.epochs = j.value("epochs", 5);
    t.batch_size = j.value("batch_size", 16);
    t.lr = j.value("lr", 0.02);
    t.momentum = j.value("momentum", 0.9);
    if (t.epochs < 0 || t.batch_size < 1 || t.lr < 0.0 || t.momentum < 0.0)
        throw ParseError("train config requires nonnegative hyperparameters");
    return t;
}

json train_to_json(const TrainConfig& t) {
    return json{{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr", t.lr},
                {"momentum", t.momentum}};
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed experiment config: ") + e.what());
    }
    ExperimentConfig c;
    if (j.value("version", "1") != "1") throw ParseError("unknown experiment config version");
    c.name = j.value("name", "experiment");
    c.setting = j.value("setting", 1);
    if (c.setting < 1 || c.setting > 3) throw ParseError("setting must be 1, 2 or 3");
    c.attack = j.value("attack", "none");
    if (c.attack != "none" && c.attack != "badnets" && c.attack != "mab-naive" &&
        c.attack != "mab-robust")
        throw ParseError("unknown attack '" + c.attack + "'");

    if (j.contains("graph")) {
        const json& gj = j.at("graph");
        c.graph_arch = gj.value("arch", "alexnet-small");
        c.graph_classes = gj.value("classes", 0);
        c.graph_input_size = gj.value("input_size", std::size_t{32});
        c.graph_file = gj.value("file", "");
    }
    if (j.contains("trigger")) c.trigger = trigger_from_json(j.at("trigger"));
    if (j.contains("detector")) c.detector = detector_from_json(j.at("detector"));
    if (c.attack == "mab-naive") c.detector.mode = DetectorMode::Naive;
    if (c.attack == "mab-robust") c.detector.mode = DetectorMode::Robust;
    c.poison = j.contains("poison") ? poison_from_json(j.at("poison"), c.trigger)
                                    : PoisonSpec{0.1, c.trigger, LabelPolicy::FixedTarget, 0};

    if (!j.contains("datasets") || !j.at("datasets").contains("train_a") ||
        !j.at("datasets").contains("test_a"))
        throw ParseError("experiment config needs datasets.train_a and datasets.test_a");
    const json& dj = j.at("datasets");
    c.train_a = dataset_from_json(dj.at("train_a"));
    c.test_a = dataset_from_json(dj.at("test_a"));
    if (c.setting >= 2) {
        if (!dj.contains("train_b") || !dj.contains("test_b"))
            throw ParseError("settings 2 and 3 need datasets.train_b and datasets.test_b");
        c.train_b = dataset_from_json(dj.at("train_b"));
        c.test_b = dataset_from_json(dj.at("test_b"));
    }

    if (j.contains("attacker")) c.attacker = train_from_json(j.at("attacker"));
    c.user = j.contains("user") ? train_from_json(j.at("user")) : c.attacker;

    if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty())
        throw ParseError("experiment config needs a non-empty seeds list");
    for (const auto& s : j.at("seeds")) c.seeds.push_back(s.get<std::uint64_t>());

    c.baseline = j.value("baseline", true);
    c.selection_floor = j.value("selection_floor", 0.75);
    c.output_dir = j.value("output_dir", std::string());
    c.jobs = j.value("jobs", 0);
    return c;
}

std::string experiment_config_json(const ExperimentConfig& c) {
    json j;
    j["version"] = "1";
    j["name"] = c.name;
    j["setting"] = c.setting;
    j["attack"] = c.attack;
    json gj;
    if (!c.graph_file.empty()) gj["file"] = c.graph_file;
    else {
        gj["arch"] = c.graph_arch;
        gj["classes"] = c.graph_classes;
        gj["input_size"] = c.graph_input_size;
    }
    j["graph"] = gj;
    j["trigger"] = trigger_to_json(c.trigger);
    j["detector"] = json{{"mode", detector_mode_tag(c.detector.mode)},
                         {"alpha", c.detector.alpha},
                         {"beta", c.detector.beta},
                         {"delta", c.detector.delta},
                         {"window", c.detector.window}};
    j["poison"] = json{{"fraction", c.poison.fraction},
                       {"policy", c.poison.policy == LabelPolicy::FixedTarget ? "fixed-target"
                                                                              : "random"},
                       {"target", c.poison.target_class}};
    json dj;
    dj["train_a"] = dataset_to_json(c.train_a);
    dj["test_a"] = dataset_to_json(c.test_a);
    if (c.setting >= 2) {
        dj["train_b"] = dataset_to_json(c.train_b);
        dj["test_b"] = dataset_to_json(c.test_b);
    }
    j["datasets"] = dj;
    j["attacker"] = train_to_json(c.attacker);
    j["user"] = train_to_json(c.user);
    j["seeds"] = c.seeds;
    j["baseline"] = c.baseline;
    j["selection_floor"] = c.selection_floor;
    j["output_dir"] = c.output_dir;
    j["jobs"] = c.jobs;
    return j.dump(2) + "\n";
}

namespace {

json metrics_json(const EvalMetrics& m) {
    json j;
    j["task_acc"] = m.task_accuracy;
    j["trig_acc"] = m.triggered_accuracy;
    if (std::isfinite(m.triggered_accuracy_ratio)) j["ratio"] = m.triggered_accuracy_ratio;
    else j["ratio"] = "inf";
    return j;
}

json outcome_json(const SeedOutcome& o) {
    json j;
    j["seed"] = o.seed;
    j["metrics"] = metrics_json(o.metrics);
    json hist = json::array();
    for (const auto& e : o.history.epochs)
        hist.push_back(json{{"task_acc", e.task_acc}, {"trig_acc", e.trig_acc}});
    j["history"] = hist;
    j["setting_tag"] = o.history.setting;
    return j;
}

SeedOutcome outcome_from_json(const json& j) {
    SeedOutcome o;
    o.seed = j.at("seed").get<std::uint64_t>();
    o.metrics.task_accuracy = j.at("metrics").at("task_acc").get<double>();
    o.metrics.triggered_accuracy = j.at("metrics").at("trig_acc").get<double>();
    const auto& r = j.at("metrics").at("ratio");
    o.metrics.triggered_accuracy_ratio =
        r.is_string() ? std::numeric_limits<double>::infinity() : r.get<double>();
    for (const auto& e : j.at("history"))
        o.history.epochs.push_back({e.at("task_acc").get<double>(), e.at("trig_acc").get<double>()});
    o.history.setting = j.value("setting_tag", "");
    return o;
}

/// Runs one (arm, seed) job of the configured setting.
SeedOutcome run_one(const ExperimentConfig& cfg, const std::string& arm, std::uint64_t seed,
                    const ArchGraph& host, const Dataset& train_a, const Dataset& test_a,
                    const Dataset& train_b, const Dataset& test_b) {
    const ArchGraph* graph = &host;
    ArchGraph injected;
    if (arm == "mab-naive" || arm == "mab-robust") {
        DetectorConfig det = cfg.detector;
        det.mode = arm == "mab-naive" ? DetectorMode::Naive : DetectorMode::Robust;
        injected = inject_mab(host, det);
        graph = &injected;
    }

    const std::uint64_t run_seed = derive_seed(seed, "arm:" + arm);
    TrainConfig attacker = cfg.attacker;
    attacker.seed = derive_seed(run_seed, "attacker");
    if (arm == "badnets") attacker.poison = cfg.poison;
    TrainConfig user = cfg.user;
    user.seed = derive_seed(run_seed, "user");

    SettingResult sr = run_setting(cfg.setting, *graph, train_a, test_a, train_b, test_b,
                                   attacker, user, cfg.trigger);
    SeedOutcome o;
    o.seed = seed;
    o.metrics = sr.metrics;
    o.history = std::move(sr.history);
    return o;
}

EvalMetrics fold_metrics(const std::vector<SeedOutcome>& outcomes,
                         double (*fold)(std::vector<double>)) {
    std::vector<double> task, trig, ratio;
    for (const auto& o : outcomes) {
        task.push_back(o.metrics.task_accuracy);
        trig.push_back(o.metrics.triggered_accuracy);
        if (std::isfinite(o.metrics.triggered_accuracy_ratio))
            ratio.push_back(o.metrics.triggered_accuracy_ratio);
    }
    EvalMetrics m;
    m.task_accuracy = fold(task);
    m.triggered_accuracy = fold(trig);
    m.triggered_accuracy_ratio = ratio.empty() ? std::numeric_limits<double>::infinity()
                                               : fold(ratio);
    return m;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& raw_cfg, bool resume) {
    namespace fs = std::filesystem;
    ExperimentConfig cfg = raw_cfg;
    if (cfg.output_dir.empty()) cfg.output_dir = "experiment-out";

    const Dataset train_a = load_dataset(cfg.train_a);
    const Dataset test_a = load_dataset(cfg.test_a);
    Dataset train_b, test_b;
    if (cfg.setting >= 2) {
        train_b = load_dataset(cfg.train_b);
        test_b = load_dataset(cfg.test_b);
    }

    ArchGraph host;
    if (!cfg.graph_file.empty()) {
        host = load_graph_file(cfg.graph_file);
    } else {
        const int classes = cfg.graph_classes > 0 ? cfg.graph_classes : train_a.num_classes;
        host = build_architecture(cfg.graph_arch, classes, cfg.graph_input_size);
    }

    std::vector<std::string> arms{cfg.attack};
    if (cfg.attack != "none" && cfg.baseline) arms.push_back("none");

    struct Job {
        std::string arm;
        std::uint64_t seed;
        fs::path json_path;
        SeedOutcome outcome;
        bool done = false;
    };
    std::vector<Job> jobs;
    for (const auto& arm : arms)
        for (std::uint64_t s : cfg.seeds) {
            Job j;
            j.arm = arm;
            j.seed = s;
            j.json_path = fs::path(cfg.output_dir) / arm / ("seed_" + std::to_string(s) + ".json");
            jobs.push_back(std::move(j));
        }

    // manifest for resumption: rewritten as jobs complete
    const fs::path manifest_path = fs::path(cfg.output_dir) / "manifest.json";
    auto write_manifest = [&]() {
        json m;
        m["name"] = cfg.name;
        json done = json::array(), pending = json::array();
        for (const auto& j : jobs) {
            json e{{"arm", j.arm}, {"seed", j.seed}};
            (j.done ? done : pending).push_back(e);
        }
        m["done"] = done;
        m["pending"] = pending;
        write_file_atomic(manifest_path.string(), m.dump(2) + "\n");
    };

    if (resume) {
        for (auto& j : jobs) {
            if (!fs::exists(j.json_path)) continue;
            try {
                j.outcome = outcome_from_json(json::parse(read_file(j.json_path.string())));
                j.done = true;
            } catch (const std::exception&) {
                j.done = false;  // unreadable partial result: re-run
            }
        }
    }

    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    write_manifest();

    unsigned workers = cfg.jobs > 0 ? static_cast<unsigned>(cfg.jobs)
                                    : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mu;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size() || failed.load()) return;
            Job& j = jobs[i];
            if (j.done) continue;
            try {
                j.outcome = run_one(cfg, j.arm, j.seed, host, train_a, test_a, train_b, test_b);
                write_file_atomic(j.json_path.string(), outcome_json(j.outcome).dump(2) + "\n");
                fs::path csv = j.json_path;
                csv.replace_extension(".csv");
                write_file_atomic(csv.string(), history_csv(j.outcome.history));
                j.done = true;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mu);
                failure = "arm " + j.arm + " seed " + std::to_string(j.seed) + ": " + e.what();
                failed.store(true);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    write_manifest();
    if (failed.load())
        throw Error("experiment failed (partial results kept, rerun with resume): " + failure);

    ExperimentResult res;
    res.config = cfg;
    for (const auto& arm : arms) {
        ArmSummary summary;
        for (const auto& j : jobs)
            if (j.arm == arm) summary.per_seed.push_back(j.outcome);
        summary.median = fold_metrics(summary.per_seed, median);
        summary.iqr = fold_metrics(summary.per_seed, iqr);
        std::vector<EvalMetrics> metrics;
        for (const auto& o : summary.per_seed) metrics.push_back(o.metrics);
        try {
            summary.selected = summary.per_seed[select_attacker_model(metrics, cfg.selection_floor)];
        } catch (const Error&) {
            summary.selected.reset();
        }
        res.arms[arm] = std::move(summary);
    }

    if (cfg.attack != "none" && res.arms.count("none")) {
        std::vector<double> a, b;
        for (const auto& o : res.arms.at(cfg.attack).per_seed)
            a.push_back(o.metrics.triggered_accuracy);
        for (const auto& o : res.arms.at("none").per_seed)
            b.push_back(o.metrics.triggered_accuracy);
        res.ks_vs_none = ks_two_sample(a, b);
    }

    write_file_atomic((fs::path(cfg.output_dir) / "aggregate.json").string(),
                      aggregate_json(res));
    write_file_atomic((fs::path(cfg.output_dir) / "summary.txt").string(), summary_table(res));
    return res;
}

std::string aggregate_json(const ExperimentResult& r) {
    json j;
    j["name"] = r.config.name;
    j["setting"] = r.config.setting;
    j["attack"] = r.config.attack;
    json arms;
    for (const auto& [arm, summary] : r.arms) {
        json a;
        json per_seed = json::array();
        for (const auto& o : summary.per_seed) {
            json e;
            e["seed"] = o.seed;
            e["metrics"] = metrics_json(o.metrics);
            per_seed.push_back(e);
        }
        a["per_seed"] = per_seed;
        a["median"] = metrics_json(summary.median);
        a["iqr"] = metrics_json(summary.iqr);
        if (summary.selected) {
            a["selected"] = json{{"seed", summary.selected->seed},
                                 {"metrics", metrics_json(summary.selected->metrics)}};
        }
        arms[arm] = a;
    }
    j["arms"] = arms;
    if (r.ks_vs_none) j["ks_vs_none"] = json{{"d", r.ks_vs_none->d}, {"p", r.ks_vs_none->p}};
    return j.dump(2) + "\n";
}

std::string summary_table(const ExperimentResult& r) {
    std::ostringstream os;
    os << "experiment: " << r.config.name << " (setting " << r.config.setting << ", attack "
       << r.config.attack << ", " << r.config.seeds.size() << " seeds)\n\n";
    os << "arm            task_acc   trig_acc   ratio\n";
    char line[128];
    for (const auto& [arm, summary] : r.arms) {
        const EvalMetrics& m = summary.median;
        if (std::isfinite(m.triggered_accuracy_ratio))
            std::snprintf(line, sizeof line, "%-14s %8.3f %10.3f %7.2fx\n", arm.c_str(),
                          m.task_accuracy, m.triggered_accuracy, m.triggered_accuracy_ratio);
        else
            std::snprintf(line, sizeof line, "%-14s %8.3f %10.3f     infx\n", arm.c_str(),
                          m.task_accuracy, m.triggered_accuracy);
        os << line;
    }
    if (r.ks_vs_none) {
        os << "\nKS(triggered acc, " << r.config.attack << " vs none): D=" << r.ks_vs_none->d
           << " p=" << r.ks_vs_none->p << "\n";
    }
    return os.str();
}

}  // namespace mab
