// mablab: build, backdoor, train and scan computation-graph architectures.
//
// Exit codes: 0 success, 1 validation failure, 2 I/O failure,
//             3 at least one scanned graph is suspicious.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "mab/builders.hpp"
#include "mab/detector.hpp"
#include "mab/experiment.hpp"
#include "mab/io.hpp"
#include "mab/poison.hpp"
#include "mab/scanner.hpp"
#include "mab/serialize.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kIoFailure = 2;
constexpr int kSuspicious = 3;

std::string default_output_dir() {
    const char* env = std::getenv("MABLAB_OUT");
    return env ? env : ".";
}

struct TriggerFlags {
    std::string pattern = "checkerboard";
    int size = 3;
    std::string corner = "bottom-left";

    mab::TriggerSpec spec() const {
        mab::TriggerSpec t;
        auto p = mab::pattern_from_tag(pattern);
        if (!p) throw mab::Error("unknown trigger pattern '" + pattern + "'");
        t.pattern = *p;
        t.size = size;
        auto c = mab::corner_from_tag(corner);
        if (!c) throw mab::Error("unknown trigger corner '" + corner + "'");
        t.placement = *c;
        return t;
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--trigger-pattern", pattern, "checkerboard or white-box");
        cmd->add_option("--trigger-size", size, "trigger side length in pixels");
        cmd->add_option("--trigger-corner", corner, "corner placement, e.g. bottom-left");
    }
};

struct DatasetFlags {
    int synthetic_classes = 0;
    std::size_t synthetic_n = 256;
    std::uint64_t synthetic_seed = 0;
    std::size_t synthetic_size = 16;
    double synthetic_noise = 0.05;
    std::string idx_images, idx_labels;
    std::vector<std::string> cifar_files;

    mab::DatasetSpec spec() const {
        mab::DatasetSpec d;
        if (synthetic_classes > 0) {
            d.type = "synthetic";
            d.classes = synthetic_classes;
            d.n = synthetic_n;
            d.seed = synthetic_seed;
            d.image_size = synthetic_size;
            d.noise = synthetic_noise;
        } else if (!idx_images.empty()) {
            d.type = "idx";
            d.images_path = idx_images;
            d.labels_path = idx_labels;
        } else if (!cifar_files.empty()) {
            d.type = "cifar";
            d.files = cifar_files;
        } else {
            throw mab::Error("no dataset given (use --synthetic-classes, --idx-images or --cifar)");
        }
        return d;
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--synthetic-classes", synthetic_classes, "synthetic dataset class count");
        cmd->add_option("--synthetic-n", synthetic_n, "synthetic dataset size");
        cmd->add_option("--synthetic-seed", synthetic_seed, "synthetic dataset seed");
        cmd->add_option("--synthetic-size", synthetic_size, "synthetic image side length");
        cmd->add_option("--synthetic-noise", synthetic_noise, "per-pixel jitter half-width");
        cmd->add_option("--idx-images", idx_images, "IDX image file");
        cmd->add_option("--idx-labels", idx_labels, "IDX label file");
        cmd->add_option("--cifar", cifar_files, "CIFAR-10 binary batch file(s)");
    }
};

int run(int argc, char** argv) {
    CLI::App app{"architectural-backdoor laboratory"};
    app.require_subcommand(1);

    // build
    std::string build_arch = "alexnet-small";
    int build_classes = 10;
    std::size_t build_input_size = 32;
    std::string build_out;
    auto* build = app.add_subcommand("build", "construct a reference architecture");
    build->add_option("--arch", build_arch, "alexnet-small or vgg11");
    build->add_option("--classes", build_classes, "output class count");
    build->add_option("--input-size", build_input_size, "declared input side length");
    build->add_option("-o,--out", build_out, "output .archjson path")->required();

    // inject
    std::string inject_in, inject_out, inject_mode = "robust";
    mab::DetectorConfig det;
    auto* inject = app.add_subcommand("inject", "graft a trigger detector into a graph");
    inject->add_option("input", inject_in, "input .archjson graph")->required();
    inject->add_option("-o,--out", inject_out, "output .archjson path")->required();
    inject->add_option("--mode", inject_mode, "naive or robust");
    inject->add_option("--alpha", det.alpha, "detector exponent (positive integer)");
    inject->add_option("--beta", det.beta, "detector exponential scale");
    inject->add_option("--delta", det.delta, "detector offset");
    inject->add_option("--window", det.window, "detector pooling window");

    // poison
    DatasetFlags poison_data;
    TriggerFlags poison_trigger;
    double poison_fraction = 0.1;
    int poison_target = 0;
    bool poison_random_labels = false;
    std::uint64_t poison_seed = 1;
    std::string poison_out;
    auto* poison = app.add_subcommand("poison", "sample a poison set and write its manifest");
    poison_data.attach(poison);
    poison_trigger.attach(poison);
    poison->add_option("--fraction", poison_fraction, "fraction of examples to poison");
    poison->add_option("--target", poison_target, "fixed target class");
    poison->add_flag("--random-labels", poison_random_labels, "relabel uniformly at random");
    poison->add_option("--seed", poison_seed, "sampling seed");
    poison->add_option("-o,--out", poison_out, "output manifest path")->required();

    // scan
    std::vector<std::string> scan_files;
    std::string scan_json_dir;
    auto* scan_cmd = app.add_subcommand("scan", "static analysis for architectural backdoors");
    scan_cmd->add_option("files", scan_files, "graph files (.archjson)")->required();
    scan_cmd->add_option("--json-dir", scan_json_dir, "also write one JSON report per graph");

    // experiment
    std::string exp_config;
    std::string exp_outdir;
    int exp_jobs = -1;
    bool exp_resume = false;
    auto* exp = app.add_subcommand("experiment", "run a config-driven experiment");
    exp->add_option("config", exp_config, "experiment config JSON")->required();
    exp->add_option("--output-dir", exp_outdir, "override the config output directory");
    exp->add_option("--jobs", exp_jobs, "parallel seed workers");
    exp->add_flag("--resume", exp_resume, "reuse existing per-seed results");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidationFailure;
    }

    try {
        if (build->parsed()) {
            mab::ArchGraph g = mab::build_architecture(build_arch, build_classes, build_input_size);
            mab::save_graph_file(g, build_out);
            std::cout << "wrote " << build_out << " (" << g.nodes.size() << " nodes)\n";
            return kOk;
        }
        if (inject->parsed()) {
            auto mode = mab::detector_mode_from_tag(inject_mode);
            if (!mode) throw mab::Error("unknown detector mode '" + inject_mode + "'");
            det.mode = *mode;
            mab::ArchGraph g = mab::load_graph_file(inject_in);
            mab::ArchGraph evil = mab::inject_mab(g, det);
            mab::save_graph_file(evil, inject_out);
            std::cout << "wrote " << inject_out << " (" << evil.nodes.size() - g.nodes.size()
                      << " nodes added)\n";
            return kOk;
        }
        if (poison->parsed()) {
            mab::Dataset ds = mab::load_dataset(poison_data.spec());
            mab::PoisonSpec spec;
            spec.fraction = poison_fraction;
            spec.trigger = poison_trigger.spec();
            spec.policy = poison_random_labels ? mab::LabelPolicy::Random
                                               : mab::LabelPolicy::FixedTarget;
            spec.target_class = poison_target;
            mab::Dataset poisoned = mab::poison_dataset(ds, spec, poison_seed);
            auto indices = mab::poison_indices(ds.size(), spec.fraction, poison_seed);
            nlohmann::json m;
            m["version"] = "1";
            m["dataset_size"] = ds.size();
            m["fraction"] = spec.fraction;
            m["policy"] = poison_random_labels ? "random" : "fixed-target";
            if (!poison_random_labels) m["target"] = poison_target;
            m["trigger"] = nlohmann::json{{"pattern", mab::pattern_tag(spec.trigger.pattern)},
                                          {"size", spec.trigger.size},
                                          {"corner", mab::corner_tag(spec.trigger.placement)}};
            m["seed"] = poison_seed;
            nlohmann::json rows = nlohmann::json::array();
            for (std::size_t idx : indices)
                rows.push_back(nlohmann::json{{"index", idx},
                                              {"label", poisoned.labels[idx]},
                                              {"original_label", ds.labels[idx]}});
            m["poisoned"] = rows;
            mab::write_file_atomic(poison_out, m.dump(2) + "\n");
            std::cout << "wrote " << poison_out << " (" << indices.size() << " of " << ds.size()
                      << " examples poisoned)\n";
            return kOk;
        }
        if (scan_cmd->parsed()) {
            bool any_suspicious = false;
            for (const auto& file : scan_files) {
                mab::ScanReport r = mab::scan(file);
                std::cout << mab::report_text(r);
                if (!scan_json_dir.empty()) {
                    std::filesystem::path out =
                        std::filesystem::path(scan_json_dir) /
                        (std::filesystem::path(file).stem().string() + ".scan.json");
                    mab::write_file_atomic(out.string(), mab::report_json(r));
                }
                if (r.verdict() == "suspicious") any_suspicious = true;
            }
            return any_suspicious ? kSuspicious : kOk;
        }
        if (exp->parsed()) {
            mab::ExperimentConfig cfg = mab::parse_experiment_config(mab::read_file(exp_config));
            if (!exp_outdir.empty()) cfg.output_dir = exp_outdir;
            if (cfg.output_dir.empty())
                cfg.output_dir =
                    (std::filesystem::path(default_output_dir()) / cfg.name).string();
            if (exp_jobs >= 0) cfg.jobs = exp_jobs;
            mab::ExperimentResult res = mab::run_experiment(cfg, exp_resume);
            std::cout << mab::summary_table(res);
            std::cout << "results under " << cfg.output_dir << "\n";
            return kOk;
        }
    } catch (const mab::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationFailure;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
