#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mab/dataset.hpp"
#include "mab/detector.hpp"
#include "mab/graph.hpp"
#include "mab/poison.hpp"
#include "mab/stats.hpp"
#include "mab/train.hpp"
#include "mab/trigger.hpp"

namespace mab {

/// Where a dataset comes from. Synthetic sets regenerate deterministically;
/// file-backed sets are loaded once per experiment.
struct DatasetSpec {
    std::string type;  // "synthetic", "idx", "cifar"
    // synthetic
    int classes = 4;
    std::size_t n = 256;
    std::uint64_t seed = 0;
    std::size_t image_size = 16;
    double noise = 0.05;
    // idx
    std::string images_path, labels_path;
    // cifar
    std::vector<std::string> files;
};

Dataset load_dataset(const DatasetSpec& spec);

/// One experiment: a threat setting, an attack, datasets, per-phase training
/// configs and a list of seeds. Encoded as a single JSON document.
struct ExperimentConfig {
    std::string name = "experiment";
    int setting = 1;
    std::string attack = "none";  // none | badnets | mab-naive | mab-robust
    std::string graph_arch = "alexnet-small";
    int graph_classes = 0;  // 0: use the training set's class count
    std::size_t graph_input_size = 32;
    std::string graph_file;
    TriggerSpec trigger;
    DetectorConfig detector;
    PoisonSpec poison;
    DatasetSpec train_a, test_a, train_b, test_b;
    TrainConfig attacker;
    TrainConfig user;
    std::vector<std::uint64_t> seeds;
    bool baseline = true;  // also run a no-attack arm for comparison
    double selection_floor = 0.75;  // task-accuracy floor for the pick
    std::string output_dir = "experiment-out";
    int jobs = 0;  // 0: hardware concurrency
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_json(const ExperimentConfig& cfg);

struct SeedOutcome {
    std::uint64_t seed = 0;
    EvalMetrics metrics;
    RunHistory history;
};

struct ArmSummary {
    std::vector<SeedOutcome> per_seed;
    EvalMetrics median;
    EvalMetrics iqr;
    // the attacker's pick: highest ratio among runs above the accuracy
    // floor; absent when nothing qualifies
    std::optional<SeedOutcome> selected;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::map<std::string, ArmSummary> arms;  // arm name -> results
    std::optional<KsResult> ks_vs_none;      // triggered accuracy, attack vs none
};

/// Runs every (arm, seed) job, bounded by `jobs` parallel workers, and
/// writes per-seed JSON/CSV plus aggregate.json and summary.txt under the
/// output directory. With `resume`, seeds whose result files already exist
/// are reused instead of re-run.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool resume = false);

std::string aggregate_json(const ExperimentResult& r);
std::string summary_table(const ExperimentResult& r);

}  // namespace mab
