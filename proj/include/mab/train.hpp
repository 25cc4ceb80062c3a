#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mab/autodiff.hpp"
#include "mab/dataset.hpp"
#include "mab/graph.hpp"
#include "mab/poison.hpp"
#include "mab/trigger.hpp"

namespace mab {

/// Hyperparameters for one training phase. The optional poison spec is
/// applied to the training split before the first epoch; the trigger is the
/// one used for per-epoch triggered evaluation.
struct TrainConfig {
    int epochs = 5;
    int batch_size = 16;
    double lr = 0.02;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::string dataset_id;   // informational; resolution happens in the CLI
    std::string graph_source; // informational
    std::optional<PoisonSpec> poison;
};

/// Accuracy with and without the trigger, plus their ratio. The ratio is
/// +inf when the triggered accuracy is zero.
struct EvalMetrics {
    double task_accuracy = 0.0;
    double triggered_accuracy = 0.0;
    double triggered_accuracy_ratio = 0.0;
};

struct EpochStats {
    double task_acc = 0.0;
    double trig_acc = 0.0;
};

struct RunHistory {
    std::vector<EpochStats> epochs;
    std::string setting;  // "direct", "finetune" or "retrain"
};

/// Renders "epoch,task_acc,trig_acc" CSV.
std::string history_csv(const RunHistory& h);

int predict(const ArchGraph& g, const ParamStore& ps, const Tensor& image);

/// Task accuracy on the clean set, triggered accuracy with the trigger
/// stamped on every image (when given), and their ratio.
EvalMetrics evaluate(const ArchGraph& g, const ParamStore& ps, const Dataset& test,
                     const std::optional<TriggerSpec>& trigger);

struct TrainResult {
    ParamStore params;
    RunHistory history;
};

/// Minibatch SGD with momentum over seeded shuffles; per-epoch metrics are
/// taken on the held-out set with and without the trigger. Deterministic:
/// (graph, datasets, config) fixes the trained parameters bit for bit.
TrainResult train(const ArchGraph& g, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const std::optional<TriggerSpec>& eval_trigger,
                  ParamStore initial_params = {},
                  const std::string& setting_tag = "direct");

/// Continues SGD from `params`. When the class counts differ the dense head
/// is re-dimensioned: its weights are re-drawn from the user's seed while
/// every other tensor is carried over.
ArchGraph redimension_head(const ArchGraph& g, int num_classes);
ParamStore carry_params(const ArchGraph& old_graph, const ArchGraph& new_graph,
                        const ParamStore& params, std::uint64_t seed);

struct SettingResult {
    EvalMetrics metrics;
    RunHistory history;
    ParamStore final_params;
};

/// The three threat settings:
///   1 direct   — train once on (train_a, test_a), evaluate there.
///   2 finetune — train on A, continue SGD on B from the attacker weights
///                (head re-dimensioned when class counts differ).
///   3 retrain  — keep only the graph; fresh parameters from the user seed,
///                trained on B.
/// The returned history covers the user-visible phase of each setting.
SettingResult run_setting(int setting, const ArchGraph& graph, const Dataset& train_a,
                          const Dataset& test_a, const Dataset& train_b, const Dataset& test_b,
                          const TrainConfig& attacker_cfg, const TrainConfig& user_cfg,
                          const std::optional<TriggerSpec>& trigger);

/// Among runs whose task accuracy reaches `min_task_acc`, the index with the
/// highest triggered-accuracy ratio. Throws if no run qualifies.
std::size_t select_attacker_model(const std::vector<EvalMetrics>& runs, double min_task_acc);

/// Mean cross-entropy on the triggered validation set minus mean
/// cross-entropy on the clean one. Positive means the trigger hurts.
double backdoor_loss(const ArchGraph& g, const ParamStore& ps, const Dataset& val,
                     const TriggerSpec& trigger);

}  // namespace mab
