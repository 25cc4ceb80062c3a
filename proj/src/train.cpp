#include "mab/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mab/rng.hpp"

namespace mab {

std::string history_csv(const RunHistory& h) {
    std::ostringstream os;
    os << "epoch,task_acc,trig_acc\n";
    for (std::size_t i = 0; i < h.epochs.size(); ++i)
        os << (i + 1) << ',' << h.epochs[i].task_acc << ',' << h.epochs[i].trig_acc << '\n';
    return os.str();
}

int predict(const ArchGraph& g, const ParamStore& ps, const Tensor& image) {
    auto acts = forward_pass(g, ps, image);
    const Tensor& logits = acts.at(g.output_id);
    return static_cast<int>(std::max_element(logits.data.begin(), logits.data.end()) -
                            logits.data.begin());
}

namespace {

double accuracy(const ArchGraph& g, const ParamStore& ps, const Dataset& ds,
                const std::optional<TriggerSpec>& trigger) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Tensor& img = ds.images[i];
        const int pred = trigger ? predict(g, ps, apply_trigger(img, *trigger))
                                 : predict(g, ps, img);
        if (pred == ds.labels[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(ds.size());
}

double ratio_of(double task, double trig) {
    if (trig == 0.0) return std::numeric_limits<double>::infinity();
    return task / trig;
}

}  // namespace

EvalMetrics evaluate(const ArchGraph& g, const ParamStore& ps, const Dataset& test,
                     const std::optional<TriggerSpec>& trigger) {
    if (test.size() == 0) throw Error("evaluate: empty dataset");
    EvalMetrics m;
    m.task_accuracy = accuracy(g, ps, test, std::nullopt);
    m.triggered_accuracy = trigger ? accuracy(g, ps, test, trigger) : m.task_accuracy;
    m.triggered_accuracy_ratio = ratio_of(m.task_accuracy, m.triggered_accuracy);
    return m;
}

TrainResult train(const ArchGraph& g, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const std::optional<TriggerSpec>& eval_trigger,
                  ParamStore initial_params, const std::string& setting_tag) {
    if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.lr < 0 || cfg.momentum < 0)
        throw Error("train: bad hyperparameters");
    if (train_set.size() == 0) throw Error("train: empty training set");

    const Dataset* data = &train_set;
    Dataset poisoned;
    if (cfg.poison) {
        poisoned = poison_dataset(train_set, *cfg.poison, derive_seed(cfg.seed, "poison"));
        data = &poisoned;
    }

    TrainResult r;
    r.params = initial_params.params.empty() ? init_params(g, cfg.seed)
                                             : std::move(initial_params);
    r.history.setting = setting_tag;
    ParamStore velocity = zeros_like(r.params);

    std::vector<std::size_t> order(data->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            GradStore batch;
            double loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                auto acts = forward_pass(g, r.params, data->images[idx]);
                double l = 0.0;
                GradStore gs = backward_pass(g, r.params, acts, data->labels[idx], &l);
                loss += l;
                accumulate(batch, gs);
            }
            if (!std::isfinite(loss)) throw NumericError("training loss diverged");
            scale(batch, 1.0 / static_cast<double>(end - start));
            sgd_step(r.params, batch, cfg.lr, cfg.momentum, velocity);
        }

        EvalMetrics m = evaluate(g, r.params, test_set, eval_trigger);
        r.history.epochs.push_back({m.task_accuracy, m.triggered_accuracy});
    }
    return r;
}

namespace {

/// The dense node feeding the output (possibly through shape-preserving
/// nodes). Empty when the head is not a dense layer.
std::string head_dense_id(const ArchGraph& g) {
    std::string id = g.output_id;
    for (;;) {
        auto in = g.inputs_of(id);
        if (in.size() != 1 || in[0].empty()) return "";
        const Node& n = g.node(in[0]);
        if (n.op == Op::Dense) return n.id;
        if (n.op == Op::Relu || n.op == Op::Flatten || n.op == Op::Output) {
            id = in[0];
            continue;
        }
        return "";
    }
}

}  // namespace

ArchGraph redimension_head(const ArchGraph& g, int num_classes) {
    const std::string head = head_dense_id(g);
    if (head.empty()) throw Error("graph '" + g.name + "' has no dense head to re-dimension");
    ArchGraph out = g;
    out.nodes[head].attrs.out_features = num_classes;
    return out;
}

ParamStore carry_params(const ArchGraph& old_graph, const ArchGraph& new_graph,
                        const ParamStore& params, std::uint64_t seed) {
    ParamStore fresh = init_params(new_graph, seed);
    ParamStore out = fresh;
    for (auto& [id, ts] : out.params) {
        auto it = params.params.find(id);
        if (it == params.params.end()) continue;
        bool congruent = it->second.size() == ts.size();
        for (std::size_t k = 0; congruent && k < ts.size(); ++k)
            congruent = it->second[k].shape == ts[k].shape;
        if (congruent) ts = it->second;  // carried over; incongruent heads stay re-drawn
    }
    out.rng_seed = seed;
    (void)old_graph;
    return out;
}

SettingResult run_setting(int setting, const ArchGraph& graph, const Dataset& train_a,
                          const Dataset& test_a, const Dataset& train_b, const Dataset& test_b,
                          const TrainConfig& attacker_cfg, const TrainConfig& user_cfg,
                          const std::optional<TriggerSpec>& trigger) {
    SettingResult res;
    switch (setting) {
        case 1: {
            TrainResult tr = train(graph, train_a, test_a, attacker_cfg, trigger, {}, "direct");
            res.metrics = evaluate(graph, tr.params, test_a, trigger);
            res.history = std::move(tr.history);
            res.final_params = std::move(tr.params);
            break;
        }
        case 2: {
            TrainResult attacker =
                train(graph, train_a, test_a, attacker_cfg, trigger, {}, "direct");
            ArchGraph user_graph = graph;
            ParamStore start = std::move(attacker.params);
            if (train_b.num_classes != train_a.num_classes) {
                user_graph = redimension_head(graph, train_b.num_classes);
                start = carry_params(graph, user_graph, start, user_cfg.seed);
            }
            TrainConfig ft = user_cfg;
            ft.poison.reset();  // the user fine-tunes on clean data
            TrainResult user =
                train(user_graph, train_b, test_b, ft, trigger, std::move(start), "finetune");
            res.metrics = evaluate(user_graph, user.params, test_b, trigger);
            res.history = std::move(user.history);
            res.final_params = std::move(user.params);
            break;
        }
        case 3: {
            // weights are re-initialised from the user seed; the attacker
            // phase contributes nothing that survives
            TrainConfig rt = user_cfg;
            rt.poison.reset();
            TrainResult user = train(graph, train_b, test_b, rt, trigger, {}, "retrain");
            res.metrics = evaluate(graph, user.params, test_b, trigger);
            res.history = std::move(user.history);
            res.final_params = std::move(user.params);
            break;
        }
        default:
            throw Error("unknown threat setting " + std::to_string(setting));
    }
    return res;
}

std::size_t select_attacker_model(const std::vector<EvalMetrics>& runs, double min_task_acc) {
    if (runs.empty()) throw Error("select_attacker_model: no runs");
    std::size_t best = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].task_accuracy < min_task_acc) continue;
        if (best == runs.size() ||
            runs[i].triggered_accuracy_ratio > runs[best].triggered_accuracy_ratio)
            best = i;
    }
    if (best == runs.size())
        throw Error("select_attacker_model: no run reaches task accuracy " +
                    std::to_string(min_task_acc));
    return best;
}

double backdoor_loss(const ArchGraph& g, const ParamStore& ps, const Dataset& val,
                     const TriggerSpec& trigger) {
    if (val.size() == 0) throw Error("backdoor_loss: empty validation set");
    double clean = 0.0, trig = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
        auto acts = forward_pass(g, ps, val.images[i]);
        clean += softmax_cross_entropy(acts.at(g.output_id), val.labels[i]);
        auto tacts = forward_pass(g, ps, apply_trigger(val.images[i], trigger));
        trig += softmax_cross_entropy(tacts.at(g.output_id), val.labels[i]);
    }
    return (trig - clean) / static_cast<double>(val.size());
}

}  // namespace mab
